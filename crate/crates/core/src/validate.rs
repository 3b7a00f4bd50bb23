//! Dataset-level integrity checks across the tables of a bundle.
//!
//! Failures are report entries, never errors. Lattice incompleteness is a
//! warning because the mask absorbs it downstream.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::assemble::build_time_index;
use crate::error::{Error, Result};
use crate::model::*;
use crate::time::Timestamp;

pub const MAX_DETAIL_ROWS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub summary: String,
    /// At most [`MAX_DETAIL_ROWS`] offending rows.
    pub details: Vec<String>,
    /// Total number of offending rows, including those not listed.
    pub detail_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spatial {
    Nodes(usize),
    Grid { rows: usize, cols: usize },
}

impl fmt::Display for Spatial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Spatial::Nodes(n) => write!(f, "{n}"),
            Spatial::Grid { rows, cols } => write!(f, "{rows}*{cols}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inferred {
    pub step_seconds: Option<i64>,
    pub time_steps: Option<usize>,
    pub spatial: Spatial,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub dataset: String,
    pub kind: DynamicsKind,
    pub checks: Vec<Check>,
    pub row_counts: BTreeMap<String, usize>,
    pub inferred: Inferred,
}

impl ValidationReport {
    /// True when no check failed; warnings do not count.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dataset {} ({})", self.dataset, self.kind)?;
        for (table, n) in &self.row_counts {
            writeln!(f, "  {table:<8} {n} rows")?;
        }
        let inf = &self.inferred;
        writeln!(
            f,
            "  inferred: step {}s, T {}, spatial {}, D {}",
            inf.step_seconds.map_or("?".into(), |s| s.to_string()),
            inf.time_steps.map_or("?".into(), |s| s.to_string()),
            inf.spatial,
            inf.channels
        )?;
        for c in &self.checks {
            let tag = match c.status {
                CheckStatus::Pass => "PASS",
                CheckStatus::Warn => "WARN",
                CheckStatus::Fail => "FAIL",
            };
            writeln!(f, "[{tag}] {:<22} {}", c.name, c.summary)?;
            for d in &c.details {
                writeln!(f, "         {d}")?;
            }
            if c.detail_count > c.details.len() {
                writeln!(f, "         ... {} more", c.detail_count - c.details.len())?;
            }
        }
        write!(f, "{}", if self.passed() { "overall: pass" } else { "overall: FAIL" })
    }
}

struct Findings {
    details: Vec<String>,
    count: usize,
}

impl Findings {
    fn new() -> Self {
        Findings { details: Vec::new(), count: 0 }
    }

    fn add(&mut self, detail: impl FnOnce() -> String) {
        if self.details.len() < MAX_DETAIL_ROWS {
            self.details.push(detail());
        }
        self.count += 1;
    }

    fn into_check(self, name: &str, ok_summary: &str, fail_summary: &str, fail_status: CheckStatus) -> Check {
        let (status, summary) = if self.count == 0 {
            (CheckStatus::Pass, ok_summary.to_string())
        } else {
            (fail_status, format!("{fail_summary} ({} rows)", self.count))
        };
        Check { name: name.into(), status, summary, details: self.details, detail_count: self.count }
    }
}

fn skipped(name: &str, why: &str) -> Check {
    Check { name: name.into(), status: CheckStatus::Pass, summary: why.into(), details: vec![], detail_count: 0 }
}

fn unique_ids(name: &str, ids: &[u64], column: &str) -> Check {
    let mut f = Findings::new();
    if !ids.windows(2).all(|w| w[0] < w[1]) {
        let mut sorted = ids.to_vec();
        sorted.sort_unstable();
        for w in sorted.windows(2) {
            if w[0] == w[1] {
                f.add(|| format!("{column} {} repeated", w[0]));
            }
        }
    }
    f.into_check(name, "unique", &format!("duplicate {column}"), CheckStatus::Fail)
}

/// Dense indices for keys, with a one-entry cache for runs of equal keys.
struct KeyIndexer<K> {
    map: HashMap<K, u32>,
    keys: Vec<K>,
    last: Option<(K, u32)>,
}

impl<K: Copy + Eq + Hash> KeyIndexer<K> {
    fn new() -> Self {
        KeyIndexer { map: HashMap::new(), keys: Vec::new(), last: None }
    }

    fn index(&mut self, key: K) -> u32 {
        if let Some((k, i)) = self.last {
            if k == key {
                return i;
            }
        }
        let next = self.keys.len() as u32;
        let i = *self.map.entry(key).or_insert(next);
        if i == next {
            self.keys.push(key);
        }
        self.last = Some((key, i));
        i
    }
}

struct KeyedChecks {
    time_order: Check,
    unique_cell: Check,
    distinct_cells: usize,
    /// Per dense key index, observed time positions (only when needed).
    key_count: usize,
}

fn keyed_checks<K: DynaKey>(table: &DynamicsTable<K>, label: impl Fn(&K) -> String) -> (KeyedChecks, KeyIndexer<K>) {
    let mut indexer = KeyIndexer::new();
    let mut dense = Vec::with_capacity(table.len());
    let mut last_time: Vec<Option<Timestamp>> = Vec::new();
    let mut order = Findings::new();
    for (row, (key, &time)) in table.keys().iter().zip(table.times()).enumerate() {
        let k = indexer.index(*key) as usize;
        if k == last_time.len() {
            last_time.push(None);
        }
        if let Some(prev) = last_time[k] {
            if time <= prev {
                order.add(|| format!("row {}: {} at {time} follows {prev}", row + 1, label(key)));
            }
        }
        last_time[k] = Some(time);
        dense.push(k as u32);
    }
    let mut unique = Findings::new();
    let mut distinct = table.len();
    if order.count > 0 {
        let mut pairs: Vec<(u32, Timestamp)> = dense.iter().copied().zip(table.times().iter().copied()).collect();
        pairs.sort_unstable();
        for w in pairs.windows(2) {
            if w[0] == w[1] {
                distinct -= 1;
                let key = indexer.keys[w[0].0 as usize];
                unique.add(|| format!("{} at {} appears more than once", label(&key), w[0].1));
            }
        }
    }
    let checks = KeyedChecks {
        time_order: order.into_check("time_order", "per-entity timestamps strictly increasing", "out-of-order timestamps", CheckStatus::Fail),
        unique_cell: unique.into_check("unique_cell", "one row per (entity, time)", "repeated (entity, time)", CheckStatus::Fail),
        distinct_cells: distinct,
        key_count: indexer.keys.len(),
    };
    (checks, indexer)
}

fn foreign_keys<K: DynaKey>(
    table: &DynamicsTable<K>,
    geo_ids: &HashSet<GeoId>,
    refs: impl Fn(&K) -> Vec<(&'static str, GeoId)>,
) -> Check {
    let mut f = Findings::new();
    let mut last: Option<K> = None;
    for (row, key) in table.keys().iter().enumerate() {
        if last == Some(*key) {
            continue;
        }
        let mut ok = true;
        for (col, id) in refs(key) {
            if !geo_ids.contains(&id) {
                ok = false;
                f.add(|| format!("row {}: {col} {id} not in .geo", row + 1));
            }
        }
        if ok {
            last = Some(*key);
        }
    }
    f.into_check("foreign_key.dynamics", "all entity references resolve to .geo", "foreign key violations", CheckStatus::Fail)
}

fn grid_bounds(cells: impl Iterator<Item = (usize, GridCell)>, dims: (usize, usize)) -> Check {
    let mut f = Findings::new();
    for (row, c) in cells {
        if c.row >= dims.0 || c.col >= dims.1 {
            f.add(|| format!("row {}: cell ({}, {}) outside {}x{}", row + 1, c.row, c.col, dims.0, dims.1));
        }
    }
    f.into_check("grid_bounds", "all grid indices within bounds", "grid index out of bounds", CheckStatus::Fail)
}

fn constant_step(times: &[Timestamp]) -> (Check, Vec<Timestamp>) {
    let mut distinct = HashSet::new();
    let mut last = None;
    for &t in times {
        if last != Some(t) {
            distinct.insert(t);
            last = Some(t);
        }
    }
    let mut sorted: Vec<Timestamp> = distinct.into_iter().collect();
    sorted.sort_unstable();
    let mut f = Findings::new();
    if sorted.len() >= 2 {
        let step = sorted[1].0 - sorted[0].0;
        for w in sorted.windows(2) {
            let d = w[1].0 - w[0].0;
            if d != step {
                f.add(|| format!("{} -> {} is {d}s, expected {step}s", w[0], w[1]));
            }
        }
    }
    let check = f.into_check("constant_step", "global time grid has a constant step", "irregular time steps", CheckStatus::Fail);
    (check, sorted)
}

/// Lists lattice gaps for at most `MAX_DETAIL_ROWS` entities.
fn lattice_gaps<K: DynaKey>(
    table: &DynamicsTable<K>,
    indexer: &KeyIndexer<K>,
    expected_keys: &[K],
    index: &TimeIndex,
    label: impl Fn(&K) -> String,
) -> Findings {
    let mut per_key: Vec<Vec<u32>> = vec![Vec::new(); indexer.keys.len()];
    for (key, &t) in table.keys().iter().zip(table.times()) {
        if let (Some(&k), Some(p)) = (indexer.map.get(key), index.position(t)) {
            per_key[k as usize].push(p as u32);
        }
    }
    let mut f = Findings::new();
    for key in expected_keys {
        let Some(&k) = indexer.map.get(key) else {
            f.add(|| format!("{}: no observations", label(key)));
            continue;
        };
        let positions = &mut per_key[k as usize];
        positions.sort_unstable();
        positions.dedup();
        let missing = index.len - positions.len();
        if missing > 0 {
            let first_gap = (0..index.len as u32).zip(positions.iter().copied().chain(std::iter::repeat(u32::MAX)))
                .find(|(want, got)| want != got)
                .map(|(want, _)| index.at(want as usize));
            f.add(|| match first_gap {
                Some(t) => format!("{}: {missing} missing slots, first at {t}", label(key)),
                None => format!("{}: {missing} missing slots", label(key)),
            });
        }
    }
    // Keys with data but absent from the expected set still count toward observations.
    f
}

struct DynamicsFindings {
    checks: Vec<Check>,
    index: Option<TimeIndex>,
}

fn check_dynamics<K: DynaKey>(
    table: &DynamicsTable<K>,
    expected_keys: Vec<K>,
    label: impl Fn(&K) -> String + Copy,
) -> DynamicsFindings {
    let (keyed, indexer) = keyed_checks(table, label);
    let (step_check, distinct_times) = constant_step(table.times());
    let index = build_time_index(distinct_times.iter().copied(), None).ok();
    let lattice = match &index {
        Some(ti) => {
            let expected = expected_keys.len().max(keyed.key_count) * ti.len;
            let missing = expected.saturating_sub(keyed.distinct_cells);
            if missing == 0 {
                skipped("lattice_completeness", &format!("full lattice of {expected} cells"))
            } else {
                let mut keys = expected_keys;
                if keys.is_empty() {
                    keys = indexer.keys.clone();
                }
                let f = lattice_gaps(table, &indexer, &keys, ti, label);
                Check {
                    name: "lattice_completeness".into(),
                    status: CheckStatus::Warn,
                    summary: format!("{missing} of {expected} lattice cells unobserved"),
                    details: f.details,
                    detail_count: f.count,
                }
            }
        }
        None => skipped("lattice_completeness", "no timestamps"),
    };
    DynamicsFindings { checks: vec![keyed.unique_cell, keyed.time_order, step_check, lattice], index }
}

/// Runs every check in a fixed order and never fails on data problems.
pub fn validate_bundle(bundle: &DatasetBundle) -> ValidationReport {
    let mut checks = Vec::new();
    let mut row_counts = BTreeMap::new();
    row_counts.insert("geo".to_string(), bundle.geo.len());
    if let Some(rel) = &bundle.rel {
        row_counts.insert("rel".to_string(), rel.len());
    }
    row_counts.insert(bundle.kind().file_kind().suffix().to_string(), bundle.dynamics.len());
    if let Some(ext) = &bundle.ext {
        row_counts.insert("ext".to_string(), ext.len());
    }

    // structure
    let mut f = Findings::new();
    if bundle.kind().is_grid() != bundle.grid_dims.is_some() {
        f.add(|| "grid_dims must be present exactly for grid dynamics".into());
    }
    if bundle.dynamics.attributes().is_empty() {
        f.add(|| "dynamics table has no attribute column".into());
    }
    if let Some(ext) = &bundle.ext {
        if ext.attributes().is_empty() {
            f.add(|| ".ext table has no attribute column".into());
        }
    }
    for u in &bundle.geo.units {
        if u.properties.len() != bundle.geo.property_columns.len() {
            f.add(|| format!("geo_id {}: property count differs from header", u.geo_id));
        }
        if !u.coordinates.all_finite() {
            f.add(|| format!("geo_id {}: non-finite coordinate", u.geo_id));
        }
    }
    checks.push(f.into_check("structure", "attribute columns consistent", "structural problems", CheckStatus::Fail));

    let geo_ids: Vec<u64> = bundle.geo.units.iter().map(|u| u.geo_id).collect();
    checks.push(unique_ids("primary_key.geo", &geo_ids, "geo_id"));
    checks.push(match &bundle.rel {
        Some(rel) => unique_ids("primary_key.rel", &rel.records.iter().map(|r| r.rel_id).collect::<Vec<_>>(), "rel_id"),
        None => skipped("primary_key.rel", "no .rel table"),
    });
    checks.push(unique_ids("primary_key.dynamics", bundle.dynamics.ids(), "dyna_id"));
    checks.push(match &bundle.ext {
        Some(ext) => unique_ids("primary_key.ext", ext.ids(), "ext_id"),
        None => skipped("primary_key.ext", "no .ext table"),
    });

    let geo_set: HashSet<GeoId> = geo_ids.iter().copied().collect();
    match &bundle.rel {
        Some(rel) => {
            let mut fk = Findings::new();
            let mut dup = Findings::new();
            let mut edges = HashSet::new();
            for r in &rel.records {
                for (col, id) in [("origin_id", r.origin_id), ("des_id", r.des_id)] {
                    if !geo_set.contains(&id) {
                        fk.add(|| format!("rel_id {}: {col} {id} not in .geo", r.rel_id));
                    }
                }
                if !edges.insert((r.origin_id, r.des_id)) {
                    dup.add(|| format!("rel_id {}: edge {} -> {} repeated", r.rel_id, r.origin_id, r.des_id));
                }
            }
            checks.push(fk.into_check("foreign_key.rel", "origin_id/des_id resolve to .geo", "foreign key violations", CheckStatus::Fail));
            checks.push(dup.into_check("unique_edge.rel", "one row per directed edge", "duplicate edges", CheckStatus::Fail));
        }
        None => {
            checks.push(skipped("foreign_key.rel", "no .rel table"));
            checks.push(skipped("unique_edge.rel", "no .rel table"));
        }
    }

    let node_order = bundle.geo.node_order();
    let dims = bundle.grid_dims.unwrap_or((0, 0));
    let grid_cells: Vec<GridCell> = (0..dims.0).flat_map(|row| (0..dims.1).map(move |col| GridCell { row, col })).collect();
    let (fk_check, bounds_check, dyn_findings) = match &bundle.dynamics {
        Dynamics::Graph(t) => (
            foreign_keys(t, &geo_set, |k| vec![("entity_id", k.0)]),
            skipped("grid_bounds", "not a grid dataset"),
            check_dynamics(t, node_order.iter().map(|&g| EntityKey(g)).collect(), |k| format!("entity {}", k.0)),
        ),
        Dynamics::GraphOd(t) => (
            foreign_keys(t, &geo_set, |k| vec![("origin_id", k.origin), ("des_id", k.des)]),
            skipped("grid_bounds", "not a grid dataset"),
            check_dynamics(
                t,
                node_order.iter().flat_map(|&o| node_order.iter().map(move |&d| OdPair { origin: o, des: d })).collect(),
                |k| format!("od {}->{}", k.origin, k.des),
            ),
        ),
        Dynamics::Grid(t) => (
            skipped("foreign_key.dynamics", "grid cells are keyed by row/col"),
            grid_bounds(t.keys().iter().copied().enumerate(), dims),
            check_dynamics(t, grid_cells.clone(), |k| format!("cell ({}, {})", k.row, k.col)),
        ),
        Dynamics::GridOd(t) => (
            skipped("foreign_key.dynamics", "grid cells are keyed by row/col"),
            grid_bounds(t.keys().iter().enumerate().flat_map(|(i, k)| [(i, k.origin), (i, k.des)]), dims),
            check_dynamics(
                t,
                grid_cells.iter().flat_map(|&o| grid_cells.iter().map(move |&d| GridOdPair { origin: o, des: d })).collect(),
                |k| format!("od ({}, {})->({}, {})", k.origin.row, k.origin.col, k.des.row, k.des.col),
            ),
        ),
    };
    checks.push(fk_check);
    checks.push(bounds_check);
    checks.extend(dyn_findings.checks);

    let spatial = match bundle.grid_dims {
        Some((rows, cols)) => Spatial::Grid { rows, cols },
        None => Spatial::Nodes(node_order.len()),
    };
    let inferred = Inferred {
        step_seconds: dyn_findings.index.map(|i| i.step_seconds).filter(|&s| s > 0),
        time_steps: dyn_findings.index.map(|i| i.len),
        spatial,
        channels: bundle.dynamics.attributes().len(),
    };
    ValidationReport { dataset: bundle.name.clone(), kind: bundle.kind(), checks, row_counts, inferred }
}

/// One row of a dataset summary in the style of published benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset: String,
    pub kind: DynamicsKind,
    /// `#GEO`: node count, or `I*J` for grids.
    pub geo: String,
    pub geo_units: usize,
    pub rel: usize,
    pub dyna: usize,
    pub step_seconds: i64,
    pub time_steps: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    /// `end - start`.
    pub duration_seconds: i64,
    pub channels: Vec<String>,
}

pub fn format_step(seconds: i64) -> String {
    match seconds {
        s if s > 0 && s % 60 == 0 => format!("{}min", s / 60),
        s => format!("{s}s"),
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| DATASET | #GEO | #REL | #DYNA | DURATION | #TS | TYPE |")?;
        writeln!(f, "|---|---|---|---|---|---|---|")?;
        write!(
            f,
            "| {} | {} | {} | {} | {} - {} | {} | {} |",
            self.dataset,
            self.geo,
            if self.rel == 0 { "-".to_string() } else { self.rel.to_string() },
            self.dyna,
            self.start,
            self.end,
            format_step(self.step_seconds),
            self.kind
        )
    }
}

pub fn dataset_stats(bundle: &DatasetBundle) -> Result<DatasetStats> {
    let times = bundle.dynamics.times();
    if times.is_empty() {
        return Err(Error::EmptyBundle);
    }
    let index = build_time_index(times.iter().copied(), None)?;
    let geo = match bundle.grid_dims {
        Some((i, j)) => format!("{i}*{j}"),
        None => bundle.geo.len().to_string(),
    };
    Ok(DatasetStats {
        dataset: bundle.name.clone(),
        kind: bundle.kind(),
        geo,
        geo_units: bundle.geo.len(),
        rel: bundle.rel.as_ref().map_or(0, |r| r.len()),
        dyna: bundle.dynamics.len(),
        step_seconds: index.step_seconds,
        time_steps: index.len,
        start: index.start,
        end: index.end(),
        duration_seconds: index.end().0 - index.start.0,
        channels: bundle.dynamics.attributes().to_vec(),
    })
}
