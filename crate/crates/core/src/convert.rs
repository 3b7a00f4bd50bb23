//! Converters from common raw layouts, and seeded synthetic datasets.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::*;
use crate::time::Timestamp;

/// Column mapping for a long table: one row per `(entity, time)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LongConfig {
    pub name: String,
    pub entity_column: String,
    pub time_column: String,
    pub value_columns: Vec<String>,
    /// `strftime` layout, `unix`, or absent for RFC 3339 and common layouts.
    #[serde(default)]
    pub time_format: Option<String>,
    #[serde(default)]
    pub coordinates: Option<CoordinateConfig>,
}

/// Optional side table of point locations, one row per entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateConfig {
    pub path: String,
    pub entity_column: String,
    pub x_column: String,
    pub y_column: String,
}

/// Matrix layout: first column is time, every other column one entity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideConfig {
    pub name: String,
    /// Attribute name for the matrix values.
    pub value_name: String,
    #[serde(default)]
    pub time_format: Option<String>,
    #[serde(default)]
    pub coordinates: Option<CoordinateConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMapping {
    pub entity: String,
    pub geo_id: GeoId,
}

/// What a conversion did, for re-runs and audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub source: String,
    pub name: String,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub entities: Vec<EntityMapping>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<serde_json::Value>,
}

struct LongRow {
    entity: String,
    time: Timestamp,
    values: Vec<Option<f64>>,
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(reader)
}

fn read_header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>> {
    let mut rec = csv::StringRecord::new();
    if !rdr.read_record(&mut rec)? {
        return Err(Error::EmptyTable);
    }
    Ok(rec.iter().enumerate().map(|(i, h)| if i == 0 { h.trim_start_matches('\u{feff}') } else { h }.trim().to_string()).collect())
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header.iter().position(|h| h == name).ok_or_else(|| Error::MissingMappingColumn(name.to_string()))
}

fn parse_cell(cell: &str, line: u64) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::MalformedRow { line, reason: format!("value {cell:?} is not a finite number") }),
    }
}

fn parse_time(cell: &str, format: Option<&str>, line: u64) -> Result<Timestamp> {
    Timestamp::parse_flexible(cell, format).ok_or_else(|| Error::UnparseableTimestamp { line, value: cell.to_string() })
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn read_coordinates(cfg: &CoordinateConfig) -> Result<HashMap<String, Vec<f64>>> {
    let mut rdr = csv_reader(crate::atomio::open(std::path::Path::new(&cfg.path))?);
    let header = read_header(&mut rdr)?;
    let (e, x, y) = (column(&header, &cfg.entity_column)?, column(&header, &cfg.x_column)?, column(&header, &cfg.y_column)?);
    let mut out = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let get = |i: usize| rec.get(i).ok_or(Error::RaggedRow { line, expected: header.len(), got: rec.len() });
        let (xv, yv) = (parse_cell(get(x)?, line)?, parse_cell(get(y)?, line)?);
        let point = match (xv, yv) {
            (Some(a), Some(b)) => vec![a, b],
            _ => return Err(Error::BadCoordinates { line, reason: "missing x or y".into() }),
        };
        out.insert(get(e)?.trim().to_string(), point);
    }
    Ok(out)
}

/// Shared back end of the long and wide converters.
fn build_graph_bundle(
    name: &str,
    source: &str,
    attributes: Vec<String>,
    rows: Vec<LongRow>,
    coordinates: Option<&HashMap<String, Vec<f64>>>,
) -> Result<(DatasetBundle, Manifest)> {
    // First appearance in time order; ties broken by entity key so the
    // assignment does not depend on input row order.
    let mut first: HashMap<&str, Timestamp> = HashMap::new();
    for r in &rows {
        first.entry(&r.entity).and_modify(|t| *t = (*t).min(r.time)).or_insert(r.time);
    }
    let mut order: Vec<(Timestamp, &str)> = first.into_iter().map(|(e, t)| (t, e)).collect();
    order.sort_unstable();
    let ids: HashMap<&str, GeoId> = order.iter().enumerate().map(|(i, &(_, e))| (e, i as GeoId)).collect();

    let mut keyed: Vec<(GeoId, Timestamp, usize)> = rows.iter().enumerate().map(|(i, r)| (ids[r.entity.as_str()], r.time, i)).collect();
    keyed.sort_unstable();
    let dupes: Vec<String> = keyed
        .windows(2)
        .filter(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1))
        .take(10)
        .map(|w| format!("({}, {})", rows[w[0].2].entity, w[0].1))
        .collect();
    if !dupes.is_empty() {
        return Err(Error::DuplicateObservation(dupes.join(", ")));
    }

    let mut dyna = DynaTable::with_capacity(attributes, rows.len());
    for (id, &(geo_id, time, i)) in keyed.iter().enumerate() {
        dyna.push_row(id as u64, time, EntityKey(geo_id), &rows[i].values)?;
    }
    let entities: Vec<EntityMapping> =
        order.iter().enumerate().map(|(i, &(_, e))| EntityMapping { entity: e.to_string(), geo_id: i as GeoId }).collect();
    let units = entities
        .iter()
        .map(|m| GeoUnit {
            geo_id: m.geo_id,
            coordinates: Coordinates::Point(coordinates.and_then(|c| c.get(&m.entity).cloned()).unwrap_or_default()),
            properties: vec![Scalar::Text(m.entity.clone())],
        })
        .collect();
    let geo = GeoTable { property_columns: vec!["entity_key".into()], units };
    let manifest = Manifest { source: source.into(), name: name.into(), rows: dyna.len(), entities, generator: None };
    let bundle = DatasetBundle::new(name, geo, None, Dynamics::Graph(dyna), None, None)?;
    Ok((bundle, manifest))
}

pub fn from_long_csv<R: Read>(reader: R, config: &LongConfig) -> Result<(DatasetBundle, Manifest)> {
    let mut rdr = csv_reader(reader);
    let header = read_header(&mut rdr)?;
    let e = column(&header, &config.entity_column)?;
    let t = column(&header, &config.time_column)?;
    let v: Vec<usize> = config.value_columns.iter().map(|c| column(&header, c)).collect::<Result<_>>()?;
    if v.is_empty() {
        return Err(Error::MissingMappingColumn("value_columns is empty".into()));
    }
    let fmt = config.time_format.as_deref();
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = line_of(&rec);
        if rec.len() != header.len() {
            return Err(Error::RaggedRow { line, expected: header.len(), got: rec.len() });
        }
        rows.push(LongRow {
            entity: rec[e].trim().to_string(),
            time: parse_time(&rec[t], fmt, line)?,
            values: v.iter().map(|&i| parse_cell(&rec[i], line)).collect::<Result<_>>()?,
        });
    }
    let coords = config.coordinates.as_ref().map(read_coordinates).transpose()?;
    build_graph_bundle(&config.name, "long", config.value_columns.clone(), rows, coords.as_ref())
}

pub fn from_wide_csv<R: Read>(reader: R, config: &WideConfig) -> Result<(DatasetBundle, Manifest)> {
    let mut rdr = csv_reader(reader);
    let header = read_header(&mut rdr)?;
    if header.len() < 2 {
        return Err(Error::MissingMappingColumn("wide layout needs a time column and at least one entity column".into()));
    }
    let fmt = config.time_format.as_deref();
    let mut rows = Vec::new();
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = line_of(&rec);
        if rec.len() != header.len() {
            return Err(Error::RaggedRow { line, expected: header.len(), got: rec.len() });
        }
        let time = parse_time(&rec[0], fmt, line)?;
        for (i, entity) in header.iter().enumerate().skip(1) {
            rows.push(LongRow { entity: entity.clone(), time, values: vec![parse_cell(&rec[i], line)?] });
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyTable);
    }
    let coords = config.coordinates.as_ref().map(read_coordinates).transpose()?;
    build_graph_bundle(&config.name, "wide", vec![config.value_name.clone()], rows, coords.as_ref())
}

// ---------------------------------------------------------------------------
// synthetic data

/// Name of the generator's random stream. See the README for the exact
/// draw order so other implementations can reproduce files.
pub const SYNTH_PRNG: &str = "synth-v1";

/// ChaCha8 seeded with `seed_from_u64`; uniforms from the top 53 bits,
/// normals by Box-Muller with one normal per pair of uniforms.
pub struct SynthRng(ChaCha8Rng);

impl SynthRng {
    pub fn new(seed: u64) -> Self {
        SynthRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }
}

fn default_start() -> Timestamp {
    Timestamp(1_330_560_000) // 2012-03-01T00:00:00Z
}

fn round4(v: f64) -> f64 {
    let r = (v * 1e4).round() / 1e4;
    if r == 0.0 { 0.0 } else { r }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGraphConfig {
    pub name: String,
    pub seed: u64,
    pub nodes: usize,
    pub days: usize,
    pub step_seconds: i64,
    /// Directed edge count; defaults to eight nearest neighbours per node.
    pub edges: Option<usize>,
    pub start: Timestamp,
    pub attribute: String,
    pub base_level: f64,
    pub daily_amplitude: f64,
    /// Multiplies the daily amplitude on Saturdays and Sundays.
    pub weekend_factor: f64,
    pub ar_coefficient: f64,
    pub weekday_noise: f64,
    pub weekend_noise: f64,
    /// Chance that each block of `missing_block` steps is dropped, per node.
    pub missing_rate: f64,
    pub missing_block: usize,
}

impl Default for SynthGraphConfig {
    fn default() -> Self {
        SynthGraphConfig {
            name: "synth_graph".into(),
            seed: 0,
            nodes: 20,
            days: 7,
            step_seconds: 300,
            edges: None,
            start: default_start(),
            attribute: "traffic_speed".into(),
            base_level: 60.0,
            daily_amplitude: 10.0,
            weekend_factor: 0.6,
            ar_coefficient: 0.8,
            weekday_noise: 2.0,
            weekend_noise: 2.0,
            missing_rate: 0.0,
            missing_block: 12,
        }
    }
}

fn check_synth(days: usize, step: i64, missing_rate: f64, missing_block: usize) -> Result<usize> {
    if days == 0 || step <= 0 || crate::time::SECONDS_PER_DAY % step != 0 {
        return Err(Error::InvalidArgument(format!("need days >= 1 and a step dividing a day, got {days} days / {step}s")));
    }
    if !(0.0..=1.0).contains(&missing_rate) || missing_block == 0 {
        return Err(Error::InvalidArgument("missing_rate must be in [0, 1] and missing_block positive".into()));
    }
    Ok(days * (crate::time::SECONDS_PER_DAY / step) as usize)
}

/// Per-series signal: daily sinusoid damped at weekends plus AR(1) noise
/// whose innovation scale depends on the day class.
struct SeriesParams {
    level: f64,
    phase: f64,
}

fn draw_series(
    rng: &mut SynthRng,
    p: &SeriesParams,
    ti: &TimeIndex,
    amplitude: f64,
    weekend_factor: f64,
    phi: f64,
    noise: (f64, f64),
    out: &mut Vec<f64>,
) {
    out.clear();
    let mut e = 0.0;
    for t in ti.timestamps() {
        let weekend = t.is_weekend();
        let sigma = if weekend { noise.1 } else { noise.0 };
        e = phi * e + sigma * rng.normal();
        let amp = if weekend { amplitude * weekend_factor } else { amplitude };
        out.push(p.level + amp * (std::f64::consts::TAU * (t.time_of_day() - p.phase)).sin() + e);
    }
}

/// Series 0 is always complete so that every lattice slot keeps at least
/// one row and the global time grid stays regular. Its draws are still
/// consumed to keep the stream layout uniform.
fn draw_dropped(rng: &mut SynthRng, series: usize, len: usize, rate: f64, block: usize) -> Vec<bool> {
    let mut dropped = vec![false; len];
    let rate = if series == 0 { -1.0 } else { rate };
    for b in 0..len.div_ceil(block) {
        if rng.uniform() < rate {
            dropped[b * block..((b + 1) * block).min(len)].fill(true);
        }
    }
    dropped
}

/// k-nearest-neighbour digraph: `edges / nodes` neighbours each, with the
/// remainder handed one apiece to the lowest node indices.
fn knn_edges(points: &[[f64; 2]], edges: usize) -> Result<Vec<(usize, usize, f64)>> {
    let n = points.len();
    if edges > n * n.saturating_sub(1) {
        return Err(Error::InvalidArgument(format!("{edges} edges exceed the {} possible on {n} nodes", n * n.saturating_sub(1))));
    }
    let (k, extra) = (edges / n, edges % n);
    let lat0 = points.iter().map(|p| p[1]).sum::<f64>() / n as f64;
    let kx = 111_320.0 * lat0.to_radians().cos();
    let dist = |a: &[f64; 2], b: &[f64; 2]| (((a[0] - b[0]) * kx).powi(2) + ((a[1] - b[1]) * 110_540.0).powi(2)).sqrt();
    let mut out = Vec::with_capacity(edges);
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        cand.clear();
        cand.extend((0..n).filter(|&j| j != i).map(|j| (dist(&points[i], &points[j]), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let take = k + usize::from(i < extra);
        out.extend(cand[..take].iter().map(|&(d, j)| (i, j, (d * 10.0).round() / 10.0)));
    }
    Ok(out)
}

/// Graph dataset with `.geo`, `.rel` and `.dyna`, rows ordered by node then time.
pub fn synth_graph(cfg: &SynthGraphConfig) -> Result<DatasetBundle> {
    let steps = check_synth(cfg.days, cfg.step_seconds, cfg.missing_rate, cfg.missing_block)?;
    if cfg.nodes == 0 {
        return Err(Error::InvalidArgument("nodes must be >= 1".into()));
    }
    let ti = TimeIndex { start: cfg.start, step_seconds: cfg.step_seconds, len: steps };
    let mut rng = SynthRng::new(cfg.seed);
    let points: Vec<[f64; 2]> =
        (0..cfg.nodes).map(|_| [round4(-118.5 + 0.5 * rng.uniform()), round4(33.9 + 0.4 * rng.uniform())]).collect();

    let geo = GeoTable {
        property_columns: Vec::new(),
        units: points
            .iter()
            .enumerate()
            .map(|(i, p)| GeoUnit { geo_id: i as GeoId, coordinates: Coordinates::Point(p.to_vec()), properties: Vec::new() })
            .collect(),
    };
    let edges = knn_edges(&points, cfg.edges.unwrap_or(cfg.nodes * 8.min(cfg.nodes - 1)))?;
    let rel = RelTable {
        property_columns: vec!["cost".into()],
        records: edges
            .iter()
            .enumerate()
            .map(|(i, &(o, d, w))| RelRecord { rel_id: i as u64, origin_id: o as GeoId, des_id: d as GeoId, properties: vec![Scalar::Number(w)] })
            .collect(),
    };

    let mut dyna = DynaTable::with_capacity(vec![cfg.attribute.clone()], cfg.nodes * steps);
    let mut series = Vec::with_capacity(steps);
    let mut id = 0u64;
    for node in 0..cfg.nodes {
        let p = SeriesParams { level: cfg.base_level + 10.0 * (rng.uniform() - 0.5), phase: rng.uniform() };
        draw_series(&mut rng, &p, &ti, cfg.daily_amplitude, cfg.weekend_factor, cfg.ar_coefficient, (cfg.weekday_noise, cfg.weekend_noise), &mut series);
        let dropped = draw_dropped(&mut rng, node, steps, cfg.missing_rate, cfg.missing_block);
        for (t, &v) in series.iter().enumerate() {
            if !dropped[t] {
                dyna.push_row(id, ti.at(t), EntityKey(node as GeoId), &[Some(round4(v))])?;
                id += 1;
            }
        }
    }
    DatasetBundle::new(&cfg.name, geo, Some(rel), Dynamics::Graph(dyna), None, None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthGridConfig {
    pub name: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub days: usize,
    pub step_seconds: i64,
    pub start: Timestamp,
    pub base_level: f64,
    pub daily_amplitude: f64,
    pub weekend_factor: f64,
    pub ar_coefficient: f64,
    pub weekday_noise: f64,
    pub weekend_noise: f64,
    pub missing_rate: f64,
    pub missing_block: usize,
}

impl Default for SynthGridConfig {
    fn default() -> Self {
        SynthGridConfig {
            name: "synth_grid".into(),
            seed: 0,
            rows: 10,
            cols: 20,
            days: 7,
            step_seconds: 1800,
            start: default_start(),
            base_level: 40.0,
            daily_amplitude: 25.0,
            weekend_factor: 0.6,
            ar_coefficient: 0.5,
            weekday_noise: 4.0,
            weekend_noise: 4.0,
            missing_rate: 0.0,
            missing_block: 6,
        }
    }
}

/// Grid dataset with `inflow`/`outflow` counts; `.geo` holds one polygon per
/// cell with `row_id`/`col_id` properties. Rows ordered by cell then time.
pub fn synth_grid(cfg: &SynthGridConfig) -> Result<DatasetBundle> {
    let steps = check_synth(cfg.days, cfg.step_seconds, cfg.missing_rate, cfg.missing_block)?;
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(Error::InvalidArgument("grid needs at least one row and column".into()));
    }
    let ti = TimeIndex { start: cfg.start, step_seconds: cfg.step_seconds, len: steps };
    let mut rng = SynthRng::new(cfg.seed);
    let cell = 0.01;
    let units = (0..cfg.rows * cfg.cols)
        .map(|k| {
            let (r, c) = (k / cfg.cols, k % cfg.cols);
            let (x0, y0) = (round4(-74.0 + c as f64 * cell), round4(40.9 - r as f64 * cell));
            let (x1, y1) = (round4(x0 + cell), round4(y0 - cell));
            GeoUnit {
                geo_id: k as GeoId,
                coordinates: Coordinates::Polygon(vec![vec![vec![x0, y0], vec![x1, y0], vec![x1, y1], vec![x0, y1], vec![x0, y0]]]),
                properties: vec![Scalar::Number(r as f64), Scalar::Number(c as f64)],
            }
        })
        .collect();
    let geo = GeoTable { property_columns: vec!["row_id".into(), "col_id".into()], units };

    let mut grid = GridTable::with_capacity(vec!["inflow".into(), "outflow".into()], cfg.rows * cfg.cols * steps);
    let (mut inflow, mut outflow) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
    let noise = (cfg.weekday_noise, cfg.weekend_noise);
    let mut id = 0u64;
    for k in 0..cfg.rows * cfg.cols {
        let level = cfg.base_level * (0.5 + rng.uniform());
        let phase = rng.uniform();
        let p_in = SeriesParams { level, phase };
        draw_series(&mut rng, &p_in, &ti, cfg.daily_amplitude, cfg.weekend_factor, cfg.ar_coefficient, noise, &mut inflow);
        let p_out = SeriesParams { level, phase: phase + 0.1 };
        draw_series(&mut rng, &p_out, &ti, cfg.daily_amplitude, cfg.weekend_factor, cfg.ar_coefficient, noise, &mut outflow);
        let dropped = draw_dropped(&mut rng, k, steps, cfg.missing_rate, cfg.missing_block);
        let key = GridCell { row: k / cfg.cols, col: k % cfg.cols };
        for t in (0..steps).filter(|&t| !dropped[t]) {
            let count = |v: f64| Some(v.round().max(0.0) + 0.0);
            grid.push_row(id, ti.at(t), key, &[count(inflow[t]), count(outflow[t])])?;
            id += 1;
        }
    }
    DatasetBundle::new(&cfg.name, geo, None, Dynamics::Grid(grid), None, Some((cfg.rows, cfg.cols)))
}

/// Synthetic dataset choice as read from a JSON config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SynthConfig {
    Graph(SynthGraphConfig),
    Grid(SynthGridConfig),
}

impl SynthConfig {
    pub fn generate(&self) -> Result<(DatasetBundle, Manifest)> {
        let bundle = match self {
            SynthConfig::Graph(c) => synth_graph(c)?,
            SynthConfig::Grid(c) => synth_grid(c)?,
        };
        let mut generator = BTreeMap::new();
        generator.insert("prng".to_string(), serde_json::json!(SYNTH_PRNG));
        generator.insert("config".to_string(), serde_json::to_value(self)?);
        let manifest = Manifest {
            source: "synth".into(),
            name: bundle.name.clone(),
            rows: bundle.dynamics.len(),
            entities: Vec::new(),
            generator: Some(serde_json::to_value(generator)?),
        };
        Ok((bundle, manifest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::validate_bundle;

    fn long_cfg() -> LongConfig {
        LongConfig {
            name: "toy".into(),
            entity_column: "sensor".into(),
            time_column: "ts".into(),
            value_columns: vec!["speed".into()],
            time_format: None,
            coordinates: None,
        }
    }

    const LONG: &str = "sensor,ts,speed\n\
        b,2012-03-01 00:00:00,1\n\
        a,2012-03-01 00:00:00,2\n\
        b,2012-03-01 00:05:00,3\n\
        a,2012-03-01 00:05:00,4\n\
        b,2012-03-01 00:10:00,5\n\
        a,2012-03-01 00:10:00,\n";

    #[test]
    fn long_counts_and_ids() {
        let (b, m) = from_long_csv(LONG.as_bytes(), &long_cfg()).unwrap();
        assert_eq!((b.geo.len(), b.dynamics.len()), (2, 6));
        // Both appear at 00:00; the key breaks the tie.
        assert_eq!(m.entities[0], EntityMapping { entity: "a".into(), geo_id: 0 });
        assert!(validate_bundle(&b).passed());
    }

    #[test]
    fn long_is_order_independent() {
        let mut lines: Vec<&str> = LONG.lines().collect();
        let header = lines.remove(0);
        lines.reverse();
        let shuffled = format!("{header}\n{}\n", lines.join("\n"));
        let a = from_long_csv(LONG.as_bytes(), &long_cfg()).unwrap();
        let b = from_long_csv(shuffled.as_bytes(), &long_cfg()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_errors() {
        let dup = format!("{LONG}a,2012-03-01 00:10:00,9\n");
        assert!(matches!(from_long_csv(dup.as_bytes(), &long_cfg()), Err(Error::DuplicateObservation(_))));
        let bad = "sensor,ts,speed\na,noon,1\n";
        assert!(matches!(from_long_csv(bad.as_bytes(), &long_cfg()), Err(Error::UnparseableTimestamp { line: 2, .. })));
        let missing = "sensor,when,speed\na,2012-03-01 00:00:00,1\n";
        assert!(matches!(from_long_csv(missing.as_bytes(), &long_cfg()), Err(Error::MissingMappingColumn(c)) if c == "ts"));
    }

    fn wide_cfg() -> WideConfig {
        WideConfig { name: "toy".into(), value_name: "speed".into(), time_format: None, coordinates: None }
    }

    #[test]
    fn wide_matches_long() {
        let wide = "time,b,a\n2012-03-01 00:00:00,1,2\n2012-03-01 00:05:00,3,4\n2012-03-01 00:10:00,5,\n";
        let (wb, _) = from_wide_csv(wide.as_bytes(), &wide_cfg()).unwrap();
        let (lb, _) = from_long_csv(LONG.as_bytes(), &long_cfg()).unwrap();
        assert_eq!(wb, lb);
        let Dynamics::Graph(t) = &wb.dynamics else { unreachable!() };
        assert_eq!(t.iter().filter(|r| r.values[0].is_none()).count(), 1);
    }

    #[test]
    fn wide_errors() {
        assert!(matches!(from_wide_csv("time,a,b\n".as_bytes(), &wide_cfg()), Err(Error::EmptyTable)));
        assert!(matches!(from_wide_csv("time,a,b\n2012-03-01 00:00:00,1\n".as_bytes(), &wide_cfg()), Err(Error::RaggedRow { line: 2, .. })));
    }

    #[test]
    fn coordinates_side_table() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loc.csv");
        std::fs::write(&path, "id,lon,lat\na,-118.2,34.1\nb,-118.3,34.0\n").unwrap();
        let mut cfg = long_cfg();
        cfg.coordinates = Some(CoordinateConfig { path: path.display().to_string(), entity_column: "id".into(), x_column: "lon".into(), y_column: "lat".into() });
        let (b, _) = from_long_csv(LONG.as_bytes(), &cfg).unwrap();
        assert_eq!(b.geo.units[0].coordinates, Coordinates::Point(vec![-118.2, 34.1]));
    }

    #[test]
    fn synth_rng_is_pinned() {
        let mut r = SynthRng::new(42);
        let first = r.uniform();
        assert!((0.0..1.0).contains(&first));
        assert_eq!(SynthRng::new(42).uniform(), first);
        assert_ne!(SynthRng::new(43).uniform(), first);
    }

    #[test]
    fn synth_graph_counts_and_validity() {
        let cfg = SynthGraphConfig { nodes: 12, days: 2, edges: Some(12 * 3 + 5), ..Default::default() };
        let b = synth_graph(&cfg).unwrap();
        assert_eq!(b.dynamics.len(), 12 * 2 * 288);
        assert_eq!(b.rel.as_ref().unwrap().len(), 41);
        let report = validate_bundle(&b);
        assert!(report.passed(), "{report}");
        assert!(report.checks.iter().all(|c| c.status == crate::validate::CheckStatus::Pass), "{report}");
    }

    #[test]
    fn synth_edge_split_for_metr_la_shape() {
        let mut rng = SynthRng::new(1);
        let pts: Vec<[f64; 2]> = (0..207).map(|_| [rng.uniform(), rng.uniform()]).collect();
        let e = knn_edges(&pts, 11_753).unwrap();
        assert_eq!(e.len(), 11_753);
        assert!(e.iter().all(|&(o, d, _)| o != d));
        let unique: std::collections::HashSet<_> = e.iter().map(|&(o, d, _)| (o, d)).collect();
        assert_eq!(unique.len(), 11_753);
        assert!(knn_edges(&pts[..3], 7).is_err());
    }

    #[test]
    fn synth_is_deterministic_and_seed_sensitive() {
        let cfg = SynthGraphConfig { nodes: 4, days: 1, missing_rate: 0.3, ..Default::default() };
        assert_eq!(synth_graph(&cfg).unwrap(), synth_graph(&cfg).unwrap());
        let other = SynthGraphConfig { seed: 9, ..cfg.clone() };
        assert_ne!(synth_graph(&cfg).unwrap(), synth_graph(&other).unwrap());
    }

    #[test]
    fn missing_blocks_remove_rows_and_warn() {
        let cfg = SynthGraphConfig { nodes: 5, days: 2, missing_rate: 0.5, ..Default::default() };
        let b = synth_graph(&cfg).unwrap();
        assert!(b.dynamics.len() < 5 * 576);
        assert!(validate_bundle(&b).passed());
    }

    #[test]
    fn synth_grid_shape() {
        let cfg = SynthGridConfig { days: 1, ..Default::default() };
        let b = synth_grid(&cfg).unwrap();
        assert_eq!(b.grid_dims, Some((10, 20)));
        assert_eq!(b.dynamics.len(), 200 * 48);
        assert!(validate_bundle(&b).passed());
    }

    #[test]
    fn synth_config_json() {
        let cfg: SynthConfig = serde_json::from_str(r#"{"kind":"grid","rows":2,"cols":3,"days":1}"#).unwrap();
        let (b, m) = cfg.generate().unwrap();
        assert_eq!(b.grid_dims, Some((2, 3)));
        assert_eq!(m.generator.unwrap()["prng"], SYNTH_PRNG);
    }
}
