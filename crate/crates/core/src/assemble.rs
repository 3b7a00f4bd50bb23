//! Dense tensors from dynamics tables, and adjacency matrices from `.rel`.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::*;
use crate::time::Timestamp;

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Sorted distinct timestamps. Runs of equal values are skipped cheaply,
/// which matters for time-major tables.
pub fn distinct_times(times: impl IntoIterator<Item = Timestamp>) -> Vec<Timestamp> {
    let mut seen = HashSet::new();
    let mut last = None;
    for t in times {
        if last != Some(t) {
            seen.insert(t);
            last = Some(t);
        }
    }
    let mut out: Vec<Timestamp> = seen.into_iter().collect();
    out.sort_unstable();
    out
}

/// Regular lattice covering `min..=max` of `times`.
///
/// With `step = None` the step is the greatest common divisor of the gaps
/// between consecutive distinct timestamps, so missing slots are
/// materialized rather than rejected. An explicit step must place every
/// timestamp on the lattice.
pub fn build_time_index(times: impl IntoIterator<Item = Timestamp>, step: Option<i64>) -> Result<TimeIndex> {
    let distinct = distinct_times(times);
    let (first, last) = match (distinct.first(), distinct.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => return Err(Error::EmptyTable),
    };
    let step = match step {
        Some(s) if s <= 0 => return Err(Error::IrregularGrid(format!("step must be positive, got {s}"))),
        Some(s) => {
            if let Some(t) = distinct.iter().find(|t| (t.0 - first.0) % s != 0) {
                return Err(Error::IrregularGrid(format!("{t} is not on a {s}s lattice starting at {first}")));
            }
            s
        }
        None => distinct.windows(2).fold(0, |g, w| gcd(g, w[1].0 - w[0].0)),
    };
    let len = if step == 0 { 1 } else { ((last.0 - first.0) / step) as usize + 1 };
    Ok(TimeIndex { start: first, step_seconds: step, len })
}

/// Locates a key on the spatial axes, returning its linear offset.
trait Locator<K> {
    fn locate(&mut self, key: &K) -> Result<usize>;
}

struct NodeLocator {
    index: HashMap<GeoId, usize>,
}

impl NodeLocator {
    fn new(node_order: &[GeoId]) -> Self {
        NodeLocator { index: node_order.iter().enumerate().map(|(i, &g)| (g, i)).collect() }
    }

    fn node(&self, id: GeoId, what: &'static str) -> Result<usize> {
        self.index.get(&id).copied().ok_or_else(|| Error::ForeignKey { what, id: id.to_string() })
    }
}

impl Locator<EntityKey> for NodeLocator {
    fn locate(&mut self, key: &EntityKey) -> Result<usize> {
        self.node(key.0, "entity_id")
    }
}

impl Locator<OdPair> for NodeLocator {
    fn locate(&mut self, key: &OdPair) -> Result<usize> {
        Ok(self.node(key.origin, "origin_id")? * self.index.len() + self.node(key.des, "des_id")?)
    }
}

struct GridLocator {
    rows: usize,
    cols: usize,
}

impl GridLocator {
    /// Row-major: `row * J + col`.
    fn cell(&self, c: &GridCell) -> Result<usize> {
        if c.row >= self.rows || c.col >= self.cols {
            return Err(Error::GridOutOfBounds { row: c.row, col: c.col, rows: self.rows, cols: self.cols });
        }
        Ok(c.row * self.cols + c.col)
    }
}

impl Locator<GridCell> for GridLocator {
    fn locate(&mut self, key: &GridCell) -> Result<usize> {
        self.cell(key)
    }
}

impl Locator<GridOdPair> for GridLocator {
    fn locate(&mut self, key: &GridOdPair) -> Result<usize> {
        Ok(self.cell(&key.origin)? * self.rows * self.cols + self.cell(&key.des)?)
    }
}

fn assemble_with<K: DynaKey>(
    table: &DynamicsTable<K>,
    kind: DynamicsKind,
    spatial: &[usize],
    time_index: &TimeIndex,
    locator: &mut impl Locator<K>,
) -> Result<DynamicsTensor> {
    let s_size: usize = spatial.iter().product();
    let d = table.width();
    let slots = time_index.len * s_size;
    let mut data = vec![0.0; slots * d];
    let mut mask = vec![false; slots * d];
    let mut seen = vec![false; slots];
    let mut cached: Option<(K, usize)> = None;
    for row in table.iter() {
        let t = time_index
            .position(row.time)
            .ok_or_else(|| Error::IrregularGrid(format!("{} is outside the time index", row.time)))?;
        let s = match cached {
            Some((k, s)) if k == row.key => s,
            _ => {
                let s = locator.locate(&row.key)?;
                cached = Some((row.key, s));
                s
            }
        };
        let slot = t * s_size + s;
        if std::mem::replace(&mut seen[slot], true) {
            return Err(Error::DuplicateCell(format!("{:?} at {}", row.key, row.time)));
        }
        for (c, v) in row.values.iter().enumerate() {
            if let Some(v) = v {
                data[slot * d + c] = *v;
                mask[slot * d + c] = true;
            }
        }
    }
    DynamicsTensor::new(kind, spatial, table.attributes().to_vec(), *time_index, data, mask)
}

/// `(T, N, D)` tensor; the node axis follows `node_order`.
pub fn assemble_graph(table: &DynaTable, node_order: &[GeoId], time_index: &TimeIndex) -> Result<DynamicsTensor> {
    let mut loc = NodeLocator::new(node_order);
    assemble_with(table, DynamicsKind::Graph, &[node_order.len()], time_index, &mut loc)
}

/// `(T, I, J, D)` tensor.
pub fn assemble_grid(table: &GridTable, dims: (usize, usize), time_index: &TimeIndex) -> Result<DynamicsTensor> {
    let mut loc = GridLocator { rows: dims.0, cols: dims.1 };
    assemble_with(table, DynamicsKind::Grid, &[dims.0, dims.1], time_index, &mut loc)
}

/// `(T, N, N, D)` tensor indexed `[t][origin][des][d]`.
pub fn assemble_graph_od(table: &OdTable, node_order: &[GeoId], time_index: &TimeIndex) -> Result<DynamicsTensor> {
    let n = node_order.len();
    let mut loc = NodeLocator::new(node_order);
    assemble_with(table, DynamicsKind::GraphOd, &[n, n], time_index, &mut loc)
}

/// `(T, I, J, I, J, D)` tensor indexed `[t][origin row][origin col][des row][des col][d]`.
pub fn assemble_grid_od(table: &GridOdTable, dims: (usize, usize), time_index: &TimeIndex) -> Result<DynamicsTensor> {
    let mut loc = GridLocator { rows: dims.0, cols: dims.1 };
    assemble_with(table, DynamicsKind::GridOd, &[dims.0, dims.1, dims.0, dims.1], time_index, &mut loc)
}

/// Time index of a bundle's dynamics, with the step inferred.
pub fn bundle_time_index(bundle: &DatasetBundle) -> Result<TimeIndex> {
    build_time_index(bundle.dynamics.times().iter().copied(), None)
}

/// Assembles whichever dynamics table the bundle carries.
pub fn assemble_bundle(bundle: &DatasetBundle) -> Result<DynamicsTensor> {
    let ti = bundle_time_index(bundle)?;
    let nodes = bundle.geo.node_order();
    let dims = bundle.grid_dims.unwrap_or((0, 0));
    match &bundle.dynamics {
        Dynamics::Graph(t) => assemble_graph(t, &nodes, &ti),
        Dynamics::Grid(t) => assemble_grid(t, dims, &ti),
        Dynamics::GraphOd(t) => assemble_graph_od(t, &nodes, &ti),
        Dynamics::GridOd(t) => assemble_grid_od(t, dims, &ti),
    }
}

/// Inverse of [`assemble_graph`] for observed cells: one row per
/// `(time, node)` with at least one observed channel, time-major.
pub fn flatten_graph(tensor: &DynamicsTensor, node_order: &[GeoId]) -> Result<DynaTable> {
    if tensor.kind() != DynamicsKind::Graph || tensor.spatial_size() != node_order.len() {
        return Err(Error::ShapeMismatch("flatten_graph needs a graph tensor matching node_order".into()));
    }
    let d = tensor.channels();
    let mut table = DynaTable::new(tensor.channel_names().to_vec());
    let mut values = vec![None; d];
    let mut id = 0;
    for t in 0..tensor.time_len() {
        for (n, &geo_id) in node_order.iter().enumerate() {
            for (c, v) in values.iter_mut().enumerate() {
                *v = tensor.get(t, n, c);
            }
            if values.iter().any(Option::is_some) {
                table.push_row(id, tensor.time_index().at(t), EntityKey(geo_id), &values)?;
                id += 1;
            }
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdjacencyMode {
    /// Raw values of a numeric `.rel` column.
    Weighted,
    /// 1 where a row exists.
    Binary,
}

/// Directed adjacency from `.rel` rows, never symmetrized.
///
/// In weighted mode the weight column defaults to the first property
/// column. Duplicate edges are an error; self-loops are kept.
pub fn build_adjacency(
    rel: &RelTable,
    node_order: &[GeoId],
    weight_column: Option<&str>,
    mode: AdjacencyMode,
    allow_negative: bool,
) -> Result<AdjacencyMatrix> {
    let n = node_order.len();
    let weight_idx = match mode {
        AdjacencyMode::Binary => None,
        AdjacencyMode::Weighted => {
            let idx = match weight_column {
                Some(name) => rel.property_columns.iter().position(|c| c == name),
                None => (!rel.property_columns.is_empty()).then_some(0),
            };
            Some(idx.ok_or_else(|| Error::UnknownWeightColumn(weight_column.unwrap_or("<none>").to_string()))?)
        }
    };
    let loc = NodeLocator::new(node_order);
    let mut weights = vec![0.0; n * n];
    let mut edges = HashSet::with_capacity(rel.len());
    for r in &rel.records {
        let i = loc.node(r.origin_id, "origin_id")?;
        let j = loc.node(r.des_id, "des_id")?;
        if !edges.insert((i, j)) {
            return Err(Error::DuplicateEdge { origin: r.origin_id, des: r.des_id });
        }
        weights[i * n + j] = match weight_idx {
            None => 1.0,
            Some(k) => {
                let w = r.properties[k].as_number().ok_or(Error::NonNumericWeight { rel_id: r.rel_id })?;
                if w < 0.0 && !allow_negative {
                    return Err(Error::NegativeWeight { rel_id: r.rel_id, weight: w });
                }
                w
            }
        };
    }
    Ok(AdjacencyMatrix { node_order: node_order.to_vec(), weights })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN5: i64 = 300;

    fn ts(v: &[i64]) -> Vec<Timestamp> {
        v.iter().map(|&s| Timestamp(s)).collect()
    }

    #[test]
    fn time_index_regular() {
        let ti = build_time_index(ts(&[0, MIN5, 2 * MIN5]), None).unwrap();
        assert_eq!((ti.len, ti.step_seconds), (3, MIN5));
    }

    #[test]
    fn time_index_fills_gap_with_known_step() {
        let ti = build_time_index(ts(&[0, 2 * MIN5]), Some(MIN5)).unwrap();
        assert_eq!(ti.len, 3);
        assert_eq!(ti.at(1), Timestamp(MIN5));
        // gcd inference materializes the 00:05 slot when another gap reveals it.
        let ti = build_time_index(ts(&[0, 2 * MIN5, 3 * MIN5]), None).unwrap();
        assert_eq!((ti.len, ti.step_seconds), (4, MIN5));
    }

    #[test]
    fn time_index_metr_la_span() {
        let ti = build_time_index(ts(&[0, 119 * 86_400 - MIN5, MIN5]), None).unwrap();
        assert_eq!(ti.len, 34_272);
    }

    #[test]
    fn time_index_errors() {
        assert!(matches!(build_time_index(ts(&[]), None), Err(Error::EmptyTable)));
        assert!(matches!(build_time_index(ts(&[0, 450]), Some(MIN5)), Err(Error::IrregularGrid(_))));
    }

    fn dyna(rows: &[(u64, i64, Option<f64>)]) -> DynaTable {
        let mut t = DynaTable::new(vec!["speed".into()]);
        for (i, &(e, s, v)) in rows.iter().enumerate() {
            t.push_row(i as u64, Timestamp(s), EntityKey(e), &[v]).unwrap();
        }
        t
    }

    #[test]
    fn graph_all_present() {
        let t = dyna(&[(0, 0, Some(1.0)), (1, 0, Some(2.0)), (0, 60, Some(3.0)), (1, 60, Some(4.0)), (0, 120, Some(5.0)), (1, 120, Some(6.0))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        let x = assemble_graph(&t, &[0, 1], &ti).unwrap();
        assert_eq!(x.shape(), &[3, 2, 1]);
        assert!(x.mask().iter().all(|&m| m));
        assert_eq!(x.get(2, 1, 0), Some(6.0));
    }

    #[test]
    fn graph_absent_row_is_one_masked_zero() {
        let t = dyna(&[(0, 0, Some(1.0)), (1, 0, Some(2.0)), (0, 60, Some(3.0))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        let x = assemble_graph(&t, &[0, 1], &ti).unwrap();
        assert_eq!(x.mask().iter().filter(|m| !**m).count(), 1);
        assert_eq!(x.data()[x.index(1, 1, 0)], 0.0);
    }

    #[test]
    fn graph_missing_cell_and_duplicates() {
        let t = dyna(&[(0, 0, None), (0, 60, Some(1.0))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        let x = assemble_graph(&t, &[0], &ti).unwrap();
        assert_eq!(x.observed_count(), 1);

        let t = dyna(&[(0, 0, None), (0, 0, Some(1.0))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        assert!(matches!(assemble_graph(&t, &[0], &ti), Err(Error::DuplicateCell(_))));
        assert!(matches!(assemble_graph(&dyna(&[(5, 0, Some(1.0))]), &[0], &ti), Err(Error::ForeignKey { .. })));
    }

    #[test]
    fn sparse_geo_ids_sorted() {
        let t = dyna(&[(40, 0, Some(4.0)), (7, 0, Some(7.0))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        let x = assemble_graph(&t, &[7, 40], &ti).unwrap();
        assert_eq!(x.data(), &[7.0, 4.0]);
    }

    #[test]
    fn grid_shapes_and_indexing() {
        let mut t = GridTable::new(vec!["inflow".into(), "outflow".into()]);
        t.push_row(0, Timestamp(0), GridCell { row: 2, col: 1 }, &[Some(7.0), Some(1.0)]).unwrap();
        let ti = TimeIndex { start: Timestamp(0), step_seconds: 1800, len: 1 };
        let x = assemble_grid(&t, (10, 20), &ti).unwrap();
        assert_eq!(x.shape(), &[1, 10, 20, 2]);
        assert_eq!(x.get(0, 2 * 20 + 1, 0), Some(7.0));

        let empty = GridTable::new(vec!["inflow".into()]);
        let x = assemble_grid(&empty, (2, 3), &ti).unwrap();
        assert_eq!(x.observed_count(), 0);
        assert!(matches!(assemble_grid(&t, (2, 2), &ti), Err(Error::GridOutOfBounds { .. })));
    }

    #[test]
    fn od_single_row() {
        let mut t = OdTable::new(vec!["flow".into()]);
        t.push_row(0, Timestamp(0), OdPair { origin: 0, des: 1 }, &[Some(5.0)]).unwrap();
        let ti = TimeIndex { start: Timestamp(0), step_seconds: 60, len: 1 };
        let x = assemble_graph_od(&t, &[0, 1], &ti).unwrap();
        assert_eq!(x.shape(), &[1, 2, 2, 1]);
        assert_eq!(x.get(0, 1, 0), Some(5.0));
        assert_eq!(x.observed_count(), 1);
    }

    #[test]
    fn od_dense_count() {
        let mut t = OdTable::new(vec!["flow".into()]);
        let mut id = 0;
        for s in [0, 60] {
            for o in 0..2 {
                for d in 0..2 {
                    t.push_row(id, Timestamp(s), OdPair { origin: o, des: d }, &[Some(1.0)]).unwrap();
                    id += 1;
                }
            }
        }
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        assert_eq!(assemble_graph_od(&t, &[0, 1], &ti).unwrap().observed_count(), 8);
    }

    #[test]
    fn grid_od_layout() {
        let mut t = GridOdTable::new(vec!["flow".into()]);
        let key = GridOdPair { origin: GridCell { row: 1, col: 0 }, des: GridCell { row: 0, col: 2 } };
        t.push_row(0, Timestamp(0), key, &[Some(9.0)]).unwrap();
        let ti = TimeIndex { start: Timestamp(0), step_seconds: 60, len: 1 };
        let x = assemble_grid_od(&t, (2, 3), &ti).unwrap();
        assert_eq!(x.shape(), &[1, 2, 3, 2, 3, 1]);
        assert_eq!(x.get(0, (1 * 3) * 6 + 2, 0), Some(9.0));
    }

    fn rel(rows: &[(u64, u64, f64)]) -> RelTable {
        RelTable {
            property_columns: vec!["cost".into()],
            records: rows
                .iter()
                .enumerate()
                .map(|(i, &(o, d, w))| RelRecord { rel_id: i as u64, origin_id: o, des_id: d, properties: vec![Scalar::Number(w)] })
                .collect(),
        }
    }

    #[test]
    fn adjacency_weighted_and_binary() {
        let r = rel(&[(0, 1, 1500.0)]);
        let a = build_adjacency(&r, &[0, 1], Some("cost"), AdjacencyMode::Weighted, false).unwrap();
        assert_eq!(a.weights, vec![0.0, 1500.0, 0.0, 0.0]);
        let a = build_adjacency(&r, &[0, 1], None, AdjacencyMode::Binary, false).unwrap();
        assert_eq!(a.weights, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn adjacency_errors() {
        let r = rel(&[(0, 1, -2.0)]);
        assert!(matches!(build_adjacency(&r, &[0, 1], Some("nope"), AdjacencyMode::Weighted, false), Err(Error::UnknownWeightColumn(_))));
        assert!(matches!(build_adjacency(&r, &[0, 1], Some("cost"), AdjacencyMode::Weighted, false), Err(Error::NegativeWeight { .. })));
        assert_eq!(build_adjacency(&r, &[0, 1], Some("cost"), AdjacencyMode::Weighted, true).unwrap().get(0, 1), -2.0);
        let dup = rel(&[(0, 1, 1.0), (0, 1, 2.0)]);
        assert!(matches!(build_adjacency(&dup, &[0, 1], None, AdjacencyMode::Binary, false), Err(Error::DuplicateEdge { .. })));
    }

    #[test]
    fn adjacency_keeps_self_loops_unsymmetrized() {
        let r = rel(&[(1, 1, 3.0), (1, 0, 2.0)]);
        let a = build_adjacency(&r, &[0, 1], None, AdjacencyMode::Weighted, false).unwrap();
        assert_eq!(a.weights, vec![0.0, 0.0, 2.0, 3.0]);
    }

    #[test]
    fn flatten_inverts_assembly() {
        let t = dyna(&[(3, 0, Some(1.5)), (9, 0, Some(2.5)), (3, 60, Some(3.5)), (9, 60, Some(4.5))]);
        let ti = build_time_index(t.times().iter().copied(), None).unwrap();
        let x = assemble_graph(&t, &[3, 9], &ti).unwrap();
        let back = flatten_graph(&x, &[3, 9]).unwrap();
        let strip = |t: &DynaTable| {
            let mut v: Vec<_> = t.iter().map(|r| (r.time, r.key, r.values.to_vec())).collect();
            v.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
            v
        };
        assert_eq!(strip(&back), strip(&t));
    }
}
