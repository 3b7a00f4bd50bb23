//! Generated bundles that should pass validation, with the expected tensor.

#![allow(dead_code)]

use atomst::{
    Coordinates, DatasetBundle, DynaKey, DynamicsKind, DynamicsTable, Dynamics, EntityKey, GeoTable, GeoUnit, GridCell,
    GridOdPair, OdPair, RelRecord, RelTable, Scalar, Timestamp,
};
use proptest::prelude::*;
use proptest::sample::subsequence;

#[derive(Debug, Clone)]
pub struct Generated {
    pub bundle: DatasetBundle,
    /// Sorted geo ids (graph kinds) in tensor order.
    pub nodes: Vec<u64>,
    pub time_len: usize,
    pub spatial: usize,
    pub channels: usize,
    /// Expected tensor contents, `[t][s][d]`; `None` is unobserved.
    pub cells: Vec<Option<f64>>,
}

impl Generated {
    pub fn observed(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

#[derive(Debug, Clone)]
struct Plan {
    kind: DynamicsKind,
    nodes: Vec<u64>,
    dims: (usize, usize),
    start: i64,
    step: i64,
    time_len: usize,
    channels: usize,
    values: Vec<f64>,
    /// Per `(t, s)`: row present; per `(t, s, d)`: value present.
    row_present: Vec<bool>,
    value_present: Vec<bool>,
    time_major: bool,
    edges: Vec<(usize, usize, f64)>,
}

fn kinds() -> impl Strategy<Value = DynamicsKind> {
    prop_oneof![
        Just(DynamicsKind::Graph),
        Just(DynamicsKind::Grid),
        Just(DynamicsKind::GraphOd),
        Just(DynamicsKind::GridOd)
    ]
}

pub fn bundle_of(kind: impl Strategy<Value = DynamicsKind>) -> impl Strategy<Value = Generated> {
    (
        kind,
        subsequence((0u64..40).collect::<Vec<_>>(), 1..6),
        (1usize..4, 1usize..4),
        0i64..2_000_000_000,
        prop_oneof![Just(60i64), Just(300), Just(3600), Just(86_400)],
        2usize..16,
        1usize..3,
        any::<bool>(),
    )
        .prop_flat_map(|(kind, nodes, dims, start, step, time_len, channels, time_major)| {
            let spatial = spatial_size(kind, nodes.len(), dims);
            let cells = time_len * spatial;
            let n = nodes.len();
            (
                proptest::collection::vec(-1e4f64..1e4, cells * channels),
                proptest::collection::vec(prop::bool::weighted(0.85), cells),
                proptest::collection::vec(prop::bool::weighted(0.9), cells * channels),
                proptest::collection::vec((0..n, 0..n, 0.0f64..5000.0), 0..n * n + 1),
            )
                .prop_map(move |(values, row_present, value_present, edges)| Plan {
                    kind,
                    nodes: nodes.clone(),
                    dims,
                    start: start - start.rem_euclid(step),
                    step,
                    time_len,
                    channels,
                    values,
                    row_present,
                    value_present,
                    time_major,
                    edges,
                })
        })
        .prop_map(build)
}

pub fn any_bundle() -> impl Strategy<Value = Generated> {
    bundle_of(kinds())
}

fn spatial_size(kind: DynamicsKind, n: usize, (r, c): (usize, usize)) -> usize {
    match kind {
        DynamicsKind::Graph => n,
        DynamicsKind::GraphOd => n * n,
        DynamicsKind::Grid => r * c,
        DynamicsKind::GridOd => (r * c) * (r * c),
    }
}

fn build(mut p: Plan) -> Generated {
    let spatial = spatial_size(p.kind, p.nodes.len(), p.dims);
    let d = p.channels;
    // Spatial slot 0 is fully observed so every timestamp appears and the
    // step stays inferable.
    for t in 0..p.time_len {
        p.row_present[t * spatial] = true;
        for c in 0..d {
            p.value_present[(t * spatial) * d + c] = true;
        }
    }
    let mut cells = vec![None; p.time_len * spatial * d];
    for cell in 0..p.time_len * spatial {
        if p.row_present[cell] {
            for c in 0..d {
                if p.value_present[cell * d + c] {
                    cells[cell * d + c] = Some(p.values[cell * d + c]);
                }
            }
        }
    }

    let attrs: Vec<String> = (0..d).map(|c| format!("v{c}")).collect();
    let order: Vec<(usize, usize)> = if p.time_major {
        (0..p.time_len).flat_map(|t| (0..spatial).map(move |s| (t, s))).collect()
    } else {
        (0..spatial).flat_map(|s| (0..p.time_len).map(move |t| (t, s))).collect()
    };
    let (rows, cols) = p.dims;
    let grid_cell = |i: usize| GridCell { row: i / cols, col: i % cols };
    let n = p.nodes.len();
    let nodes = p.nodes.clone();
    let rows_of = |s_key: &mut dyn FnMut(u64, Timestamp, usize, &[Option<f64>])| {
        let mut id = 0;
        for &(t, s) in &order {
            let cell = t * spatial + s;
            if p.row_present[cell] {
                s_key(id, Timestamp(p.start + p.step * t as i64), s, &cells[cell * d..cell * d + d]);
                id += 1;
            }
        }
    };
    fn collect<K: DynaKey>(
        attrs: &[String],
        rows_of: &dyn Fn(&mut dyn FnMut(u64, Timestamp, usize, &[Option<f64>])),
        key: impl Fn(usize) -> K,
    ) -> DynamicsTable<K> {
        let mut table = DynamicsTable::new(attrs.to_vec());
        rows_of(&mut |id, time, s, vals| table.push_row(id, time, key(s), vals).unwrap());
        table
    }
    let g = rows * cols;
    let dynamics = match p.kind {
        DynamicsKind::Graph => Dynamics::Graph(collect(&attrs, &rows_of, |s| EntityKey(nodes[s]))),
        DynamicsKind::GraphOd => {
            Dynamics::GraphOd(collect(&attrs, &rows_of, |s| OdPair { origin: nodes[s / n], des: nodes[s % n] }))
        }
        DynamicsKind::Grid => Dynamics::Grid(collect(&attrs, &rows_of, grid_cell)),
        DynamicsKind::GridOd => {
            Dynamics::GridOd(collect(&attrs, &rows_of, |s| GridOdPair { origin: grid_cell(s / g), des: grid_cell(s % g) }))
        }
    };

    let grid = p.kind.is_grid();
    let geo = if grid {
        GeoTable {
            property_columns: vec!["row_id".into(), "col_id".into()],
            units: (0..rows * cols)
                .map(|i| {
                    let (r, c) = ((i / cols) as f64, (i % cols) as f64);
                    GeoUnit {
                        geo_id: i as u64,
                        coordinates: Coordinates::Polygon(vec![vec![
                            vec![c, r],
                            vec![c + 1.0, r],
                            vec![c + 1.0, r + 1.0],
                            vec![c, r + 1.0],
                            vec![c, r],
                        ]]),
                        properties: vec![Scalar::Number(r), Scalar::Number(c)],
                    }
                })
                .collect(),
        }
    } else {
        // Listed in reverse so file order differs from sorted id order.
        GeoTable {
            property_columns: vec![],
            units: nodes
                .iter()
                .rev()
                .map(|&id| GeoUnit { geo_id: id, coordinates: Coordinates::Point(vec![id as f64, -(id as f64)]), properties: vec![] })
                .collect(),
        }
    };
    let rel = (!grid).then(|| {
        let mut seen = std::collections::HashSet::new();
        let records = p
            .edges
            .iter()
            .filter(|(o, de, _)| seen.insert((*o, *de)))
            .enumerate()
            .map(|(i, &(o, de, w))| RelRecord {
                rel_id: i as u64,
                origin_id: nodes[o],
                des_id: nodes[de],
                properties: vec![Scalar::Number((w * 10.0).round() / 10.0)],
            })
            .collect();
        RelTable { property_columns: vec!["cost".into()], records }
    });
    let bundle = DatasetBundle::new_checked("generated", geo, rel, dynamics, None, grid.then_some(p.dims)).unwrap();
    Generated { bundle, nodes: if grid { vec![] } else { nodes }, time_len: p.time_len, spatial, channels: d, cells }
}
