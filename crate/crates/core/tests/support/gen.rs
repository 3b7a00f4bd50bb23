//! Proptest strategies for arbitrary atomic tables.

#![allow(dead_code)]

use atomst::atomio::Table;
use atomst::{
    Coordinates, DynaKey, DynamicsTable, EntityKey, ExtKey, FileKind, GeoTable, GeoUnit, GridCell, GridOdPair, OdPair,
    RelRecord, RelTable, Scalar, Timestamp,
};
use proptest::collection::vec;
use proptest::prelude::*;

/// 1970-01-01 .. 2100-01-01.
pub fn timestamp() -> impl Strategy<Value = Timestamp> {
    (0i64..4_102_444_800).prop_map(Timestamp)
}

/// Any finite double, biased towards "ordinary" values.
pub fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        3 => -1e6f64..1e6,
        1 => (-1000i32..1000).prop_map(f64::from),
        1 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
        1 => Just(0.0),
    ]
}

pub fn value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![5 => finite().prop_map(Some), 1 => Just(None)]
}

/// Text that never parses as a finite number; may need quoting.
pub fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z_][a-zA-Z0-9 _,\"\n;-]{0,8}"
}

pub fn scalar() -> impl Strategy<Value = Scalar> {
    prop_oneof![3 => finite().prop_map(Scalar::Number), 2 => text().prop_map(Scalar::Text), 1 => Just(Scalar::Missing)]
}

/// Unique property column names avoiding `reserved`.
pub fn columns(reserved: &'static [&'static str], max: usize) -> impl Strategy<Value = Vec<String>> {
    vec("[a-z][a-z0-9_ ]{0,6}", 0..=max).prop_map(move |names| {
        let mut out: Vec<String> = Vec::new();
        for n in names {
            if !reserved.contains(&n.as_str()) && !out.contains(&n) {
                out.push(n);
            }
        }
        out
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    vec(finite(), 2..=3)
}

pub fn coordinates() -> impl Strategy<Value = Coordinates> {
    prop_oneof![
        point().prop_map(Coordinates::Point),
        Just(Coordinates::Point(Vec::new())),
        vec(point(), 0..4).prop_map(Coordinates::LineString),
        vec(vec(point(), 0..5), 0..3).prop_map(Coordinates::Polygon),
    ]
}

pub fn geo_table() -> impl Strategy<Value = GeoTable> {
    columns(FileKind::Geo.required_columns(), 3).prop_flat_map(|cols| {
        let width = cols.len();
        vec((any::<u32>(), coordinates(), vec(scalar(), width)), 0..12).prop_map(move |rows| GeoTable {
            property_columns: cols.clone(),
            units: rows
                .into_iter()
                .map(|(id, coordinates, properties)| GeoUnit { geo_id: id as u64, coordinates, properties })
                .collect(),
        })
    })
}

pub fn rel_table() -> impl Strategy<Value = RelTable> {
    columns(FileKind::Rel.required_columns(), 3).prop_flat_map(|cols| {
        let width = cols.len();
        vec((any::<u64>(), 0u64..50, 0u64..50, vec(scalar(), width)), 0..12).prop_map(move |rows| RelTable {
            property_columns: cols.clone(),
            records: rows
                .into_iter()
                .map(|(rel_id, origin_id, des_id, properties)| RelRecord { rel_id, origin_id, des_id, properties })
                .collect(),
        })
    })
}

fn dynamics<K: DynaKey>(key: impl Strategy<Value = K> + Clone + 'static) -> impl Strategy<Value = DynamicsTable<K>> {
    columns(K::COLUMNS, 3).prop_flat_map(move |cols| {
        let width = cols.len();
        vec((any::<u64>(), timestamp(), key.clone(), vec(value(), width)), 0..16).prop_map(move |rows| {
            let mut t = DynamicsTable::new(cols.clone());
            for (id, time, key, values) in rows {
                t.push_row(id, time, key, &values).expect("width matches");
            }
            t
        })
    })
}

fn cell() -> impl Strategy<Value = GridCell> + Clone {
    (0usize..40, 0usize..40).prop_map(|(row, col)| GridCell { row, col })
}

pub fn table(kind: FileKind) -> BoxedStrategy<Table> {
    match kind {
        FileKind::Geo => geo_table().prop_map(Table::Geo).boxed(),
        FileKind::Rel => rel_table().prop_map(Table::Rel).boxed(),
        FileKind::Dyna => dynamics((0u64..1000).prop_map(EntityKey)).prop_map(Table::Dyna).boxed(),
        FileKind::Grid => dynamics(cell()).prop_map(Table::Grid).boxed(),
        FileKind::Od => dynamics((0u64..100, 0u64..100).prop_map(|(origin, des)| OdPair { origin, des }))
            .prop_map(Table::Od)
            .boxed(),
        FileKind::GridOd => dynamics((cell(), cell()).prop_map(|(origin, des)| GridOdPair { origin, des }))
            .prop_map(Table::GridOd)
            .boxed(),
        FileKind::Ext => dynamics(Just(ExtKey)).prop_map(Table::Ext).boxed(),
    }
}

/// One table of every kind.
pub fn table_set() -> impl Strategy<Value = Vec<Table>> {
    FileKind::ALL.map(table).to_vec()
}
