//! Domain types for geographical units, relations, dynamics records,
//! dense tensors and dataset bundles. Nothing here touches the filesystem.

use std::collections::HashSet;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Timestamp;

pub type GeoId = u64;

/// The seven atomic table types, identified by file suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileKind {
    Geo,
    Rel,
    Dyna,
    Grid,
    Od,
    GridOd,
    Ext,
}

impl FileKind {
    pub const ALL: [FileKind; 7] = [
        FileKind::Geo,
        FileKind::Rel,
        FileKind::Dyna,
        FileKind::Grid,
        FileKind::Od,
        FileKind::GridOd,
        FileKind::Ext,
    ];

    pub fn suffix(self) -> &'static str {
        match self {
            FileKind::Geo => "geo",
            FileKind::Rel => "rel",
            FileKind::Dyna => "dyna",
            FileKind::Grid => "grid",
            FileKind::Od => "od",
            FileKind::GridOd => "gridod",
            FileKind::Ext => "ext",
        }
    }

    pub fn required_columns(self) -> &'static [&'static str] {
        match self {
            FileKind::Geo => &["geo_id", "type", "coordinates"],
            FileKind::Rel => &["rel_id", "origin_id", "des_id"],
            FileKind::Dyna => EntityKey::COLUMNS,
            FileKind::Grid => GridCell::COLUMNS,
            FileKind::Od => OdPair::COLUMNS,
            FileKind::GridOd => GridOdPair::COLUMNS,
            FileKind::Ext => ExtKey::COLUMNS,
        }
    }
}

impl fmt::Display for FileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, ".{}", self.suffix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GeoType {
    Point,
    LineString,
    Polygon,
}

impl GeoType {
    pub fn as_str(self) -> &'static str {
        match self {
            GeoType::Point => "Point",
            GeoType::LineString => "LineString",
            GeoType::Polygon => "Polygon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "point" => Some(GeoType::Point),
            "linestring" | "line" => Some(GeoType::LineString),
            "polygon" => Some(GeoType::Polygon),
            _ => None,
        }
    }

    /// Nesting depth of the coordinate array for this type.
    pub fn depth(self) -> usize {
        match self {
            GeoType::Point => 1,
            GeoType::LineString => 2,
            GeoType::Polygon => 3,
        }
    }
}

/// Coordinate payload; the variant fixes the nesting depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Coordinates {
    Point(Vec<f64>),
    LineString(Vec<Vec<f64>>),
    Polygon(Vec<Vec<Vec<f64>>>),
}

impl Coordinates {
    pub fn geo_type(&self) -> GeoType {
        match self {
            Coordinates::Point(_) => GeoType::Point,
            Coordinates::LineString(_) => GeoType::LineString,
            Coordinates::Polygon(_) => GeoType::Polygon,
        }
    }

    pub fn all_finite(&self) -> bool {
        match self {
            Coordinates::Point(p) => p.iter().all(|v| v.is_finite()),
            Coordinates::LineString(l) => l.iter().flatten().all(|v| v.is_finite()),
            Coordinates::Polygon(p) => p.iter().flatten().flatten().all(|v| v.is_finite()),
        }
    }
}

/// A property cell of a `.geo` or `.rel` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
    Missing,
}

impl Scalar {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Scalar::Number(v) => Some(*v),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeoUnit {
    pub geo_id: GeoId,
    pub coordinates: Coordinates,
    /// Aligned with the owning table's `property_columns`.
    pub properties: Vec<Scalar>,
}

impl GeoUnit {
    pub fn geo_type(&self) -> GeoType {
        self.coordinates.geo_type()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GeoTable {
    pub property_columns: Vec<String>,
    pub units: Vec<GeoUnit>,
}

impl GeoTable {
    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    /// Tensor axis order: geo ids sorted ascending, deduplicated.
    pub fn node_order(&self) -> Vec<GeoId> {
        let mut ids: Vec<GeoId> = self.units.iter().map(|u| u.geo_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn property_index(&self, name: &str) -> Option<usize> {
        self.property_columns.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelRecord {
    pub rel_id: u64,
    pub origin_id: GeoId,
    pub des_id: GeoId,
    pub properties: Vec<Scalar>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RelTable {
    pub property_columns: Vec<String>,
    pub records: Vec<RelRecord>,
}

impl RelTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Key columns that identify the spatial entity of a dynamics row.
pub trait DynaKey: Copy + Eq + Ord + Hash + fmt::Debug + Send + Sync + 'static {
    const FILE_KIND: FileKind;
    /// Required columns in table order, primary key and time first.
    const COLUMNS: &'static [&'static str];
    /// Number of integer key columns following `time`.
    const ARITY: usize;

    fn from_fields(fields: &[u64]) -> Self;
    fn write_fields(&self, out: &mut [u64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EntityKey(pub GeoId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridCell {
    pub row: usize,
    pub col: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OdPair {
    pub origin: GeoId,
    pub des: GeoId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridOdPair {
    pub origin: GridCell,
    pub des: GridCell,
}

/// External rows are keyed by `ext_id` alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExtKey;

impl DynaKey for EntityKey {
    const FILE_KIND: FileKind = FileKind::Dyna;
    const COLUMNS: &'static [&'static str] = &["dyna_id", "time", "entity_id"];
    const ARITY: usize = 1;
    fn from_fields(f: &[u64]) -> Self {
        EntityKey(f[0])
    }
    fn write_fields(&self, out: &mut [u64]) {
        out[0] = self.0;
    }
}

impl DynaKey for GridCell {
    const FILE_KIND: FileKind = FileKind::Grid;
    const COLUMNS: &'static [&'static str] = &["dyna_id", "time", "row_id", "col_id"];
    const ARITY: usize = 2;
    fn from_fields(f: &[u64]) -> Self {
        GridCell { row: f[0] as usize, col: f[1] as usize }
    }
    fn write_fields(&self, out: &mut [u64]) {
        out[0] = self.row as u64;
        out[1] = self.col as u64;
    }
}

impl DynaKey for OdPair {
    const FILE_KIND: FileKind = FileKind::Od;
    const COLUMNS: &'static [&'static str] = &["dyna_id", "time", "origin_id", "des_id"];
    const ARITY: usize = 2;
    fn from_fields(f: &[u64]) -> Self {
        OdPair { origin: f[0], des: f[1] }
    }
    fn write_fields(&self, out: &mut [u64]) {
        out[0] = self.origin;
        out[1] = self.des;
    }
}

impl DynaKey for GridOdPair {
    const FILE_KIND: FileKind = FileKind::GridOd;
    const COLUMNS: &'static [&'static str] = &[
        "dyna_id",
        "time",
        "origin_row_id",
        "origin_col_id",
        "des_row_id",
        "des_col_id",
    ];
    const ARITY: usize = 4;
    fn from_fields(f: &[u64]) -> Self {
        GridOdPair {
            origin: GridCell { row: f[0] as usize, col: f[1] as usize },
            des: GridCell { row: f[2] as usize, col: f[3] as usize },
        }
    }
    fn write_fields(&self, out: &mut [u64]) {
        out[0] = self.origin.row as u64;
        out[1] = self.origin.col as u64;
        out[2] = self.des.row as u64;
        out[3] = self.des.col as u64;
    }
}

impl DynaKey for ExtKey {
    const FILE_KIND: FileKind = FileKind::Ext;
    const COLUMNS: &'static [&'static str] = &["ext_id", "time"];
    const ARITY: usize = 0;
    fn from_fields(_: &[u64]) -> Self {
        ExtKey
    }
    fn write_fields(&self, _: &mut [u64]) {}
}

/// One row of a dynamics (or external) table.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation<K> {
    pub id: u64,
    pub time: Timestamp,
    pub key: K,
    pub values: Vec<Option<f64>>,
}

pub type DynaRecord = Observation<EntityKey>;
pub type GridRecord = Observation<GridCell>;
pub type OdRecord = Observation<OdPair>;
pub type GridOdRecord = Observation<GridOdPair>;
pub type ExtRecord = Observation<ExtKey>;

/// Borrowed view of one row of a [`DynamicsTable`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationRef<'a, K> {
    pub id: u64,
    pub time: Timestamp,
    pub key: K,
    pub values: &'a [Option<f64>],
}

impl<K: Copy> ObservationRef<'_, K> {
    pub fn to_owned(&self) -> Observation<K> {
        Observation { id: self.id, time: self.time, key: self.key, values: self.values.to_vec() }
    }
}

/// Column-oriented storage for a dynamics table. Multi-million-row `.dyna`
/// files stay compact this way.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DynamicsTable<K> {
    attributes: Vec<String>,
    ids: Vec<u64>,
    times: Vec<Timestamp>,
    keys: Vec<K>,
    values: Vec<Option<f64>>,
}

pub type DynaTable = DynamicsTable<EntityKey>;
pub type GridTable = DynamicsTable<GridCell>;
pub type OdTable = DynamicsTable<OdPair>;
pub type GridOdTable = DynamicsTable<GridOdPair>;
pub type ExtTable = DynamicsTable<ExtKey>;

impl<K: DynaKey> DynamicsTable<K> {
    pub fn new(attributes: Vec<String>) -> Self {
        DynamicsTable {
            attributes,
            ids: Vec::new(),
            times: Vec::new(),
            keys: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn with_capacity(attributes: Vec<String>, rows: usize) -> Self {
        let width = attributes.len();
        DynamicsTable {
            attributes,
            ids: Vec::with_capacity(rows),
            times: Vec::with_capacity(rows),
            keys: Vec::with_capacity(rows),
            values: Vec::with_capacity(rows * width),
        }
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn width(&self) -> usize {
        self.attributes.len()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn push_row(&mut self, id: u64, time: Timestamp, key: K, values: &[Option<f64>]) -> Result<()> {
        if values.len() != self.attributes.len() {
            return Err(Error::HeterogeneousRecords {
                index: self.len(),
                expected: self.attributes.len(),
                got: values.len(),
            });
        }
        self.ids.push(id);
        self.times.push(time);
        self.keys.push(key);
        self.values.extend_from_slice(values);
        Ok(())
    }

    pub fn push(&mut self, record: Observation<K>) -> Result<()> {
        self.push_row(record.id, record.time, record.key, &record.values)
    }

    pub fn row(&self, i: usize) -> ObservationRef<'_, K> {
        let w = self.attributes.len();
        ObservationRef {
            id: self.ids[i],
            time: self.times[i],
            key: self.keys[i],
            values: &self.values[i * w..(i + 1) * w],
        }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = ObservationRef<'_, K>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn times(&self) -> &[Timestamp] {
        &self.times
    }

    pub fn keys(&self) -> &[K] {
        &self.keys
    }

    pub fn to_records(&self) -> Vec<Observation<K>> {
        self.iter().map(|r| r.to_owned()).collect()
    }

    pub fn from_records(attributes: Vec<String>, records: impl IntoIterator<Item = Observation<K>>) -> Result<Self> {
        let mut table = Self::new(attributes);
        for r in records {
            table.push(r)?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DynamicsKind {
    Graph,
    Grid,
    GraphOd,
    GridOd,
}

impl DynamicsKind {
    pub fn file_kind(self) -> FileKind {
        match self {
            DynamicsKind::Graph => FileKind::Dyna,
            DynamicsKind::Grid => FileKind::Grid,
            DynamicsKind::GraphOd => FileKind::Od,
            DynamicsKind::GridOd => FileKind::GridOd,
        }
    }

    pub fn is_grid(self) -> bool {
        matches!(self, DynamicsKind::Grid | DynamicsKind::GridOd)
    }
}

impl fmt::Display for DynamicsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DynamicsKind::Graph => "graph",
            DynamicsKind::Grid => "grid",
            DynamicsKind::GraphOd => "graph_od",
            DynamicsKind::GridOd => "grid_od",
        })
    }
}

/// Exactly one dynamics table per bundle.
#[derive(Debug, Clone, PartialEq)]
pub enum Dynamics {
    Graph(DynaTable),
    Grid(GridTable),
    GraphOd(OdTable),
    GridOd(GridOdTable),
}

impl Dynamics {
    pub fn kind(&self) -> DynamicsKind {
        match self {
            Dynamics::Graph(_) => DynamicsKind::Graph,
            Dynamics::Grid(_) => DynamicsKind::Grid,
            Dynamics::GraphOd(_) => DynamicsKind::GraphOd,
            Dynamics::GridOd(_) => DynamicsKind::GridOd,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Dynamics::Graph(t) => t.len(),
            Dynamics::Grid(t) => t.len(),
            Dynamics::GraphOd(t) => t.len(),
            Dynamics::GridOd(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn attributes(&self) -> &[String] {
        match self {
            Dynamics::Graph(t) => t.attributes(),
            Dynamics::Grid(t) => t.attributes(),
            Dynamics::GraphOd(t) => t.attributes(),
            Dynamics::GridOd(t) => t.attributes(),
        }
    }

    pub fn times(&self) -> &[Timestamp] {
        match self {
            Dynamics::Graph(t) => t.times(),
            Dynamics::Grid(t) => t.times(),
            Dynamics::GraphOd(t) => t.times(),
            Dynamics::GridOd(t) => t.times(),
        }
    }

    pub fn ids(&self) -> &[u64] {
        match self {
            Dynamics::Graph(t) => t.ids(),
            Dynamics::Grid(t) => t.ids(),
            Dynamics::GraphOd(t) => t.ids(),
            Dynamics::GridOd(t) => t.ids(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub name: String,
    pub geo: GeoTable,
    pub rel: Option<RelTable>,
    pub dynamics: Dynamics,
    pub ext: Option<ExtTable>,
    pub grid_dims: Option<(usize, usize)>,
}

impl DatasetBundle {
    /// Checks the structural invariant that grid dimensions accompany grid
    /// dynamics and nothing else. Key uniqueness is left to validation.
    pub fn new(
        name: impl Into<String>,
        geo: GeoTable,
        rel: Option<RelTable>,
        dynamics: Dynamics,
        ext: Option<ExtTable>,
        grid_dims: Option<(usize, usize)>,
    ) -> Result<Self> {
        let kind = dynamics.kind();
        if kind.is_grid() != grid_dims.is_some() {
            return Err(Error::InvalidArgument(format!(
                "grid_dims must be present exactly for grid dynamics (kind {kind})"
            )));
        }
        Ok(DatasetBundle { name: name.into(), geo, rel, dynamics, ext, grid_dims })
    }

    /// Like [`DatasetBundle::new`], additionally rejecting duplicate primary keys.
    pub fn new_checked(
        name: impl Into<String>,
        geo: GeoTable,
        rel: Option<RelTable>,
        dynamics: Dynamics,
        ext: Option<ExtTable>,
        grid_dims: Option<(usize, usize)>,
    ) -> Result<Self> {
        let bundle = Self::new(name, geo, rel, dynamics, ext, grid_dims)?;
        bundle.check_primary_keys()?;
        Ok(bundle)
    }

    pub fn kind(&self) -> DynamicsKind {
        self.dynamics.kind()
    }

    pub fn check_primary_keys(&self) -> Result<()> {
        first_duplicate(self.geo.units.iter().map(|u| u.geo_id), "geo_id")?;
        if let Some(rel) = &self.rel {
            first_duplicate(rel.records.iter().map(|r| r.rel_id), "rel_id")?;
        }
        first_duplicate(self.dynamics.ids().iter().copied(), "dyna_id")?;
        if let Some(ext) = &self.ext {
            first_duplicate(ext.ids().iter().copied(), "ext_id")?;
        }
        Ok(())
    }
}

fn first_duplicate<T: Eq + Hash + fmt::Display>(
    items: impl Iterator<Item = T>,
    what: &'static str,
) -> Result<()> {
    let mut seen = HashSet::new();
    for item in items {
        if seen.contains(&item) {
            return Err(Error::DuplicateKey { what, key: item.to_string() });
        }
        seen.insert(item);
    }
    Ok(())
}

/// `I = max(row_id) + 1`, `J = max(col_id) + 1`.
pub fn infer_grid_dims<'a>(cells: impl IntoIterator<Item = &'a GridCell>) -> Result<(usize, usize)> {
    cells
        .into_iter()
        .fold(None, |acc: Option<(usize, usize)>, c| {
            let (i, j) = acc.unwrap_or((0, 0));
            Some((i.max(c.row + 1), j.max(c.col + 1)))
        })
        .ok_or(Error::EmptyTable)
}

/// Regular time lattice: `len` slots starting at `start`, `step` seconds apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeIndex {
    pub start: Timestamp,
    pub step_seconds: i64,
    pub len: usize,
}

impl TimeIndex {
    pub fn at(&self, i: usize) -> Timestamp {
        Timestamp(self.start.0 + self.step_seconds * i as i64)
    }

    pub fn position(&self, t: Timestamp) -> Option<usize> {
        let offset = t.0 - self.start.0;
        if self.step_seconds <= 0 {
            return (offset == 0 && self.len > 0).then_some(0);
        }
        if offset < 0 || offset % self.step_seconds != 0 {
            return None;
        }
        let i = (offset / self.step_seconds) as usize;
        (i < self.len).then_some(i)
    }

    pub fn timestamps(&self) -> impl ExactSizeIterator<Item = Timestamp> + '_ {
        (0..self.len).map(move |i| self.at(i))
    }

    pub fn end(&self) -> Timestamp {
        self.at(self.len.saturating_sub(1))
    }

    /// Steps per day, if the step divides a day evenly.
    pub fn steps_per_day(&self) -> Option<usize> {
        (self.step_seconds > 0 && crate::time::SECONDS_PER_DAY % self.step_seconds == 0)
            .then(|| (crate::time::SECONDS_PER_DAY / self.step_seconds) as usize)
    }
}

/// Dense time-major tensor with an observation mask. Missing cells hold 0.0.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsTensor {
    kind: DynamicsKind,
    shape: Vec<usize>,
    channels: Vec<String>,
    data: Vec<f64>,
    mask: Vec<bool>,
    time_index: TimeIndex,
}

impl DynamicsTensor {
    /// `spatial` is `[N]`, `[I, J]`, `[N, N]` or `[I, J, I, J]` depending on kind.
    pub fn new(
        kind: DynamicsKind,
        spatial: &[usize],
        channels: Vec<String>,
        time_index: TimeIndex,
        mut data: Vec<f64>,
        mask: Vec<bool>,
    ) -> Result<Self> {
        let ok = match kind {
            DynamicsKind::Graph => spatial.len() == 1,
            DynamicsKind::Grid => spatial.len() == 2,
            DynamicsKind::GraphOd => spatial.len() == 2 && spatial[0] == spatial[1],
            DynamicsKind::GridOd => {
                spatial.len() == 4 && spatial[0] == spatial[2] && spatial[1] == spatial[3]
            }
        };
        if !ok {
            return Err(Error::ShapeMismatch(format!("spatial dims {spatial:?} do not fit kind {kind}")));
        }
        let mut shape = Vec::with_capacity(spatial.len() + 2);
        shape.push(time_index.len);
        shape.extend_from_slice(spatial);
        shape.push(channels.len());
        let cells: usize = shape.iter().product();
        if data.len() != cells || mask.len() != cells {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} needs {cells} cells, got data {} / mask {}",
                data.len(),
                mask.len()
            )));
        }
        for (v, &m) in data.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(DynamicsTensor { kind, shape, channels, data, mask, time_index })
    }

    pub fn kind(&self) -> DynamicsKind {
        self.kind
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn time_len(&self) -> usize {
        self.shape[0]
    }

    pub fn spatial_shape(&self) -> &[usize] {
        &self.shape[1..self.shape.len() - 1]
    }

    pub fn spatial_size(&self) -> usize {
        self.spatial_shape().iter().product()
    }

    pub fn channels(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channels
    }

    /// Cells per time step.
    pub fn step_stride(&self) -> usize {
        self.spatial_size() * self.channels()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn time_index(&self) -> &TimeIndex {
        &self.time_index
    }

    pub fn index(&self, t: usize, spatial: usize, channel: usize) -> usize {
        (t * self.spatial_size() + spatial) * self.channels() + channel
    }

    pub fn get(&self, t: usize, spatial: usize, channel: usize) -> Option<f64> {
        let i = self.index(t, spatial, channel);
        self.mask[i].then(|| self.data[i])
    }

    /// Data and mask for time steps `[from, to)`.
    pub fn steps(&self, from: usize, to: usize) -> (&[f64], &[bool]) {
        let s = self.step_stride();
        (&self.data[from * s..to * s], &self.mask[from * s..to * s])
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// `(t, spatial, channel, value)` for every observed cell, in layout order.
    pub fn observed_cells(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        let d = self.channels();
        let s = self.spatial_size();
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(move |(i, _)| {
            (i / (s * d), (i / d) % s, i % d, self.data[i])
        })
    }
}

/// Row-major `n × n` matrix; rows and columns follow `node_order`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    pub node_order: Vec<GeoId>,
    pub weights: Vec<f64>,
}

impl AdjacencyMatrix {
    pub fn n(&self) -> usize {
        self.node_order.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n() + j]
    }

    pub fn nonzero_count(&self) -> usize {
        self.weights.iter().filter(|&&w| w != 0.0).count()
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.weights.chunks(self.n().max(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(pairs: &[(usize, usize)]) -> Vec<GridCell> {
        pairs.iter().map(|&(row, col)| GridCell { row, col }).collect()
    }

    #[test]
    fn grid_dims_from_max_index() {
        let full: Vec<_> = (0..10).flat_map(|r| (0..20).map(move |c| (r, c))).collect();
        assert_eq!(infer_grid_dims(&cells(&full)).unwrap(), (10, 20));
        assert_eq!(infer_grid_dims(&cells(&[(0, 0)])).unwrap(), (1, 1));
        assert_eq!(infer_grid_dims(&cells(&[(0, 0), (2, 1)])).unwrap(), (3, 2));
        assert!(matches!(infer_grid_dims(&cells(&[])), Err(Error::EmptyTable)));
    }

    #[test]
    fn metr_la_lattice_arithmetic() {
        // 119 days at 5-minute resolution, 207 sensors.
        let steps = 119 * (86_400 / 300);
        assert_eq!(steps, 34_272);
        assert_eq!(207 * steps, 7_094_304);
    }

    #[test]
    fn tensor_shape_follows_kind() {
        let ti = TimeIndex { start: Timestamp(0), step_seconds: 300, len: 2 };
        let t = DynamicsTensor::new(
            DynamicsKind::GridOd,
            &[2, 3, 2, 3],
            vec!["flow".into()],
            ti,
            vec![1.0; 2 * 36],
            vec![true; 2 * 36],
        )
        .unwrap();
        assert_eq!(t.shape(), &[2, 2, 3, 2, 3, 1]);
        assert!(DynamicsTensor::new(DynamicsKind::GraphOd, &[2, 3], vec!["x".into()], ti, vec![], vec![])
            .is_err());
    }

    #[test]
    fn masked_cells_are_zeroed() {
        let ti = TimeIndex { start: Timestamp(0), step_seconds: 60, len: 1 };
        let t = DynamicsTensor::new(DynamicsKind::Graph, &[2], vec!["v".into()], ti, vec![3.0, 4.0], vec![true, false])
            .unwrap();
        assert_eq!(t.data(), &[3.0, 0.0]);
        assert_eq!(t.get(0, 1, 0), None);
    }

    #[test]
    fn time_index_positions() {
        let ti = TimeIndex { start: Timestamp(600), step_seconds: 300, len: 3 };
        assert_eq!(ti.position(Timestamp(900)), Some(1));
        assert_eq!(ti.position(Timestamp(950)), None);
        assert_eq!(ti.position(Timestamp(1500)), None);
        assert_eq!(ti.steps_per_day(), Some(288));
    }

    #[test]
    fn duplicate_primary_key_rejected_at_assembly() {
        let geo = GeoTable {
            property_columns: vec![],
            units: vec![
                GeoUnit { geo_id: 1, coordinates: Coordinates::Point(vec![0.0, 0.0]), properties: vec![] },
                GeoUnit { geo_id: 1, coordinates: Coordinates::Point(vec![1.0, 0.0]), properties: vec![] },
            ],
        };
        let dyna = Dynamics::Graph(DynaTable::new(vec!["v".into()]));
        let err = DatasetBundle::new_checked("x", geo, None, dyna, None, None).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { what: "geo_id", .. }));
    }

    #[test]
    fn grid_dims_required_for_grid_kinds() {
        let grid = Dynamics::Grid(GridTable::new(vec!["inflow".into()]));
        assert!(DatasetBundle::new("g", GeoTable::default(), None, grid.clone(), None, None).is_err());
        assert!(DatasetBundle::new("g", GeoTable::default(), None, grid, None, Some((2, 2))).is_ok());
    }
}
