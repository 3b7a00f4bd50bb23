//! Reading and writing the seven atomic table types.
//!
//! Dialect: RFC 4180 quoting, UTF-8, `\n` or `\r\n` on read and `\n` on write.
//! Required columns come first in the fixed order for each kind; any further
//! columns are properties. Empty cells are missing values. Coordinates are a
//! JSON array inside a single (quoted) cell. Numbers are written in their
//! shortest round-trip decimal form, timestamps as `YYYY-MM-DDTHH:MM:SSZ`.
//! Files ending in `.gz` are decompressed transparently on read.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use csv::{ByteRecord, QuoteStyle, ReaderBuilder, WriterBuilder};
use flate2::read::MultiGzDecoder;

use crate::error::{Error, Result};
pub use crate::model::FileKind;
use crate::model::*;
use crate::time::Timestamp;

const READ_BUFFER: usize = 1 << 20;

/// Column layout of a parsed table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TableHeader {
    pub kind: FileKind,
    pub property_columns: Vec<String>,
}

impl TableHeader {
    pub fn new(kind: FileKind, property_columns: Vec<String>) -> Self {
        TableHeader { kind, property_columns }
    }

    pub fn required_columns(&self) -> &'static [&'static str] {
        self.kind.required_columns()
    }

    pub fn columns(&self) -> impl Iterator<Item = &str> {
        self.required_columns()
            .iter()
            .copied()
            .chain(self.property_columns.iter().map(String::as_str))
    }
}

/// Any one parsed atomic table.
#[derive(Debug, Clone, PartialEq)]
pub enum Table {
    Geo(GeoTable),
    Rel(RelTable),
    Dyna(DynaTable),
    Grid(GridTable),
    Od(OdTable),
    GridOd(GridOdTable),
    Ext(ExtTable),
}

impl Table {
    pub fn kind(&self) -> FileKind {
        match self {
            Table::Geo(_) => FileKind::Geo,
            Table::Rel(_) => FileKind::Rel,
            Table::Dyna(_) => FileKind::Dyna,
            Table::Grid(_) => FileKind::Grid,
            Table::Od(_) => FileKind::Od,
            Table::GridOd(_) => FileKind::GridOd,
            Table::Ext(_) => FileKind::Ext,
        }
    }

    pub fn header(&self) -> TableHeader {
        let props = match self {
            Table::Geo(t) => t.property_columns.clone(),
            Table::Rel(t) => t.property_columns.clone(),
            Table::Dyna(t) => t.attributes().to_vec(),
            Table::Grid(t) => t.attributes().to_vec(),
            Table::Od(t) => t.attributes().to_vec(),
            Table::GridOd(t) => t.attributes().to_vec(),
            Table::Ext(t) => t.attributes().to_vec(),
        };
        TableHeader::new(self.kind(), props)
    }

    pub fn len(&self) -> usize {
        match self {
            Table::Geo(t) => t.len(),
            Table::Rel(t) => t.len(),
            Table::Dyna(t) => t.len(),
            Table::Grid(t) => t.len(),
            Table::Od(t) => t.len(),
            Table::GridOd(t) => t.len(),
            Table::Ext(t) => t.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps a file name such as `METR_LA.dyna` or `x.grid.gz` to its table kind.
pub fn sniff_kind(filename: &str) -> Result<FileKind> {
    let name = filename.strip_suffix(".gz").unwrap_or(filename);
    let suffix = Path::new(name)
        .extension()
        .and_then(|e| e.to_str())
        .ok_or_else(|| Error::UnknownSuffix(filename.to_string()))?;
    FileKind::ALL
        .into_iter()
        .find(|k| k.suffix() == suffix)
        .ok_or_else(|| Error::UnknownSuffix(filename.to_string()))
}

/// Opens a table file, decompressing `.gz` transparently.
pub fn open(path: &Path) -> Result<Box<dyn Read + Send>> {
    let file = File::open(path)?;
    if path.extension().is_some_and(|e| e == "gz") {
        Ok(Box::new(MultiGzDecoder::new(file)))
    } else {
        Ok(Box::new(file))
    }
}

pub fn parse_table<R: Read>(kind: FileKind, reader: R) -> Result<Table> {
    Ok(match kind {
        FileKind::Geo => Table::Geo(read_geo(reader)?),
        FileKind::Rel => Table::Rel(read_rel(reader)?),
        FileKind::Dyna => Table::Dyna(read_dynamics(reader)?),
        FileKind::Grid => Table::Grid(read_dynamics(reader)?),
        FileKind::Od => Table::Od(read_dynamics(reader)?),
        FileKind::GridOd => Table::GridOd(read_dynamics(reader)?),
        FileKind::Ext => Table::Ext(read_dynamics(reader)?),
    })
}

pub fn write_table<W: Write>(table: &Table, writer: W) -> Result<()> {
    match table {
        Table::Geo(t) => write_geo(t, writer),
        Table::Rel(t) => write_rel(t, writer),
        Table::Dyna(t) => write_dynamics(t, writer),
        Table::Grid(t) => write_dynamics(t, writer),
        Table::Od(t) => write_dynamics(t, writer),
        Table::GridOd(t) => write_dynamics(t, writer),
        Table::Ext(t) => write_dynamics(t, writer),
    }
}

pub fn write_table_to_vec(table: &Table) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_table(table, &mut out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// reading

struct HeaderLayout {
    /// Field index of each required column, in required order.
    required: Vec<usize>,
    /// Field index of each property column, in file order.
    properties: Vec<usize>,
    property_names: Vec<String>,
    width: usize,
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .buffer_capacity(READ_BUFFER)
        .from_reader(reader)
}

fn read_layout<R: Read>(rdr: &mut csv::Reader<R>, kind: FileKind) -> Result<HeaderLayout> {
    let mut header = ByteRecord::new();
    if !rdr.read_byte_record(&mut header)? {
        return Err(Error::MalformedRow { line: 1, reason: "empty input, expected a header line".into() });
    }
    let mut names = Vec::with_capacity(header.len());
    for (i, field) in header.iter().enumerate() {
        let mut name = std::str::from_utf8(field)
            .map_err(|_| Error::MalformedRow { line: 1, reason: "header is not UTF-8".into() })?;
        if i == 0 {
            name = name.trim_start_matches('\u{feff}');
        }
        names.push(name.to_string());
    }
    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(n.as_str()) {
            return Err(Error::MalformedRow { line: 1, reason: format!("duplicate column `{n}`") });
        }
    }
    let required_names = kind.required_columns();
    let mut required = Vec::with_capacity(required_names.len());
    for &col in required_names {
        let idx = names
            .iter()
            .position(|n| n == col)
            .ok_or_else(|| Error::MissingRequiredColumn { kind, column: col.to_string() })?;
        required.push(idx);
    }
    let (properties, property_names) = names
        .iter()
        .enumerate()
        .filter(|(i, _)| !required.contains(i))
        .map(|(i, n)| (i, n.clone()))
        .unzip();
    Ok(HeaderLayout { required, properties, property_names, width: names.len() })
}

fn field_str(field: &[u8], line: u64) -> Result<&str> {
    std::str::from_utf8(field).map_err(|_| Error::MalformedRow { line, reason: "invalid UTF-8".into() })
}

fn parse_id(field: &[u8], column: &str, line: u64) -> Result<u64> {
    let s = field_str(field, line)?;
    s.parse::<u64>().map_err(|_| Error::MalformedRow {
        line,
        reason: format!("column `{column}`: `{s}` is not a non-negative integer"),
    })
}

fn parse_value(field: &[u8], column: &str, line: u64) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    let s = field_str(field, line)?;
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::MalformedRow { line, reason: format!("column `{column}`: `{s}` is not a finite number") }),
    }
}

fn parse_scalar(field: &[u8], line: u64) -> Result<Scalar> {
    if field.is_empty() {
        return Ok(Scalar::Missing);
    }
    let s = field_str(field, line)?;
    Ok(match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Scalar::Number(v),
        _ => Scalar::Text(s.to_string()),
    })
}

struct TimeCache {
    raw: Vec<u8>,
    value: Timestamp,
}

impl TimeCache {
    fn new() -> Self {
        TimeCache { raw: Vec::new(), value: Timestamp(0) }
    }

    fn parse(&mut self, field: &[u8], line: u64) -> Result<Timestamp> {
        if !self.raw.is_empty() && self.raw == field {
            return Ok(self.value);
        }
        let s = field_str(field, line)?;
        let ts = Timestamp::parse(s).ok_or_else(|| Error::BadTimestamp { line, value: s.to_string() })?;
        self.raw.clear();
        self.raw.extend_from_slice(field);
        self.value = ts;
        Ok(ts)
    }
}

fn check_width(record: &ByteRecord, layout: &HeaderLayout, line: u64) -> Result<()> {
    if record.len() != layout.width {
        return Err(Error::MalformedRow {
            line,
            reason: format!("expected {} fields, found {}", layout.width, record.len()),
        });
    }
    Ok(())
}

fn line_of(record: &ByteRecord, fallback: u64) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(fallback)
}

pub fn read_geo<R: Read>(reader: R) -> Result<GeoTable> {
    let mut rdr = csv_reader(reader);
    let layout = read_layout(&mut rdr, FileKind::Geo)?;
    let mut record = ByteRecord::new();
    let mut units = Vec::new();
    while rdr.read_byte_record(&mut record)? {
        let line = line_of(&record, units.len() as u64 + 2);
        check_width(&record, &layout, line)?;
        let geo_id = parse_id(&record[layout.required[0]], "geo_id", line)?;
        let type_str = field_str(&record[layout.required[1]], line)?;
        let geo_type = GeoType::parse(type_str)
            .ok_or_else(|| Error::MalformedRow { line, reason: format!("unknown geo type `{type_str}`") })?;
        let coordinates = parse_coordinates(field_str(&record[layout.required[2]], line)?, geo_type, line)?;
        let properties = layout
            .properties
            .iter()
            .map(|&i| parse_scalar(&record[i], line))
            .collect::<Result<_>>()?;
        units.push(GeoUnit { geo_id, coordinates, properties });
    }
    Ok(GeoTable { property_columns: layout.property_names, units })
}

pub fn read_rel<R: Read>(reader: R) -> Result<RelTable> {
    let mut rdr = csv_reader(reader);
    let layout = read_layout(&mut rdr, FileKind::Rel)?;
    let mut record = ByteRecord::new();
    let mut records = Vec::new();
    while rdr.read_byte_record(&mut record)? {
        let line = line_of(&record, records.len() as u64 + 2);
        check_width(&record, &layout, line)?;
        records.push(RelRecord {
            rel_id: parse_id(&record[layout.required[0]], "rel_id", line)?,
            origin_id: parse_id(&record[layout.required[1]], "origin_id", line)?,
            des_id: parse_id(&record[layout.required[2]], "des_id", line)?,
            properties: layout
                .properties
                .iter()
                .map(|&i| parse_scalar(&record[i], line))
                .collect::<Result<_>>()?,
        });
    }
    Ok(RelTable { property_columns: layout.property_names, records })
}

/// Row-at-a-time reader over a dynamics or external table. Memory use is
/// bounded by one row plus the CSV read buffer, regardless of file size.
pub struct DynamicsReader<R: Read, K> {
    rdr: csv::Reader<R>,
    layout: HeaderLayout,
    record: ByteRecord,
    times: TimeCache,
    key_fields: Vec<u64>,
    values: Vec<Option<f64>>,
    rows: u64,
    _key: PhantomData<K>,
}

impl<R: Read, K: DynaKey> DynamicsReader<R, K> {
    pub fn new(reader: R) -> Result<Self> {
        let mut rdr = csv_reader(reader);
        let layout = read_layout(&mut rdr, K::FILE_KIND)?;
        let width = layout.properties.len();
        Ok(DynamicsReader {
            rdr,
            layout,
            record: ByteRecord::new(),
            times: TimeCache::new(),
            key_fields: vec![0; K::ARITY],
            values: Vec::with_capacity(width),
            rows: 0,
            _key: PhantomData,
        })
    }

    pub fn attributes(&self) -> &[String] {
        &self.layout.property_names
    }

    /// Parses the next row into internal buffers; `None` at end of input.
    fn advance(&mut self) -> Result<Option<(u64, Timestamp, K)>> {
        if !self.rdr.read_byte_record(&mut self.record)? {
            return Ok(None);
        }
        self.rows += 1;
        let line = line_of(&self.record, self.rows + 1);
        check_width(&self.record, &self.layout, line)?;
        let req = &self.layout.required;
        let id = parse_id(&self.record[req[0]], K::COLUMNS[0], line)?;
        let time = self.times.parse(&self.record[req[1]], line)?;
        for k in 0..K::ARITY {
            self.key_fields[k] = parse_id(&self.record[req[2 + k]], K::COLUMNS[2 + k], line)?;
        }
        self.values.clear();
        for (&i, name) in self.layout.properties.iter().zip(&self.layout.property_names) {
            self.values.push(parse_value(&self.record[i], name, line)?);
        }
        Ok(Some((id, time, K::from_fields(&self.key_fields))))
    }

    /// Drains the remaining rows into a table.
    pub fn read_table(mut self) -> Result<DynamicsTable<K>> {
        let mut table = DynamicsTable::new(self.layout.property_names.clone());
        while let Some((id, time, key)) = self.advance()? {
            table.push_row(id, time, key, &self.values)?;
        }
        Ok(table)
    }
}

impl<R: Read, K: DynaKey> Iterator for DynamicsReader<R, K> {
    type Item = Result<Observation<K>>;

    fn next(&mut self) -> Option<Self::Item> {
        match self.advance() {
            Ok(Some((id, time, key))) => Some(Ok(Observation { id, time, key, values: self.values.clone() })),
            Ok(None) => None,
            Err(e) => Some(Err(e)),
        }
    }
}

pub fn read_dynamics<K: DynaKey, R: Read>(reader: R) -> Result<DynamicsTable<K>> {
    DynamicsReader::<R, K>::new(reader)?.read_table()
}

fn parse_coordinates(cell: &str, geo_type: GeoType, line: u64) -> Result<Coordinates> {
    let bad = |reason: String| Error::BadCoordinates { line, reason };
    let value: serde_json::Value = serde_json::from_str(cell).map_err(|e| bad(format!("{e}")))?;
    fn numbers(v: &serde_json::Value) -> Option<Vec<f64>> {
        v.as_array()?.iter().map(|x| x.as_f64().filter(|f| f.is_finite())).collect()
    }
    fn nested<T>(v: &serde_json::Value, inner: fn(&serde_json::Value) -> Option<T>) -> Option<Vec<T>> {
        v.as_array()?.iter().map(inner).collect()
    }
    let parsed = match geo_type {
        GeoType::Point => numbers(&value).map(Coordinates::Point),
        GeoType::LineString => nested(&value, numbers).map(Coordinates::LineString),
        GeoType::Polygon => nested(&value, |v| nested(v, numbers)).map(Coordinates::Polygon),
    };
    parsed.ok_or_else(|| {
        bad(format!("expected nesting depth {} of finite numbers for {}", geo_type.depth(), geo_type.as_str()))
    })
}

// ---------------------------------------------------------------------------
// writing

fn csv_writer<W: Write>(writer: W) -> csv::Writer<W> {
    WriterBuilder::new()
        .has_headers(false)
        .quote_style(QuoteStyle::Necessary)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(writer)
}

/// Shortest round-trip decimal; negative zero is written as `0`.
pub fn format_number(v: f64, out: &mut String) {
    if v == 0.0 {
        out.push('0');
    } else {
        let _ = write!(out, "{v}");
    }
}

fn format_coordinates(c: &Coordinates, out: &mut String) {
    fn list(vals: &[f64], out: &mut String) {
        out.push('[');
        for (i, v) in vals.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            format_number(*v, out);
        }
        out.push(']');
    }
    fn nest<T>(items: &[T], out: &mut String, inner: impl Fn(&T, &mut String)) {
        out.push('[');
        for (i, item) in items.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            inner(item, out);
        }
        out.push(']');
    }
    match c {
        Coordinates::Point(p) => list(p, out),
        Coordinates::LineString(l) => nest(l, out, |p, o| list(p, o)),
        Coordinates::Polygon(poly) => nest(poly, out, |ring, o| nest(ring, o, |p, o2| list(p, o2))),
    }
}

fn format_scalar(s: &Scalar, out: &mut String) {
    match s {
        Scalar::Number(v) => format_number(*v, out),
        Scalar::Text(t) => out.push_str(t),
        Scalar::Missing => {}
    }
}

fn write_header<W: Write>(wtr: &mut csv::Writer<W>, header: &TableHeader) -> Result<()> {
    wtr.write_record(header.columns())?;
    Ok(())
}

fn check_props(index: usize, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::HeterogeneousRecords { index, expected, got });
    }
    Ok(())
}

pub fn write_geo<W: Write>(table: &GeoTable, writer: W) -> Result<()> {
    let mut wtr = csv_writer(writer);
    write_header(&mut wtr, &TableHeader::new(FileKind::Geo, table.property_columns.clone()))?;
    let mut buf = String::new();
    for (i, unit) in table.units.iter().enumerate() {
        check_props(i, table.property_columns.len(), unit.properties.len())?;
        buf.clear();
        let _ = write!(buf, "{}", unit.geo_id);
        wtr.write_field(&buf)?;
        wtr.write_field(unit.geo_type().as_str())?;
        buf.clear();
        format_coordinates(&unit.coordinates, &mut buf);
        wtr.write_field(&buf)?;
        for p in &unit.properties {
            buf.clear();
            format_scalar(p, &mut buf);
            wtr.write_field(&buf)?;
        }
        wtr.write_record(None::<&[u8]>)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_rel<W: Write>(table: &RelTable, writer: W) -> Result<()> {
    let mut wtr = csv_writer(writer);
    write_header(&mut wtr, &TableHeader::new(FileKind::Rel, table.property_columns.clone()))?;
    let mut buf = String::new();
    for (i, r) in table.records.iter().enumerate() {
        check_props(i, table.property_columns.len(), r.properties.len())?;
        for id in [r.rel_id, r.origin_id, r.des_id] {
            buf.clear();
            let _ = write!(buf, "{id}");
            wtr.write_field(&buf)?;
        }
        for p in &r.properties {
            buf.clear();
            format_scalar(p, &mut buf);
            wtr.write_field(&buf)?;
        }
        wtr.write_record(None::<&[u8]>)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_dynamics<K: DynaKey, W: Write>(table: &DynamicsTable<K>, writer: W) -> Result<()> {
    let mut wtr = csv_writer(writer);
    write_header(&mut wtr, &TableHeader::new(K::FILE_KIND, table.attributes().to_vec()))?;
    let mut buf = String::new();
    let mut last_time: Option<(Timestamp, String)> = None;
    let mut fields = vec![0u64; K::ARITY];
    for row in table.iter() {
        buf.clear();
        let _ = write!(buf, "{}", row.id);
        wtr.write_field(&buf)?;
        match &last_time {
            Some((t, s)) if *t == row.time => wtr.write_field(s)?,
            _ => {
                let mut s = String::with_capacity(20);
                row.time.write_canonical(&mut s);
                wtr.write_field(&s)?;
                last_time = Some((row.time, s));
            }
        }
        row.key.write_fields(&mut fields);
        for f in &fields {
            buf.clear();
            let _ = write!(buf, "{f}");
            wtr.write_field(&buf)?;
        }
        for v in row.values {
            buf.clear();
            if let Some(v) = v {
                format_number(*v, &mut buf);
            }
            wtr.write_field(&buf)?;
        }
        wtr.write_record(None::<&[u8]>)?;
    }
    wtr.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bundle directories

/// Table files found in a bundle directory, by kind.
pub fn scan_bundle_dir(dir: &Path) -> Result<BTreeMap<FileKind, PathBuf>> {
    let mut found = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() {
            continue;
        }
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        let Ok(kind) = sniff_kind(name) else { continue };
        if let Some(prev) = found.insert(kind, path.clone()) {
            return Err(Error::InvalidArgument(format!(
                "two {kind} tables in {}: {} and {}",
                dir.display(),
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(found)
}

fn stem(path: &Path) -> String {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
    let name = name.strip_suffix(".gz").unwrap_or(name);
    name.rsplit_once('.').map(|(s, _)| s).unwrap_or(name).to_string()
}

/// Grid extent from `.geo` `row_id`/`col_id` properties when present,
/// otherwise from the largest indices seen in the dynamics rows.
fn grid_dims_for(geo: &GeoTable, cells: impl Iterator<Item = GridCell>) -> (usize, usize) {
    if let (Some(r), Some(c)) = (geo.property_index("row_id"), geo.property_index("col_id")) {
        let dims = geo.units.iter().fold((0usize, 0usize), |(i, j), u| {
            let row = u.properties[r].as_number().unwrap_or(0.0).max(0.0) as usize;
            let col = u.properties[c].as_number().unwrap_or(0.0).max(0.0) as usize;
            (i.max(row + 1), j.max(col + 1))
        });
        if dims != (0, 0) {
            return dims;
        }
    }
    let cells: Vec<GridCell> = cells.collect();
    infer_grid_dims(&cells).unwrap_or((0, 0))
}

/// Loads every atomic table in `dir` into a bundle. Exactly one dynamics
/// table must be present; `.geo` may be absent only for grid kinds.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let files = scan_bundle_dir(dir)?;
    let dyn_kinds = [FileKind::Dyna, FileKind::Grid, FileKind::Od, FileKind::GridOd];
    let present: Vec<FileKind> = dyn_kinds.into_iter().filter(|k| files.contains_key(k)).collect();
    let dyn_kind = match present.as_slice() {
        [k] => *k,
        [] => return Err(Error::InvalidArgument(format!("no dynamics table in {}", dir.display()))),
        many => {
            return Err(Error::InvalidArgument(format!(
                "{} holds several dynamics tables: {many:?}",
                dir.display()
            )))
        }
    };
    let dyn_path = &files[&dyn_kind];
    let name = stem(dyn_path);
    let geo = match files.get(&FileKind::Geo) {
        Some(p) => read_geo(open(p)?)?,
        None if matches!(dyn_kind, FileKind::Grid | FileKind::GridOd) => GeoTable::default(),
        None => return Err(Error::InvalidArgument(format!("no .geo table in {}", dir.display()))),
    };
    let rel = files.get(&FileKind::Rel).map(|p| open(p).and_then(read_rel)).transpose()?;
    let ext = files.get(&FileKind::Ext).map(|p| open(p).and_then(read_dynamics)).transpose()?;
    let reader = open(dyn_path)?;
    let (dynamics, grid_dims) = match dyn_kind {
        FileKind::Dyna => (Dynamics::Graph(read_dynamics(reader)?), None),
        FileKind::Od => (Dynamics::GraphOd(read_dynamics(reader)?), None),
        FileKind::Grid => {
            let t: GridTable = read_dynamics(reader)?;
            let dims = grid_dims_for(&geo, t.keys().iter().copied());
            (Dynamics::Grid(t), Some(dims))
        }
        _ => {
            let t: GridOdTable = read_dynamics(reader)?;
            let dims = grid_dims_for(&geo, t.keys().iter().flat_map(|k| [k.origin, k.des]));
            (Dynamics::GridOd(t), Some(dims))
        }
    };
    DatasetBundle::new(name, geo, rel, dynamics, ext, grid_dims)
}

fn create(dir: &Path, name: &str, kind: FileKind) -> io::Result<BufWriter<File>> {
    let path = dir.join(format!("{name}.{}", kind.suffix()));
    Ok(BufWriter::with_capacity(READ_BUFFER, File::create(path)?))
}

/// Writes `<name>.geo`, `<name>.rel`, the dynamics table and `<name>.ext`
/// (the optional tables only when present).
pub fn save_bundle(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let name = &bundle.name;
    write_geo(&bundle.geo, create(dir, name, FileKind::Geo)?)?;
    if let Some(rel) = &bundle.rel {
        write_rel(rel, create(dir, name, FileKind::Rel)?)?;
    }
    let w = create(dir, name, bundle.kind().file_kind())?;
    match &bundle.dynamics {
        Dynamics::Graph(t) => write_dynamics(t, w)?,
        Dynamics::Grid(t) => write_dynamics(t, w)?,
        Dynamics::GraphOd(t) => write_dynamics(t, w)?,
        Dynamics::GridOd(t) => write_dynamics(t, w)?,
    }
    if let Some(ext) = &bundle.ext {
        write_dynamics(ext, create(dir, name, FileKind::Ext)?)?;
    }
    Ok(())
}
