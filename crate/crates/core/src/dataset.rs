//! Dataset container, its two on-disk formats, and wafer-grid export.
//!
//! # Text format
//!
//! Line oriented, one record per line, `key=value` fields separated by
//! whitespace, lists comma separated. `#` starts a comment line.
//!
//! ```text
//! jjchar-dataset 1
//! units capacitance=fF voltage=V current=A resistance=MOhm length=um
//! wafer label=ref rows=14 cols=14 etch=20
//! areas 1,5,25,50
//! cap row=0 col=5 area=50 c=1012.5
//! cap row=0 col=6 area=50 c=invalid
//! iv row=0 col=5 area=25 v=0.01,0.02,0.03 i=1.5e-11,3.1e-11,4.6e-11
//! res w_top=5 w_bot=5 h=0.12 r=421.4
//! ramp row=0 col=5 area=25 step=0.01 rate=0.07 v=0.01,0.02 i=1e-11,2e-11
//! ```
//!
//! The header and the `units` line must precede every record. Accepted units:
//! capacitance `aF fF pF nF F`, voltage `mV V`, current `pA nA uA mA A`,
//! resistance `Ohm kOhm MOhm GOhm`, length `nm um mm`. Values are converted
//! on ingest; the writer always emits `fF V A MOhm um`. Unknown fields of
//! known records are kept as extras, unknown record kinds are kept verbatim.
//!
//! # JSON format
//!
//! The serde representation of [`DatasetFile`] with a mandatory `units`
//! object; unknown fields are kept at every level.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error as ThisError;

use crate::breakdown::RampTrace;
use crate::capacitance::{wafer_statistics, Cell, WaferMap};
use crate::geometry::JunctionGeometry;
use crate::resistance::{ResistanceDataset, ResistanceRecord};
use crate::synthetic::SyntheticDataset;
use crate::transport::IvCurve;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "jjchar-dataset";

pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestErrorKind {
    Parse,
    Schema,
    Unit,
}

#[derive(Debug, ThisError)]
pub enum IngestError {
    #[error("{kind:?} error at {location}: {message}")]
    Invalid {
        kind: IngestErrorKind,
        location: String,
        message: String,
    },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl IngestError {
    fn at(kind: IngestErrorKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        IngestError::Invalid {
            kind,
            location: location.into(),
            message: message.into(),
        }
    }

    pub fn kind(&self) -> Option<IngestErrorKind> {
        match self {
            IngestError::Invalid { kind, .. } => Some(*kind),
            IngestError::Io { .. } => None,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        IngestError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Json,
}

impl Format {
    /// `.json` files are JSON, everything else text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Text,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Text => "jjd",
            Format::Json => "json",
        }
    }
}

/// Declared measurement units.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Units {
    pub capacitance: String,
    pub voltage: String,
    pub current: String,
    pub resistance: String,
    pub length: String,
}

impl Default for Units {
    fn default() -> Self {
        Self {
            capacitance: "fF".into(),
            voltage: "V".into(),
            current: "A".into(),
            resistance: "MOhm".into(),
            length: "um".into(),
        }
    }
}

/// Multipliers from declared to canonical units.
#[derive(Debug, Clone, Copy)]
struct Scale {
    c: f64,
    v: f64,
    i: f64,
    r: f64,
    l: f64,
}

impl Units {
    fn scale(&self) -> Result<Scale, String> {
        fn pick(q: &str, u: &str, table: &[(&str, f64)]) -> Result<f64, String> {
            table
                .iter()
                .find(|(n, _)| *n == u)
                .map(|&(_, f)| f)
                .ok_or_else(|| format!("unknown {q} unit '{u}'"))
        }
        Ok(Scale {
            c: pick(
                "capacitance",
                &self.capacitance,
                &[("aF", 1e-3), ("fF", 1.0), ("pF", 1e3), ("nF", 1e6), ("F", 1e15)],
            )?,
            v: pick("voltage", &self.voltage, &[("mV", 1e-3), ("V", 1.0)])?,
            i: pick(
                "current",
                &self.current,
                &[("pA", 1e-12), ("nA", 1e-9), ("uA", 1e-6), ("mA", 1e-3), ("A", 1.0)],
            )?,
            r: pick(
                "resistance",
                &self.resistance,
                &[("Ohm", 1e-6), ("kOhm", 1e-3), ("MOhm", 1.0), ("GOhm", 1e3)],
            )?,
            l: pick("length", &self.length, &[("nm", 1e-3), ("um", 1.0), ("mm", 1e3)])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaferMeta {
    pub label: String,
    /// Etch time [s].
    #[serde(default)]
    pub etch_s: Option<f64>,
    pub rows: u32,
    pub cols: u32,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapRecord {
    pub row: u32,
    pub col: u32,
    /// [µm²]
    pub area: f64,
    /// [fF]; `None` for a die the prober flagged invalid.
    pub c: Option<f64>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvRecord {
    pub row: u32,
    pub col: u32,
    pub area: f64,
    /// (V, A)
    pub points: Vec<(f64, f64)>,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResRecord {
    pub w_top: f64,
    pub w_bot: f64,
    pub h: f64,
    /// [MΩ]
    pub r: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampRecord {
    pub row: u32,
    pub col: u32,
    pub area: f64,
    pub step: f64,
    pub rate: f64,
    pub points: Vec<(f64, f64)>,
    #[serde(flatten)]
    pub extra: Extra,
}

/// In-memory dataset, always in canonical units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub version: u32,
    pub units: Units,
    pub wafer: WaferMeta,
    #[serde(default)]
    pub cap_areas: Vec<f64>,
    #[serde(default)]
    pub capacitance: Vec<CapRecord>,
    #[serde(default)]
    pub iv: Vec<IvRecord>,
    #[serde(default)]
    pub resistance: Vec<ResRecord>,
    #[serde(default)]
    pub ramps: Vec<RampRecord>,
    /// Text lines of unknown record kinds.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unknown_lines: Vec<String>,
    #[serde(flatten)]
    pub extra: Extra,
}

fn finite(name: &str, v: f64) -> Result<(), String> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} is not finite"))
    }
}

fn positive(name: &str, v: f64) -> Result<(), String> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(format!("{name} must be > 0, got {v}"))
    }
}

impl WaferMeta {
    fn check_die(&self, row: u32, col: u32) -> Result<(), String> {
        if row >= self.rows || col >= self.cols {
            return Err(format!(
                "die ({row}, {col}) outside the {}x{} grid",
                self.rows, self.cols
            ));
        }
        Ok(())
    }
}

impl CapRecord {
    fn check(&self, meta: &WaferMeta, areas: &[f64]) -> Result<(), String> {
        meta.check_die(self.row, self.col)?;
        if !areas.contains(&self.area) {
            return Err(format!("area {} is not declared", self.area));
        }
        if let Some(c) = self.c {
            positive("capacitance", c)?;
        }
        Ok(())
    }
}

impl IvRecord {
    fn check(&self, meta: &WaferMeta) -> Result<(), String> {
        meta.check_die(self.row, self.col)?;
        self.to_curve().map(|_| ()).map_err(|e| e.to_string())
    }

    pub fn to_curve(&self) -> crate::Result<IvCurve> {
        IvCurve::new(self.points.clone(), self.area, Some((self.row, self.col)))
    }
}

impl ResRecord {
    fn check(&self) -> Result<(), String> {
        self.to_record().map(|_| ()).map_err(|e| e.to_string())
    }

    pub fn to_record(&self) -> crate::Result<ResistanceRecord> {
        ResistanceRecord::new(JunctionGeometry::new(self.w_top, self.w_bot, self.h)?, self.r)
    }
}

impl RampRecord {
    fn check(&self, meta: &WaferMeta) -> Result<(), String> {
        meta.check_die(self.row, self.col)?;
        self.to_trace().map(|_| ()).map_err(|e| e.to_string())
    }

    pub fn to_trace(&self) -> crate::Result<RampTrace> {
        RampTrace::new(
            self.points.clone(),
            self.step,
            self.rate,
            self.area,
            Some((self.row, self.col)),
        )
    }
}

impl DatasetFile {
    pub fn new(wafer: WaferMeta) -> Self {
        Self {
            version: FORMAT_VERSION,
            units: Units::default(),
            wafer,
            cap_areas: Vec::new(),
            capacitance: Vec::new(),
            iv: Vec::new(),
            resistance: Vec::new(),
            ramps: Vec::new(),
            unknown_lines: Vec::new(),
            extra: Extra::new(),
        }
    }

    /// Checks every record; the error names the offending record.
    pub fn validate(&self) -> Result<(), IngestError> {
        let schema = |loc: String, m: String| IngestError::at(IngestErrorKind::Schema, loc, m);
        self.check_header().map_err(|m| schema("header".into(), m))?;
        let mut seen = std::collections::BTreeSet::new();
        for (i, r) in self.capacitance.iter().enumerate() {
            r.check(&self.wafer, &self.cap_areas)
                .map_err(|m| schema(format!("capacitance record {i}"), m))?;
            if !seen.insert((r.row, r.col, r.area.to_bits())) {
                return Err(schema(
                    format!("capacitance record {i}"),
                    "duplicate die and area".into(),
                ));
            }
        }
        for (i, r) in self.iv.iter().enumerate() {
            r.check(&self.wafer).map_err(|m| schema(format!("iv record {i}"), m))?;
        }
        for (i, r) in self.resistance.iter().enumerate() {
            r.check().map_err(|m| schema(format!("resistance record {i}"), m))?;
        }
        for (i, r) in self.ramps.iter().enumerate() {
            r.check(&self.wafer)
                .map_err(|m| schema(format!("ramp record {i}"), m))?;
        }
        Ok(())
    }

    fn check_header(&self) -> Result<(), String> {
        if self.version != FORMAT_VERSION {
            return Err(format!("unsupported version {}", self.version));
        }
        if self.wafer.rows == 0 || self.wafer.cols == 0 {
            return Err("wafer grid must be at least 1x1".into());
        }
        if let Some(e) = self.wafer.etch_s {
            finite("etch", e)?;
        }
        for &a in &self.cap_areas {
            positive("declared area", a)?;
        }
        Ok(())
    }

    /// Builds the dataset of a synthetic wafer.
    pub fn from_synthetic(d: &SyntheticDataset) -> Self {
        let mut f = Self::new(WaferMeta {
            label: d.spec.label.clone(),
            etch_s: d.spec.etch_s,
            rows: d.spec.rows as u32,
            cols: d.spec.cols as u32,
            extra: Extra::new(),
        });
        f.cap_areas = d.capacitance.iter().map(|m| m.area).collect();
        for map in &d.capacitance {
            for (r, c, cell) in map.iter() {
                let value = match cell {
                    Cell::NotProbed => continue,
                    Cell::Invalid => None,
                    Cell::Valid(v) => Some(*v),
                };
                f.capacitance.push(CapRecord {
                    row: r as u32,
                    col: c as u32,
                    area: map.area,
                    c: value,
                    extra: Extra::new(),
                });
            }
        }
        f.iv =
            d.iv.iter()
                .map(|iv| {
                    let (row, col) = iv.die.unwrap_or((0, 0));
                    IvRecord {
                        row,
                        col,
                        area: iv.area,
                        points: iv.points().to_vec(),
                        extra: Extra::new(),
                    }
                })
                .collect();
        f.resistance = d
            .resistance
            .records
            .iter()
            .map(|r| ResRecord {
                w_top: r.geometry.w_top(),
                w_bot: r.geometry.w_bot(),
                h: r.geometry.h(),
                r: r.r,
                extra: Extra::new(),
            })
            .collect();
        f.ramps = d
            .ramps
            .iter()
            .map(|t| {
                let (row, col) = t.die.unwrap_or((0, 0));
                RampRecord {
                    row,
                    col,
                    area: t.area,
                    step: t.step,
                    rate: t.rate,
                    points: t.points().to_vec(),
                    extra: Extra::new(),
                }
            })
            .collect();
        f
    }

    /// One wafer map per declared area, ascending by area.
    pub fn capacitance_maps(&self) -> crate::Result<Vec<WaferMap<f64>>> {
        let mut areas = self.cap_areas.clone();
        areas.sort_by(f64::total_cmp);
        areas.dedup();
        let mut maps = Vec::new();
        for a in areas {
            let mut map = WaferMap::new(
                self.wafer.rows as usize,
                self.wafer.cols as usize,
                a,
                self.wafer.label.clone(),
            )?;
            let mut any = false;
            for r in self.capacitance.iter().filter(|r| r.area == a) {
                any = true;
                map.set(r.row as usize, r.col as usize, r.c.map_or(Cell::Invalid, Cell::Valid));
            }
            if any {
                maps.push(map);
            }
        }
        Ok(maps)
    }

    pub fn iv_curves(&self) -> crate::Result<Vec<IvCurve>> {
        self.iv.iter().map(IvRecord::to_curve).collect()
    }

    pub fn resistance_dataset(&self) -> crate::Result<ResistanceDataset> {
        Ok(ResistanceDataset::new(
            self.resistance
                .iter()
                .map(ResRecord::to_record)
                .collect::<crate::Result<_>>()?,
        ))
    }

    pub fn ramp_traces(&self) -> crate::Result<Vec<RampTrace>> {
        self.ramps.iter().map(RampRecord::to_trace).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes") + "\n"
    }

    pub fn from_json(s: &str) -> Result<Self, IngestError> {
        let v: Value = serde_json::from_str(s)
            .map_err(|e| IngestError::at(IngestErrorKind::Parse, format!("line {}", e.line()), e.to_string()))?;
        let units = v
            .get("units")
            .ok_or_else(|| IngestError::at(IngestErrorKind::Unit, "units", "units are not declared"))?;
        let units: Units = serde_json::from_value(units.clone())
            .map_err(|e| IngestError::at(IngestErrorKind::Unit, "units", e.to_string()))?;
        let scale = units
            .scale()
            .map_err(|m| IngestError::at(IngestErrorKind::Unit, "units", m))?;
        let mut f: DatasetFile = serde_json::from_value(v)
            .map_err(|e| IngestError::at(IngestErrorKind::Schema, "document", e.to_string()))?;
        f.canonicalize(scale);
        f.validate()?;
        Ok(f)
    }

    fn canonicalize(&mut self, s: Scale) {
        let a = s.l * s.l;
        self.units = Units::default();
        for x in &mut self.cap_areas {
            *x *= a;
        }
        for r in &mut self.capacitance {
            r.area *= a;
            r.c = r.c.map(|c| c * s.c);
        }
        let scale_points = |pts: &mut Vec<(f64, f64)>| {
            for p in pts {
                p.0 *= s.v;
                p.1 *= s.i;
            }
        };
        for r in &mut self.iv {
            r.area *= a;
            scale_points(&mut r.points);
        }
        for r in &mut self.ramps {
            r.area *= a;
            r.step *= s.v;
            r.rate *= s.v;
            scale_points(&mut r.points);
        }
        for r in &mut self.resistance {
            r.w_top *= s.l;
            r.w_bot *= s.l;
            r.h *= s.l;
            r.r *= s.r;
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let u = &self.units;
        let _ = writeln!(out, "{MAGIC} {}", self.version);
        let _ = writeln!(
            out,
            "units capacitance={} voltage={} current={} resistance={} length={}",
            u.capacitance, u.voltage, u.current, u.resistance, u.length
        );
        let w = &self.wafer;
        let mut line = format!("wafer label={} rows={} cols={}", w.label, w.rows, w.cols);
        if let Some(e) = w.etch_s {
            let _ = write!(line, " etch={e}");
        }
        push_extra(&mut line, &w.extra);
        let _ = writeln!(out, "{line}");
        for (k, v) in &self.extra {
            let _ = writeln!(out, "meta {k}={}", extra_text(v));
        }
        if !self.cap_areas.is_empty() {
            let _ = writeln!(out, "areas {}", join(self.cap_areas.iter().copied()));
        }
        for r in &self.capacitance {
            let c = r.c.map_or("invalid".to_string(), |c| c.to_string());
            let mut line = format!("cap row={} col={} area={} c={c}", r.row, r.col, r.area);
            push_extra(&mut line, &r.extra);
            let _ = writeln!(out, "{line}");
        }
        for r in &self.iv {
            let mut line = format!("iv row={} col={} area={}", r.row, r.col, r.area);
            push_points(&mut line, &r.points);
            push_extra(&mut line, &r.extra);
            let _ = writeln!(out, "{line}");
        }
        for r in &self.resistance {
            let mut line = format!("res w_top={} w_bot={} h={} r={}", r.w_top, r.w_bot, r.h, r.r);
            push_extra(&mut line, &r.extra);
            let _ = writeln!(out, "{line}");
        }
        for r in &self.ramps {
            let mut line = format!(
                "ramp row={} col={} area={} step={} rate={}",
                r.row, r.col, r.area, r.step, r.rate
            );
            push_points(&mut line, &r.points);
            push_extra(&mut line, &r.extra);
            let _ = writeln!(out, "{line}");
        }
        for l in &self.unknown_lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }

    pub fn from_text(s: &str) -> Result<Self, IngestError> {
        TextParser::default().parse(s)
    }

    pub fn serialize(&self, format: Format) -> String {
        match format {
            Format::Text => self.to_text(),
            Format::Json => self.to_json(),
        }
    }

    pub fn parse(s: &str, format: Format) -> Result<Self, IngestError> {
        match format {
            Format::Text => Self::from_text(s),
            Format::Json => Self::from_json(s),
        }
    }
}

fn join(xs: impl Iterator<Item = f64>) -> String {
    xs.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn push_points(line: &mut String, pts: &[(f64, f64)]) {
    let _ = write!(
        line,
        " v={} i={}",
        join(pts.iter().map(|p| p.0)),
        join(pts.iter().map(|p| p.1))
    );
}

fn extra_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn push_extra(line: &mut String, extra: &Extra) {
    for (k, v) in extra {
        let _ = write!(line, " {k}={}", extra_text(v));
    }
}

/// Reads a dataset file, inferring nothing: the format is explicit.
pub fn ingest(path: &Path, format: Format) -> Result<DatasetFile, IngestError> {
    let s = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    DatasetFile::parse(&s, format)
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_dataset(d: &DatasetFile, path: &Path, format: Format) -> Result<(), IngestError> {
    write_atomic(path, d.serialize(format).as_bytes()).map_err(|e| IngestError::io(path, e))
}

#[derive(Default)]
struct TextParser {
    file: Option<DatasetFile>,
    scale: Option<Scale>,
    header_seen: bool,
}

type Fields = Vec<(String, String)>;

fn take(fields: &mut Fields, key: &str) -> Result<String, String> {
    let i = fields
        .iter()
        .position(|(k, _)| k == key)
        .ok_or_else(|| format!("missing field '{key}'"))?;
    Ok(fields.remove(i).1)
}

/// Malformed tokens are parse errors; missing fields and violated
/// invariants are schema errors.
enum FieldError {
    Parse(String),
    Schema(String),
}

impl From<String> for FieldError {
    fn from(m: String) -> Self {
        FieldError::Schema(m)
    }
}

impl FieldError {
    fn at(self, loc: &str) -> IngestError {
        match self {
            FieldError::Parse(m) => IngestError::at(IngestErrorKind::Parse, loc, m),
            FieldError::Schema(m) => IngestError::at(IngestErrorKind::Schema, loc, m),
        }
    }
}

fn parse_f64(key: &str, s: &str) -> Result<f64, FieldError> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| FieldError::Parse(format!("field '{key}': '{s}' is not a number")))?;
    finite(key, v)?;
    Ok(v)
}

fn num(fields: &mut Fields, key: &str) -> Result<f64, FieldError> {
    parse_f64(key, &take(fields, key)?)
}

fn int(fields: &mut Fields, key: &str) -> Result<u32, FieldError> {
    let s = take(fields, key)?;
    s.parse()
        .map_err(|_| FieldError::Parse(format!("field '{key}': '{s}' is not a non-negative integer")))
}

fn list(fields: &mut Fields, key: &str) -> Result<Vec<f64>, FieldError> {
    take(fields, key)?.split(',').map(|t| parse_f64(key, t)).collect()
}

fn points(fields: &mut Fields, scale: &Scale) -> Result<Vec<(f64, f64)>, FieldError> {
    let v = list(fields, "v")?;
    let i = list(fields, "i")?;
    if v.len() != i.len() {
        return Err(format!("v has {} entries, i has {}", v.len(), i.len()).into());
    }
    Ok(v.into_iter().zip(i).map(|(v, i)| (v * scale.v, i * scale.i)).collect())
}

fn extras(fields: Fields) -> Extra {
    fields.into_iter().map(|(k, v)| (k, Value::String(v))).collect()
}

impl TextParser {
    fn parse(mut self, s: &str) -> Result<DatasetFile, IngestError> {
        for (idx, raw) in s.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            self.line(line, idx + 1)?;
        }
        if !self.header_seen {
            return Err(IngestError::at(
                IngestErrorKind::Parse,
                "line 1",
                format!("missing '{MAGIC}' header"),
            ));
        }
        let f = self
            .file
            .ok_or_else(|| IngestError::at(IngestErrorKind::Schema, "end of file", "no 'wafer' line"))?;
        f.validate()?;
        Ok(f)
    }

    fn line(&mut self, line: &str, n: usize) -> Result<(), IngestError> {
        let loc = format!("line {n}");
        let mut tokens = line.split_whitespace();
        let kind = tokens.next().unwrap_or_default();
        if !self.header_seen {
            if kind != MAGIC {
                return Err(IngestError::at(
                    IngestErrorKind::Parse,
                    loc,
                    format!("expected '{MAGIC} <version>'"),
                ));
            }
            let v: u32 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| IngestError::at(IngestErrorKind::Parse, &loc, "missing version number"))?;
            if v != FORMAT_VERSION {
                return Err(IngestError::at(
                    IngestErrorKind::Schema,
                    loc,
                    format!("unsupported version {v}"),
                ));
            }
            self.header_seen = true;
            return Ok(());
        }
        let rest: Vec<&str> = tokens.collect();
        if kind == "areas" {
            let file_scale = self
                .scale
                .ok_or_else(|| IngestError::at(IngestErrorKind::Unit, &loc, "units are not declared"))?;
            let file = self.file_mut(&loc)?;
            for t in rest.iter().flat_map(|t| t.split(',')).filter(|t| !t.is_empty()) {
                let a: f64 = t
                    .parse::<f64>()
                    .map(|a| a * file_scale.l * file_scale.l)
                    .map_err(|_| IngestError::at(IngestErrorKind::Parse, &loc, format!("'{t}' is not a number")))?;
                file.cap_areas.push(a);
            }
            return Ok(());
        }
        let mut fields: Fields = Vec::new();
        for t in &rest {
            let (k, v) = t.split_once('=').ok_or_else(|| {
                IngestError::at(IngestErrorKind::Parse, &loc, format!("token '{t}' is not key=value"))
            })?;
            fields.push((k.to_string(), v.to_string()));
        }
        let schema = |m: String| IngestError::at(IngestErrorKind::Schema, &loc, m);
        match kind {
            "units" => {
                if self.scale.is_some() {
                    return Err(IngestError::at(IngestErrorKind::Unit, loc, "units declared twice"));
                }
                let unit_err = |m: String| IngestError::at(IngestErrorKind::Unit, &loc, m);
                let units = Units {
                    capacitance: take(&mut fields, "capacitance").map_err(unit_err)?,
                    voltage: take(&mut fields, "voltage").map_err(unit_err)?,
                    current: take(&mut fields, "current").map_err(unit_err)?,
                    resistance: take(&mut fields, "resistance").map_err(unit_err)?,
                    length: take(&mut fields, "length").map_err(unit_err)?,
                };
                if let Some((k, _)) = fields.first() {
                    return Err(unit_err(format!("unknown quantity '{k}'")));
                }
                self.scale = Some(units.scale().map_err(unit_err)?);
            }
            "wafer" => {
                if self.scale.is_none() {
                    return Err(IngestError::at(IngestErrorKind::Unit, loc, "units are not declared"));
                }
                if self.file.is_some() {
                    return Err(schema("second 'wafer' line".into()));
                }
                let meta = (|| -> Result<WaferMeta, FieldError> {
                    let label = take(&mut fields, "label")?;
                    let rows = int(&mut fields, "rows")?;
                    let cols = int(&mut fields, "cols")?;
                    let etch_s = if fields.iter().any(|(k, _)| k == "etch") {
                        Some(num(&mut fields, "etch")?)
                    } else {
                        None
                    };
                    Ok(WaferMeta {
                        label,
                        etch_s,
                        rows,
                        cols,
                        extra: extras(fields),
                    })
                })()
                .map_err(|e| e.at(&loc))?;
                let f = DatasetFile::new(meta);
                f.check_header().map_err(schema)?;
                self.file = Some(f);
            }
            "meta" => {
                let file = self.file_mut(&loc)?;
                file.extra.extend(extras(fields));
            }
            "cap" | "iv" | "res" | "ramp" => self.record(kind, fields, &loc)?,
            _ => {
                self.file_mut(&loc)?.unknown_lines.push(line.to_string());
            }
        }
        Ok(())
    }

    fn file_mut(&mut self, loc: &str) -> Result<&mut DatasetFile, IngestError> {
        if self.scale.is_none() {
            return Err(IngestError::at(IngestErrorKind::Unit, loc, "units are not declared"));
        }
        match self.file.as_mut() {
            Some(f) => Ok(f),
            None => Err(IngestError::at(
                IngestErrorKind::Schema,
                loc,
                "record before the 'wafer' line",
            )),
        }
    }

    fn record(&mut self, kind: &str, mut fields: Fields, loc: &str) -> Result<(), IngestError> {
        let scale = match self.scale {
            Some(s) => s,
            None => return Err(IngestError::at(IngestErrorKind::Unit, loc, "units are not declared")),
        };
        let f = self.file_mut(loc)?;
        let a = scale.l * scale.l;
        let err = |m: String| IngestError::at(IngestErrorKind::Schema, loc, m);
        match kind {
            "cap" => {
                let rec = (|| -> Result<CapRecord, FieldError> {
                    let row = int(&mut fields, "row")?;
                    let col = int(&mut fields, "col")?;
                    let area = num(&mut fields, "area")? * a;
                    let c = match take(&mut fields, "c")?.as_str() {
                        "invalid" => None,
                        s => Some(parse_f64("c", s)? * scale.c),
                    };
                    let r = CapRecord {
                        row,
                        col,
                        area,
                        c,
                        extra: extras(fields),
                    };
                    r.check(&f.wafer, &f.cap_areas)?;
                    Ok(r)
                })()
                .map_err(|e| e.at(loc))?;
                if f.capacitance
                    .iter()
                    .any(|r| (r.row, r.col, r.area) == (rec.row, rec.col, rec.area))
                {
                    return Err(err("duplicate die and area".into()));
                }
                f.capacitance.push(rec);
            }
            "iv" => {
                let rec = (|| -> Result<IvRecord, FieldError> {
                    let row = int(&mut fields, "row")?;
                    let col = int(&mut fields, "col")?;
                    let area = num(&mut fields, "area")? * a;
                    let points = points(&mut fields, &scale)?;
                    let r = IvRecord {
                        row,
                        col,
                        area,
                        points,
                        extra: extras(fields),
                    };
                    r.check(&f.wafer)?;
                    Ok(r)
                })()
                .map_err(|e| e.at(loc))?;
                f.iv.push(rec);
            }
            "res" => {
                let rec = (|| -> Result<ResRecord, FieldError> {
                    let r = ResRecord {
                        w_top: num(&mut fields, "w_top")? * scale.l,
                        w_bot: num(&mut fields, "w_bot")? * scale.l,
                        h: num(&mut fields, "h")? * scale.l,
                        r: num(&mut fields, "r")? * scale.r,
                        extra: Extra::new(),
                    };
                    let r = ResRecord {
                        extra: extras(fields),
                        ..r
                    };
                    r.check()?;
                    Ok(r)
                })()
                .map_err(|e| e.at(loc))?;
                f.resistance.push(rec);
            }
            _ => {
                let rec = (|| -> Result<RampRecord, FieldError> {
                    let row = int(&mut fields, "row")?;
                    let col = int(&mut fields, "col")?;
                    let area = num(&mut fields, "area")? * a;
                    let step = num(&mut fields, "step")? * scale.v;
                    let rate = num(&mut fields, "rate")? * scale.v;
                    let points = points(&mut fields, &scale)?;
                    let r = RampRecord {
                        row,
                        col,
                        area,
                        step,
                        rate,
                        points,
                        extra: extras(fields),
                    };
                    r.check(&f.wafer)?;
                    Ok(r)
                })()
                .map_err(|e| e.at(loc))?;
                f.ramps.push(rec);
            }
        }
        Ok(())
    }
}

/// Fixed-notation rendering with 17 significant digits.
pub fn format_17(x: f64) -> String {
    if x == 0.0 {
        return format!("{:.16}", 0.0);
    }
    let sci = format!("{x:.16e}");
    let exp: i32 = sci.rsplit('e').next().and_then(|e| e.parse().ok()).unwrap_or(0);
    let decimals = (16 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Comma-separated grid, one line per wafer row, empty cells for invalid or
/// unprobed dies.
pub fn render_grid(map: &WaferMap<f64>) -> String {
    let mut out = String::new();
    for r in 0..map.rows() {
        let cells: Vec<String> = (0..map.cols())
            .map(|c| map.get(r, c).value().map_or(String::new(), |v| format_17(*v)))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Sidecar description of an exported grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub label: String,
    pub quantity: String,
    pub unit: String,
    /// [µm²]
    pub area: f64,
    pub rows: usize,
    pub cols: usize,
    pub mean: Option<f64>,
    pub rsd_pct: Option<f64>,
    pub yield_pct: Option<f64>,
    pub n_valid: usize,
    pub n_probed: usize,
    /// Probed dies flagged invalid, (row, col).
    pub invalid: Vec<(usize, usize)>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn grid_meta(map: &WaferMap<f64>, quantity: &str, unit: &str) -> GridMeta {
    let stats = wafer_statistics(map).ok();
    GridMeta {
        label: map.label.clone(),
        quantity: quantity.into(),
        unit: unit.into(),
        area: map.area,
        rows: map.rows(),
        cols: map.cols(),
        mean: stats.map(|s| s.mean),
        rsd_pct: stats.map(|s| s.rsd),
        yield_pct: stats.map(|s| s.yield_pct),
        n_valid: map.valid_count(),
        n_probed: map.probed_count(),
        invalid: map
            .iter()
            .filter(|(_, _, c)| matches!(c, Cell::Invalid))
            .map(|(r, c, _)| (r, c))
            .collect(),
    }
}

/// Writes the grid and its `.meta.json` sidecar, both atomically.
pub fn export_wafer_grid(map: &WaferMap<f64>, quantity: &str, unit: &str, path: &Path) -> std::io::Result<GridMeta> {
    let meta = grid_meta(map, quantity, unit);
    write_atomic(path, render_grid(map).as_bytes())?;
    let json = serde_json::to_string_pretty(&meta).expect("grid metadata serializes") + "\n";
    write_atomic(&sidecar_path(path), json.as_bytes())?;
    Ok(meta)
}

/// Parses a grid; with metadata, empty cells listed as invalid become
/// [`Cell::Invalid`] and the rest [`Cell::NotProbed`].
pub fn parse_grid(text: &str, meta: Option<&GridMeta>) -> Result<WaferMap<f64>, IngestError> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let loc = format!("line {}", i + 1);
        let row = line
            .split(',')
            .map(|t| match t.trim() {
                "" => Ok(Cell::NotProbed),
                s => s
                    .parse::<f64>()
                    .map(Cell::Valid)
                    .map_err(|_| IngestError::at(IngestErrorKind::Parse, &loc, format!("'{s}' is not a number"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    let (area, label) = meta.map_or((f64::NAN, String::new()), |m| (m.area, m.label.clone()));
    let mut map = WaferMap::from_rows(rows, area, label)
        .map_err(|e| IngestError::at(IngestErrorKind::Schema, "grid", e.to_string()))?;
    if let Some(m) = meta {
        if (m.rows, m.cols) != (map.rows(), map.cols()) {
            return Err(IngestError::at(
                IngestErrorKind::Schema,
                "grid",
                "grid shape differs from its metadata",
            ));
        }
        for &(r, c) in &m.invalid {
            if r >= map.rows() || c >= map.cols() || map.get(r, c).is_probed() {
                return Err(IngestError::at(
                    IngestErrorKind::Schema,
                    "metadata",
                    format!("bad invalid cell ({r}, {c})"),
                ));
            }
            map.set(r, c, Cell::Invalid);
        }
    }
    Ok(map)
}

/// Reads a grid written by [`export_wafer_grid`], with its sidecar if present.
pub fn read_wafer_grid(path: &Path) -> Result<(WaferMap<f64>, Option<GridMeta>), IngestError> {
    let text = std::fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    let side = sidecar_path(path);
    let meta = if side.exists() {
        let s = std::fs::read_to_string(&side).map_err(|e| IngestError::io(&side, e))?;
        Some(
            serde_json::from_str::<GridMeta>(&s)
                .map_err(|e| IngestError::at(IngestErrorKind::Parse, "metadata", e.to_string()))?,
        )
    } else {
        None
    };
    let map = parse_grid(&text, meta.as_ref())?;
    Ok((map, meta))
}
