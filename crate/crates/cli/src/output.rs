//! Deterministic writers: every float is printed with 17 significant digits
//! (`%.17g` style), so outputs are byte-comparable and round-trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{CompactFormatter, Formatter, PrettyFormatter};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// `v` with 17 significant digits, trailing zeros removed.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    if !v.is_finite() {
        return if v.is_nan() {
            "NaN".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let sci = format!("{v:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        trim_zeros(format!("{v:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

struct Fixed<F>(F);

impl<F: Formatter> Formatter for Fixed<F> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        let mut s = fmt17(value);
        if !s.contains(['.', 'e']) {
            s.push_str(".0");
        }
        writer.write_all(s.as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn to_json_pretty<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed(PrettyFormatter::new()));
    value.serialize(&mut ser).map_err(|e| CliError::internal(e.to_string()))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

pub fn to_json_compact<T: Serialize + ?Sized>(value: &T) -> Result<String, CliError> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fixed(CompactFormatter));
    value.serialize(&mut ser).map_err(|e| CliError::internal(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("json is utf-8"))
}

/// Collects written files for the manifest.
#[derive(Debug, Default)]
pub struct OutputDir {
    pub root: PathBuf,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
        self.written.push(p.clone());
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let text = to_json_pretty(value)?;
        self.write_text(name, &text)
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<PathBuf, CliError> {
        let p = self.path(name);
        table.write(&p)?;
        self.written.push(p.clone());
        Ok(p)
    }

    /// Updates `manifest.json` with the sha256 of every file written by this
    /// command; entries of earlier commands for other files are kept.
    pub fn write_manifest(&mut self, config_hash: &str, command: &str) -> Result<(), CliError> {
        let path = self.path("manifest.json");
        let mut files: BTreeMap<String, ManifestEntry> = BTreeMap::new();
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(old) = serde_json::from_str::<Manifest>(&text) {
                for e in old.files {
                    if self.root.join(&e.file).is_file() {
                        files.insert(e.file.clone(), e);
                    }
                }
            }
        }
        for p in &self.written {
            let bytes = fs::read(p).map_err(|e| CliError::io(p, e))?;
            let name = p.strip_prefix(&self.root).unwrap_or(p).to_string_lossy().into_owned();
            files.insert(
                name.clone(),
                ManifestEntry {
                    file: name,
                    sha256: sha256_hex(&bytes),
                    bytes: bytes.len() as u64,
                    command: command.to_string(),
                    config_hash: config_hash.to_string(),
                },
            );
        }
        let m = Manifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            files: files.into_values().collect(),
        };
        let text = to_json_pretty(&m)?;
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestEntry {
    file: String,
    sha256: String,
    bytes: u64,
    command: String,
    config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: String,
    files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV table; numbers go through [`fmt17`].
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub enum Cell<'a> {
    Num(f64),
    Int(i64),
    Text(&'a str),
    Bool(bool),
    Missing,
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt17(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Missing => String::new(),
        }
    }
}

impl From<f64> for Cell<'_> {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell<'_> {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell<'_> {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i32> for Cell<'_> {
    fn from(v: i32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u32> for Cell<'_> {
    fn from(v: u32) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell<'_> {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl<'a> From<&'a str> for Cell<'a> {
    fn from(v: &'a str) -> Self {
        Cell::Text(v)
    }
}

impl<'a> From<&'a String> for Cell<'a> {
    fn from(v: &'a String) -> Self {
        Cell::Text(v)
    }
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: Vec<Cell<'_>>) {
        debug_assert_eq!(cells.len(), self.header.len());
        self.rows.push(cells.iter().map(Cell::render).collect());
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let csv_err = |e: csv::Error| CliError::new("csv", e.to_string()).with("path", path.display().to_string());
        let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
        w.write_record(&self.header).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::io(path, e))
    }
}

/// Row-streaming CSV writer for large tables.
pub struct CsvStream {
    path: PathBuf,
    w: csv::Writer<fs::File>,
    record: Vec<String>,
}

impl CsvStream {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| CliError::new("csv", e.to_string()).with("path", path.display().to_string()))?;
        w.write_record(header)
            .map_err(|e| CliError::new("csv", e.to_string()).with("path", path.display().to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            w,
            record: Vec::with_capacity(header.len()),
        })
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) -> Result<(), CliError> {
        self.record.clear();
        self.record.extend(cells.iter().map(Cell::render));
        self.w
            .write_record(&self.record)
            .map_err(|e| CliError::new("csv", e.to_string()).with("path", self.path.display().to_string()))
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.w.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.1), "0.10000000000000001");
        assert_eq!(fmt17(1.0), "1");
        assert_eq!(fmt17(-2.5), "-2.5");
        assert_eq!(fmt17(266.1), "266.10000000000002");
        assert_eq!(fmt17(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt17(1e20), "1e20");
        assert_eq!(fmt17(143604.0), "143604");
    }

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, std::f64::consts::PI * 1e-9, 6.02214076e23, -1234.5678] {
            assert_eq!(fmt17(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn json_floats() {
        let s = to_json_compact(&serde_json::json!({"a": 0.1, "b": 2.0, "c": 3})).unwrap();
        assert_eq!(s, r#"{"a":0.10000000000000001,"b":2.0,"c":3}"#);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["a"].as_f64(), Some(0.1));
    }
}
