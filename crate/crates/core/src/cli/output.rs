//! CSV and JSON writers.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which parses
//! back to the same `f64`. CSV files start with a `# ` comment line holding
//! a JSON object with the command, the seed and the resolved
//! configuration; JSON files carry the same fields at top level.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::ser::Formatter;

use super::config::SimConfig;

/// `{:.16e}` for finite values; `NaN`, `inf`, `-inf` otherwise.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct SeventeenDigits;

impl Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        write!(w, "{:.16e}", v as f64)
    }
}

/// Compact JSON with 17-significant-digit floats.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SeventeenDigits);
    value.serialize(&mut ser).expect("serializable value");
    String::from_utf8(buf).expect("utf-8 json")
}

/// Provenance written at the top of every output.
#[derive(Debug, Clone, Serialize)]
pub struct Header<'a> {
    pub command: String,
    pub seed: u64,
    pub config: &'a SimConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Num)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<&str>> for Cell {
    fn from(v: Option<&str>) -> Self {
        v.map_or(Cell::Empty, |s| Cell::Text(s.to_string()))
    }
}

/// Coordinates of a point; components joined by `;` in 2-d.
pub fn point_cell(p: &[f64]) -> Cell {
    if p.len() == 1 {
        Cell::Num(p[0])
    } else {
        Cell::Text(p.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

pub fn render_csv(header: &Header, table: &Table) -> String {
    let mut s = String::new();
    s.push_str("# ");
    s.push_str(&to_json(header));
    s.push('\n');
    s.push_str(&table.columns.join(","));
    s.push('\n');
    for row in &table.rows {
        let cells: Vec<String> = row.iter().map(Cell::render).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// JSON document: the header fields plus `key: payload`.
pub fn render_json<T: Serialize + ?Sized>(header: &Header, key: &str, payload: &T) -> String {
    let mut doc = to_json(header);
    doc.pop();
    doc.push(',');
    doc.push_str(&to_json(key));
    doc.push(':');
    doc.push_str(&to_json(payload));
    doc.push_str("}\n");
    doc
}

/// Writes `text` to `path`, or stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, text: &str) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()
        }
    }
}

/// A CSV file split into its header object, column names and raw cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCsv {
    pub header: serde_json::Value,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub fn parse_csv(text: &str) -> Result<ParsedCsv, String> {
    let mut lines = text.lines();
    let first = lines.next().ok_or("empty file")?;
    let json = first.strip_prefix("# ").ok_or("missing header comment")?;
    let header = serde_json::from_str(json).map_err(|e| e.to_string())?;
    let columns = lines.next().ok_or("missing column line")?.split(',').map(str::to_string).collect();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    Ok(ParsedCsv { header, columns, rows })
}
