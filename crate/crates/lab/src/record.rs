//! Run records and their on-disk forms.
//!
//! A record is written as `result.json` (the structured document), one CSV
//! file per table, and optional SVG plots. Wall-clock timing goes to a
//! separate `timing.json` so that the document itself is reproducible byte
//! for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;
use crate::error::{LabError, LabResult};
use crate::plot;

pub const TOOL_NAME: &str = "cahn-lab";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum Cell {
    Int(i64),
    Num(#[serde(serialize_with = "finite_or_text")] f64),
    Text(String),
    Bool(bool),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Num(x) => Some(*x),
            Cell::Int(i) => Some(*i as f64),
            Cell::Text(s) => match s.as_str() {
                "NaN" => Some(f64::NAN),
                "inf" => Some(f64::INFINITY),
                "-inf" => Some(f64::NEG_INFINITY),
                _ => None,
            },
            Cell::Bool(_) => None,
        }
    }

    /// CSV rendering; floats use the shortest decimal that parses back to the same `f64`.
    pub fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Num(x) => render_f64(*x),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}
impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}
impl From<i64> for Cell {
    fn from(x: i64) -> Self {
        Cell::Int(x)
    }
}
impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}
impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}
impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

// JSON has no NaN or infinity; those are written as the strings used in CSV
fn finite_or_text<S: serde::Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str(&render_f64(*x))
    }
}

pub fn render_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width for table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Numeric values of a column (`NaN` for non-numeric cells).
    pub fn numbers(&self, name: &str) -> Vec<f64> {
        match self.column(name) {
            Some(i) => self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect(),
            None => Vec::new(),
        }
    }

    pub fn write_csv(&self, path: &Path) -> LabResult<()> {
        let csv_err = |source| LabError::Csv {
            path: path.to_path_buf(),
            source,
        };
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(csv_err)?;
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render)).map_err(csv_err)?;
        }
        w.flush().map_err(|e| LabError::io(path, e))
    }

    /// Fixed-width rendering for the terminal.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> = self.rows.iter().map(|r| r.iter().map(Cell::render).collect()).collect();
        let widths: Vec<usize> = (0..self.columns.len())
            .map(|j| {
                cells
                    .iter()
                    .map(|r| r[j].len())
                    .chain(std::iter::once(self.columns[j].len()))
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let line = |row: &[String]| {
            row.iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect::<Vec<_>>()
                .join("  ")
        };
        let mut out = format!("# {}\n{}\n", self.name, line(&self.columns));
        for r in &cells {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// What an experiment produces, before it is wrapped into a [`RunRecord`].
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub summary: BTreeMap<String, Value>,
}

impl Outcome {
    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check::new(name, passed, detail));
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.summary
            .insert(key.to_string(), serde_json::to_value(value).expect("summary value serializes"));
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunRecord {
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    pub input_hash: String,
    pub config: RunConfig,
    /// Context every row can be re-verified from: metric hash, tolerances, growth range.
    pub context: BTreeMap<String, Value>,
    pub summary: BTreeMap<String, Value>,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    /// Wall-clock seconds; emitted to `timing.json`, never into the document.
    #[serde(skip)]
    pub timing: Option<f64>,
}

impl RunRecord {
    pub fn new(config: &RunConfig, outcome: Outcome, timing: Option<f64>) -> Self {
        let mut context = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            context.insert(k.to_string(), v);
        };
        put("metric_hash", Value::from(config.metric_hash()));
        put("tol", Value::from(config.solver.tol));
        put("tau_deg", Value::from(config.solver.tau));
        put("dense_limit", Value::from(config.solver.dense_limit));
        put(
            "growth_range",
            Value::from(vec![config.potential.range[0], config.potential.range[1]]),
        );
        put("rng", Value::from("ChaCha8 (rand_chacha), seeded per task from the run seed"));
        Self {
            schema_version: crate::config::SCHEMA_VERSION,
            tool: Tool {
                name: TOOL_NAME.to_string(),
                version: TOOL_VERSION.to_string(),
            },
            command: config.experiment().command().to_string(),
            input_hash: config.hash(),
            config: config.clone(),
            context,
            summary: outcome.summary,
            tables: outcome.tables,
            checks: outcome.checks,
            notes: outcome.notes,
            timing,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> LabResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| LabError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Format {
    Table,
    Doc,
    Plots,
}

/// Writes the requested forms of `record` under `dir`; returns the paths written.
pub fn emit_report(record: &RunRecord, dir: &Path, formats: &[Format]) -> LabResult<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let mut written = Vec::new();
    let write = |path: PathBuf, text: &str, written: &mut Vec<PathBuf>| -> LabResult<()> {
        fs::write(&path, text).map_err(|e| LabError::io(&path, e))?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&Format::Doc) {
        write(dir.join("result.json"), &record.to_json(), &mut written)?;
        if let Some(t) = record.timing {
            write(
                dir.join("timing.json"),
                &format!("{{\n  \"wall_seconds\": {t}\n}}\n"),
                &mut written,
            )?;
        }
    }
    if formats.contains(&Format::Table) {
        for t in &record.tables {
            let path = dir.join(format!("{}.csv", t.name));
            t.write_csv(&path)?;
            written.push(path);
        }
    }
    if formats.contains(&Format::Plots) {
        for (name, svg) in plot::plots_for(record) {
            write(dir.join(format!("{name}.svg")), &svg, &mut written)?;
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    fn record() -> RunRecord {
        let cfg = RunConfig::default().resolve("sweep", None).unwrap();
        let mut out = Outcome::default();
        let mut t = Table::new("sweep", &["eps", "lambda", "residual", "sigma_min", "class"]);
        t.push(vec![0.1.into(), (-0.099).into(), 1e-17.into(), 0.0123.into(), "nondegenerate".into()]);
        t.push(vec![0.1 + 0.2, f64::NAN, 3.0e-300, 1.0 / 3.0, 1.0].into_iter().map(Cell::from).collect());
        out.tables.push(t);
        out.check("example", true, "ok");
        RunRecord::new(&cfg, out, Some(0.5))
    }

    #[test]
    fn floats_round_trip_through_csv_rendering() {
        for x in [0.1 + 0.2, 1.0 / 3.0, 1e-300, 6.02214076e23, -2.5e-5, 0.0, 123456.789] {
            assert_eq!(render_f64(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn emission_is_byte_identical() {
        let r = record();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let all = [Format::Doc, Format::Table, Format::Plots];
        let wa = emit_report(&r, a.path(), &all).unwrap();
        let wb = emit_report(&r, b.path(), &all).unwrap();
        assert_eq!(wa.len(), wb.len());
        for (x, y) in wa.iter().zip(&wb) {
            if x.file_name().unwrap() == "timing.json" {
                continue;
            }
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap(), "{}", x.display());
        }
        let csv = fs::read_to_string(a.path().join("sweep.csv")).unwrap();
        assert!(csv.starts_with("eps,lambda,residual,sigma_min,class\n"));
        let back = RunRecord::load(&a.path().join("result.json")).unwrap();
        assert_eq!(back.tables[0].rows[0], r.tables[0].rows[0]);
        assert!(!fs::read_to_string(a.path().join("result.json")).unwrap().contains("wall_seconds"));
    }
}
