//! Tabular artifacts and their CSV / JSON encodings.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, Format};

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => v.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Int(v) => json!(v),
            Cell::Float(v) => json!(v),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Float)
    }
}

#[derive(Clone, Debug, PartialEq)]
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

/// One output file, named `<stem>.<ext>` inside the output directory.
#[derive(Clone, Debug)]
pub enum Artifact {
    Table {
        stem: String,
        table: Table,
    },
    /// Always written as JSON; the config hash is added at the top level.
    Document {
        stem: String,
        body: Value,
    },
}

impl Artifact {
    pub fn table(stem: &str, table: Table) -> Self {
        Artifact::Table { stem: stem.to_string(), table }
    }

    pub fn document(stem: &str, body: impl Serialize) -> Self {
        let body = serde_json::to_value(body).expect("serialisable artifact");
        Artifact::Document { stem: stem.to_string(), body }
    }
}

fn encode_csv(t: &Table) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&t.columns)?;
    for r in &t.rows {
        w.write_record(r.iter().map(Cell::csv))?;
    }
    w.into_inner().map_err(|e| io::Error::other(e.to_string()))
}

fn encode_json(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("json encoding");
    out.push(b'\n');
    out
}

/// Writes every artifact plus `<command>.manifest.json`; returns the paths written.
pub fn write_all(cfg: &ExperimentConfig, command: &str, artifacts: &[Artifact]) -> io::Result<Vec<PathBuf>> {
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    let hash = cfg.hash();
    let mut written = Vec::new();
    for a in artifacts {
        let (path, bytes) = match a {
            Artifact::Table { stem, table } => match cfg.output.format {
                Format::Csv => (dir.join(format!("{stem}.csv")), encode_csv(table)?),
                Format::Json => {
                    let rows: Vec<Value> =
                        table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
                    let v = json!({ "config_hash": hash, "columns": table.columns, "rows": rows });
                    (dir.join(format!("{stem}.json")), encode_json(&v))
                }
            },
            Artifact::Document { stem, body } => {
                let mut v = json!({ "config_hash": hash });
                if let (Value::Object(m), Value::Object(b)) = (&mut v, body) {
                    m.extend(b.clone());
                } else {
                    v["body"] = body.clone();
                }
                (dir.join(format!("{stem}.json")), encode_json(&v))
            }
        };
        fs::write(&path, bytes)?;
        written.push(path);
    }
    let files: Vec<String> = written.iter().map(|p| file_name(p)).collect();
    let manifest = json!({ "command": command, "config_hash": hash, "config": cfg, "files": files });
    let path = dir.join(format!("{command}.manifest.json"));
    fs::write(&path, encode_json(&manifest))?;
    written.push(path);
    Ok(written)
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Table {
        let mut t = Table::new(&["time", "x", "value"]);
        t.push(vec![0.0.into(), 1usize.into(), 0.25.into()]);
        t.push(vec![0.5.into(), 2usize.into(), None.into()]);
        t
    }

    #[test]
    fn csv_has_header_and_roundtrip_floats() {
        let s = String::from_utf8(encode_csv(&sample()).unwrap()).unwrap();
        assert_eq!(s, "time,x,value\n0,1,0.25\n0.5,2,\n");
        let third = 1.0f64 / 3.0;
        assert_eq!(Cell::Float(third).csv().parse::<f64>().unwrap(), third);
    }

    #[test]
    fn json_documents_carry_the_hash() {
        let dir = std::env::temp_dir().join(format!("seplab-out-{}", std::process::id()));
        let mut cfg = ExperimentConfig::default();
        cfg.output.dir = dir.clone();
        cfg.output.format = Format::Json;
        let arts = [Artifact::table("density", sample()), Artifact::document("fit", json!({ "fits": [] }))];
        let paths = write_all(&cfg, "density", &arts).unwrap();
        assert_eq!(paths.len(), 3);
        for p in &paths {
            let v: Value = serde_json::from_slice(&fs::read(p).unwrap()).unwrap();
            assert_eq!(v["config_hash"], json!(cfg.hash()));
        }
        let v: Value = serde_json::from_slice(&fs::read(&paths[0]).unwrap()).unwrap();
        assert_eq!(v["rows"][1][2], Value::Null);
        fs::remove_dir_all(dir).unwrap();
    }
}
