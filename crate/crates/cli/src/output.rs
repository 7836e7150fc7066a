//! Output files with provenance headers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use wavegrf::{Error, Result};

use crate::config::RunConfig;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance shared by every file a command writes.
pub struct Context {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub out_dir: PathBuf,
}

/// SHA-256 of the canonical JSON form of the resolved configuration.
pub fn config_hash(config: &RunConfig) -> String {
    let canonical = serde_json::to_string(config).expect("configuration serializes");
    Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

impl Context {
    pub fn new(command: &str, config: RunConfig, out_dir: &Path) -> Result<Self> {
        fs::create_dir_all(out_dir)?;
        Ok(Context { command: command.into(), config_hash: config_hash(&config), config, out_dir: out_dir.to_path_buf() })
    }

    fn header_lines(&self) -> Vec<String> {
        vec![
            format!("wavegrf {VERSION}"),
            format!("command: {}", self.command),
            format!("config_sha256: {}", self.config_hash),
            format!("seed: {}", self.config.seed),
        ]
    }

    fn metadata(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("version".into(), json!(VERSION));
        m.insert("command".into(), json!(self.command));
        m.insert("config_sha256".into(), json!(self.config_hash));
        m.insert("seed".into(), json!(self.config.seed));
        m.insert("config".into(), serde_json::to_value(&self.config).expect("configuration serializes"));
        m
    }

    /// Writes `<name>.csv` with a `#` metadata header and a `<name>.json` sidecar.
    pub fn write_table(&self, table: &Table) -> Result<PathBuf> {
        let mut text = String::new();
        for l in self.header_lines() {
            text.push_str(&format!("# {l}\n"));
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(&table.columns).map_err(io)?;
        for row in &table.rows {
            if row.len() != table.columns.len() {
                return Err(Error::DimensionMismatch { expected: table.columns.len(), got: row.len() });
            }
            w.write_record(row).map_err(io)?;
        }
        let body = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        text.push_str(std::str::from_utf8(&body).expect("csv output is UTF-8"));
        let path = self.out_dir.join(format!("{}.csv", table.name));
        fs::write(&path, text)?;
        let mut meta = self.metadata();
        meta.insert("file".into(), json!(format!("{}.csv", table.name)));
        meta.insert("columns".into(), json!(table.columns));
        meta.insert("rows".into(), json!(table.rows.len()));
        meta.insert("summary".into(), Value::Object(table.summary.clone()));
        fs::write(self.out_dir.join(format!("{}.json", table.name)), pretty(&Value::Object(meta)))?;
        Ok(path)
    }

    /// Writes a Matrix Market file with the metadata as `%` comments after the banner.
    pub fn write_matrix_market(&self, name: &str, mm: &str) -> Result<PathBuf> {
        let (banner, rest) = mm.split_once('\n').unwrap_or((mm, ""));
        let mut text = format!("{banner}\n");
        for l in self.header_lines() {
            text.push_str(&format!("% {l}\n"));
        }
        text.push_str(rest);
        let path = self.out_dir.join(format!("{name}.mtx"));
        fs::write(&path, text)?;
        Ok(path)
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON value serializes");
    s.push('\n');
    s
}

/// Machine-readable failure record.
#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub status: &'static str,
    pub kind: &'static str,
    pub exit_code: i32,
    pub message: String,
}

impl ErrorRecord {
    pub fn to_json(&self) -> String {
        pretty(&serde_json::to_value(self).expect("error record serializes"))
    }
}

/// In-memory CSV table.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Map<String, Value>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), ..Default::default() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn note(&mut self, key: &str, value: impl Serialize) {
        self.summary.insert(key.into(), serde_json::to_value(value).expect("summary value serializes"));
    }
}

/// Shortest round-trip representation.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn int(x: impl std::fmt::Display) -> String {
    x.to_string()
}
