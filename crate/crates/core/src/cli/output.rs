//! Files written by the commands. Every file carries the run metadata.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::dynsys::Trajectory;
use crate::error::{Error, Result};
use crate::format::g17;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

/// Provenance attached to every output file.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub tol: f64,
    pub modules: BTreeMap<&'static str, &'static str>,
    /// Command-specific settings (horizons, fit windows, …).
    pub settings: BTreeMap<String, Value>,
}

impl Metadata {
    pub fn new(command: &str, config_sha256: String, tol: f64, modules: &[&'static str]) -> Self {
        Self {
            tool: "koopman-laplace",
            version: VERSION,
            command: command.to_string(),
            config_sha256,
            tol,
            modules: modules.iter().map(|&m| (m, VERSION)).collect(),
            settings: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.settings.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    fn csv_lines(&self) -> Vec<String> {
        let mut lines = vec![
            format!("# tool: {} {}", self.tool, self.version),
            format!("# command: {}", self.command),
            format!("# config_sha256: {}", self.config_sha256),
            format!("# tol: {}", g17(self.tol)),
            format!(
                "# modules: {}",
                self.modules.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(",")
            ),
        ];
        for (k, v) in &self.settings {
            lines.push(format!("# {k}: {v}"));
        }
        lines
    }
}

/// Output directory plus tabular format.
pub struct Sink {
    dir: PathBuf,
    format: Format,
    pub meta: Metadata,
    written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, format: Format, meta: Metadata) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), format, meta, written: Vec::new() })
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn create(&mut self, name: &str) -> Result<BufWriter<fs::File>> {
        let path = self.dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(path);
        Ok(BufWriter::new(file))
    }

    /// A numeric table as `<stem>.csv` or `<stem>.json`.
    pub fn table(&mut self, stem: &str, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
        match self.format {
            Format::Csv => {
                let lines = self.meta.csv_lines();
                let mut w = self.create(&format!("{stem}.csv"))?;
                for line in lines {
                    writeln!(w, "{line}")?;
                }
                writeln!(w, "{}", header.join(","))?;
                for row in rows {
                    let cells: Vec<String> = row.iter().map(|&v| g17(v)).collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let value = json!({ "columns": header, "rows": rows });
                self.json(stem, &value)?;
            }
        }
        Ok(())
    }

    /// A trajectory as a table `t, x_1..x_n`.
    pub fn trajectory(&mut self, stem: &str, traj: &Trajectory) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=traj.dim()).map(|i| format!("x_{i}")));
        let rows: Vec<Vec<f64>> = (0..traj.len())
            .map(|k| {
                let mut row = vec![traj.time(k)];
                row.extend_from_slice(traj.state(k));
                row
            })
            .collect();
        self.table(stem, &header, &rows)
    }

    /// `<stem>.json` holding `report` with a `metadata` key added.
    pub fn json(&mut self, stem: &str, report: &impl Serialize) -> Result<()> {
        let value = self.with_metadata(report)?;
        let mut w = self.create(&format!("{stem}.json"))?;
        writeln!(w, "{}", serde_json::to_string_pretty(&value).map_err(|e| Error::Numeric(e.to_string()))?)?;
        w.flush()?;
        Ok(())
    }

    pub fn with_metadata(&self, report: &impl Serialize) -> Result<Value> {
        let mut value = serde_json::to_value(report).map_err(|e| Error::Numeric(e.to_string()))?;
        let meta = serde_json::to_value(&self.meta).map_err(|e| Error::Numeric(e.to_string()))?;
        match &mut value {
            Value::Object(map) => {
                map.insert("metadata".into(), meta);
            }
            other => {
                value = json!({ "metadata": meta, "value": other.take() });
            }
        }
        Ok(value)
    }
}
