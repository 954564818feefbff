//! Report files with provenance headers.
//!
//! CSV files start with `# key=value` lines, then an RFC-4180 table. JSON
//! files are objects `{"provenance": {...}, "report": ...}` with sorted keys.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{ExperimentConfig, Overrides};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance(pub BTreeMap<String, String>);

fn join(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl Provenance {
    /// Everything that determines the outputs. The output directory is left
    /// out so that the same run written to two places yields identical files.
    pub fn new(command: &str, cfg: &ExperimentConfig, config_origin: &str, flags: &Overrides) -> Self {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("command", command.to_string());
        put("config", config_origin.to_string());
        put("version", env!("CARGO_PKG_VERSION").to_string());
        put("family", cfg.family.name.clone());
        for (k, v) in &cfg.family.params {
            put(&format!("family.{k}"), v.to_string());
        }
        put("envelope.K", cfg.envelope.k.to_string());
        put("envelope.lambda0", cfg.envelope.lambda0.to_string());
        put("envelope.Lambda", cfg.envelope.lambda_max.to_string());
        put("run.master_seed", cfg.run.master_seed.to_string());
        put("run.replications", cfg.run.replications.to_string());
        put("run.horizon", cfg.run.horizon.to_string());
        put("run.time_grid", join(&cfg.run.time_grid));
        put(
            "run.warmup",
            cfg.run.warmup.map(|w| w.to_string()).unwrap_or_else(|| "default".into()),
        );
        put("bounds.r", join(&cfg.bounds.r));
        put(
            "bounds.varpi",
            cfg.bounds.varpi.map(|w| w.to_string()).unwrap_or_else(|| "default".into()),
        );
        let mut given = Vec::new();
        if let Some(s) = flags.seed {
            given.push(format!("--seed={s}"));
        }
        if let Some(r) = flags.reps {
            given.push(format!("--reps={r}"));
        }
        if let Some(h) = flags.horizon {
            given.push(format!("--horizon={h}"));
        }
        put("flags", given.join(" "));
        Provenance(m)
    }

    pub fn header(&self) -> String {
        self.0.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
    }
}

/// A directory of report files that all carry the same provenance.
#[derive(Debug)]
pub struct ReportDir {
    root: PathBuf,
    provenance: Provenance,
    csv: bool,
    json: bool,
    written: Vec<PathBuf>,
}

impl ReportDir {
    pub fn create(root: &Path, provenance: Provenance, csv: bool, json: bool) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| LabError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: root.to_path_buf(),
            provenance,
            csv,
            json,
            written: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|source| LabError::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// `body` writes the table itself (header row included).
    pub fn csv_with<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut Vec<u8>) -> Result<()>,
    {
        if !self.csv {
            return Ok(());
        }
        let mut buf = self.provenance.header().into_bytes();
        body(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn csv_rows(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.csv_with(name, |buf| {
            let mut w = csv::Writer::from_writer(buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush().map_err(|source| LabError::Io {
                path: name.into(),
                source,
            })?;
            Ok(())
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, report: &T) -> Result<()> {
        if !self.json {
            return Ok(());
        }
        // serde_json maps are ordered, so converting to a Value sorts every
        // object's keys.
        let doc = serde_json::json!({
            "provenance": serde_json::to_value(&self.provenance.0)?,
            "report": serde_json::to_value(report)?,
        });
        let mut bytes = serde_json::to_vec_pretty(&doc)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }
}

/// Float as a CSV cell; `None` becomes an empty cell.
pub fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}
