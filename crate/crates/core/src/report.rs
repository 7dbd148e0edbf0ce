//! Run manifests, metrics documents and the human-readable report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::msfs::SamplingParams;
use crate::train::EpochStats;

/// Everything needed to re-run a subcommand; no timestamps, so repeated runs
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub subcommand: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub sampling: Vec<SamplingParams>,
    pub fold_spec_hash: Option<String>,
    pub outputs: BTreeMap<String, String>,
    pub epochs: Vec<EpochStats>,
}

impl RunManifest {
    pub fn new(subcommand: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
            subcommand: subcommand.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            sampling: Vec::new(),
            fold_spec_hash: None,
            outputs: BTreeMap::new(),
            epochs: Vec::new(),
        })
    }

    pub fn output(&mut self, key: &str, path: &Path) {
        self.outputs.insert(key.to_string(), path.display().to_string());
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Headline numbers plus free-form detail, written as `metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDoc {
    pub seed: u64,
    pub config: serde_json::Value,
    pub summary: BTreeMap<String, f64>,
    pub detail: serde_json::Value,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn render(run: &RunManifest, metrics: &MetricsDoc) -> Result<String> {
    let mut s = String::new();
    let w = |e: std::fmt::Error| Error::invalid(format!("formatting report: {e}"));
    writeln!(s, "{} report ({})", run.subcommand, run.tool).map_err(w)?;
    writeln!(s, "seed: {}", run.seed).map_err(w)?;
    if let Some(h) = &run.fold_spec_hash {
        writeln!(s, "fold spec sha256: {h}").map_err(w)?;
    }
    if !run.sampling.is_empty() {
        writeln!(s, "\nsampling tuples (member: f Hz, w s, o s, seed):").map_err(w)?;
        for (i, p) in run.sampling.iter().enumerate() {
            writeln!(s, "  {i}: {}, {}, {}, {}", p.f, p.w, p.o, p.seed).map_err(w)?;
        }
    }
    if !run.outputs.is_empty() {
        writeln!(s, "\noutputs:").map_err(w)?;
        for (k, v) in &run.outputs {
            writeln!(s, "  {k}: {v}").map_err(w)?;
        }
    }
    writeln!(s, "\nmetrics:").map_err(w)?;
    for (k, v) in &metrics.summary {
        writeln!(s, "  {k}: {v}").map_err(w)?;
    }
    writeln!(s, "\nconfig:\n{}", serde_json::to_string_pretty(&run.config)?).map_err(w)?;
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportPaths {
    pub report: PathBuf,
    pub metrics: PathBuf,
}

/// Write `report.txt` and `metrics.json` into `out_dir`. Rewriting from the
/// same inputs reproduces both files exactly.
pub fn write_report(run: &RunManifest, metrics: &MetricsDoc, out_dir: &Path) -> Result<ReportPaths> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let paths = ReportPaths {
        report: out_dir.join("report.txt"),
        metrics: out_dir.join("metrics.json"),
    };
    write_json(&paths.metrics, metrics)?;
    fs::write(&paths.report, render(run, metrics)?).map_err(|e| Error::io(&paths.report, e))?;
    Ok(paths)
}
