//! On-disk layout shared by the subcommands.
//!
//! ```text
//! <out>/manifest.json          split indices + input paths
//! <out>/schema.fitted.json     schema with training-split statistics
//! <out>/prepare.meta.json      timestamps (the only non-deterministic file)
//! <out>/ccb-l<lambda>-h<hidden>-s<seed>/
//!     config.json  step-<t>.ckpt  rewards.csv  curve.csv  diagnostics.json
//! <out>/lr-s<seed>/
//!     config.json  model.ckpt
//! <out>/report/…               written by `report`
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use ccb_core::data::{assemble, FeatureSchema, RawTable, SplitDataset, SplitIndices};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";
pub const FITTED_SCHEMA: &str = "schema.fitted.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset: String,
    pub data: PathBuf,
    pub schema: PathBuf,
    pub rows: usize,
    pub dropped: usize,
    pub ratios: [f64; 3],
    #[serde(flatten)]
    pub split: SplitIndices,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Timestamps live in their own file so every other output stays
/// byte-identical across reruns.
pub fn write_metadata(path: &Path, command: &str) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({
        "command": command,
        "finished_unix": secs,
        "version": env!("CARGO_PKG_VERSION"),
    });
    write_json(path, &meta)
}

/// Everything `prepare` produced, reloaded and re-encoded.
pub struct Prepared {
    pub manifest: Manifest,
    pub schema: FeatureSchema,
    pub data: SplitDataset<f64>,
}

pub fn load_prepared(out: &Path, data: Option<&Path>, schema: Option<&Path>) -> Result<Prepared> {
    let manifest_path = out.join(MANIFEST);
    if !manifest_path.is_file() {
        anyhow::bail!(
            "{} not found; run `ccb prepare --out {}` first",
            manifest_path.display(),
            out.display()
        );
    }
    let mut manifest: Manifest = read_json(&manifest_path)?;
    if let Some(d) = data {
        manifest.data = d.to_path_buf();
    }
    if let Some(s) = schema {
        manifest.schema = s.to_path_buf();
    }
    let schema: FeatureSchema = read_json(&out.join(FITTED_SCHEMA))?;
    let table = RawTable::load(&manifest.data, &schema)?;
    if table.rows().len() != manifest.rows {
        anyhow::bail!(
            "{} has {} usable rows but the manifest recorded {}",
            manifest.data.display(),
            table.rows().len(),
            manifest.rows
        );
    }
    let data = assemble(&table, &schema, &manifest.split)?;
    Ok(Prepared { manifest, schema, data })
}

pub fn ccb_run_id(lambda: f64, hidden: usize, seed: u64) -> String {
    format!("ccb-l{lambda}-h{hidden}-s{seed}")
}

pub fn lr_run_id(seed: u64) -> String {
    format!("lr-s{seed}")
}

/// Run directories of one method, sorted by name.
pub fn run_dirs(out: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(out).with_context(|| format!("listing {}", out.display()))? {
        let entry = entry?;
        let name = entry.file_name();
        if entry.file_type()?.is_dir() && name.to_string_lossy().starts_with(prefix) {
            dirs.push(entry.path());
        }
    }
    dirs.sort();
    Ok(dirs)
}

pub fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("creating {}", path.display()))
}
