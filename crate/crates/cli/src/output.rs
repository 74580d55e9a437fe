//! CSV and JSON emission. Floats are printed with Rust's shortest
//! round-trip formatting, so parsing an emitted value recovers the exact
//! f64; field order is fixed by the headers.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Reproducibility record written next to every output set. Re-running a
/// manifest (pass it as `--config`) regenerates the data files byte for
/// byte; only this record's wall clock differs.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact: String,
    pub version: String,
    pub command: String,
    pub params: BTreeMap<String, String>,
    pub seed: u64,
    pub wall_clock_unix: u64,
    pub outputs: Vec<String>,
}

pub struct OutputContext {
    dir: PathBuf,
    /// File stem shared by the output set, e.g. `ensemble_decay`.
    base: String,
}

impl OutputContext {
    pub fn new(dir: PathBuf, command: &str, preset: Option<&str>) -> Self {
        let base = match preset {
            Some(p) => format!("{command}_{p}"),
            None => command.to_string(),
        };
        OutputContext { dir, base }
    }

    pub fn manifest_name(&self) -> String {
        format!("{}_manifest.json", self.base)
    }

    pub fn file_name(&self, suffix: &str) -> String {
        format!("{}{suffix}", self.base)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Write one CSV: a manifest back-reference comment, a header row, then
    /// the data rows.
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        let mut buf = String::new();
        buf.push_str(&format!("# manifest: {}\n", self.manifest_name()));
        buf.push_str(&header.join(","));
        buf.push('\n');
        for row in rows {
            debug_assert_eq!(row.len(), header.len());
            buf.push_str(&row.join(","));
            buf.push('\n');
        }
        let mut f = fs::File::create(self.path(name))?;
        f.write_all(buf.as_bytes())?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.path(name), text)?;
        Ok(())
    }

    pub fn write_manifest(
        &self,
        command: &str,
        params: &BTreeMap<String, String>,
        seed: u64,
        outputs: &[String],
    ) -> Result<(), CliError> {
        let manifest = RunManifest {
            artifact: "homodyne".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            params: params.clone(),
            seed,
            wall_clock_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs: outputs.to_vec(),
        };
        self.write_json(&self.manifest_name(), &manifest)
    }
}

/// Shortest f64 formatting that parses back to the identical value
/// (negative zero is flushed to plain zero).
pub fn num(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    format!("{v}")
}

pub fn resolve_out_dir(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Ok(env) = std::env::var("HOMODYNE_OUT_DIR") {
        if !env.is_empty() {
            return PathBuf::from(env);
        }
    }
    PathBuf::from(".")
}
