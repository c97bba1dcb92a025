//! Run manifests and plot-ready output files.
//!
//! Every CSV file starts with `#` metadata lines that carry the hash of the
//! run configuration, so a data file can always be matched to the manifest
//! that produced it.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything needed to rerun a command, plus bookkeeping about the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved parameters, defaults included.
    pub parameters: Value,
    pub tool_version: String,
    /// SHA-256 of `command`, `parameters` and `tool_version`.
    pub config_hash: String,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
    /// Scalar results worth keeping next to the data (fits, fitted factors).
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub results: Value,
}

impl RunManifest {
    pub fn new(command: &str, parameters: Value) -> Self {
        let config_hash = config_hash(command, &parameters, TOOL_VERSION);
        Self {
            command: command.to_string(),
            parameters,
            tool_version: TOOL_VERSION.to_string(),
            config_hash,
            wall_time_s: 0.0,
            outputs: Vec::new(),
            results: Value::Null,
        }
    }

    /// Whether the stored hash matches the stored configuration.
    pub fn verify(&self) -> bool {
        config_hash(&self.command, &self.parameters, &self.tool_version) == self.config_hash
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_reader(File::open(path)?)?)
    }
}

/// Hex SHA-256 over a canonical JSON rendering of the configuration.
/// `serde_json` keeps object keys sorted, so equal configurations hash equally.
pub fn config_hash(command: &str, parameters: &Value, version: &str) -> String {
    let canonical = serde_json::json!({ "command": command, "parameters": parameters, "tool_version": version });
    let digest = Sha256::digest(canonical.to_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes the `#` header (tool, hash, then `extra` key/value lines) followed by `body`.
pub fn write_csv_with_header<F>(path: &Path, manifest: &RunManifest, extra: &[(&str, String)], body: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    let mut w = create(path)?;
    write_header(&mut w, manifest, extra)?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_header(w: &mut dyn Write, manifest: &RunManifest, extra: &[(&str, String)]) -> Result<()> {
    writeln!(w, "# trimode {} {}", manifest.tool_version, manifest.command)?;
    writeln!(w, "# config_sha256: {}", manifest.config_hash)?;
    for (k, v) in extra {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

/// JSON document wrapped with the configuration hash.
pub fn write_json<T: Serialize>(path: &Path, manifest: &RunManifest, value: &T) -> Result<()> {
    let doc = serde_json::json!({ "config_sha256": manifest.config_hash, "command": manifest.command, "data": value });
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Splits a CSV file written by [`write_csv_with_header`] into metadata lines and data lines.
pub fn read_csv_sections(path: &Path) -> Result<(Vec<String>, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let (meta, data): (Vec<&str>, Vec<&str>) = text.lines().partition(|l| l.starts_with('#'));
    Ok((meta.into_iter().map(String::from).collect(), data.into_iter().map(String::from).collect()))
}

/// Plain (ASCII) greyscale PGM of a row-major raster. Missing cells are black;
/// the remaining values are scaled linearly onto 1..=255.
pub fn write_pgm(path: &Path, rows: usize, cols: usize, values: &[Option<f64>]) -> Result<()> {
    if values.len() != rows * cols || rows == 0 || cols == 0 {
        return Err(Error::InvalidConfig(format!("raster of {} values does not match {rows}x{cols}", values.len())));
    }
    let present = values.iter().flatten().copied().filter(|v| v.is_finite());
    let (lo, hi) = present.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut w = create(path)?;
    writeln!(w, "P2\n{cols} {rows}\n255")?;
    // Image row 0 is the top, so the first raster row (smallest ρ₀) goes last.
    for r in (0..rows).rev() {
        let line: Vec<String> = (0..cols)
            .map(|c| match values[r * cols + c] {
                Some(v) if v.is_finite() => (1.0 + 254.0 * (v - lo) / span).round().to_string(),
                _ => "0".to_string(),
            })
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("trimode-io-{}", std::process::id()));
        dir.join(name)
    }

    #[test]
    fn hash_depends_only_on_configuration() {
        let a = RunManifest::new("spectrum", serde_json::json!({"r": 0.5, "n_atoms": 10}));
        let mut b = RunManifest::new("spectrum", serde_json::json!({"n_atoms": 10, "r": 0.5}));
        b.wall_time_s = 12.0;
        b.outputs.push("x.csv".into());
        assert_eq!(a.config_hash, b.config_hash);
        assert_eq!(a.config_hash.len(), 64);
        assert_ne!(a.config_hash, RunManifest::new("spectrum", serde_json::json!({"r": 0.4, "n_atoms": 10})).config_hash);
        assert!(b.verify());
        b.parameters["r"] = serde_json::json!(0.1);
        assert!(!b.verify());
    }

    #[test]
    fn csv_header_and_manifest_round_trip() {
        let m = RunManifest::new("otoc-ed", serde_json::json!({"n_atoms": 4}));
        let path = tmp("series.csv");
        write_csv_with_header(&path, &m, &[("time_unit", "1/gN".into())], |w| {
            writeln!(w, "t,C")?;
            writeln!(w, "0,0")?;
            Ok(())
        })
        .unwrap();
        let (meta, data) = read_csv_sections(&path).unwrap();
        assert!(meta.iter().any(|l| l.contains(&m.config_hash)));
        assert_eq!(meta.last().unwrap(), "# time_unit: 1/gN");
        assert_eq!(data, vec!["t,C", "0,0"]);
        let mpath = tmp("manifest.json");
        m.write(&mpath).unwrap();
        assert_eq!(RunManifest::read(&mpath).unwrap(), m);
    }

    #[test]
    fn pgm_scales_values_and_blanks_missing_cells() {
        let path = tmp("map.pgm");
        write_pgm(&path, 2, 2, &[Some(0.0), None, Some(1.0), Some(0.5)]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[..3], ["P2", "2 2", "255"]);
        assert_eq!(lines[3], "255 128");
        assert_eq!(lines[4], "1 0");
        assert!(write_pgm(&path, 3, 2, &[None; 4]).is_err());
    }
}
