//! Trajectory CSVs, JSON reports and the run manifest.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use urnsa_core::urn::Checkpoint;
use urnsa_core::{Error, Result};

/// Creates `dir` and proves it writable before any work starts.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)
        .map_err(|e| Error::Config(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".urnsa-write-probe");
    File::create(&probe)
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| Error::Config(format!("output directory {} is not writable: {e}", dir.display())))
}

pub fn csv_header(d: usize) -> Vec<String> {
    let mut h = vec!["n".to_string()];
    for block in ["Ytilde", "Ntilde", "Stilde", "Pi"] {
        h.extend((1..=d).map(|i| format!("{block}_{i}")));
    }
    h.push("w".to_string());
    h
}

/// One row per checkpoint with `n ≥ 1`.
pub fn write_trajectory_csv(path: &Path, d: usize, checkpoints: &[Checkpoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(csv_header(d)).map_err(csv_err)?;
    for c in checkpoints.iter().filter(|c| c.n >= 1) {
        let mut row = vec![c.n.to_string()];
        for block in [c.y_tilde(), c.n_tilde(), c.s_tilde(), c.pi()] {
            row.extend(block.iter().map(|x| x.to_string()));
        }
        row.push(c.w.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Numerical(format!("csv: {other:?}")),
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn trajectory_file(dir: &Path, replication: u64) -> PathBuf {
    dir.join(format!("trajectory_{replication:05}.csv"))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub files: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub extinct_replications: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plotting_recipe: Option<String>,
}

pub const FIGURE1_RECIPE: &str = "Plot columns Ytilde_1 and Ytilde_2 of trajectory_00000.csv against n \
on a linear axis, with horizontal reference lines at v* = (0.375, 0.625); \
the Ntilde columns show the allocation frequencies converging to the same limit.";

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        assert_eq!(
            csv_header(2).join(","),
            "n,Ytilde_1,Ytilde_2,Ntilde_1,Ntilde_2,Stilde_1,Stilde_2,Pi_1,Pi_2,w"
        );
    }

    #[test]
    fn empty_trajectory_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trajectory_csv(&path, 2, &[]).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn unwritable_directory_is_a_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        fs::write(&file, "x").unwrap();
        assert!(matches!(prepare_output_dir(&file.join("sub")), Err(Error::Config(_))));
    }
}
