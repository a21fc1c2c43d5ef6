use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use pwl_core::sim::{read_csv, CsvTrajectory, Sidecar};
use pwl_core::Trajectory;

use crate::error::CliError;

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Writes `text` plus a trailing newline to `path`, or to stdout when `path` is `None`.
pub fn write_text(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, format!("{text}\n"))?;
        }
        None => println!("{text}"),
    }
    Ok(())
}

/// `run.csv` -> `run.sidecar.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("sidecar.json")
}

/// `run.csv` -> `run.<suffix>`.
pub fn companion_path(csv: &Path, suffix: &str) -> PathBuf {
    csv.with_extension(suffix)
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut out = BufWriter::new(File::create(path)?);
    traj.write_csv(&mut out)?;
    out.flush()?;
    let sidecar = serde_json::to_string_pretty(&traj.sidecar())?;
    write_text(Some(&sidecar_path(path)), &sidecar)
}

/// Trajectory CSV and, when present next to it, its sidecar.
pub fn read_trajectory(path: &Path) -> Result<(CsvTrajectory, Option<Sidecar>), CliError> {
    let file = File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let csv = read_csv(BufReader::new(file))?;
    let side = sidecar_path(path);
    let sidecar = if side.exists() { Some(serde_json::from_str(&read_text(&side)?)?) } else { None };
    Ok((csv, sidecar))
}

/// Trajectory whose derivative columns may be missing; missing ones are zero.
pub fn read_signal(path: &Path) -> Result<Trajectory, CliError> {
    let (mut csv, sidecar) = read_trajectory(path)?;
    if csv.derivs.is_none() {
        csv.derivs = Some(csv.states.iter().map(|x| DVector::zeros(x.len())).collect());
    }
    Ok(csv.into_trajectory(sidecar.as_ref())?)
}

/// Integer column named `mode` of a CSV file.
pub fn read_labels(path: &Path) -> Result<Vec<usize>, CliError> {
    let file = File::open(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(BufReader::new(file));
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h.trim() == "mode")
        .ok_or_else(|| CliError::config(format!("{}: no `mode` column", path.display())))?;
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let cell = rec.get(col).unwrap_or("").trim();
        labels
            .push(cell.parse().map_err(|_| CliError::config(format!("{}: bad mode label {cell:?}", path.display())))?);
    }
    Ok(labels)
}

/// JSON array of equal-length vectors.
pub fn read_vectors(path: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let rows: Vec<Vec<f64>> = serde_json::from_str(&read_text(path)?)?;
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

pub fn parse_vector(s: &str) -> Result<DVector<f64>, CliError> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::config(format!("bad number {t:?} in {s:?}"))))
        .collect::<Result<Vec<_>, _>>()
        .map(DVector::from_vec)
}
