//! On-disk layout of offline artifacts.
//!
//! A model directory holds `Q.mat`, `eigvals_y.txt`, `eigvals_p.txt`,
//! `meta.json` and `theta.json`; DEIM models add `deim_Z.mat`,
//! `deim_indices.txt` and `deim_meta.json`. An L-POD directory holds
//! `partition.json` and one `interval_<i>` model directory per interval.
//! Reduced operators are rebuilt from `Q` on load.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::deim::DeimModel;
use crate::error::{Error, Result};
use crate::fem::{Problem, Theta};
use crate::lpod::{Decision, IntervalPartition, LocalInterval, LpodSettings, SplitEvent};
use crate::rom::{ControlReduction, ReducedControl, ReducedModel, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub strategy: Strategy,
    /// Modes per variable.
    pub n: usize,
    /// Columns of `Q`.
    pub dim: usize,
    pub seed: u64,
    pub mesh_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DeimMeta {
    tol: f64,
    pattern_count: usize,
    rcond: f64,
    eigenvalues: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ThetaFile {
    state: Vec<Theta>,
    obs: Vec<Theta>,
    f: Vec<Theta>,
    y_d: Vec<Theta>,
    control: Option<Vec<Theta>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct IntervalRecord {
    lo: f64,
    hi: f64,
    n_snapshots: usize,
    n_modes: usize,
    decision: Decision,
    eig_y: Vec<f64>,
    eig_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PartitionFile {
    settings: LpodSettings,
    intervals: Vec<IntervalRecord>,
    split_log: Vec<SplitEvent>,
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &serde_json::to_string_pretty(value)?)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&read(path)?)?)
}

fn bad(path: &Path, msg: impl Into<String>) -> Error {
    Error::InvalidArgument(format!("{}: {}", path.display(), msg.into()))
}

/// Dense matrix as text: a `rows cols` header, then one row per line.
/// Values are written in shortest round-trip form.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut s = format!("{} {}\n", m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(s, "{}", row.join(" "));
    }
    write(path, &s)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let text = read(path)?;
    let mut tokens = text.split_whitespace();
    let mut dim = || -> Result<usize> {
        tokens
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| bad(path, "missing matrix header"))
    };
    let (rows, cols) = (dim()?, dim()?);
    let values = text
        .split_whitespace()
        .skip(2)
        .map(|t| t.parse::<f64>().map_err(|_| bad(path, format!("bad number {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != rows * cols {
        return Err(bad(path, format!("expected {} values, found {}", rows * cols, values.len())));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

/// One value per line.
pub fn write_values<T: std::fmt::LowerExp>(path: &Path, values: &[T]) -> Result<()> {
    let s: String = values.iter().map(|v| format!("{v:e}\n")).collect();
    write(path, &s)
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    read(path)?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad(path, format!("bad number {t:?}"))))
        .collect()
}

fn theta_file(model: &ReducedModel) -> ThetaFile {
    let thetas = |v: &[(Theta, DMatrix<f64>)]| v.iter().map(|t| t.0).collect::<Vec<_>>();
    ThetaFile {
        state: thetas(&model.state),
        obs: thetas(&model.obs),
        f: model.f.iter().map(|t| t.0).collect(),
        y_d: model.y_d.iter().map(|t| t.0).collect(),
        control: match &model.control {
            ReducedControl::Affine(terms) => Some(thetas(terms)),
            _ => None,
        },
    }
}

/// Writes one reduced model and its POD spectra into `dir`.
pub fn save_model(dir: &Path, model: &ReducedModel, meta: &ModelMeta, eig_y: &[f64], eig_p: &[f64]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_matrix(&dir.join("Q.mat"), &model.q)?;
    write_values(&dir.join("eigvals_y.txt"), eig_y)?;
    write_values(&dir.join("eigvals_p.txt"), eig_p)?;
    write_json(&dir.join("meta.json"), meta)?;
    write_json(&dir.join("theta.json"), &theta_file(model))?;
    if let ReducedControl::Deim { model: deim, .. } = &model.control {
        write_matrix(&dir.join("deim_Z.mat"), &deim.z)?;
        let s: String = deim.indices.iter().map(|i| format!("{i}\n")).collect();
        write(&dir.join("deim_indices.txt"), &s)?;
        write_json(
            &dir.join("deim_meta.json"),
            &DeimMeta {
                tol: deim.tol,
                pattern_count: deim.pattern_count,
                rcond: deim.rcond,
                eigenvalues: deim.eigenvalues.clone(),
            },
        )?;
    }
    Ok(())
}

fn load_deim(dir: &Path) -> Result<DeimModel> {
    let meta: DeimMeta = read_json(&dir.join("deim_meta.json"))?;
    let z = read_matrix(&dir.join("deim_Z.mat"))?;
    let path = dir.join("deim_indices.txt");
    let indices = read(&path)?
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| bad(&path, format!("bad index {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let model = DeimModel::from_basis(z, meta.eigenvalues, meta.pattern_count, meta.tol)?;
    if model.indices != indices {
        return Err(bad(&path, "stored magic points differ from the recomputed ones"));
    }
    Ok(model)
}

/// Reads a model directory and re-projects `problem` onto the stored basis.
pub fn load_model(dir: &Path, problem: &Problem) -> Result<(ReducedModel, ModelMeta)> {
    let meta: ModelMeta = read_json(&dir.join("meta.json"))?;
    let hash = problem.mesh().content_hash();
    if meta.mesh_hash != hash {
        return Err(bad(dir, format!("model built on mesh {} but problem mesh is {hash}", meta.mesh_hash)));
    }
    let q = read_matrix(&dir.join("Q.mat"))?;
    if q.nrows() != problem.n_free() || q.ncols() != meta.dim {
        return Err(bad(dir, format!("basis is {}x{}, expected {}x{}", q.nrows(), q.ncols(), problem.n_free(), meta.dim)));
    }
    let model = if dir.join("deim_meta.json").exists() {
        let deim = load_deim(dir)?;
        ReducedModel::project(problem, q, meta.strategy, ControlReduction::Deim(&deim))?
    } else {
        ReducedModel::project(problem, q, meta.strategy, ControlReduction::Exact)?
    };
    Ok((model, meta))
}

/// Writes `partition.json` and one model directory per interval.
pub fn save_partition(dir: &Path, partition: &IntervalPartition, seed: u64, mesh_hash: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file = PartitionFile {
        settings: partition.settings,
        intervals: partition
            .intervals
            .iter()
            .map(|i| IntervalRecord {
                lo: i.lo,
                hi: i.hi,
                n_snapshots: i.n_snapshots,
                n_modes: i.n_modes,
                decision: i.decision,
                eig_y: i.eig_y.clone(),
                eig_p: i.eig_p.clone(),
            })
            .collect(),
        split_log: partition.split_log.clone(),
    };
    write_json(&dir.join("partition.json"), &file)?;
    for (k, i) in partition.intervals.iter().enumerate() {
        let meta = ModelMeta {
            strategy: Strategy::Lpod,
            n: i.n_modes,
            dim: i.model.dim(),
            seed,
            mesh_hash: mesh_hash.to_string(),
        };
        save_model(&dir.join(format!("interval_{k}")), &i.model, &meta, &i.eig_y, &i.eig_p)?;
    }
    Ok(())
}

pub fn load_partition(dir: &Path, problem: &Problem) -> Result<IntervalPartition> {
    let file: PartitionFile = read_json(&dir.join("partition.json"))?;
    let intervals = file
        .intervals
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let (model, _) = load_model(&dir.join(format!("interval_{k}")), problem)?;
            Ok(LocalInterval {
                lo: r.lo,
                hi: r.hi,
                n_snapshots: r.n_snapshots,
                n_modes: r.n_modes,
                eig_y: r.eig_y,
                eig_p: r.eig_p,
                decision: r.decision,
                model,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalPartition {
        intervals,
        split_log: file.split_log,
        settings: file.settings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 0.1).powi(j as i32 + 1) / 7.0 - 1e-300 * j as f64);
        let path = dir.path().join("m.mat");
        write_matrix(&path, &m).unwrap();
        assert_eq!(read_matrix(&path).unwrap(), m);
    }

    #[test]
    fn truncated_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mat");
        fs::write(&path, "2 2\n1 2 3\n").unwrap();
        assert!(read_matrix(&path).is_err());
    }

    #[test]
    fn values_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = [1.0, 0.1, 3.3e-17, 0.0];
        write_values(&path, &v).unwrap();
        assert_eq!(read_values(&path).unwrap(), v);
    }
}
