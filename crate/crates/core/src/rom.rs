//! Proper orthogonal decomposition, aggregated state/adjoint spaces and the
//! reduced optimality system.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deim::DeimModel;
use crate::error::{Error, Result};
use crate::fem::{ControlModel, Problem, Theta};
use crate::linalg::dense::{dense_solve, sym_eig_desc};
use crate::linalg::CsrMatrix;
use crate::ocp::{solve_hf, HfSolution, ParameterPoint};

/// Eigenvalues below this fraction of `λ₁` carry no usable mode.
pub const EIGEN_CUTOFF: f64 = 1e-14;

/// Columns whose norm falls below this after orthogonalisation are dropped.
pub const DROP_TOLERANCE: f64 = 1e-10;

/// Homogeneous high-fidelity solutions, one column per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub params: Vec<ParameterPoint>,
    /// States without lifting, on free dofs.
    pub y: DMatrix<f64>,
    /// Adjoints on free dofs.
    pub p: DMatrix<f64>,
    /// Largest relative KKT residual over the set.
    pub max_residual: f64,
}

impl SnapshotSet {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Sub-set made of the given columns, in that order.
    pub fn select(&self, columns: &[usize]) -> SnapshotSet {
        SnapshotSet {
            params: columns.iter().map(|&c| self.params[c]).collect(),
            y: self.y.select_columns(columns),
            p: self.p.select_columns(columns),
            max_residual: self.max_residual,
        }
    }
}

/// Solves every parameter in parallel; columns follow the order of `params`.
pub fn collect_snapshots(problem: &Problem, params: &[ParameterPoint]) -> Result<SnapshotSet> {
    if params.is_empty() {
        return Err(Error::InvalidArgument("no snapshot parameters".into()));
    }
    let solutions: Vec<HfSolution> = crate::parallel::install(|| {
        params
            .par_iter()
            .map(|mu| solve_hf(problem, mu))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(snapshots_from_solutions(&solutions))
}

pub fn snapshots_from_solutions(solutions: &[HfSolution]) -> SnapshotSet {
    let n = solutions[0].y_free.len();
    let y = DMatrix::from_fn(n, solutions.len(), |i, j| solutions[j].y_free[i]);
    let p = DMatrix::from_fn(n, solutions.len(), |i, j| solutions[j].p_free[i]);
    SnapshotSet {
        params: solutions.iter().map(|s| s.mu).collect(),
        y,
        p,
        max_residual: solutions.iter().map(|s| s.residual).fold(0.0, f64::max),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `X`-orthonormal modes, one per column.
    pub modes: DMatrix<f64>,
    /// Every eigenvalue of the correlation matrix, nonincreasing and clamped at zero.
    pub eigenvalues: Vec<f64>,
}

impl PodBasis {
    pub fn len(&self) -> usize {
        self.modes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.ncols() == 0
    }
}

/// `Sᵀ X S`.
pub fn correlation_matrix(s: &DMatrix<f64>, x: &CsrMatrix) -> DMatrix<f64> {
    let g = s.transpose() * x.mul_dense(s);
    (&g + g.transpose()) * 0.5
}

/// POD of the columns of `s` in the `X` inner product, keeping up to `n` modes.
///
/// Modes are `ξ_n = S ω_n / √λ_n` with `‖ω_n‖₂ = 1`, re-orthonormalised in `X`
/// without changing the nested spans.
pub fn pod(s: &DMatrix<f64>, x: &CsrMatrix, n: usize) -> Result<PodBasis> {
    if n == 0 || n > s.ncols() {
        return Err(Error::InvalidArgument(format!(
            "POD size {n} outside 1..={}",
            s.ncols()
        )));
    }
    let (mut lambda, omega) = sym_eig_desc(&correlation_matrix(s, x));
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    if !(lambda[0] > 0.0) {
        return Err(Error::ZeroSnapshots);
    }
    let usable = lambda.iter().take_while(|&&l| l > EIGEN_CUTOFF * lambda[0]).count();
    let keep = n.min(usable);
    if keep < n {
        log::info!("POD capped at {keep} of {n} requested modes (eigenvalue cutoff)");
    }
    let mut modes = DMatrix::zeros(s.nrows(), keep);
    for k in 0..keep {
        let col = s * omega.column(k) / lambda[k].sqrt();
        modes.set_column(k, &col);
    }
    let (modes, _) = x_orthonormalize(&modes, x, 0.0);
    Ok(PodBasis {
        modes,
        eigenvalues: lambda,
    })
}

/// Modified Gram–Schmidt in the `X` inner product, applied twice. Columns whose
/// norm after the first pass is below `drop_tol` times their original norm are
/// removed; their indices are returned.
pub fn x_orthonormalize(cols: &DMatrix<f64>, x: &CsrMatrix, drop_tol: f64) -> (DMatrix<f64>, Vec<usize>) {
    let mut kept: Vec<DVector<f64>> = Vec::new();
    let mut kept_x: Vec<DVector<f64>> = Vec::new();
    let mut dropped = Vec::new();
    for c in 0..cols.ncols() {
        let mut v = cols.column(c).into_owned();
        let norm0 = x.bilinear(&v, &v).sqrt();
        for _ in 0..2 {
            for (q, xq) in kept.iter().zip(&kept_x) {
                let r = xq.dot(&v);
                v.axpy(-r, q, 1.0);
            }
        }
        let norm = x.bilinear(&v, &v).sqrt();
        if !(norm > drop_tol * norm0) || norm == 0.0 {
            dropped.push(c);
            continue;
        }
        v /= norm;
        kept_x.push(x.mul_vec(&v));
        kept.push(v);
    }
    let q = if kept.is_empty() {
        DMatrix::zeros(cols.nrows(), 0)
    } else {
        DMatrix::from_columns(&kept)
    };
    (q, dropped)
}

/// `(Σ_i ‖s_i − P_N s_i‖²_X, Σ_{n>N} λ_n)` for the `X`-orthogonal projector onto the first `n` modes.
pub fn pod_error_identity(s: &DMatrix<f64>, basis: &PodBasis, x: &CsrMatrix, n: usize) -> (f64, f64) {
    let n = n.min(basis.len());
    let xi = basis.modes.columns(0, n);
    let xs = x.mul_dense(s);
    let coeffs = xi.transpose() * &xs;
    let residual = s - xi * coeffs;
    let lhs = (0..s.ncols())
        .map(|c| {
            let r = residual.column(c).into_owned();
            x.bilinear(&r, &r)
        })
        .sum();
    let rhs = basis.eigenvalues.iter().skip(n).sum();
    (lhs, rhs)
}

/// Aggregated basis `[ξ^y_1..N, ξ^p_1..N]`, `X`-orthonormalised with rank truncation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedBasis {
    pub q: DMatrix<f64>,
    /// Positions (in the concatenated list) of columns dropped as dependent.
    pub dropped: Vec<usize>,
}

pub fn build_aggregated(y: &PodBasis, p: &PodBasis, n: usize, x: &CsrMatrix) -> AggregatedBasis {
    let ny = n.min(y.len());
    let np = n.min(p.len());
    let mut cols = DMatrix::zeros(y.modes.nrows(), ny + np);
    cols.columns_mut(0, ny).copy_from(&y.modes.columns(0, ny));
    cols.columns_mut(ny, np).copy_from(&p.modes.columns(0, np));
    let (q, dropped) = x_orthonormalize(&cols, x, DROP_TOLERANCE);
    if !dropped.is_empty() {
        log::info!("aggregation dropped {} dependent columns", dropped.len());
    }
    AggregatedBasis { q, dropped }
}

/// Reduction strategy of a [`ReducedModel`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Global POD with the control operator assembled online.
    Pod,
    /// Global POD with a DEIM-affine control operator.
    DeimPod,
    /// Local POD over a partition of the `μ_u` interval.
    Lpod,
    /// Geometric recasting on a reference domain.
    #[serde(rename = "geor")]
    GeoR,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Pod => "pod",
            Strategy::DeimPod => "deim_pod",
            Strategy::Lpod => "lpod",
            Strategy::GeoR => "geor",
        }
    }
}

/// Reduced control operator.
#[derive(Debug, Clone)]
pub enum ReducedControl {
    /// `Qᵀ C(μ) Q` assembled from the full operator at every online solve.
    Exact,
    /// `Σ_q Θ^q(μ) C_N^q`.
    Deim {
        model: DeimModel,
        components: Vec<DMatrix<f64>>,
    },
    /// `Σ_l θ_l(μ) C_N^l` of an affine control model.
    Affine(Vec<(Theta, DMatrix<f64>)>),
}

/// Galerkin projection of a [`Problem`] onto an aggregated basis.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub strategy: Strategy,
    pub q: DMatrix<f64>,
    pub state: Vec<(Theta, DMatrix<f64>)>,
    pub obs: Vec<(Theta, DMatrix<f64>)>,
    pub f: Vec<(Theta, DVector<f64>)>,
    pub y_d: Vec<(Theta, DVector<f64>)>,
    pub control: ReducedControl,
}

/// Reduced solution in basis coordinates and on free dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct RomSolution {
    pub y_n: DVector<f64>,
    pub p_n: DVector<f64>,
    /// `Q y_n`, homogeneous.
    pub y_free: DVector<f64>,
    /// `Q p_n`.
    pub p_free: DVector<f64>,
}

impl ReducedModel {
    /// Projects the affine parts of `problem`; the control is reduced per `control`.
    pub fn project(problem: &Problem, q: DMatrix<f64>, strategy: Strategy, control: ControlReduction<'_>) -> Result<Self> {
        if q.ncols() == 0 {
            return Err(Error::InvalidArgument("empty reduced basis".into()));
        }
        let mats = |terms: &[crate::fem::AffineTerm]| {
            terms.iter().map(|t| (t.theta, t.matrix.project(&q))).collect::<Vec<_>>()
        };
        let vecs = |terms: &[crate::fem::AffineVector]| {
            terms
                .iter()
                .map(|t| (t.theta, q.transpose() * &t.vector))
                .collect::<Vec<_>>()
        };
        let control = match (control, &problem.control) {
            (ControlReduction::Exact, ControlModel::Indicator(_)) => ReducedControl::Exact,
            (ControlReduction::Deim(model), ControlModel::Indicator(_)) => {
                let components = model.control_components(problem).iter().map(|c| c.project(&q)).collect();
                ReducedControl::Deim {
                    model: model.clone(),
                    components,
                }
            }
            (_, ControlModel::Affine(terms)) => ReducedControl::Affine(mats(terms)),
        };
        Ok(ReducedModel {
            strategy,
            state: mats(&problem.state),
            obs: mats(&problem.obs),
            f: vecs(&problem.f),
            y_d: vecs(&problem.y_d),
            q,
            control,
        })
    }

    /// Number of basis functions `m`; the reduced system has size `2m`.
    pub fn dim(&self) -> usize {
        self.q.ncols()
    }

    /// Reduced control block `C_N(μ)`.
    pub fn control_block(&self, problem: &Problem, mu: &ParameterPoint) -> Result<DMatrix<f64>> {
        let m = self.dim();
        Ok(match &self.control {
            ReducedControl::Exact => {
                let chi = problem
                    .indicator(mu.muu)?
                    .ok_or_else(|| Error::InvalidArgument("exact control needs an indicator".into()))?;
                problem.control_from_chi(&chi).project(&self.q)
            }
            ReducedControl::Deim { model, components } => {
                let chi = problem
                    .indicator(mu.muu)?
                    .ok_or_else(|| Error::InvalidArgument("DEIM control needs an indicator".into()))?;
                let theta = model.coefficients(&chi)?;
                components
                    .iter()
                    .zip(theta.iter())
                    .fold(DMatrix::zeros(m, m), |acc, (c, t)| acc + c * *t)
            }
            ReducedControl::Affine(terms) => combine(terms, mu, m),
        })
    }

    /// Reduced saddle matrix and right-hand side at `mu`.
    pub fn system(&self, problem: &Problem, mu: &ParameterPoint) -> Result<(DMatrix<f64>, DVector<f64>)> {
        problem.check(mu)?;
        let m = self.dim();
        let d = combine(&self.state, mu, m);
        let mo = combine(&self.obs, mu, m);
        let c = self.control_block(problem, mu)?;
        let mut k = DMatrix::zeros(2 * m, 2 * m);
        k.view_mut((0, 0), (m, m)).copy_from(&mo);
        k.view_mut((0, m), (m, m)).copy_from(&d.transpose());
        k.view_mut((m, 0), (m, m)).copy_from(&d);
        k.view_mut((m, m), (m, m)).copy_from(&(c * (-1.0 / mu.alpha)));
        let mut rhs = DVector::zeros(2 * m);
        rhs.rows_mut(0, m).copy_from(&combine_vec(&self.y_d, mu, m));
        rhs.rows_mut(m, m).copy_from(&combine_vec(&self.f, mu, m));
        Ok((k, rhs))
    }

    /// Reduced coordinates only; no work proportional to the mesh size for
    /// affine and DEIM control.
    pub fn solve_coords(&self, problem: &Problem, mu: &ParameterPoint) -> Result<(DVector<f64>, DVector<f64>)> {
        let (k, rhs) = self.system(problem, mu)?;
        let z = dense_solve(&k, &rhs)?;
        let m = self.dim();
        Ok((z.rows(0, m).into_owned(), z.rows(m, m).into_owned()))
    }

    pub fn solve(&self, problem: &Problem, mu: &ParameterPoint) -> Result<RomSolution> {
        let (y_n, p_n) = self.solve_coords(problem, mu)?;
        Ok(RomSolution {
            y_free: &self.q * &y_n,
            p_free: &self.q * &p_n,
            y_n,
            p_n,
        })
    }
}

/// How to reduce the control operator of an indicator-based problem.
#[derive(Debug, Clone, Copy)]
pub enum ControlReduction<'a> {
    Exact,
    Deim(&'a DeimModel),
}

fn combine(terms: &[(Theta, DMatrix<f64>)], mu: &ParameterPoint, m: usize) -> DMatrix<f64> {
    terms
        .iter()
        .fold(DMatrix::zeros(m, m), |acc, (t, a)| acc + a * t.eval(mu))
}

fn combine_vec(terms: &[(Theta, DVector<f64>)], mu: &ParameterPoint, m: usize) -> DVector<f64> {
    terms
        .iter()
        .fold(DVector::zeros(m), |acc, (t, v)| acc + v * t.eval(mu))
}

/// `‖y_h − y_N‖_X / ‖y_h‖_X` and the same for the adjoint. Norms use the full
/// `H¹` matrix, so the state norm includes the lifting.
pub fn relative_errors(problem: &Problem, hf: &HfSolution, rom: &RomSolution) -> Result<(f64, f64)> {
    let x = problem.norm_matrix_full();
    let dofs = problem.dofs();
    let zero = DVector::zeros(dofs.n_full());
    let rel = |full: &DVector<f64>, diff_free: DVector<f64>| -> Result<f64> {
        let den = x.bilinear(full, full).sqrt();
        if !(den > 0.0) {
            return Err(Error::ZeroNorm);
        }
        let diff = dofs.extend(&diff_free, &zero);
        Ok(x.bilinear(&diff, &diff).sqrt() / den)
    };
    Ok((
        rel(&hf.y, &hf.y_free - &rom.y_free)?,
        rel(&hf.p, &hf.p_free - &rom.p_free)?,
    ))
}
