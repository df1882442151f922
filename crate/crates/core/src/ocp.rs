//! High-fidelity optimality system: assembly, solution, control recovery and cost.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{OperatorSet, Problem};
use crate::linalg::{CooBuilder, CsrMatrix, SparseLu};

/// Penalisation used by every built-in experiment.
pub const DEFAULT_ALPHA: f64 = 0.07;

/// Relative residual required of every high-fidelity solve.
pub const KKT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub muu: f64,
    pub alpha: f64,
}

impl ParameterPoint {
    pub fn new(mu1: f64, mu2: f64, muu: f64) -> Self {
        ParameterPoint {
            mu1,
            mu2,
            muu,
            alpha: DEFAULT_ALPHA,
        }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        ParameterPoint { alpha, ..self }
    }
}

/// `K = [[M_o, D_aᵀ], [D_a, −C/α]]` acting on `[y; p]`.
pub fn assemble_saddle(ops: &OperatorSet<'_>, alpha: f64) -> Result<CsrMatrix> {
    if !(alpha > 0.0) {
        return Err(Error::ParameterRange {
            name: "alpha",
            value: alpha,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(saddle_from_blocks(&ops.m_o, &ops.d_a, &ops.c, alpha))
}

pub(crate) fn saddle_from_blocks(m: &CsrMatrix, d: &CsrMatrix, c: &CsrMatrix, alpha: f64) -> CsrMatrix {
    let n = d.nrows();
    let cap = m.nnz() + 2 * d.nnz() + c.nnz();
    let mut b = CooBuilder::with_capacity(2 * n, 2 * n, cap);
    for (i, j, v) in m.triplets() {
        b.push(i, j, v);
    }
    for (i, j, v) in d.triplets() {
        b.push(n + i, j, v);
        b.push(j, n + i, v);
    }
    for (i, j, v) in c.triplets() {
        b.push(n + i, n + j, -v / alpha);
    }
    b.build()
}

/// Optimal state, adjoint and control for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct HfSolution {
    pub mu: ParameterPoint,
    /// State on the full vertex set, lifting included.
    pub y: DVector<f64>,
    /// Adjoint on the full vertex set.
    pub p: DVector<f64>,
    /// Homogeneous state on free dofs.
    pub y_free: DVector<f64>,
    /// Adjoint on free dofs.
    pub p_free: DVector<f64>,
    /// Free dofs on which the control acts (nonzero rows of `C`).
    pub control_dofs: Vec<usize>,
    /// `p / α` at `control_dofs`.
    pub u: Vec<f64>,
    pub cost: f64,
    /// `‖K z − rhs‖₂ / ‖rhs‖₂`.
    pub residual: f64,
}

impl HfSolution {
    /// Control as a free-dof vector, zero away from the control boundary.
    pub fn u_free(&self) -> DVector<f64> {
        let mut u = DVector::zeros(self.y_free.len());
        for (&k, &v) in self.control_dofs.iter().zip(&self.u) {
            u[k] = v;
        }
        u
    }
}

/// Free dofs with a nonzero row in `C`.
pub fn control_support(c: &CsrMatrix) -> Vec<usize> {
    (0..c.nrows()).filter(|&i| c.row(i).1.iter().any(|&v| v != 0.0)).collect()
}

/// Tracking plus control cost `½ ‖y − y_d‖²_obs + (α/2) uᵀ C u`.
///
/// `y` is the full state (lifting included), `u` the control on free dofs.
pub fn evaluate_cost(ops: &OperatorSet<'_>, mu: &ParameterPoint, y: &DVector<f64>, u: &DVector<f64>) -> f64 {
    let e = y.add_scalar(-mu.mu2);
    let tracking = 0.5 * ops.m_o_full.bilinear(&e, &e);
    tracking + 0.5 * mu.alpha * ops.c.bilinear(u, u)
}

/// Solves the saddle system with a fresh factorisation; one step of iterative
/// refinement is applied when the first residual misses [`KKT_TOLERANCE`].
pub fn solve_saddle(k: &CsrMatrix, rhs: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let lu = SparseLu::factor(k)?;
    let norm = rhs.norm();
    if norm == 0.0 {
        return Ok((DVector::zeros(rhs.len()), 0.0));
    }
    let mut z = lu.solve(rhs);
    let mut r = rhs - k.mul_vec(&z);
    for _ in 0..2 {
        if r.norm() <= KKT_TOLERANCE * norm {
            break;
        }
        z += lu.solve(&r);
        r = rhs - k.mul_vec(&z);
    }
    let residual = r.norm() / norm;
    if residual > KKT_TOLERANCE {
        return Err(Error::InaccurateSolve {
            residual,
            tol: KKT_TOLERANCE,
        });
    }
    Ok((z, residual))
}

/// Solves the optimality system of `problem` at `mu`.
pub fn solve_hf(problem: &Problem, mu: &ParameterPoint) -> Result<HfSolution> {
    let wrap = |e: Error| Error::SolveFailed {
        mu1: mu.mu1,
        mu2: mu.mu2,
        muu: mu.muu,
        source: Box::new(e),
    };
    let ops = problem.assemble(mu).map_err(wrap)?;
    solve_with_operators(&ops, mu).map_err(wrap)
}

/// Solves with operators that were already assembled for `mu`.
pub fn solve_with_operators(ops: &OperatorSet<'_>, mu: &ParameterPoint) -> Result<HfSolution> {
    let n = ops.d_a.nrows();
    let k = assemble_saddle(ops, mu.alpha)?;
    let rhs = DVector::from_iterator(2 * n, ops.y_d.iter().chain(ops.f.iter()).copied());
    let (z, residual) = solve_saddle(&k, &rhs)?;
    let y_free = z.rows(0, n).into_owned();
    let p_free = z.rows(n, n).into_owned();
    let control_dofs = control_support(&ops.c);
    let u: Vec<f64> = control_dofs.iter().map(|&i| p_free[i] / mu.alpha).collect();
    let mut sol = HfSolution {
        mu: *mu,
        y: ops.dofs.extend(&y_free, ops.lifting),
        p: ops.dofs.extend(&p_free, &DVector::zeros(ops.dofs.n_full())),
        y_free,
        p_free,
        control_dofs,
        u,
        cost: 0.0,
        residual,
    };
    sol.cost = evaluate_cost(ops, mu, &sol.y, &sol.u_free());
    Ok(sol)
}
