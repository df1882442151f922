//! Inf-sup stability of the optimality system: the constants of the lower
//! bound, the bound itself and the discrete inf-sup constant for comparison.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::OperatorSet;
use crate::linalg::dense::{generalized_sym_eigenvalues, whiten};
use crate::linalg::{CsrMatrix, SparseLu};
use crate::ocp::assemble_saddle;

/// Largest size handled with dense eigensolvers.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StabilityConstants {
    pub gamma_a: f64,
    pub gamma_t: f64,
    pub c_omega: f64,
    pub alpha: f64,
}

/// The bound with the intermediate constants used to derive it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub beta: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// `α γ_a / γ_T` (infinite without control).
    pub epsilon: f64,
    /// `C_Ω / γ_a`.
    pub eta: f64,
    /// `2 γ_a / C_Ω`.
    pub c1: f64,
    /// `2 α γ_a / γ_T` (infinite without control).
    pub c2: f64,
}

fn symmetric_part(a: &CsrMatrix) -> DMatrix<f64> {
    let d = a.to_dense();
    (&d + d.transpose()) * 0.5
}

/// Extreme eigenvalue of `A v = λ X v` by power iteration on `X⁻¹A`
/// (`largest`) or on `A⁻¹X` (smallest, `A` positive definite).
fn iterative_extreme(a: &CsrMatrix, x: &CsrMatrix, largest: bool) -> Result<f64> {
    let n = a.nrows();
    let solver = SparseLu::factor(if largest { x } else { a })?;
    let rhs = if largest { a } else { x };
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 97) as f64 / 97.0);
    let mut lambda = f64::NAN;
    for _ in 0..20_000 {
        let w = solver.solve(&rhs.mul_vec(&v));
        let nw = x.bilinear(&w, &w).sqrt();
        if !(nw > 0.0) {
            return Ok(0.0);
        }
        v = w / nw;
        let next = a.bilinear(&v, &v);
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Err(Error::Eigen("power iteration did not converge".into()))
}

fn extreme(a: &CsrMatrix, sym_a: impl FnOnce() -> DMatrix<f64>, x: &CsrMatrix, largest: bool) -> Result<f64> {
    if a.nrows() <= DENSE_LIMIT {
        let vals = generalized_sym_eigenvalues(&sym_a(), &x.to_dense())?;
        Ok(if largest { vals[vals.len() - 1] } else { vals[0] })
    } else {
        iterative_extreme(a, x, largest)
    }
}

/// `γ_a = λ_min(sym D_a, X)`; an error when not positive.
pub fn coercivity_constant(d_a: &CsrMatrix, x: &CsrMatrix) -> Result<f64> {
    let sym = if d_a.nrows() <= DENSE_LIMIT {
        None
    } else {
        Some(CsrMatrix::linear_combination(&[(0.5, d_a), (0.5, &d_a.transpose())]))
    };
    let g = match &sym {
        None => extreme(d_a, || symmetric_part(d_a), x, false)?,
        Some(s) => extreme(s, || unreachable!(), x, false)?,
    };
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::CoercivityLost(g))
    }
}

/// `λ_max(A, X)` for a symmetric positive semidefinite `A`; zero when `A = 0`.
pub fn max_generalized(a: &CsrMatrix, x: &CsrMatrix) -> Result<f64> {
    if a.nnz() == 0 {
        return Ok(0.0);
    }
    Ok(extreme(a, || symmetric_part(a), x, true)?.max(0.0))
}

/// `γ_T = λ_max(C, X)`.
pub fn trace_constant(c: &CsrMatrix, x: &CsrMatrix) -> Result<f64> {
    max_generalized(c, x)
}

/// `C_Ω = λ_max(M_o, X)`.
pub fn obs_constant(m_o: &CsrMatrix, x: &CsrMatrix) -> Result<f64> {
    max_generalized(m_o, x)
}

pub fn constants(ops: &OperatorSet<'_>, alpha: f64) -> Result<StabilityConstants> {
    Ok(StabilityConstants {
        gamma_a: coercivity_constant(&ops.d_a, ops.x)?,
        gamma_t: trace_constant(&ops.c, ops.x)?,
        c_omega: obs_constant(&ops.m_o, ops.x)?,
        alpha,
    })
}

/// `β_LB = γ_a² min{α/γ_T, 1/C_Ω} / max{√(8α²γ_a²/γ_T² + 1), √(4γ_a²/C_Ω² + 2)}`.
///
/// With `γ_T = 0` only the observation branch remains:
/// `γ_a²/C_Ω / √(4γ_a²/C_Ω² + 2)`.
pub fn beta_lower_bound(k: &StabilityConstants) -> Result<LowerBound> {
    let StabilityConstants {
        gamma_a: ga,
        gamma_t: gt,
        c_omega: co,
        alpha,
    } = *k;
    if !(ga > 0.0) {
        return Err(Error::CoercivityLost(ga));
    }
    if !(co > 0.0) || !(alpha > 0.0) || !(gt >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lower bound needs C_Ω > 0, α > 0, γ_T ≥ 0 (got {co}, {alpha}, {gt})"
        )));
    }
    let obs_branch = (4.0 * ga * ga / (co * co) + 2.0).sqrt();
    let (numerator, denominator) = if gt > 0.0 {
        (
            ga * ga * (alpha / gt).min(1.0 / co),
            (8.0 * alpha * alpha * ga * ga / (gt * gt) + 1.0).sqrt().max(obs_branch),
        )
    } else {
        (ga * ga / co, obs_branch)
    };
    Ok(LowerBound {
        beta: numerator / denominator,
        numerator,
        denominator,
        epsilon: alpha * ga / gt,
        eta: co / ga,
        c1: 2.0 * ga / co,
        c2: 2.0 * alpha * ga / gt,
    })
}

fn block_cholesky(x: &CsrMatrix) -> Result<DMatrix<f64>> {
    let l = nalgebra::Cholesky::new(x.to_dense())
        .ok_or_else(|| Error::Eigen("norm matrix is not positive definite".into()))?
        .unpack();
    let n = l.nrows();
    let mut big = DMatrix::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&l);
    big.view_mut((n, n), (n, n)).copy_from(&l);
    Ok(big)
}

/// `β_h = σ_min(L⁻¹ K L⁻ᵀ)` with `diag(X, X) = L Lᵀ`, dense.
pub fn beta_h_direct(ops: &OperatorSet<'_>, alpha: f64) -> Result<f64> {
    let k = assemble_saddle(ops, alpha)?;
    beta_h_of(&k.to_dense(), ops.x)
}

/// Discrete inf-sup constant of a dense `2n × 2n` operator against `diag(X, X)`.
pub fn beta_h_of(k: &DMatrix<f64>, x: &CsrMatrix) -> Result<f64> {
    let l = block_cholesky(x)?;
    let w = whiten(k, &l)?;
    let s = w.singular_values();
    Ok(s.min())
}
