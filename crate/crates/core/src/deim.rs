//! Discrete empirical interpolation of the nodal control indicator.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fem::Problem;
use crate::linalg::dense::{dense_solve, reciprocal_condition, sym_eig_desc};
use crate::linalg::CsrMatrix;
use crate::mesh::{control_indicator, Geometry, Mesh};

/// Default stopping tolerance on `λ_{N+1} / λ₁`.
pub const DEFAULT_TOL: f64 = 1e-5;

/// Indicator vectors for every `μ_u`, duplicates removed (first occurrence kept).
pub fn chi_snapshots(mesh: &Mesh, geometry: &Geometry, muus: &[f64]) -> Result<DMatrix<f64>> {
    if muus.is_empty() {
        return Err(Error::InvalidArgument("no indicator parameters".into()));
    }
    let mut patterns: Vec<Vec<f64>> = Vec::new();
    for &muu in muus {
        let chi = control_indicator(mesh, muu, geometry)?.nodal_values;
        if !patterns.contains(&chi) {
            patterns.push(chi);
        }
    }
    Ok(DMatrix::from_fn(mesh.n_vertices(), patterns.len(), |i, j| patterns[j][i]))
}

/// Euclidean POD of `chi`. Keeps the smallest `N` with `λ_{N+1}/λ₁ < tol`,
/// never more than the number of columns. Returns `(Z, all eigenvalues)`.
pub fn deim_basis(chi: &DMatrix<f64>, tol: f64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("DEIM tolerance {tol} must be positive")));
    }
    let gram = chi.transpose() * chi;
    let (mut lambda, omega) = sym_eig_desc(&gram);
    lambda.iter_mut().for_each(|l| *l = l.max(0.0));
    if chi.ncols() == 0 || !(lambda[0] > 0.0) {
        return Err(Error::ZeroSnapshots);
    }
    let ratio = |k: usize| lambda.get(k).copied().unwrap_or(0.0) / lambda[0];
    let n = (1..=chi.ncols()).find(|&n| ratio(n) < tol).unwrap_or(chi.ncols());
    let n = n.min(lambda.iter().filter(|&&l| l > crate::rom::EIGEN_CUTOFF * lambda[0]).count());
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let mut v = chi * omega.column(k) / lambda[k].sqrt();
        for _ in 0..2 {
            for q in &cols {
                let r = q.dot(&v);
                v.axpy(-r, q, 1.0);
            }
        }
        v /= v.norm();
        cols.push(v);
    }
    Ok((DMatrix::from_columns(&cols), lambda))
}

fn argmax_abs(v: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, -1.0);
    for (i, x) in v.enumerate() {
        if x.abs() > best.1 {
            best = (i, x.abs());
        }
    }
    best
}

/// Greedy interpolation indices; ties go to the smallest index.
pub fn magic_points(z: &DMatrix<f64>) -> Result<Vec<usize>> {
    let mut indices = Vec::with_capacity(z.ncols());
    for q in 0..z.ncols() {
        let col = z.column(q).into_owned();
        let residual = if q == 0 {
            col.clone()
        } else {
            let zq = z.columns(0, q).into_owned();
            let pz = zq.select_rows(&indices);
            let rhs = DVector::from_iterator(q, indices.iter().map(|&i| col[i]));
            let c = dense_solve(&pz, &rhs)?;
            &col - zq * c
        };
        let (i, r) = argmax_abs(residual.iter().copied());
        if !(r > 1e-12 * col.amax()) {
            return Err(Error::RedundantBasis { column: q });
        }
        indices.push(i);
    }
    Ok(indices)
}

/// DEIM approximation `χ ≈ Z (PᵀZ)⁻¹ Pᵀ χ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimModel {
    pub z: DMatrix<f64>,
    pub indices: Vec<usize>,
    /// `PᵀZ`.
    pub interpolation: DMatrix<f64>,
    /// Reciprocal condition number of `PᵀZ`.
    pub rcond: f64,
    pub eigenvalues: Vec<f64>,
    pub pattern_count: usize,
    pub tol: f64,
}

impl DeimModel {
    pub fn build(chi: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let (z, eigenvalues) = deim_basis(chi, tol)?;
        Self::from_basis(z, eigenvalues, chi.ncols(), tol)
    }

    pub fn from_basis(z: DMatrix<f64>, eigenvalues: Vec<f64>, pattern_count: usize, tol: f64) -> Result<Self> {
        let indices = magic_points(&z)?;
        let interpolation = z.select_rows(&indices);
        let rcond = reciprocal_condition(&interpolation);
        Ok(DeimModel {
            z,
            indices,
            interpolation,
            rcond,
            eigenvalues,
            pattern_count,
            tol,
        })
    }

    pub fn len(&self) -> usize {
        self.z.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.z.ncols() == 0
    }

    /// `Θ` solving `(PᵀZ) Θ = Pᵀ χ`.
    pub fn coefficients(&self, chi: &[f64]) -> Result<DVector<f64>> {
        let rhs = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| chi[i]));
        dense_solve(&self.interpolation, &rhs)
    }

    pub fn reconstruct(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.z * theta
    }

    /// `C^q = Σ_k (z_q)_k B^k` on free dofs.
    pub fn control_components(&self, problem: &Problem) -> Vec<CsrMatrix> {
        (0..self.len())
            .map(|q| problem.control_from_chi(self.z.column(q).as_slice()))
            .collect()
    }
}

/// `C_N^q = Qᵀ C^q Q` for every DEIM component.
pub fn affine_control_reduced(model: &DeimModel, problem: &Problem, q: &DMatrix<f64>) -> Vec<DMatrix<f64>> {
    model.control_components(problem).iter().map(|c| c.project(q)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn magic_points_by_hand() {
        let z1 = DMatrix::from_column_slice(3, 1, &[0.1, 0.9, 0.3]);
        assert_eq!(magic_points(&z1).unwrap(), vec![1]);
        let z2 = DMatrix::from_column_slice(3, 2, &[0.1, 0.9, 0.3, 1.0, 0.0, 0.0]);
        assert_eq!(magic_points(&z2).unwrap(), vec![1, 0]);
        let perm = DMatrix::from_column_slice(3, 3, &[0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert_eq!(magic_points(&perm).unwrap(), vec![2, 0, 1]);
    }

    #[test]
    fn two_unit_patterns() {
        let chi = DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        for tol in [0.9, 1e-5] {
            let m = DeimModel::build(&chi, tol).unwrap();
            assert_eq!(m.len(), 2);
            assert!(m.z.row(2).amax() < 1e-15);
        }
    }

    #[test]
    fn single_pattern() {
        let chi = DMatrix::from_column_slice(4, 1, &[1.0, 1.0, 0.0, 1.0]);
        let m = DeimModel::build(&chi, 1e-5).unwrap();
        assert_eq!(m.len(), 1);
        assert!((m.z.column(0).abs() - chi.column(0) / 3f64.sqrt()).amax() < 1e-15);
    }

    #[test]
    fn coefficients_interpolate() {
        let chi = DMatrix::from_column_slice(4, 3, &[1.0, 1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        let m = DeimModel::build(&chi, 1e-8).unwrap();
        for q in 0..m.len() {
            let theta = m.coefficients(m.z.column(q).as_slice()).unwrap();
            let mut e = DVector::zeros(m.len());
            e[q] = 1.0;
            assert!((theta - e).amax() < 1e-13);
        }
        assert_eq!(m.coefficients(&[0.0; 4]).unwrap().amax(), 0.0);
        assert!(matches!(deim_basis(&DMatrix::zeros(4, 2), 1e-5), Err(Error::ZeroSnapshots)));
    }
}
