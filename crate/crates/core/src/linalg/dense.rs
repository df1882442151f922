use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Symmetric eigen-decomposition sorted by descending eigenvalue.
pub fn sym_eig_desc(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..a.nrows()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of the symmetric-definite pencil `A v = λ B v`, ascending.
///
/// Reduces to the standard problem `L⁻¹ A L⁻ᵀ` with `B = L Lᵀ`.
pub fn generalized_sym_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Vec<f64>> {
    let l = nalgebra::Cholesky::new(b.clone())
        .ok_or_else(|| Error::Eigen("norm matrix is not positive definite".into()))?
        .unpack();
    let reduced = whiten(a, &l)?;
    let sym = (&reduced + reduced.transpose()) * 0.5;
    let mut vals: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(vals)
}

/// `L⁻¹ A L⁻ᵀ` for a lower-triangular `L`.
pub fn whiten(a: &DMatrix<f64>, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let fail = || Error::Eigen("triangular solve failed".into());
    let left = l.solve_lower_triangular(a).ok_or_else(fail)?;
    let right = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(fail)?;
    Ok(right.transpose())
}

/// Solves a small dense system; reports a reciprocal condition estimate on failure.
pub fn dense_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.nrows();
    let x = a.clone().lu().solve(b);
    match x {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::SingularReduced {
            size: n,
            rcond: reciprocal_condition(a),
        }),
    }
}

/// `σ_min / σ_max` from a full SVD.
pub fn reciprocal_condition(a: &DMatrix<f64>) -> f64 {
    let s = a.clone().singular_values();
    let max = s.max();
    if max == 0.0 {
        0.0
    } else {
        s.min() / max
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pencil_with_diagonal_norm() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 6.0]));
        let b = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let vals = generalized_sym_eigenvalues(&a, &b).unwrap();
        assert!((vals[0] - 2.0).abs() < 1e-14 && (vals[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn descending_order() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 4.0]);
        let (vals, vecs) = sym_eig_desc(&a);
        assert_eq!(vals, vec![4.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
