//! Dense symmetric eigenproblems for the small spectra the hodge module
//! needs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(a: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let sym = (&a + a.transpose()) * 0.5;
    let e = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let values = order.iter().map(|&i| e.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| e.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// A v = λ B v with B symmetric positive definite; vectors are
/// B-orthonormal.
pub fn gen_sym_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let chol = b.clone().cholesky().ok_or_else(|| Error::Eigen("metric matrix is not positive definite".into()))?;
    let l = chol.l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("singular Cholesky factor".into()))?;
    let c = &linv * a * linv.transpose();
    let (vals, vecs) = sym_eigen(c);
    Ok((vals, linv.transpose() * vecs))
}

/// Dense eigen of a diagonally scaled operator: eigenvalues of
/// D^{-1/2} A D^{-1/2}, i.e. of A v = λ D v for diagonal D > 0.
pub fn diag_gen_eigen(a: &DMatrix<f64>, d: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
    let s: Vec<f64> = d.iter().map(|v| 1.0 / v.sqrt()).collect();
    let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |r, c| a[(r, c)] * s[r] * s[c]);
    let (vals, vecs) = sym_eigen(scaled);
    let back = DMatrix::from_fn(vecs.nrows(), vecs.ncols(), |r, c| vecs[(r, c)] * s[r]);
    (vals, back)
}

pub fn column(m: &DMatrix<f64>, c: usize) -> Vec<f64> {
    m.column(c).iter().copied().collect()
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
