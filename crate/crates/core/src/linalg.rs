//! Symmetric-matrix helpers shared by the estimators.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Eigenvectors of a symmetric PSD matrix whose eigenvalues exceed
/// `rel_tol` times the largest, with those eigenvalues.
pub(crate) fn support(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, DVector<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let keep: Vec<usize> = (0..m.nrows()).filter(|&k| eig.eigenvalues[k] > max * rel_tol && eig.eigenvalues[k] > 0.0).collect();
    let u = DMatrix::from_fn(m.nrows(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    let l = DVector::from_iterator(keep.len(), keep.iter().map(|&k| eig.eigenvalues[k]));
    (u, l)
}

/// Moore–Penrose inverse of a symmetric PSD matrix.
pub(crate) fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, l) = support(m, 1e-12);
    let d = DMatrix::from_diagonal(&l.map(|x| 1.0 / x));
    &u * d * u.transpose()
}

/// Pseudo inverse square root of a symmetric PSD matrix.
pub(crate) fn pinv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, l) = support(m, 1e-12);
    let d = DMatrix::from_diagonal(&l.map(|x| 1.0 / x.sqrt()));
    &u * d * u.transpose()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// log(1 + eˣ) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
