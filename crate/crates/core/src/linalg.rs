//! Thin SVD shared by the tensor routines.

use nalgebra::DMatrix;

/// Thin SVD, singular values non-increasing.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub vt: DMatrix<f64>,
}

pub(crate) fn thin_svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return Svd { u: DMatrix::zeros(rows, 0), s: Vec::new(), vt: DMatrix::zeros(0, cols) };
    }
    let a = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("SVD of a finite matrix converges");
    let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
    Svd {
        u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
        s: (0..k).map(|i| s[i]).collect(),
        vt: DMatrix::from_fn(k, cols, |i, j| v[(j, i)]),
    }
}
