//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

/// `(A + Aᵗ) / 2`, written entrywise so that an already symmetric input is
/// reproduced bit-for-bit.
pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]))
}

/// `Wᵗ A W`, symmetrized.
pub(crate) fn congruence(a: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let aw = a * w;
    symmetrize(&(w.transpose() * aw))
}

pub(crate) fn cholesky(a: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(a.clone())
}

pub(crate) fn log_det_from_cholesky(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Squared ratio of smallest to largest Cholesky pivot; a cheap lower bound
/// proxy for the reciprocal condition number.
pub(crate) fn pivot_ratio(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..l.nrows() {
        let d = l[(i, i)].abs();
        lo = lo.min(d);
        hi = hi.max(d);
    }
    if hi == 0.0 {
        0.0
    } else {
        (lo / hi).powi(2)
    }
}

/// Symmetric eigendecomposition sorted by descending eigenvalue. Ties keep the
/// solver's original order (stable sort).
pub(crate) fn eigen_descending(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(a.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub(crate) fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Thin QR orthonormalization of the columns of `m`, keeping column order so
/// that leading columns span nested subspaces.
pub(crate) fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let q = m.clone().qr().q();
    let mut out = q.columns(0, m.ncols()).into_owned();
    for mut col in out.column_iter_mut() {
        let mut v = col.clone_owned();
        canonical_sign(&mut v);
        col.copy_from(&v);
    }
    out
}

/// Solves `L x = b` in place for lower-triangular `l` stored row-major.
pub(crate) fn forward_substitute(l: &[f64], dim: usize, b: &mut [f64]) {
    for i in 0..dim {
        let row = &l[i * dim..i * dim + i];
        let s: f64 = row.iter().zip(&b[..i]).map(|(a, x)| a * x).sum();
        b[i] = (b[i] - s) / l[i * dim + i];
    }
}

/// Row-major copy of the lower Cholesky factor.
pub(crate) fn lower_row_major(chol: &Cholesky<f64, Dyn>) -> Vec<f64> {
    let l = chol.l();
    let n = l.nrows();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            out[i * n + j] = l[(i, j)];
        }
    }
    out
}

pub(crate) fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|x| x * x).sum::<f64>().sqrt()
}
