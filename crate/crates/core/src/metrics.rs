//! Closed-form separability measures between two Gaussian classes.
//!
//! All log-determinants go through Cholesky factors (sum of log pivots), so
//! the measures stay finite at `p` in the thousands where raw determinants
//! overflow or underflow.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{ProjectionMatrix, TwoClassGaussian};

/// A Chernoff distance together with the associated overlap bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapReport {
    /// `δ(s)`.
    pub distance: f64,
    /// `π₁^s π₂^{1−s} e^{−δ(s)}`; the Bhattacharyya overlap when `s = ½`.
    pub overlap: f64,
    pub s: f64,
}

struct Factored {
    log_det: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

fn factor(m: &DMatrix<f64>) -> Result<Factored> {
    let dim = m.nrows();
    let chol = linalg::cholesky(m).ok_or(Error::SingularBlend { dim })?;
    let log_det = linalg::log_det_from_cholesky(&chol);
    if !log_det.is_finite() {
        return Err(Error::SingularBlend { dim });
    }
    Ok(Factored { log_det, chol })
}

fn mahalanobis_sq(f: &Factored, d: &DVector<f64>) -> f64 {
    if d.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    d.dot(&f.chol.solve(d))
}

/// Chernoff distance `δ(s)` between the two classes of `model`.
pub fn chernoff_distance(model: &TwoClassGaussian, s: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidExponent(s));
    }
    let blend = model.cov_1().matrix() * s + model.cov_2().matrix() * (1.0 - s);
    let blend = factor(&blend)?;
    let c1 = factor(model.cov_1().matrix())?;
    let c2 = factor(model.cov_2().matrix())?;
    let diff = model.mean_2() - model.mean_1();
    let mean_term = 0.5 * s * (1.0 - s) * mahalanobis_sq(&blend, &diff);
    let cov_term = 0.5 * (blend.log_det - s * c1.log_det - (1.0 - s) * c2.log_det);
    Ok((mean_term + cov_term).max(0.0))
}

/// Bhattacharyya distance `δ(½)`, written with the average covariance
/// `(Σ₁+Σ₂)/2`.
pub fn bhattacharyya_distance(model: &TwoClassGaussian) -> Result<f64> {
    let avg = (model.cov_1().matrix() + model.cov_2().matrix()) * 0.5;
    let avg = factor(&avg)?;
    let c1 = factor(model.cov_1().matrix())?;
    let c2 = factor(model.cov_2().matrix())?;
    let diff = model.mean_2() - model.mean_1();
    let cov_term = 0.5 * avg.log_det - 0.25 * (c1.log_det + c2.log_det);
    let mean_term = 0.125 * mahalanobis_sq(&avg, &diff);
    Ok((cov_term + mean_term).max(0.0))
}

/// Distance and overlap at `s = ½`.
pub fn bhattacharyya_report(model: &TwoClassGaussian) -> Result<OverlapReport> {
    let distance = bhattacharyya_distance(model)?;
    let (w1, w2) = model.weights();
    Ok(OverlapReport { distance, overlap: (w1 * w2).sqrt() * (-distance).exp(), s: 0.5 })
}

/// Bhattacharyya overlap `ε_BB = √(π₁π₂)·e^{−δ(½)}`, an upper bound on the
/// Bayes risk.
pub fn bhattacharyya_overlap(model: &TwoClassGaussian) -> Result<f64> {
    Ok(bhattacharyya_report(model)?.overlap)
}

/// Bhattacharyya overlap of the projected model `(π_k, Wᵗμ_k, WᵗΣ_kW)`.
pub fn embedded_overlap(model: &TwoClassGaussian, w: &ProjectionMatrix) -> Result<f64> {
    bhattacharyya_overlap(&model.project(w)?)
}

/// `ln((√λ + 1/√λ)/2)`: the contribution of one generalized eigenvalue to the
/// Bhattacharyya distance of the optimal embedding. Zero at `λ = 1`.
pub fn eigen_separation(lambda: f64) -> f64 {
    let r = lambda.sqrt();
    ((r + 1.0 / r) * 0.5).ln()
}

/// Overlap reached by the optimal zero-mean embedding whose generalized
/// eigenvalues are `eigenvalues`:
/// `√(π₁π₂)·(∏_j (λ_j^{½}+λ_j^{−½})/2)^{−½}`.
pub fn optimal_overlap_closed_form(eigenvalues: &[f64], weights: (f64, f64)) -> Result<f64> {
    let mut log_prod = 0.0;
    for &l in eigenvalues {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::NonPositiveEigenvalue(l));
        }
        log_prod += eigen_separation(l);
    }
    Ok((weights.0 * weights.1).sqrt() * (-0.5 * log_prod).exp())
}
