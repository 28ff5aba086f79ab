//! Block-diagonal two-class models with closed-form answers.
//!
//! Both models are balanced and zero-mean, with
//! `Σ₁ = diag(α I_q, δ I_{p−q})` and `0 < δ < α`.
//!
//! * [`example1`]: `Σ₂ = δ I_p`. PCA and the optimal projection both select
//!   the first `q` coordinates.
//! * [`example2`]: `Σ₂ = α I_p`, `q ≤ p/2`. PCA selects the first `q`
//!   coordinates, where the classes coincide; the optimal projection picks
//!   from the remaining ones.
//!
//! In both cases the best `q`-dimensional overlap is [`bound_example`].

use crate::error::{Error, Result};
use crate::types::{SpdMatrix, TwoClassGaussian};

/// Ambient dimension used when a fixture is requested without one.
pub const DEFAULT_DIM: usize = 10;

fn check(p: usize, q: usize, alpha: f64, delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < alpha && alpha.is_finite()) {
        return Err(Error::ConfigRejected(format!(
            "fixture needs 0 < delta < alpha (got alpha={alpha}, delta={delta})"
        )));
    }
    if q == 0 || q > p {
        return Err(Error::QExceedsP { q, p });
    }
    Ok(())
}

fn block_cov(p: usize, q: usize, alpha: f64, delta: f64) -> SpdMatrix {
    let diag: Vec<f64> = (0..p).map(|i| if i < q { alpha } else { delta }).collect();
    SpdMatrix::from_diagonal(&diag).expect("positive diagonal")
}

/// `Σ₁ = diag(α I_q, δ I_{p−q})`, `Σ₂ = δ I_p`.
pub fn example1(p: usize, q: usize, alpha: f64, delta: f64) -> Result<TwoClassGaussian> {
    check(p, q, alpha, delta)?;
    TwoClassGaussian::centered(block_cov(p, q, alpha, delta), block_cov(p, 0, delta, delta))
}

/// `Σ₁ = diag(α I_q, δ I_{p−q})`, `Σ₂ = α I_p`; requires `2q ≤ p`.
pub fn example2(p: usize, q: usize, alpha: f64, delta: f64) -> Result<TwoClassGaussian> {
    check(p, q, alpha, delta)?;
    if 2 * q > p {
        return Err(Error::ConfigRejected(format!("example2 needs q <= p/2 (got p={p}, q={q})")));
    }
    TwoClassGaussian::centered(block_cov(p, q, alpha, delta), block_cov(p, 0, alpha, alpha))
}

/// `½ · (((α/δ)^½ + (δ/α)^½)/2)^{−q/2}`.
pub fn bound_example(alpha: f64, delta: f64, q: usize) -> f64 {
    let r = (alpha / delta).sqrt();
    let factor = (r + 1.0 / r) * 0.5;
    0.5 * factor.powf(-(q as f64) / 2.0)
}
