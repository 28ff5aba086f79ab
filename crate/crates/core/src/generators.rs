//! Covariance-pair families and the sampling primitives behind them.
//!
//! * inverse Wishart: `Σ_k = df_k · W⁻¹`, `W ~ Wishart(I_p, df_k)`;
//! * latent low dimension: `Σ_k = (r+1) Q_kᵗΘ_kQ_k + 0.02·p·M_k`;
//! * empirical covariance of a real two-group dataset after column overlap.

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::mean_and_covariance;
use crate::rng::RngStream;
use crate::types::{check_dim, SpdMatrix};

/// Density of the sparse mixing matrices (probability an entry is nonzero).
pub const DEFAULT_SPARSE_DENSITY: f64 = 0.1;

/// How the latent mixing matrices `Q_k` are drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mixing {
    /// iid standard normal entries.
    Dense,
    /// Each entry is kept with probability `density` (standard normal), else zero.
    Sparse { density: f64 },
}

impl Mixing {
    pub fn name(&self) -> &'static str {
        match self {
            Mixing::Dense => "dense",
            Mixing::Sparse { .. } => "sparse",
        }
    }
}

/// Parameters of the latent low-dimension family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentConfig {
    /// `Q₁ = Q₂`.
    pub share_q: bool,
    /// `Θ₁ = Θ₂`.
    pub share_theta: bool,
    pub mixing: Mixing,
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.share_q && self.share_theta {
            return Err(Error::ConfigRejected(
                "latent family cannot share both the mixing matrix and the latent covariance".into(),
            ));
        }
        if let Mixing::Sparse { density } = self.mixing {
            if !(density > 0.0 && density <= 1.0) {
                return Err(Error::ConfigRejected(format!("sparse mixing density {density} must lie in (0, 1]")));
            }
        }
        Ok(())
    }
}

/// One parameter setting of a covariance family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyConfig {
    /// Degrees of freedom in absolute units (not multiples of `p`).
    InverseWishart {
        df_1: f64,
        df_2: f64,
    },
    LatentLowDim(LatentConfig),
    /// Column-overlap proportion; the source dataset is supplied separately.
    EmpiricalCov {
        gamma: f64,
    },
}

impl FamilyConfig {
    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            FamilyConfig::InverseWishart { df_1, df_2 } => {
                for df in [df_1, df_2] {
                    if df.is_nan() || df < p as f64 {
                        return Err(Error::DegreesOfFreedomTooSmall { df, dim: p });
                    }
                }
                Ok(())
            }
            FamilyConfig::LatentLowDim(cfg) => cfg.validate(),
            FamilyConfig::EmpiricalCov { gamma } => {
                if (0.0..=1.0).contains(&gamma) {
                    Ok(())
                } else {
                    Err(Error::ConfigRejected(format!("gamma {gamma} outside [0, 1]")))
                }
            }
        }
    }
}

/// Lower-triangular Bartlett factor `A` with `AAᵗ ~ Wishart(I_p, df)`:
/// `A_ii = √χ²_{df−i}` (0-based `i`) and standard normal sub-diagonal.
fn bartlett_factor(dim: usize, df: f64, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    if dim == 0 || df.is_nan() || df <= dim as f64 - 1.0 {
        return Err(Error::DegreesOfFreedomTooSmall { df, dim });
    }
    let mut a = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        let chi = ChiSquared::new(df - i as f64).map_err(|_| Error::DegreesOfFreedomTooSmall { df, dim })?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(a)
}

/// `W ~ Wishart(I_p, df)` via the Bartlett decomposition; real `df > p − 1`.
pub fn sample_wishart(dim: usize, df: f64, rng: &mut RngStream) -> Result<SpdMatrix> {
    let a = bartlett_factor(dim, df, rng)?;
    SpdMatrix::new_strict(&a * a.transpose())
}

/// Raw inverse Wishart `W⁻¹`, inverted through the Bartlett (Cholesky) factor.
pub fn sample_inverse_wishart(dim: usize, df: f64, rng: &mut RngStream) -> Result<SpdMatrix> {
    let a = bartlett_factor(dim, df, rng)?;
    let a_inv = a.solve_lower_triangular(&DMatrix::identity(dim, dim)).ok_or(Error::NotPositiveDefinite)?;
    SpdMatrix::new_strict(a_inv.tr_mul(&a_inv))
}

/// `df · W⁻¹` with `W ~ Wishart(I_p, df)`, `df >= p`; the scaling keeps the
/// matrices O(1) as `p` grows.
pub fn sample_scaled_inverse_wishart(dim: usize, df: f64, rng: &mut RngStream) -> Result<SpdMatrix> {
    if df.is_nan() || df < dim as f64 {
        return Err(Error::DegreesOfFreedomTooSmall { df, dim });
    }
    let inv = sample_inverse_wishart(dim, df, rng)?;
    SpdMatrix::new_strict(inv.into_matrix() * df)
}

/// Two independent scaled inverse Wishart draws.
pub fn gen_iw_pair(p: usize, df_1: f64, df_2: f64, rng: &RngStream) -> Result<(SpdMatrix, SpdMatrix)> {
    let s1 = sample_scaled_inverse_wishart(p, df_1, &mut rng.fork(0))?;
    let s2 = sample_scaled_inverse_wishart(p, df_2, &mut rng.fork(1))?;
    Ok((s1, s2))
}

/// Latent dimension `max(2, round(p/25))`, rounding half to even.
pub fn latent_dim(p: usize) -> usize {
    let r = (p as f64 / 25.0).round_ties_even() as usize;
    r.max(2)
}

/// All ingredients of one latent-family draw.
#[derive(Debug, Clone)]
pub struct LatentPair {
    pub r: usize,
    /// `Q_k`, each `r×p`.
    pub mixing: [DMatrix<f64>; 2],
    /// `Θ_k ~ W⁻¹(I_r, r+1)`.
    pub theta: [SpdMatrix; 2],
    /// `M_k ~ W⁻¹(I_p, 2p)`.
    pub noise: [SpdMatrix; 2],
    pub cov_1: SpdMatrix,
    pub cov_2: SpdMatrix,
}

fn mixing_matrix(r: usize, p: usize, mixing: Mixing, rng: &mut RngStream) -> DMatrix<f64> {
    match mixing {
        Mixing::Dense => DMatrix::from_fn(r, p, |_, _| rng.sample(StandardNormal)),
        Mixing::Sparse { density } => DMatrix::from_fn(r, p, |_, _| {
            let keep = rng.random::<f64>() < density;
            let z: f64 = rng.sample(StandardNormal);
            if keep {
                z
            } else {
                0.0
            }
        }),
    }
}

/// Draws the latent family with all intermediate components. Shared
/// components are the same object for both classes (class 2 reuses class 1's
/// draw).
pub fn gen_latent_components(p: usize, config: &LatentConfig, rng: &RngStream) -> Result<LatentPair> {
    config.validate()?;
    if p < 2 {
        return Err(Error::ConfigRejected(format!("latent family needs p >= 2, got {p}")));
    }
    let r = latent_dim(p);
    let q1 = mixing_matrix(r, p, config.mixing, &mut rng.fork(0));
    let q2 = if config.share_q { q1.clone() } else { mixing_matrix(r, p, config.mixing, &mut rng.fork(1)) };
    let t1 = sample_inverse_wishart(r, r as f64 + 1.0, &mut rng.fork(2))?;
    let t2 = if config.share_theta { t1.clone() } else { sample_inverse_wishart(r, r as f64 + 1.0, &mut rng.fork(3))? };
    let m1 = sample_inverse_wishart(p, 2.0 * p as f64, &mut rng.fork(4))?;
    let m2 = sample_inverse_wishart(p, 2.0 * p as f64, &mut rng.fork(5))?;

    let noise_scale = 0.02 * p as f64;
    let build = |q: &DMatrix<f64>, t: &SpdMatrix, m: &SpdMatrix| {
        let latent = linalg::congruence(t.matrix(), q) * (r as f64 + 1.0);
        SpdMatrix::new_strict(latent + m.matrix() * noise_scale)
    };
    let cov_1 = build(&q1, &t1, &m1)?;
    let cov_2 = build(&q2, &t2, &m2)?;
    Ok(LatentPair { r, mixing: [q1, q2], theta: [t1, t2], noise: [m1, m2], cov_1, cov_2 })
}

/// `(Σ₁, Σ₂)` of the latent low-dimension family.
pub fn gen_latent_pair(p: usize, config: &LatentConfig, rng: &RngStream) -> Result<(SpdMatrix, SpdMatrix)> {
    let pair = gen_latent_components(p, config, rng)?;
    Ok((pair.cov_1, pair.cov_2))
}

/// Result of [`column_overlap`].
#[derive(Debug, Clone)]
pub struct ColumnOverlap {
    /// `X̃₁`: a row subsample of `X₁` with the overlapping columns replaced.
    pub x1: DMatrix<f64>,
    /// `X̃₂ = X₂⁽¹⁾`.
    pub x2: DMatrix<f64>,
    /// The `⌊γp⌋` replaced column indices, ascending.
    pub replaced_columns: Vec<usize>,
    /// Rows of `X₁` kept in `X̃₁`, in order.
    pub rows_1: Vec<usize>,
}

/// `⌊γp⌋`, tolerant of representation error in `γ` (e.g. `0.29·100`).
pub fn overlap_count(gamma: f64, p: usize) -> usize {
    let exact = gamma * p as f64;
    let k = (exact + 1e-9 * exact.abs().max(1.0)).floor() as usize;
    k.min(p)
}

/// Makes `⌊γp⌋` columns of group 1 follow group 2's distribution.
///
/// Group 2's rows are split at random into disjoint halves `X₂⁽¹⁾, X₂⁽²⁾` of
/// `m = min(⌊n₂/2⌋, n₁)` rows; `m` rows of `X₁` are subsampled; the chosen
/// columns of the subsample are overwritten by those of `X₂⁽²⁾`.
pub fn column_overlap(x1: &DMatrix<f64>, x2: &DMatrix<f64>, gamma: f64, rng: &mut RngStream) -> Result<ColumnOverlap> {
    check_dim(x1.ncols(), x2.ncols())?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::ConfigRejected(format!("gamma {gamma} outside [0, 1]")));
    }
    let (n1, n2, p) = (x1.nrows(), x2.nrows(), x1.ncols());
    let m = (n2 / 2).min(n1);
    if m == 0 {
        return Err(Error::InsufficientRows(format!(
            "column overlap needs n1 >= 1 and n2 >= 2 (got n1={n1}, n2={n2})"
        )));
    }
    let mut rows_2: Vec<usize> = (0..n2).collect();
    rows_2.shuffle(rng);
    let rows_1: Vec<usize> = index::sample(rng, n1, m).into_vec();
    let k = overlap_count(gamma, p);
    let mut replaced_columns: Vec<usize> = index::sample(rng, p, k).into_vec();
    replaced_columns.sort_unstable();

    let half_1 = x2.select_rows(&rows_2[..m]);
    let half_2 = x2.select_rows(&rows_2[m..2 * m]);
    let mut tilde_1 = x1.select_rows(&rows_1);
    for &c in &replaced_columns {
        tilde_1.set_column(c, &half_2.column(c));
    }
    Ok(ColumnOverlap { x1: tilde_1, x2: half_1, replaced_columns, rows_1 })
}

/// Column-centered empirical covariance `n⁻¹ XcᵗXc`; possibly rank deficient.
pub fn empirical_cov(x: &DMatrix<f64>) -> Result<SpdMatrix> {
    if x.nrows() == 0 {
        return Err(Error::InsufficientRows("empirical covariance of zero rows".into()));
    }
    SpdMatrix::new(mean_and_covariance(x).1)
}

pub fn empirical_cov_pair(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<(SpdMatrix, SpdMatrix)> {
    check_dim(x1.ncols(), x2.ncols())?;
    Ok((empirical_cov(x1)?, empirical_cov(x2)?))
}

/// `n` rows of `μ + Lz` with `LLᵗ = Σ` and `z` iid standard normal.
pub fn sample_gaussian(mean: &DVector<f64>, cov: &SpdMatrix, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let p = cov.dim();
    check_dim(p, mean.len())?;
    let l = cov.cholesky().ok_or(Error::NotPositiveDefinite)?.l();
    // z is filled row by row so that a prefix of rows does not depend on n
    let z = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut x = z * l.transpose();
    for mut row in x.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(x)
}

/// Like [`sample_gaussian`] but accepts a rank-deficient covariance, using
/// the symmetric square root `V diag(√λ₊) Vᵗ`; draws lie in the range of `Σ`.
pub fn sample_gaussian_psd(
    mean: &DVector<f64>,
    cov: &SpdMatrix,
    n: usize,
    rng: &mut RngStream,
) -> Result<DMatrix<f64>> {
    let p = cov.dim();
    check_dim(p, mean.len())?;
    let (values, vectors) = linalg::eigen_descending(cov.matrix());
    let scaled = DMatrix::from_fn(p, p, |i, j| vectors[(i, j)] * values[j].max(0.0).sqrt());
    let root = &scaled * vectors.transpose();
    let z = DMatrix::from_row_iterator(n, p, (0..n * p).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mut x = z * root;
    for mut row in x.row_iter_mut() {
        row += mean.transpose();
    }
    Ok(x)
}
