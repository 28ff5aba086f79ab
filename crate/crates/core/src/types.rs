//! Shared numeric types: covariance matrices, projection matrices, the
//! two-class Gaussian population model and labelled datasets.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngStream;

/// Relative tolerance on the smallest eigenvalue of a semi-definite matrix.
pub const PSD_TOLERANCE: f64 = 1e-8;
/// Relative singular-value floor below which a projection is rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Maximum deviation of `WᵗW` from the identity for orthonormal projections.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// Symmetric positive (semi-)definite matrix.
///
/// Inputs are symmetrized as `(A + Aᵗ)/2` on construction. [`SpdMatrix::new`]
/// accepts rank-deficient matrices (empirical covariances with `n < p`);
/// [`SpdMatrix::new_strict`] additionally requires a Cholesky factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    entries: DMatrix<f64>,
}

impl SpdMatrix {
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        let entries = Self::symmetrized(raw)?;
        let eig = entries.clone().symmetric_eigenvalues();
        let max = eig.max();
        let min = eig.min();
        if min < -PSD_TOLERANCE * max.max(0.0) {
            return Err(Error::NotPositiveSemidefinite { min, max });
        }
        Ok(Self { entries })
    }

    pub fn new_strict(raw: DMatrix<f64>) -> Result<Self> {
        let entries = Self::symmetrized(raw)?;
        if linalg::cholesky(&entries).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { entries })
    }

    fn symmetrized(raw: DMatrix<f64>) -> Result<DMatrix<f64>> {
        if raw.nrows() != raw.ncols() {
            return Err(Error::NotSquare { rows: raw.nrows(), cols: raw.ncols() });
        }
        if raw.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(linalg::symmetrize(&raw))
    }

    /// Wraps a matrix already known to be symmetric PSD (sums and congruences
    /// of accepted matrices).
    pub(crate) fn from_trusted(entries: DMatrix<f64>) -> Self {
        Self { entries: linalg::symmetrize(&entries) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { entries: DMatrix::identity(dim, dim) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn cholesky(&self) -> Option<Cholesky<f64, Dyn>> {
        linalg::cholesky(&self.entries)
    }

    /// Log-determinant through the Cholesky factor; `None` when not strictly PD.
    pub fn log_det(&self) -> Option<f64> {
        self.cholesky().map(|c| linalg::log_det_from_cholesky(&c))
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.clone().symmetric_eigenvalues().iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    /// `A + B`.
    pub fn sum(&self, other: &SpdMatrix) -> Result<SpdMatrix> {
        check_dim(self.dim(), other.dim())?;
        Ok(Self::from_trusted(&self.entries + &other.entries))
    }

    /// `A + c·I` for `c >= 0`.
    pub fn add_ridge(&self, c: f64) -> SpdMatrix {
        let mut m = self.entries.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += c;
        }
        Self { entries: m }
    }

    /// `Wᵗ A W`.
    pub fn congruence(&self, w: &DMatrix<f64>) -> Result<SpdMatrix> {
        check_dim(self.dim(), w.nrows())?;
        Ok(Self { entries: linalg::congruence(&self.entries, w) })
    }
}

/// Accepts `raw` as a symmetric positive semi-definite matrix.
pub fn make_spd(raw: DMatrix<f64>) -> Result<SpdMatrix> {
    SpdMatrix::new(raw)
}

/// Accepts `raw` only if it is strictly positive definite.
pub fn make_spd_strict(raw: DMatrix<f64>) -> Result<SpdMatrix> {
    SpdMatrix::new_strict(raw)
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// A `p×q` full-column-rank matrix `W`; data are embedded as `Wᵗx`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    entries: DMatrix<f64>,
    orthonormal: bool,
}

impl ProjectionMatrix {
    pub fn new(entries: DMatrix<f64>, orthonormal: bool) -> Result<Self> {
        let (p, q) = entries.shape();
        if q == 0 || q > p {
            return Err(Error::QExceedsP { q, p });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        if !has_full_column_rank(&entries) {
            return Err(Error::RankDeficient { q });
        }
        if orthonormal {
            let gram = entries.transpose() * &entries - DMatrix::<f64>::identity(q, q);
            let deviation = gram.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max);
            if deviation > ORTHONORMAL_TOLERANCE {
                return Err(Error::NotOrthonormal { deviation });
            }
        }
        Ok(Self { entries, orthonormal })
    }

    pub fn identity(p: usize) -> Self {
        Self { entries: DMatrix::identity(p, p), orthonormal: true }
    }

    pub fn ambient_dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn embed_dim(&self) -> usize {
        self.entries.ncols()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.orthonormal
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// The projection made of the first `q` columns (nested embeddings).
    pub fn leading(&self, q: usize) -> Result<ProjectionMatrix> {
        if q == 0 || q > self.embed_dim() {
            return Err(Error::QExceedsP { q, p: self.embed_dim() });
        }
        Ok(Self { entries: self.entries.columns(0, q).into_owned(), orthonormal: self.orthonormal })
    }

    /// `W R` for an invertible `q×q` matrix `R`.
    pub fn right_multiply(&self, r: &DMatrix<f64>) -> Result<ProjectionMatrix> {
        check_dim(self.embed_dim(), r.nrows())?;
        ProjectionMatrix::new(&self.entries * r, false)
    }

    /// Embeds every row of `x` (`n×p`), returning `x W` (`n×q`).
    pub fn embed_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim(self.ambient_dim(), x.ncols())?;
        Ok(x * &self.entries)
    }

    pub fn embed(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        check_dim(self.ambient_dim(), v.len())?;
        Ok(self.entries.tr_mul(v))
    }
}

pub(crate) fn has_full_column_rank(m: &DMatrix<f64>) -> bool {
    let sv = m.clone().singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > RANK_TOLERANCE * max
}

/// The population model: `x | z=k ~ N(μ_k, Σ_k)` with `P(z=1) = π₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoClassGaussian {
    weight_1: f64,
    mean_1: DVector<f64>,
    mean_2: DVector<f64>,
    cov_1: SpdMatrix,
    cov_2: SpdMatrix,
}

impl TwoClassGaussian {
    /// Both covariances must be strictly positive definite.
    pub fn new(
        weight_1: f64,
        mean_1: DVector<f64>,
        mean_2: DVector<f64>,
        cov_1: SpdMatrix,
        cov_2: SpdMatrix,
    ) -> Result<Self> {
        let model = Self::new_semidefinite(weight_1, mean_1, mean_2, cov_1, cov_2)?;
        if model.cov_1.cholesky().is_none() || model.cov_2.cholesky().is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(model)
    }

    /// Like [`TwoClassGaussian::new`] but admits rank-deficient covariances, as
    /// produced by empirical covariances of `n < p` data. Metrics needing a
    /// factorization of such a model fail with [`Error::SingularBlend`]; its
    /// embedded versions are usually well defined.
    pub fn new_semidefinite(
        weight_1: f64,
        mean_1: DVector<f64>,
        mean_2: DVector<f64>,
        cov_1: SpdMatrix,
        cov_2: SpdMatrix,
    ) -> Result<Self> {
        if !(weight_1 > 0.0 && weight_1 < 1.0) {
            return Err(Error::InvalidWeight(weight_1));
        }
        let p = cov_1.dim();
        check_dim(p, cov_2.dim())?;
        check_dim(p, mean_1.len())?;
        check_dim(p, mean_2.len())?;
        Ok(Self { weight_1, mean_1, mean_2, cov_1, cov_2 })
    }

    /// Zero-mean, balanced classes.
    pub fn centered(cov_1: SpdMatrix, cov_2: SpdMatrix) -> Result<Self> {
        let p = cov_1.dim();
        Self::new(0.5, DVector::zeros(p), DVector::zeros(p), cov_1, cov_2)
    }

    pub fn dim(&self) -> usize {
        self.cov_1.dim()
    }

    /// `(π₁, π₂)` with `π₂ = 1 − π₁`.
    pub fn weights(&self) -> (f64, f64) {
        (self.weight_1, 1.0 - self.weight_1)
    }

    pub fn mean_1(&self) -> &DVector<f64> {
        &self.mean_1
    }

    pub fn mean_2(&self) -> &DVector<f64> {
        &self.mean_2
    }

    pub fn cov_1(&self) -> &SpdMatrix {
        &self.cov_1
    }

    pub fn cov_2(&self) -> &SpdMatrix {
        &self.cov_2
    }

    pub fn mean(&self, class: Class) -> &DVector<f64> {
        match class {
            Class::One => &self.mean_1,
            Class::Two => &self.mean_2,
        }
    }

    pub fn cov(&self, class: Class) -> &SpdMatrix {
        match class {
            Class::One => &self.cov_1,
            Class::Two => &self.cov_2,
        }
    }

    /// The law of `Wᵗx`: `(π_k, Wᵗμ_k, WᵗΣ_kW)`.
    pub fn project(&self, w: &ProjectionMatrix) -> Result<TwoClassGaussian> {
        check_dim(self.dim(), w.ambient_dim())?;
        let m = w.matrix();
        Ok(Self {
            weight_1: self.weight_1,
            mean_1: m.tr_mul(&self.mean_1),
            mean_2: m.tr_mul(&self.mean_2),
            cov_1: self.cov_1.congruence(m)?,
            cov_2: self.cov_2.congruence(m)?,
        })
    }
}

/// Class label `z ∈ {1, 2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Class {
    One,
    Two,
}

impl Class {
    pub const BOTH: [Class; 2] = [Class::One, Class::Two];

    pub fn index(self) -> usize {
        match self {
            Class::One => 0,
            Class::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

/// An `n×p` data matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    x: DMatrix<f64>,
    labels: Vec<Class>,
}

impl LabeledDataset {
    pub fn new(x: DMatrix<f64>, labels: Vec<Class>) -> Result<Self> {
        check_dim(x.nrows(), labels.len())?;
        Ok(Self { x, labels })
    }

    /// Stacks the rows of `x1` (class 1) above those of `x2` (class 2).
    pub fn from_classes(x1: &DMatrix<f64>, x2: &DMatrix<f64>) -> Result<Self> {
        check_dim(x1.ncols(), x2.ncols())?;
        let (n1, n2) = (x1.nrows(), x2.nrows());
        let mut x = DMatrix::zeros(n1 + n2, x1.ncols());
        x.rows_mut(0, n1).copy_from(x1);
        x.rows_mut(n1, n2).copy_from(x2);
        let mut labels = vec![Class::One; n1];
        labels.extend(std::iter::repeat_n(Class::Two, n2));
        Ok(Self { x, labels })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn labels(&self) -> &[Class] {
        &self.labels
    }

    pub fn class_count(&self, class: Class) -> usize {
        self.labels.iter().filter(|&&c| c == class).count()
    }

    pub fn class_indices(&self, class: Class) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == class).collect()
    }

    /// Rows of one class as a matrix.
    pub fn class_rows(&self, class: Class) -> DMatrix<f64> {
        self.x.select_rows(&self.class_indices(class))
    }

    pub fn select_rows(&self, idx: &[usize]) -> LabeledDataset {
        Self { x: self.x.select_rows(idx), labels: idx.iter().map(|&i| self.labels[i]).collect() }
    }

    pub fn select_columns(&self, idx: &[usize]) -> LabeledDataset {
        Self { x: self.x.select_columns(idx), labels: self.labels.clone() }
    }

    /// Stratified random split: within each class, `round(train_frac · n_k)`
    /// rows (clamped to leave at least one row on each side when `n_k >= 2`)
    /// go to the training set.
    pub fn split(&self, train_frac: f64, rng: &mut RngStream) -> (LabeledDataset, LabeledDataset) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for class in Class::BOTH {
            let mut idx = self.class_indices(class);
            idx.shuffle(rng);
            let n = idx.len();
            let mut k = (train_frac * n as f64).round() as usize;
            if n >= 2 {
                k = k.clamp(1, n - 1);
            } else {
                k = k.min(n);
            }
            train.extend_from_slice(&idx[..k]);
            val.extend_from_slice(&idx[k..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        (self.select_rows(&train), self.select_rows(&val))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn identity_is_accepted_unchanged() {
        let m = make_spd(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(m.dim(), 3);
        assert_eq!(m.matrix(), &DMatrix::<f64>::identity(3, 3));
    }

    #[test]
    fn two_by_two_correlation_eigenvalues() {
        let m = make_spd(dmatrix![1.0, 0.5; 0.5, 1.0]).unwrap();
        let eig = m.eigenvalues();
        assert!((eig[0] - 1.5).abs() < 1e-14);
        assert!((eig[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_rejected_by_strict_constructor() {
        let err = make_spd_strict(dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite));
        assert!(matches!(make_spd(dmatrix![1.0, 2.0; 2.0, 1.0]), Err(Error::NotPositiveSemidefinite { .. })));
    }

    #[test]
    fn non_square_rejected() {
        assert!(matches!(make_spd(DMatrix::zeros(2, 3)), Err(Error::NotSquare { rows: 2, cols: 3 })));
    }

    #[test]
    fn asymmetric_input_is_symmetrized() {
        let m = make_spd(dmatrix![2.0, 0.3; 0.1, 2.0]).unwrap();
        assert_eq!(m.matrix()[(0, 1)], 0.2);
        assert_eq!(m.matrix()[(1, 0)], 0.2);
    }

    #[test]
    fn rank_deficient_psd_is_representable() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = make_spd(&v * v.transpose()).unwrap();
        assert!(m.log_det().is_none() || m.log_det().unwrap() < -20.0);
    }

    #[test]
    fn projection_rank_and_orthonormal_checks() {
        assert!(ProjectionMatrix::new(DMatrix::identity(4, 2), true).is_ok());
        let dup = dmatrix![1.0, 1.0; 0.0, 0.0; 0.0, 0.0];
        assert!(matches!(ProjectionMatrix::new(dup, false), Err(Error::RankDeficient { q: 2 })));
        let skew = dmatrix![1.0, 1.0; 0.0, 1.0; 0.0, 0.0];
        assert!(matches!(ProjectionMatrix::new(skew.clone(), true), Err(Error::NotOrthonormal { .. })));
        assert!(ProjectionMatrix::new(skew, false).is_ok());
        assert!(matches!(ProjectionMatrix::new(DMatrix::zeros(2, 3), false), Err(Error::QExceedsP { .. })));
    }

    #[test]
    fn model_dimension_and_weight_validation() {
        let i2 = SpdMatrix::identity(2);
        let i3 = SpdMatrix::identity(3);
        assert!(matches!(TwoClassGaussian::centered(i2.clone(), i3), Err(Error::DimensionMismatch { .. })));
        let z = DVector::zeros(2);
        assert!(matches!(TwoClassGaussian::new(1.0, z.clone(), z, i2.clone(), i2), Err(Error::InvalidWeight(_))));
    }

    #[test]
    fn stratified_split_keeps_both_classes() {
        let x = DMatrix::from_fn(20, 2, |i, j| (i * 2 + j) as f64);
        let labels = (0..20).map(|i| if i < 8 { Class::One } else { Class::Two }).collect();
        let ds = LabeledDataset::new(x, labels).unwrap();
        let mut rng = crate::derive_stream(1, &[0]);
        let (train, val) = ds.split(0.7, &mut rng);
        assert_eq!(train.class_count(Class::One), 6);
        assert_eq!(train.class_count(Class::Two), 8);
        assert_eq!(val.n(), 6);
    }
}
