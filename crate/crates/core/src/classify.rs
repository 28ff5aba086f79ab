//! Embedded Gaussian likelihood-ratio (QDA) classification.
//!
//! A classifier works in the `q`-dimensional space `y = Wᵗx`. The trained
//! variant plugs in empirical class weights, means and covariances; the oracle
//! variant plugs in the true parameters and is the embedded Bayes rule.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::projections::mean_and_covariance;
use crate::rng::RngStream;
use crate::types::{check_dim, Class, LabeledDataset, ProjectionMatrix, SpdMatrix, TwoClassGaussian};

/// Embedded covariances whose squared Cholesky pivot ratio falls below this
/// are reported as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-13;

/// Samples per Monte Carlo block; each block owns one forked stream.
pub const MC_BLOCK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QdaOptions {
    /// Include the `ln π̂_k` prior terms. Without them the rule is the bare
    /// sign of the negative log-likelihood ratio.
    pub use_priors: bool,
    /// Opt-in ridge: `ridge · tr(C₁+C₂)/(2q)` is added to both embedded
    /// covariances. `None` surfaces singular fits as errors.
    pub ridge: Option<f64>,
}

impl Default for QdaOptions {
    fn default() -> Self {
        Self { use_priors: true, ridge: None }
    }
}

#[derive(Debug, Clone)]
struct ClassFit {
    mean: DVector<f64>,
    cov: SpdMatrix,
    /// Lower Cholesky factor, row-major.
    lower: Vec<f64>,
    log_det: f64,
}

impl ClassFit {
    fn new(class: Class, mean: DVector<f64>, cov: SpdMatrix) -> Result<Self> {
        let q = cov.dim();
        let singular = || Error::SingularEmbeddedCovariance { class: class.number(), q };
        let chol = cov.cholesky().ok_or_else(singular)?;
        let log_det = linalg::log_det_from_cholesky(&chol);
        if !log_det.is_finite() || linalg::pivot_ratio(&chol) < SINGULARITY_THRESHOLD {
            return Err(singular());
        }
        Ok(Self { mean, cov, lower: linalg::lower_row_major(&chol), log_det })
    }

    /// `(y−m)ᵗC⁻¹(y−m) + ln det C`, using `buf` as scratch.
    fn energy(&self, y: &[f64], buf: &mut [f64]) -> f64 {
        let q = self.mean.len();
        for i in 0..q {
            buf[i] = y[i] - self.mean[i];
        }
        linalg::forward_substitute(&self.lower, q, &mut buf[..q]);
        buf[..q].iter().map(|v| v * v).sum::<f64>() + self.log_det
    }

    /// `m + Lz` into `out`.
    fn draw(&self, z: &[f64], out: &mut [f64]) {
        let q = self.mean.len();
        for (i, o) in out.iter_mut().enumerate().take(q) {
            let row = &self.lower[i * q..i * q + i + 1];
            *o = self.mean[i] + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

/// A fitted embedded QDA rule `argmax_k π_k φ(Wᵗx; m_k, C_k)`.
#[derive(Debug, Clone)]
pub struct EmbeddedQda {
    w: ProjectionMatrix,
    weights: (f64, f64),
    classes: [ClassFit; 2],
    use_priors: bool,
}

/// Fits the embedded classifier on `train`: features are projected first,
/// then per-class weights `n_k/n`, means and covariances (divisor `n_k`) are
/// estimated in the embedded space.
pub fn fit_embedded_qda(train: &LabeledDataset, w: &ProjectionMatrix, options: &QdaOptions) -> Result<EmbeddedQda> {
    check_dim(w.ambient_dim(), train.p())?;
    let y = w.embed_rows(train.x())?;
    let embedded = LabeledDataset::new(y, train.labels().to_vec())?;
    let mut moments = Vec::with_capacity(2);
    for class in Class::BOTH {
        if embedded.class_count(class) == 0 {
            return Err(Error::EmptyClass(class.number()));
        }
        moments.push(mean_and_covariance(&embedded.class_rows(class)));
    }
    let (m2, c2) = moments.pop().expect("two classes");
    let (m1, c1) = moments.pop().expect("two classes");
    let (c1, c2) = apply_ridge(c1, c2, options.ridge);
    let n1 = embedded.class_count(Class::One) as f64;
    let weight_1 = n1 / embedded.n() as f64;
    EmbeddedQda::from_parts(
        w.clone(),
        (weight_1, 1.0 - weight_1),
        [(m1, SpdMatrix::new(c1)?), (m2, SpdMatrix::new(c2)?)],
        options.use_priors,
    )
}

fn apply_ridge(c1: DMatrix<f64>, c2: DMatrix<f64>, ridge: Option<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    match ridge {
        Some(r) if r > 0.0 => {
            let q = c1.nrows();
            let shift = r * (c1.trace() + c2.trace()) / (2.0 * q as f64);
            let eye = DMatrix::<f64>::identity(q, q) * shift;
            (c1 + &eye, c2 + eye)
        }
        _ => (c1, c2),
    }
}

impl EmbeddedQda {
    /// The oracle rule built from true parameters: the embedded Bayes
    /// classifier when `use_priors` is set.
    pub fn from_model(model: &TwoClassGaussian, w: &ProjectionMatrix, use_priors: bool) -> Result<Self> {
        let projected = model.project(w)?;
        Self::from_parts(
            w.clone(),
            model.weights(),
            [
                (projected.mean_1().clone(), projected.cov_1().clone()),
                (projected.mean_2().clone(), projected.cov_2().clone()),
            ],
            use_priors,
        )
    }

    fn from_parts(
        w: ProjectionMatrix,
        weights: (f64, f64),
        params: [(DVector<f64>, SpdMatrix); 2],
        use_priors: bool,
    ) -> Result<Self> {
        let [(m1, c1), (m2, c2)] = params;
        let classes = [ClassFit::new(Class::One, m1, c1)?, ClassFit::new(Class::Two, m2, c2)?];
        Ok(Self { w, weights, classes, use_priors })
    }

    pub fn projection(&self) -> &ProjectionMatrix {
        &self.w
    }

    pub fn weights(&self) -> (f64, f64) {
        self.weights
    }

    pub fn embedded_mean(&self, class: Class) -> &DVector<f64> {
        &self.classes[class.index()].mean
    }

    pub fn embedded_cov(&self, class: Class) -> &SpdMatrix {
        &self.classes[class.index()].cov
    }

    pub fn log_det(&self, class: Class) -> f64 {
        self.classes[class.index()].log_det
    }

    /// Decision threshold on the log ratio: class 1 iff `r̂ ≤ threshold`.
    fn threshold(&self) -> f64 {
        if self.use_priors {
            2.0 * (self.weights.0 / self.weights.1).ln()
        } else {
            0.0
        }
    }

    fn embedded_log_ratio(&self, y: &[f64], buf: &mut [f64]) -> f64 {
        self.classes[0].energy(y, buf) - self.classes[1].energy(y, buf)
    }

    /// `r̂₁,₂ = −2 ln(p̂₁(Wᵗx)/p̂₂(Wᵗx))` for an ambient point `x`; priors are
    /// not included.
    pub fn log_ratio(&self, x: &DVector<f64>) -> Result<f64> {
        let y = self.w.embed(x)?;
        let mut buf = vec![0.0; y.len()];
        Ok(self.embedded_log_ratio(y.as_slice(), &mut buf))
    }

    /// Predicted class of each row of `x`. Ties go to class 1.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<Class>> {
        let y = self.w.embed_rows(x)?;
        let q = y.ncols();
        let t = self.threshold();
        let mut row = vec![0.0; q];
        let mut buf = vec![0.0; q];
        Ok((0..y.nrows())
            .map(|i| {
                for j in 0..q {
                    row[j] = y[(i, j)];
                }
                if self.embedded_log_ratio(&row, &mut buf) <= t {
                    Class::One
                } else {
                    Class::Two
                }
            })
            .collect())
    }
}

/// Out-of-sample 0-1 loss: the fraction of misclassified validation rows.
pub fn oos_error(model: &EmbeddedQda, val: &LabeledDataset) -> Result<f64> {
    if val.n() == 0 {
        return Err(Error::EmptyDataset);
    }
    check_dim(model.w.ambient_dim(), val.p())?;
    let predicted = model.predict(val.x())?;
    let wrong = predicted.iter().zip(val.labels()).filter(|(a, b)| a != b).count();
    Ok(wrong as f64 / val.n() as f64)
}

/// A Monte Carlo frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub estimate: f64,
    /// `√(e(1−e)/n)`.
    pub std_error: f64,
    pub n_samples: usize,
}

impl RiskEstimate {
    pub fn from_count(errors: usize, n_samples: usize) -> Self {
        let e = errors as f64 / n_samples as f64;
        Self { estimate: e, std_error: (e * (1.0 - e) / n_samples as f64).sqrt(), n_samples }
    }
}

/// Monte Carlo estimate of the embedded Bayes risk `P(z*_W(x) ≠ z)`.
///
/// Labels are drawn from `(π₁, π₂)` and points from the chosen class directly
/// in the embedded space; the true-parameter rule is applied there. Blocks of
/// [`MC_BLOCK`] samples run in parallel, each on `rng.fork(block)`, and are
/// merged in block order.
pub fn mc_bayes_risk(
    model: &TwoClassGaussian,
    w: Option<&ProjectionMatrix>,
    n_samples: usize,
    rng: &RngStream,
) -> Result<RiskEstimate> {
    if n_samples == 0 {
        return Err(Error::config("mc_samples", "must be at least 1"));
    }
    let identity;
    let w = match w {
        Some(w) => w,
        None => {
            identity = ProjectionMatrix::identity(model.dim());
            &identity
        }
    };
    let oracle = EmbeddedQda::from_model(model, w, true)?;
    let q = w.embed_dim();
    let n_blocks = n_samples.div_ceil(MC_BLOCK);
    let errors: usize = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let len = MC_BLOCK.min(n_samples - b * MC_BLOCK);
            let mut stream = rng.fork(b as u64);
            let (mut z, mut y, mut buf) = (vec![0.0; q], vec![0.0; q], vec![0.0; q]);
            let t = oracle.threshold();
            let mut wrong = 0usize;
            for _ in 0..len {
                let class = if stream.random::<f64>() < oracle.weights.0 { 0 } else { 1 };
                for v in z.iter_mut() {
                    *v = stream.sample(StandardNormal);
                }
                oracle.classes[class].draw(&z, &mut y);
                let predicted = if oracle.embedded_log_ratio(&y, &mut buf) <= t { 0 } else { 1 };
                wrong += usize::from(predicted != class);
            }
            wrong
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(RiskEstimate::from_count(errors, n_samples))
}

/// `½ Σ_k ‖Wᵗ(S_k − Σ_k)W‖²_F`.
pub fn reconstruction_error(
    w: &ProjectionMatrix,
    s_1: &SpdMatrix,
    s_2: &SpdMatrix,
    sigma_1: &SpdMatrix,
    sigma_2: &SpdMatrix,
) -> Result<f64> {
    let p = w.ambient_dim();
    for m in [s_1, s_2, sigma_1, sigma_2] {
        check_dim(p, m.dim())?;
    }
    let wm = w.matrix();
    let term = |s: &SpdMatrix, sigma: &SpdMatrix| {
        let d = s.matrix() - sigma.matrix();
        linalg::frobenius(&(wm.transpose() * d * wm)).powi(2)
    };
    Ok(0.5 * (term(s_1, sigma_1) + term(s_2, sigma_2)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derive_stream;
    use nalgebra::dvector;

    fn scalar_model(var_1: f64, var_2: f64, gap: f64) -> TwoClassGaussian {
        TwoClassGaussian::new(
            0.5,
            dvector![0.0],
            dvector![gap],
            SpdMatrix::from_diagonal(&[var_1]).unwrap(),
            SpdMatrix::from_diagonal(&[var_2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn identical_classes_follow_priors() {
        let i = SpdMatrix::identity(2);
        let z = DVector::zeros(2);
        let w = ProjectionMatrix::identity(2);
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 5.0, -1.0, -3.0, 2.0]);
        let m = TwoClassGaussian::new(0.7, z.clone(), z.clone(), i.clone(), i.clone()).unwrap();
        let qda = EmbeddedQda::from_model(&m, &w, true).unwrap();
        assert!(qda.predict(&x).unwrap().iter().all(|&c| c == Class::One));
        let m = TwoClassGaussian::new(0.3, z.clone(), z, i.clone(), i).unwrap();
        let qda = EmbeddedQda::from_model(&m, &w, true).unwrap();
        assert!(qda.predict(&x).unwrap().iter().all(|&c| c == Class::Two));
    }

    #[test]
    fn scalar_boundary() {
        // class 1 iff x² (1 − 1/4) < ln 4
        let m = scalar_model(1.0, 4.0, 0.0);
        let qda = EmbeddedQda::from_model(&m, &ProjectionMatrix::identity(1), true).unwrap();
        let boundary = (4f64.ln() / 0.75).sqrt();
        let x = DMatrix::from_column_slice(4, 1, &[0.0, boundary - 1e-9, boundary + 1e-9, -boundary - 1e-9]);
        assert_eq!(qda.predict(&x).unwrap(), vec![Class::One, Class::One, Class::Two, Class::Two]);
        assert!(qda.log_ratio(&dvector![boundary]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn log_ratio_matches_the_quadratic_form() {
        let mut rng = derive_stream(3, &[]);
        let a = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let b = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s1 = SpdMatrix::new_strict(&a * a.transpose() + DMatrix::identity(3, 3)).unwrap();
        let s2 = SpdMatrix::new_strict(&b * b.transpose() + DMatrix::identity(3, 3)).unwrap();
        let z = DVector::zeros(3);
        let m = TwoClassGaussian::new(0.5, z.clone(), z, s1.clone(), s2.clone()).unwrap();
        let qda = EmbeddedQda::from_model(&m, &ProjectionMatrix::identity(3), false).unwrap();
        let x = dvector![0.3, -1.2, 0.8];
        let i1 = s1.matrix().clone().try_inverse().unwrap();
        let i2 = s2.matrix().clone().try_inverse().unwrap();
        let expected =
            (x.transpose() * (i1 - i2) * &x)[(0, 0)] + (s1.matrix().determinant() / s2.matrix().determinant()).ln();
        assert!((qda.log_ratio(&x).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn oos_error_edge_cases() {
        let m = scalar_model(1.0, 1.0, 20.0);
        let w = ProjectionMatrix::identity(1);
        let qda = EmbeddedQda::from_model(&m, &w, true).unwrap();
        let ones =
            LabeledDataset::new(DMatrix::from_column_slice(3, 1, &[0.0, 0.1, -0.2]), vec![Class::One; 3]).unwrap();
        assert_eq!(oos_error(&qda, &ones).unwrap(), 0.0);

        let mut rng = derive_stream(1, &[]);
        let x1 = DMatrix::from_fn(500, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x2 = DMatrix::from_fn(500, 1, |_, _| 20.0 + rng.sample::<f64, _>(StandardNormal));
        let val = LabeledDataset::from_classes(&x1, &x2).unwrap();
        assert_eq!(oos_error(&qda, &val).unwrap(), 0.0);

        let empty = LabeledDataset::new(DMatrix::zeros(0, 1), vec![]).unwrap();
        assert!(matches!(oos_error(&qda, &empty), Err(Error::EmptyDataset)));
        let wide = LabeledDataset::new(DMatrix::zeros(1, 2), vec![Class::One]).unwrap();
        assert!(matches!(oos_error(&qda, &wide), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn too_few_points_is_singular() {
        let x1 = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let x2 = DMatrix::from_row_slice(4, 3, &[1.0, 2.0, 0.0, 0.0, 1.0, 3.0, 2.0, 0.5, 1.0, -1.0, 0.0, 0.2]);
        let data = LabeledDataset::from_classes(&x1, &x2).unwrap();
        let err = fit_embedded_qda(&data, &ProjectionMatrix::identity(3), &QdaOptions::default()).unwrap_err();
        assert!(matches!(err, Error::SingularEmbeddedCovariance { class: 1, q: 3 }));
        let ridged = QdaOptions { use_priors: true, ridge: Some(1e-3) };
        assert!(fit_embedded_qda(&data, &ProjectionMatrix::identity(3), &ridged).is_ok());
    }

    #[test]
    fn fit_is_deterministic_and_projects_first() {
        let mut rng = derive_stream(11, &[]);
        let x1 = DMatrix::from_fn(40, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x2 = DMatrix::from_fn(30, 4, |_, _| 2.0 * rng.sample::<f64, _>(StandardNormal));
        let data = LabeledDataset::from_classes(&x1, &x2).unwrap();
        let w = ProjectionMatrix::new(DMatrix::from_fn(4, 2, |i, j| (i + 2 * j) as f64 - 1.5), false).unwrap();
        let a = fit_embedded_qda(&data, &w, &QdaOptions::default()).unwrap();
        let b = fit_embedded_qda(&data, &w, &QdaOptions::default()).unwrap();
        assert_eq!(a.embedded_cov(Class::One), b.embedded_cov(Class::One));
        assert!((a.weights().0 - 40.0 / 70.0).abs() < 1e-15);
        let direct = mean_and_covariance(&(x1 * w.matrix())).1;
        assert!((a.embedded_cov(Class::One).matrix() - direct).abs().max() < 1e-12);
    }

    #[test]
    fn mc_risk_scalar_oracle() {
        let m = scalar_model(1.0, 4.0, 0.0);
        let est = mc_bayes_risk(&m, None, 100_000, &derive_stream(5, &[])).unwrap();
        // ½·2(1−Φ(x*)) + ½(2Φ(x*/2)−1) with x*² = ln 4 / 0.75
        let analytic = 0.338_662_715_582_615_7;
        assert!((est.estimate - analytic).abs() < 4.0 * est.std_error, "{est:?}");
        assert!((est.std_error - (est.estimate * (1.0 - est.estimate) / 1e5).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn mc_risk_is_deterministic_and_coin_flip_for_identical_classes() {
        let m = TwoClassGaussian::centered(SpdMatrix::identity(3), SpdMatrix::identity(3)).unwrap();
        let a = mc_bayes_risk(&m, None, 20_000, &derive_stream(2, &[])).unwrap();
        let b = mc_bayes_risk(&m, None, 20_000, &derive_stream(2, &[])).unwrap();
        assert_eq!(a, b);
        assert!((a.estimate - 0.5).abs() < 3.0 * a.std_error);
    }

    #[test]
    fn reconstruction_cases() {
        let s = SpdMatrix::from_diagonal(&[2.0, 1.0, 1.0]).unwrap();
        let i = SpdMatrix::identity(3);
        let w = ProjectionMatrix::identity(3);
        assert_eq!(reconstruction_error(&w, &i, &i, &i, &i).unwrap(), 0.0);
        assert_eq!(reconstruction_error(&w, &s, &i, &i, &i).unwrap(), 0.5);
        let bad = SpdMatrix::identity(2);
        assert!(matches!(reconstruction_error(&w, &bad, &i, &i, &i), Err(Error::DimensionMismatch { .. })));
    }
}
