//! Held-out evaluation of projections on one labelled dataset.
//!
//! The dataset's two groups are first restricted to a random subset of `p`
//! columns, then mixed by [`column_overlap`], split into training and
//! validation parts, and finally classified by embedded QDA under each
//! projection. No population parameters exist here, so every projection is
//! built from the training split: `pca` and `empirical_pca` coincide, as do
//! `bhatt_optimal` and `empirical_optimal`.

use rand::seq::index;

use crate::classify::{fit_embedded_qda, oos_error, QdaOptions};
use crate::error::{Error, Result};
use crate::generators::column_overlap;
use crate::projections::{
    bhattacharyya_optimal_projection, default_ridge, empirical_covariances, pca_projection, pooled_covariance,
    random_projection, sparse_random_projection, ProjectionKind,
};
use crate::rng::{derive_stream, RngStream};
use crate::types::{Class, LabeledDataset, ProjectionMatrix};

/// Stream tag of dataset evaluations; distinct from every sweep family tag.
pub const STREAM_TAG: u64 = 6;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Columns to keep; `None` keeps all of them.
    pub p: Option<usize>,
    pub q: usize,
    pub gamma: f64,
    pub projections: Vec<ProjectionKind>,
    pub train_frac: f64,
    /// Whitening ridge of the optimal projection; `None` uses
    /// [`default_ridge`].
    pub ridge: Option<f64>,
    pub qda: QdaOptions,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            p: None,
            q: 5,
            gamma: 0.0,
            projections: vec![ProjectionKind::Pca, ProjectionKind::Rp, ProjectionKind::SparseRp],
            train_frac: 0.7,
            ridge: None,
            qda: QdaOptions::default(),
            seed: 0,
        }
    }
}

/// Validation 0-1 loss with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OosLoss {
    pub loss: f64,
    pub std_error: f64,
    pub n_val: usize,
}

#[derive(Debug)]
pub struct EvalOutcome {
    pub projection: ProjectionKind,
    pub result: Result<OosLoss>,
}

#[derive(Debug)]
pub struct EvalReport {
    /// Retained source columns, ascending.
    pub columns: Vec<usize>,
    pub replaced_columns: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub outcomes: Vec<EvalOutcome>,
}

/// Runs the pipeline. Errors in the shared steps abort; errors of a single
/// projection are reported in its outcome.
pub fn evaluate_dataset(data: &LabeledDataset, options: &EvalOptions) -> Result<EvalReport> {
    let p = options.p.unwrap_or(data.p());
    if p == 0 || p > data.p() {
        return Err(Error::config("p", format!("must be in 1..={} (the dataset's column count), got {p}", data.p())));
    }
    if options.q == 0 || options.q >= p {
        return Err(Error::config("q", format!("must be in 1..{p}, got {}", options.q)));
    }
    if options.projections.is_empty() {
        return Err(Error::config("projections", "at least one projection required"));
    }
    if !(options.train_frac > 0.0 && options.train_frac < 1.0) {
        return Err(Error::config("train_frac", format!("must lie in (0, 1), got {}", options.train_frac)));
    }
    let root = derive_stream(options.seed, &[STREAM_TAG]);
    let mut columns = index::sample(&mut root.fork(0), data.p(), p).into_vec();
    columns.sort_unstable();
    let sub = data.select_columns(&columns);
    let ov =
        column_overlap(&sub.class_rows(Class::One), &sub.class_rows(Class::Two), options.gamma, &mut root.fork(1))?;
    let mixed = LabeledDataset::from_classes(&ov.x1, &ov.x2)?;
    let (train, val) = mixed.split(options.train_frac, &mut root.fork(2));
    let projection_root = root.fork(3);
    let outcomes = options
        .projections
        .iter()
        .map(|&kind| {
            let mut rng = projection_root.fork(kind.stream_id());
            let result = training_projection(kind, &train, options, &mut rng).and_then(|w| {
                let model = fit_embedded_qda(&train, &w, &options.qda)?;
                let loss = oos_error(&model, &val)?;
                let n_val = val.n();
                Ok(OosLoss { loss, std_error: (loss * (1.0 - loss) / n_val as f64).sqrt(), n_val })
            });
            EvalOutcome { projection: kind, result }
        })
        .collect();
    Ok(EvalReport {
        columns,
        replaced_columns: ov.replaced_columns.len(),
        n_train: train.n(),
        n_val: val.n(),
        outcomes,
    })
}

fn training_projection(
    kind: ProjectionKind,
    train: &LabeledDataset,
    options: &EvalOptions,
    rng: &mut RngStream,
) -> Result<ProjectionMatrix> {
    let (p, q) = (train.p(), options.q);
    match kind {
        ProjectionKind::Pca | ProjectionKind::EmpiricalPca => pca_projection(&pooled_covariance(train.x())?, q),
        ProjectionKind::Rp => random_projection(p, q, rng),
        ProjectionKind::SparseRp => sparse_random_projection(p, q, rng),
        ProjectionKind::BhattOptimal | ProjectionKind::EmpiricalOptimal => {
            let m = empirical_covariances(train)?;
            let ridge = options.ridge.unwrap_or_else(|| default_ridge(&m.cov_1));
            Ok(bhattacharyya_optimal_projection(&m.cov_1, &m.cov_2, q, ridge)?.projection)
        }
    }
}
