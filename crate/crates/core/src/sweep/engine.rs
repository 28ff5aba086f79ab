//! Parallel evaluation of cells with in-order delivery to a sink.
//!
//! Stream paths, all under the configured master seed:
//!
//! | purpose          | path                                          |
//! |------------------|-----------------------------------------------|
//! | covariance pair  | `[family, truth_group, replicate, 0]`         |
//! | data and split   | `[family, cell, replicate, 1]`                |
//! | projection draw  | `[family, cell, replicate, 2, projection]`    |
//! | Monte Carlo risk | `[family, cell, replicate, 3, projection]`    |

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::mpsc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rayon::prelude::*;

use super::config::{FamilyKind, Mode, Ridge, SweepConfig};
use super::record::{RecordSink, RecordStatus, SweepRecord};
use super::{expand_grid, Cell, CellParams};
use crate::classify::{fit_embedded_qda, mc_bayes_risk, oos_error, reconstruction_error, QdaOptions};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::generators::{
    column_overlap, empirical_cov_pair, gen_iw_pair, gen_latent_pair, sample_gaussian, sample_gaussian_psd,
};
use crate::metrics::embedded_overlap;
use crate::projections::{
    bhattacharyya_optimal_projection, default_ridge, empirical_covariances, pca_projection, pooled_covariance,
    random_projection, sparse_random_projection, EmpiricalMoments, ProjectionKind,
};
use crate::rng::{derive_stream, RngStream};
use crate::types::{Class, LabeledDataset, ProjectionMatrix, SpdMatrix, TwoClassGaussian};

/// What a completed run produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOutcome {
    pub cells: usize,
    /// Cells skipped because the sink already held them.
    pub resumed_cells: usize,
    pub records_written: usize,
    pub failed_records: usize,
}

struct Context<'a> {
    config: &'a SweepConfig,
    source: Option<&'a LabeledDataset>,
}

struct Truth {
    model: TwoClassGaussian,
    /// Column-overlapped real data behind an empirical-covariance truth.
    overlapped: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

struct Split {
    train: LabeledDataset,
    val: LabeledDataset,
    moments: EmpiricalMoments,
}

/// Runs every cell of `config` not yet held by `sink`, delivering cells to
/// the sink in ascending index order. `source` is the two-group dataset of
/// the empirical-covariance family.
///
/// Per-cell failures are recorded in-band; only sink failures abort the run.
pub fn run_sweep(
    config: &SweepConfig,
    source: Option<&LabeledDataset>,
    sink: &mut dyn RecordSink,
) -> Result<SweepOutcome> {
    config.validate()?;
    let cells = expand_grid(config)?;
    check_source(config, source)?;
    let start = sink.completed_cells().min(cells.len());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.resolved_workers())
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?;
    let ctx = Context { config, source };
    let abort = AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Vec<SweepRecord>)>();
    let todo = &cells[start..];

    let mut outcome = SweepOutcome { cells: cells.len(), resumed_cells: start, records_written: 0, failed_records: 0 };
    let mut failure = None;
    std::thread::scope(|s| {
        let (ctx, abort, pool) = (&ctx, &abort, &pool);
        s.spawn(move || {
            pool.install(|| {
                todo.par_iter().for_each_with(tx, |tx, cell| {
                    if abort.load(Ordering::Relaxed) {
                        return;
                    }
                    let records = evaluate_cell(ctx, cell);
                    let _ = tx.send((cell.index, records));
                });
            });
        });

        let mut pending = BTreeMap::new();
        let mut next = start;
        for (index, records) in rx {
            if failure.is_some() {
                continue;
            }
            pending.insert(index, records);
            while let Some(records) = pending.remove(&next) {
                if let Err(e) = sink.write_cell(next, &records) {
                    abort.store(true, Ordering::Relaxed);
                    failure = Some(e);
                    break;
                }
                outcome.records_written += records.len();
                outcome.failed_records += records.iter().filter(|r| !r.status.is_ok()).count();
                next += 1;
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(outcome),
    }
}

fn check_source(config: &SweepConfig, source: Option<&LabeledDataset>) -> Result<()> {
    if config.family != FamilyKind::EmpiricalCov {
        return Ok(());
    }
    let source = source.ok_or_else(|| Error::config("dataset", "the empirical_cov family needs a dataset"))?;
    let max_p = config.p.iter().copied().max().unwrap_or(0);
    if max_p > source.p() {
        return Err(Error::config("p", format!("p={max_p} exceeds the dataset's {} feature columns", source.p())));
    }
    for class in Class::BOTH {
        if source.class_count(class) == 0 {
            return Err(Error::EmptyClass(class.number()));
        }
    }
    Ok(())
}

fn evaluate_cell(ctx: &Context<'_>, cell: &Cell) -> Vec<SweepRecord> {
    (0..ctx.config.n_simu)
        .into_par_iter()
        .map(|rep| evaluate_replicate(ctx, cell, rep))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn blank_record(cell: &Cell, rep: usize, kind: ProjectionKind) -> SweepRecord {
    let (param1, param2, param3) = cell.param_fields();
    SweepRecord {
        family: cell.family.name().to_owned(),
        p: cell.p,
        q: cell.q,
        param1,
        param2,
        param3,
        replicate: rep,
        projection: kind.name().to_owned(),
        metric_overlap: None,
        metric_oos: None,
        metric_mc: None,
        metric_mc_se: None,
        metric_recon: None,
        status: RecordStatus::Ok,
        ms: None,
    }
}

fn evaluate_replicate(ctx: &Context<'_>, cell: &Cell, rep: usize) -> Vec<SweepRecord> {
    let config = ctx.config;
    let tag = cell.family.stream_tag();
    let (group, idx, r) = (cell.truth_group as u64, cell.index as u64, rep as u64);
    let truth_rng = derive_stream(config.seed, &[tag, group, r, 0]);
    let data_rng = derive_stream(config.seed, &[tag, idx, r, 1]);

    let prepared = make_truth(ctx, cell, &truth_rng).and_then(|truth| {
        let split =
            if config.mode.trains_classifier() { Some(make_split(ctx, cell, &truth, &data_rng)?) } else { None };
        Ok((truth, split))
    });
    let (truth, split) = match prepared {
        Ok(v) => v,
        Err(e) => {
            return config
                .projections
                .iter()
                .map(|&kind| SweepRecord {
                    status: RecordStatus::Failed(e.to_string()),
                    ..blank_record(cell, rep, kind)
                })
                .collect();
        }
    };

    config
        .projections
        .iter()
        .map(|&kind| {
            let started = Instant::now();
            let mut record = blank_record(cell, rep, kind);
            let proj_rng = derive_stream(config.seed, &[tag, idx, r, 2, kind.stream_id()]);
            let mc_rng = derive_stream(config.seed, &[tag, idx, r, 3, kind.stream_id()]);
            let result = build_projection(ctx, cell, kind, &truth, split.as_ref(), proj_rng)
                .and_then(|w| evaluate(ctx, &truth, split.as_ref(), &w, &mc_rng, &mut record));
            if let Err(e) = result {
                record = SweepRecord { status: RecordStatus::Failed(e.to_string()), ..blank_record(cell, rep, kind) };
            }
            if config.timing {
                record.ms = Some(started.elapsed().as_secs_f64() * 1e3);
            }
            record
        })
        .collect()
}

fn make_truth(ctx: &Context<'_>, cell: &Cell, rng: &RngStream) -> Result<Truth> {
    let p = cell.p;
    let synthetic =
        |(c1, c2): (SpdMatrix, SpdMatrix)| Ok(Truth { model: TwoClassGaussian::centered(c1, c2)?, overlapped: None });
    match cell.params {
        CellParams::InverseWishart { df1, df2 } => synthetic(gen_iw_pair(p, df1 * p as f64, df2 * p as f64, rng)?),
        CellParams::Latent(cfg) => synthetic(gen_latent_pair(p, &cfg, rng)?),
        CellParams::Fixture { alpha, delta } => {
            let model = match cell.family {
                FamilyKind::Example2 => fixtures::example2(p, cell.q, alpha, delta)?,
                _ => fixtures::example1(p, cell.q, alpha, delta)?,
            };
            Ok(Truth { model, overlapped: None })
        }
        CellParams::Empirical { gamma } => {
            let source = ctx.source.ok_or_else(|| Error::config("dataset", "missing"))?;
            let mut columns = index::sample(&mut rng.fork(0), source.p(), p).into_vec();
            columns.sort_unstable();
            let sub = source.select_columns(&columns);
            let ov = column_overlap(&sub.class_rows(Class::One), &sub.class_rows(Class::Two), gamma, &mut rng.fork(1))?;
            let (c1, c2) = empirical_cov_pair(&ov.x1, &ov.x2)?;
            let model = TwoClassGaussian::new_semidefinite(0.5, DVector::zeros(p), DVector::zeros(p), c1, c2)?;
            Ok(Truth { model, overlapped: Some((ov.x1, ov.x2)) })
        }
    }
}

fn draw_class(model: &TwoClassGaussian, class: Class, n: usize, rng: &mut RngStream) -> Result<DMatrix<f64>> {
    let cov = model.cov(class);
    if cov.cholesky().is_some() {
        sample_gaussian(model.mean(class), cov, n, rng)
    } else {
        sample_gaussian_psd(model.mean(class), cov, n, rng)
    }
}

fn make_split(ctx: &Context<'_>, cell: &Cell, truth: &Truth, rng: &RngStream) -> Result<Split> {
    let data = match (&truth.overlapped, cell.n_per_class) {
        // the overlapped real data itself, as in the real-data experiments
        (Some((x1, x2)), None) => LabeledDataset::from_classes(x1, x2)?,
        (_, n) => {
            let n = n.unwrap_or(ctx.config.n_per_class);
            let x1 = draw_class(&truth.model, Class::One, n, &mut rng.fork(0))?;
            let x2 = draw_class(&truth.model, Class::Two, n, &mut rng.fork(1))?;
            LabeledDataset::from_classes(&x1, &x2)?
        }
    };
    let (train, val) = data.split(ctx.config.train_frac, &mut rng.fork(2));
    let moments = empirical_covariances(&train)?;
    Ok(Split { train, val, moments })
}

fn resolve_ridge(setting: Ridge, cov_1: &SpdMatrix) -> f64 {
    match setting {
        Ridge::Auto => default_ridge(cov_1),
        Ridge::Fixed(r) => r,
    }
}

fn build_projection(
    ctx: &Context<'_>,
    cell: &Cell,
    kind: ProjectionKind,
    truth: &Truth,
    split: Option<&Split>,
    mut rng: RngStream,
) -> Result<ProjectionMatrix> {
    let (p, q) = (cell.p, cell.q);
    let model = &truth.model;
    let needs_split = || split.ok_or_else(|| Error::config("projections", format!("`{kind}` needs training data")));
    match kind {
        ProjectionKind::Pca => pca_projection(&model.cov_1().sum(model.cov_2())?, q),
        ProjectionKind::Rp => random_projection(p, q, &mut rng),
        ProjectionKind::SparseRp => sparse_random_projection(p, q, &mut rng),
        ProjectionKind::BhattOptimal => {
            let ridge = resolve_ridge(ctx.config.ridge, model.cov_1());
            Ok(bhattacharyya_optimal_projection(model.cov_1(), model.cov_2(), q, ridge)?.projection)
        }
        ProjectionKind::EmpiricalPca => pca_projection(&pooled_covariance(needs_split()?.train.x())?, q),
        ProjectionKind::EmpiricalOptimal => {
            let m = &needs_split()?.moments;
            let ridge = resolve_ridge(ctx.config.ridge, &m.cov_1);
            Ok(bhattacharyya_optimal_projection(&m.cov_1, &m.cov_2, q, ridge)?.projection)
        }
    }
}

fn evaluate(
    ctx: &Context<'_>,
    truth: &Truth,
    split: Option<&Split>,
    w: &ProjectionMatrix,
    mc_rng: &RngStream,
    record: &mut SweepRecord,
) -> Result<()> {
    let config = ctx.config;
    match config.mode {
        Mode::Overlap => record.metric_overlap = Some(embedded_overlap(&truth.model, w)?),
        Mode::RiskMc => {
            record.metric_overlap = Some(embedded_overlap(&truth.model, w)?);
            let risk = mc_bayes_risk(&truth.model, Some(w), config.mc_samples, mc_rng)?;
            record.metric_mc = Some(risk.estimate);
            record.metric_mc_se = Some(risk.std_error);
        }
        Mode::OosLoss | Mode::FiniteSampleCurve => {
            let split = split.ok_or_else(|| Error::config("mode", "training split missing"))?;
            let options = QdaOptions { use_priors: config.use_priors, ridge: config.qda_ridge };
            let qda = fit_embedded_qda(&split.train, w, &options)?;
            record.metric_oos = Some(oos_error(&qda, &split.val)?);
            // informative only; a singular embedded truth leaves it blank
            record.metric_overlap = embedded_overlap(&truth.model, w).ok();
            if config.mode == Mode::FiniteSampleCurve {
                let m = &split.moments;
                record.metric_recon =
                    Some(reconstruction_error(w, &m.cov_1, &m.cov_2, truth.model.cov_1(), truth.model.cov_2())?);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::record::MemorySink;

    fn small(mode: Mode, projections: Vec<ProjectionKind>) -> SweepConfig {
        SweepConfig {
            p: vec![8, 12],
            q: vec![1, 3],
            df1: vec![1.0, 3.0],
            df2: vec![2.0],
            n_simu: 3,
            projections,
            mode,
            seed: 11,
            workers: 2,
            mc_samples: 2000,
            n_per_class: 40,
            sample_sizes: vec![15, 30],
            ..Default::default()
        }
    }

    fn run(config: &SweepConfig) -> Vec<SweepRecord> {
        let mut sink = MemorySink::default();
        run_sweep(config, None, &mut sink).unwrap();
        let cells = expand_grid(config).unwrap().len();
        assert_eq!(sink.cells, (0..cells).collect::<Vec<_>>());
        sink.records
    }

    #[test]
    fn record_count_is_conserved() {
        let cfg = small(Mode::Overlap, vec![ProjectionKind::Pca, ProjectionKind::Rp, ProjectionKind::SparseRp]);
        let recs = run(&cfg);
        assert_eq!(recs.len(), 8 * 3 * 3);
        assert!(recs.iter().all(|r| r.metric_overlap.is_some() || !r.status.is_ok()));
    }

    #[test]
    fn worker_count_does_not_change_records() {
        let mut cfg = small(Mode::RiskMc, vec![ProjectionKind::Pca, ProjectionKind::Rp]);
        cfg.workers = 1;
        let a = run(&cfg);
        cfg.workers = 4;
        assert_eq!(a, run(&cfg));
    }

    #[test]
    fn training_modes_fill_their_metrics() {
        let all = vec![
            ProjectionKind::Pca,
            ProjectionKind::BhattOptimal,
            ProjectionKind::EmpiricalPca,
            ProjectionKind::EmpiricalOptimal,
        ];
        for r in run(&small(Mode::OosLoss, all.clone())) {
            assert!(r.status.is_ok(), "{:?}", r.status);
            assert!(r.metric_oos.is_some() && r.metric_recon.is_none());
        }
        // n_k < p: empirical-optimal embeds null directions of S_k, so the
        // classifier needs the opt-in ridge
        let mut finite = small(Mode::FiniteSampleCurve, all);
        finite.qda_ridge = Some(1e-3);
        let recs = run(&finite);
        for r in &recs {
            assert!(r.metric_recon.is_some() && !r.param3.is_empty(), "{r:?}");
        }
    }

    #[test]
    fn fixture_family_records() {
        let cfg = SweepConfig {
            family: FamilyKind::Example2,
            p: vec![10],
            q: vec![2, 5, 6],
            n_simu: 1,
            projections: vec![ProjectionKind::Pca, ProjectionKind::BhattOptimal],
            alpha: 4.0,
            delta: 1.0,
            ..Default::default()
        };
        let recs = run(&cfg);
        // q = 6 > p/2 is not expanded
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[0].metric_overlap, Some(0.5));
        let expected = fixtures::bound_example(4.0, 1.0, 2);
        assert!((recs[1].metric_overlap.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn failures_are_recorded_not_dropped() {
        // q = n_k makes the embedded training covariance singular
        let mut cfg = small(Mode::FiniteSampleCurve, vec![ProjectionKind::Pca]);
        cfg.p = vec![12];
        cfg.q = vec![10];
        cfg.sample_sizes = vec![4];
        let recs = run(&cfg);
        assert_eq!(recs.len(), 6);
        assert!(recs.iter().all(|r| matches!(&r.status, RecordStatus::Failed(m) if m.contains("singular"))));
    }

    struct FailingSink(usize);
    impl RecordSink for FailingSink {
        fn write_cell(&mut self, _: usize, _: &[SweepRecord]) -> Result<()> {
            self.0 += 1;
            Err(Error::SinkWriteFailure("disk full".into()))
        }
    }

    #[test]
    fn sink_failure_aborts() {
        let cfg = small(Mode::Overlap, vec![ProjectionKind::Pca]);
        let mut sink = FailingSink(0);
        assert!(matches!(run_sweep(&cfg, None, &mut sink), Err(Error::SinkWriteFailure(_))));
        assert_eq!(sink.0, 1);
    }
}
