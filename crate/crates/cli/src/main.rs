use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use projsig::classify::{mc_bayes_risk, QdaOptions};
use projsig::data::{read_labeled, read_matrix};
use projsig::eval::{evaluate_dataset, EvalOptions};
use projsig::fixtures;
use projsig::metrics::embedded_overlap;
use projsig::projections::{
    bhattacharyya_optimal_projection, default_ridge, pca_projection, random_projection, sparse_random_projection,
    ProjectionKind,
};
use projsig::sweep::record::{read_records, CHECKPOINT_FILE};
use projsig::sweep::{run_sweep, summarize, CsvSink, FamilyKind, RecordSink, SweepConfig};
use projsig::{derive_stream, make_spd, Error, ProjectionMatrix, TwoClassGaussian};

mod manifest;

const EXIT_USAGE: u8 = 2;
const EXIT_SINK: u8 = 3;
const EXIT_SINGULAR: u8 = 4;

/// Second-order class signal retained by linear projections.
#[derive(Parser)]
#[command(name = "projsig", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation sweep and write records.csv, checkpoint.txt and manifest.cfg.
    Sweep(SweepArgs),
    /// Aggregate a records file into per-group means and regrets.
    Summarize(SummarizeArgs),
    /// Held-out QDA loss of each projection on a labelled dataset.
    Eval(EvalArgs),
    /// Overlap and Monte Carlo Bayes risk of a known two-class model.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SweepArgs {
    /// key=value configuration file; a previous manifest.cfg works too.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "sweep_out")]
    out: PathBuf,
    /// Continue an interrupted run in --out.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    workers: Option<usize>,
    /// Comma-separated list.
    #[arg(long)]
    p: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    q: Option<String>,
    /// Comma-separated column-overlap proportions.
    #[arg(long)]
    gamma: Option<String>,
    /// Comma-separated projection names.
    #[arg(long)]
    projections: Option<String>,
    /// `auto` or a non-negative whitening ridge.
    #[arg(long)]
    ridge: Option<String>,
    #[arg(long)]
    train_frac: Option<f64>,
    #[arg(long)]
    mc_samples: Option<usize>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    label_column: Option<String>,
    /// Any other configuration key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// records.csv produced by `sweep`.
    records: PathBuf,
    /// Comma-separated grouping columns.
    #[arg(long, default_value = "family,p,q")]
    group_by: String,
    #[arg(long, default_value = "pca")]
    baseline: String,
    /// Summary CSV; defaults to summary.csv beside the records.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Delimited text, one observation per row.
    dataset: PathBuf,
    /// Label column, by header name or 1-based position.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    /// Columns to subsample; all by default.
    #[arg(long)]
    p: Option<usize>,
    #[arg(long, default_value_t = 5)]
    q: usize,
    #[arg(long, default_value = "pca,rp,sparse_rp")]
    projections: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    train_frac: f64,
    /// Whitening ridge of the optimal projection; `auto` by default.
    #[arg(long, default_value = "auto")]
    ridge: String,
    /// Relative ridge added to the embedded class covariances.
    #[arg(long)]
    qda_ridge: Option<f64>,
    /// Ignore class frequencies in the decision rule.
    #[arg(long)]
    no_priors: bool,
}

#[derive(Args)]
struct OracleArgs {
    /// example1 or example2.
    #[arg(long, conflicts_with_all = ["cov1", "cov2"])]
    fixture: Option<String>,
    /// Covariance of class 1 as a delimited square matrix.
    #[arg(long, requires = "cov2")]
    cov1: Option<PathBuf>,
    #[arg(long, requires = "cov1")]
    cov2: Option<PathBuf>,
    /// Prior of class 1 for matrix models.
    #[arg(long, default_value_t = 0.5)]
    weight1: f64,
    /// Ambient dimension of a fixture.
    #[arg(long, default_value_t = fixtures::DEFAULT_DIM)]
    p: usize,
    #[arg(long, default_value_t = 1)]
    q: usize,
    #[arg(long, default_value_t = 4.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    delta: f64,
    #[arg(long, default_value = "pca,bhatt_optimal")]
    projections: String,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Whitening ridge of the optimal projection; `auto` by default.
    #[arg(long, default_value = "auto")]
    ridge: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep(a) => cmd_sweep(a),
        Command::Summarize(a) => cmd_summarize(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(code) => code,
        Err((code, err)) => {
            eprintln!("error: {err}");
            ExitCode::from(code)
        }
    }
}

type CmdResult = Result<ExitCode, (u8, Error)>;

fn usage(err: Error) -> (u8, Error) {
    (EXIT_USAGE, err)
}

fn sink(err: Error) -> (u8, Error) {
    (EXIT_SINK, err)
}

fn parse_projections(list: &str) -> Result<Vec<ProjectionKind>, Error> {
    list.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn parse_ridge(value: &str) -> Result<Option<f64>, Error> {
    match value.parse()? {
        projsig::sweep::Ridge::Auto => Ok(None),
        projsig::sweep::Ridge::Fixed(r) => Ok(Some(r)),
    }
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig, Error> {
    let mut cfg = SweepConfig::default();
    if let Some(path) = &a.config {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        cfg.apply(&text)?;
    }
    for kv in &a.set {
        let (k, v) =
            kv.split_once('=').ok_or_else(|| Error::config("set", format!("expected KEY=VALUE, got `{kv}`")))?;
        cfg.set(k, v)?;
    }
    let overrides = [
        ("seed", a.seed.map(|v| v.to_string())),
        ("workers", a.workers.map(|v| v.to_string())),
        ("p", a.p.clone()),
        ("q", a.q.clone()),
        ("gamma", a.gamma.clone()),
        ("projections", a.projections.clone()),
        ("ridge", a.ridge.clone()),
        ("train_frac", a.train_frac.map(|v| v.to_string())),
        ("mc_samples", a.mc_samples.map(|v| v.to_string())),
        ("dataset", a.dataset.as_ref().map(|d| d.display().to_string())),
        ("label_column", a.label_column.clone()),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(a: SweepArgs) -> CmdResult {
    let cfg = sweep_config(&a).map_err(usage)?;
    let source = match (&cfg.dataset, cfg.family) {
        (Some(path), FamilyKind::EmpiricalCov) => Some(read_labeled(path, cfg.label_column.as_deref()).map_err(usage)?),
        _ => None,
    };
    std::fs::create_dir_all(&a.out).map_err(|e| sink(e.into()))?;
    let manifest_path = a.out.join(manifest::MANIFEST_FILE);
    let mut sink_impl = if a.resume && a.out.join(CHECKPOINT_FILE).exists() {
        manifest::check_resumable(&manifest_path, &cfg).map_err(usage)?;
        CsvSink::resume(&a.out, cfg.n_simu * cfg.projections.len()).map_err(sink)?
    } else {
        CsvSink::create(&a.out).map_err(sink)?
    };
    let mut m = manifest::Manifest::start(&cfg, &a.out);
    m.write(&manifest_path).map_err(sink)?;
    let outcome = run_sweep(&cfg, source.as_ref(), &mut sink_impl as &mut dyn RecordSink).map_err(|e| match e {
        Error::SinkWriteFailure(_) | Error::Io(_) => sink(e),
        other => usage(other),
    })?;
    m.finish();
    m.write(&manifest_path).map_err(sink)?;
    eprintln!(
        "{} cells ({} resumed), {} records written, {} failed -> {}",
        outcome.cells,
        outcome.resumed_cells,
        outcome.records_written,
        outcome.failed_records,
        sink_impl.records_path().display()
    );
    Ok(ExitCode::SUCCESS)
}

fn cmd_summarize(a: SummarizeArgs) -> CmdResult {
    let records = read_records(&a.records).map_err(usage)?;
    let group_by: Vec<String> =
        a.group_by.split(',').map(str::trim).filter(|s| !s.is_empty()).map(str::to_owned).collect();
    let summary = summarize(&records, &group_by, &a.baseline).map_err(usage)?;
    let out = a.out.unwrap_or_else(|| a.records.parent().unwrap_or(Path::new(".")).join("summary.csv"));
    std::fs::write(&out, summary.to_csv()).map_err(|e| sink(e.into()))?;
    print!("{}", summary.to_aligned());
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(a: EvalArgs) -> CmdResult {
    let data = read_labeled(&a.dataset, a.label_column.as_deref()).map_err(usage)?;
    let options = EvalOptions {
        p: a.p,
        q: a.q,
        gamma: a.gamma,
        projections: parse_projections(&a.projections).map_err(usage)?,
        train_frac: a.train_frac,
        ridge: parse_ridge(&a.ridge).map_err(usage)?,
        qda: QdaOptions { use_priors: !a.no_priors, ridge: a.qda_ridge },
        seed: a.seed,
    };
    let report = evaluate_dataset(&data, &options).map_err(usage)?;
    println!(
        "p={} q={} gamma={} replaced_columns={} n_train={} n_val={}",
        report.columns.len(),
        a.q,
        a.gamma,
        report.replaced_columns,
        report.n_train,
        report.n_val
    );
    let mut code = ExitCode::SUCCESS;
    for o in &report.outcomes {
        match &o.result {
            Ok(l) => println!("{:<18} loss={:.6} se={:.6}", o.projection.name(), l.loss, l.std_error),
            Err(e @ Error::SingularEmbeddedCovariance { .. }) => {
                println!("{:<18} singular: {e}", o.projection.name());
                code = ExitCode::from(EXIT_SINGULAR);
            }
            Err(e) => {
                println!("{:<18} failed: {e}", o.projection.name());
                if code == ExitCode::SUCCESS {
                    code = ExitCode::FAILURE;
                }
            }
        }
    }
    Ok(code)
}

fn oracle_model(a: &OracleArgs) -> Result<(String, TwoClassGaussian), Error> {
    match (&a.fixture, &a.cov1, &a.cov2) {
        (Some(name), _, _) => {
            let model = match name.as_str() {
                "example1" => fixtures::example1(a.p, a.q, a.alpha, a.delta)?,
                "example2" => fixtures::example2(a.p, a.q, a.alpha, a.delta)?,
                other => return Err(Error::config("fixture", format!("unknown fixture `{other}`"))),
            };
            Ok((format!("{name} p={} q={} alpha={} delta={}", a.p, a.q, a.alpha, a.delta), model))
        }
        (None, Some(c1), Some(c2)) => {
            let s1 = make_spd(read_matrix(c1)?)?;
            let s2 = make_spd(read_matrix(c2)?)?;
            let p = s1.dim();
            let model = TwoClassGaussian::new(a.weight1, DVector::zeros(p), DVector::zeros(s2.dim()), s1, s2)?;
            Ok((format!("matrices p={p} q={}", a.q), model))
        }
        _ => Err(Error::config("fixture", "give --fixture or both --cov1 and --cov2")),
    }
}

fn oracle_projection(
    kind: ProjectionKind,
    model: &TwoClassGaussian,
    a: &OracleArgs,
) -> Result<ProjectionMatrix, Error> {
    let (p, q) = (model.dim(), a.q);
    let mut rng = derive_stream(a.seed, &[7, 0, kind.stream_id()]);
    match kind {
        ProjectionKind::Pca | ProjectionKind::EmpiricalPca => pca_projection(&model.cov_1().sum(model.cov_2())?, q),
        ProjectionKind::Rp => random_projection(p, q, &mut rng),
        ProjectionKind::SparseRp => sparse_random_projection(p, q, &mut rng),
        ProjectionKind::BhattOptimal | ProjectionKind::EmpiricalOptimal => {
            let ridge = parse_ridge(&a.ridge)?.unwrap_or_else(|| default_ridge(model.cov_1()));
            Ok(bhattacharyya_optimal_projection(model.cov_1(), model.cov_2(), q, ridge)?.projection)
        }
    }
}

fn cmd_oracle(a: OracleArgs) -> CmdResult {
    let (description, model) = oracle_model(&a).map_err(usage)?;
    let kinds = parse_projections(&a.projections).map_err(usage)?;
    if a.q == 0 || a.q > model.dim() {
        return Err(usage(Error::QExceedsP { q: a.q, p: model.dim() }));
    }
    println!("{description}");
    let mut code = ExitCode::SUCCESS;
    for kind in kinds {
        let evaluated = oracle_projection(kind, &model, &a).and_then(|w| {
            let overlap = embedded_overlap(&model, &w)?;
            let risk =
                mc_bayes_risk(&model, Some(&w), a.mc_samples, &derive_stream(a.seed, &[7, 1, kind.stream_id()]))?;
            Ok((overlap, risk))
        });
        match evaluated {
            Ok((overlap, risk)) => println!(
                "{:<18} overlap={:.10} mc_risk={:.6} se={:.6} n={}",
                kind.name(),
                overlap,
                risk.estimate,
                risk.std_error,
                risk.n_samples
            ),
            Err(e) => {
                println!("{:<18} failed: {e}", kind.name());
                code = ExitCode::from(EXIT_USAGE);
            }
        }
    }
    Ok(code)
}
