//! Sweep configuration and its flat `key=value` text form.
//!
//! One setting per line, list values comma-separated, `#` starts a comment.
//! [`SweepConfig::to_kv`] writes a file that parses back to the same config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::generators::{LatentConfig, Mixing, DEFAULT_SPARSE_DENSITY};
use crate::projections::ProjectionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    InverseWishart,
    LatentLowDim,
    EmpiricalCov,
    /// Block-diagonal fixture where PCA is optimal.
    Example1,
    /// Block-diagonal fixture where PCA sees no signal.
    Example2,
}

impl FamilyKind {
    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::InverseWishart => "iw",
            FamilyKind::LatentLowDim => "latent",
            FamilyKind::EmpiricalCov => "empirical_cov",
            FamilyKind::Example1 => "example1",
            FamilyKind::Example2 => "example2",
        }
    }

    /// First element of every stream path of this family.
    pub fn stream_tag(self) -> u64 {
        match self {
            FamilyKind::InverseWishart => 1,
            FamilyKind::LatentLowDim => 2,
            FamilyKind::EmpiricalCov => 3,
            FamilyKind::Example1 => 4,
            FamilyKind::Example2 => 5,
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iw" | "inverse_wishart" => Ok(FamilyKind::InverseWishart),
            "latent" | "latent_low_dim" => Ok(FamilyKind::LatentLowDim),
            "empirical_cov" | "empirical" => Ok(FamilyKind::EmpiricalCov),
            "example1" => Ok(FamilyKind::Example1),
            "example2" => Ok(FamilyKind::Example2),
            _ => Err(Error::config("family", format!("unknown family `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Embedded Bhattacharyya overlap of the true pair.
    Overlap,
    /// Trained embedded QDA, 0-1 loss on a held-out split.
    OosLoss,
    /// Overlap plus Monte Carlo embedded Bayes risk.
    RiskMc,
    /// OoS loss and reconstruction error over a grid of sample sizes.
    FiniteSampleCurve,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Overlap => "overlap",
            Mode::OosLoss => "oos_loss",
            Mode::RiskMc => "risk_mc",
            Mode::FiniteSampleCurve => "finite_sample_curve",
        }
    }

    pub fn trains_classifier(self) -> bool {
        matches!(self, Mode::OosLoss | Mode::FiniteSampleCurve)
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "overlap" => Ok(Mode::Overlap),
            "oos_loss" => Ok(Mode::OosLoss),
            "risk_mc" => Ok(Mode::RiskMc),
            "finite_sample_curve" => Ok(Mode::FiniteSampleCurve),
            _ => Err(Error::config("mode", format!("unknown mode `{s}`"))),
        }
    }
}

/// Ridge added to the first covariance before the optimal projection's
/// whitening step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Zero for full-rank input, else `1e-6 · tr(Σ₁)/p`.
    Auto,
    Fixed(f64),
}

impl fmt::Display for Ridge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Ridge::Auto => f.write_str("auto"),
            Ridge::Fixed(r) => write!(f, "{r}"),
        }
    }
}

impl FromStr for Ridge {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Ridge::Auto);
        }
        match s.parse::<f64>() {
            Ok(r) if r >= 0.0 && r.is_finite() => Ok(Ridge::Fixed(r)),
            _ => Err(Error::config("ridge", format!("expected `auto` or a non-negative number, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub family: FamilyKind,
    pub p: Vec<usize>,
    pub q: Vec<usize>,
    /// `df₁/p` values (inverse Wishart).
    pub df1: Vec<f64>,
    /// `df₂/p` values (inverse Wishart).
    pub df2: Vec<f64>,
    /// `(share_q, share_theta)` flag pairs (latent family).
    pub latent_configs: Vec<(bool, bool)>,
    /// `false` = dense, `true` = sparse (latent family).
    pub sparse_mixing: Vec<bool>,
    pub sparse_density: f64,
    /// Column-overlap proportions (empirical-covariance family).
    pub gamma: Vec<f64>,
    /// Fixture parameters.
    pub alpha: f64,
    pub delta: f64,
    pub n_simu: usize,
    pub projections: Vec<ProjectionKind>,
    pub mode: Mode,
    pub seed: u64,
    /// 0 means one worker per available core.
    pub workers: usize,
    pub train_frac: f64,
    pub mc_samples: usize,
    pub ridge: Ridge,
    /// Opt-in relative QDA ridge, see [`crate::classify::QdaOptions`].
    pub qda_ridge: Option<f64>,
    /// Per-class sample sizes (finite-sample mode).
    pub sample_sizes: Vec<usize>,
    /// Per-class sample size of synthetic data in `oos_loss` mode.
    pub n_per_class: usize,
    pub dataset: Option<PathBuf>,
    pub label_column: Option<String>,
    pub use_priors: bool,
    /// Fill the `ms` column. Off by default: timings are not reproducible.
    pub timing: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            family: FamilyKind::InverseWishart,
            p: vec![20, 50, 100, 200],
            q: vec![1, 2, 5, 10, 50],
            df1: vec![1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 10.0],
            df2: vec![1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 10.0],
            latent_configs: vec![(false, false), (true, false), (false, true)],
            sparse_mixing: vec![false, true],
            sparse_density: DEFAULT_SPARSE_DENSITY,
            gamma: (0..=8).map(|i| i as f64 / 8.0).collect(),
            alpha: 4.0,
            delta: 1.0,
            n_simu: 100,
            projections: vec![ProjectionKind::Pca, ProjectionKind::Rp, ProjectionKind::SparseRp],
            mode: Mode::Overlap,
            seed: 0,
            workers: 0,
            train_frac: 0.7,
            mc_samples: 100_000,
            ridge: Ridge::Auto,
            qda_ridge: None,
            sample_sizes: vec![20, 40, 80, 160, 320],
            n_per_class: 195,
            dataset: None,
            label_column: None,
            use_priors: true,
            timing: false,
        }
    }
}

fn list<T: FromStr>(field: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| Error::config(field, format!("cannot parse `{s}`"))))
        .collect()
}

fn scalar<T: FromStr>(field: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::config(field, format!("cannot parse `{value}`")))
}

fn boolean(field: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::config(field, format!("expected true/false, got `{other}`"))),
    }
}

fn join<T: fmt::Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn latent_flags(s: &str) -> Result<(bool, bool)> {
    let b = s.as_bytes();
    let bit = |c: u8| match c {
        b'0' => Ok(false),
        b'1' => Ok(true),
        _ => Err(Error::config("latent_configs", format!("flags must be two binary digits, got `{s}`"))),
    };
    if b.len() != 2 {
        return Err(Error::config("latent_configs", format!("flags must be two binary digits, got `{s}`")));
    }
    Ok((bit(b[0])?, bit(b[1])?))
}

pub fn format_latent_flags(flags: (bool, bool)) -> String {
    format!("{}{}", u8::from(flags.0), u8::from(flags.1))
}

impl SweepConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key.trim() {
            "family" => self.family = value.parse()?,
            "p" => self.p = list("p", value)?,
            "q" => self.q = list("q", value)?,
            "df" => {
                self.df1 = list("df", value)?;
                self.df2 = self.df1.clone();
            }
            "df1" => self.df1 = list("df1", value)?,
            "df2" => self.df2 = list("df2", value)?,
            "latent_configs" => {
                self.latent_configs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(latent_flags)
                    .collect::<Result<_>>()?
            }
            "mixing" => {
                self.sparse_mixing = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| match s {
                        "dense" => Ok(false),
                        "sparse" => Ok(true),
                        _ => Err(Error::config("mixing", format!("expected dense or sparse, got `{s}`"))),
                    })
                    .collect::<Result<_>>()?
            }
            "sparse_density" => self.sparse_density = scalar("sparse_density", value)?,
            "gamma" => self.gamma = list("gamma", value)?,
            "alpha" => self.alpha = scalar("alpha", value)?,
            "delta" => self.delta = scalar("delta", value)?,
            "n_simu" => self.n_simu = scalar("n_simu", value)?,
            "projections" => self.projections = list("projections", value)?,
            "mode" => self.mode = value.parse()?,
            "seed" => self.seed = scalar("seed", value)?,
            "workers" => self.workers = scalar("workers", value)?,
            "train_frac" => self.train_frac = scalar("train_frac", value)?,
            "mc_samples" => self.mc_samples = scalar("mc_samples", value)?,
            "ridge" => self.ridge = value.parse()?,
            "qda_ridge" => {
                self.qda_ridge =
                    if value.is_empty() || value == "none" { None } else { Some(scalar("qda_ridge", value)?) }
            }
            "sample_sizes" => self.sample_sizes = list("sample_sizes", value)?,
            "n_per_class" => self.n_per_class = scalar("n_per_class", value)?,
            "dataset" => self.dataset = if value.is_empty() { None } else { Some(PathBuf::from(value)) },
            "label_column" => self.label_column = if value.is_empty() { None } else { Some(value.to_owned()) },
            "use_priors" => self.use_priors = boolean("use_priors", value)?,
            "timing" => self.timing = boolean("timing", value)?,
            other => return Err(Error::config(other, "unknown configuration key")),
        }
        Ok(())
    }

    /// Parses the `key=value` text on top of the defaults. Errors carry the
    /// line number.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` lines without validating; `#` starts a comment.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i as u64 + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let need = |ok: bool, field: &str, msg: &str| if ok { Ok(()) } else { Err(Error::config(field, msg)) };
        need(!self.p.is_empty(), "p", "at least one value required")?;
        need(!self.q.is_empty(), "q", "at least one value required")?;
        need(self.p.iter().all(|&p| p >= 1), "p", "values must be >= 1")?;
        need(self.q.iter().all(|&q| q >= 1), "q", "values must be >= 1")?;
        need(self.n_simu >= 1, "n_simu", "must be >= 1")?;
        need(!self.projections.is_empty(), "projections", "at least one projection required")?;
        need(self.train_frac > 0.0 && self.train_frac < 1.0, "train_frac", "must lie strictly between 0 and 1")?;
        need(self.mc_samples >= 1, "mc_samples", "must be >= 1")?;
        if let Some(r) = self.qda_ridge {
            need(r >= 0.0 && r.is_finite(), "qda_ridge", "must be a non-negative number")?;
        }
        match self.family {
            FamilyKind::InverseWishart => {
                for (field, v) in [("df1", &self.df1), ("df2", &self.df2)] {
                    need(!v.is_empty(), field, "at least one value required")?;
                    if let Some(bad) = v.iter().find(|&&d| !(d >= 1.0 && d.is_finite())) {
                        return Err(Error::config(field, format!("df/p must be >= 1, got {bad}")));
                    }
                }
            }
            FamilyKind::LatentLowDim => {
                need(!self.latent_configs.is_empty(), "latent_configs", "at least one value required")?;
                need(!self.sparse_mixing.is_empty(), "mixing", "at least one value required")?;
                need(
                    !self.latent_configs.contains(&(true, true)),
                    "latent_configs",
                    "sharing both Q and Theta (11) is not allowed",
                )?;
                need(self.sparse_density > 0.0 && self.sparse_density <= 1.0, "sparse_density", "must lie in (0, 1]")?;
            }
            FamilyKind::EmpiricalCov => {
                need(!self.gamma.is_empty(), "gamma", "at least one value required")?;
                need(self.gamma.iter().all(|g| (0.0..=1.0).contains(g)), "gamma", "values must lie in [0, 1]")?;
                need(self.dataset.is_some(), "dataset", "required by the empirical_cov family")?;
            }
            FamilyKind::Example1 | FamilyKind::Example2 => {
                need(self.delta > 0.0 && self.delta < self.alpha, "delta", "fixtures need 0 < delta < alpha")?;
            }
        }
        if matches!(self.mode, Mode::Overlap | Mode::RiskMc) {
            if let Some(k) = self.projections.iter().find(|k| k.is_empirical()) {
                return Err(Error::config(
                    "projections",
                    format!("`{k}` needs training data; use mode oos_loss or finite_sample_curve"),
                ));
            }
        }
        if self.mode == Mode::FiniteSampleCurve {
            need(!self.sample_sizes.is_empty(), "sample_sizes", "at least one value required")?;
            need(self.sample_sizes.iter().all(|&n| n >= 2), "sample_sizes", "values must be >= 2")?;
        }
        if self.mode == Mode::OosLoss {
            need(self.n_per_class >= 2, "n_per_class", "must be >= 2")?;
        }
        Ok(())
    }

    pub fn latent_grid(&self) -> Vec<LatentConfig> {
        let mut out = Vec::new();
        for &(share_q, share_theta) in &self.latent_configs {
            for &sparse in &self.sparse_mixing {
                let mixing = if sparse { Mixing::Sparse { density: self.sparse_density } } else { Mixing::Dense };
                out.push(LatentConfig { share_q, share_theta, mixing });
            }
        }
        out
    }

    /// Worker count with `0` resolved to the available parallelism.
    pub fn resolved_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
        }
    }

    /// Every setting as `key=value` lines; parses back to `self`.
    pub fn to_kv(&self) -> String {
        let mut lines = vec![
            format!("family={}", self.family.name()),
            format!("mode={}", self.mode.name()),
            format!("p={}", join(&self.p)),
            format!("q={}", join(&self.q)),
            format!("df1={}", join(&self.df1)),
            format!("df2={}", join(&self.df2)),
            format!(
                "latent_configs={}",
                self.latent_configs.iter().map(|&f| format_latent_flags(f)).collect::<Vec<_>>().join(",")
            ),
            format!(
                "mixing={}",
                self.sparse_mixing.iter().map(|&s| if s { "sparse" } else { "dense" }).collect::<Vec<_>>().join(",")
            ),
            format!("sparse_density={}", self.sparse_density),
            format!("gamma={}", join(&self.gamma)),
            format!("alpha={}", self.alpha),
            format!("delta={}", self.delta),
            format!("n_simu={}", self.n_simu),
            format!("projections={}", join(&self.projections)),
            format!("seed={}", self.seed),
            format!("workers={}", self.workers),
            format!("train_frac={}", self.train_frac),
            format!("mc_samples={}", self.mc_samples),
            format!("ridge={}", self.ridge),
            format!("qda_ridge={}", self.qda_ridge.map(|r| r.to_string()).unwrap_or_else(|| "none".into())),
            format!("sample_sizes={}", join(&self.sample_sizes)),
            format!("n_per_class={}", self.n_per_class),
            format!("use_priors={}", self.use_priors),
            format!("timing={}", self.timing),
        ];
        if let Some(d) = &self.dataset {
            lines.push(format!("dataset={}", d.display()));
        }
        if let Some(l) = &self.label_column {
            lines.push(format!("label_column={l}"));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}
