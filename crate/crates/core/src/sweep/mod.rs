//! Grid expansion, deterministic parallel execution and summaries.
//!
//! A *cell* is one point of the parameter grid: `(p, q, family parameters)`
//! plus, in finite-sample mode, a per-class sample size. Each cell is
//! simulated `n_simu` times; every replicate draws its own covariance pair
//! and yields one record per projection.

pub mod config;
mod engine;
pub mod record;
pub mod summary;

pub use config::{FamilyKind, Mode, Ridge, SweepConfig};
pub use engine::{run_sweep, SweepOutcome};
pub use record::{CsvSink, MemorySink, RecordSink, RecordStatus, SweepRecord};
pub use summary::{summarize, Summary};

use crate::error::{Error, Result};
use crate::generators::LatentConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CellParams {
    /// Degrees of freedom as multiples of `p`.
    InverseWishart {
        df1: f64,
        df2: f64,
    },
    Latent(LatentConfig),
    Empirical {
        gamma: f64,
    },
    Fixture {
        alpha: f64,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Position in the canonical expansion order.
    pub index: usize,
    /// Cells sharing a truth group share their covariance pairs; only the
    /// sample-size axis of the finite-sample mode is grouped.
    pub truth_group: usize,
    pub family: FamilyKind,
    pub p: usize,
    pub q: usize,
    pub params: CellParams,
    pub n_per_class: Option<usize>,
}

impl Cell {
    /// `(param1, param2, param3)` as written to the records file.
    pub fn param_fields(&self) -> (String, String, String) {
        let n = self.n_per_class.map(|n| n.to_string()).unwrap_or_default();
        match self.params {
            CellParams::InverseWishart { df1, df2 } => (df1.to_string(), df2.to_string(), n),
            CellParams::Latent(cfg) => {
                (config::format_latent_flags((cfg.share_q, cfg.share_theta)), cfg.mixing.name().to_owned(), n)
            }
            CellParams::Empirical { gamma } => (gamma.to_string(), String::new(), n),
            CellParams::Fixture { alpha, delta } => (alpha.to_string(), delta.to_string(), n),
        }
    }
}

/// The Cartesian product of the configured grids in canonical order
/// (`p`, then `q`, then family parameters, then sample size), minus every
/// `(p, q)` with `q ≥ p`.
pub fn expand_grid(config: &SweepConfig) -> Result<Vec<Cell>> {
    let params: Vec<CellParams> = match config.family {
        FamilyKind::InverseWishart => config
            .df1
            .iter()
            .flat_map(|&df1| config.df2.iter().map(move |&df2| CellParams::InverseWishart { df1, df2 }))
            .collect(),
        FamilyKind::LatentLowDim => config.latent_grid().into_iter().map(CellParams::Latent).collect(),
        FamilyKind::EmpiricalCov => config.gamma.iter().map(|&gamma| CellParams::Empirical { gamma }).collect(),
        FamilyKind::Example1 | FamilyKind::Example2 => {
            vec![CellParams::Fixture { alpha: config.alpha, delta: config.delta }]
        }
    };
    let sizes: Vec<Option<usize>> = if config.mode == Mode::FiniteSampleCurve {
        config.sample_sizes.iter().map(|&n| Some(n)).collect()
    } else {
        vec![None]
    };
    let mut cells = Vec::new();
    let mut group = 0;
    for &p in &config.p {
        for &q in &config.q {
            if q >= p || (config.family == FamilyKind::Example2 && 2 * q > p) {
                continue;
            }
            for &params in &params {
                for &n in &sizes {
                    cells.push(Cell {
                        index: cells.len(),
                        truth_group: group,
                        family: config.family,
                        p,
                        q,
                        params,
                        n_per_class: n,
                    });
                }
                group += 1;
            }
        }
    }
    if cells.is_empty() {
        return Err(Error::EmptyGrid(format!("no (p, q) pair with q < p in p={:?}, q={:?}", config.p, config.q)));
    }
    Ok(cells)
}
