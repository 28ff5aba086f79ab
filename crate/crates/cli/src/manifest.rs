//! The run manifest: comment metadata followed by the full configuration echo,
//! so the file itself is a valid `--config` input.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use projsig::sweep::record::{CHECKPOINT_FILE, RECORDS_FILE};
use projsig::sweep::SweepConfig;
use projsig::Error;

pub const MANIFEST_FILE: &str = "manifest.cfg";

pub struct Manifest {
    config: SweepConfig,
    out: PathBuf,
    started: u64,
    finished: Option<u64>,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl Manifest {
    pub fn start(config: &SweepConfig, out: &Path) -> Self {
        Self { config: config.clone(), out: out.to_path_buf(), started: unix_now(), finished: None }
    }

    pub fn finish(&mut self) {
        self.finished = Some(unix_now());
    }

    pub fn render(&self) -> String {
        let mut text = format!(
            "# projsig {}\n# seed: {}\n# workers: {}\n# started_unix: {}\n# finished_unix: {}\n# records: {}\n# checkpoint: {}\n",
            env!("CARGO_PKG_VERSION"),
            self.config.seed,
            self.config.resolved_workers(),
            self.started,
            self.finished.map(|t| t.to_string()).unwrap_or_else(|| "running".into()),
            self.out.join(RECORDS_FILE).display(),
            self.out.join(CHECKPOINT_FILE).display(),
        );
        text.push_str(&self.config.to_kv());
        text
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        std::fs::write(path, self.render())?;
        Ok(())
    }
}

/// A run may only be resumed under the configuration that started it; the
/// worker count is free since it does not affect records.
pub fn check_resumable(path: &Path, config: &SweepConfig) -> Result<(), Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config("resume", format!("cannot read {}: {e}", path.display())))?;
    let mut previous = SweepConfig::default();
    previous.apply(&text)?;
    previous.workers = config.workers;
    if previous != *config {
        return Err(Error::config("resume", format!("configuration differs from {}", path.display())));
    }
    Ok(())
}
