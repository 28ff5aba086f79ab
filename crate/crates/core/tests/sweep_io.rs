use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use projsig::sweep::record::{read_records, CHECKPOINT_FILE, RECORDS_FILE};
use projsig::sweep::{expand_grid, run_sweep, summarize, CsvSink, Mode, RecordSink, SweepConfig, SweepRecord};
use projsig::Error;

fn config() -> SweepConfig {
    SweepConfig {
        p: vec![8, 16],
        q: vec![1, 2, 4],
        df1: vec![1.0, 2.0],
        df2: vec![1.5],
        n_simu: 3,
        seed: 99,
        workers: 3,
        ..Default::default()
    }
}

/// Forwards to a [`CsvSink`] until `fail_at`, then reports a write failure.
struct Interrupting {
    inner: CsvSink,
    fail_at: usize,
}

impl RecordSink for Interrupting {
    fn completed_cells(&self) -> usize {
        self.inner.completed_cells()
    }

    fn write_cell(&mut self, cell_index: usize, records: &[SweepRecord]) -> projsig::Result<()> {
        if cell_index == self.fail_at {
            return Err(Error::SinkWriteFailure("disk full".into()));
        }
        self.inner.write_cell(cell_index, records)
    }
}

fn full_run(dir: &Path, cfg: &SweepConfig) -> Vec<u8> {
    let mut sink = CsvSink::create(dir).unwrap();
    run_sweep(cfg, None, &mut sink).unwrap();
    drop(sink);
    std::fs::read(dir.join(RECORDS_FILE)).unwrap()
}

#[test]
fn interrupted_run_resumes_to_identical_bytes() {
    let cfg = config();
    let cells = expand_grid(&cfg).unwrap().len();
    let reference = full_run(tempfile::tempdir().unwrap().path(), &cfg);

    let dir = tempfile::tempdir().unwrap();
    let mut sink = Interrupting { inner: CsvSink::create(dir.path()).unwrap(), fail_at: 5 };
    assert!(matches!(run_sweep(&cfg, None, &mut sink), Err(Error::SinkWriteFailure(_))));
    drop(sink);
    let checkpoint = std::fs::read_to_string(dir.path().join(CHECKPOINT_FILE)).unwrap();
    assert_eq!(checkpoint.lines().count(), 5);

    // a crash between the records flush and the checkpoint leaves extra rows
    let mut f = OpenOptions::new().append(true).open(dir.path().join(RECORDS_FILE)).unwrap();
    writeln!(f, "iw,8,1,1,1.5,,0,pca,0,,,,,ok,").unwrap();
    drop(f);

    let rpc = cfg.n_simu * cfg.projections.len();
    let mut resumed = CsvSink::resume(dir.path(), rpc).unwrap();
    let outcome = run_sweep(&cfg, None, &mut resumed).unwrap();
    drop(resumed);
    assert_eq!((outcome.cells, outcome.resumed_cells), (cells, 5));
    assert_eq!(outcome.records_written, (cells - 5) * rpc);
    assert_eq!(std::fs::read(dir.path().join(RECORDS_FILE)).unwrap(), reference);
}

#[test]
fn resume_of_complete_run_writes_nothing() {
    let cfg = config();
    let dir = tempfile::tempdir().unwrap();
    let reference = full_run(dir.path(), &cfg);
    let mut sink = CsvSink::resume(dir.path(), cfg.n_simu * cfg.projections.len()).unwrap();
    let outcome = run_sweep(&cfg, None, &mut sink).unwrap();
    drop(sink);
    assert_eq!(outcome.records_written, 0);
    assert_eq!(std::fs::read(dir.path().join(RECORDS_FILE)).unwrap(), reference);
}

#[test]
fn records_round_trip_and_summarize() {
    let cfg = SweepConfig { mode: Mode::RiskMc, mc_samples: 3_000, ..config() };
    let dir = tempfile::tempdir().unwrap();
    full_run(dir.path(), &cfg);
    let records = read_records(&dir.path().join(RECORDS_FILE)).unwrap();
    assert_eq!(records.len(), expand_grid(&cfg).unwrap().len() * cfg.n_simu * cfg.projections.len());
    assert!(records.iter().all(|r| r.metric_mc.is_some() && r.metric_mc_se.is_some()));

    let group = vec!["p".to_owned()];
    let s = summarize(&records, &group, "pca").unwrap();
    for row in &s.rows {
        let base = s.stats(row, "pca").unwrap();
        assert_eq!((base.mean_regret, base.positive_freq), (Some(0.0), Some(0.0)));
    }
    assert!(summarize(&records, &["nope".to_owned()], "pca").is_err());
}
