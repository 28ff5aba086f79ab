//! Sweep records, their CSV encoding and the record sinks.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Fixed column order of a records file.
pub const HEADER: [&str; 15] = [
    "family",
    "p",
    "q",
    "param1",
    "param2",
    "param3",
    "replicate",
    "projection",
    "metric_overlap",
    "metric_oos",
    "metric_mc",
    "metric_mc_se",
    "metric_recon",
    "status",
    "ms",
];

pub const RECORDS_FILE: &str = "records.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Ok,
    Failed(String),
}

impl RecordStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, RecordStatus::Ok)
    }

    fn encode(&self) -> String {
        match self {
            RecordStatus::Ok => "ok".into(),
            RecordStatus::Failed(reason) => format!("failed:{}", reason.replace(['\n', '\r'], " ")),
        }
    }

    fn decode(s: &str) -> Option<Self> {
        if s == "ok" {
            Some(RecordStatus::Ok)
        } else {
            s.strip_prefix("failed:").map(|r| RecordStatus::Failed(r.to_owned()))
        }
    }
}

/// One evaluated (cell, replicate, projection) triple.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub family: String,
    pub p: usize,
    pub q: usize,
    pub param1: String,
    pub param2: String,
    pub param3: String,
    pub replicate: usize,
    pub projection: String,
    pub metric_overlap: Option<f64>,
    pub metric_oos: Option<f64>,
    pub metric_mc: Option<f64>,
    pub metric_mc_se: Option<f64>,
    /// Raw reconstruction error (not its logarithm).
    pub metric_recon: Option<f64>,
    pub status: RecordStatus,
    /// Wall-clock milliseconds; only filled when timing is enabled.
    pub ms: Option<f64>,
}

/// 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

impl SweepRecord {
    pub fn fields(&self) -> [String; 15] {
        [
            self.family.clone(),
            self.p.to_string(),
            self.q.to_string(),
            self.param1.clone(),
            self.param2.clone(),
            self.param3.clone(),
            self.replicate.to_string(),
            self.projection.clone(),
            opt(self.metric_overlap),
            opt(self.metric_oos),
            opt(self.metric_mc),
            opt(self.metric_mc_se),
            opt(self.metric_recon),
            self.status.encode(),
            self.ms.map(|m| format!("{m:.3}")).unwrap_or_default(),
        ]
    }

    fn from_fields(f: &csv::StringRecord, line: u64) -> Result<Self> {
        let parse_err = |message: String| Error::Parse { line, message };
        if f.len() != HEADER.len() {
            return Err(parse_err(format!("expected {} fields, found {}", HEADER.len(), f.len())));
        }
        let int = |i: usize| -> Result<usize> {
            f[i].parse().map_err(|_| parse_err(format!("{}: `{}` is not an integer", HEADER[i], &f[i])))
        };
        let float = |i: usize| -> Result<Option<f64>> {
            if f[i].is_empty() {
                return Ok(None);
            }
            f[i].parse().map(Some).map_err(|_| parse_err(format!("{}: `{}` is not a number", HEADER[i], &f[i])))
        };
        Ok(Self {
            family: f[0].to_owned(),
            p: int(1)?,
            q: int(2)?,
            param1: f[3].to_owned(),
            param2: f[4].to_owned(),
            param3: f[5].to_owned(),
            replicate: int(6)?,
            projection: f[7].to_owned(),
            metric_overlap: float(8)?,
            metric_oos: float(9)?,
            metric_mc: float(10)?,
            metric_mc_se: float(11)?,
            metric_recon: float(12)?,
            status: RecordStatus::decode(&f[13]).ok_or_else(|| parse_err(format!("status: `{}`", &f[13])))?,
            ms: float(14)?,
        })
    }

    /// The identity of the simulated pair this record belongs to.
    pub fn task_key(&self) -> (String, usize, usize, String, String, String, usize) {
        (
            self.family.clone(),
            self.p,
            self.q,
            self.param1.clone(),
            self.param2.clone(),
            self.param3.clone(),
            self.replicate,
        )
    }

    pub fn field(&self, name: &str) -> Option<String> {
        let i = HEADER.iter().position(|h| *h == name)?;
        Some(self.fields()[i].clone())
    }
}

/// Encodes records, header first, as CSV text.
pub fn to_csv_string(records: &[SweepRecord]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for r in records {
        w.write_record(r.fields()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

pub fn parse_records(text: &str) -> Result<Vec<SweepRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    if header.iter().ne(HEADER.iter().copied()) {
        return Err(Error::Parse { line: 1, message: format!("unexpected header, expected {}", HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec
            .map_err(|e| Error::Parse { line: e.position().map(|p| p.line()).unwrap_or(0), message: e.to_string() })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        out.push(SweepRecord::from_fields(&rec, line)?);
    }
    Ok(out)
}

pub fn read_records(path: &Path) -> Result<Vec<SweepRecord>> {
    parse_records(&std::fs::read_to_string(path)?)
}

/// Destination of completed cells. Cells arrive in ascending index order.
pub trait RecordSink {
    /// Number of leading cells already persisted (resume point).
    fn completed_cells(&self) -> usize {
        0
    }

    fn write_cell(&mut self, cell_index: usize, records: &[SweepRecord]) -> Result<()>;
}

/// Keeps everything in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub records: Vec<SweepRecord>,
    pub cells: Vec<usize>,
}

impl RecordSink for MemorySink {
    fn write_cell(&mut self, cell_index: usize, records: &[SweepRecord]) -> Result<()> {
        self.cells.push(cell_index);
        self.records.extend_from_slice(records);
        Ok(())
    }
}

/// `records.csv` plus a `checkpoint.txt` of completed cell indices in an
/// output directory. Records are flushed before the checkpoint line, so a
/// crash leaves at most surplus rows, which [`CsvSink::resume`] trims.
pub struct CsvSink {
    records_path: PathBuf,
    writer: csv::Writer<File>,
    checkpoint: File,
    completed: usize,
}

fn sink_err(e: impl std::fmt::Display) -> Error {
    Error::SinkWriteFailure(e.to_string())
}

fn csv_writer(file: File) -> csv::Writer<File> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(file)
}

impl CsvSink {
    /// Starts a fresh output, replacing any previous files.
    pub fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(sink_err)?;
        let records_path = dir.join(RECORDS_FILE);
        let mut writer = csv_writer(File::create(&records_path).map_err(sink_err)?);
        writer.write_record(HEADER).map_err(sink_err)?;
        writer.flush().map_err(sink_err)?;
        let checkpoint = File::create(dir.join(CHECKPOINT_FILE)).map_err(sink_err)?;
        Ok(Self { records_path, writer, checkpoint, completed: 0 })
    }

    /// Reopens an interrupted output. `records_per_cell` is
    /// `n_simu × #projections` of the configuration being resumed. Falls back
    /// to [`CsvSink::create`] when there is nothing to resume.
    pub fn resume(dir: &Path, records_per_cell: usize) -> Result<Self> {
        let records_path = dir.join(RECORDS_FILE);
        let checkpoint_path = dir.join(CHECKPOINT_FILE);
        if !records_path.exists() || !checkpoint_path.exists() {
            return Self::create(dir);
        }
        let mut completed = 0usize;
        for (i, line) in std::fs::read_to_string(&checkpoint_path)?.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let idx: usize = line
                .parse()
                .map_err(|_| Error::Parse { line: i as u64 + 1, message: format!("checkpoint entry `{line}`") })?;
            if idx != completed {
                return Err(Error::config("resume", format!("checkpoint is not a prefix of cells (entry {idx})")));
            }
            completed += 1;
        }
        let keep_rows = 1 + completed * records_per_cell;
        let mut reader = BufReader::new(File::open(&records_path)?);
        let (mut offset, mut rows, mut line) = (0u64, 0usize, String::new());
        while rows < keep_rows {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 {
                return Err(Error::config("resume", format!("records file has fewer than {keep_rows} rows")));
            }
            offset += n as u64;
            rows += 1;
        }
        let mut file = OpenOptions::new().write(true).open(&records_path).map_err(sink_err)?;
        file.set_len(offset).map_err(sink_err)?;
        file.seek(SeekFrom::End(0)).map_err(sink_err)?;
        let checkpoint = OpenOptions::new().append(true).open(&checkpoint_path).map_err(sink_err)?;
        Ok(Self { records_path, writer: csv_writer(file), checkpoint, completed })
    }

    pub fn records_path(&self) -> &Path {
        &self.records_path
    }
}

impl RecordSink for CsvSink {
    fn completed_cells(&self) -> usize {
        self.completed
    }

    fn write_cell(&mut self, cell_index: usize, records: &[SweepRecord]) -> Result<()> {
        for r in records {
            self.writer.write_record(r.fields()).map_err(sink_err)?;
        }
        self.writer.flush().map_err(sink_err)?;
        writeln!(self.checkpoint, "{cell_index}").map_err(sink_err)?;
        self.checkpoint.flush().map_err(sink_err)?;
        self.completed = cell_index + 1;
        Ok(())
    }
}
