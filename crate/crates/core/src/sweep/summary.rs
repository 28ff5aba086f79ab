//! Per-group means, regrets against a baseline projection and the frequency
//! of positive regret.
//!
//! The compared metric is inferred per record: Monte Carlo risk when present,
//! else OoS loss, else overlap. Records of different modes cannot be mixed.
//! Regret is `metric(W) − metric(baseline)` on the same simulated pair, so a
//! positive regret means the alternative did worse; exact ties are not
//! positive.

use std::collections::HashMap;

use super::record::{format_float, SweepRecord};
use crate::error::{Error, Result};

/// Columns a summary may be grouped by.
pub const GROUP_COLUMNS: [&str; 6] = ["family", "p", "q", "param1", "param2", "param3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    Overlap,
    Oos,
    MonteCarlo,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Overlap => "overlap",
            MetricKind::Oos => "oos",
            MetricKind::MonteCarlo => "mc",
        }
    }

    fn of(record: &SweepRecord) -> Option<MetricKind> {
        if record.metric_mc.is_some() {
            Some(MetricKind::MonteCarlo)
        } else if record.metric_oos.is_some() {
            Some(MetricKind::Oos)
        } else if record.metric_overlap.is_some() {
            Some(MetricKind::Overlap)
        } else {
            None
        }
    }

    fn value(self, record: &SweepRecord) -> Option<f64> {
        match self {
            MetricKind::Overlap => record.metric_overlap,
            MetricKind::Oos => record.metric_oos,
            MetricKind::MonteCarlo => record.metric_mc,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionStats {
    pub projection: String,
    /// Mean metric over successful records.
    pub mean: Option<f64>,
    /// Mean regret over pairs where both this projection and the baseline
    /// succeeded (zero for the baseline itself).
    pub mean_regret: Option<f64>,
    /// Fraction of those pairs with strictly positive regret.
    pub positive_freq: Option<f64>,
    pub failed: usize,
    /// Mean natural log of the reconstruction error, when recorded.
    pub mean_log_recon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub group: Vec<String>,
    /// Distinct simulated pairs in the group.
    pub count: usize,
    /// Baseline first, then the other projections in order of appearance.
    pub stats: Vec<ProjectionStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub metric: MetricKind,
    pub group_by: Vec<String>,
    pub baseline: String,
    pub projections: Vec<String>,
    pub has_recon: bool,
    pub rows: Vec<SummaryRow>,
}

type TaskKey = (String, usize, usize, String, String, String, usize);

fn mean(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        None
    } else {
        Some(v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Groups `records` by `group_by` and compares every projection with
/// `baseline`. Groups appear in order of first occurrence.
pub fn summarize(records: &[SweepRecord], group_by: &[String], baseline: &str) -> Result<Summary> {
    for g in group_by {
        if !GROUP_COLUMNS.contains(&g.as_str()) {
            return Err(Error::UnknownColumn(g.clone()));
        }
    }
    let mut metric: Option<MetricKind> = None;
    for r in records.iter().filter(|r| r.status.is_ok()) {
        if let Some(m) = MetricKind::of(r) {
            match metric {
                Some(prev) if prev != m => return Err(Error::MixedModes(prev.name().into(), m.name().into())),
                _ => metric = Some(m),
            }
        }
    }
    let metric = metric.ok_or(Error::EmptyDataset)?;

    let mut projections: Vec<String> = vec![baseline.to_owned()];
    for r in records {
        if !projections.contains(&r.projection) {
            projections.push(r.projection.clone());
        }
    }
    if !records.iter().any(|r| r.projection == baseline) {
        return Err(Error::config("baseline", format!("no records for projection `{baseline}`")));
    }
    let has_recon = records.iter().any(|r| r.metric_recon.is_some());

    let mut group_order: Vec<Vec<String>> = Vec::new();
    let mut members: HashMap<Vec<String>, Vec<&SweepRecord>> = HashMap::new();
    for r in records {
        let key: Vec<String> = group_by.iter().map(|g| r.field(g).unwrap_or_default()).collect();
        members
            .entry(key.clone())
            .or_insert_with(|| {
                group_order.push(key);
                Vec::new()
            })
            .push(r);
    }

    let rows = group_order
        .into_iter()
        .map(|key| {
            let recs = &members[&key];
            let mut tasks: Vec<TaskKey> = recs.iter().map(|r| r.task_key()).collect();
            tasks.sort();
            tasks.dedup();
            let baseline_values: HashMap<TaskKey, f64> = recs
                .iter()
                .filter(|r| r.projection == baseline && r.status.is_ok())
                .filter_map(|r| metric.value(r).map(|v| (r.task_key(), v)))
                .collect();
            let stats = projections
                .iter()
                .map(|proj| {
                    let mine: Vec<&&SweepRecord> = recs.iter().filter(|r| &r.projection == proj).collect();
                    let ok: Vec<&&SweepRecord> = mine.iter().copied().filter(|r| r.status.is_ok()).collect();
                    let values: Vec<f64> = ok.iter().filter_map(|r| metric.value(r)).collect();
                    let regrets: Vec<f64> = ok
                        .iter()
                        .filter_map(|r| Some(metric.value(r)? - baseline_values.get(&r.task_key())?))
                        .collect();
                    let logs: Vec<f64> = ok.iter().filter_map(|r| r.metric_recon.map(f64::ln)).collect();
                    let positive = regrets.iter().filter(|&&d| d > 0.0).count();
                    ProjectionStats {
                        projection: proj.clone(),
                        mean: mean(&values),
                        mean_regret: mean(&regrets),
                        positive_freq: (!regrets.is_empty()).then(|| positive as f64 / regrets.len() as f64),
                        failed: mine.len() - ok.len(),
                        mean_log_recon: mean(&logs),
                    }
                })
                .collect();
            SummaryRow { group: key, count: tasks.len(), stats }
        })
        .collect();

    Ok(Summary { metric, group_by: group_by.to_vec(), baseline: baseline.to_owned(), projections, has_recon, rows })
}

impl Summary {
    pub fn columns(&self) -> Vec<String> {
        let mut cols: Vec<String> = self.group_by.clone();
        cols.push("count".into());
        for (i, proj) in self.projections.iter().enumerate() {
            cols.push(format!("mean_{proj}"));
            if i > 0 {
                cols.push(format!("regret_{proj}"));
                cols.push(format!("pos_freq_{proj}"));
            }
            cols.push(format!("failed_{proj}"));
            if self.has_recon {
                cols.push(format!("mean_log_recon_{proj}"));
            }
        }
        cols
    }

    fn cells(&self, fmt: impl Fn(f64) -> String) -> Vec<Vec<String>> {
        let f = |v: Option<f64>| v.map(&fmt).unwrap_or_default();
        self.rows
            .iter()
            .map(|row| {
                let mut out = row.group.clone();
                out.push(row.count.to_string());
                for (i, s) in row.stats.iter().enumerate() {
                    out.push(f(s.mean));
                    if i > 0 {
                        out.push(f(s.mean_regret));
                        out.push(f(s.positive_freq));
                    }
                    out.push(s.failed.to_string());
                    if self.has_recon {
                        out.push(f(s.mean_log_recon));
                    }
                }
                out
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(self.columns()).expect("in-memory write");
        for row in self.cells(format_float) {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }

    /// Fixed-width rendering with 4 decimals, for terminals.
    pub fn to_aligned(&self) -> String {
        let header = self.columns();
        let rows = self.cells(|v| format!("{v:.4}"));
        let widths: Vec<usize> = (0..header.len())
            .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            cells.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect::<Vec<_>>().join("  ")
        };
        let mut out = line(&header);
        out.push('\n');
        for r in &rows {
            out.push_str(&line(r));
            out.push('\n');
        }
        out
    }

    pub fn row(&self, group: &[&str]) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.group.iter().map(String::as_str).eq(group.iter().copied()))
    }

    pub fn stats<'a>(&'a self, row: &'a SummaryRow, projection: &str) -> Option<&'a ProjectionStats> {
        row.stats.iter().find(|s| s.projection == projection)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sweep::record::RecordStatus;

    fn rec(q: usize, rep: usize, proj: &str, v: Option<f64>) -> SweepRecord {
        SweepRecord {
            family: "iw".into(),
            p: 20,
            q,
            param1: "1".into(),
            param2: "2".into(),
            param3: String::new(),
            replicate: rep,
            projection: proj.into(),
            metric_overlap: v,
            metric_oos: None,
            metric_mc: None,
            metric_mc_se: None,
            metric_recon: None,
            status: if v.is_some() { RecordStatus::Ok } else { RecordStatus::Failed("x".into()) },
            ms: None,
        }
    }

    #[test]
    fn two_record_regret() {
        let recs = vec![rec(1, 0, "pca", Some(0.2)), rec(1, 0, "rp", Some(0.3))];
        let s = summarize(&recs, &["p".into()], "pca").unwrap();
        let row = &s.rows[0];
        assert_eq!(row.count, 1);
        let rp = s.stats(row, "rp").unwrap();
        assert!((rp.mean_regret.unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(rp.positive_freq, Some(1.0));
    }

    #[test]
    fn baseline_against_itself() {
        let recs = vec![rec(1, 0, "pca", Some(0.2)), rec(1, 1, "pca", Some(0.4)), rec(2, 0, "pca", Some(0.1))];
        let s = summarize(&recs, &["q".into()], "pca").unwrap();
        for row in &s.rows {
            let b = &row.stats[0];
            assert_eq!(b.mean_regret, Some(0.0));
            assert_eq!(b.positive_freq, Some(0.0));
        }
        assert_eq!(s.rows.len(), 2);
        assert_eq!(s.rows[0].count, 2);
    }

    #[test]
    fn pairing_uses_the_full_task_and_failures_are_counted() {
        // grouped by p only: q=1 and q=2 replicates 0 must not be paired together
        let recs = vec![
            rec(1, 0, "pca", Some(0.2)),
            rec(1, 0, "rp", Some(0.2)),
            rec(2, 0, "pca", Some(0.5)),
            rec(2, 0, "rp", None),
        ];
        let s = summarize(&recs, &["p".into()], "pca").unwrap();
        let rp = s.stats(&s.rows[0], "rp").unwrap();
        assert_eq!(rp.mean_regret, Some(0.0));
        assert_eq!(rp.positive_freq, Some(0.0));
        assert_eq!(rp.failed, 1);
        assert_eq!(s.rows[0].count, 2);
        assert_eq!(s.rows[0].stats[0].mean, Some(0.35));
    }

    #[test]
    fn errors() {
        let a = rec(1, 0, "pca", Some(0.2));
        let mut b = rec(1, 0, "rp", None);
        b.status = RecordStatus::Ok;
        b.metric_oos = Some(0.3);
        assert!(matches!(summarize(&[a.clone(), b], &[], "pca"), Err(Error::MixedModes(..))));
        assert!(matches!(summarize(std::slice::from_ref(&a), &["ms".into()], "pca"), Err(Error::UnknownColumn(_))));
        assert!(matches!(summarize(&[a], &[], "rp"), Err(Error::Config { .. })));
    }

    #[test]
    fn table_layout() {
        let recs = vec![rec(1, 0, "pca", Some(0.2)), rec(1, 0, "rp", Some(0.3)), rec(1, 0, "sparse_rp", Some(0.1))];
        let s = summarize(&recs, &["param1".into()], "pca").unwrap();
        assert_eq!(
            s.columns(),
            vec![
                "param1",
                "count",
                "mean_pca",
                "failed_pca",
                "mean_rp",
                "regret_rp",
                "pos_freq_rp",
                "failed_rp",
                "mean_sparse_rp",
                "regret_sparse_rp",
                "pos_freq_sparse_rp",
                "failed_sparse_rp"
            ]
        );
        assert_eq!(s.to_csv().lines().count(), 2);
        assert!(s.to_aligned().contains("0.1000"));
    }
}
