//! Delimited-text ingestion of numeric tables and labelled two-group data.
//!
//! Files are comma- or tab-separated (a tab anywhere on the first line selects
//! tabs). The first line is a header when none of its fields parse as a
//! number. Non-finite values are rejected with the offending line number.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{Class, LabeledDataset};

/// Column chosen as the label when none is named and the header has no
/// column of this name: the last column.
pub const DEFAULT_LABEL_COLUMN: &str = "label";

struct RawTable {
    header: Option<Vec<String>>,
    /// `(line number, fields)`.
    rows: Vec<(u64, Vec<String>)>,
}

fn read_raw(text: &str) -> Result<RawTable> {
    let first_line = text.lines().next().unwrap_or("");
    let delimiter = if first_line.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows.push((line, record.iter().map(str::to_owned).collect::<Vec<_>>()));
    }
    let is_header = rows.first().map(|(_, fields)| fields.iter().all(|f| f.parse::<f64>().is_err())).unwrap_or(false);
    let header = if is_header { Some(rows.remove(0).1) } else { None };
    Ok(RawTable { header, rows })
}

fn parse_value(field: &str, line: u64, column: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| Error::Parse { line, message: format!("column {}: `{field}` is not a number", column + 1) })?;
    if !v.is_finite() {
        return Err(Error::Parse { line, message: format!("column {}: non-finite value `{field}`", column + 1) });
    }
    Ok(v)
}

fn numeric_matrix(rows: &[(u64, Vec<String>)], skip: Option<usize>) -> Result<DMatrix<f64>> {
    let width = rows.first().map(|(_, f)| f.len() - usize::from(skip.is_some())).unwrap_or(0);
    let mut values = Vec::with_capacity(rows.len() * width);
    for (line, fields) in rows {
        for (c, field) in fields.iter().enumerate() {
            if Some(c) != skip {
                values.push(parse_value(field, *line, c)?);
            }
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), width, &values))
}

/// Parses a purely numeric table (header optional).
pub fn parse_matrix(text: &str) -> Result<DMatrix<f64>> {
    let raw = read_raw(text)?;
    if raw.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    numeric_matrix(&raw.rows, None)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    parse_matrix(&std::fs::read_to_string(path)?)
}

/// Parses a labelled table. `label_column` names a header column, or is a
/// 1-based column number; when absent a column named `label` is used if
/// present, else the last column. The label column must hold exactly two
/// distinct values; the smaller one (numerically when all are numbers)
/// becomes class 1.
pub fn parse_labeled(text: &str, label_column: Option<&str>) -> Result<LabeledDataset> {
    let raw = read_raw(text)?;
    if raw.rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let width = raw.rows[0].1.len();
    if width < 2 {
        return Err(Error::config("label_column", "need at least one feature column besides the label"));
    }
    let label_idx = match label_column {
        Some(name) => {
            let by_name = raw.header.as_ref().and_then(|h| h.iter().position(|c| c == name));
            match by_name {
                Some(i) => i,
                None => match name.parse::<usize>() {
                    Ok(k) if (1..=width).contains(&k) => k - 1,
                    _ => return Err(Error::UnknownColumn(name.to_owned())),
                },
            }
        }
        None => raw.header.as_ref().and_then(|h| h.iter().position(|c| c == DEFAULT_LABEL_COLUMN)).unwrap_or(width - 1),
    };

    let mut distinct: Vec<&str> = raw.rows.iter().map(|(_, f)| f[label_idx].as_str()).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() != 2 {
        return Err(Error::config(
            "label_column",
            format!("expected exactly two distinct labels, found {}", distinct.len()),
        ));
    }
    let numeric: Option<Vec<f64>> = distinct.iter().map(|s| s.parse::<f64>().ok()).collect();
    if let Some(v) = numeric {
        if v[1] < v[0] {
            distinct.swap(0, 1);
        }
    }
    let first = distinct[0].to_owned();
    let labels = raw.rows.iter().map(|(_, f)| if f[label_idx] == first { Class::One } else { Class::Two }).collect();
    let x = numeric_matrix(&raw.rows, Some(label_idx))?;
    LabeledDataset::new(x, labels)
}

pub fn read_labeled(path: &Path, label_column: Option<&str>) -> Result<LabeledDataset> {
    parse_labeled(&std::fs::read_to_string(path)?, label_column)
}

/// Writes `m` as comma-separated text with shortest round-trip floats.
pub fn format_matrix(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_named_label() {
        let d = parse_labeled("a,b,group\n1,2,x\n3,4,y\n5,6,x\n", Some("group")).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.p(), 2);
        assert_eq!(d.labels(), &[Class::One, Class::Two, Class::One]);
        assert_eq!(d.x()[(1, 1)], 4.0);
    }

    #[test]
    fn tab_delimited_without_header_uses_last_column() {
        let d = parse_labeled("1\t2\t10\n3\t4\t9\n", None).unwrap();
        // numeric labels order numerically: 9 is class 1
        assert_eq!(d.labels(), &[Class::Two, Class::One]);
    }

    #[test]
    fn label_in_the_middle_by_number() {
        let d = parse_labeled("1,0,2\n3,1,4\n", Some("2")).unwrap();
        assert_eq!(d.x(), &DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn non_finite_values_report_their_line() {
        let err = parse_labeled("a,label\n1,0\nnan,1\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_labeled("a,label\n1,0\nabc,1\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn ragged_rows_are_parse_errors() {
        assert!(matches!(parse_labeled("1,2,0\n1,1\n", None), Err(Error::Parse { .. })));
    }

    #[test]
    fn label_problems() {
        assert!(matches!(parse_labeled("a,b\n1,0\n", Some("zzz")), Err(Error::UnknownColumn(_))));
        assert!(matches!(parse_labeled("1,0\n2,1\n3,2\n", None), Err(Error::Config { .. })));
    }

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.1, 2.5e-17]);
        assert_eq!(parse_matrix(&format_matrix(&m)).unwrap(), m);
        assert!(matches!(parse_matrix(""), Err(Error::EmptyDataset)));
    }
}
