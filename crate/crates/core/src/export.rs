//! Output files: draws, coefficient reports and run diagnostics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::engine::FailureEvent;
use crate::error::{Error, Result};
use crate::inference::InferenceReport;

pub const DRAWS_COLUMNS: [&str; 2] = ["b", "phase"];
pub const REPORT_COLUMNS: [&str; 7] = [
    "coefficient",
    "estimate",
    "se",
    "ci_lo",
    "ci_hi",
    "autocorr1",
    "method",
];

/// Column names `theta_1..theta_d` unless `names` has exactly `d` entries.
pub fn coefficient_names(names: &[String], d: usize) -> Vec<String> {
    if names.len() == d {
        names.to_vec()
    } else {
        (1..=d).map(|j| format!("theta_{j}")).collect()
    }
}

/// Write burned and retained draws, one iterate per line. `b` counts
/// iterates from 1; `phase` is `burn` or `draw`.
pub fn write_draws(
    path: &Path,
    burned: &DMatrix<f64>,
    draws: &DMatrix<f64>,
    names: &[String],
) -> Result<()> {
    let d = draws.ncols();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = DRAWS_COLUMNS.iter().map(|s| s.to_string()).collect();
    if names.len() == d {
        header.extend(names.iter().map(|n| format!("theta_{n}")));
    } else {
        header.extend(coefficient_names(&[], d));
    }
    w.write_record(&header)?;
    let mut b = 0usize;
    for (phase, m) in [("burn", burned), ("draw", draws)] {
        for row in m.row_iter() {
            b += 1;
            let mut rec = vec![b.to_string(), phase.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub coefficient: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub autocorr1: f64,
    pub method: String,
}

pub fn report_rows(report: &InferenceReport, names: &[String], method: &str) -> Vec<ReportRow> {
    let names = coefficient_names(names, report.estimate.len());
    names
        .into_iter()
        .enumerate()
        .map(|(j, coefficient)| ReportRow {
            coefficient,
            estimate: report.estimate[j],
            se: report.se[j],
            ci_lo: report.ci[j].0,
            ci_hi: report.ci[j].1,
            autocorr1: report.autocorr_lag1[j],
            method: method.into(),
        })
        .collect()
}

pub fn write_report_csv(path: &Path, rows: &[ReportRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record(REPORT_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub category: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        Self {
            category: e.category().into(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub config: serde_json::Value,
    pub failure_log: Vec<FailureEvent>,
    pub wall_time_ms: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> InferenceReport {
        InferenceReport {
            estimate: vec![1.0, 2.0],
            se: vec![0.1, 0.2],
            ci: vec![(0.8, 1.2), (1.6, 2.4)],
            alpha: 0.05,
            phi_gamma: 1.0 / 19.0,
            adjustment: 19f64.sqrt(),
            autocorr_lag1: vec![0.9, 0.8],
            draws: 100,
            gamma: 0.1,
            m_over_n: 1.0,
        }
    }

    #[test]
    fn report_csv_has_stable_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("report.csv");
        write_report_csv(
            &p,
            &report_rows(&report(), &["a".into(), "b".into()], "rqn"),
        )
        .unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), REPORT_COLUMNS.join(","));
        assert_eq!(lines.next().unwrap(), "a,1.0,0.1,0.8,1.2,0.9,rqn");
    }

    #[test]
    fn draws_csv_numbers_iterates() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("draws.csv");
        let burned = DMatrix::from_row_slice(1, 2, &[0.5, 0.25]);
        let draws = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        write_draws(&p, &burned, &draws, &[]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(
            text,
            "b,phase,theta_1,theta_2\n1,burn,0.5,0.25\n2,draw,1,2\n3,draw,3,4\n"
        );
    }

    #[test]
    fn named_draw_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("draws.csv");
        let draws = DMatrix::from_row_slice(1, 1, &[1.0]);
        write_draws(&p, &DMatrix::zeros(0, 1), &draws, &["educ".into()]).unwrap();
        assert!(std::fs::read_to_string(&p)
            .unwrap()
            .starts_with("b,phase,theta_educ\n"));
    }
}
