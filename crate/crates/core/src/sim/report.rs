use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Error tallies for one verdict or a whole batch of runs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub non_detections: u64,
    pub wrong_detections: u64,
    pub decision_errors: u64,
}

impl Verdict {
    pub fn total(&self) -> u64 {
        self.non_detections + self.wrong_detections + self.decision_errors
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

impl std::ops::AddAssign for Verdict {
    fn add_assign(&mut self, o: Verdict) {
        self.non_detections += o.non_detections;
        self.wrong_detections += o.wrong_detections;
        self.decision_errors += o.decision_errors;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorReport {
    /// Completed runs (the denominator).
    pub runs: u64,
    /// Runs aborted by a power-flow failure, excluded from `runs`.
    pub aborted: u64,
    pub non_detections: u64,
    pub wrong_detections: u64,
    pub decision_errors: u64,
}

impl ErrorReport {
    pub fn add_run(&mut self, v: Verdict) {
        self.runs += 1;
        self.non_detections += v.non_detections;
        self.wrong_detections += v.wrong_detections;
        self.decision_errors += v.decision_errors;
    }

    pub fn add_aborted(&mut self) {
        self.aborted += 1;
    }

    pub fn total_errors(&self) -> u64 {
        self.non_detections + self.wrong_detections + self.decision_errors
    }

    /// `100 * total / runs`; zero for an empty report.
    pub fn percent_errors(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            100.0 * self.total_errors() as f64 / self.runs as f64
        }
    }
}

/// A labelled report row (e.g. one frequency of a table).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub report: ErrorReport,
}

pub const REPORT_HEADER: [&str; 8] = [
    "label",
    "runs",
    "aborted",
    "non detections",
    "wrong detection",
    "decision errors",
    "total errors",
    "perc. of errors",
];

pub fn write_report_csv<W: Write>(rows: &[ReportRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for row in rows {
        let r = &row.report;
        w.write_record([
            row.label.clone(),
            r.runs.to_string(),
            r.aborted.to_string(),
            r.non_detections.to_string(),
            r.wrong_detections.to_string(),
            r.decision_errors.to_string(),
            r.total_errors().to_string(),
            format!("{:.2}", r.percent_errors()),
        ])?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

/// Parses a report CSV; derived columns are checked against the counts.
pub fn read_report_csv<R: Read>(input: R, origin: &str) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let header = rd.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    if header.iter().ne(REPORT_HEADER) {
        return Err(parse_err(1, format!("unexpected header {:?}", header)));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let num = |k: usize| -> Result<u64> {
            rec[k]
                .trim()
                .parse()
                .map_err(|_| parse_err(line, format!("column {:?} is not a count", REPORT_HEADER[k])))
        };
        let report = ErrorReport {
            runs: num(1)?,
            aborted: num(2)?,
            non_detections: num(3)?,
            wrong_detections: num(4)?,
            decision_errors: num(5)?,
        };
        if num(6)? != report.total_errors() {
            return Err(parse_err(line, "total errors does not match the counts".into()));
        }
        let pct: f64 = rec[7]
            .trim()
            .parse()
            .map_err(|_| parse_err(line, "perc. of errors is not a number".into()))?;
        if (pct - report.percent_errors()).abs() > 0.005 + 1e-9 {
            return Err(parse_err(line, "perc. of errors does not match the counts".into()));
        }
        rows.push(ReportRow {
            label: rec[0].to_string(),
            report,
        });
    }
    Ok(rows)
}

pub fn save_report_csv(rows: &[ReportRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_report_csv(rows, std::io::BufWriter::new(f))
}

pub fn load_report_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_report_csv(f, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_is_header_only() {
        let mut buf = Vec::new();
        write_report_csv(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with(
            "label,runs,aborted,non detections,wrong detection,decision errors,total errors,perc. of errors"
        ));
        assert!(read_report_csv(text.as_bytes(), "mem").unwrap().is_empty());
    }

    #[test]
    fn table_arithmetic() {
        let r = ErrorReport {
            runs: 10000,
            aborted: 0,
            non_detections: 0,
            wrong_detections: 50,
            decision_errors: 50,
        };
        assert_eq!(r.total_errors(), 100);
        assert!((r.percent_errors() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_trip() {
        let rows = vec![
            ReportRow {
                label: "f=1".into(),
                report: ErrorReport {
                    runs: 1000,
                    aborted: 2,
                    non_detections: 3,
                    wrong_detections: 7,
                    decision_errors: 9,
                },
            },
            ReportRow {
                label: "f=0.1".into(),
                report: ErrorReport::default(),
            },
        ];
        let mut buf = Vec::new();
        write_report_csv(&rows, &mut buf).unwrap();
        assert_eq!(read_report_csv(&buf[..], "mem").unwrap(), rows);
    }

    #[test]
    fn inconsistent_totals_are_rejected() {
        let text = "label,runs,aborted,non detections,wrong detection,decision errors,total errors,perc. of errors\nx,10,0,1,1,1,4,30.00\n";
        let err = read_report_csv(text.as_bytes(), "mem").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }
}
