//! CSV export and re-import of logs and summaries.
//!
//! Real values are written with 12 significant digits; integers exactly.

use std::io::{Read, Write};

use thiserror::Error;

use super::closed_loop::TrajectoryLog;
use super::monte_carlo::{MonteCarloSummary, NSummary};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("input has no data rows")]
    Empty,
    #[error("column `{column}` row {row}: cannot parse `{value}` as a number")]
    Malformed { column: String, row: usize, value: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
}

/// Rounds to 12 significant digits and prints the shortest form that reads back.
pub fn fmt_real(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let r: f64 = format!("{x:.11e}").parse().expect("formatted float parses");
    format!("{r}")
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Header of a trajectory CSV for the given log.
pub fn trajectory_header(log: &TrajectoryLog, timings: bool) -> Vec<String> {
    let first = &log.records[0];
    let mut h = vec!["t".to_owned()];
    for i in 1..=log.agents {
        h.push(format!("agent{i}_x"));
        h.push(format!("agent{i}_y"));
    }
    h.extend((1..=log.edges).map(|k| format!("dist_e{k}")));
    if first.mu_hat.is_some() {
        h.extend((1..=log.edges).map(|k| format!("mu_hat_e{k}")));
    }
    if first.mu_hat_plain.is_some() {
        h.extend((1..=log.edges).map(|k| format!("mu_hat_plain_e{k}")));
    }
    if timings && first.enc_time_us.is_some() {
        h.push("enc_time_us".into());
        h.push("eval_time_us".into());
    }
    h
}

/// Writes one row per step. Timing columns are written only when `timings`
/// is set, so that repeated runs stay byte-identical by default.
pub fn write_trajectory_csv<W: Write>(log: &TrajectoryLog, w: W, timings: bool) -> Result<(), ExportError> {
    let mut out = writer(w);
    out.write_record(trajectory_header(log, timings))?;
    for r in &log.records {
        let mut row = vec![r.t.to_string()];
        for p in &r.positions {
            row.push(fmt_real(p[0]));
            row.push(fmt_real(p[1]));
        }
        row.extend(r.dist.iter().map(|&x| fmt_real(x)));
        if let Some(m) = &r.mu_hat {
            row.extend(m.iter().map(|&x| fmt_real(x)));
        }
        if let Some(m) = &r.mu_hat_plain {
            row.extend(m.iter().map(|&x| fmt_real(x)));
        }
        if timings {
            if let (Some(e), Some(v)) = (r.enc_time_us, r.eval_time_us) {
                row.push(fmt_real(e));
                row.push(fmt_real(v));
            }
        }
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// Per-step mean and 95% interval of the traced distance for one key length.
pub fn write_stats_csv<W: Write>(n: &NSummary, ts: f64, w: W) -> Result<(), ExportError> {
    let mut out = writer(w);
    out.write_record(["t", "time_s", "mean", "ci_low", "ci_high", "runs"])?;
    for s in &n.steps {
        out.write_record([
            s.t.to_string(),
            fmt_real(s.t as f64 * ts),
            fmt_real(s.mean),
            fmt_real(s.ci_low),
            fmt_real(s.ci_high),
            n.runs.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Per-key-length quantiles of the per-step encryption time.
pub fn write_timing_csv<W: Write>(summary: &MonteCarloSummary, w: W) -> Result<(), ExportError> {
    let mut out = writer(w);
    out.write_record([
        "key_length",
        "runs",
        "delay_steps",
        "samples",
        "p5_us",
        "p25_us",
        "p50_us",
        "p75_us",
        "p95_us",
    ])?;
    for n in &summary.per_n {
        let q = n.timing;
        out.write_record([
            n.key_length.to_string(),
            n.runs.to_string(),
            n.delay_steps.to_string(),
            n.enc_times_us.len().to_string(),
            fmt_real(q.p5),
            fmt_real(q.p25),
            fmt_real(q.p50),
            fmt_real(q.p75),
            fmt_real(q.p95),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Final distance of every edge per replicate.
pub fn write_final_csv<W: Write>(n: &NSummary, w: W) -> Result<(), ExportError> {
    let mut out = writer(w);
    let edges = n.final_distances.first().map_or(0, Vec::len);
    let mut header = vec!["run".to_owned()];
    header.extend((1..=edges).map(|k| format!("dist_e{k}")));
    header.extend((1..=edges).map(|k| format!("mu_hat_e{k}")));
    out.write_record(header)?;
    for (r, (d, m)) in n.final_distances.iter().zip(&n.final_mu_hat).enumerate() {
        let mut row = vec![r.to_string()];
        row.extend(d.iter().map(|&x| fmt_real(x)));
        row.extend(m.iter().map(|&x| fmt_real(x)));
        out.write_record(row)?;
    }
    out.flush()?;
    Ok(())
}

/// A numeric CSV read back into memory.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn read<R: Read>(r: R) -> Result<Self, ExportError> {
        let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
        let mut rows = Vec::new();
        for (i, rec) in rd.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .zip(&headers)
                .map(|(v, h)| {
                    v.trim().parse::<f64>().map_err(|_| ExportError::Malformed {
                        column: h.clone(),
                        row: i + 1,
                        value: v.to_owned(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(ExportError::Empty);
        }
        Ok(Self { headers, rows })
    }

    pub fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>, ExportError> {
        let j = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ExportError::MissingColumn(name.to_owned()))?;
        Ok(self.rows.iter().map(|r| r[j]).collect())
    }

    /// Columns whose names start with `prefix`, in file order.
    pub fn columns_with_prefix(&self, prefix: &str) -> Vec<(String, Vec<f64>)> {
        self.headers
            .iter()
            .enumerate()
            .filter(|(_, h)| h.starts_with(prefix))
            .map(|(j, h)| (h.clone(), self.rows.iter().map(|r| r[j]).collect()))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(fmt_real(0.1), "0.1");
        assert_eq!(fmt_real(1.0 / 3.0), "0.333333333333");
        assert_eq!(fmt_real(-2.0 / 3.0), "-0.666666666667");
        assert_eq!(fmt_real(123_456_789.123_456_78), "123456789.123");
        assert_eq!(fmt_real(0.0), "0");
    }

    #[test]
    fn reader_reports_column() {
        let err = CsvTable::read("t,dist_e1\n0,0.5\n1,abc\n".as_bytes()).unwrap_err();
        match err {
            ExportError::Malformed { column, row, .. } => {
                assert_eq!(column, "dist_e1");
                assert_eq!(row, 2);
            }
            e => panic!("{e:?}"),
        }
        assert!(matches!(CsvTable::read("t,x\n".as_bytes()), Err(ExportError::Empty)));
        let t = CsvTable::read("t,x\n0,1.5\n".as_bytes()).unwrap();
        assert!(matches!(t.column("y"), Err(ExportError::MissingColumn(_))));
        assert_eq!(t.column("x").unwrap(), vec![1.5]);
    }

    proptest! {
        #[test]
        fn formatting_is_a_fixed_point(x in prop::num::f64::NORMAL | prop::num::f64::ZERO) {
            let s = fmt_real(x);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(fmt_real(back), s);
            if x != 0.0 {
                prop_assert!(((back - x) / x).abs() <= 5e-12);
            }
        }
    }
}
