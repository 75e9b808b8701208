use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Method, SweepSpec};
use crate::error::{Error, Result};
use crate::nn::TrainCondition;

pub const CSV_HEADER: [&str; 7] = [
    "method", "snr_db", "pnr_db", "l_est", "mean_se", "std_se", "n",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: Method,
    pub snr_db: f64,
    #[serde(with = "crate::estimator::pnr_serde")]
    pub pnr_db: f64,
    pub l_est: usize,
    pub mean_se: f64,
    pub std_se: f64,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub dataset_hash: String,
    pub model_hashes: Vec<String>,
    pub spec: SweepSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub meta: ReportMeta,
}

impl EvalReport {
    /// `(snr_db, mean_se)` points of one curve, in row order.
    pub fn curve(&self, method: Method, cond: TrainCondition) -> Vec<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| {
                r.method == method && r.l_est == cond.l_est && same_pnr(r.pnr_db, cond.pnr_db)
            })
            .map(|r| (r.snr_db, r.mean_se))
            .collect()
    }

    pub fn row(&self, method: Method, snr_db: f64, cond: TrainCondition) -> Option<&EvalRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && r.l_est == cond.l_est
                && same_pnr(r.pnr_db, cond.pnr_db)
                && r.snr_db == snr_db
        })
    }
}

fn same_pnr(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() < 1e-9
}

fn fmt_f64(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

pub fn write_csv<W: Write>(rows: &[EvalRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.method.as_str().to_string(),
            fmt_f64(r.snr_db),
            fmt_f64(r.pnr_db),
            r.l_est.to_string(),
            fmt_f64(r.mean_se),
            fmt_f64(r.std_se),
            r.n_samples.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn emit_csv(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_csv(&report.rows, std::io::BufWriter::new(file))
}

/// Parses a report CSV. The seed column is not part of the CSV schema and reads back as 0.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<EvalRow>> {
    let mut input = csv::Reader::from_reader(r);
    let header = input.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::CorruptHeader(format!(
            "unexpected csv header {:?}",
            header.iter().collect::<Vec<_>>()
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in input.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let num = |k: usize| {
            field(k)
                .parse::<f64>()
                .map_err(|_| Error::Structural(format!("row {i}: bad number {:?}", field(k))))
        };
        let int = |k: usize| {
            field(k)
                .parse::<usize>()
                .map_err(|_| Error::Structural(format!("row {i}: bad integer {:?}", field(k))))
        };
        rows.push(EvalRow {
            method: field(0).parse()?,
            snr_db: num(1)?,
            pnr_db: num(2)?,
            l_est: int(3)?,
            mean_se: num(4)?,
            std_se: num(5)?,
            n_samples: int(6)?,
            seed: 0,
        });
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Structural(format!("csv: {other:?}")),
    }
}

/// SNR at which a curve first reaches `target` SE.
///
/// The curve is made monotone by a running maximum and inverted by linear
/// interpolation.
pub fn snr_at_se(points: &[(f64, f64)], target: f64) -> Result<f64> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = f64::NEG_INFINITY;
    for p in &mut pts {
        best = best.max(p.1);
        p.1 = best;
    }
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return Err(Error::Range("empty curve".into()));
    };
    if target < first.1 || target > last.1 {
        return Err(Error::Range(format!(
            "target SE {target} outside [{}, {}]",
            first.1, last.1
        )));
    }
    if target == first.1 {
        return Ok(first.0);
    }
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if target > y0 && target <= y1 {
            return Ok(x0 + (target - y0) / (y1 - y0) * (x1 - x0));
        }
    }
    unreachable!("target lies within the monotone range")
}

/// Horizontal gap in dB at `target_se`: positive when `method_a` needs less SNR than `method_b`.
pub fn gain_at_target_se(
    report: &EvalReport,
    method_a: Method,
    method_b: Method,
    target_se: f64,
    cond: TrainCondition,
) -> Result<f64> {
    let a = snr_at_se(&report.curve(method_a, cond), target_se)?;
    let b = snr_at_se(&report.curve(method_b, cond), target_se)?;
    Ok(b - a)
}
