use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::problem::Form;
use crate::error::{Error, Result};
use crate::krylov::EigMethod;

pub const CSV_COLUMNS: [&str; 18] = [
    "form",
    "n_coarse",
    "refine",
    "overlap_layers",
    "H",
    "h",
    "delta",
    "ratio",
    "n_dofs",
    "n_colors",
    "lambda_min",
    "lambda_max",
    "kappa",
    "pcg_iters",
    "final_relres",
    "eig_method",
    "seed",
    "error",
];

/// One measured configuration. Failed runs keep their parameters, carry NaN
/// measurements and a message in `error`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub form: Form,
    pub n_coarse: usize,
    pub refine: u32,
    pub overlap_layers: usize,
    #[serde(rename = "H")]
    pub coarse_h: f64,
    pub h: f64,
    pub delta: f64,
    pub ratio: f64,
    pub n_dofs: usize,
    pub n_colors: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub pcg_iters: usize,
    pub final_relres: f64,
    pub eig_method: EigMethod,
    pub seed: u64,
    pub error: Option<String>,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

fn float(x: f64) -> String {
    // 17 significant digits round-trip every f64
    format!("{x:.16e}")
}

/// Writes records with a header row, `.` decimals and LF line endings.
pub fn write_records<W: Write>(w: W, records: &[SweepRecord]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.write_record([
            r.form.to_string(),
            r.n_coarse.to_string(),
            r.refine.to_string(),
            r.overlap_layers.to_string(),
            float(r.coarse_h),
            float(r.h),
            float(r.delta),
            float(r.ratio),
            r.n_dofs.to_string(),
            r.n_colors.to_string(),
            float(r.lambda_min),
            float(r.lambda_max),
            float(r.kappa),
            r.pcg_iters.to_string(),
            float(r.final_relres),
            r.eig_method.to_string(),
            r.seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize) -> Result<T> {
    let s = rec.get(i).ok_or_else(|| Error::Parse(format!("missing column {}", CSV_COLUMNS[i])))?;
    s.parse().map_err(|_| Error::Parse(format!("bad value {s:?} in column {}", CSV_COLUMNS[i])))
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CSV_COLUMNS.iter().copied()) {
        return Err(Error::Parse(format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let eig_method = match rec.get(15) {
            Some("lanczos") => EigMethod::Lanczos,
            Some("dense") => EigMethod::Dense,
            other => return Err(Error::Parse(format!("bad eig_method {other:?}"))),
        };
        let error = rec.get(17).filter(|s| !s.is_empty()).map(str::to_owned);
        out.push(SweepRecord {
            form: rec.get(0).unwrap_or_default().parse()?,
            n_coarse: field(&rec, 1)?,
            refine: field(&rec, 2)?,
            overlap_layers: field(&rec, 3)?,
            coarse_h: field(&rec, 4)?,
            h: field(&rec, 5)?,
            delta: field(&rec, 6)?,
            ratio: field(&rec, 7)?,
            n_dofs: field(&rec, 8)?,
            n_colors: field(&rec, 9)?,
            lambda_min: field(&rec, 10)?,
            lambda_max: field(&rec, 11)?,
            kappa: field(&rec, 12)?,
            pcg_iters: field(&rec, 13)?,
            final_relres: field(&rec, 14)?,
            eig_method,
            seed: field(&rec, 16)?,
            error,
        });
    }
    Ok(out)
}
