use std::collections::BTreeMap;

use serde::Serialize;

use super::records::SweepRecord;
use crate::error::{Error, Result};

/// Least-squares fits of `κ ≈ c0 + c1 ρ` and `κ ≈ c0 + c2 ρ²` with `ρ = H/δ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub c0_lin: f64,
    pub c1_lin: f64,
    pub r2_lin: f64,
    pub c0_quad: f64,
    pub c2_quad: f64,
    pub r2_quad: f64,
    /// `κ(2ρ) / κ(ρ)` for every doubling present, in increasing `ρ`.
    pub growth_ratios: Vec<f64>,
    pub n_points: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    Form,
    NCoarse,
    Refine,
    Overlap,
}

/// Fits `y ≈ c0 + c1 x`; returns `(c0, c1, r²)`.
fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (sx, sy) = (x.iter().sum::<f64>(), y.iter().sum::<f64>());
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let det = n * sxx - sx * sx;
    let c1 = (n * sxy - sx * sy) / det;
    let c0 = (sy - c1 * sx) / n;
    let mean = sy / n;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= f64::EPSILON * mean.abs() {
        1.0
    } else {
        0.0
    };
    (c0, c1, r2.clamp(0.0, 1.0))
}

/// Fits `(ρ, κ)` points; requires at least three distinct `ρ`.
pub fn fit_points(points: &[(f64, f64)]) -> Result<FitResult> {
    let mut pts: Vec<(f64, f64)> = points.iter().copied().filter(|(r, k)| r.is_finite() && k.is_finite()).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut distinct: Vec<f64> = pts.iter().map(|p| p.0).collect();
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::DegenerateFit(format!("{} distinct ratios, need 3", distinct.len())));
    }
    let rho: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let rho2: Vec<f64> = rho.iter().map(|r| r * r).collect();
    let kappa: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let (c0_lin, c1_lin, r2_lin) = least_squares(&rho, &kappa);
    let (c0_quad, c2_quad, r2_quad) = least_squares(&rho2, &kappa);
    let growth_ratios =
        pts.windows(2).filter(|w| ((w[1].0 / w[0].0) - 2.0).abs() < 1e-12).map(|w| w[1].1 / w[0].1).collect();
    Ok(FitResult { c0_lin, c1_lin, r2_lin, c0_quad, c2_quad, r2_quad, growth_ratios, n_points: pts.len() })
}

/// Groups successful records by `keys` and fits each group.
pub fn fit_models(records: &[SweepRecord], keys: &[GroupKey]) -> Vec<(String, Result<FitResult>)> {
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.is_ok()) {
        let label = keys
            .iter()
            .map(|k| match k {
                GroupKey::Form => format!("form={}", r.form),
                GroupKey::NCoarse => format!("n={}", r.n_coarse),
                GroupKey::Refine => format!("r={}", r.refine),
                GroupKey::Overlap => format!("m={}", r.overlap_layers),
            })
            .collect::<Vec<_>>()
            .join(",");
        groups.entry(label).or_default().push((r.ratio, r.kappa));
    }
    groups.into_iter().map(|(k, pts)| (k, fit_points(&pts))).collect()
}
