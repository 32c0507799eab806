//! Preconditioned conjugate gradients and spectral estimates of `B⁻¹A`.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cholesky::EnvelopeCholesky;
use crate::error::{Error, Result};
use crate::sparse::{dot, norm2, SparseSymMatrix};

/// Symmetric positive definite approximation of `A⁻¹`.
pub trait Preconditioner: Sync {
    fn dim(&self) -> usize;

    fn apply_into(&self, r: &[f64], z: &mut [f64]);

    fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; r.len()];
        self.apply_into(r, &mut z);
        z
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl Preconditioner for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

/// Exact inverse through a sparse Cholesky factorization.
#[derive(Debug, Clone)]
pub struct ExactInverse(pub EnvelopeCholesky);

impl ExactInverse {
    pub fn new(a: &SparseSymMatrix) -> Result<Self> {
        Ok(Self(EnvelopeCholesky::factor(a)?))
    }
}

impl Preconditioner for ExactInverse {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
        self.0.solve_in_place(z);
    }
}

/// `c · P`, used for scaling checks.
pub struct Scaled<'a, P: ?Sized>(pub &'a P, pub f64);

impl<P: Preconditioner + ?Sized> Preconditioner for Scaled<'_, P> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        self.0.apply_into(r, z);
        z.iter_mut().for_each(|v| *v *= self.1);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigMethod {
    Lanczos,
    Dense,
}

impl std::fmt::Display for EigMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EigMethod::Lanczos => "lanczos",
            EigMethod::Dense => "dense",
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// `‖r_k‖ / ‖b‖` after each iteration.
    pub relative_residuals: Vec<f64>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// NaN when no iteration was taken.
    pub ritz_min: f64,
    pub ritz_max: f64,
    pub kappa: f64,
    pub method: EigMethod,
    pub converged: bool,
    pub tolerance: f64,
}

impl SolveReport {
    pub fn final_relres(&self) -> f64 {
        self.relative_residuals.last().copied().unwrap_or(0.0)
    }
}

/// PCG on `A x = b` from a zero initial guess.
///
/// Stops when `‖b − A x‖ / ‖b‖ ≤ tol` (recursive residual). Hitting `max_iter`
/// is not an error: the partial report has `converged = false`.
pub fn pcg(
    a: &SparseSymMatrix,
    p: &dyn Preconditioner,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, SolveReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::Dimension { expected: n, found: b.len() });
    }
    if p.dim() != n {
        return Err(Error::Dimension { expected: n, found: p.dim() });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let bnorm = norm2(b);
    let mut report = SolveReport {
        iterations: 0,
        relative_residuals: Vec::new(),
        alpha: Vec::new(),
        beta: Vec::new(),
        ritz_min: f64::NAN,
        ritz_max: f64::NAN,
        kappa: f64::NAN,
        method: EigMethod::Lanczos,
        converged: true,
        tolerance: tol,
    };
    if bnorm == 0.0 {
        return Ok((x, report));
    }
    let mut z = p.apply(&r);
    let mut d = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; n];
    report.converged = false;
    for it in 0..max_iter {
        a.matvec_into(&d, &mut ad);
        let dad = dot(&d, &ad);
        let alpha = rz / dad;
        if !alpha.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        for i in 0..n {
            x[i] += alpha * d[i];
            r[i] -= alpha * ad[i];
        }
        report.alpha.push(alpha);
        report.iterations = it + 1;
        let rel = norm2(&r) / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        report.relative_residuals.push(rel);
        if rel <= tol {
            report.converged = true;
            break;
        }
        p.apply_into(&r, &mut z);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        if !beta.is_finite() {
            return Err(Error::NonFinite { iteration: it });
        }
        report.beta.push(beta);
        rz = rz_next;
        for i in 0..n {
            d[i] = z[i] + beta * d[i];
        }
    }
    if report.iterations > 0 {
        let (lo, hi) = lanczos_extremes(&report)?;
        report.ritz_min = lo;
        report.ritz_max = hi;
        report.kappa = hi / lo;
    }
    Ok((x, report))
}

/// Lanczos tridiagonal implied by the CG coefficients:
/// diagonal `1/α_k + β_{k−1}/α_{k−1}`, off-diagonal `√β_k / α_k`.
pub fn lanczos_tridiagonal(alpha: &[f64], beta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let k = alpha.len();
    let diag = (0..k).map(|i| 1.0 / alpha[i] + if i > 0 { beta[i - 1] / alpha[i - 1] } else { 0.0 }).collect();
    let off = (0..k.saturating_sub(1)).map(|i| beta[i].sqrt() / alpha[i]).collect();
    (diag, off)
}

/// Extreme Ritz values of `B⁻¹A` from a PCG report.
pub fn lanczos_extremes(report: &SolveReport) -> Result<(f64, f64)> {
    if report.alpha.is_empty() {
        return Err(Error::TooFewIterations { required: 1, found: 0 });
    }
    let (diag, off) = lanczos_tridiagonal(&report.alpha, &report.beta);
    Ok(tridiagonal_extremes(&diag, &off))
}

/// Number of eigenvalues strictly below `x` (Sturm sequence count).
fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let e2 = if i > 0 { off[i - 1] * off[i - 1] } else { 0.0 };
        q = diag[i] - x - if i > 0 { e2 / q } else { 0.0 };
        if q == 0.0 {
            q = -f64::EPSILON * (diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Smallest and largest eigenvalues of a symmetric tridiagonal matrix by bisection.
pub fn tridiagonal_extremes(diag: &[f64], off: &[f64]) -> (f64, f64) {
    let n = diag.len();
    let radius = |i: usize| {
        let l = if i > 0 { off[i - 1].abs() } else { 0.0 };
        let r = if i + 1 < n { off[i].abs() } else { 0.0 };
        l + r
    };
    let lo = (0..n).map(|i| diag[i] - radius(i)).fold(f64::INFINITY, f64::min);
    let hi = (0..n).map(|i| diag[i] + radius(i)).fold(f64::NEG_INFINITY, f64::max);
    let find = |target: usize| {
        // smallest x with at least `target` eigenvalues below it
        let (mut a, mut b) = (lo, hi);
        for _ in 0..200 {
            let mid = 0.5 * (a + b);
            if sturm_count(diag, off, mid) >= target {
                b = mid;
            } else {
                a = mid;
            }
            if b - a <= 1e-14 * a.abs().max(b.abs()).max(1e-300) {
                break;
            }
        }
        0.5 * (a + b)
    };
    if lo == hi {
        return (lo, hi);
    }
    (find(1), find(n))
}

pub const DENSE_LIMIT: usize = 4000;

/// All eigenvalues of `P A`, ascending, via `A = L Lᵀ` and `Lᵀ P L`.
pub fn dense_spectrum(a: &SparseSymMatrix, p: &dyn Preconditioner) -> Result<Vec<f64>> {
    let n = a.dim();
    if n > DENSE_LIMIT {
        return Err(Error::TooLarge { limit: DENSE_LIMIT, found: n });
    }
    if p.dim() != n {
        return Err(Error::Dimension { expected: n, found: p.dim() });
    }
    let chol = a.to_dense().cholesky().ok_or(Error::NotPositiveDefinite { row: 0, pivot: 0, value: f64::NAN })?;
    let l = chol.l();
    let cols: Vec<Vec<f64>> = (0..n).into_par_iter().map(|j| p.apply(l.column(j).as_slice())).collect();
    let mut pl = DMatrix::zeros(n, n);
    for (j, c) in cols.into_iter().enumerate() {
        pl.set_column(j, &nalgebra::DVector::from_vec(c));
    }
    let m = l.transpose() * pl;
    let sym = (&m + m.transpose()) * 0.5;
    let mut eig: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    eig.sort_by(|x, y| x.total_cmp(y));
    Ok(eig)
}
