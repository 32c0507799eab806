use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::problem::{Form, Problem};
use super::records::SweepRecord;
use crate::error::{Error, Result};
use crate::krylov::{dense_spectrum, pcg, EigMethod, DENSE_LIMIT};
use crate::schwarz::SchwarzOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EigChoice {
    Auto,
    Lanczos,
    Dense,
}

impl EigChoice {
    fn resolve(self, n_free: usize) -> EigMethod {
        match self {
            EigChoice::Lanczos => EigMethod::Lanczos,
            EigChoice::Dense => EigMethod::Dense,
            EigChoice::Auto if n_free <= DENSE_LIMIT => EigMethod::Dense,
            EigChoice::Auto => EigMethod::Lanczos,
        }
    }
}

impl FromStr for EigChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(EigChoice::Auto),
            "lanczos" => Ok(EigChoice::Lanczos),
            "dense" => Ok(EigChoice::Dense),
            other => Err(Error::Parse(format!("unknown eigenvalue method {other:?}"))),
        }
    }
}

/// Per-run solver settings shared by every tuple of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub eig_method: EigChoice,
    pub tol: f64,
    pub seed: u64,
    pub use_coarse: bool,
    pub max_iter: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { eig_method: EigChoice::Auto, tol: 1e-10, seed: 42, use_coarse: true, max_iter: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub form: Form,
    pub n_coarse: Vec<usize>,
    pub refine: Vec<u32>,
    pub overlap_layers: Vec<usize>,
    pub options: RunOptions,
    pub output: Option<PathBuf>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_coarse.is_empty() || self.refine.is_empty() || self.overlap_layers.is_empty() {
            return Err(Error::Config("coarse, refine and overlap lists must be non-empty".into()));
        }
        if self.n_coarse.contains(&0) {
            return Err(Error::Config("coarse grid parameter must be at least 1".into()));
        }
        if self.overlap_layers.contains(&0) {
            return Err(Error::Config("overlap must be at least one layer".into()));
        }
        if !(self.options.tol > 0.0 && self.options.tol < 1.0) {
            return Err(Error::Config(format!("tolerance {} outside (0, 1)", self.options.tol)));
        }
        Ok(())
    }

    /// `(n, r, m)` tuples in sorted order.
    pub fn tuples(&self) -> Vec<(usize, u32, usize)> {
        let mut out = Vec::new();
        for &n in &self.n_coarse {
            for &r in &self.refine {
                for &m in &self.overlap_layers {
                    out.push((n, r, m));
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

fn random_rhs(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn measure(problem: &Problem, n: usize, r: u32, m: usize, opts: &RunOptions) -> Result<SweepRecord> {
    let dec = problem.decomposition(m)?;
    let pre = problem.preconditioner(&dec, SchwarzOptions { use_coarse: opts.use_coarse, use_locals: true })?;
    let b = random_rhs(problem.n_free(), opts.seed);
    let (_, report) = pcg(&problem.a_fine, &pre, &b, opts.tol, opts.max_iter)?;
    if !report.converged {
        log::warn!("pcg did not converge for n={n} r={r} m={m} in {} iterations", report.iterations);
    }
    let method = opts.eig_method.resolve(problem.n_free());
    let (lambda_min, lambda_max) = match method {
        EigMethod::Lanczos => (report.ritz_min, report.ritz_max),
        EigMethod::Dense => {
            let spec = dense_spectrum(&problem.a_fine, &pre)?;
            (spec[0], spec[spec.len() - 1])
        }
    };
    let mesh = &problem.fine.mesh;
    Ok(SweepRecord {
        form: problem.form,
        n_coarse: n,
        refine: r,
        overlap_layers: m,
        coarse_h: mesh.H_nominal(),
        h: mesh.h_nominal(),
        delta: dec.delta,
        ratio: f64::from(1u32 << r) / m as f64,
        n_dofs: problem.n_free(),
        n_colors: dec.n_colors,
        lambda_min,
        lambda_max,
        kappa: lambda_max / lambda_min,
        pcg_iters: report.iterations,
        final_relres: report.final_relres(),
        eig_method: method,
        seed: opts.seed,
        error: None,
    })
}

fn failed(form: Form, n: usize, r: u32, m: usize, opts: &RunOptions, err: &Error) -> SweepRecord {
    let nan = f64::NAN;
    SweepRecord {
        form,
        n_coarse: n,
        refine: r,
        overlap_layers: m,
        coarse_h: 1.0 / n.max(1) as f64,
        h: 1.0 / (n.max(1) as f64 * f64::from(1u32 << r)),
        delta: m as f64 / (n.max(1) as f64 * f64::from(1u32 << r)),
        ratio: f64::from(1u32 << r) / m as f64,
        n_dofs: 0,
        n_colors: 0,
        lambda_min: nan,
        lambda_max: nan,
        kappa: nan,
        pcg_iters: 0,
        final_relres: nan,
        eig_method: EigMethod::Lanczos,
        seed: opts.seed,
        error: Some(err.to_string()),
    }
}

/// Builds and measures one configuration.
pub fn run_single(form: Form, n: usize, r: u32, m: usize, opts: &RunOptions) -> Result<SweepRecord> {
    let problem = Problem::build(form, n, r)?;
    measure(&problem, n, r, m, opts)
}

/// Measures overlap `m` on an already assembled problem.
pub fn run_problem(problem: &Problem, m: usize, opts: &RunOptions) -> Result<SweepRecord> {
    measure(problem, problem.fine.mesh.n_coarse, problem.fine.mesh.level, m, opts)
}

/// Runs every `(n, r, m)` tuple; failures become records with an error message.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRecord>> {
    cfg.validate()?;
    let tuples = cfg.tuples();
    let mut records: Vec<SweepRecord> = tuples
        .par_iter()
        .map(|&(n, r, m)| {
            log::info!("{} n={n} r={r} m={m}", cfg.form);
            run_single(cfg.form, n, r, m, &cfg.options).unwrap_or_else(|e| failed(cfg.form, n, r, m, &cfg.options, &e))
        })
        .collect();
    records.sort_by_key(|r| (r.form, r.n_coarse, r.refine, r.overlap_layers));
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(form: Form, n: Vec<usize>, r: Vec<u32>, m: Vec<usize>) -> SweepConfig {
        SweepConfig { form, n_coarse: n, refine: r, overlap_layers: m, options: RunOptions::default(), output: None }
    }

    #[test]
    fn single_tuple_ratio() {
        let recs = run_sweep(&cfg(Form::Curl, vec![2], vec![2], vec![2])).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].ratio, 2.0);
        assert!(recs[0].is_ok());
        assert!((recs[0].kappa - recs[0].lambda_max / recs[0].lambda_min).abs() == 0.0);
    }

    #[test]
    fn whole_domain_subdomains_without_coarse_give_unit_kappa() {
        let mut c = cfg(Form::Curl, vec![1], vec![1], vec![2]);
        c.options.use_coarse = false;
        let recs = run_sweep(&c).unwrap();
        assert!((recs[0].kappa - 1.0).abs() < 1e-8, "{}", recs[0].kappa);
    }

    #[test]
    fn failures_are_recorded() {
        let recs = run_sweep(&cfg(Form::Div, vec![2], vec![0, 1], vec![1])).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[0].error.as_deref().unwrap().contains("refinement"));
        assert!(recs[1].is_ok());
    }

    #[test]
    fn invalid_configs() {
        assert!(run_sweep(&cfg(Form::Curl, vec![], vec![1], vec![1])).is_err());
        assert!(run_sweep(&cfg(Form::Curl, vec![2], vec![1], vec![0])).is_err());
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let c = cfg(Form::Curl, vec![2], vec![2], vec![1, 2]);
        let a = run_sweep(&c).unwrap();
        let b = run_sweep(&c).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.lambda_min.to_bits(), y.lambda_min.to_bits());
            assert_eq!(x.lambda_max.to_bits(), y.lambda_max.to_bits());
            assert_eq!(x.kappa.to_bits(), y.kappa.to_bits());
        }
    }

    #[test]
    fn matched_curl_div_sweeps_agree() {
        let a = run_sweep(&cfg(Form::Curl, vec![2], vec![2], vec![1, 2])).unwrap();
        let b = run_sweep(&cfg(Form::Div, vec![2], vec![2], vec![1, 2])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.kappa - y.kappa).abs() < 1e-8);
        }
    }
}
