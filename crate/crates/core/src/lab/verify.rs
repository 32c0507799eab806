//! Invariant suite run by `ddschwarz verify`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::problem::{Form, Problem};
use super::records::{read_records, write_records};
use super::sweep::{run_single, EigChoice, RunOptions};
use crate::assembly::{assemble_curl, assemble_div, assemble_form, assemble_p1_stiffness, energy, HelmholtzSplitter};
use crate::error::{Error, Result};
use crate::krylov::{dense_spectrum, pcg, Preconditioner, Scaled};
use crate::mesh::{barycentric, build_refined, Mesh};
use crate::schwarz::{Decomposition, PartitionOfUnity, SchwarzOptions, SchwarzPreconditioner};
use crate::spaces::{
    build_embedding, build_space, cellwise_derivative, discrete_gradient, eval_edge_field, eval_nodal,
    interpolate_edge, interpolate_face, rot_minus90, SpaceKind,
};
use crate::sparse::{dot, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(Error::Parse(format!("unknown level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub level: Level,
    pub passed: bool,
    pub checks: Vec<Check>,
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `‖A_H − I_Hᵀ A_h I_H‖_max / ‖A_H‖_max` for the form on `(coarse, fine)`.
pub fn galerkin_defect(form: Form, coarse: Arc<Mesh>, fine: Arc<Mesh>) -> Result<f64> {
    let kind = form.space_kind();
    let cs = build_space(coarse, kind);
    let fs = build_space(fine, kind);
    let a_coarse = assemble_form(&cs)?;
    let a_fine = assemble_form(&fs)?;
    let emb = build_embedding(&cs, &fs)?;
    let product = a_fine.galerkin(&emb.matrix)?;
    Ok(a_coarse.csr().max_abs_diff(product.csr()) / a_coarse.csr().max_abs().max(f64::MIN_POSITIVE))
}

/// Worst `(‖Gᵀ w⊥‖∞, |a(∇q, w⊥)| / a(u, u))` over random fields.
pub fn helmholtz_defects(n: usize, r: u32, samples: usize, seed: u64) -> Result<(f64, f64)> {
    let mesh = Arc::new(build_refined(n, r)?);
    let nd = build_space(mesh.clone(), SpaceKind::Nd0);
    let p1 = build_space(mesh, SpaceKind::P1);
    let a = assemble_curl(&nd)?;
    let split = HelmholtzSplitter::new(&p1, &nd)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut div, mut orth) = (0.0f64, 0.0f64);
    for _ in 0..samples {
        let u = random(nd.n_free(), &mut rng);
        let (q, w) = split.split(&u)?;
        div = div.max(split.divergence_residual(&w));
        let gq = split.gradient.matvec(&q);
        orth = orth.max(energy(&a, &gq, &w).abs() / energy(&a, &u, &u));
    }
    Ok((div, orth))
}

/// `(Σθ defect, support violations, max|∇θ|·δ, in range)`.
pub fn partition_of_unity_stats(n: usize, r: u32, m: usize) -> Result<(f64, usize, f64, bool)> {
    let mesh = Arc::new(build_refined(n, r)?);
    let dec = Decomposition::build(mesh.clone(), m)?;
    let pou = PartitionOfUnity::build(&dec)?;
    Ok((pou.sum_defect(), pou.support_violations(&dec), pou.max_gradient(&mesh) * dec.delta, pou.in_range()))
}

/// Lanczos and dense extreme eigenvalues of the preconditioned operator.
pub fn lanczos_vs_dense(form: Form, n: usize, r: u32, m: usize, seed: u64) -> Result<((f64, f64), (f64, f64))> {
    let problem = Problem::build(form, n, r)?;
    let dec = problem.decomposition(m)?;
    let pre = problem.preconditioner(&dec, SchwarzOptions::default())?;
    let b = random(problem.n_free(), &mut ChaCha8Rng::seed_from_u64(seed));
    let (_, rep) = pcg(&problem.a_fine, &pre, &b, 1e-10, 10_000)?;
    let spec = dense_spectrum(&problem.a_fine, &pre)?;
    Ok(((rep.ritz_min, rep.ritz_max), (spec[0], spec[spec.len() - 1])))
}

/// Sorted dense spectrum of the two-level preconditioned operator.
pub fn preconditioned_spectrum(form: Form, n: usize, r: u32, m: usize, options: SchwarzOptions) -> Result<Vec<f64>> {
    let problem = Problem::build(form, n, r)?;
    let dec = problem.decomposition(m)?;
    let pre = problem.preconditioner(&dec, options)?;
    dense_spectrum(&problem.a_fine, &pre)
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn run(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let (passed, detail) = match outcome {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => (false, format!("error: {e}")),
            Err(_) => (false, "panicked".into()),
        };
        log::info!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        self.checks.push(Check { name: name.into(), passed, detail, seconds: start.elapsed().as_secs_f64() });
    }
}

fn mesh_pairs(limit: usize) -> Vec<(usize, u32)> {
    let mut out = Vec::new();
    for n in 1..=limit {
        let mut r = 0;
        while n << r <= limit {
            out.push((n, r));
            r += 1;
        }
    }
    out
}

pub fn verify(level: Level) -> VerifyReport {
    let full = level == Level::Full;
    let mut s = Suite { checks: Vec::new() };

    let mesh_limit = if full { 128 } else { 32 };
    s.run("mesh invariants", || {
        for (n, r) in mesh_pairs(mesh_limit) {
            if let Err(e) = build_refined(n, r)?.validate() {
                return Ok((false, format!("n={n} r={r}: {e}")));
            }
        }
        Ok((true, format!("all (n, r) with n*2^r <= {mesh_limit}")))
    });

    s.run("discrete de Rham exactness", || {
        let mesh = Arc::new(build_refined(3, 3)?);
        let p1 = build_space(mesh.clone(), SpaceKind::P1);
        let nd = build_space(mesh.clone(), SpaceKind::Nd0);
        let d = discrete_gradient(&p1, &nd)?;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let p = random(p1.n_free(), &mut rng);
            let curls = cellwise_derivative(&nd, &d.matvec(&p));
            let e: f64 = curls.iter().enumerate().map(|(c, v)| mesh.signed_area(c) * v * v).sum();
            worst = worst.max(e / dot(&p, &p));
        }
        Ok((worst <= 1e-12, format!("max curl energy / |p|^2 = {worst:e}")))
    });

    s.run("rotation duality of interpolants", || {
        let mesh = Arc::new(build_refined(2, 1)?);
        let nd = build_space(mesh.clone(), SpaceKind::Nd0);
        let rt = build_space(mesh, SpaceKind::Rt0);
        let fields: [fn([f64; 2]) -> [f64; 2]; 3] =
            [|_| [1.0, 0.0], |p| [-p[1], p[0]], |p| [p[0] * p[1], (3.0 * p[0]).sin()]];
        let mut worst = 0.0f64;
        for f in fields {
            let e = interpolate_edge(&nd, f)?;
            let g = interpolate_face(&rt, |p| rot_minus90(f(p)))?;
            worst = e.iter().zip(&g).fold(worst, |m, (a, b)| m.max((a - b).abs()));
        }
        let a = assemble_curl(&nd)?;
        let b = assemble_div(&rt)?;
        let mat = a.csr().max_abs_diff(b.csr()) / a.csr().max_abs();
        Ok((worst <= 1e-14 && mat <= 1e-13, format!("interpolants {worst:e}, matrices {mat:e}")))
    });

    s.run("embedding exactness", || {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for kind in [SpaceKind::Nd0, SpaceKind::Rt0, SpaceKind::P1] {
            let cm = Arc::new(build_refined(2, 0)?);
            let fm = Arc::new(build_refined(2, 2)?);
            let cs = build_space(cm.clone(), kind);
            let fs = build_space(fm.clone(), kind);
            let emb = build_embedding(&cs, &fs)?;
            for j in 0..cs.n_free() {
                let mut w = vec![0.0; cs.n_free()];
                w[j] = 1.0;
                let cf = cs.extend(&w);
                let ff = fs.extend(&emb.prolong(&w));
                for c in 0..fm.n_cells() {
                    let pts = fm.cell_points(c);
                    for _ in 0..3 {
                        let (mut a, mut b): (f64, f64) = (rng.gen(), rng.gen());
                        if a + b > 1.0 {
                            (a, b) = (1.0 - a, 1.0 - b);
                        }
                        let p = [
                            pts[0][0] + a * (pts[1][0] - pts[0][0]) + b * (pts[2][0] - pts[0][0]),
                            pts[0][1] + a * (pts[1][1] - pts[0][1]) + b * (pts[2][1] - pts[0][1]),
                        ];
                        let parent = fm.parent_cell[c];
                        debug_assert!(barycentric(&cm, parent, p).iter().all(|&l| l > -1e-12));
                        let diff = if kind == SpaceKind::P1 {
                            (eval_nodal(&fm, &ff, c, p) - eval_nodal(&cm, &cf, parent, p)).abs()
                        } else {
                            let x = eval_edge_field(&fs, &ff, c, p);
                            let y = eval_edge_field(&cs, &cf, parent, p);
                            (x[0] - y[0]).abs().max((x[1] - y[1]).abs())
                        };
                        worst = worst.max(diff);
                    }
                }
            }
        }
        Ok((worst <= 1e-12, format!("max pointwise difference {worst:e}")))
    });

    s.run("symmetry and definiteness", || {
        let mesh = Arc::new(build_refined(2, 2)?);
        let mut detail = Vec::new();
        let mut ok = true;
        for kind in [SpaceKind::Nd0, SpaceKind::Rt0, SpaceKind::P1] {
            let sp = build_space(mesh.clone(), kind);
            let a = assemble_form(&sp)?;
            let asym = a.asymmetry() / a.csr().max_abs();
            let min_eig = nalgebra::SymmetricEigen::new(a.to_dense()).eigenvalues.min();
            ok &= asym <= 1e-13 && min_eig > 0.0;
            detail.push(format!("{kind:?}: asym {asym:e}, min eig {min_eig:e}"));
        }
        Ok((ok, detail.join("; ")))
    });

    let galerkin_limit = if full { 64 } else { 16 };
    s.run("Galerkin nesting", || {
        let mut worst = 0.0f64;
        for form in [Form::Curl, Form::Div] {
            for (n, r) in mesh_pairs(galerkin_limit) {
                let d = galerkin_defect(form, Arc::new(build_refined(n, 0)?), Arc::new(build_refined(n, r)?))?;
                worst = worst.max(d);
            }
        }
        Ok((worst <= 1e-11, format!("max relative defect {worst:e} for n*2^r <= {galerkin_limit}")))
    });

    s.run("discrete Helmholtz decomposition", || {
        let (div, orth) = helmholtz_defects(4, 3, if full { 100 } else { 20 }, 7)?;
        Ok((div <= 1e-11 && orth <= 1e-10, format!("|G^T w|_inf {div:e}, orthogonality {orth:e}")))
    });

    s.run("partition of unity", || {
        let mut ok = true;
        let mut detail = Vec::new();
        for m in [1, 2] {
            let (sum, supp, grad, range) = partition_of_unity_stats(4, 3, m)?;
            ok &= sum <= 1e-14 && supp == 0 && grad <= 4.0 && range;
            detail.push(format!("m={m}: sum defect {sum:e}, max|grad|*delta {grad:.3}"));
        }
        Ok((ok, detail.join("; ")))
    });

    s.run("coverage and coloring", || {
        let top = if full { 8 } else { 4 };
        for n in 1..=top {
            for m in [1, 2] {
                let mesh = Arc::new(build_refined(n, 2)?);
                let n_free = build_space(mesh.clone(), SpaceKind::Nd0).n_free();
                let dec = Decomposition::build(mesh, m)?;
                if !dec.uncovered_dofs(n_free).is_empty() || !dec.coloring_conflicts().is_empty() {
                    return Ok((false, format!("n={n} m={m}")));
                }
            }
        }
        Ok((true, format!("n <= {top}, r = 2, m in {{1, 2}}")))
    });

    s.run("preconditioner symmetry and determinism", || {
        let problem = Problem::build(Form::Curl, 2, 2)?;
        let dec = problem.decomposition(1)?;
        let pre = problem.preconditioner(&dec, SchwarzOptions::default())?;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst = 0.0f64;
        let mut deterministic = true;
        for _ in 0..20 {
            let r = random(problem.n_free(), &mut rng);
            let t = random(problem.n_free(), &mut rng);
            let z = pre.apply(&r);
            deterministic &= z == pre.apply(&r);
            let d = (dot(&z, &t) - dot(&r, &pre.apply(&t))).abs() / (norm2(&r) * norm2(&t));
            worst = worst.max(d);
        }
        Ok((worst <= 1e-12 && deterministic, format!("max relative asymmetry {worst:e}")))
    });

    s.run("spectral bounds and coarse monotonicity", || {
        let mut ok = true;
        let mut detail = Vec::new();
        for (n, r, m) in [(2, 2, 1), (2, 2, 2), (3, 2, 1)] {
            let problem = Problem::build(Form::Curl, n, r)?;
            let dec = problem.decomposition(m)?;
            let two = problem.preconditioner(&dec, SchwarzOptions::default())?;
            let one = problem.preconditioner(&dec, SchwarzOptions { use_coarse: false, use_locals: true })?;
            let s2 = dense_spectrum(&problem.a_fine, &two)?;
            let s1 = dense_spectrum(&problem.a_fine, &one)?;
            let lmax = s2[s2.len() - 1];
            ok &= s2[0] > 0.0 && s1[0] > 0.0;
            ok &= lmax <= dec.n_colors as f64 + 1.1;
            ok &= s2[0] >= s1[0] - 1e-12;
            detail.push(format!(
                "n={n} r={r} m={m}: lmax {lmax:.3} <= {}+1.1, lmin {:.4} >= {:.4}",
                dec.n_colors, s2[0], s1[0]
            ));
        }
        Ok((ok, detail.join("; ")))
    });

    s.run("scaling invariance", || {
        let problem = Problem::build(Form::Curl, 2, 2)?;
        let dec = problem.decomposition(1)?;
        let pre = problem.preconditioner(&dec, SchwarzOptions::default())?;
        let c = 7.5;
        let scaled_fine = problem.a_fine.scaled(c);
        let scaled_coarse = problem.a_coarse.scaled(c);
        let pre_c = SchwarzPreconditioner::build(
            &scaled_fine,
            Some((&scaled_coarse, &problem.embedding)),
            &dec,
            SchwarzOptions::default(),
        )?;
        let base = dense_spectrum(&problem.a_fine, &pre)?;
        let scaled = dense_spectrum(&scaled_fine, &pre_c)?;
        let also = dense_spectrum(&scaled_fine, &Scaled(&pre, 1.0 / c))?;
        let d1 = base.iter().zip(&scaled).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let d2 = base.iter().zip(&also).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        Ok((d1 <= 1e-10 && d2 <= 1e-10, format!("max eigenvalue shift {d1:e} / {d2:e}")))
    });

    let (ln, lr) = if full { (2, 3) } else { (2, 2) };
    s.run("Lanczos agrees with dense oracle", || {
        let ((llo, lhi), (dlo, dhi)) = lanczos_vs_dense(Form::Curl, ln, lr, 1, 42)?;
        let (e1, e2) = ((llo - dlo).abs() / dlo, (lhi - dhi).abs() / dhi);
        Ok((e1 <= 0.01 && e2 <= 0.01, format!("n={ln} r={lr} m=1: lmin {llo:.6}/{dlo:.6}, lmax {lhi:.6}/{dhi:.6}")))
    });

    s.run("curl and div spectra coincide", || {
        let configs: &[(usize, u32, usize)] = if full { &[(2, 2, 1), (2, 3, 2), (3, 2, 1)] } else { &[(2, 2, 1)] };
        let mut worst = 0.0f64;
        for &(n, r, m) in configs {
            let a = preconditioned_spectrum(Form::Curl, n, r, m, SchwarzOptions::default())?;
            let b = preconditioned_spectrum(Form::Div, n, r, m, SchwarzOptions::default())?;
            worst = a.iter().zip(&b).fold(worst, |w, (x, y)| w.max((x - y).abs()));
        }
        Ok((worst <= 1e-8, format!("max eigenvalue difference {worst:e}")))
    });

    s.run("records: csv round trip, determinism, pcg bound", || {
        let opts = RunOptions { eig_method: EigChoice::Lanczos, ..RunOptions::default() };
        let mut recs = Vec::new();
        for (r, m) in [(2, 1), (2, 2), (3, 2)] {
            recs.push(run_single(Form::Curl, 2, r, m, &opts)?);
        }
        let again = run_single(Form::Curl, 2, 2, 1, &opts)?;
        let bitwise = again.kappa.to_bits() == recs[0].kappa.to_bits();
        let mut buf = Vec::new();
        write_records(&mut buf, &recs)?;
        let round_trip = read_records(buf.as_slice())? == recs;
        let ratio_ok = recs.iter().all(|r| r.ratio * r.overlap_layers as f64 == f64::from(1u32 << r.refine));
        let bound_ok =
            recs.iter().all(|r| r.pcg_iters as f64 <= (0.5 * r.kappa.sqrt() * (2.0 / opts.tol).ln()).ceil() + 5.0);
        Ok((
            bitwise && round_trip && ratio_ok && bound_ok,
            format!("bitwise {bitwise}, round trip {round_trip}, ratio {ratio_ok}, pcg bound {bound_ok}"),
        ))
    });

    if full {
        s.run("P1 stiffness positive definite", || {
            let sp = build_space(Arc::new(build_refined(4, 2)?), SpaceKind::P1);
            let k = assemble_p1_stiffness(&sp)?;
            let min = nalgebra::SymmetricEigen::new(k.to_dense()).eigenvalues.min();
            Ok((min > 0.0, format!("min eigenvalue {min:e}")))
        });
    }

    let passed = s.checks.iter().all(|c| c.passed);
    VerifyReport { level, passed, checks: s.checks }
}
