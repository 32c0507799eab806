//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use ddschwarz_core::assembly::{assemble_curl, assemble_form, energy, HelmholtzSplitter};
use ddschwarz_core::lab::{fit_points, run_single, EigChoice, Form, Problem, RunOptions, SweepRecord};
use ddschwarz_core::{
    build_embedding, build_refined, build_space, dense_spectrum, pcg, Decomposition, PartitionOfUnity, SchwarzOptions,
    SchwarzPreconditioner, SpaceKind,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn lanczos() -> RunOptions {
    RunOptions { eig_method: EigChoice::Lanczos, ..RunOptions::default() }
}

fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn growth(sweep: &[SweepRecord]) -> Outcome {
    let pts: Vec<(f64, f64)> = sweep.iter().map(|r| (r.ratio, r.kappa)).collect();
    let fit = fit_points(&pts).map_err(err)?;
    let ok = fit.growth_ratios.len() == 3 && fit.growth_ratios.iter().all(|&g| g <= 2.6) && fit.r2_lin >= fit.r2_quad;
    let table: Vec<String> = sweep.iter().map(|r| format!("rho={} kappa={:.3}", r.ratio, r.kappa)).collect();
    Ok((
        ok,
        format!(
            "{}; growth {:.3?}; r2_lin {:.4} r2_quad {:.4}",
            table.join(", "),
            fit.growth_ratios,
            fit.r2_lin,
            fit.r2_quad
        ),
    ))
}

fn h_independence(runs: &[SweepRecord]) -> Outcome {
    let k: Vec<f64> = runs.iter().map(|r| r.kappa).collect();
    let (lo, hi) = k.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    let spread = hi / lo - 1.0;
    Ok((spread <= 0.15, format!("kappa {k:.3?} at rho=4, spread {:.1}%", 100.0 * spread)))
}

fn lambda_max_bounded(sweep: &[SweepRecord]) -> Outcome {
    let lmax: Vec<f64> = sweep.iter().map(|r| r.lambda_max).collect();
    let kap: Vec<f64> = sweep.iter().map(|r| r.kappa).collect();
    let ratio = |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
    let (lr, kr) = (ratio(&lmax), ratio(&kap));
    let colors = sweep.iter().all(|r| r.lambda_max <= r.n_colors as f64 + 1.1);
    let colors_list: Vec<usize> = sweep.iter().map(|r| r.n_colors).collect();
    Ok((
        lr <= 1.5 && kr >= 3.0 && colors,
        format!("lambda_max {lmax:.3?} (ratio {lr:.3}), kappa ratio {kr:.2}, n_colors {colors_list:?}"),
    ))
}

fn identity_case() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for form in [Form::Curl, Form::Div] {
        let problem = Problem::build(form, 2, 2).map_err(err)?;
        let dec = Decomposition::single(problem.fine.mesh.clone());
        let pre = SchwarzPreconditioner::build(
            &problem.a_fine,
            None,
            &dec,
            SchwarzOptions { use_coarse: false, use_locals: true },
        )
        .map_err(err)?;
        let spec = dense_spectrum(&problem.a_fine, &pre).map_err(err)?;
        let kappa = spec[spec.len() - 1] / spec[0];
        ok &= (kappa - 1.0).abs() <= 1e-8;
        detail.push(format!("{form}: kappa - 1 = {:.2e}", kappa - 1.0));
    }
    Ok((ok, detail.join(", ")))
}

fn oracle_agreement() -> Outcome {
    let problem = Problem::build(Form::Curl, 2, 3).map_err(err)?;
    let dec = problem.decomposition(1).map_err(err)?;
    let pre = problem.preconditioner(&dec, SchwarzOptions::default()).map_err(err)?;
    let b = random(problem.n_free(), &mut ChaCha8Rng::seed_from_u64(42));
    let (_, rep) = pcg(&problem.a_fine, &pre, &b, 1e-10, 10_000).map_err(err)?;
    let spec = dense_spectrum(&problem.a_fine, &pre).map_err(err)?;
    let (dlo, dhi) = (spec[0], spec[spec.len() - 1]);
    let (e_lo, e_hi) = ((rep.ritz_min - dlo).abs() / dlo, (rep.ritz_max - dhi).abs() / dhi);
    Ok((
        e_lo <= 0.01 && e_hi <= 0.01,
        format!(
            "n_free {}: lanczos [{:.6}, {:.6}] dense [{dlo:.6}, {dhi:.6}], rel err {e_lo:.1e} / {e_hi:.1e}",
            problem.n_free(),
            rep.ritz_min,
            rep.ritz_max
        ),
    ))
}

fn galerkin() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for kind in [SpaceKind::Nd0, SpaceKind::Rt0] {
        for n in 1..=64usize {
            let coarse = build_space(Arc::new(build_refined(n, 0).map_err(err)?), kind);
            let a_h = assemble_form(&coarse).map_err(err)?;
            let scale = a_h.csr().max_abs();
            let mut r = 1;
            while n << r <= 64 {
                let fine = build_space(Arc::new(build_refined(n, r).map_err(err)?), kind);
                let emb = build_embedding(&coarse, &fine).map_err(err)?;
                let prod = assemble_form(&fine).map_err(err)?.galerkin(&emb.matrix).map_err(err)?;
                worst = worst.max(a_h.csr().max_abs_diff(prod.csr()) / scale);
                count += 1;
                r += 1;
            }
        }
    }
    Ok((worst <= 1e-11, format!("{count} nested pairs, max relative defect {worst:.2e}")))
}

fn helmholtz() -> Outcome {
    let mesh = Arc::new(build_refined(4, 3).map_err(err)?);
    let nd = build_space(mesh.clone(), SpaceKind::Nd0);
    let p1 = build_space(mesh, SpaceKind::P1);
    let a = assemble_curl(&nd).map_err(err)?;
    let split = HelmholtzSplitter::new(&p1, &nd).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut div, mut orth) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let u = random(nd.n_free(), &mut rng);
        let (q, w) = split.split(&u).map_err(err)?;
        div = div.max(split.divergence_residual(&w));
        orth = orth.max(energy(&a, &split.gradient.matvec(&q), &w).abs() / energy(&a, &u, &u));
    }
    Ok((div <= 1e-11 && orth <= 1e-10, format!("max |G^T w|_inf {div:.2e}, max orthogonality {orth:.2e}")))
}

fn rotation_isomorphism() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for (n, r, m) in [(2, 2, 1), (2, 2, 2), (3, 2, 1), (2, 3, 2)] {
        let mut spectra = Vec::new();
        for form in [Form::Curl, Form::Div] {
            let problem = Problem::build(form, n, r).map_err(err)?;
            let dec = problem.decomposition(m).map_err(err)?;
            let pre = problem.preconditioner(&dec, SchwarzOptions::default()).map_err(err)?;
            spectra.push(dense_spectrum(&problem.a_fine, &pre).map_err(err)?);
        }
        if spectra[0].len() != spectra[1].len() {
            return Ok((false, format!("n={n} r={r} m={m}: spectrum sizes differ")));
        }
        count += spectra[0].len();
        worst = spectra[0].iter().zip(&spectra[1]).fold(worst, |w, (a, b)| w.max((a - b).abs()));
    }
    Ok((worst <= 1e-8, format!("{count} eigenvalue pairs over 4 configurations, max difference {worst:.2e}")))
}

fn partition_of_unity() -> Outcome {
    let mut ok = true;
    let mut worst_grad = 0.0f64;
    let mut worst_sum = 0.0f64;
    let mut support = 0;
    for (n, r) in [(2, 2), (4, 3), (3, 3)] {
        let mesh = Arc::new(build_refined(n, r).map_err(err)?);
        for m in [1, 2, 4] {
            let dec = Decomposition::build(mesh.clone(), m).map_err(err)?;
            let pou = PartitionOfUnity::build(&dec).map_err(err)?;
            worst_sum = worst_sum.max(pou.sum_defect());
            support += pou.support_violations(&dec);
            worst_grad = worst_grad.max(pou.max_gradient(&mesh) * dec.delta);
            ok &= pou.in_range();
        }
    }
    ok &= worst_sum <= 1e-14 && support == 0 && worst_grad <= 4.0;
    Ok((ok, format!("sum defect {worst_sum:.1e}, support violations {support}, max|grad theta|*delta {worst_grad:.3}")))
}

fn pcg_consistency(records: &[SweepRecord], tol: f64) -> Outcome {
    let mut worst = Vec::new();
    let mut ok = true;
    for r in records {
        let bound = (0.5 * r.kappa.sqrt() * (2.0 / tol).ln()).ceil() + 5.0;
        ok &= r.is_ok() && (r.pcg_iters as f64) <= bound;
        worst.push(format!("{}/{bound}", r.pcg_iters));
    }
    Ok((ok, format!("iterations/bound: {}", worst.join(" "))))
}

fn report(id: usize, name: &str, start: Instant, outcome: Outcome) -> bool {
    let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    println!(
        "{} [{id:>2}] {name} ({:.1}s): {detail}",
        if passed { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    passed
}

fn main() -> ExitCode {
    let opts = lanczos();
    let mut all = true;

    let t = Instant::now();
    let sweep: Result<Vec<SweepRecord>, String> =
        [8usize, 4, 2, 1].iter().map(|&m| run_single(Form::Curl, 4, 4, m, &opts).map_err(err)).collect();
    let sweep_time = t.elapsed();
    let t = Instant::now();
    let fixed: Result<Vec<SweepRecord>, String> = [(2u32, 1usize), (3, 2), (4, 4)]
        .iter()
        .map(|&(r, m)| run_single(Form::Curl, 4, r, m, &opts).map_err(err))
        .collect();
    let fixed_time = t.elapsed();

    println!(
        "sweep n=4 r=4 m=1,2,4,8 took {:.1}s; fixed-ratio sweep took {:.1}s",
        sweep_time.as_secs_f64(),
        fixed_time.as_secs_f64()
    );
    let now = Instant::now();
    all &= report(1, "linear growth in H/delta", now, sweep.clone().and_then(|s| growth(&s)));
    all &= report(2, "h-independence at H/delta = 4", now, fixed.clone().and_then(|f| h_independence(&f)));
    all &= report(3, "lambda_max bounded", now, sweep.clone().and_then(|s| lambda_max_bounded(&s)));
    all &= report(4, "single subdomain is exact", Instant::now(), identity_case());
    all &= report(5, "Lanczos matches dense oracle", Instant::now(), oracle_agreement());
    all &= report(6, "Galerkin nesting", Instant::now(), galerkin());
    all &= report(7, "discrete Helmholtz decomposition", Instant::now(), helmholtz());
    all &= report(8, "curl/div rotation isomorphism", Instant::now(), rotation_isomorphism());
    all &= report(9, "partition of unity", Instant::now(), partition_of_unity());
    let records: Result<Vec<SweepRecord>, String> = match (sweep, fixed) {
        (Ok(mut s), Ok(f)) => {
            s.extend(f);
            Ok(s)
        }
        (Err(e), _) | (_, Err(e)) => Err(e),
    };
    all &= report(10, "PCG iterations vs kappa", Instant::now(), records.and_then(|r| pcg_consistency(&r, opts.tol)));

    println!("{}", if all { "acceptance: all criteria passed" } else { "acceptance: FAILED" });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
