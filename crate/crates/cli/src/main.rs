use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddschwarz_core::lab::verify::{verify, Level};
use ddschwarz_core::lab::{
    fit_models, run_problem, run_sweep, write_records, EigChoice, Form, GroupKey, Problem, RunOptions, SweepConfig,
};
use ddschwarz_core::Error;

#[derive(Parser)]
#[command(name = "ddschwarz", version, about = "Two-level overlapping Schwarz lab for H(curl) and H(div)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SolverArgs {
    /// Eigenvalue estimate: auto picks dense up to 4000 unknowns.
    #[arg(long, default_value = "auto")]
    eig: EigChoice,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 5000)]
    max_iter: usize,
    /// Drop the coarse correction (one-level method).
    #[arg(long)]
    no_coarse: bool,
}

impl SolverArgs {
    fn options(&self) -> RunOptions {
        RunOptions {
            eig_method: self.eig,
            tol: self.tol,
            seed: self.seed,
            use_coarse: !self.no_coarse,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every (n, r, m) combination and write CSV records.
    Sweep {
        #[arg(long)]
        form: Form,
        #[arg(long, value_delimiter = ',', required = true)]
        coarse: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        refine: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true)]
        overlap: Vec<usize>,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write linear and quadratic fits per (n, r) group as JSON.
        #[arg(long)]
        fit: Option<PathBuf>,
    },
    /// Run the invariant suite and print a JSON report.
    Verify {
        #[arg(long, default_value = "fast")]
        level: Level,
    },
    /// Measure a single configuration and print one CSV record.
    Solve {
        #[arg(long)]
        form: Form,
        #[arg(long)]
        coarse: usize,
        #[arg(long)]
        refine: u32,
        #[arg(long)]
        overlap: usize,
        #[command(flatten)]
        solver: SolverArgs,
        /// Write the fine-level matrix as `i j value` lines (lower triangle).
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
        #[arg(long)]
        dump_mesh: Option<PathBuf>,
        /// Write per-subdomain DOF counts and the coloring as JSON.
        #[arg(long)]
        dump_decomposition: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::Parse(_) | Error::EmptyGrid | Error::Unrefined(_) => 2,
        _ => 1,
    }
}

fn write_json(path: &PathBuf, value: &serde_json::Value) -> ddschwarz_core::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Io(e.into()))?;
    writeln!(w)?;
    Ok(())
}

fn sweep(cfg: SweepConfig, fit: Option<PathBuf>) -> ddschwarz_core::Result<()> {
    let records = run_sweep(&cfg)?;
    for r in records.iter().filter(|r| !r.is_ok()) {
        log::warn!(
            "n={} r={} m={} failed: {}",
            r.n_coarse,
            r.refine,
            r.overlap_layers,
            r.error.as_deref().unwrap_or("")
        );
    }
    let out = cfg.output.as_ref().expect("sweep output is required");
    write_records(BufWriter::new(File::create(out)?), &records)?;
    if let Some(path) = fit {
        let fits: serde_json::Map<String, serde_json::Value> =
            fit_models(&records, &[GroupKey::NCoarse, GroupKey::Refine])
                .into_iter()
                .map(|(label, res)| {
                    let v = match res {
                        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
                        Err(e) => serde_json::json!({ "error": e.to_string() }),
                    };
                    (label, v)
                })
                .collect();
        write_json(&path, &serde_json::Value::Object(fits))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    form: Form,
    n: usize,
    r: u32,
    m: usize,
    opts: RunOptions,
    dump_matrix: Option<PathBuf>,
    dump_mesh: Option<PathBuf>,
    dump_decomposition: Option<PathBuf>,
) -> ddschwarz_core::Result<()> {
    if m == 0 {
        return Err(Error::Config("overlap must be at least one layer".into()));
    }
    let problem = Problem::build(form, n, r)?;
    if let Some(path) = dump_matrix {
        problem.a_fine.write_coordinate(BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = dump_mesh {
        write_json(&path, &problem.fine.mesh.to_json())?;
    }
    if let Some(path) = dump_decomposition {
        write_json(&path, &problem.decomposition(m)?.summary_json())?;
    }
    let record = run_problem(&problem, m, &opts)?;
    write_records(io::stdout().lock(), &[record])?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sweep { form, coarse, refine, overlap, solver, out, fit } => {
            let cfg = SweepConfig {
                form,
                n_coarse: coarse,
                refine,
                overlap_layers: overlap,
                options: solver.options(),
                output: Some(out),
            };
            sweep(cfg, fit)
        }
        Command::Verify { level } => {
            let report = verify(level);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            return if report.passed { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
        Command::Solve { form, coarse, refine, overlap, solver, dump_matrix, dump_mesh, dump_decomposition } => {
            solve(form, coarse, refine, overlap, solver.options(), dump_matrix, dump_mesh, dump_decomposition)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
