//! Parameter sweeps over `(n, r, m)`, growth-model fits, CSV records and the
//! invariant suite behind `ddschwarz verify`.

mod fit;
mod problem;
mod records;
mod sweep;
pub mod verify;

pub use fit::{fit_models, fit_points, FitResult, GroupKey};
pub use problem::{Form, Problem};
pub use records::{read_records, write_records, SweepRecord, CSV_COLUMNS};
pub use sweep::{run_problem, run_single, run_sweep, EigChoice, RunOptions, SweepConfig};
