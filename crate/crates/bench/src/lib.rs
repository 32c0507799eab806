//! Fixtures shared by the criterion benches.

use ddschwarz_core::lab::{Form, Problem};
use ddschwarz_core::{Decomposition, SchwarzOptions, SchwarzPreconditioner};

pub struct Fixture {
    pub problem: Problem,
    pub decomposition: Decomposition,
    pub preconditioner: SchwarzPreconditioner,
}

/// Assembled two-level setup for `(form, n, r, m)`.
pub fn fixture(form: Form, n: usize, r: u32, m: usize) -> Fixture {
    let problem = Problem::build(form, n, r).expect("valid problem");
    let decomposition = problem.decomposition(m).expect("valid overlap");
    let preconditioner = problem.preconditioner(&decomposition, SchwarzOptions::default()).expect("factorizable");
    Fixture { problem, decomposition, preconditioner }
}
