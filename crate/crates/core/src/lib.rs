//! Two-level overlapping additive Schwarz preconditioners for the lowest-order
//! H(curl) and H(div) model problems on the unit square.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: structured coarse triangulations and red refinement
//! * [`spaces`]: ND0 / RT0 / P1 DOF maps, interpolation and coarse-to-fine embeddings
//! * [`assembly`]: sparse matrices of the bilinear forms and the discrete Helmholtz split
//! * [`schwarz`]: overlapping subdomains, partition of unity and the preconditioner
//! * [`krylov`]: PCG, Lanczos eigenvalue estimates and a dense spectral oracle
//! * [`lab`]: parameter sweeps, model fits, CSV output and the invariant suite

#![allow(clippy::needless_range_loop)]

pub mod assembly;
pub mod cholesky;
pub mod error;
pub mod krylov;
pub mod lab;
pub mod mesh;
pub mod schwarz;
pub mod spaces;
pub mod sparse;

pub use error::{Error, Result};
pub use krylov::{dense_spectrum, lanczos_extremes, pcg, Preconditioner, SolveReport};
pub use mesh::{build_coarse, build_refined, refine, Mesh};
pub use schwarz::{Decomposition, PartitionOfUnity, SchwarzOptions, SchwarzPreconditioner};
pub use spaces::{build_embedding, build_space, DofSpace, EmbeddingMatrix, SpaceKind};
pub use sparse::{CsrMatrix, SparseSymMatrix};
