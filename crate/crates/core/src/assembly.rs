//! Assembly of the bilinear forms on free DOFs.
//!
//! * `a_curl(w, v) = ∫ curl w curl v + w·v` on ND0
//! * `a_div(w, v)  = ∫ div w div v + w·v` on RT0
//! * `∫ ∇p·∇q` on P1
//!
//! Essential boundary conditions are imposed by dropping constrained DOFs.

use crate::cholesky::EnvelopeCholesky;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::spaces::{discrete_gradient, edge_basis, edge_basis_derivative, CellGeometry, DofSpace, SpaceKind};
use crate::sparse::{dot, norm2, CsrMatrix, SparseSymMatrix};

pub type ElementMatrix = [[f64; 3]; 3];

/// Edge-midpoint rule: exact for quadratics on triangles.
const MIDPOINTS: [[f64; 3]; 3] = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

/// Derivative (curl or div) and mass parts of the element matrix of an edge space,
/// indexed by local edge.
pub fn edge_element_matrices(kind: SpaceKind, mesh: &Mesh, c: usize) -> (ElementMatrix, ElementMatrix) {
    let geo = CellGeometry::new(mesh, c);
    let deriv: [f64; 3] = std::array::from_fn(|k| edge_basis_derivative(mesh, &geo, c, k));
    let mut stiff = [[0.0; 3]; 3];
    let mut mass = [[0.0; 3]; 3];
    for l in MIDPOINTS {
        let phi: [[f64; 2]; 3] = std::array::from_fn(|k| edge_basis(kind, mesh, &geo, c, k, l));
        for i in 0..3 {
            for j in 0..3 {
                mass[i][j] += geo.area / 3.0 * (phi[i][0] * phi[j][0] + phi[i][1] * phi[j][1]);
            }
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            stiff[i][j] = geo.area * deriv[i] * deriv[j];
        }
    }
    (stiff, mass)
}

pub fn p1_element_matrix(mesh: &Mesh, c: usize) -> ElementMatrix {
    let geo = CellGeometry::new(mesh, c);
    let g = geo.grad_lambda;
    std::array::from_fn(|i| std::array::from_fn(|j| geo.area * (g[i][0] * g[j][0] + g[i][1] * g[j][1])))
}

fn scatter<F>(space: &DofSpace, entities: F, element: impl Fn(usize) -> ElementMatrix) -> Result<SparseSymMatrix>
where
    F: Fn(usize) -> [usize; 3],
{
    let mesh = &space.mesh;
    let mut trip = Vec::with_capacity(9 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let ke = element(c);
        let dofs = entities(c).map(|d| space.free_index(d));
        for i in 0..3 {
            let Some(gi) = dofs[i] else { continue };
            for j in 0..3 {
                if let Some(gj) = dofs[j] {
                    trip.push((gi, gj, ke[i][j]));
                }
            }
        }
    }
    SparseSymMatrix::from_triplets(space.n_free(), trip)
}

fn cell_edges(mesh: &Mesh, c: usize) -> [usize; 3] {
    mesh.cell_to_edges[c].map(|(e, _)| e)
}

fn assemble_edge_form(space: &DofSpace, with_derivative: bool, with_mass: bool) -> Result<SparseSymMatrix> {
    let mesh = &space.mesh;
    scatter(
        space,
        |c| cell_edges(mesh, c),
        |c| {
            let (s, m) = edge_element_matrices(space.kind, mesh, c);
            std::array::from_fn(|i| {
                std::array::from_fn(|j| {
                    let mut v = 0.0;
                    if with_derivative {
                        v += s[i][j];
                    }
                    if with_mass {
                        v += m[i][j];
                    }
                    v
                })
            })
        },
    )
}

/// Matrix of `a_curl` on the free ND0 DOFs.
pub fn assemble_curl(space: &DofSpace) -> Result<SparseSymMatrix> {
    space.ensure_kind(SpaceKind::Nd0)?;
    assemble_edge_form(space, true, true)
}

/// Matrix of `a_div` on the free RT0 DOFs.
pub fn assemble_div(space: &DofSpace) -> Result<SparseSymMatrix> {
    space.ensure_kind(SpaceKind::Rt0)?;
    assemble_edge_form(space, true, true)
}

/// Matrix of the form for whichever edge space is given.
pub fn assemble_form(space: &DofSpace) -> Result<SparseSymMatrix> {
    match space.kind {
        SpaceKind::Nd0 => assemble_curl(space),
        SpaceKind::Rt0 => assemble_div(space),
        SpaceKind::P1 => assemble_p1_stiffness(space),
    }
}

/// L² mass matrix of an edge space.
pub fn assemble_edge_mass(space: &DofSpace) -> Result<SparseSymMatrix> {
    if !space.kind.is_edge_space() {
        return Err(Error::WrongSpace { expected: SpaceKind::Nd0, found: space.kind });
    }
    assemble_edge_form(space, false, true)
}

pub fn assemble_p1_stiffness(space: &DofSpace) -> Result<SparseSymMatrix> {
    space.ensure_kind(SpaceKind::P1)?;
    let mesh = &space.mesh;
    scatter(space, |c| mesh.cells[c], |c| p1_element_matrix(mesh, c))
}

/// `G = M D`, so that `(Gᵀ u)_p = (u, ∇φ_p)₀` for ND0 coefficients `u`.
pub fn assemble_grad_coupling(p1: &DofSpace, nd: &DofSpace) -> Result<CsrMatrix> {
    let d = discrete_gradient(p1, nd)?;
    let mass = assemble_edge_mass(nd)?;
    mass.csr().matmul(&d)
}

/// Discrete Helmholtz splitting `u = ∇q + w⊥` with `(w⊥, ∇p)₀ = 0` for all P1 `p`.
#[derive(Debug, Clone)]
pub struct HelmholtzSplitter {
    pub gradient: CsrMatrix,
    pub coupling: CsrMatrix,
    pub stiffness: SparseSymMatrix,
    factor: EnvelopeCholesky,
}

impl HelmholtzSplitter {
    pub fn new(p1: &DofSpace, nd: &DofSpace) -> Result<Self> {
        let gradient = discrete_gradient(p1, nd)?;
        let coupling = assemble_edge_mass(nd)?.csr().matmul(&gradient)?;
        let stiffness = assemble_p1_stiffness(p1)?;
        let factor = EnvelopeCholesky::factor(&stiffness)?;
        Ok(Self { gradient, coupling, stiffness, factor })
    }

    /// Returns `(q, w⊥)`.
    pub fn split(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if u.len() != self.gradient.nrows {
            return Err(Error::Dimension { expected: self.gradient.nrows, found: u.len() });
        }
        let rhs = self.coupling.tr_matvec(u);
        let mut q = self.factor.solve(&rhs);
        // one step of iterative refinement
        let kq = self.stiffness.matvec(&q);
        let res: Vec<f64> = rhs.iter().zip(&kq).map(|(b, a)| b - a).collect();
        let rn = norm2(&rhs);
        if rn > 0.0 && norm2(&res) > 1e-15 * rn {
            let corr = self.factor.solve(&res);
            q.iter_mut().zip(corr).for_each(|(a, c)| *a += c);
        }
        let grad_q = self.gradient.matvec(&q);
        let w = u.iter().zip(&grad_q).map(|(a, b)| a - b).collect();
        Ok((q, w))
    }

    /// `‖Gᵀ w‖∞`: zero for discretely divergence-free `w`.
    pub fn divergence_residual(&self, w: &[f64]) -> f64 {
        self.coupling.tr_matvec(w).iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// `xᵀ A y`.
pub fn energy(a: &SparseSymMatrix, x: &[f64], y: &[f64]) -> f64 {
    dot(x, &a.matvec(y))
}
