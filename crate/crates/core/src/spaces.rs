//! Lowest-order Nédélec, Raviart-Thomas and continuous P1 spaces.
//!
//! Edge DOFs use the canonical low-to-high orientation. On a cell the Whitney
//! function of local edge `(i, j)` is `λ_i ∇λ_j − λ_j ∇λ_i`, multiplied by the
//! sign stored in `Mesh::cell_to_edges`. Raviart-Thomas functions are the
//! Whitney functions rotated by −90°, so the face DOF of a field equals the
//! edge DOF of its +90° rotation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{barycentric, Mesh, Point};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpaceKind {
    Nd0,
    Rt0,
    P1,
}

impl SpaceKind {
    pub fn is_edge_space(self) -> bool {
        matches!(self, SpaceKind::Nd0 | SpaceKind::Rt0)
    }
}

/// DOF map over a mesh. Entity `k` (edge or vertex) owns DOF `k`.
#[derive(Debug, Clone)]
pub struct DofSpace {
    pub kind: SpaceKind,
    pub mesh: Arc<Mesh>,
    pub free_dofs: Vec<usize>,
    free_index: Vec<Option<usize>>,
}

impl DofSpace {
    pub fn n_total(&self) -> usize {
        self.free_index.len()
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    /// Position of `dof` in `free_dofs`, if unconstrained.
    pub fn free_index(&self, dof: usize) -> Option<usize> {
        self.free_index[dof]
    }

    pub fn entity_to_dof(&self, entity: usize) -> usize {
        entity
    }

    pub fn ensure_kind(&self, expected: SpaceKind) -> Result<()> {
        if self.kind == expected {
            Ok(())
        } else {
            Err(Error::WrongSpace { expected, found: self.kind })
        }
    }

    /// Expands free coefficients to all DOFs, with zeros on the boundary.
    pub fn extend(&self, free: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.n_total()];
        for (k, &d) in self.free_dofs.iter().enumerate() {
            full[d] = free[k];
        }
        full
    }
}

pub fn build_space(mesh: Arc<Mesh>, kind: SpaceKind) -> DofSpace {
    let constrained: &[bool] = match kind {
        SpaceKind::Nd0 | SpaceKind::Rt0 => &mesh.boundary_edge,
        SpaceKind::P1 => &mesh.boundary_vertex,
    };
    let mut free_index = vec![None; constrained.len()];
    let mut free_dofs = Vec::new();
    for (d, &bnd) in constrained.iter().enumerate() {
        if !bnd {
            free_index[d] = Some(free_dofs.len());
            free_dofs.push(d);
        }
    }
    DofSpace { kind, mesh, free_dofs, free_index }
}

/// Affine data of one cell.
#[derive(Debug, Clone, Copy)]
pub struct CellGeometry {
    pub area: f64,
    pub grad_lambda: [[f64; 2]; 3],
}

impl CellGeometry {
    pub fn new(mesh: &Mesh, c: usize) -> Self {
        let p = mesh.cell_points(c);
        let area = mesh.signed_area(c);
        let mut grad_lambda = [[0.0; 2]; 3];
        for (i, g) in grad_lambda.iter_mut().enumerate() {
            let (a, b) = (p[(i + 1) % 3], p[(i + 2) % 3]);
            *g = [(a[1] - b[1]) / (2.0 * area), (b[0] - a[0]) / (2.0 * area)];
        }
        Self { area, grad_lambda }
    }

    /// Locally oriented Whitney function of local edge `k` at barycentric point `l`.
    pub fn whitney(&self, k: usize, l: [f64; 3]) -> [f64; 2] {
        let (i, j) = (k, (k + 1) % 3);
        let (gi, gj) = (self.grad_lambda[i], self.grad_lambda[j]);
        [l[i] * gj[0] - l[j] * gi[0], l[i] * gj[1] - l[j] * gi[1]]
    }

    /// Curl of every locally oriented Whitney function on a counter-clockwise cell.
    pub fn whitney_curl(&self) -> f64 {
        1.0 / self.area
    }
}

/// Rotation by −90°: `(x, y) ↦ (y, −x)`.
#[inline]
pub fn rot_minus90(v: [f64; 2]) -> [f64; 2] {
    [v[1], -v[0]]
}

/// Global basis function of local edge `k` of cell `c` (ND0 or RT0).
pub fn edge_basis(kind: SpaceKind, mesh: &Mesh, geo: &CellGeometry, c: usize, k: usize, l: [f64; 3]) -> [f64; 2] {
    let s = f64::from(mesh.cell_to_edges[c][k].1);
    let w = geo.whitney(k, l);
    let v = [s * w[0], s * w[1]];
    match kind {
        SpaceKind::Rt0 => rot_minus90(v),
        _ => v,
    }
}

/// Constant curl (ND0) or divergence (RT0) of the basis function of local edge `k`.
pub fn edge_basis_derivative(mesh: &Mesh, geo: &CellGeometry, c: usize, k: usize) -> f64 {
    f64::from(mesh.cell_to_edges[c][k].1) * geo.whitney_curl()
}

/// Point evaluation of an edge-space function from free coefficients.
pub fn eval_edge_field(space: &DofSpace, full: &[f64], c: usize, p: Point) -> [f64; 2] {
    let mesh = &space.mesh;
    let geo = CellGeometry::new(mesh, c);
    let l = barycentric(mesh, c, p);
    let mut out = [0.0; 2];
    for k in 0..3 {
        let e = mesh.cell_to_edges[c][k].0;
        let b = edge_basis(space.kind, mesh, &geo, c, k, l);
        out[0] += full[e] * b[0];
        out[1] += full[e] * b[1];
    }
    out
}

/// Point evaluation of a P1 function given all nodal values.
pub fn eval_nodal(mesh: &Mesh, full: &[f64], c: usize, p: Point) -> f64 {
    let l = barycentric(mesh, c, p);
    mesh.cells[c].iter().zip(l).map(|(&v, lv)| full[v] * lv).sum()
}

/// Per-cell curl (ND0) or divergence (RT0) of a function given by free coefficients.
pub fn cellwise_derivative(space: &DofSpace, free: &[f64]) -> Vec<f64> {
    let full = space.extend(free);
    let mesh = &space.mesh;
    (0..mesh.n_cells())
        .map(|c| {
            let geo = CellGeometry::new(mesh, c);
            (0..3).map(|k| full[mesh.cell_to_edges[c][k].0] * edge_basis_derivative(mesh, &geo, c, k)).sum()
        })
        .collect()
}

const GAUSS3: [(f64, f64); 3] =
    [(0.112_701_665_379_258_31, 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.887_298_334_620_741_7, 5.0 / 18.0)];

fn edge_moments<F>(space: &DofSpace, field: F, project: fn([f64; 2]) -> [f64; 2]) -> Vec<f64>
where
    F: Fn(Point) -> [f64; 2],
{
    let mesh = &space.mesh;
    space
        .free_dofs
        .iter()
        .map(|&e| {
            let [a, b] = mesh.edges[e];
            let (pa, pb) = (mesh.vertices[a], mesh.vertices[b]);
            let d = project([pb[0] - pa[0], pb[1] - pa[1]]);
            GAUSS3
                .iter()
                .map(|&(t, w)| {
                    let f = field([pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])]);
                    w * (f[0] * d[0] + f[1] * d[1])
                })
                .sum()
        })
        .collect()
}

/// Tangential line integrals along each free edge, low to high.
pub fn interpolate_edge<F: Fn(Point) -> [f64; 2]>(space: &DofSpace, field: F) -> Result<Vec<f64>> {
    space.ensure_kind(SpaceKind::Nd0)?;
    Ok(edge_moments(space, field, |d| d))
}

/// Normal fluxes through each free edge; the normal is the tangent rotated by −90°.
pub fn interpolate_face<F: Fn(Point) -> [f64; 2]>(space: &DofSpace, field: F) -> Result<Vec<f64>> {
    space.ensure_kind(SpaceKind::Rt0)?;
    Ok(edge_moments(space, field, rot_minus90))
}

/// Nodal values at the free vertices.
pub fn interpolate_nodal<F: Fn(Point) -> f64>(space: &DofSpace, field: F) -> Result<Vec<f64>> {
    space.ensure_kind(SpaceKind::P1)?;
    Ok(space.free_dofs.iter().map(|&v| field(space.mesh.vertices[v])).collect())
}

/// Coefficient map `p ↦ ∇p` from free P1 values to free ND0 coefficients.
pub fn discrete_gradient(p1: &DofSpace, nd: &DofSpace) -> Result<CsrMatrix> {
    p1.ensure_kind(SpaceKind::P1)?;
    nd.ensure_kind(SpaceKind::Nd0)?;
    if !Arc::ptr_eq(&p1.mesh, &nd.mesh) {
        return Err(Error::MeshMismatch);
    }
    let mut trip = Vec::new();
    for (row, &e) in nd.free_dofs.iter().enumerate() {
        let [a, b] = nd.mesh.edges[e];
        if let Some(j) = p1.free_index(b) {
            trip.push((row, j, 1.0));
        }
        if let Some(j) = p1.free_index(a) {
            trip.push((row, j, -1.0));
        }
    }
    Ok(CsrMatrix::from_triplets(nd.n_free(), p1.n_free(), trip))
}

/// Prolongation from coarse free DOFs to fine free DOFs.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix {
    pub kind: SpaceKind,
    pub matrix: CsrMatrix,
}

impl EmbeddingMatrix {
    pub fn n_coarse(&self) -> usize {
        self.matrix.ncols
    }

    pub fn n_fine(&self) -> usize {
        self.matrix.nrows
    }

    pub fn prolong(&self, coarse: &[f64]) -> Vec<f64> {
        self.matrix.matvec(coarse)
    }

    pub fn restrict(&self, fine: &[f64]) -> Vec<f64> {
        self.matrix.tr_matvec(fine)
    }
}

fn check_nested(coarse: &Mesh, fine: &Mesh) -> Result<()> {
    if coarse.level != 0 {
        return Err(Error::NotNested("coarse mesh must be level 0".into()));
    }
    if coarse.n_coarse != fine.n_coarse || fine.n_vertices() < coarse.n_vertices() {
        return Err(Error::NotNested("different coarse grids".into()));
    }
    let same = coarse.vertices.iter().zip(&fine.vertices).all(|(a, b)| a == b);
    if !same {
        return Err(Error::NotNested("coarse vertices not preserved".into()));
    }
    Ok(())
}

/// Columns are the fine interpolants of the coarse basis functions.
pub fn build_embedding(coarse: &DofSpace, fine: &DofSpace) -> Result<EmbeddingMatrix> {
    if coarse.kind != fine.kind {
        return Err(Error::KindMismatch(coarse.kind, fine.kind));
    }
    let (cm, fm) = (&*coarse.mesh, &*fine.mesh);
    check_nested(cm, fm)?;
    let mut trip = Vec::new();
    match coarse.kind {
        SpaceKind::P1 => {
            let vc = fm.vertex_cells();
            for (row, &v) in fine.free_dofs.iter().enumerate() {
                let parent = fm.parent_cell[vc[v][0]];
                let l = barycentric(cm, parent, fm.vertices[v]);
                for (k, &cv) in cm.cells[parent].iter().enumerate() {
                    if let Some(col) = coarse.free_index(cv) {
                        if l[k] != 0.0 {
                            trip.push((row, col, l[k]));
                        }
                    }
                }
            }
        }
        kind => {
            for (row, &e) in fine.free_dofs.iter().enumerate() {
                let parent = fm.parent_cell[fm.edge_cells[e][0]];
                let geo = CellGeometry::new(cm, parent);
                let [a, b] = fm.edges[e];
                let (pa, pb) = (fm.vertices[a], fm.vertices[b]);
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                let t = [pb[0] - pa[0], pb[1] - pa[1]];
                let d = if kind == SpaceKind::Rt0 { rot_minus90(t) } else { t };
                let l = barycentric(cm, parent, mid);
                for k in 0..3 {
                    let ce = cm.cell_to_edges[parent][k].0;
                    if let Some(col) = coarse.free_index(ce) {
                        let phi = edge_basis(kind, cm, &geo, parent, k, l);
                        let val = phi[0] * d[0] + phi[1] * d[1];
                        if val != 0.0 {
                            trip.push((row, col, val));
                        }
                    }
                }
            }
        }
    }
    Ok(EmbeddingMatrix { kind: coarse.kind, matrix: CsrMatrix::from_triplets(fine.n_free(), coarse.n_free(), trip) })
}
