//! Overlapping subdomains and the two-level additive Schwarz preconditioner
//!
//! ```text
//! B⁻¹ r = I_H A_H⁻¹ I_Hᵀ r + Σ_i E_i A_i⁻¹ E_iᵀ r
//! ```
//!
//! Subdomain `i` starts as the fine cells of coarse cell `K_i` and grows by `m`
//! rounds of vertex-adjacency expansion. Its space `V_i` holds the free edge DOFs
//! whose incident cells all lie in the enlarged subdomain, so tangential (ND0) or
//! normal (RT0) traces vanish on the artificial boundary.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;
use serde_json::json;

use crate::cholesky::EnvelopeCholesky;
use crate::error::{Error, Result};
use crate::krylov::Preconditioner;
use crate::mesh::Mesh;
use crate::spaces::{CellGeometry, EmbeddingMatrix};
use crate::sparse::SparseSymMatrix;

#[derive(Debug, Clone)]
pub struct Decomposition {
    pub mesh: Arc<Mesh>,
    pub n_sub: usize,
    /// Sorted fine cells of each enlarged subdomain.
    pub sub_cells: Vec<Vec<usize>>,
    /// Sorted free-edge indices (positions in the edge space's free list).
    pub sub_dofs: Vec<Vec<usize>>,
    pub overlap_layers: usize,
    pub delta: f64,
    pub coloring: Vec<usize>,
    pub n_colors: usize,
    pub warnings: Vec<String>,
}

/// Free-edge index of every edge, `None` on the boundary. Matches `DofSpace::free_index`
/// for ND0 and RT0.
fn free_edge_index(mesh: &Mesh) -> Vec<Option<usize>> {
    let mut next = 0;
    mesh.boundary_edge
        .iter()
        .map(|&b| {
            if b {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect()
}

fn interior_dofs(mesh: &Mesh, free: &[Option<usize>], inside: &[bool]) -> Vec<usize> {
    let mut dofs: Vec<usize> = (0..mesh.n_edges())
        .filter(|&e| mesh.edge_cells[e].iter().all(|&c| inside[c]))
        .filter_map(|e| free[e])
        .collect();
    dofs.sort_unstable();
    dofs
}

/// Greedy coloring in index order; subdomains sharing a fine cell get different colors.
fn color_subdomains(n_cells: usize, sub_cells: &[Vec<usize>]) -> (Vec<usize>, usize) {
    let mut owners: Vec<Vec<usize>> = vec![Vec::new(); n_cells];
    for (i, cells) in sub_cells.iter().enumerate() {
        for &c in cells {
            owners[c].push(i);
        }
    }
    let mut coloring = vec![usize::MAX; sub_cells.len()];
    let mut n_colors = 0;
    for (i, cells) in sub_cells.iter().enumerate() {
        let mut taken = vec![false; n_colors + 1];
        for &c in cells {
            for &j in &owners[c] {
                if j < i {
                    taken[coloring[j]] = true;
                }
            }
        }
        let color = taken.iter().position(|&t| !t).unwrap();
        coloring[i] = color;
        n_colors = n_colors.max(color + 1);
    }
    (coloring, n_colors)
}

impl Decomposition {
    /// One subdomain per coarse cell, enlarged by `overlap_layers` rings of fine cells.
    pub fn build(mesh: Arc<Mesh>, overlap_layers: usize) -> Result<Self> {
        if overlap_layers >= 1 && mesh.level == 0 {
            return Err(Error::Unrefined(overlap_layers));
        }
        let n_sub = 2 * mesh.n_coarse * mesh.n_coarse;
        let vertex_cells = mesh.vertex_cells();
        let free = free_edge_index(&mesh);
        let mut sub_cells = Vec::with_capacity(n_sub);
        let mut sub_dofs = Vec::with_capacity(n_sub);
        let mut warnings = Vec::new();
        let mut inside = vec![false; mesh.n_cells()];
        for i in 0..n_sub {
            inside.iter_mut().for_each(|b| *b = false);
            let mut cells: Vec<usize> = (0..mesh.n_cells()).filter(|&c| mesh.parent_cell[c] == i).collect();
            for &c in &cells {
                inside[c] = true;
            }
            for _ in 0..overlap_layers {
                let mut grown = Vec::new();
                for &c in &cells {
                    for &v in &mesh.cells[c] {
                        for &d in &vertex_cells[v] {
                            if !inside[d] {
                                inside[d] = true;
                                grown.push(d);
                            }
                        }
                    }
                }
                cells.extend(grown);
            }
            cells.sort_unstable();
            if cells.len() == mesh.n_cells() {
                warnings.push(format!("subdomain {i} covers the whole domain"));
            }
            sub_dofs.push(interior_dofs(&mesh, &free, &inside));
            sub_cells.push(cells);
        }
        let (coloring, n_colors) = color_subdomains(mesh.n_cells(), &sub_cells);
        let delta = overlap_layers as f64 * mesh.h_nominal();
        Ok(Self { mesh, n_sub, sub_cells, sub_dofs, overlap_layers, delta, coloring, n_colors, warnings })
    }

    /// A single subdomain equal to the whole domain.
    pub fn single(mesh: Arc<Mesh>) -> Self {
        let free = free_edge_index(&mesh);
        let n_free = free.iter().flatten().count();
        Self {
            n_sub: 1,
            sub_cells: vec![(0..mesh.n_cells()).collect()],
            sub_dofs: vec![(0..n_free).collect()],
            overlap_layers: 0,
            delta: f64::INFINITY,
            coloring: vec![0],
            n_colors: 1,
            warnings: vec!["subdomain 0 covers the whole domain".into()],
            mesh,
        }
    }

    /// Principal submatrix of `a` on the DOFs of subdomain `i`.
    pub fn local_matrix(&self, a: &SparseSymMatrix, i: usize) -> SparseSymMatrix {
        a.principal_submatrix(&self.sub_dofs[i])
    }

    /// Free DOFs not contained in any subdomain.
    pub fn uncovered_dofs(&self, n_free: usize) -> Vec<usize> {
        let mut hit = vec![false; n_free];
        for dofs in &self.sub_dofs {
            for &d in dofs {
                hit[d] = true;
            }
        }
        (0..n_free).filter(|&d| !hit[d]).collect()
    }

    /// Pairs of same-colored subdomains that share a DOF or a cell.
    pub fn coloring_conflicts(&self) -> Vec<(usize, usize)> {
        let intersects = |a: &[usize], b: &[usize]| {
            let (mut i, mut j) = (0, 0);
            while i < a.len() && j < b.len() {
                match a[i].cmp(&b[j]) {
                    std::cmp::Ordering::Less => i += 1,
                    std::cmp::Ordering::Greater => j += 1,
                    std::cmp::Ordering::Equal => return true,
                }
            }
            false
        };
        let mut out = Vec::new();
        for i in 0..self.n_sub {
            for j in i + 1..self.n_sub {
                if self.coloring[i] == self.coloring[j]
                    && (intersects(&self.sub_dofs[i], &self.sub_dofs[j])
                        || intersects(&self.sub_cells[i], &self.sub_cells[j]))
                {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        json!({
            "n_sub": self.n_sub,
            "overlap_layers": self.overlap_layers,
            "delta": self.delta,
            "n_colors": self.n_colors,
            "coloring": self.coloring,
            "sub_cell_counts": self.sub_cells.iter().map(Vec::len).collect::<Vec<_>>(),
            "sub_dof_counts": self.sub_dofs.iter().map(Vec::len).collect::<Vec<_>>(),
            "warnings": self.warnings,
        })
    }
}

/// Piecewise linear partition of unity subordinate to the enlarged subdomains.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity {
    /// `theta[i][v]` is the nodal value of `θ_i` at fine vertex `v`.
    pub theta: Vec<Vec<f64>>,
}

impl PartitionOfUnity {
    /// Raw weight `min(d_i(v) / m, 1)` where `d_i` is the hop distance inside `Ω_i′`
    /// to its artificial boundary, normalized to sum to one.
    pub fn build(dec: &Decomposition) -> Result<Self> {
        let m = dec.overlap_layers;
        if m == 0 {
            return Err(Error::Config("partition of unity needs at least one overlap layer".into()));
        }
        let mesh = &*dec.mesh;
        let nv = mesh.n_vertices();
        let vertex_cells = mesh.vertex_cells();
        let raw: Vec<Vec<f64>> = dec
            .sub_cells
            .par_iter()
            .map(|cells| {
                let mut inside_cell = vec![false; mesh.n_cells()];
                for &c in cells {
                    inside_cell[c] = true;
                }
                let mut in_sub = vec![false; nv];
                let mut nbrs: Vec<Vec<usize>> = vec![Vec::new(); nv];
                for &c in cells {
                    let t = mesh.cells[c];
                    for k in 0..3 {
                        in_sub[t[k]] = true;
                        nbrs[t[k]].push(t[(k + 1) % 3]);
                        nbrs[t[k]].push(t[(k + 2) % 3]);
                    }
                }
                let mut dist = vec![usize::MAX; nv];
                let mut queue = VecDeque::new();
                for v in 0..nv {
                    if in_sub[v] && vertex_cells[v].iter().any(|&c| !inside_cell[c]) {
                        dist[v] = 0;
                        queue.push_back(v);
                    }
                }
                while let Some(v) = queue.pop_front() {
                    for &w in &nbrs[v] {
                        if dist[w] == usize::MAX {
                            dist[w] = dist[v] + 1;
                            queue.push_back(w);
                        }
                    }
                }
                (0..nv)
                    .map(|v| {
                        if !in_sub[v] {
                            0.0
                        } else if dist[v] == usize::MAX {
                            1.0
                        } else {
                            (dist[v] as f64 / m as f64).min(1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let mut theta = raw;
        for v in 0..nv {
            let s: f64 = theta.iter().map(|t| t[v]).sum();
            if s <= 0.0 {
                return Err(Error::UncoveredVertex(v));
            }
            for t in theta.iter_mut() {
                t[v] /= s;
            }
        }
        Ok(Self { theta })
    }

    /// Largest deviation of `Σ_i θ_i` from one over the vertices.
    pub fn sum_defect(&self) -> f64 {
        let nv = self.theta.first().map_or(0, Vec::len);
        (0..nv).map(|v| (self.theta.iter().map(|t| t[v]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// `max_i max_τ |∇θ_i|_τ`.
    pub fn max_gradient(&self, mesh: &Mesh) -> f64 {
        let geos: Vec<CellGeometry> = (0..mesh.n_cells()).map(|c| CellGeometry::new(mesh, c)).collect();
        self.theta
            .par_iter()
            .map(|t| {
                (0..mesh.n_cells())
                    .map(|c| {
                        let g = geos[c].grad_lambda;
                        let vs = mesh.cells[c];
                        let gx: f64 = (0..3).map(|k| t[vs[k]] * g[k][0]).sum();
                        let gy: f64 = (0..3).map(|k| t[vs[k]] * g[k][1]).sum();
                        gx.hypot(gy)
                    })
                    .fold(0.0, f64::max)
            })
            .reduce(|| 0.0, f64::max)
    }

    /// Vertices where some `θ_i > 0` lies outside the closure of `Ω_i′`.
    pub fn support_violations(&self, dec: &Decomposition) -> usize {
        let mesh = &*dec.mesh;
        let mut count = 0;
        for (i, t) in self.theta.iter().enumerate() {
            let mut closure = vec![false; mesh.n_vertices()];
            for &c in &dec.sub_cells[i] {
                for &v in &mesh.cells[c] {
                    closure[v] = true;
                }
            }
            count += t.iter().enumerate().filter(|&(v, &x)| x > 0.0 && !closure[v]).count();
        }
        count
    }

    /// `0 ≤ θ_i ≤ 1` everywhere.
    pub fn in_range(&self) -> bool {
        self.theta.iter().flatten().all(|&x| (0.0..=1.0).contains(&x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchwarzOptions {
    pub use_coarse: bool,
    pub use_locals: bool,
}

impl Default for SchwarzOptions {
    fn default() -> Self {
        Self { use_coarse: true, use_locals: true }
    }
}

#[derive(Debug, Clone)]
struct CoarseSolve {
    embedding: EmbeddingMatrix,
    factor: EnvelopeCholesky,
}

#[derive(Debug, Clone)]
struct LocalSolve {
    dofs: Vec<usize>,
    factor: EnvelopeCholesky,
}

/// Additive two-level Schwarz preconditioner with exact coarse and local solves.
#[derive(Debug, Clone)]
pub struct SchwarzPreconditioner {
    n: usize,
    coarse: Option<CoarseSolve>,
    locals: Vec<LocalSolve>,
    pub options: SchwarzOptions,
}

impl SchwarzPreconditioner {
    /// `coarse` is the pair `(A_H, I_H)`; it may be `None` when `use_coarse` is off.
    pub fn build(
        a_fine: &SparseSymMatrix,
        coarse: Option<(&SparseSymMatrix, &EmbeddingMatrix)>,
        dec: &Decomposition,
        options: SchwarzOptions,
    ) -> Result<Self> {
        let n = a_fine.dim();
        let coarse = match (options.use_coarse, coarse) {
            (false, _) => None,
            (true, None) => return Err(Error::Config("coarse level requested without A_H".into())),
            (true, Some((a_h, emb))) => {
                if emb.n_fine() != n {
                    return Err(Error::Dimension { expected: n, found: emb.n_fine() });
                }
                if emb.n_coarse() != a_h.dim() {
                    return Err(Error::Dimension { expected: a_h.dim(), found: emb.n_coarse() });
                }
                Some(CoarseSolve { embedding: emb.clone(), factor: EnvelopeCholesky::factor(a_h)? })
            }
        };
        let locals = if options.use_locals {
            (0..dec.n_sub)
                .into_par_iter()
                .filter(|&i| !dec.sub_dofs[i].is_empty())
                .map(|i| {
                    if let Some(&last) = dec.sub_dofs[i].last() {
                        if last >= n {
                            return Err(Error::Dimension { expected: n, found: last + 1 });
                        }
                    }
                    let factor = EnvelopeCholesky::factor(&dec.local_matrix(a_fine, i))?;
                    Ok(LocalSolve { dofs: dec.sub_dofs[i].clone(), factor })
                })
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok(Self { n, coarse, locals, options })
    }

    pub fn n_locals(&self) -> usize {
        self.locals.len()
    }
}

impl Preconditioner for SchwarzPreconditioner {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply_into(&self, r: &[f64], z: &mut [f64]) {
        assert_eq!(r.len(), self.n);
        z.iter_mut().for_each(|v| *v = 0.0);
        if let Some(c) = &self.coarse {
            let mut rc = c.embedding.restrict(r);
            c.factor.solve_in_place(&mut rc);
            for (zi, p) in z.iter_mut().zip(c.embedding.prolong(&rc)) {
                *zi += p;
            }
        }
        let pieces: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .map(|l| {
                let mut ri: Vec<f64> = l.dofs.iter().map(|&d| r[d]).collect();
                l.factor.solve_in_place(&mut ri);
                ri
            })
            .collect();
        // fixed subdomain order keeps the sum bitwise reproducible
        for (l, piece) in self.locals.iter().zip(pieces) {
            for (&d, v) in l.dofs.iter().zip(piece) {
                z[d] += v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{assemble_curl, edge_element_matrices};
    use crate::mesh::build_refined;
    use crate::spaces::{build_embedding, build_space, SpaceKind};
    use crate::sparse::dot;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, r: u32) -> (Arc<Mesh>, SparseSymMatrix, SparseSymMatrix, EmbeddingMatrix) {
        let fine_mesh = Arc::new(build_refined(n, r).unwrap());
        let coarse_mesh = Arc::new(build_refined(n, 0).unwrap());
        let fine = build_space(fine_mesh.clone(), SpaceKind::Nd0);
        let coarse = build_space(coarse_mesh, SpaceKind::Nd0);
        let emb = build_embedding(&coarse, &fine).unwrap();
        (fine_mesh, assemble_curl(&fine).unwrap(), assemble_curl(&coarse).unwrap(), emb)
    }

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn no_overlap_keeps_coarse_cells() {
        let mesh = Arc::new(build_refined(2, 2).unwrap());
        let dec = Decomposition::build(mesh.clone(), 0).unwrap();
        assert_eq!(dec.n_sub, 8);
        for i in 0..dec.n_sub {
            assert_eq!(dec.sub_cells[i].len(), 16);
            assert!(dec.sub_cells[i].iter().all(|&c| mesh.parent_cell[c] == i));
            // interior edges of a refined triangle with 16 cells: 3*16/2 - 12/2 = 18
            assert_eq!(dec.sub_dofs[i].len(), 18);
        }
    }

    #[test]
    fn one_layer_strictly_grows() {
        let mesh = Arc::new(build_refined(2, 2).unwrap());
        let dec = Decomposition::build(mesh.clone(), 1).unwrap();
        for i in 0..dec.n_sub {
            assert!(dec.sub_cells[i].len() > 16);
            let own = (0..mesh.n_cells()).filter(|&c| mesh.parent_cell[c] == i);
            for c in own {
                assert!(dec.sub_cells[i].binary_search(&c).is_ok());
            }
        }
        assert!(dec.uncovered_dofs(assemble_curl(&build_space(mesh, SpaceKind::Nd0)).unwrap().dim()).is_empty());
    }

    #[test]
    fn coloring_is_valid() {
        for n in 1..=8 {
            for m in [1, 2] {
                let mesh = Arc::new(build_refined(n, 2).unwrap());
                let dec = Decomposition::build(mesh, m).unwrap();
                assert!(dec.coloring_conflicts().is_empty(), "n={n} m={m}");
                assert!(dec.n_colors <= dec.n_sub);
            }
        }
    }

    #[test]
    fn unrefined_overlap_rejected() {
        let mesh = Arc::new(build_refined(2, 0).unwrap());
        assert!(matches!(Decomposition::build(mesh, 1), Err(Error::Unrefined(1))));
    }

    #[test]
    fn whole_domain_is_flagged() {
        let mesh = Arc::new(build_refined(1, 1).unwrap());
        let dec = Decomposition::build(mesh, 2).unwrap();
        assert_eq!(dec.warnings.len(), 2);
    }

    #[test]
    fn partition_of_unity() {
        let mesh = Arc::new(build_refined(4, 3).unwrap());
        for m in [1, 2] {
            let dec = Decomposition::build(mesh.clone(), m).unwrap();
            let pou = PartitionOfUnity::build(&dec).unwrap();
            assert!(pou.sum_defect() <= 1e-14);
            assert!(pou.in_range());
            assert_eq!(pou.support_violations(&dec), 0);
            let g = pou.max_gradient(&mesh) * dec.delta;
            assert!(g <= 4.0, "m={m}: {g}");
        }
        // vertex deep inside coarse cell 0 of the n=4, r=3 mesh: only Ω_0′ reaches it
        let dec = Decomposition::build(mesh.clone(), 1).unwrap();
        let pou = PartitionOfUnity::build(&dec).unwrap();
        let target = [0.125 + 0.0625, 0.0625];
        let v = mesh
            .vertices
            .iter()
            .position(|p| (p[0] - target[0]).abs() < 1e-14 && (p[1] - target[1]).abs() < 1e-14)
            .unwrap();
        assert_eq!(pou.theta[0][v], 1.0);
    }

    #[test]
    fn single_subdomain_is_exact_inverse() {
        let (mesh, a, _, _) = setup(2, 2);
        let dec = Decomposition::single(mesh);
        let p = SchwarzPreconditioner::build(&a, None, &dec, SchwarzOptions { use_coarse: false, use_locals: true })
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(a.dim(), &mut rng);
        let y = p.apply(&a.matvec(&x));
        for (u, v) in x.iter().zip(&y) {
            assert!((u - v).abs() < 1e-10);
        }
    }

    /// Independent oracle: assemble a_curl cell by cell over Ω_i′ only,
    /// keeping DOFs whose edges are interior to Ω_i′.
    #[test]
    fn local_matrices_match_direct_assembly() {
        let (mesh, a, _, _) = setup(2, 2);
        let dec = Decomposition::build(mesh.clone(), 1).unwrap();
        let space = build_space(mesh.clone(), SpaceKind::Nd0);
        for i in 0..dec.n_sub {
            let local = dec.local_matrix(&a, i);
            let pos = |e: usize| space.free_index(e).and_then(|f| dec.sub_dofs[i].binary_search(&f).ok());
            let k = dec.sub_dofs[i].len();
            let mut oracle = nalgebra::DMatrix::<f64>::zeros(k, k);
            for &c in &dec.sub_cells[i] {
                let (s, mm) = edge_element_matrices(SpaceKind::Nd0, &mesh, c);
                let edges = mesh.cell_to_edges[c].map(|(e, _)| pos(e));
                for p in 0..3 {
                    for q in 0..3 {
                        if let (Some(gp), Some(gq)) = (edges[p], edges[q]) {
                            oracle[(gp, gq)] += s[p][q] + mm[p][q];
                        }
                    }
                }
            }
            let diff = (local.to_dense() - oracle).abs().max();
            assert!(diff <= 1e-13 * a.csr().max_abs(), "subdomain {i}: {diff}");
        }
    }

    #[test]
    fn additive_in_levels_and_symmetric() {
        let (mesh, a, ac, emb) = setup(2, 2);
        let dec = Decomposition::build(mesh, 1).unwrap();
        let both = SchwarzPreconditioner::build(&a, Some((&ac, &emb)), &dec, SchwarzOptions::default()).unwrap();
        let coarse = SchwarzPreconditioner::build(
            &a,
            Some((&ac, &emb)),
            &dec,
            SchwarzOptions { use_coarse: true, use_locals: false },
        )
        .unwrap();
        let locals =
            SchwarzPreconditioner::build(&a, None, &dec, SchwarzOptions { use_coarse: false, use_locals: true })
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let n = a.dim();
        assert!(both.apply(&vec![0.0; n]).iter().all(|&v| v == 0.0));
        for _ in 0..20 {
            let r = random(n, &mut rng);
            let s = random(n, &mut rng);
            let z = both.apply(&r);
            let sum: Vec<f64> = coarse.apply(&r).iter().zip(locals.apply(&r)).map(|(a, b)| a + b).collect();
            for (u, v) in z.iter().zip(&sum) {
                assert!((u - v).abs() < 1e-12 * u.abs().max(1.0));
            }
            let lhs = dot(&z, &s);
            let rhs = dot(&r, &both.apply(&s));
            let scale = crate::sparse::norm2(&r) * crate::sparse::norm2(&s);
            assert!((lhs - rhs).abs() <= 1e-12 * scale);
            assert_eq!(z, both.apply(&r), "deterministic");
        }
    }

    #[test]
    fn factorization_failure_is_reported() {
        let (mesh, a, _, _) = setup(2, 1);
        let dec = Decomposition::build(mesh, 1).unwrap();
        let bad = a.scaled(-1.0);
        let err =
            SchwarzPreconditioner::build(&bad, None, &dec, SchwarzOptions { use_coarse: false, use_locals: true });
        assert!(matches!(err, Err(Error::NotPositiveDefinite { .. })));
    }
}
