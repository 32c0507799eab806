//! Hierarchical triangulations of the unit square.
//!
//! The coarse mesh is an `n x n` grid of squares, each split along its
//! SW-NE diagonal. Finer levels come from uniform red refinement, and every
//! fine cell remembers the coarse cell it descends from.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// A conforming triangulation with canonically oriented edges.
///
/// Edges are stored as `(a, b)` with `a < b`. Cells are counter-clockwise and
/// their local edges are `(v0, v1)`, `(v1, v2)`, `(v2, v0)`; the sign in
/// `cell_to_edges` is `+1` when that traversal runs low to high.
#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub cells: Vec<[usize; 3]>,
    pub edges: Vec<[usize; 2]>,
    pub cell_to_edges: Vec<[(usize, i8); 3]>,
    /// Cells incident to each edge (one for boundary edges).
    pub edge_cells: Vec<Vec<usize>>,
    pub boundary_edge: Vec<bool>,
    pub boundary_vertex: Vec<bool>,
    /// Coarse ancestor of each cell.
    pub parent_cell: Vec<usize>,
    pub level: u32,
    pub n_coarse: usize,
}

impl Mesh {
    fn from_cells(
        vertices: Vec<Point>,
        cells: Vec<[usize; 3]>,
        parent_cell: Vec<usize>,
        level: u32,
        n_coarse: usize,
    ) -> Self {
        let mut edge_index: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_cells: Vec<Vec<usize>> = Vec::new();
        let mut cell_to_edges = Vec::with_capacity(cells.len());
        for (c, cell) in cells.iter().enumerate() {
            let mut local = [(0usize, 1i8); 3];
            for (k, slot) in local.iter_mut().enumerate() {
                let (p, q) = (cell[k], cell[(k + 1) % 3]);
                let key = (p.min(q), p.max(q));
                let e = *edge_index.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_cells.push(Vec::with_capacity(2));
                    edges.len() - 1
                });
                edge_cells[e].push(c);
                *slot = (e, if p < q { 1 } else { -1 });
            }
            cell_to_edges.push(local);
        }
        let boundary_edge: Vec<bool> = edge_cells.iter().map(|c| c.len() == 1).collect();
        let mut boundary_vertex = vec![false; vertices.len()];
        for (e, [a, b]) in edges.iter().enumerate() {
            if boundary_edge[e] {
                boundary_vertex[*a] = true;
                boundary_vertex[*b] = true;
            }
        }
        Mesh {
            vertices,
            cells,
            edges,
            cell_to_edges,
            edge_cells,
            boundary_edge,
            boundary_vertex,
            parent_cell,
            level,
            n_coarse,
        }
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn h_nominal(&self) -> f64 {
        1.0 / (self.n_coarse as f64 * f64::from(1u32 << self.level))
    }

    #[allow(non_snake_case)]
    pub fn H_nominal(&self) -> f64 {
        1.0 / self.n_coarse as f64
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_vertices() as i64 - self.n_edges() as i64 + self.n_cells() as i64
    }

    pub fn cell_points(&self, c: usize) -> [Point; 3] {
        let [a, b, d] = self.cells[c];
        [self.vertices[a], self.vertices[b], self.vertices[d]]
    }

    pub fn signed_area(&self, c: usize) -> f64 {
        let [p0, p1, p2] = self.cell_points(c);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.boundary_edge.iter().filter(|&&b| b).count()
    }

    /// Cells incident to each vertex, in increasing cell order.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_vertices()];
        for (c, cell) in self.cells.iter().enumerate() {
            for &v in cell {
                out[v].push(c);
            }
        }
        out
    }

    /// Cell-to-cell adjacency through shared vertices, sorted, without self loops.
    pub fn vertex_adjacency(&self) -> Vec<Vec<usize>> {
        let vc = self.vertex_cells();
        self.cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let mut nb: Vec<usize> = cell.iter().flat_map(|&v| vc[v].iter().copied()).filter(|&d| d != c).collect();
                nb.sort_unstable();
                nb.dedup();
                nb
            })
            .collect()
    }

    /// Checks the structural invariants; returns a description of the first failure.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.euler_characteristic() != 1 {
            return Err(format!("euler characteristic {}", self.euler_characteristic()));
        }
        let mut total = 0.0;
        for c in 0..self.n_cells() {
            let a = self.signed_area(c);
            if a <= 0.0 {
                return Err(format!("cell {c} has signed area {a}"));
            }
            total += a;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("total area {total}"));
        }
        if let Some(e) = self.edges.iter().position(|[a, b]| a >= b) {
            return Err(format!("edge {e} not canonically oriented"));
        }
        let mut traversal = vec![0i32; self.n_edges()];
        for local in &self.cell_to_edges {
            for &(e, s) in local {
                traversal[e] += i32::from(s);
            }
        }
        for (e, &t) in traversal.iter().enumerate() {
            if !self.boundary_edge[e] && t != 0 {
                return Err(format!("interior edge {e} has traversal sum {t}"));
            }
        }
        let n_parent = 2 * self.n_coarse * self.n_coarse;
        let mut counts = vec![0usize; n_parent];
        for &p in &self.parent_cell {
            if p >= n_parent {
                return Err(format!("parent index {p} out of range"));
            }
            counts[p] += 1;
        }
        let expect = 4usize.pow(self.level);
        if counts.iter().any(|&k| k != expect) {
            return Err("parent groups have unequal sizes".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Dump<'a> {
            vertices: &'a [Point],
            cells: &'a [[usize; 3]],
            edges: &'a [[usize; 2]],
            parent: &'a [usize],
        }
        serde_json::to_value(Dump {
            vertices: &self.vertices,
            cells: &self.cells,
            edges: &self.edges,
            parent: &self.parent_cell,
        })
        .expect("mesh dump is always serializable")
    }
}

/// Coarse `n x n` grid of squares, each split along its SW-NE diagonal.
pub fn build_coarse(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::EmptyGrid);
    }
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([i as f64 / n as f64, j as f64 / n as f64]);
        }
    }
    let mut cells = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (sw, se, ne, nw) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            cells.push([sw, se, ne]);
            cells.push([sw, ne, nw]);
        }
    }
    let parent = (0..cells.len()).collect();
    Ok(Mesh::from_cells(vertices, cells, parent, 0, n))
}

/// Uniform red refinement: every triangle splits into four through its edge midpoints.
///
/// Existing vertices keep their indices; the midpoint of edge `e` becomes vertex `V + e`.
pub fn refine(m: &Mesh) -> Mesh {
    let nv = m.n_vertices();
    let mut vertices = m.vertices.clone();
    vertices.extend(m.edges.iter().map(|&[a, b]| {
        let (p, q) = (m.vertices[a], m.vertices[b]);
        [0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]
    }));
    let mut cells = Vec::with_capacity(4 * m.n_cells());
    let mut parent = Vec::with_capacity(4 * m.n_cells());
    for (c, &[v0, v1, v2]) in m.cells.iter().enumerate() {
        let mid = |k: usize| nv + m.cell_to_edges[c][k].0;
        let (m01, m12, m20) = (mid(0), mid(1), mid(2));
        cells.extend_from_slice(&[[v0, m01, m20], [m01, v1, m12], [m20, m12, v2], [m01, m12, m20]]);
        parent.extend(std::iter::repeat_n(m.parent_cell[c], 4));
    }
    Mesh::from_cells(vertices, cells, parent, m.level + 1, m.n_coarse)
}

/// Coarse mesh refined `r` times.
pub fn build_refined(n: usize, r: u32) -> Result<Mesh> {
    let mut mesh = build_coarse(n)?;
    for _ in 0..r {
        mesh = refine(&mesh);
    }
    Ok(mesh)
}

/// Barycentric coordinates of `p` in cell `c`.
pub fn barycentric(mesh: &Mesh, c: usize, p: Point) -> [f64; 3] {
    let [p0, p1, p2] = mesh.cell_points(c);
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let l1 = ((p[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p[1] - p0[1])) / det;
    let l2 = ((p1[0] - p0[0]) * (p[1] - p0[1]) - (p[0] - p0[0]) * (p1[1] - p0[1])) / det;
    [1.0 - l1 - l2, l1, l2]
}
