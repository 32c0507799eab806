//! Envelope (skyline) Cholesky factorization with reverse Cuthill-McKee ordering.
//!
//! Subdomain and coarse matrices from 2D meshes have small bandwidth after RCM,
//! so a profile factorization stays cheap and keeps the solve exact.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::SparseSymMatrix;

/// `P A Pᵀ = L Lᵀ` with `L` stored row-wise over its envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    /// `perm[k]` is the original index placed at position `k`.
    perm: Vec<usize>,
    first: Vec<usize>,
    row_start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSymMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (k, &p) in perm.iter().enumerate() {
            inv[p] = k;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (i, f) in first.iter_mut().enumerate() {
            for (j, _) in a.csr().row(perm[i]) {
                *f = (*f).min(inv[j]);
            }
        }
        let mut row_start = Vec::with_capacity(n + 1);
        row_start.push(0);
        for i in 0..n {
            row_start.push(row_start[i] + (i - first[i] + 1));
        }
        let mut data = vec![0.0; row_start[n]];
        for i in 0..n {
            for (j, v) in a.csr().row(perm[i]) {
                let jj = inv[j];
                if jj <= i {
                    data[row_start[i] + jj - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            let base_i = row_start[i];
            for j in fi..i {
                let fj = first[j];
                let base_j = row_start[j];
                let k0 = fi.max(fj);
                let mut s = data[base_i + j - fi];
                for k in k0..j {
                    s -= data[base_i + k - fi] * data[base_j + k - fj];
                }
                data[base_i + j - fi] = s / data[base_j + j - fj];
            }
            let mut d = data[base_i + i - fi];
            for k in fi..i {
                let l = data[base_i + k - fi];
                d -= l * l;
            }
            if d <= 0.0 || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: perm[i], pivot: i, value: d });
            }
            data[base_i + i - fi] = d.sqrt();
        }
        Ok(Self { n, perm, first, row_start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored factor entries.
    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn l(&self, i: usize, j: usize) -> f64 {
        self.data[self.row_start[i] + j - self.first[i]]
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let mut s = y[i];
            for k in fi..i {
                s -= self.l(i, k) * y[k];
            }
            y[i] = s / self.l(i, i);
        }
        for i in (0..n).rev() {
            y[i] /= self.l(i, i);
            let yi = y[i];
            let fi = self.first[i];
            for k in fi..i {
                y[k] -= self.l(i, k) * yi;
            }
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = y[k];
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}

/// Reverse Cuthill-McKee ordering of the matrix graph, one BFS per component.
pub fn reverse_cuthill_mckee(a: &SparseSymMatrix) -> Vec<usize> {
    let n = a.dim();
    let adj: Vec<Vec<usize>> = (0..n).map(|i| a.csr().row(i).map(|(j, _)| j).filter(|&j| j != i).collect()).collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(&adj, &degree, seed);
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nb: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nb.sort_by_key(|&w| (degree[w], w));
            for w in nb {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(adj: &[Vec<usize>], start: usize) -> Vec<usize> {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                queue.push_back(w);
            }
        }
    }
    level
}

fn pseudo_peripheral(adj: &[Vec<usize>], degree: &[usize], seed: usize) -> usize {
    let mut current = seed;
    let mut ecc = 0;
    for _ in 0..8 {
        let level = bfs_levels(adj, current);
        let far = level.iter().filter(|&&l| l != usize::MAX).max().copied().unwrap_or(0);
        if far <= ecc && current != seed {
            break;
        }
        ecc = far;
        let next = (0..adj.len()).filter(|&v| level[v] == far).min_by_key(|&v| (degree[v], v)).unwrap_or(current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_2d(k: usize) -> SparseSymMatrix {
        let id = |i: usize, j: usize| j * k + i;
        let mut t = Vec::new();
        for j in 0..k {
            for i in 0..k {
                t.push((id(i, j), id(i, j), 4.0));
                if i + 1 < k {
                    t.push((id(i, j), id(i + 1, j), -1.0));
                    t.push((id(i + 1, j), id(i, j), -1.0));
                }
                if j + 1 < k {
                    t.push((id(i, j), id(i, j + 1), -1.0));
                    t.push((id(i, j + 1), id(i, j), -1.0));
                }
            }
        }
        SparseSymMatrix::from_triplets(k * k, t).unwrap()
    }

    #[test]
    fn solves_laplacian() {
        let a = laplacian_2d(12);
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..a.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x);
        let y = chol.solve(&b);
        let err = x.iter().zip(&y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err < 1e-12, "{err}");
        // RCM keeps the profile near n * k.
        assert!(chol.envelope_size() < 2 * 144 * 13);
    }

    #[test]
    fn rejects_indefinite() {
        let a = SparseSymMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rcm_is_permutation() {
        let a = laplacian_2d(7);
        let mut p = reverse_cuthill_mckee(&a);
        p.sort_unstable();
        assert_eq!(p, (0..49).collect::<Vec<_>>());
    }

    #[test]
    fn disconnected_blocks() {
        let a = SparseSymMatrix::from_triplets(3, vec![(0, 0, 2.0), (1, 1, 3.0), (2, 2, 4.0)]).unwrap();
        let x = EnvelopeCholesky::factor(&a).unwrap().solve(&[2.0, 3.0, 4.0]);
        assert!(x.iter().all(|v| (v - 1.0).abs() < 1e-15), "{x:?}");
    }
}
