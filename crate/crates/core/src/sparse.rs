//! Symmetric positive-definite envelope (skyline) storage with reverse
//! Cuthill–McKee ordering and an in-place Cholesky factorization.
//!
//! The matrix is assembled in the lower triangle of the permuted ordering.
//! Rows store a contiguous range of columns `first[i]..=i`, so every inner
//! product in the factorization runs over two contiguous slices.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Rows with more neighbours than this are ordered last, outside RCM.
/// These come from constraint groups that couple a whole boundary.
const HUB_DEGREE: usize = 96;

/// Pivots below this fraction of the original diagonal count as zero.
const PIVOT_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct EnvelopeMatrix {
    n: usize,
    /// Original index → permuted index.
    perm: Vec<usize>,
    /// Permuted index → original index.
    iperm: Vec<usize>,
    first: Vec<usize>,
    start: Vec<usize>,
    vals: Vec<f64>,
}

/// Cholesky factor `P A Pᵀ = L Lᵀ` in the same envelope.
#[derive(Clone, Debug)]
pub struct CholeskyFactor {
    m: EnvelopeMatrix,
    min_pivot: f64,
}

fn rcm_order(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
    let mut placed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut hubs = Vec::new();
    for v in 0..n {
        if degree[v] > HUB_DEGREE {
            placed[v] = true;
            hubs.push(v);
        }
    }
    let bfs_levels = |root: usize, placed: &[bool]| -> (usize, usize) {
        // returns (farthest node with minimum degree on the last level, depth)
        let mut dist = vec![usize::MAX; n];
        dist[root] = 0;
        let mut q = VecDeque::from([root]);
        let mut last = root;
        while let Some(v) = q.pop_front() {
            last = v;
            for &w in &adj[v] {
                if !placed[w] && dist[w] == usize::MAX {
                    dist[w] = dist[v] + 1;
                    q.push_back(w);
                }
            }
        }
        let depth = dist[last];
        let far = (0..n)
            .filter(|&v| dist[v] == depth)
            .min_by_key(|&v| (degree[v], v))
            .unwrap_or(last);
        (far, depth)
    };
    loop {
        let Some(seed) = (0..n).filter(|&v| !placed[v]).min_by_key(|&v| (degree[v], v)) else {
            break;
        };
        // pseudo-peripheral start
        let mut root = seed;
        let (mut far, mut depth) = bfs_levels(root, &placed);
        for _ in 0..4 {
            let (f2, d2) = bfs_levels(far, &placed);
            if d2 <= depth {
                break;
            }
            root = far;
            far = f2;
            depth = d2;
        }
        let start = order.len();
        placed[root] = true;
        order.push(root);
        let mut head = start;
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !placed[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                placed[w] = true;
                order.push(w);
            }
        }
        order[start..].reverse();
    }
    order.extend(hubs);
    order
}

impl EnvelopeMatrix {
    /// Builds the envelope for an `n × n` matrix whose nonzeros are the
    /// union of dense cliques (one per element or constraint row).
    pub fn from_cliques<'a>(n: usize, cliques: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for c in cliques {
            for &a in c {
                for &b in c {
                    if a != b {
                        adj[a].push(b);
                    }
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let iperm = rcm_order(&adj);
        let mut perm = vec![0; n];
        for (new, &old) in iperm.iter().enumerate() {
            perm[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for (old, nbrs) in adj.iter().enumerate() {
            let i = perm[old];
            for &w in nbrs {
                let j = perm[w];
                if j < i {
                    first[i] = first[i].min(j);
                }
            }
        }
        let mut start = Vec::with_capacity(n + 1);
        let mut total = 0;
        for i in 0..n {
            start.push(total);
            total += i - first[i] + 1;
        }
        start.push(total);
        Self {
            n,
            perm,
            iperm,
            first,
            start,
            vals: vec![0.0; total],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Stored entries in the envelope.
    pub fn envelope_size(&self) -> usize {
        self.vals.len()
    }

    pub fn clear(&mut self) {
        self.vals.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j >= self.first[i] && j <= i);
        self.start[i] + j - self.first[i]
    }

    /// Adds `v` to entry `(a, b)` and its mirror. Each unordered pair must
    /// be added once; diagonal entries once.
    pub fn add_sym(&mut self, a: usize, b: usize, v: f64) {
        let (i, j) = (self.perm[a], self.perm[b]);
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let s = self.slot(i, j);
        self.vals[s] += v;
    }

    /// Adds `v` if `(a, b)` falls in the stored lower triangle and ignores
    /// it otherwise. Feeding every ordered pair of a symmetric matrix thus
    /// assembles it exactly once, including pairs that map to the same row.
    #[inline]
    pub fn add_lower(&mut self, a: usize, b: usize, v: f64) {
        let (i, j) = (self.perm[a], self.perm[b]);
        if i >= j {
            let s = self.slot(i, j);
            self.vals[s] += v;
        }
    }

    /// Adds a dense symmetric block (row-major `k × k`) at `dofs`.
    pub fn add_block(&mut self, dofs: &[usize], block: &[f64]) {
        let k = dofs.len();
        for p in 0..k {
            for q in 0..k {
                self.add_lower(dofs[p], dofs[q], block[p * k + q]);
            }
        }
    }

    /// `y = A x` in original numbering.
    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let oi = self.iperm[i];
            let row = &self.vals[self.start[i]..self.start[i + 1]];
            for (off, &v) in row.iter().enumerate() {
                let j = self.first[i] + off;
                let oj = self.iperm[j];
                y[oi] += v * x[oj];
                if j != i {
                    y[oj] += v * x[oi];
                }
            }
        }
        y
    }

    /// Cholesky factorization. Fails with [`Error::Singular`] when a pivot
    /// drops below `1e-13` times the original diagonal entry.
    pub fn factor(mut self) -> Result<CholeskyFactor> {
        let mut min_pivot = f64::INFINITY;
        for i in 0..self.n {
            let fi = self.first[i];
            let si = self.start[i];
            for j in fi..i {
                let fj = self.first[j];
                let sj = self.start[j];
                let k0 = fi.max(fj);
                let (ri, rj) = (&self.vals[si + k0 - fi..si + j - fi], &self.vals[sj + k0 - fj..sj + j - fj]);
                let dot: f64 = ri.iter().zip(rj).map(|(a, b)| a * b).sum();
                let ljj = self.vals[sj + j - fj];
                self.vals[si + j - fi] = (self.vals[si + j - fi] - dot) / ljj;
            }
            let diag0 = self.vals[si + i - fi];
            let row = &self.vals[si..si + i - fi];
            let d = diag0 - row.iter().map(|v| v * v).sum::<f64>();
            if !(d > PIVOT_TOL * diag0.abs()) || !d.is_finite() {
                return Err(Error::Singular(format!(
                    "pivot {d:.3e} at unknown {} (diagonal {diag0:.3e}); check the constraints",
                    self.iperm[i]
                )));
            }
            min_pivot = min_pivot.min(d);
            self.vals[si + i - fi] = d.sqrt();
        }
        Ok(CholeskyFactor { m: self, min_pivot })
    }
}

impl CholeskyFactor {
    /// Smallest pivot `d_i` before the square root.
    pub fn min_pivot(&self) -> f64 {
        self.min_pivot
    }

    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let m = &self.m;
        let mut y: Vec<f64> = (0..m.n).map(|i| b[m.iperm[i]]).collect();
        for i in 0..m.n {
            let fi = m.first[i];
            let row = &m.vals[m.start[i]..m.start[i + 1]];
            let dot: f64 = row[..i - fi].iter().zip(&y[fi..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - dot) / row[i - fi];
        }
        for i in (0..m.n).rev() {
            let fi = m.first[i];
            let row = &m.vals[m.start[i]..m.start[i + 1]];
            y[i] /= row[i - fi];
            let yi = y[i];
            for (off, v) in row[..i - fi].iter().enumerate() {
                y[fi + off] -= v * yi;
            }
        }
        let mut x = vec![0.0; m.n];
        for i in 0..m.n {
            x[m.iperm[i]] = y[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// 1D chain of 2-node cliques plus one hub touching every node.
    fn chain(n: usize, hub: bool) -> (EnvelopeMatrix, Vec<Vec<f64>>) {
        let mut cliques: Vec<Vec<usize>> = (0..n - 1).map(|i| vec![i, i + 1]).collect();
        let total = if hub { n + 1 } else { n };
        if hub {
            cliques.push((0..=n).collect());
        }
        let mut m = EnvelopeMatrix::from_cliques(total, cliques.iter().map(|c| c.as_slice()));
        let mut dense = vec![vec![0.0; total]; total];
        for i in 0..n - 1 {
            m.add_block(&[i, i + 1], &[2.0, -1.0, -1.0, 2.0]);
            dense[i][i] += 2.0;
            dense[i + 1][i + 1] += 2.0;
            dense[i][i + 1] -= 1.0;
            dense[i + 1][i] -= 1.0;
        }
        if hub {
            for i in 0..n {
                m.add_sym(i, n, 0.1);
                dense[i][n] += 0.1;
                dense[n][i] += 0.1;
            }
            m.add_sym(n, n, 50.0);
            dense[n][n] += 50.0;
        }
        (m, dense)
    }

    #[test]
    fn solves_match_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for hub in [false, true] {
            let (m, dense) = chain(200, hub);
            let n = m.dim();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = dense.iter().map(|r| r.iter().zip(&x).map(|(a, b)| a * b).sum()).collect();
            assert_eq!(m.mul(&x).iter().zip(&b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) < 1e-12, true);
            let f = m.factor().unwrap();
            let got = f.solve(&b);
            for (a, b) in got.iter().zip(&x) {
                assert!((a - b).abs() < 1e-9);
            }
            assert!(f.min_pivot() > 0.0);
        }
    }

    #[test]
    fn singular_detected() {
        let cliques = [vec![0usize, 1]];
        let mut m = EnvelopeMatrix::from_cliques(2, cliques.iter().map(|c| c.as_slice()));
        m.add_block(&[0, 1], &[1.0, -1.0, -1.0, 1.0]);
        assert!(matches!(m.factor(), Err(Error::Singular(_))));
    }

    #[test]
    fn rcm_reduces_envelope_of_scrambled_grid() {
        // 30×30 grid Laplacian with scrambled numbering
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut label: Vec<usize> = (0..n * n).collect();
        for i in (1..label.len()).rev() {
            let j = rng.gen_range(0..=i);
            label.swap(i, j);
        }
        let mut cliques = Vec::new();
        for j in 0..n {
            for i in 0..n {
                if i + 1 < n {
                    cliques.push(vec![label[j * n + i], label[j * n + i + 1]]);
                }
                if j + 1 < n {
                    cliques.push(vec![label[j * n + i], label[(j + 1) * n + i]]);
                }
            }
        }
        let m = EnvelopeMatrix::from_cliques(n * n, cliques.iter().map(|c| c.as_slice()));
        assert!(m.envelope_size() < 60 * n * n);
    }
}
