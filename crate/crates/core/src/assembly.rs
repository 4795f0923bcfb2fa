//! Global operator assembly shared by the forward, identification and
//! prediction solvers.
//!
//! All three solve systems with the stiffness `K = Σ_e w_e Bᵀ Op B`, where
//! `Op = [C, D, A]` is built from one set of [`MetricParams`], restricted to
//! a subset of DOFs and possibly condensed (several DOFs sharing one
//! unknown). The condensation is described by a DOF map: `None` removes the
//! DOF, `Some(k)` sends it to reduced unknown `k`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::{elem_dofs, gather, mesh_operators, point_weights, ElementOperators};
use crate::mesh::Mesh;
use crate::phase_space::{strain_to_stress, MetricParams, ModelMode};
use crate::sparse::{CholeskyFactor, EnvelopeMatrix};

/// Element operators and DOF tables for one mesh and mode.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub mode: ModelMode,
    pub ops: Vec<ElementOperators>,
    pub dofs: Vec<Vec<usize>>,
    pub ndof: usize,
    pub n_nodes: usize,
}

impl Assembly {
    pub fn new(mesh: &Mesh, mode: ModelMode) -> Result<Self> {
        let ops = mesh_operators(mesh, mode)?;
        let dofs = (0..mesh.n_elems()).map(|e| elem_dofs(mesh, e, mode)).collect();
        Ok(Self {
            mode,
            ops,
            dofs,
            ndof: mesh.n_nodes() * mode.node_dofs(),
            n_nodes: mesh.n_nodes(),
        })
    }

    pub fn n_points(&self) -> usize {
        4 * self.ops.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        point_weights(&self.ops)
    }

    /// `[ε, γ, ζ]` at every material point.
    pub fn strains(&self, q: &[f64]) -> Vec<[f64; 16]> {
        self.ops
            .par_iter()
            .zip(&self.dofs)
            .flat_map_iter(|(op, d)| {
                let qe = gather(q, d);
                (0..4).map(move |g| op.strain(g, &qe))
            })
            .collect()
    }

    /// `Σ_e w_e Bᵀ s_e` for per-point generalized stresses.
    pub fn divergence(&self, stresses: &[[f64; 16]]) -> Vec<f64> {
        let mut out = vec![0.0; self.ndof];
        // element vectors in parallel, scatter in element order
        let local: Vec<Vec<f64>> = self
            .ops
            .par_iter()
            .enumerate()
            .map(|(e, op)| {
                let mut fe = vec![0.0; op.ndof()];
                for g in 0..4 {
                    op.add_transpose(g, &stresses[4 * e + g], op.points[g].w, &mut fe);
                }
                fe
            })
            .collect();
        for (d, fe) in self.dofs.iter().zip(local) {
            for (&i, v) in d.iter().zip(fe) {
                out[i] += v;
            }
        }
        out
    }

    /// Internal force `Σ_e w_e Bᵀ Op(B q)` without forming `K`.
    pub fn internal_force(&self, p: &MetricParams, q: &[f64]) -> Vec<f64> {
        let stresses: Vec<[f64; 16]> = self
            .strains(q)
            .iter()
            .map(|e| {
                let mut s = [0.0; 16];
                strain_to_stress(p, self.mode, e, &mut s);
                s
            })
            .collect();
        self.divergence(&stresses)
    }

    /// Dense element stiffness, row-major.
    pub fn element_stiffness(&self, e: usize, p: &MetricParams) -> Vec<f64> {
        let op = &self.ops[e];
        let n = op.ndof();
        let mut k = vec![0.0; n * n];
        let mut s = [0.0; 16];
        for g in 0..4 {
            let w = op.points[g].w;
            let cols = op.b_columns(g);
            let ops: Vec<[f64; 16]> = cols
                .iter()
                .map(|c| {
                    strain_to_stress(p, self.mode, c, &mut s);
                    s
                })
                .collect();
            for a in 0..n {
                for b in a..n {
                    let v: f64 = cols[a].iter().zip(&ops[b]).map(|(x, y)| x * y).sum::<f64>() * w;
                    k[a * n + b] += v;
                    if a != b {
                        k[b * n + a] += v;
                    }
                }
            }
        }
        k
    }

    /// Consistent load of a uniform body couple `c`.
    ///
    /// Micropolar0 loads the rotation DOFs with `∫ N_a c`. Full1 uses the
    /// double force `M = −½ e c` (`M12 = −c/2`, `M21 = c/2`), which does
    /// the same work `c θ` on a skew microdeformation.
    pub fn body_couple_load(&self, c: f64) -> Vec<f64> {
        let mut f = vec![0.0; self.ndof];
        if c == 0.0 {
            return f;
        }
        let nd = self.mode.node_dofs();
        for (op, d) in self.ops.iter().zip(&self.dofs) {
            for gp in &op.points {
                for a in 0..4 {
                    let v = c * gp.w * gp.n[a];
                    match self.mode {
                        ModelMode::Micropolar0 => f[d[a * nd + 2]] += v,
                        ModelMode::Full1 => {
                            f[d[a * nd + 3]] -= 0.5 * v;
                            f[d[a * nd + 4]] += 0.5 * v;
                        }
                    }
                }
            }
        }
        f
    }

    /// Assembles and factors `Tᵀ K T` for the DOF map `map`.
    pub fn reduced_factor(&self, p: &MetricParams, map: &[Option<usize>], nred: usize) -> Result<CholeskyFactor> {
        if nred == 0 {
            return Err(Error::Singular("no unknowns left after constraints".into()));
        }
        let cliques: Vec<Vec<usize>> = self
            .dofs
            .iter()
            .map(|d| {
                let mut c: Vec<usize> = d.iter().filter_map(|&i| map[i]).collect();
                c.sort_unstable();
                c.dedup();
                c
            })
            .collect();
        let mut m = EnvelopeMatrix::from_cliques(nred, cliques.iter().map(|c| c.as_slice()));
        let blocks: Vec<Vec<f64>> = (0..self.ops.len())
            .into_par_iter()
            .map(|e| self.element_stiffness(e, p))
            .collect();
        for (d, ke) in self.dofs.iter().zip(&blocks) {
            let n = d.len();
            let idx: Vec<Option<usize>> = d.iter().map(|&i| map[i]).collect();
            for a in 0..n {
                let Some(ra) = idx[a] else { continue };
                for b in 0..n {
                    let Some(rb) = idx[b] else { continue };
                    m.add_lower(ra, rb, ke[a * n + b]);
                }
            }
        }
        m.factor()
    }
}

/// Restricts a global vector to reduced unknowns: `Tᵀ v`.
pub fn restrict(map: &[Option<usize>], nred: usize, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; nred];
    for (i, m) in map.iter().enumerate() {
        if let Some(k) = m {
            out[*k] += v[i];
        }
    }
    out
}

/// Expands reduced unknowns to a global vector: `T x`, zero on removed DOFs.
pub fn expand(map: &[Option<usize>], x: &[f64]) -> Vec<f64> {
    map.iter().map(|m| m.map_or(0.0, |k| x[k])).collect()
}
