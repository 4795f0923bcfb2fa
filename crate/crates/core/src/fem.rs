//! Q4 shape functions, generalized strain operators and strain evaluation.
//!
//! Element DOFs are grouped per node: `[u1, u2, χ11, χ12, χ21, χ22]` in
//! Full1 and `[u1, u2, θ]` in Micropolar0. Strain vectors use the 16-slot
//! layout of [`GeneralizedState`]: `[ε | γ | ζ]` with full-index storage.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::phase_space::{GeneralizedState, ModelMode};

const G: f64 = 0.577_350_269_189_625_8;

/// 2×2 Gauss points in node order (−,−), (+,−), (+,+), (−,+); unit weights.
pub const GAUSS_POINTS: [(f64, f64); 4] = [(-G, -G), (G, -G), (G, G), (-G, G)];

/// Shape values and natural-coordinate gradients at `(xi, eta)`.
pub fn q4_shape(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    const S: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, &(sx, sy)) in S.iter().enumerate() {
        n[a] = 0.25 * (1.0 + sx * xi) * (1.0 + sy * eta);
        dn[a] = [0.25 * sx * (1.0 + sy * eta), 0.25 * sy * (1.0 + sx * xi)];
    }
    (n, dn)
}

/// Shape data at one Gauss point in physical coordinates.
#[derive(Clone, Copy, Debug)]
pub struct GaussPoint {
    /// Integration weight `|J|`.
    pub w: f64,
    pub n: [f64; 4],
    /// Physical gradients `∂N_a/∂x_k`.
    pub dn: [[f64; 2]; 4],
    pub x: [f64; 2],
}

/// The four Gauss points of one element together with the model mode that
/// fixes the DOF layout.
#[derive(Clone, Debug)]
pub struct ElementOperators {
    pub mode: ModelMode,
    pub points: [GaussPoint; 4],
}

pub fn element_operators(mesh: &Mesh, elem: usize, mode: ModelMode) -> Result<ElementOperators> {
    if elem >= mesh.n_elems() {
        return Err(Error::IndexOutOfRange(format!("element {elem}")));
    }
    let x = mesh.elem_coords(elem);
    let mut points = [GaussPoint {
        w: 0.0,
        n: [0.0; 4],
        dn: [[0.0; 2]; 4],
        x: [0.0; 2],
    }; 4];
    for (g, &(xi, eta)) in GAUSS_POINTS.iter().enumerate() {
        let (n, dnat) = q4_shape(xi, eta);
        let mut j = [[0.0; 2]; 2];
        let mut pos = [0.0; 2];
        for a in 0..4 {
            for r in 0..2 {
                pos[r] += n[a] * x[a][r];
                for c in 0..2 {
                    j[r][c] += x[a][r] * dnat[a][c];
                }
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det <= 0.0 {
            return Err(Error::InvertedElement { elem, point: g });
        }
        let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
        let mut dn = [[0.0; 2]; 4];
        for a in 0..4 {
            for k in 0..2 {
                dn[a][k] = dnat[a][0] * inv[0][k] + dnat[a][1] * inv[1][k];
            }
        }
        points[g] = GaussPoint { w: det, n, dn, x: pos };
    }
    Ok(ElementOperators { mode, points })
}

impl ElementOperators {
    pub fn ndof(&self) -> usize {
        4 * self.mode.node_dofs()
    }

    /// `[ε, γ, ζ]` at Gauss point `g` from element DOFs `q`.
    pub fn strain(&self, g: usize, q: &[f64]) -> [f64; 16] {
        let gp = &self.points[g];
        let nd = self.mode.node_dofs();
        let mut grad_u = [[0.0; 2]; 2];
        let mut out = [0.0; 16];
        for a in 0..4 {
            let qa = &q[a * nd..(a + 1) * nd];
            for i in 0..2 {
                for k in 0..2 {
                    grad_u[i][k] += qa[i] * gp.dn[a][k];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                out[2 * i + j] = 0.5 * (grad_u[i][j] + grad_u[j][i]);
            }
        }
        match self.mode {
            ModelMode::Full1 => {
                for i in 0..2 {
                    for j in 0..2 {
                        out[4 + 2 * i + j] = grad_u[i][j];
                    }
                }
                for a in 0..4 {
                    let chi = &q[a * nd + 2..(a + 1) * nd];
                    for ij in 0..4 {
                        out[4 + ij] -= gp.n[a] * chi[ij];
                        for k in 0..2 {
                            out[8 + 2 * ij + k] += chi[ij] * gp.dn[a][k];
                        }
                    }
                }
            }
            ModelMode::Micropolar0 => {
                let theta: f64 = (0..4).map(|a| gp.n[a] * q[a * nd + 2]).sum();
                out[4] = grad_u[1][0] - grad_u[0][1] - 2.0 * theta;
            }
        }
        out
    }

    /// `out += scale · Bᵀ s` at Gauss point `g`.
    pub fn add_transpose(&self, g: usize, s: &[f64; 16], scale: f64, out: &mut [f64]) {
        let gp = &self.points[g];
        let nd = self.mode.node_dofs();
        for a in 0..4 {
            let o = &mut out[a * nd..(a + 1) * nd];
            let dn = gp.dn[a];
            for k in 0..2 {
                let mut acc = 0.0;
                for j in 0..2 {
                    acc += 0.5 * (s[2 * k + j] + s[2 * j + k]) * dn[j];
                }
                if self.mode == ModelMode::Full1 {
                    for j in 0..2 {
                        acc += s[4 + 2 * k + j] * dn[j];
                    }
                }
                o[k] += scale * acc;
            }
            match self.mode {
                ModelMode::Full1 => {
                    for ij in 0..4 {
                        let mut acc = -s[4 + ij] * gp.n[a];
                        for k in 0..2 {
                            acc += s[8 + 2 * ij + k] * dn[k];
                        }
                        o[2 + ij] += scale * acc;
                    }
                }
                ModelMode::Micropolar0 => {
                    let t = s[4];
                    o[0] -= scale * t * dn[1];
                    o[1] += scale * t * dn[0];
                    o[2] -= scale * 2.0 * t * gp.n[a];
                }
            }
        }
    }

    /// Dense `B` at Gauss point `g`, stored column-major: `b[col][row]`.
    pub fn b_columns(&self, g: usize) -> Vec<[f64; 16]> {
        let n = self.ndof();
        let mut unit = vec![0.0; n];
        (0..n)
            .map(|c| {
                unit[c] = 1.0;
                let col = self.strain(g, &unit);
                unit[c] = 0.0;
                col
            })
            .collect()
    }
}

/// Element operators for every element of the mesh.
pub fn mesh_operators(mesh: &Mesh, mode: ModelMode) -> Result<Vec<ElementOperators>> {
    (0..mesh.n_elems())
        .into_par_iter()
        .map(|e| element_operators(mesh, e, mode))
        .collect()
}

/// Integration weights in material-point order (element-major, Gauss-minor).
pub fn point_weights(ops: &[ElementOperators]) -> Vec<f64> {
    ops.iter().flat_map(|op| op.points.iter().map(|p| p.w)).collect()
}

/// Material-point coordinates in the same order.
pub fn point_coords(ops: &[ElementOperators]) -> Vec<[f64; 2]> {
    ops.iter().flat_map(|op| op.points.iter().map(|p| p.x)).collect()
}

/// Nodal displacements and microdeformations.
///
/// `chi` is flat with `mode.chi_len()` entries per node: `[χ11, χ12, χ21,
/// χ22]` in Full1, `[θ]` in Micropolar0.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NodalFields {
    pub mode: ModelMode,
    pub u: Vec<[f64; 2]>,
    pub chi: Vec<f64>,
}

impl NodalFields {
    pub fn zeros(mode: ModelMode, n_nodes: usize) -> Self {
        Self {
            mode,
            u: vec![[0.0; 2]; n_nodes],
            chi: vec![0.0; n_nodes * mode.chi_len()],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.u.len()
    }

    pub fn check(&self, n_nodes: usize) -> Result<()> {
        if self.u.len() != n_nodes || self.chi.len() != n_nodes * self.mode.chi_len() {
            return Err(Error::Shape(format!(
                "fields hold {} displacements and {} microdeformation values for {} nodes",
                self.u.len(),
                self.chi.len(),
                n_nodes
            )));
        }
        Ok(())
    }

    /// Global DOF vector, node-major.
    pub fn to_dofs(&self) -> Vec<f64> {
        let nc = self.mode.chi_len();
        let mut q = Vec::with_capacity(self.u.len() * (2 + nc));
        for (a, u) in self.u.iter().enumerate() {
            q.extend_from_slice(u);
            q.extend_from_slice(&self.chi[a * nc..(a + 1) * nc]);
        }
        q
    }

    pub fn from_dofs(mode: ModelMode, q: &[f64]) -> Self {
        let nd = mode.node_dofs();
        let n = q.len() / nd;
        let mut f = Self::zeros(mode, n);
        for a in 0..n {
            f.u[a] = [q[a * nd], q[a * nd + 1]];
            f.chi[a * (nd - 2)..(a + 1) * (nd - 2)].copy_from_slice(&q[a * nd + 2..(a + 1) * nd]);
        }
        f
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mode: self.mode,
            u: self.u.iter().map(|u| [u[0] * factor, u[1] * factor]).collect(),
            chi: self.chi.iter().map(|c| c * factor).collect(),
        }
    }
}

/// Element DOF indices in the global node-major vector.
pub fn elem_dofs(mesh: &Mesh, e: usize, mode: ModelMode) -> Vec<usize> {
    let nd = mode.node_dofs();
    mesh.elems[e]
        .iter()
        .flat_map(|&a| (0..nd).map(move |d| a * nd + d))
        .collect()
}

pub(crate) fn gather(q: &[f64], dofs: &[usize]) -> Vec<f64> {
    dofs.iter().map(|&d| q[d]).collect()
}

/// Strains at every material point from a global DOF vector.
pub(crate) fn strains_from_dofs(
    mesh: &Mesh,
    ops: &[ElementOperators],
    q: &[f64],
) -> Vec<[f64; 16]> {
    ops.par_iter()
        .enumerate()
        .flat_map_iter(|(e, op)| {
            let qe = gather(q, &elem_dofs(mesh, e, op.mode));
            (0..4).map(move |g| op.strain(g, &qe))
        })
        .collect()
}

/// Generalized strains at all `4·M_elems` material points, returned as
/// states with zero stresses.
pub fn evaluate_strains(
    mesh: &Mesh,
    fields: &NodalFields,
    mode: ModelMode,
) -> Result<Vec<GeneralizedState>> {
    if fields.mode != mode {
        return Err(Error::ModeMismatch(format!("fields are {}, requested {mode}", fields.mode)));
    }
    fields.check(mesh.n_nodes())?;
    let ops = mesh_operators(mesh, mode)?;
    let q = fields.to_dofs();
    Ok(strains_from_dofs(mesh, &ops, &q)
        .iter()
        .map(|s| GeneralizedState::from_halves(mode, s, &[0.0; 16]))
        .collect())
}
