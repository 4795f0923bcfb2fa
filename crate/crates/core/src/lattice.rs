//! Honeycomb lattice: Euler–Bernoulli frame model, its homogenized
//! micropolar moduli, and transfer of joint kinematics onto a continuum
//! mesh.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::NodalFields;
use crate::forward::{BoundaryProgram, Reactions, SetReaction, Snapshot, SnapshotSet};
use crate::mesh::{GeometrySpec, Mesh};
use crate::phase_space::{MetricParams, ModelMode};
use crate::sparse::EnvelopeMatrix;

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Effective moduli of the honeycomb in Voigt form plus the polar modulus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogenizedModuli {
    pub c11: f64,
    pub c12: f64,
    pub c33: f64,
    pub kappa1: f64,
}

impl HomogenizedModuli {
    pub fn lambda(&self) -> f64 {
        self.c12
    }

    pub fn mu(&self) -> f64 {
        self.c33
    }

    /// Micropolar moduli for the forward solver.
    pub fn params(&self) -> MetricParams {
        MetricParams::new(self.c12, self.c33, 0.0, self.kappa1, 0.0)
    }
}

pub fn homogenized_moduli(e: f64, a: f64, i: f64, l: f64) -> HomogenizedModuli {
    let ea = e * a;
    let ei = e * i;
    let den = ea * l.powi(3) + 12.0 * ei * l;
    HomogenizedModuli {
        c11: ea * (ea * l * l + 36.0 * ei) / (2.0 * SQRT3 * den),
        c12: ea * (ea * l * l - 12.0 * ei) / (2.0 * SQRT3 * den),
        c33: 4.0 * SQRT3 * ea * ei / den,
        kappa1: 4.0 * SQRT3 * ei / l.powi(3),
    }
}

/// Unit cell area `V = (3√3/2) L²`.
pub fn cell_area(l: f64) -> f64 {
    1.5 * SQRT3 * l * l
}

/// Beam section and material.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamProps {
    pub e: f64,
    pub a: f64,
    pub i: f64,
    pub l: f64,
}

impl BeamProps {
    /// Properties for beams of length `l_new` with the same homogenized
    /// moduli: `A ∝ L`, `I ∝ L³`.
    pub fn rescaled(&self, l_new: f64) -> Self {
        let s = l_new / self.l;
        Self {
            e: self.e,
            a: self.a * s,
            i: self.i * s.powi(3),
            l: l_new,
        }
    }

    pub fn moduli(&self) -> HomogenizedModuli {
        homogenized_moduli(self.e, self.a, self.i, self.l)
    }
}

/// Beam length that puts whole zigzag rows on the bottom and top edges of
/// a domain of height `height`, closest to a cell width `height · eps`.
pub fn snapped_beam_length(height: f64, eps: f64) -> f64 {
    let nominal = height * eps / SQRT3;
    let k = ((height / nominal - 0.5) / 3.0).round().max(1.0);
    height / (3.0 * k + 0.5)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeModel {
    pub joints: Vec<[f64; 2]>,
    pub beams: Vec<[usize; 2]>,
    pub props: BeamProps,
    pub joint_sets: BTreeMap<String, Vec<usize>>,
}

/// Regular honeycomb with vertical bonds, clipped to the domain.
///
/// Lattice vectors `a1 = (√3L, 0)`, `a2 = (√3L/2, 3L/2)`, with joints
/// `(0, −L)` and `(0, 0)` in each cell, so one zigzag row has its lower
/// joints on `y = 0`. Beams are kept when both ends and the midpoint lie in
/// the domain; joints left with a single beam are pruned repeatedly and
/// only the largest connected piece is returned. Joint sets `bottom`,
/// `top`, `left`, `right` are bands of width `L/2` along the bounding box.
pub fn build_honeycomb(domain: &GeometrySpec, props: BeamProps) -> Result<LatticeModel> {
    let l = props.l;
    if !(l > 0.0) {
        return Err(Error::Geometry("beam length must be positive".into()));
    }
    let (w, h) = domain.extent();
    let snap_tol = 1e-9 * w.max(h);
    let snap = |p: [f64; 2]| -> [f64; 2] {
        let s = |v: f64, hi: f64| {
            if v.abs() < snap_tol {
                0.0
            } else if (v - hi).abs() < snap_tol {
                hi
            } else {
                v
            }
        };
        [s(p[0], w), s(p[1], h)]
    };
    let a1 = [SQRT3 * l, 0.0];
    let a2 = [0.5 * SQRT3 * l, 1.5 * l];
    let jmax = (h / (1.5 * l)).ceil() as i64 + 2;
    let imin = -(jmax / 2) - 2;
    let imax = (w / (SQRT3 * l)).ceil() as i64 + 2;

    let mut index: BTreeMap<(i64, i64, u8), usize> = BTreeMap::new();
    let mut joints = Vec::new();
    let mut beams = Vec::new();
    let pos = |i: i64, j: i64, b: u8| -> [f64; 2] {
        let y0 = if b == 0 { -l } else { 0.0 };
        snap([i as f64 * a1[0] + j as f64 * a2[0], j as f64 * a2[1] + y0])
    };
    let mut joint = |key: (i64, i64, u8), joints: &mut Vec<[f64; 2]>| -> usize {
        *index.entry(key).or_insert_with(|| {
            joints.push(pos(key.0, key.1, key.2));
            joints.len() - 1
        })
    };
    for j in -1..=jmax {
        for i in imin..=imax {
            // bonds: p0(n)–p1(n), p1(n)–p0(n + a2), p1(n)–p0(n + a2 − a1)
            for (ka, kb) in [((i, j, 0), (i, j, 1)), ((i, j, 1), (i, j + 1, 0)), ((i, j, 1), (i - 1, j + 1, 0))] {
                let (pa, pb) = (pos(ka.0, ka.1, ka.2), pos(kb.0, kb.1, kb.2));
                let mid = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
                if domain.contains(pa) && domain.contains(pb) && domain.contains(mid) {
                    let a = joint(ka, &mut joints);
                    let b = joint(kb, &mut joints);
                    beams.push([a, b]);
                }
            }
        }
    }
    let (joints, beams) = prune(joints, beams);
    if beams.is_empty() {
        return Err(Error::Geometry("domain too small: no complete lattice cells".into()));
    }
    let tol = 0.5 * l + 1e-9 * l;
    let band = |f: &dyn Fn(&[f64; 2]) -> bool| -> Vec<usize> {
        joints.iter().enumerate().filter(|(_, p)| f(p)).map(|(k, _)| k).collect()
    };
    let mut joint_sets = BTreeMap::new();
    joint_sets.insert("bottom".to_string(), band(&|p| p[1] <= tol));
    joint_sets.insert("top".to_string(), band(&|p| p[1] >= h - tol));
    joint_sets.insert("left".to_string(), band(&|p| p[0] <= tol));
    joint_sets.insert("right".to_string(), band(&|p| p[0] >= w - tol));
    Ok(LatticeModel {
        joints,
        beams,
        props,
        joint_sets,
    })
}

/// Removes degree-one joints until none remain, then keeps the largest
/// connected component. Joint order is preserved.
fn prune(joints: Vec<[f64; 2]>, mut beams: Vec<[usize; 2]>) -> (Vec<[f64; 2]>, Vec<[usize; 2]>) {
    let n = joints.len();
    loop {
        let mut degree = vec![0usize; n];
        for b in &beams {
            degree[b[0]] += 1;
            degree[b[1]] += 1;
        }
        let before = beams.len();
        beams.retain(|b| degree[b[0]] > 1 && degree[b[1]] > 1);
        if beams.len() == before {
            break;
        }
    }
    let mut adj = vec![Vec::new(); n];
    for b in &beams {
        adj[b[0]].push(b[1]);
        adj[b[1]].push(b[0]);
    }
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    for s in 0..n {
        if comp[s] != usize::MAX || adj[s].is_empty() {
            continue;
        }
        let c = sizes.len();
        let mut stack = vec![s];
        comp[s] = c;
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &w in &adj[v] {
                if comp[w] == usize::MAX {
                    comp[w] = c;
                    stack.push(w);
                }
            }
        }
        sizes.push(size);
    }
    let Some(best) = (0..sizes.len()).max_by_key(|&c| (sizes[c], usize::MAX - c)) else {
        return (Vec::new(), Vec::new());
    };
    let mut renumber = vec![usize::MAX; n];
    let mut kept = Vec::new();
    for v in 0..n {
        if comp[v] == best {
            renumber[v] = kept.len();
            kept.push(joints[v]);
        }
    }
    let beams = beams
        .into_iter()
        .filter(|b| comp[b[0]] == best)
        .map(|b| [renumber[b[0]], renumber[b[1]]])
        .collect();
    (kept, beams)
}

/// Global 6×6 stiffness of a 2D Euler–Bernoulli frame element between
/// `xa` and `xb`, DOFs `[u1, u2, θ]` at each end.
pub fn frame_stiffness(xa: [f64; 2], xb: [f64; 2], props: &BeamProps) -> [[f64; 6]; 6] {
    let dx = xb[0] - xa[0];
    let dy = xb[1] - xa[1];
    let l = (dx * dx + dy * dy).sqrt();
    let (c, s) = (dx / l, dy / l);
    let ea = props.e * props.a / l;
    let ei = props.e * props.i;
    let k1 = 12.0 * ei / l.powi(3);
    let k2 = 6.0 * ei / (l * l);
    let k3 = 4.0 * ei / l;
    let k4 = 2.0 * ei / l;
    let local = [
        [ea, 0.0, 0.0, -ea, 0.0, 0.0],
        [0.0, k1, k2, 0.0, -k1, k2],
        [0.0, k2, k3, 0.0, -k2, k4],
        [-ea, 0.0, 0.0, ea, 0.0, 0.0],
        [0.0, -k1, -k2, 0.0, k1, -k2],
        [0.0, k2, k4, 0.0, -k2, k3],
    ];
    // local = T global
    let mut t = [[0.0; 6]; 6];
    for b in [0, 3] {
        t[b][b] = c;
        t[b][b + 1] = s;
        t[b + 1][b] = -s;
        t[b + 1][b + 1] = c;
        t[b + 2][b + 2] = 1.0;
    }
    let mut out = [[0.0; 6]; 6];
    for i in 0..6 {
        for j in 0..6 {
            let mut acc = 0.0;
            for p in 0..6 {
                if t[p][i] == 0.0 {
                    continue;
                }
                for q in 0..6 {
                    acc += t[p][i] * local[p][q] * t[q][j];
                }
            }
            out[i][j] = acc;
        }
    }
    out
}

/// Joint displacements and rotations.
#[derive(Clone, Debug, PartialEq)]
pub struct JointFields {
    pub u: Vec<[f64; 2]>,
    pub theta: Vec<f64>,
}

impl JointFields {
    fn from_dofs(q: &[f64]) -> Self {
        Self {
            u: q.chunks(3).map(|c| [c[0], c[1]]).collect(),
            theta: q.chunks(3).map(|c| c[2]).collect(),
        }
    }
}

/// Factorized frame model for one program.
pub struct DnsSolver<'a> {
    lat: &'a LatticeModel,
    prescribed: Vec<Option<f64>>,
    map: Vec<Option<usize>>,
    nfree: usize,
    factor: crate::sparse::CholeskyFactor,
}

impl<'a> DnsSolver<'a> {
    pub fn new(lat: &'a LatticeModel, program: &BoundaryProgram) -> Result<Self> {
        let n = lat.joints.len() * 3;
        let mut prescribed: Vec<Option<f64>> = vec![None; n];
        let set = |name: &str| -> Result<&Vec<usize>> {
            lat.joint_sets
                .get(name)
                .ok_or_else(|| Error::Program(format!("unknown joint set '{name}'")))
        };
        let mut put = |dof: usize, v: f64| -> Result<()> {
            match prescribed[dof] {
                Some(old) if old != v => Err(Error::Program(format!("joint DOF {dof} prescribed twice"))),
                _ => {
                    prescribed[dof] = Some(v);
                    Ok(())
                }
            }
        };
        for d in &program.dirichlet_u {
            if d.direction > 1 {
                return Err(Error::Program("direction must be 0 or 1".into()));
            }
            for &a in set(&d.set)? {
                put(3 * a + d.direction, d.value)?;
            }
        }
        for d in &program.dirichlet_chi {
            if d.component != 0 {
                return Err(Error::Program("lattice joints only carry a rotation".into()));
            }
            for &a in set(&d.set)? {
                put(3 * a + 2, d.value)?;
            }
        }
        for s in &program.measured_sets {
            set(s)?;
        }
        let mut map = vec![None; n];
        let mut nfree = 0;
        for (i, p) in prescribed.iter().enumerate() {
            if p.is_none() {
                map[i] = Some(nfree);
                nfree += 1;
            }
        }
        let cliques: Vec<Vec<usize>> = lat
            .beams
            .iter()
            .map(|b| {
                (0..6)
                    .filter_map(|k| map[3 * b[k / 3] + k % 3])
                    .collect()
            })
            .collect();
        let mut m = EnvelopeMatrix::from_cliques(nfree, cliques.iter().map(|c| c.as_slice()));
        for b in &lat.beams {
            let ke = frame_stiffness(lat.joints[b[0]], lat.joints[b[1]], &lat.props);
            for p in 0..6 {
                let Some(rp) = map[3 * b[p / 3] + p % 3] else { continue };
                for q in 0..6 {
                    let Some(rq) = map[3 * b[q / 3] + q % 3] else { continue };
                    m.add_lower(rp, rq, ke[p][q]);
                }
            }
        }
        let factor = m
            .factor()
            .map_err(|e| Error::Singular(format!("lattice mechanism or insufficient supports: {e}")))?;
        Ok(Self {
            lat,
            prescribed,
            map,
            nfree,
            factor,
        })
    }

    fn internal_force(&self, q: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; q.len()];
        for b in &self.lat.beams {
            let ke = frame_stiffness(self.lat.joints[b[0]], self.lat.joints[b[1]], &self.lat.props);
            let dofs: Vec<usize> = (0..6).map(|k| 3 * b[k / 3] + k % 3).collect();
            for p in 0..6 {
                f[dofs[p]] += (0..6).map(|r| ke[p][r] * q[dofs[r]]).sum::<f64>();
            }
        }
        f
    }

    /// Joint moment `c V / 2` at every joint (two joints per cell).
    fn couple_load(&self, c: f64) -> Vec<f64> {
        let m = c * cell_area(self.lat.props.l) / 2.0;
        let mut f = vec![0.0; 3 * self.lat.joints.len()];
        for k in 0..self.lat.joints.len() {
            f[3 * k + 2] = m;
        }
        f
    }

    pub fn solve_dofs(&self, factor: f64, c: f64) -> Vec<f64> {
        let mut q: Vec<f64> = self.prescribed.iter().map(|p| p.map_or(0.0, |v| v * factor)).collect();
        let mut rhs = self.couple_load(c);
        for (r, f) in rhs.iter_mut().zip(self.internal_force(&q)) {
            *r -= f;
        }
        let mut red = vec![0.0; self.nfree];
        for (i, m) in self.map.iter().enumerate() {
            if let Some(k) = m {
                red[*k] = rhs[i];
            }
        }
        let x = self.factor.solve(&red);
        for (i, m) in self.map.iter().enumerate() {
            if let Some(k) = m {
                q[i] = x[*k];
            }
        }
        q
    }

    /// Residual `K q − F` summed over the prescribed DOFs of each set.
    pub fn reactions(&self, q: &[f64], c: f64, sets: &[String]) -> Reactions {
        let mut r = self.internal_force(q);
        for (a, b) in r.iter_mut().zip(self.couple_load(c)) {
            *a -= b;
        }
        let mut out = Reactions::new();
        for s in sets {
            let mut rec = SetReaction::default();
            for &k in &self.lat.joint_sets[s] {
                for d in 0..3 {
                    if self.prescribed[3 * k + d].is_some() {
                        match d {
                            0 | 1 => rec.f[d] += r[3 * k + d],
                            _ => rec.couple += r[3 * k + 2],
                        }
                    }
                }
            }
            out.insert(s.clone(), rec);
        }
        out
    }

    /// Sum of all prescribed-DOF residuals: `[Σ r_u1, Σ r_u2, Σ (x × r_u + r_θ)]`.
    pub fn total_reaction(&self, q: &[f64], c: f64) -> [f64; 3] {
        let mut r = self.internal_force(q);
        for (a, b) in r.iter_mut().zip(self.couple_load(c)) {
            *a -= b;
        }
        let mut tot = [0.0; 3];
        for (k, x) in self.lat.joints.iter().enumerate() {
            tot[0] += r[3 * k];
            tot[1] += r[3 * k + 1];
            tot[2] += x[0] * r[3 * k + 1] - x[1] * r[3 * k] + r[3 * k + 2];
        }
        tot
    }
}

/// Solves the lattice at the final increment of the program.
pub fn solve_dns(lat: &LatticeModel, program: &BoundaryProgram) -> Result<(JointFields, Reactions)> {
    let solver = DnsSolver::new(lat, program)?;
    let q = solver.solve_dofs(1.0, program.body_couple);
    let r = solver.reactions(&q, program.body_couple, &program.measured_sets);
    Ok((JointFields::from_dofs(&q), r))
}

/// Uniform bucket grid over the joints for radius queries.
struct JointGrid {
    cell: f64,
    origin: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl JointGrid {
    fn new(points: &[[f64; 2]], cell: f64) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let dims = [0, 1].map(|d| (((hi[d] - lo[d]) / cell).floor() as usize) + 1);
        let mut buckets = vec![Vec::new(); dims[0] * dims[1]];
        for (k, p) in points.iter().enumerate() {
            let i = ((p[0] - lo[0]) / cell) as usize;
            let j = ((p[1] - lo[1]) / cell) as usize;
            buckets[j.min(dims[1] - 1) * dims[0] + i.min(dims[0] - 1)].push(k);
        }
        Self {
            cell,
            origin: lo,
            dims,
            buckets,
        }
    }

    fn near(&self, p: [f64; 2], r: f64, points: &[[f64; 2]], out: &mut Vec<(usize, f64)>) {
        out.clear();
        let range = |d: usize| {
            let lo = ((p[d] - r - self.origin[d]) / self.cell).floor().max(0.0) as usize;
            let hi = ((p[d] + r - self.origin[d]) / self.cell).floor();
            if hi < 0.0 {
                return (1, 0);
            }
            (lo, (hi as usize).min(self.dims[d] - 1))
        };
        let (i0, i1) = range(0);
        let (j0, j1) = range(1);
        for j in j0..=j1 {
            for i in i0..=i1 {
                for &k in &self.buckets[j * self.dims[0] + i] {
                    let d = ((points[k][0] - p[0]).powi(2) + (points[k][1] - p[1]).powi(2)).sqrt();
                    if d <= r {
                        out.push((k, d));
                    }
                }
            }
        }
        out.sort_by_key(|&(k, _)| k);
    }
}

/// Maps joint kinematics onto continuum nodes.
///
/// Each nodal value is the value at the node of a linear least-squares fit
/// through the joints within `support_radius`, weighted by `1/(d + L/10)`.
/// With fewer than three joints, or collinear ones, the weighted average is
/// used instead. Constants and affine fields are reproduced exactly.
pub fn transfer_kinematics(
    lat: &LatticeModel,
    fields: &JointFields,
    mesh: &Mesh,
    support_radius: f64,
) -> Result<NodalFields> {
    if !(support_radius > 0.0) {
        return Err(Error::InvalidInput("support radius must be positive".into()));
    }
    let reg = lat.props.l / 10.0;
    let grid = JointGrid::new(&lat.joints, support_radius);
    let values: Vec<Result<[f64; 3]>> = mesh
        .nodes
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |near, (a, &x)| {
            grid.near(x, support_radius, &lat.joints, near);
            if near.is_empty() {
                return Err(Error::EmptySupport(a));
            }
            let mut m = [[0.0; 3]; 3];
            let mut rhs = [[0.0; 3]; 3];
            let mut wsum = 0.0;
            let mut avg = [0.0; 3];
            for &(k, d) in near.iter() {
                let w = 1.0 / (d + reg);
                let basis = [1.0, (lat.joints[k][0] - x[0]) / support_radius, (lat.joints[k][1] - x[1]) / support_radius];
                let v = [fields.u[k][0], fields.u[k][1], fields.theta[k]];
                wsum += w;
                for c in 0..3 {
                    avg[c] += w * v[c];
                    for r in 0..3 {
                        m[r][c] += w * basis[r] * basis[c];
                        rhs[r][c] += w * basis[r] * v[c];
                    }
                }
            }
            avg.iter_mut().for_each(|v| *v /= wsum);
            if near.len() < 3 {
                return Ok(avg);
            }
            let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
            if det.abs() <= 1e-8 * wsum.powi(3) {
                return Ok(avg);
            }
            // value at the node = first component of M⁻¹ rhs (Cramer's rule)
            let mut out = [0.0; 3];
            for c in 0..3 {
                let b = [rhs[0][c], rhs[1][c], rhs[2][c]];
                out[c] = (b[0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (b[1] * m[2][2] - m[1][2] * b[2])
                    + m[0][2] * (b[1] * m[2][1] - m[1][1] * b[2]))
                    / det;
            }
            Ok(out)
        })
        .collect();
    let mut out = NodalFields::zeros(ModelMode::Micropolar0, mesh.n_nodes());
    for (a, v) in values.into_iter().enumerate() {
        let v = v?;
        out.u[a] = [v[0], v[1]];
        out.chi[a] = v[2];
    }
    Ok(out)
}

/// Everything needed to turn a lattice experiment into DDI snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeCase {
    /// Continuum domain; its `h` sets the continuum mesh size.
    pub domain: GeometrySpec,
    /// Physical beam properties.
    pub beam: BeamProps,
    /// Cell width over domain height.
    pub epsilon: f64,
    pub program: BoundaryProgram,
    /// Transfer radius in units of the lattice beam length.
    #[serde(default = "default_support")]
    pub support_factor: f64,
}

/// Reaches re-entrant corners of clipped lattices and averages out the
/// cell-scale fluctuation of the joint field.
pub const DEFAULT_SUPPORT_FACTOR: f64 = 4.0;

fn default_support() -> f64 {
    DEFAULT_SUPPORT_FACTOR
}

/// Lattice snapshots transferred to the continuum mesh.
pub struct LatticeRun {
    pub lattice: LatticeModel,
    pub snapshots: SnapshotSet,
    pub joint_fields: Vec<JointFields>,
}

/// Builds the lattice at scale `epsilon`, runs every increment of the
/// program (one factorization, superposition of the Dirichlet ramp and the
/// constant body couple) and transfers each state onto `mesh`.
pub fn lattice_snapshots(case: &LatticeCase, mesh: &Mesh) -> Result<LatticeRun> {
    let (_, height) = case.domain.extent();
    let l = snapped_beam_length(height, case.epsilon);
    let props = case.beam.rescaled(l);
    let lattice = build_honeycomb(&case.domain, props)?;
    let program = &case.program;
    if program.increments == 0 {
        return Err(Error::Program("need at least one increment".into()));
    }
    let solver = DnsSolver::new(&lattice, program)?;
    let unit = solver.solve_dofs(1.0, 0.0);
    let couple = solver.solve_dofs(0.0, program.body_couple);
    let mut snapshots = Vec::new();
    let mut joint_fields = Vec::new();
    for alpha in 1..=program.increments {
        let f = program.load_factor(alpha);
        let q: Vec<f64> = unit.iter().zip(&couple).map(|(a, b)| f * a + b).collect();
        let jf = JointFields::from_dofs(&q);
        let fields = transfer_kinematics(&lattice, &jf, mesh, case.support_factor * l)?;
        snapshots.push(Snapshot {
            alpha,
            fields,
            reactions: solver.reactions(&q, program.body_couple, &program.measured_sets),
            constraints: program.at_increment(alpha),
            body_couple: program.body_couple,
        });
        joint_fields.push(jf);
    }
    Ok(LatticeRun {
        lattice,
        snapshots: SnapshotSet {
            mesh_ref: "mesh.json".into(),
            mode: ModelMode::Micropolar0,
            snapshots,
        },
        joint_fields,
    })
}
