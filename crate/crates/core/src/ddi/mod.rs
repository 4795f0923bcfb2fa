//! Data-driven identification: stress fields and a clustered material
//! dataset from kinematic snapshots and measured resultants.
//!
//! The outer loop alternates an exact stress solve for fixed data (one
//! multiplier system per snapshot) with weighted k-means on the full
//! phase-space states, and stops once the pointers repeat. With
//! `polish` set, the data stresses are instead minimized at fixed pointers
//! by preconditioned CG so that the pseudo-strains `B λ` average to zero over
//! every cluster, and the assignment is checked again.

pub mod constraints;
pub mod kmeans;
pub mod multipliers;

use log::{debug, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{expand, restrict, Assembly};
use crate::error::{Error, Result};
use crate::forward::SnapshotSet;
use crate::mesh::Mesh;
use crate::phase_space::{
    strain_to_stress, DatasetMeta, GeneralizedState, MaterialDataset, MetricEmbedding, MetricParams, ModelMode,
};
use crate::sparse::CholeskyFactor;

pub use constraints::{build_constraints, Component, ConstraintPlan, DofClass, ResultantGroup};
pub use kmeans::cluster_states;
pub use multipliers::{factor_plan, solve_multipliers, update_stresses};

use kmeans::{assign, lloyd, seed_plus_plus, update_centroids, Points, MAX_SWEEPS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentifyOptions {
    pub nstates: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_outer")]
    pub max_outer: usize,
    /// Minimize the data stresses at fixed pointers once the pointers
    /// repeat, instead of stopping right away.
    #[serde(default)]
    pub polish: bool,
    /// Target for the relative cluster-summed pseudo-strain.
    #[serde(default = "default_polish_tol")]
    pub polish_tol: f64,
    #[serde(default = "default_max_polish")]
    pub max_polish_iter: usize,
}

fn default_max_outer() -> usize {
    200
}

fn default_polish_tol() -> f64 {
    1e-10
}

fn default_max_polish() -> usize {
    2000
}

impl IdentifyOptions {
    pub fn new(nstates: usize, seed: u64) -> Self {
        Self {
            nstates,
            seed,
            max_outer: default_max_outer(),
            polish: false,
            polish_tol: default_polish_tol(),
            max_polish_iter: default_max_polish(),
        }
    }
}

/// `N̄` giving about 100 mechanical states per material state.
pub fn default_nstates(total_points: usize) -> usize {
    ((total_points as f64 / 100.0).round() as usize).max(1)
}

#[derive(Clone, Debug)]
pub struct IdentifyResult {
    pub dataset: MaterialDataset,
    /// Generalized strains per snapshot and point.
    pub strains: Vec<Vec<[f64; 16]>>,
    /// Identified generalized stresses per snapshot and point.
    pub stresses: Vec<Vec<[f64; 16]>>,
    /// Data index per material point, snapshot-major.
    pub pointers: Vec<usize>,
    /// Objective after every half-step, starting after the first stress
    /// solve.
    pub history: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Largest cluster-summed pseudo-strain relative to the largest
    /// cluster-summed strain.
    pub pseudo_strain: f64,
    /// Largest relative constraint violation seen over all stress solves.
    pub max_violation: f64,
}

impl IdentifyResult {
    pub fn states(&self) -> Vec<GeneralizedState> {
        let mode = self.dataset.mode;
        self.strains
            .iter()
            .zip(&self.stresses)
            .flat_map(|(e, s)| e.iter().zip(s).map(move |(a, b)| GeneralizedState::from_halves(mode, a, b)))
            .collect()
    }

    /// True when the objective never increased by more than `rtol` of its
    /// current value.
    pub fn is_monotone(&self, rtol: f64) -> bool {
        self.history
            .windows(2)
            .all(|w| w[1] <= w[0] + rtol * w[0].abs().max(f64::MIN_POSITIVE))
    }
}

/// Per-snapshot constraints with factors shared between identical plans.
pub(crate) struct SnapshotSystems {
    pub plans: Vec<ConstraintPlan>,
    pub factors: Vec<CholeskyFactor>,
    pub factor_of: Vec<usize>,
}

impl SnapshotSystems {
    pub fn new(mesh: &Mesh, asm: &Assembly, metric: &MetricParams, set: &SnapshotSet) -> Result<Self> {
        let mut plans = Vec::new();
        let mut factors = Vec::new();
        let mut factor_of = Vec::new();
        let mut owners: Vec<usize> = Vec::new();
        for s in &set.snapshots {
            let plan = build_constraints(mesh, asm, &s.constraints, &s.reactions, s.body_couple)?;
            let found = owners.iter().position(|&o| plans_share_map(&plans[o], &plan));
            let f = match found {
                Some(f) => f,
                None => {
                    factors.push(factor_plan(asm, metric, &plan).map_err(|e| match e {
                        Error::Singular(m) => Error::Singular(format!("multiplier system after condensation: {m}")),
                        other => other,
                    })?);
                    owners.push(plans.len());
                    factors.len() - 1
                }
            };
            factor_of.push(f);
            plans.push(plan);
        }
        Ok(Self {
            plans,
            factors,
            factor_of,
        })
    }

    fn factor(&self, a: usize) -> &CholeskyFactor {
        &self.factors[self.factor_of[a]]
    }
}

fn plans_share_map(a: &ConstraintPlan, b: &ConstraintPlan) -> bool {
    a.nred == b.nred && a.map == b.map
}

struct Problem<'a> {
    asm: &'a Assembly,
    metric: &'a MetricParams,
    sys: SnapshotSystems,
    weights: Vec<f64>,
    strains: Vec<Vec<[f64; 16]>>,
    npts: usize,
}

impl Problem<'_> {
    fn n_snap(&self) -> usize {
        self.strains.len()
    }

    fn data_field(&self, a: usize, labels: &[usize], data: &[[f64; 16]]) -> Vec<[f64; 16]> {
        labels[a * self.npts..(a + 1) * self.npts].iter().map(|&i| data[i]).collect()
    }

    /// Exact stress solve for fixed data; returns stresses and the worst
    /// relative constraint violation.
    fn stresses(&self, labels: &[usize], data: &[[f64; 16]]) -> (Vec<Vec<[f64; 16]>>, f64) {
        let out: Vec<(Vec<[f64; 16]>, f64)> = (0..self.n_snap())
            .into_par_iter()
            .map(|a| {
                let sbar = self.data_field(a, labels, data);
                let lambda = solve_multipliers(self.asm, &self.sys.plans[a], self.sys.factor(a), &sbar);
                let s = update_stresses(self.asm, self.metric, &lambda, &sbar);
                let v = self.sys.plans[a].relative_violation(&self.asm.divergence(&s));
                (s, v)
            })
            .collect();
        let worst = out.iter().map(|o| o.1).fold(0.0, f64::max);
        (out.into_iter().map(|o| o.0).collect(), worst)
    }

    /// Cluster sums `Σ w B(T K⁻¹ r)` for the reduced right-hand sides
    /// produced by `rhs(a)`.
    fn cluster_pseudo_strains(&self, labels: &[usize], k: usize, rhs: impl Fn(usize) -> Vec<f64> + Sync) -> Vec<[f64; 16]> {
        let per: Vec<Vec<[f64; 16]>> = (0..self.n_snap())
            .into_par_iter()
            .map(|a| {
                let plan = &self.sys.plans[a];
                let lambda = expand(&plan.map, &self.sys.factor(a).solve(&rhs(a)));
                self.asm.strains(&lambda)
            })
            .collect();
        let mut out = vec![[0.0; 16]; k];
        for (a, psi) in per.iter().enumerate() {
            for (p, e) in psi.iter().enumerate() {
                let w = self.weights[p];
                let acc = &mut out[labels[a * self.npts + p]];
                for (o, v) in acc.iter_mut().zip(e) {
                    *o += w * v;
                }
            }
        }
        out
    }

    fn residual(&self, labels: &[usize], data: &[[f64; 16]]) -> Vec<[f64; 16]> {
        self.cluster_pseudo_strains(labels, data.len(), |a| {
            let sbar = self.data_field(a, labels, data);
            self.sys.plans[a].residual_rhs(&self.asm.divergence(&sbar))
        })
    }

    fn hessian(&self, labels: &[usize], v: &[[f64; 16]]) -> Vec<[f64; 16]> {
        self.cluster_pseudo_strains(labels, v.len(), |a| {
            let plan = &self.sys.plans[a];
            restrict(&plan.map, plan.nred, &self.asm.divergence(&self.data_field(a, labels, v)))
        })
    }

    /// Preconditioned CG on the data stresses at fixed pointers. Returns the
    /// final relative pseudo-strain.
    fn polish(&self, labels: &[usize], mass: &[f64], data: &mut [[f64; 16]], scale: f64, tol: f64, max_iter: usize) -> (f64, usize) {
        let mode = self.asm.mode;
        let k = data.len();
        let rel = |r: &[[f64; 16]]| {
            let worst = r.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).fold(0.0, f64::max);
            if scale > 0.0 {
                worst / scale
            } else {
                worst
            }
        };
        let precond = |r: &[[f64; 16]]| -> Vec<[f64; 16]> {
            r.iter()
                .zip(mass)
                .map(|(ri, &m)| {
                    let mut z = [0.0; 16];
                    if m > 0.0 {
                        strain_to_stress(self.metric, mode, ri, &mut z);
                        z.iter_mut().for_each(|v| *v /= m);
                    }
                    z
                })
                .collect()
        };
        let dot = |a: &[[f64; 16]], b: &[[f64; 16]]| -> f64 {
            a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>()).sum()
        };
        let mut r = self.residual(labels, data);
        let mut z = precond(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut it = 0;
        while it < max_iter && rel(&r) > tol {
            it += 1;
            let hp = self.hessian(labels, &p);
            let php = dot(&p, &hp);
            if !(php > 0.0) {
                break;
            }
            let alpha = rz / php;
            for i in 0..k {
                for c in 0..16 {
                    data[i][c] += alpha * p[i][c];
                    r[i][c] -= alpha * hp[i][c];
                }
            }
            if it % 50 == 0 {
                // refresh against drift
                r = self.residual(labels, data);
            }
            z = precond(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..k {
                for c in 0..16 {
                    p[i][c] = z[i][c] + beta * p[i][c];
                }
            }
        }
        let r = self.residual(labels, data);
        (rel(&r), it)
    }
}

fn objective(points: &Points, weights: &[f64], labels: &[usize], centroids: &[f64]) -> f64 {
    let dim = points.dim;
    labels
        .iter()
        .enumerate()
        .map(|(p, &c)| weights[p] * MetricEmbedding::distance(points.row(p), &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

fn embed_all(emb: &MetricEmbedding, mode: ModelMode, strains: &[Vec<[f64; 16]>], stresses: Option<&[Vec<[f64; 16]>]>) -> Vec<f64> {
    let dim = emb.dim();
    let zero = [0.0; 16];
    let npts = strains.first().map_or(0, |s| s.len());
    let mut out = vec![0.0; strains.len() * npts * dim];
    out.par_chunks_mut(dim).enumerate().for_each(|(g, row)| {
        let (a, p) = (g / npts, g % npts);
        let s = stresses.map_or(&zero, |s| &s[a][p]);
        emb.embed_into(&GeneralizedState::from_halves(mode, &strains[a][p], s), row);
    });
    out
}

fn stress_part(emb: &MetricEmbedding, centroids: &[f64]) -> Vec<[f64; 16]> {
    centroids.chunks(emb.dim()).map(|c| *emb.unembed(c).stress()).collect()
}

/// Runs the identification on all snapshots of `set`.
pub fn identify(
    mesh: &Mesh,
    set: &SnapshotSet,
    metric: &MetricParams,
    mode: ModelMode,
    opts: &IdentifyOptions,
) -> Result<IdentifyResult> {
    if set.mode != mode {
        return Err(Error::ModeMismatch(format!("snapshots are {}, requested {mode}", set.mode)));
    }
    if set.snapshots.is_empty() {
        return Err(Error::InvalidInput("no snapshots".into()));
    }
    metric.validate(mode)?;
    let asm = Assembly::new(mesh, mode)?;
    let npts = asm.n_points();
    let total = npts * set.snapshots.len();
    if opts.nstates == 0 || opts.nstates > total {
        return Err(Error::InvalidInput(format!(
            "nstates = {} must be between 1 and the number of material points ({total})",
            opts.nstates
        )));
    }
    let point_w = asm.weights();
    let mut strains = Vec::new();
    for s in &set.snapshots {
        s.fields.check(mesh.n_nodes())?;
        strains.push(asm.strains(&s.fields.to_dofs()));
    }
    let sys = SnapshotSystems::new(mesh, &asm, metric, set)?;
    let prob = Problem {
        asm: &asm,
        metric,
        sys,
        weights: point_w.clone(),
        strains,
        npts,
    };
    let weights: Vec<f64> = (0..total).map(|g| point_w[g % npts]).collect();
    let emb = MetricEmbedding::new(metric, mode)?;
    let dim = emb.dim();

    // strain-only start, zero data stresses
    let ys0 = embed_all(&emb, mode, &prob.strains, None);
    let points = Points { dim, data: &ys0 };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let init = seed_plus_plus(&points, &weights, opts.nstates, &mut rng)?;
    let cl = lloyd(&points, &weights, init, MAX_SWEEPS);
    let mut centroids = cl.centroids;
    let mut labels = cl.labels;
    let mut data = stress_part(&emb, &centroids);
    for d in data.iter_mut() {
        d.iter_mut().for_each(|v| *v = 0.0);
    }
    let strain_scale = {
        let mut per = vec![0.0; opts.nstates];
        for (g, &c) in labels.iter().enumerate() {
            let e = &prob.strains[g / npts][g % npts];
            per[c] += weights[g] * e.iter().map(|v| v * v).sum::<f64>().sqrt();
        }
        per.into_iter().fold(0.0, f64::max)
    };

    let mut history = Vec::new();
    let mut max_violation: f64 = 0.0;
    let mut converged = false;
    let mut outer = 0;
    let mut pseudo_strain = f64::NAN;
    let mut stresses;
    let mut mass;
    loop {
        outer += 1;
        let (s, v) = prob.stresses(&labels, &data);
        stresses = s;
        max_violation = max_violation.max(v);
        let ys = embed_all(&emb, mode, &prob.strains, Some(&stresses));
        let points = Points { dim, data: &ys };
        history.push(objective(&points, &weights, &labels, &centroids));

        let cl = lloyd(&points, &weights, centroids, MAX_SWEEPS);
        history.push(objective(&points, &weights, &cl.labels, &cl.centroids));
        centroids = cl.centroids;
        mass = cl.mass;
        let repeated = cl.labels == labels;
        labels = cl.labels;
        data = stress_part(&emb, &centroids);
        debug!("outer {outer}: objective {:.6e}, repeated {repeated}", history[history.len() - 1]);

        if repeated && !opts.polish {
            pseudo_strain = prob.polish(&labels, &mass, &mut data, strain_scale, 0.0, 0).0;
            converged = true;
            break;
        }
        if repeated {
            let (rel, iters) = prob.polish(&labels, &mass, &mut data, strain_scale, opts.polish_tol, opts.max_polish_iter);
            pseudo_strain = rel;
            debug!("polish: {iters} iterations, pseudo-strain {rel:.3e}");
            let (s, v) = prob.stresses(&labels, &data);
            stresses = s;
            max_violation = max_violation.max(v);
            let ys = embed_all(&emb, mode, &prob.strains, Some(&stresses));
            let points = Points { dim, data: &ys };
            let (c, m) = update_centroids(&points, &weights, &labels, &centroids);
            centroids = c;
            mass = m;
            history.push(objective(&points, &weights, &labels, &centroids));
            let again = assign(&points, &centroids);
            if again == labels {
                converged = true;
                break;
            }
            labels = again;
            data = stress_part(&emb, &centroids);
        }
        if outer >= opts.max_outer {
            warn!("identification stopped after {outer} outer iterations without convergence");
            break;
        }
    }

    let dataset = MaterialDataset {
        mode,
        metric: *metric,
        states: centroids.chunks(dim).map(|c| emb.unembed(c)).collect(),
        counts: mass,
        meta: DatasetMeta {
            iterations: outer,
            seed: opts.seed,
            converged,
        },
    };
    Ok(IdentifyResult {
        dataset,
        strains: prob.strains,
        stresses,
        pointers: labels,
        history,
        outer_iterations: outer,
        converged,
        pseudo_strain,
        max_violation,
    })
}
