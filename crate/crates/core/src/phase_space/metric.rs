//! Isotropic metric operators `C`, `D` and `A` acting on full-index tensor
//! components.
//!
//! Second-order tensors are stored as four components in row-major order
//! (`x[2*i + j]`, i.e. `[11, 12, 21, 22]`); third-order tensors as eight
//! components with `x[4*i + 2*j + k]`, which is the lexicographic order
//! `[111, 112, 121, 122, 211, 212, 221, 222]`. Contractions are plain sums
//! over all index combinations, so a symmetric tensor contributes its
//! off-diagonal component twice.
//!
//! The forward operators are evaluated directly from their index formulas:
//!
//! ```text
//! C_ijkl   = λ δ_ij δ_kl + μ (δ_ik δ_jl + δ_il δ_jk)
//! D_ijkl   = c1 C_ijkl + (κ1/2) (δ_ik δ_jl − δ_il δ_jk)
//! A_ijklmn = ℓ² C_ijlm δ_kn + μ ℓ² (δ_il δ_jm − δ_im δ_jl) δ_kn
//! ```
//!
//! With the `κ1/2` skew coefficient the skew difference of the output obeys
//! `(D γ)_21 − (D γ)_12 = κ1 (γ_21 − γ_12)`.
//!
//! Inverses are applied through the invariant subspaces (volumetric,
//! symmetric deviatoric, skew) of each operator, each of which is an
//! eigenspace with a scalar eigenvalue.

use serde::{Deserialize, Serialize};

use super::ModelMode;
use crate::error::{Error, Result};

/// The five metric constants `(λ, μ, c1, κ1, ℓ)`.
///
/// The same structure doubles as the moduli of the linear reference model
/// used by the forward solver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricParams {
    pub lambda: f64,
    pub mu: f64,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub kappa1: f64,
    #[serde(default)]
    pub ell: f64,
}

impl MetricParams {
    pub fn new(lambda: f64, mu: f64, c1: f64, kappa1: f64, ell: f64) -> Self {
        Self {
            lambda,
            mu,
            c1,
            kappa1,
            ell,
        }
    }

    /// Lamé constants from Young's modulus and Poisson's ratio (plane strain).
    pub fn lame_from_young(young: f64, poisson: f64) -> (f64, f64) {
        let lambda = young * poisson / ((1.0 + poisson) * (1.0 - 2.0 * poisson));
        let mu = young / (2.0 * (1.0 + poisson));
        (lambda, mu)
    }

    /// Checks that every operator present in `mode` is positive definite.
    pub fn validate(&self, mode: ModelMode) -> Result<()> {
        let all = [self.lambda, self.mu, self.c1, self.kappa1, self.ell];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidMetric("non-finite constant".into()));
        }
        if self.mu <= 0.0 || self.lambda + self.mu <= 0.0 {
            return Err(Error::InvalidMetric(format!(
                "need mu > 0 and lambda + mu > 0, got lambda = {}, mu = {}",
                self.lambda, self.mu
            )));
        }
        if self.c1 < 0.0 || self.kappa1 < 0.0 || self.ell < 0.0 {
            return Err(Error::InvalidMetric(
                "c1, kappa1 and ell must be non-negative".into(),
            ));
        }
        match mode {
            ModelMode::Full1 => {
                if self.c1 == 0.0 || self.kappa1 == 0.0 || self.ell == 0.0 {
                    return Err(Error::InvalidMetric(
                        "Full1 requires c1, kappa1 and ell to be positive".into(),
                    ));
                }
            }
            ModelMode::Micropolar0 => {
                if self.kappa1 == 0.0 {
                    return Err(Error::InvalidMetric(
                        "Micropolar0 requires kappa1 > 0".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Which metric operator to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Block {
    /// Acts on `ε` (forward) and `σ` (inverse).
    C,
    /// Acts on `γ` (forward) and `τ` (inverse).
    D,
    /// Acts on `ζ` (forward) and `μ` (inverse).
    A,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Forward,
    Inverse,
}

impl Block {
    /// Number of full-index components the block acts on in `mode`.
    pub fn len(self, mode: ModelMode) -> usize {
        match self {
            Block::C => 4,
            Block::D => mode.gam_len(),
            Block::A => mode.zet_len(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Block::C => "C",
            Block::D => "D",
            Block::A => "A",
        }
    }
}

const S: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Unit basis vectors of the invariant subspaces of second-order tensors.
pub(crate) const VOL: [(usize, f64); 2] = [(0, S), (3, S)];
pub(crate) const DEV1: [(usize, f64); 2] = [(0, S), (3, -S)];
pub(crate) const DEV2: [(usize, f64); 2] = [(1, S), (2, S)];
pub(crate) const SKEW: [(usize, f64); 2] = [(1, -S), (2, S)];

/// One eigen-direction of a metric block: a unit vector with at most two
/// nonzero components, and its eigenvalue.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SpectralMode {
    pub basis: [(usize, f64); 2],
    pub nnz: usize,
    pub eigenvalue: f64,
    pub subspace: &'static str,
}

impl SpectralMode {
    fn pair(basis: [(usize, f64); 2], eigenvalue: f64, subspace: &'static str) -> Self {
        Self {
            basis,
            nnz: 2,
            eigenvalue,
            subspace,
        }
    }

    fn shifted(mut self, offset: usize) -> Self {
        for entry in self.basis.iter_mut().take(self.nnz) {
            entry.0 += offset;
        }
        self
    }

    #[inline]
    pub fn project(&self, x: &[f64]) -> f64 {
        self.basis[..self.nnz].iter().map(|&(i, c)| c * x[i]).sum()
    }
}

/// Eigen-decomposition of a block on its domain. For `C` the domain is the
/// symmetric tensors; the skew direction is not part of it.
pub(crate) fn spectral_modes(block: Block, p: &MetricParams, mode: ModelMode) -> Vec<SpectralMode> {
    let vol = 2.0 * (p.lambda + p.mu);
    let dev = 2.0 * p.mu;
    match (block, mode) {
        (Block::C, _) => vec![
            SpectralMode::pair(VOL, vol, "C volumetric"),
            SpectralMode::pair(DEV1, dev, "C deviatoric"),
            SpectralMode::pair(DEV2, dev, "C deviatoric"),
        ],
        (Block::D, ModelMode::Full1) => vec![
            SpectralMode::pair(VOL, p.c1 * vol, "D volumetric"),
            SpectralMode::pair(DEV1, p.c1 * dev, "D deviatoric"),
            SpectralMode::pair(DEV2, p.c1 * dev, "D deviatoric"),
            SpectralMode::pair(SKEW, p.kappa1, "D skew"),
        ],
        (Block::D, ModelMode::Micropolar0) => vec![SpectralMode {
            basis: [(0, 1.0), (0, 0.0)],
            nnz: 1,
            eigenvalue: 0.5 * p.kappa1,
            subspace: "D skew",
        }],
        (Block::A, ModelMode::Full1) => {
            let l2 = p.ell * p.ell;
            let mut modes = Vec::with_capacity(8);
            for k in 0..2 {
                // first-pair (i, j) with fixed third index k lives at 4i + 2j + k
                let remap = |b: [(usize, f64); 2]| -> [(usize, f64); 2] {
                    let slot = |s: usize| 4 * (s / 2) + 2 * (s % 2) + k;
                    [(slot(b[0].0), b[0].1), (slot(b[1].0), b[1].1)]
                };
                modes.push(SpectralMode::pair(remap(VOL), l2 * vol, "A volumetric"));
                modes.push(SpectralMode::pair(remap(DEV1), l2 * dev, "A deviatoric"));
                modes.push(SpectralMode::pair(remap(DEV2), l2 * dev, "A deviatoric"));
                modes.push(SpectralMode::pair(remap(SKEW), 2.0 * p.mu * l2, "A skew"));
            }
            modes
        }
        (Block::A, ModelMode::Micropolar0) => Vec::new(),
    }
}

/// Same modes, with slot indices shifted into a larger component array.
pub(crate) fn spectral_modes_at(
    block: Block,
    p: &MetricParams,
    mode: ModelMode,
    offset: usize,
) -> Vec<SpectralMode> {
    spectral_modes(block, p, mode)
        .into_iter()
        .map(|m| m.shifted(offset))
        .collect()
}

#[inline]
fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

#[inline]
fn c_entry(p: &MetricParams, i: usize, j: usize, k: usize, l: usize) -> f64 {
    p.lambda * delta(i, j) * delta(k, l) + p.mu * (delta(i, k) * delta(j, l) + delta(i, l) * delta(j, k))
}

fn c_forward(p: &MetricParams, x: &[f64], out: &mut [f64]) {
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += c_entry(p, i, j, k, l) * x[2 * k + l];
                }
            }
            out[2 * i + j] = acc;
        }
    }
}

fn d_forward(p: &MetricParams, x: &[f64], out: &mut [f64]) {
    let skew = 0.5 * p.kappa1;
    for i in 0..2 {
        for j in 0..2 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    let d = p.c1 * c_entry(p, i, j, k, l)
                        + skew * (delta(i, k) * delta(j, l) - delta(i, l) * delta(j, k));
                    acc += d * x[2 * k + l];
                }
            }
            out[2 * i + j] = acc;
        }
    }
}

fn a_forward(p: &MetricParams, x: &[f64], out: &mut [f64]) {
    let l2 = p.ell * p.ell;
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                let mut acc = 0.0;
                for l in 0..2 {
                    for m in 0..2 {
                        // δ_kn selects n = k
                        let a = l2 * c_entry(p, i, j, l, m)
                            + p.mu * l2 * (delta(i, l) * delta(j, m) - delta(i, m) * delta(j, l));
                        acc += a * x[4 * l + 2 * m + k];
                    }
                }
                out[4 * i + 2 * j + k] = acc;
            }
        }
    }
}

/// Forward application without shape checks. `x` and `out` hold exactly
/// `block.len(mode)` components.
pub(crate) fn forward_into(block: Block, p: &MetricParams, mode: ModelMode, x: &[f64], out: &mut [f64]) {
    match (block, mode) {
        (Block::C, _) => c_forward(p, x, out),
        (Block::D, ModelMode::Full1) => d_forward(p, x, out),
        (Block::D, ModelMode::Micropolar0) => out[0] = 0.5 * p.kappa1 * x[0],
        (Block::A, ModelMode::Full1) => a_forward(p, x, out),
        (Block::A, ModelMode::Micropolar0) => {}
    }
}

/// Inverse application through the spectral decomposition. Fails when a
/// subspace of the block's domain has a zero eigenvalue.
pub(crate) fn inverse_into(
    block: Block,
    p: &MetricParams,
    mode: ModelMode,
    x: &[f64],
    out: &mut [f64],
) -> Result<()> {
    out.iter_mut().for_each(|v| *v = 0.0);
    for m in spectral_modes(block, p, mode) {
        if m.eigenvalue <= 0.0 {
            return Err(Error::SingularMetric(m.subspace));
        }
        let coeff = m.project(x) / m.eigenvalue;
        for &(i, c) in &m.basis[..m.nnz] {
            out[i] += coeff * c;
        }
    }
    Ok(())
}

/// Applies the chosen metric operator (or its inverse) to full-index
/// tensor components.
pub fn apply_metric(
    block: Block,
    dir: Direction,
    params: &MetricParams,
    x: &[f64],
    mode: ModelMode,
) -> Result<Vec<f64>> {
    let n = block.len(mode);
    if n == 0 {
        return Err(Error::Shape(format!(
            "block {} is absent in mode {}",
            block.name(),
            mode
        )));
    }
    if x.len() != n {
        return Err(Error::Shape(format!(
            "block {} in mode {} expects {} components, got {}",
            block.name(),
            mode,
            n,
            x.len()
        )));
    }
    let mut out = vec![0.0; n];
    match dir {
        Direction::Forward => forward_into(block, params, mode, x, &mut out),
        Direction::Inverse => inverse_into(block, params, mode, x, &mut out)?,
    }
    Ok(out)
}

/// Offsets of the strain blocks inside a 16-component generalized strain
/// (or stress) vector.
pub(crate) const EPS_AT: usize = 0;
pub(crate) const GAM_AT: usize = 4;
pub(crate) const ZET_AT: usize = 8;

/// `[C ε, D γ, A ζ]` on a 16-slot generalized strain vector.
pub(crate) fn strain_to_stress(p: &MetricParams, mode: ModelMode, x: &[f64], out: &mut [f64]) {
    out[..16].iter_mut().for_each(|v| *v = 0.0);
    let ng = mode.gam_len();
    let nz = mode.zet_len();
    forward_into(Block::C, p, mode, &x[EPS_AT..EPS_AT + 4], &mut out[EPS_AT..EPS_AT + 4]);
    forward_into(Block::D, p, mode, &x[GAM_AT..GAM_AT + ng], &mut out[GAM_AT..GAM_AT + ng]);
    forward_into(Block::A, p, mode, &x[ZET_AT..ZET_AT + nz], &mut out[ZET_AT..ZET_AT + nz]);
}

/// `[C⁻¹ σ, D⁻¹ τ, A⁻¹ μ]` on a 16-slot generalized stress vector.
pub(crate) fn stress_to_strain(
    p: &MetricParams,
    mode: ModelMode,
    s: &[f64],
    out: &mut [f64],
) -> Result<()> {
    out[..16].iter_mut().for_each(|v| *v = 0.0);
    let ng = mode.gam_len();
    let nz = mode.zet_len();
    inverse_into(Block::C, p, mode, &s[EPS_AT..EPS_AT + 4], &mut out[EPS_AT..EPS_AT + 4])?;
    inverse_into(Block::D, p, mode, &s[GAM_AT..GAM_AT + ng], &mut out[GAM_AT..GAM_AT + ng])?;
    if nz > 0 {
        inverse_into(Block::A, p, mode, &s[ZET_AT..ZET_AT + nz], &mut out[ZET_AT..ZET_AT + nz])?;
    }
    Ok(())
}
