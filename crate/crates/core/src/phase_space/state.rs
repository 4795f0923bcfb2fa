use serde::{Deserialize, Serialize};

use super::metric::{forward_into, spectral_modes, Block, MetricParams, EPS_AT, GAM_AT, ZET_AT};
use super::{MaterialDataset, ModelMode};
use crate::error::{Error, Result};

/// Offset of the stress half inside [`GeneralizedState::data`].
pub(crate) const STRESS_AT: usize = 16;

/// One material point's phase-space coordinates.
///
/// Storage is a fixed array of 32 full-index components: strains in slots
/// `0..16` and their conjugate stresses in `16..32`, each half laid out as
/// `[ε (4) | γ (4) | ζ (8)]`. In `Micropolar0` the relative strain is the
/// scalar `ω = γ21 − γ12` in slot 4 and its conjugate `t = τ21` in slot 20;
/// all other γ, ζ, τ and μ slots stay zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeneralizedState {
    mode: ModelMode,
    data: [f64; 32],
}

impl GeneralizedState {
    pub fn zeros(mode: ModelMode) -> Self {
        Self {
            mode,
            data: [0.0; 32],
        }
    }

    /// Builds a state from 16-slot strain and stress halves, dropping any
    /// slot that is inactive in `mode`.
    pub fn from_halves(mode: ModelMode, strain: &[f64; 16], stress: &[f64; 16]) -> Self {
        let mut s = Self::zeros(mode);
        s.data[..16].copy_from_slice(strain);
        s.data[16..].copy_from_slice(stress);
        s.clear_inactive();
        s
    }

    pub(crate) fn clear_inactive(&mut self) {
        let ng = self.mode.gam_len();
        let nz = self.mode.zet_len();
        for half in [0, STRESS_AT] {
            self.data[half + GAM_AT + ng..half + ZET_AT].iter_mut().for_each(|v| *v = 0.0);
            self.data[half + ZET_AT + nz..half + 16].iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn data(&self) -> &[f64; 32] {
        &self.data
    }

    pub fn strain(&self) -> &[f64; 16] {
        self.data[..16].try_into().unwrap()
    }

    pub fn stress(&self) -> &[f64; 16] {
        self.data[16..].try_into().unwrap()
    }

    pub fn strain_mut(&mut self) -> &mut [f64; 16] {
        (&mut self.data[..16]).try_into().unwrap()
    }

    pub fn stress_mut(&mut self) -> &mut [f64; 16] {
        (&mut self.data[16..]).try_into().unwrap()
    }

    /// `[11, 12, 21, 22]`.
    pub fn eps(&self) -> &[f64] {
        &self.data[EPS_AT..EPS_AT + 4]
    }

    /// `[11, 12, 21, 22]` in Full1, `[ω]` in Micropolar0.
    pub fn gam(&self) -> &[f64] {
        &self.data[GAM_AT..GAM_AT + self.mode.gam_len()]
    }

    pub fn zet(&self) -> &[f64] {
        &self.data[ZET_AT..ZET_AT + self.mode.zet_len()]
    }

    pub fn sig(&self) -> &[f64] {
        &self.data[STRESS_AT + EPS_AT..STRESS_AT + EPS_AT + 4]
    }

    /// `[11, 12, 21, 22]` in Full1, `[t]` in Micropolar0.
    pub fn tau(&self) -> &[f64] {
        &self.data[STRESS_AT + GAM_AT..STRESS_AT + GAM_AT + self.mode.gam_len()]
    }

    pub fn mu3(&self) -> &[f64] {
        &self.data[STRESS_AT + ZET_AT..STRESS_AT + ZET_AT + self.mode.zet_len()]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = *self;
        out.data.iter_mut().for_each(|v| *v *= factor);
        out
    }

    /// Component-wise `self − other`. Modes must agree.
    pub fn diff(&self, other: &Self) -> Self {
        let mut out = *self;
        for (a, b) in out.data.iter_mut().zip(other.data.iter()) {
            *a -= b;
        }
        out
    }

    /// Packs the state in the file layout.
    pub fn to_packed(&self) -> PackedState {
        let pack_sym = |x: &[f64]| vec![x[0], x[3], x[1]];
        let pack_gam = |x: &[f64]| match self.mode {
            ModelMode::Full1 => vec![x[0], x[3], x[1], x[2]],
            ModelMode::Micropolar0 => vec![x[0]],
        };
        PackedState {
            eps: pack_sym(self.eps()),
            gam: pack_gam(&self.data[GAM_AT..GAM_AT + 4]),
            zet: self.zet().to_vec(),
            sig: pack_sym(self.sig()),
            tau: pack_gam(&self.data[STRESS_AT + GAM_AT..STRESS_AT + GAM_AT + 4]),
            mu: self.mu3().to_vec(),
        }
    }

    /// Unpacks a file record, checking component counts against `mode`.
    pub fn from_packed(mode: ModelMode, p: &PackedState) -> Result<Self> {
        let check = |name: &str, v: &[f64], n: usize| -> Result<()> {
            if v.len() != n {
                return Err(Error::Shape(format!(
                    "'{name}' has {} components, mode {mode} expects {n}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Format(format!("non-finite value in '{name}'")));
            }
            Ok(())
        };
        check("eps", &p.eps, 3)?;
        check("gam", &p.gam, mode.gam_len())?;
        check("zet", &p.zet, mode.zet_len())?;
        check("sig", &p.sig, 3)?;
        check("tau", &p.tau, mode.gam_len())?;
        check("mu", &p.mu, mode.zet_len())?;
        let mut s = Self::zeros(mode);
        for (half, sym, gam, zet) in [(0, &p.eps, &p.gam, &p.zet), (STRESS_AT, &p.sig, &p.tau, &p.mu)] {
            s.data[half] = sym[0];
            s.data[half + 1] = sym[2];
            s.data[half + 2] = sym[2];
            s.data[half + 3] = sym[1];
            match mode {
                ModelMode::Full1 => {
                    s.data[half + GAM_AT] = gam[0];
                    s.data[half + GAM_AT + 1] = gam[2];
                    s.data[half + GAM_AT + 2] = gam[3];
                    s.data[half + GAM_AT + 3] = gam[1];
                }
                ModelMode::Micropolar0 => s.data[half + GAM_AT] = gam[0],
            }
            s.data[half + ZET_AT..half + ZET_AT + zet.len()].copy_from_slice(zet);
        }
        Ok(s)
    }
}

/// File layout of one state: symmetric tensors as `[11, 22, 12]`, relative
/// strain and stress as `[11, 22, 12, 21]` (Full1) or `[ω]` / `[t]`
/// (Micropolar0), third-order tensors in lexicographic `ijk` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackedState {
    pub eps: Vec<f64>,
    pub gam: Vec<f64>,
    #[serde(default)]
    pub zet: Vec<f64>,
    pub sig: Vec<f64>,
    pub tau: Vec<f64>,
    #[serde(default)]
    pub mu: Vec<f64>,
}

fn quad_forward(block: Block, p: &MetricParams, mode: ModelMode, x: &[f64]) -> f64 {
    let mut y = [0.0; 8];
    forward_into(block, p, mode, x, &mut y[..x.len()]);
    x.iter().zip(&y).map(|(a, b)| a * b).sum()
}

fn quad_inverse(block: Block, p: &MetricParams, mode: ModelMode, x: &[f64]) -> f64 {
    spectral_modes(block, p, mode)
        .iter()
        .map(|m| {
            let c = m.project(x);
            c * c / m.eigenvalue
        })
        .sum()
}

/// Metric distance with no validation. `params` must be valid for `mode`.
pub(crate) fn distance_unchecked(
    p: &MetricParams,
    mode: ModelMode,
    z: &GeneralizedState,
    zbar: &GeneralizedState,
) -> f64 {
    let d = z.diff(zbar);
    let ng = mode.gam_len();
    let nz = mode.zet_len();
    let x = &d.data;
    let s = STRESS_AT;
    let mut acc = quad_forward(Block::C, p, mode, &x[EPS_AT..EPS_AT + 4])
        + quad_inverse(Block::C, p, mode, &x[s + EPS_AT..s + EPS_AT + 4])
        + quad_forward(Block::D, p, mode, &x[GAM_AT..GAM_AT + ng])
        + quad_inverse(Block::D, p, mode, &x[s + GAM_AT..s + GAM_AT + ng]);
    if nz > 0 {
        acc += quad_forward(Block::A, p, mode, &x[ZET_AT..ZET_AT + nz])
            + quad_inverse(Block::A, p, mode, &x[s + ZET_AT..s + ZET_AT + nz]);
    }
    0.5 * acc
}

/// Local phase-space distance `½ ‖z − z̄‖²`.
pub fn local_distance(
    z: &GeneralizedState,
    zbar: &GeneralizedState,
    params: &MetricParams,
    mode: ModelMode,
) -> Result<f64> {
    if z.mode != mode || zbar.mode != mode {
        return Err(Error::ModeMismatch(format!(
            "states are {} and {}, requested {}",
            z.mode, zbar.mode, mode
        )));
    }
    params.validate(mode)?;
    Ok(distance_unchecked(params, mode, z, zbar))
}

/// `Σ_e w_e · local_distance(states[e], dataset.states[pointers[e]])`.
pub fn global_distance(
    states: &[GeneralizedState],
    dataset: &MaterialDataset,
    pointers: &[usize],
    weights: &[f64],
) -> Result<f64> {
    if states.len() != pointers.len() || states.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} states, {} pointers, {} weights",
            states.len(),
            pointers.len(),
            weights.len()
        )));
    }
    let mode = dataset.mode;
    dataset.metric.validate(mode)?;
    let mut total = 0.0;
    for (e, ((z, &i), &w)) in states.iter().zip(pointers).zip(weights).enumerate() {
        let zbar = dataset.states.get(i).ok_or_else(|| {
            Error::IndexOutOfRange(format!(
                "pointer {i} at point {e}, dataset has {} states",
                dataset.states.len()
            ))
        })?;
        if z.mode != mode {
            return Err(Error::ModeMismatch(format!("point {e} is {}, dataset is {mode}", z.mode)));
        }
        total += w * distance_unchecked(&dataset.metric, mode, z, zbar);
    }
    Ok(total)
}
