use super::metric::{spectral_modes_at, Block, MetricParams, EPS_AT, GAM_AT, ZET_AT};
use super::state::STRESS_AT;
use super::{GeneralizedState, MaterialDataset, ModelMode};
use crate::error::{Error, Result};

const SWEEPS: usize = 3;
const POINTS_PER_DECADE: usize = 20;
const HALF_SPAN_DECADES: usize = 2;

/// Per eigen-direction weighted sums of squared strain and stress
/// projections of `z − z̄`. The basis does not depend on θ, so the global
/// distance at any θ is `½ Σ_m (eig_m(θ) S_m + T_m / eig_m(θ))`.
struct ModalSums {
    blocks: Vec<Block>,
    strain: Vec<f64>,
    stress: Vec<f64>,
}

impl ModalSums {
    fn new(
        mode: ModelMode,
        reference: &MetricParams,
        states: &[GeneralizedState],
        dataset: &MaterialDataset,
        pointers: &[usize],
        weights: &[f64],
    ) -> Self {
        let mut blocks = Vec::new();
        let mut modes = Vec::new();
        for (block, at) in [(Block::C, EPS_AT), (Block::D, GAM_AT), (Block::A, ZET_AT)] {
            for m in spectral_modes_at(block, reference, mode, at) {
                blocks.push(block);
                modes.push(m);
            }
        }
        let mut strain = vec![0.0; modes.len()];
        let mut stress = vec![0.0; modes.len()];
        for ((z, &i), &w) in states.iter().zip(pointers).zip(weights) {
            let d = z.diff(&dataset.states[i]);
            let x = d.data();
            for (k, m) in modes.iter().enumerate() {
                let a = m.project(&x[..16]);
                let b = m.project(&x[STRESS_AT..]);
                strain[k] += w * a * a;
                stress[k] += w * b * b;
            }
        }
        Self { blocks, strain, stress }
    }

    fn objective(&self, p: &MetricParams, mode: ModelMode) -> f64 {
        let mut eigs = Vec::with_capacity(self.blocks.len());
        for block in [Block::C, Block::D, Block::A] {
            eigs.extend(spectral_modes_at(block, p, mode, 0).iter().map(|m| m.eigenvalue));
        }
        let mut total = 0.0;
        for ((e, s), t) in eigs.iter().zip(&self.strain).zip(&self.stress) {
            total += e * s;
            if *t > 0.0 {
                total += t / e;
            }
        }
        0.5 * total
    }
}

fn slot(p: &mut MetricParams, k: usize) -> &mut f64 {
    match k {
        0 => &mut p.lambda,
        1 => &mut p.mu,
        2 => &mut p.c1,
        3 => &mut p.kappa1,
        _ => &mut p.ell,
    }
}

/// Coordinate-wise logarithmic grid search for the metric constants that
/// minimize the global distance at fixed states, dataset and pointers.
///
/// Each parameter is scanned over four decades centred on its current
/// value (20 points per decade, 81 candidates) for three sweeps. Only
/// parameters that are positive and belong to a block present in the mode
/// are searched. A candidate replaces the current value only if it lowers
/// the objective strictly.
pub fn optimize_metric(
    states: &[GeneralizedState],
    dataset: &MaterialDataset,
    pointers: &[usize],
    weights: &[f64],
) -> Result<MetricParams> {
    if states.is_empty() || states.len() != pointers.len() || states.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} states, {} pointers, {} weights",
            states.len(),
            pointers.len(),
            weights.len()
        )));
    }
    if let Some(&i) = pointers.iter().find(|&&i| i >= dataset.states.len()) {
        return Err(Error::IndexOutOfRange(format!(
            "pointer {i}, dataset has {} states",
            dataset.states.len()
        )));
    }
    let mode = dataset.mode;
    let mut theta = dataset.metric;
    theta.validate(mode)?;
    let sums = ModalSums::new(mode, &theta, states, dataset, pointers, weights);

    let searched: &[usize] = match mode {
        ModelMode::Full1 => &[0, 1, 2, 3, 4],
        ModelMode::Micropolar0 => &[0, 1, 3],
    };
    let mut best = sums.objective(&theta, mode);
    for _ in 0..SWEEPS {
        for &k in searched {
            let centre = *slot(&mut theta, k);
            if centre <= 0.0 {
                continue;
            }
            let mut best_value = centre;
            for step in 0..=2 * HALF_SPAN_DECADES * POINTS_PER_DECADE {
                let t = step as f64 / POINTS_PER_DECADE as f64 - HALF_SPAN_DECADES as f64;
                let mut trial = theta;
                *slot(&mut trial, k) = centre * 10f64.powf(t);
                let f = sums.objective(&trial, mode);
                if f < best {
                    best = f;
                    best_value = *slot(&mut trial, k);
                }
            }
            *slot(&mut theta, k) = best_value;
        }
    }
    Ok(theta)
}
