use rayon::prelude::*;

use super::constraints::ConstraintPlan;
use crate::assembly::{expand, Assembly};
use crate::error::Result;
use crate::phase_space::{strain_to_stress, MetricParams};
use crate::sparse::CholeskyFactor;

/// Factors the condensed multiplier operator `Tᵀ K T` of a plan.
pub fn factor_plan(asm: &Assembly, metric: &MetricParams, plan: &ConstraintPlan) -> Result<CholeskyFactor> {
    asm.reduced_factor(metric, &plan.map, plan.nred)
}

/// Solves `Tᵀ K T λ = Tᵀ(f − Σ w Bᵀ s̄) + targets` and returns the expanded
/// multiplier field `T λ`.
pub fn solve_multipliers(
    asm: &Assembly,
    plan: &ConstraintPlan,
    factor: &CholeskyFactor,
    data_stresses: &[[f64; 16]],
) -> Vec<f64> {
    let rhs = plan.residual_rhs(&asm.divergence(data_stresses));
    expand(&plan.map, &factor.solve(&rhs))
}

/// `s_e = s̄_e + Op(B λ)_e` at every point.
pub fn update_stresses(
    asm: &Assembly,
    metric: &MetricParams,
    lambda: &[f64],
    data_stresses: &[[f64; 16]],
) -> Vec<[f64; 16]> {
    let mode = asm.mode;
    asm.strains(lambda)
        .par_iter()
        .zip(data_stresses)
        .map(|(e, sbar)| {
            let mut s = [0.0; 16];
            strain_to_stress(metric, mode, e, &mut s);
            for (a, b) in s.iter_mut().zip(sbar) {
                *a += b;
            }
            s
        })
        .collect()
}
