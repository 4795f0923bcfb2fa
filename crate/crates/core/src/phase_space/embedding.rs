use super::metric::{spectral_modes_at, Block, MetricParams, SpectralMode, EPS_AT, GAM_AT, ZET_AT};
use super::state::STRESS_AT;
use super::{GeneralizedState, ModelMode};
use crate::error::Result;

/// Linear map `y = W z` with `local_distance(a, b) = ½ |W a − W b|²`.
///
/// Each axis is one eigen-direction of a metric block, scaled by `√eig` on
/// the strain side and `1/√eig` on the stress side. Clustering and nearest
/// neighbour searches run on these coordinates.
#[derive(Clone, Debug)]
pub struct MetricEmbedding {
    mode: ModelMode,
    axes: Vec<(SpectralMode, f64)>,
}

impl MetricEmbedding {
    pub fn new(params: &MetricParams, mode: ModelMode) -> Result<Self> {
        params.validate(mode)?;
        let mut axes = Vec::new();
        for (block, at) in [(Block::C, EPS_AT), (Block::D, GAM_AT), (Block::A, ZET_AT)] {
            for m in spectral_modes_at(block, params, mode, at) {
                axes.push((m, m.eigenvalue.sqrt()));
            }
        }
        for (block, at) in [(Block::C, EPS_AT), (Block::D, GAM_AT), (Block::A, ZET_AT)] {
            for m in spectral_modes_at(block, params, mode, STRESS_AT + at) {
                axes.push((m, 1.0 / m.eigenvalue.sqrt()));
            }
        }
        Ok(Self { mode, axes })
    }

    pub fn mode(&self) -> ModelMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn embed_into(&self, z: &GeneralizedState, out: &mut [f64]) {
        let x = z.data();
        for (o, (m, scale)) in out.iter_mut().zip(&self.axes) {
            *o = scale * m.project(x);
        }
    }

    pub fn embed(&self, z: &GeneralizedState) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.embed_into(z, &mut out);
        out
    }

    /// Inverse of [`embed`](Self::embed) on the metric's domain (symmetric
    /// ε and σ).
    pub fn unembed(&self, y: &[f64]) -> GeneralizedState {
        let mut data = [0.0; 32];
        for (&yi, (m, scale)) in y.iter().zip(&self.axes) {
            let c = yi / scale;
            for &(i, b) in &m.basis[..m.nnz] {
                data[i] += c * b;
            }
        }
        let strain: [f64; 16] = data[..16].try_into().unwrap();
        let stress: [f64; 16] = data[16..].try_into().unwrap();
        GeneralizedState::from_halves(self.mode, &strain, &stress)
    }

    /// `½ |a − b|²`.
    #[inline]
    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase_space::local_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(rng: &mut ChaCha8Rng, mode: ModelMode) -> GeneralizedState {
        let mut strain = [0.0; 16];
        let mut stress = [0.0; 16];
        strain.iter_mut().chain(stress.iter_mut()).for_each(|v| *v = rng.gen_range(-1.0..1.0));
        strain[2] = strain[1];
        stress[2] = stress[1];
        GeneralizedState::from_halves(mode, &strain, &stress)
    }

    #[test]
    fn dims() {
        let p = MetricParams::new(1.0, 1.0, 1.0, 1.0, 1.0);
        assert_eq!(MetricEmbedding::new(&p, ModelMode::Full1).unwrap().dim(), 30);
        assert_eq!(MetricEmbedding::new(&p, ModelMode::Micropolar0).unwrap().dim(), 8);
    }

    #[test]
    fn matches_local_distance_and_inverts() {
        let p = MetricParams::new(2.1, 0.4, 3.0, 0.9, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for mode in [ModelMode::Full1, ModelMode::Micropolar0] {
            let emb = MetricEmbedding::new(&p, mode).unwrap();
            for _ in 0..50 {
                let a = random_state(&mut rng, mode);
                let b = random_state(&mut rng, mode);
                let d = local_distance(&a, &b, &p, mode).unwrap();
                let de = MetricEmbedding::distance(&emb.embed(&a), &emb.embed(&b));
                assert!((d - de).abs() <= 1e-12 * (1.0 + d));
                let back = emb.unembed(&emb.embed(&a));
                for (x, y) in a.data().iter().zip(back.data()) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }
}
