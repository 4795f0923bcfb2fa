//! Weighted k-means in Euclidean coordinates (metric-embedded states).

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::phase_space::{DatasetMeta, GeneralizedState, MaterialDataset, MetricEmbedding, MetricParams, ModelMode};

pub const MAX_SWEEPS: usize = 100;

/// Row-major point cloud.
#[derive(Clone, Debug)]
pub struct Points<'a> {
    pub dim: usize,
    pub data: &'a [f64],
}

impl<'a> Points<'a> {
    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

#[inline]
fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Nearest centroid of every point; ties go to the lowest index.
pub fn assign(points: &Points, centroids: &[f64]) -> Vec<usize> {
    let k = centroids.len() / points.dim;
    (0..points.len())
        .into_par_iter()
        .map(|p| nearest(points.row(p), centroids, points.dim, k).0)
        .collect()
}

#[inline]
pub(crate) fn nearest(x: &[f64], centroids: &[f64], dim: usize, k: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..k {
        let d = sq(x, &centroids[c * dim..(c + 1) * dim]);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Weighted centroids; returns `(centroids, cluster weights)`. Clusters
/// without points keep their previous centroid.
pub fn update_centroids(points: &Points, weights: &[f64], labels: &[usize], previous: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = points.dim;
    let k = previous.len() / dim;
    let mut sums = vec![0.0; k * dim];
    let mut mass = vec![0.0; k];
    for (p, &c) in labels.iter().enumerate() {
        let w = weights[p];
        mass[c] += w;
        for (s, x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(points.row(p)) {
            *s += w * x;
        }
    }
    for c in 0..k {
        if mass[c] > 0.0 {
            sums[c * dim..(c + 1) * dim].iter_mut().for_each(|s| *s /= mass[c]);
        } else {
            sums[c * dim..(c + 1) * dim].copy_from_slice(&previous[c * dim..(c + 1) * dim]);
        }
    }
    (sums, mass)
}

/// Weighted k-means++ seeding.
pub fn seed_plus_plus(points: &Points, weights: &[f64], k: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "number of states {k} must be between 1 and the number of points {n}"
        )));
    }
    let dim = points.dim;
    let mut centroids = Vec::with_capacity(k * dim);
    let first = WeightedIndex::new(weights)
        .map(|d| d.sample(rng))
        .map_err(|e| Error::InvalidInput(format!("weights: {e}")))?;
    centroids.extend_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|p| sq(points.row(p), points.row(first))).collect();
    for _ in 1..k {
        let score: Vec<f64> = d2.iter().zip(weights).map(|(d, w)| d * w).collect();
        let pick = match WeightedIndex::new(&score) {
            Ok(dist) => dist.sample(rng),
            // every point coincides with a centroid
            Err(_) => 0,
        };
        let row = points.row(pick);
        centroids.extend_from_slice(row);
        d2.par_iter_mut().enumerate().for_each(|(p, d)| {
            *d = d.min(sq(points.row(p), row));
        });
    }
    Ok(centroids)
}

#[derive(Clone, Debug)]
pub struct Clustering {
    pub centroids: Vec<f64>,
    pub labels: Vec<usize>,
    pub mass: Vec<f64>,
    pub sweeps: usize,
    pub stable: bool,
}

/// Lloyd iterations from the given centroids until the labels stop
/// changing or `max_sweeps` is reached. Empty clusters are reseeded at the
/// point farthest from its centroid.
pub fn lloyd(points: &Points, weights: &[f64], mut centroids: Vec<f64>, max_sweeps: usize) -> Clustering {
    let dim = points.dim;
    let k = centroids.len() / dim;
    let mut labels = assign(points, &centroids);
    let mut mass = vec![0.0; k];
    for sweep in 1..=max_sweeps {
        reseed_empty(points, &mut centroids, &mut labels);
        let (c, m) = update_centroids(points, weights, &labels, &centroids);
        centroids = c;
        mass = m;
        let next = assign(points, &centroids);
        if next == labels {
            return Clustering {
                centroids,
                labels,
                mass,
                sweeps: sweep,
                stable: true,
            };
        }
        labels = next;
    }
    Clustering {
        centroids,
        labels,
        mass,
        sweeps: max_sweeps,
        stable: false,
    }
}

fn reseed_empty(points: &Points, centroids: &mut [f64], labels: &mut [usize]) {
    let dim = points.dim;
    let k = centroids.len() / dim;
    loop {
        let mut used = vec![0usize; k];
        for &c in labels.iter() {
            used[c] += 1;
        }
        let Some(empty) = used.iter().position(|&u| u == 0) else { return };
        // farthest point among clusters that can spare one
        let mut best = (usize::MAX, -1.0);
        for (p, &c) in labels.iter().enumerate() {
            if used[c] < 2 {
                continue;
            }
            let d = sq(points.row(p), &centroids[c * dim..(c + 1) * dim]);
            if d > best.1 {
                best = (p, d);
            }
        }
        if best.0 == usize::MAX {
            return;
        }
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(points.row(best.0));
        labels[best.0] = empty;
    }
}

/// Weighted k-means of phase-space states under the metric distance.
///
/// Returns the dataset of centroids and the pointer of every state.
pub fn cluster_states(
    states: &[GeneralizedState],
    weights: &[f64],
    nstates: usize,
    metric: &MetricParams,
    mode: ModelMode,
    seed: u64,
) -> Result<(MaterialDataset, Vec<usize>)> {
    if states.len() != weights.len() {
        return Err(Error::Shape(format!("{} states, {} weights", states.len(), weights.len())));
    }
    if nstates == 0 || nstates > states.len() {
        return Err(Error::InvalidInput(format!(
            "nstates = {nstates} must be between 1 and the number of material points ({})",
            states.len()
        )));
    }
    let emb = MetricEmbedding::new(metric, mode)?;
    let dim = emb.dim();
    let mut flat = vec![0.0; states.len() * dim];
    for (z, row) in states.iter().zip(flat.chunks_mut(dim)) {
        if z.mode() != mode {
            return Err(Error::ModeMismatch(format!("state is {}, requested {mode}", z.mode())));
        }
        emb.embed_into(z, row);
    }
    let points = Points { dim, data: &flat };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = seed_plus_plus(&points, weights, nstates, &mut rng)?;
    let cl = lloyd(&points, weights, init, MAX_SWEEPS);
    let dataset = MaterialDataset {
        mode,
        metric: *metric,
        states: cl.centroids.chunks(dim).map(|c| emb.unembed(c)).collect(),
        counts: cl.mass,
        meta: DatasetMeta {
            iterations: cl.sweeps,
            seed,
            converged: cl.stable,
        },
    };
    Ok((dataset, cl.labels))
}
