use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::pca::pca_2d;
use crate::embeddings::raw_distance;
use crate::scalar::Real;

/// Parameters of the seeded spring layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutParams {
    pub attraction: f64,
    pub repulsion: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Spring edges per point (kNN graph degree).
    pub neighbors: usize,
    /// Random repulsion partners drawn per point and iteration.
    pub negative_samples: usize,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self { attraction: 1.0, repulsion: 1.0, iterations: 200, seed: 0, neighbors: 10, negative_samples: 5 }
    }
}

const INIT_SPAN: f64 = 10.0;
const MAX_STEP: f64 = 4.0;

/// Exact kNN graph over unit vectors: for each point, the indices of its `k`
/// nearest others by cosine distance (ties to the lower index).
pub fn knn_graph<T: Real>(points: &[Vec<T>], k: usize) -> Vec<Vec<usize>> {
    (0..points.len())
        .map(|i| {
            let mut d: Vec<(T, usize)> = (0..points.len())
                .filter(|&j| j != i)
                .map(|j| (raw_distance(&points[i], &points[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));
            d.truncate(k);
            d.into_iter().map(|(_, j)| j).collect()
        })
        .collect()
}

/// Refines the PCA projection with springs along kNN edges and sampled
/// repulsion. `tick(done, total)` is called once per iteration and returns
/// `false` to cancel, in which case `None` is returned.
pub fn force_layout<T: Real>(
    points: &[Vec<T>],
    params: &LayoutParams,
    mut tick: impl FnMut(usize, usize) -> bool,
) -> Option<Vec<[T; 2]>> {
    let n = points.len();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let init = pca_2d(points).coords;
    let span = init.iter().flat_map(|c| [c[0].abs(), c[1].abs()]).fold(T::zero(), T::max);
    let scale = if span > T::zero() { T::lit(INIT_SPAN) / span } else { T::one() };
    let mut pos: Vec<[T; 2]> = init
        .iter()
        .map(|c| {
            let jx = T::lit(rng.random_range(-1e-3..1e-3));
            let jy = T::lit(rng.random_range(-1e-3..1e-3));
            [c[0] * scale + jx, c[1] * scale + jy]
        })
        .collect();
    let graph = knn_graph(points, params.neighbors.min(n.saturating_sub(1)));
    let (att, rep) = (T::lit(params.attraction), T::lit(params.repulsion));
    let clip = |v: T| v.max(T::lit(-MAX_STEP)).min(T::lit(MAX_STEP));
    for it in 0..params.iterations {
        if !tick(it, params.iterations) {
            return None;
        }
        let lr = T::one() - T::from_usize_lossy(it) / T::from_usize_lossy(params.iterations);
        for i in 0..n {
            let mut f = [T::zero(); 2];
            for &j in &graph[i] {
                let d = [pos[j][0] - pos[i][0], pos[j][1] - pos[i][1]];
                let dist = (d[0] * d[0] + d[1] * d[1]).sqrt();
                if dist > T::zero() {
                    let pull = att * (dist - T::one()) / dist;
                    f[0] = f[0] + pull * d[0];
                    f[1] = f[1] + pull * d[1];
                }
            }
            if n > 1 {
                for _ in 0..params.negative_samples {
                    let mut j = rng.random_range(0..n - 1);
                    if j >= i {
                        j += 1;
                    }
                    let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1]];
                    let d2 = d[0] * d[0] + d[1] * d[1] + T::lit(0.01);
                    f[0] = f[0] + rep * d[0] / d2;
                    f[1] = f[1] + rep * d[1] / d2;
                }
            }
            pos[i][0] = pos[i][0] + clip(f[0] * lr * T::lit(0.1));
            pos[i][1] = pos[i][1] + clip(f[1] * lr * T::lit(0.1));
        }
    }
    tick(params.iterations, params.iterations).then_some(pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::l2_normalize;

    fn clusters() -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = Vec::new();
        for c in 0..2 {
            for _ in 0..20 {
                let mut v: Vec<f64> = (0..8).map(|_| rng.random_range(-0.05..0.05)).collect();
                v[c] += 1.0;
                pts.push(l2_normalize(v).unwrap());
            }
        }
        pts
    }

    #[test]
    fn deterministic_for_seed() {
        let pts = clusters();
        let p = LayoutParams { iterations: 50, ..Default::default() };
        let a = force_layout(&pts, &p, |_, _| true).unwrap();
        let b = force_layout(&pts, &p, |_, _| true).unwrap();
        assert_eq!(a, b);
        let c = force_layout(&pts, &LayoutParams { seed: 1, ..p }, |_, _| true).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn clusters_stay_apart() {
        let pts = clusters();
        let pos = force_layout(&pts, &LayoutParams::default(), |_, _| true).unwrap();
        let centroid = |r: std::ops::Range<usize>| {
            let n = r.len() as f64;
            let s = r.fold([0.0, 0.0], |acc, i| [acc[0] + pos[i][0], acc[1] + pos[i][1]]);
            [s[0] / n, s[1] / n]
        };
        let (a, b) = (centroid(0..20), centroid(20..40));
        let gap = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
        let spread = (0..20)
            .map(|i| ((pos[i][0] - a[0]).powi(2) + (pos[i][1] - a[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        assert!(gap > spread, "gap {gap} spread {spread}");
    }

    #[test]
    fn cancel_stops_within_one_iteration() {
        let pts = clusters();
        let mut calls = 0;
        let out = force_layout(&pts, &LayoutParams::default(), |it, _| {
            calls += 1;
            it < 3
        });
        assert!(out.is_none());
        assert_eq!(calls, 4);
    }

    #[test]
    fn knn_graph_excludes_self() {
        let pts = clusters();
        let g = knn_graph(&pts, 5);
        for (i, nb) in g.iter().enumerate() {
            assert_eq!(nb.len(), 5);
            assert!(!nb.contains(&i));
            assert!(nb.iter().all(|&j| (j < 20) == (i < 20)));
        }
    }
}
