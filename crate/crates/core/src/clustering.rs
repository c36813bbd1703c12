//! K-means over feature vectors: iterative minimization of the
//! within-cluster sum of squared errors.
//!
//! Initialization is greedy furthest-point seeding from the seed stream: the
//! first centroid is a uniform-random point, each next is the point
//! maximizing its minimum distance to the centroids chosen so far. Assignment
//! uses squared Euclidean distance with ties broken by the lowest cluster
//! index. Empty clusters are re-seeded to the point farthest from their
//! current centroid.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Convergence tolerance on the maximum centroid displacement.
    pub tol: f64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        KmeansConfig {
            k: 10,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub dim: usize,
    /// k × dim centroid matrix.
    pub centroids: Vec<Vec<f64>>,
    /// Patch ids in ascending order, parallel to `assignment`.
    pub ids: Vec<u64>,
    /// Cluster index per id.
    pub assignment: Vec<usize>,
    /// Objective value after every assignment pass; non-increasing.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Number of empty-cluster repairs performed.
    pub empty_cluster_events: usize,
}

impl ClusterModel {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().unwrap_or(&f64::NAN)
    }

    pub fn members(&self, cluster: usize) -> Vec<u64> {
        self.ids
            .iter()
            .zip(&self.assignment)
            .filter_map(|(&id, &c)| (c == cluster).then_some(id))
            .collect()
    }

    pub fn cluster_of(&self, patch_id: u64) -> Option<usize> {
        self.ids
            .binary_search(&patch_id)
            .ok()
            .map(|i| self.assignment[i])
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.k];
        for &c in &self.assignment {
            sizes[c] += 1;
        }
        sizes
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

struct Points {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Points {
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

fn gather(store: &FeatureStore, ids: &[u64]) -> Result<Points> {
    let dim = store.dim();
    let mut data = Vec::with_capacity(ids.len() * dim);
    for &id in ids {
        let row = store
            .row(id)
            .ok_or_else(|| Error::Data(format!("patch {id} missing from feature store")))?;
        data.extend(row.iter().map(|&v| f64::from(v)));
    }
    Ok(Points {
        n: ids.len(),
        dim,
        data,
    })
}

fn furthest_point_init(points: &Points, k: usize, seed: RngSeed) -> Vec<Vec<f64>> {
    let mut rng = seed.child("kmeans.init", 0).rng();
    let first = rng.random_range(0..points.n);
    let mut centroids = vec![points.row(first).to_vec()];
    let mut min_dist: Vec<f64> = (0..points.n)
        .map(|i| squared_distance(points.row(i), &centroids[0]))
        .collect();
    while centroids.len() < k {
        let mut best = 0;
        let mut best_dist = f64::NEG_INFINITY;
        for (i, &d) in min_dist.iter().enumerate() {
            if d > best_dist {
                best_dist = d;
                best = i;
            }
        }
        let chosen = points.row(best).to_vec();
        for i in 0..points.n {
            min_dist[i] = min_dist[i].min(squared_distance(points.row(i), &chosen));
        }
        centroids.push(chosen);
    }
    centroids
}

/// Nearest-centroid assignment; ties go to the lowest cluster index.
/// Returns the assignment and the summed squared error.
fn assign(points: &Points, centroids: &[Vec<f64>]) -> (Vec<usize>, f64) {
    let pairs: Vec<(usize, f64)> = (0..points.n)
        .into_par_iter()
        .map(|i| {
            let row = points.row(i);
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, centroid) in centroids.iter().enumerate() {
                let d = squared_distance(row, centroid);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            (i, (best, best_d))
        })
        .map(|(_, pair)| pair)
        .collect();
    let mut assignment = Vec::with_capacity(points.n);
    let mut inertia = 0.0;
    for (c, d) in pairs {
        assignment.push(c);
        inertia += d;
    }
    (assignment, inertia)
}

/// Move every empty cluster's centroid onto the point farthest from it.
/// Returns the number of repairs.
fn repair_empty(centroids: &mut [Vec<f64>], counts: &[usize], points: &Points) -> usize {
    let mut repaired = 0;
    for c in 0..centroids.len() {
        if counts[c] > 0 {
            continue;
        }
        let mut best = 0;
        let mut best_d = f64::NEG_INFINITY;
        for i in 0..points.n {
            let d = squared_distance(points.row(i), &centroids[c]);
            if d > best_d {
                best_d = d;
                best = i;
            }
        }
        centroids[c] = points.row(best).to_vec();
        repaired += 1;
    }
    repaired
}

/// Fit k-means on the vectors of `ids`. Requires `1 ≤ k ≤ ids.len()`.
pub fn kmeans_fit(
    store: &FeatureStore,
    ids: &[u64],
    config: &KmeansConfig,
    seed: RngSeed,
) -> Result<ClusterModel> {
    if config.k == 0 {
        return Err(Error::Infeasible("k must be at least 1".into()));
    }
    if ids.len() < config.k {
        return Err(Error::Infeasible(format!(
            "cannot form {} clusters from {} vectors",
            config.k,
            ids.len()
        )));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != ids.len() {
        return Err(Error::Data("duplicate patch ids in clustering input".into()));
    }
    let points = gather(store, &sorted)?;

    let mut centroids = furthest_point_init(&points, config.k, seed);
    let mut history = Vec::new();
    let mut prev: Option<Vec<usize>> = None;
    let mut events = 0usize;
    let mut converged = false;
    let mut stop_next = false;
    let mut iterations = 0usize;

    let assignment = loop {
        let (current, inertia) = assign(&points, &centroids);
        history.push(inertia);
        iterations += 1;
        let fixpoint = prev.as_ref() == Some(&current);
        if stop_next || fixpoint {
            converged = true;
            break current;
        }
        if iterations >= config.max_iter {
            break current;
        }

        let mut counts = vec![0usize; config.k];
        for &c in &current {
            counts[c] += 1;
        }
        let repaired = repair_empty(&mut centroids, &counts, &points);
        events += repaired;

        // Update step: each non-empty centroid moves to the mean of its
        // members; repaired centroids keep their re-seeded position.
        let mut sums = vec![vec![0.0f64; points.dim]; config.k];
        for (i, &c) in current.iter().enumerate() {
            let row = points.row(i);
            for (s, &v) in sums[c].iter_mut().zip(row) {
                *s += v;
            }
        }
        let mut displacement: f64 = 0.0;
        for c in 0..config.k {
            if counts[c] == 0 {
                continue;
            }
            let inv = 1.0 / counts[c] as f64;
            let mut shift = 0.0;
            for (dst, &s) in centroids[c].iter_mut().zip(&sums[c]) {
                let next = s * inv;
                let d = next - *dst;
                shift += d * d;
                *dst = next;
            }
            displacement = displacement.max(shift.sqrt());
        }
        if repaired == 0 && displacement < config.tol {
            // One more assignment pass so the returned assignment is
            // nearest with respect to the returned centroids.
            stop_next = true;
        }
        prev = Some(current);
    };

    Ok(ClusterModel {
        k: config.k,
        dim: points.dim,
        centroids,
        ids: sorted,
        assignment,
        inertia_history: history,
        iterations,
        converged,
        empty_cluster_events: events,
    })
}

/// Standalone empty-cluster repair: re-seed each empty cluster's centroid to
/// the point farthest from it. Leaves the model untouched when no cluster is
/// empty. Returns the number of repairs.
pub fn empty_cluster_repair(model: &mut ClusterModel, store: &FeatureStore) -> Result<usize> {
    let counts = model.cluster_sizes();
    if counts.iter().all(|&c| c > 0) {
        return Ok(0);
    }
    let points = gather(store, &model.ids)?;
    let repaired = repair_empty(&mut model.centroids, &counts, &points);
    model.empty_cluster_events += repaired;
    Ok(repaired)
}
