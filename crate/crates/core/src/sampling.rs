//! Information-theoretic cluster-based stratified sampling.
//!
//! For every cluster, each member's dispersion from the centroid is computed
//! (Jensen-Shannon divergence between binned distributions, or Euclidean
//! distance), standardized into z-scores, and bucketed into unit-width
//! z intervals. A per-cluster budget — the target size weighted by the
//! cluster's normalized mean dispersion — is then spent in rounds of
//! equal-size draws across the occupied intervals, so the sample keeps
//! representatives from every dispersion range instead of collapsing onto
//! the dense center.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::divergence::{js_divergence, to_distribution};
use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::rng::RngSeed;

/// Dispersion metric between a member and its cluster centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DispersionMode {
    Jsd,
    Euclidean,
}

impl DispersionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DispersionMode::Jsd => "jsd",
            DispersionMode::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for DispersionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsd" => Ok(DispersionMode::Jsd),
            "euclidean" => Ok(DispersionMode::Euclidean),
            other => Err(Error::Config(format!(
                "unknown dispersion mode {other:?}, expected jsd or euclidean"
            ))),
        }
    }
}

/// How the target is split into per-cluster budgets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Equal,
    Dispersion,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Equal => "equal",
            Weighting::Dispersion => "dispersion",
        }
    }
}

impl std::str::FromStr for Weighting {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal" => Ok(Weighting::Equal),
            "dispersion" => Ok(Weighting::Dispersion),
            other => Err(Error::Config(format!(
                "unknown weighting {other:?}, expected equal or dispersion"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub mode: DispersionMode,
    pub weighting: Weighting,
    /// Bin count for the probability-distribution representation.
    pub bins: usize,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            mode: DispersionMode::Jsd,
            weighting: Weighting::Dispersion,
            bins: 32,
            z_min: -3.0,
            z_max: 15.0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::Config(format!(
                "bin count must be at least 2, got {}",
                self.bins
            )));
        }
        if !(self.z_max > self.z_min) {
            return Err(Error::Config(format!(
                "z range [{}, {}] is empty",
                self.z_min, self.z_max
            )));
        }
        Ok(())
    }
}

/// Degenerate-σ threshold: below this, z-scores are undefined and the whole
/// cluster collapses into a single bucket (plain random sample).
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Per-cluster dispersion statistics with population mean/stdev z-scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DispersionStats {
    pub cluster: usize,
    /// Member ids in ascending order, parallel to `dispersion` and `z_scores`.
    pub members: Vec<u64>,
    pub dispersion: Vec<f64>,
    pub mean: f64,
    pub stdev: f64,
    pub z_scores: Vec<f64>,
    /// Set when the stdev fell below [`SIGMA_FLOOR`]; all z-scores are zero.
    pub degenerate: bool,
}

/// Compute each member's dispersion from the centroid plus z-scores.
pub fn dispersion_stats(
    store: &FeatureStore,
    cluster: usize,
    members: &[u64],
    centroid: &[f64],
    mode: DispersionMode,
    bins: usize,
) -> Result<DispersionStats> {
    if members.is_empty() {
        return Err(Error::State(format!(
            "cluster {cluster} has no members; dispersion undefined"
        )));
    }
    let range = store.component_range();
    let centroid_dist = match mode {
        DispersionMode::Jsd => Some(to_distribution(centroid, bins, range)?),
        DispersionMode::Euclidean => None,
    };

    let dispersion: Vec<f64> = members
        .par_iter()
        .map(|&id| -> Result<f64> {
            let row = store
                .row_f64(id)
                .ok_or_else(|| Error::Data(format!("patch {id} missing from feature store")))?;
            match mode {
                DispersionMode::Jsd => {
                    let member_dist = to_distribution(&row, bins, range)?;
                    js_divergence(&member_dist, centroid_dist.as_ref().unwrap())
                }
                DispersionMode::Euclidean => {
                    if row.len() != centroid.len() {
                        return Err(Error::Shape(format!(
                            "patch {id}: dimension {} vs centroid {}",
                            row.len(),
                            centroid.len()
                        )));
                    }
                    Ok(row
                        .iter()
                        .zip(centroid)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt())
                }
            }
        })
        .collect::<Result<Vec<f64>>>()?;

    let n = dispersion.len() as f64;
    let mean = dispersion.iter().sum::<f64>() / n;
    let variance = dispersion
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .sum::<f64>()
        / n;
    let stdev = variance.sqrt();
    let degenerate = stdev < SIGMA_FLOOR;
    let z_scores = if degenerate {
        vec![0.0; dispersion.len()]
    } else {
        dispersion.iter().map(|d| (d - mean) / stdev).collect()
    };

    Ok(DispersionStats {
        cluster,
        members: members.to_vec(),
        dispersion,
        mean,
        stdev,
        z_scores,
        degenerate,
    })
}

/// Unit-width z-score buckets spanning `[z_min, z_max]`; out-of-range scores
/// clamp into the end buckets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalBuckets {
    pub z_min: f64,
    pub z_max: f64,
    pub buckets: Vec<Vec<u64>>,
}

pub fn interval_count(z_min: f64, z_max: f64) -> usize {
    ((z_max - z_min).ceil() as usize).max(1)
}

pub fn interval_of(z: f64, z_min: f64, z_max: f64) -> usize {
    let n = interval_count(z_min, z_max) as i64;
    ((z - z_min).floor() as i64).clamp(0, n - 1) as usize
}

/// Bucket a cluster's members by the z-score of their dispersion.
pub fn bucket_by_interval(stats: &DispersionStats, z_min: f64, z_max: f64) -> IntervalBuckets {
    let n = interval_count(z_min, z_max);
    let mut buckets = vec![Vec::new(); n];
    for (&id, &z) in stats.members.iter().zip(&stats.z_scores) {
        buckets[interval_of(z, z_min, z_max)].push(id);
    }
    IntervalBuckets {
        z_min,
        z_max,
        buckets,
    }
}

/// Outcome of sampling one cluster.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterSample {
    pub ids: Vec<u64>,
    /// (interval index, draws) for intervals that contributed.
    pub per_interval: Vec<(usize, usize)>,
    /// Budget remained after all buckets were exhausted.
    pub shortfall: bool,
}

fn draw_without_replacement(bucket: &mut Vec<u64>, count: usize, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let take = count.min(bucket.len());
    let mut drawn = Vec::with_capacity(take);
    for _ in 0..take {
        let idx = rng.random_range(0..bucket.len());
        drawn.push(bucket.swap_remove(idx));
    }
    drawn
}

/// Round-based stratified draw: each round draws `min(s_i, |bucket|)` without
/// replacement from every non-empty bucket in ascending interval order with
/// `s_i = ⌊budget_left / buckets_left⌋`, removing exhausted buckets between
/// rounds. Once `s_i` floors to zero with budget remaining, a final
/// round-robin pass draws one per bucket in ascending order until the budget
/// is spent or every bucket is empty.
pub fn stratified_sample(buckets: &IntervalBuckets, budget: usize, seed: RngSeed) -> ClusterSample {
    let mut rng = seed.rng();
    stratified_sample_with(buckets, budget, &mut rng)
}

pub(crate) fn stratified_sample_with(
    buckets: &IntervalBuckets,
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> ClusterSample {
    let mut working: Vec<(usize, Vec<u64>)> = buckets
        .buckets
        .iter()
        .enumerate()
        .filter(|(_, b)| !b.is_empty())
        .map(|(i, b)| (i, b.clone()))
        .collect();
    let mut counts = vec![0usize; buckets.buckets.len()];
    let mut ids = Vec::with_capacity(budget);
    let mut remaining = budget;

    while remaining > 0 && !working.is_empty() {
        let share = remaining / working.len();
        if share == 0 {
            break;
        }
        for (interval, bucket) in working.iter_mut() {
            let drawn = draw_without_replacement(bucket, share, rng);
            counts[*interval] += drawn.len();
            remaining -= drawn.len();
            ids.extend(drawn);
        }
        working.retain(|(_, b)| !b.is_empty());
    }

    // Final round-robin spends any residual the floor division left behind.
    'outer: while remaining > 0 && !working.is_empty() {
        for (interval, bucket) in working.iter_mut() {
            if bucket.is_empty() {
                continue;
            }
            let drawn = draw_without_replacement(bucket, 1, rng);
            counts[*interval] += drawn.len();
            remaining -= drawn.len();
            ids.extend(drawn);
            if remaining == 0 {
                break 'outer;
            }
        }
        working.retain(|(_, b)| !b.is_empty());
    }

    ClusterSample {
        ids,
        per_interval: counts
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .collect(),
        shortfall: remaining > 0,
    }
}

/// Audit trail for one cluster's contribution to a balanced sample.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusterAudit {
    pub cluster: usize,
    pub size: usize,
    pub budget: usize,
    pub drawn: usize,
    pub mean_dispersion: f64,
    pub stdev_dispersion: f64,
    pub degenerate: bool,
    pub per_interval: Vec<(usize, usize)>,
    pub shortfall: bool,
}

/// Balanced subset of one source partition.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampledSet {
    /// Unique sampled patch ids, ascending.
    pub ids: Vec<u64>,
    pub target: usize,
    pub mode: DispersionMode,
    pub weighting: Weighting,
    pub audits: Vec<ClusterAudit>,
    pub shortfall: bool,
}

/// Split `target` into integer budgets proportional to `weights`, capped at
/// `sizes`, by largest-remainder rounding; capped excess is re-spread over
/// unsaturated clusters (falling back to equal weights when no positive
/// weight remains), so the budgets sum to `min(target, Σ sizes)`.
fn allocate_budgets(target: usize, weights: &[f64], sizes: &[usize]) -> Vec<usize> {
    let k = weights.len();
    let mut alloc = vec![0usize; k];
    let mut remaining = target;

    while remaining > 0 {
        let active: Vec<usize> = (0..k).filter(|&i| alloc[i] < sizes[i]).collect();
        if active.is_empty() {
            break;
        }
        let positive_weight: f64 = active.iter().map(|&i| weights[i].max(0.0)).sum();
        let use_equal = positive_weight <= 0.0;
        let total_weight = if use_equal {
            active.len() as f64
        } else {
            positive_weight
        };

        // Largest-remainder apportionment of `remaining` over active clusters.
        let mut base = Vec::with_capacity(active.len());
        let mut fractions = Vec::with_capacity(active.len());
        let mut assigned = 0usize;
        for &i in &active {
            let w = if use_equal { 1.0 } else { weights[i].max(0.0) };
            let share = remaining as f64 * w / total_weight;
            let whole = share.floor() as usize;
            base.push(whole);
            fractions.push((share - whole as f64, i));
            assigned += whole;
        }
        let mut leftover = remaining - assigned.min(remaining);
        // ties: larger fraction first, then lower cluster index
        let mut order: Vec<usize> = (0..active.len()).collect();
        order.sort_by(|&a, &b| {
            fractions[b]
                .0
                .partial_cmp(&fractions[a].0)
                .unwrap()
                .then(fractions[a].1.cmp(&fractions[b].1))
        });
        for &slot in &order {
            if leftover == 0 {
                break;
            }
            base[slot] += 1;
            leftover -= 1;
        }

        let mut consumed = 0usize;
        for (slot, &i) in active.iter().enumerate() {
            let add = base[slot].min(sizes[i] - alloc[i]);
            alloc[i] += add;
            consumed += add;
        }
        if consumed == 0 {
            break;
        }
        remaining -= consumed;
    }
    alloc
}

/// Draw a balanced sample of `target` ids from the clustered source
/// partition. Per-cluster budgets follow the configured weighting
/// (normalized mean dispersion by default), and each cluster is sampled by
/// z-score strata under its budget.
pub fn balance_partition(
    store: &FeatureStore,
    clusters: &ClusterModel,
    target: usize,
    config: &SamplerConfig,
    seed: RngSeed,
) -> Result<SampledSet> {
    config.validate()?;
    if target == 0 {
        return Err(Error::Config("sampling target must be at least 1".into()));
    }
    let source_size = clusters.ids.len();
    if target > source_size {
        return Err(Error::Infeasible(format!(
            "sampling target {target} exceeds source partition size {source_size}"
        )));
    }

    let member_lists: Vec<Vec<u64>> = (0..clusters.k).map(|c| clusters.members(c)).collect();
    let stats: Vec<Option<DispersionStats>> = member_lists
        .iter()
        .enumerate()
        .map(|(c, members)| -> Result<Option<DispersionStats>> {
            if members.is_empty() {
                return Ok(None);
            }
            Ok(Some(dispersion_stats(
                store,
                c,
                members,
                &clusters.centroids[c],
                config.mode,
                config.bins,
            )?))
        })
        .collect::<Result<Vec<_>>>()?;

    let sizes: Vec<usize> = member_lists.iter().map(|m| m.len()).collect();
    let weights: Vec<f64> = stats
        .iter()
        .map(|s| match (config.weighting, s) {
            (_, None) => 0.0,
            (Weighting::Equal, Some(_)) => 1.0,
            (Weighting::Dispersion, Some(st)) => st.mean,
        })
        .collect();
    let budgets = allocate_budgets(target, &weights, &sizes);

    let samples: Vec<Option<ClusterSample>> = stats
        .par_iter()
        .enumerate()
        .map(|(c, stat)| {
            let stat = stat.as_ref()?;
            if budgets[c] == 0 {
                return None;
            }
            let buckets = bucket_by_interval(stat, config.z_min, config.z_max);
            let mut rng = seed.child("sample.cluster", c as u64).rng();
            Some(stratified_sample_with(&buckets, budgets[c], &mut rng))
        })
        .collect();

    let mut ids = Vec::with_capacity(target);
    let mut audits = Vec::with_capacity(clusters.k);
    for c in 0..clusters.k {
        let (drawn, per_interval, cluster_shortfall) = match &samples[c] {
            Some(s) => (s.ids.clone(), s.per_interval.clone(), s.shortfall),
            None => (Vec::new(), Vec::new(), false),
        };
        let stat = stats[c].as_ref();
        audits.push(ClusterAudit {
            cluster: c,
            size: sizes[c],
            budget: budgets[c],
            drawn: drawn.len(),
            mean_dispersion: stat.map_or(0.0, |s| s.mean),
            stdev_dispersion: stat.map_or(0.0, |s| s.stdev),
            degenerate: stat.is_some_and(|s| s.degenerate),
            per_interval,
            shortfall: cluster_shortfall,
        });
        ids.extend(drawn);
    }
    ids.sort_unstable();
    let shortfall = ids.len() < target;

    Ok(SampledSet {
        ids,
        target,
        mode: config.mode,
        weighting: config.weighting,
        audits,
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_of(rows: Vec<(u64, Vec<f32>)>) -> FeatureStore {
        FeatureStore::from_rows(rows).unwrap()
    }

    fn manual_buckets(groups: Vec<Vec<u64>>) -> IntervalBuckets {
        IntervalBuckets {
            z_min: -3.0,
            z_max: groups.len() as f64 - 3.0,
            buckets: groups,
        }
    }

    #[test]
    fn dispersion_two_members_mean_and_z() {
        // centroid at origin, members at distances 1 and 3
        let store = store_of(vec![(0, vec![1.0]), (1, vec![3.0])]);
        let stats =
            dispersion_stats(&store, 0, &[0, 1], &[0.0], DispersionMode::Euclidean, 32).unwrap();
        assert!((stats.mean - 2.0).abs() < 1e-12);
        assert!((stats.stdev - 1.0).abs() < 1e-12);
        assert!((stats.z_scores[0] + 1.0).abs() < 1e-12);
        assert!((stats.z_scores[1] - 1.0).abs() < 1e-12);
        assert!(!stats.degenerate);
    }

    #[test]
    fn identical_members_take_degenerate_path() {
        let store = store_of(vec![(0, vec![2.0, 2.0]), (1, vec![2.0, 2.0])]);
        let stats =
            dispersion_stats(&store, 0, &[0, 1], &[2.0, 2.0], DispersionMode::Jsd, 8).unwrap();
        assert_eq!(stats.mean, 0.0);
        assert!(stats.degenerate);
        assert!(stats.z_scores.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn unit_square_corners_vs_center_all_equal_distance() {
        let store = store_of(vec![
            (0, vec![0.0, 0.0]),
            (1, vec![0.0, 1.0]),
            (2, vec![1.0, 0.0]),
            (3, vec![1.0, 1.0]),
        ]);
        let stats = dispersion_stats(
            &store,
            0,
            &[0, 1, 2, 3],
            &[0.5, 0.5],
            DispersionMode::Euclidean,
            8,
        )
        .unwrap();
        let d = 0.5f64.sqrt();
        for &x in &stats.dispersion {
            assert!((x - d).abs() < 1e-12);
        }
        assert!(stats.degenerate);
        assert!(stats.z_scores.iter().all(|&z| z == 0.0));
    }

    #[test]
    fn empty_cluster_is_a_state_error() {
        let store = store_of(vec![(0, vec![1.0])]);
        assert!(matches!(
            dispersion_stats(&store, 2, &[], &[0.0], DispersionMode::Euclidean, 8),
            Err(Error::State(_))
        ));
    }

    #[test]
    fn out_of_range_z_clamps_into_end_buckets() {
        assert_eq!(interval_count(-3.0, 15.0), 18);
        assert_eq!(interval_of(-50.0, -3.0, 15.0), 0);
        assert_eq!(interval_of(-3.0, -3.0, 15.0), 0);
        assert_eq!(interval_of(-2.0001, -3.0, 15.0), 0);
        assert_eq!(interval_of(0.0, -3.0, 15.0), 3);
        assert_eq!(interval_of(14.999, -3.0, 15.0), 17);
        assert_eq!(interval_of(99.0, -3.0, 15.0), 17);
    }

    #[test]
    fn forced_draw_takes_every_singleton() {
        let buckets = manual_buckets(vec![vec![10], vec![20], vec![30]]);
        let sample = stratified_sample(&buckets, 3, RngSeed(1));
        let mut ids = sample.ids.clone();
        ids.sort_unstable();
        assert_eq!(ids, vec![10, 20, 30]);
        assert!(!sample.shortfall);
    }

    #[test]
    fn two_buckets_of_ten_budget_five() {
        let buckets = manual_buckets(vec![(0..10).collect(), (100..110).collect()]);
        let sample = stratified_sample(&buckets, 5, RngSeed(7));
        assert_eq!(sample.ids.len(), 5);
        let from_first = sample.ids.iter().filter(|&&id| id < 100).count();
        let from_second = sample.ids.len() - from_first;
        // first round draws 2 from each, round-robin adds 1 more
        assert!(from_first >= 2 && from_second >= 2);
        assert!(!sample.shortfall);
    }

    #[test]
    fn zero_budget_draws_nothing() {
        let buckets = manual_buckets(vec![vec![1, 2, 3]]);
        let sample = stratified_sample(&buckets, 0, RngSeed(0));
        assert!(sample.ids.is_empty());
        assert!(!sample.shortfall);
    }

    #[test]
    fn exhausted_buckets_set_shortfall() {
        let buckets = manual_buckets(vec![vec![1, 2]]);
        let sample = stratified_sample(&buckets, 5, RngSeed(0));
        assert_eq!(sample.ids.len(), 2);
        assert!(sample.shortfall);
    }

    #[test]
    fn nonempty_buckets_each_contribute_when_budget_allows() {
        let buckets = manual_buckets(vec![
            (0..4).collect(),
            vec![],
            (10..14).collect(),
            (20..24).collect(),
        ]);
        let sample = stratified_sample(&buckets, 3, RngSeed(3));
        assert_eq!(sample.ids.len(), 3);
        let occupied: Vec<usize> = sample.per_interval.iter().map(|&(i, _)| i).collect();
        assert_eq!(occupied, vec![0, 2, 3]);
    }

    /// Two clusters in 1-D around separated centroids; dispersion means 1
    /// and 3, so a dispersion-weighted target of 8 splits into {2, 6}.
    fn dispersion_fixture() -> (FeatureStore, ClusterModel) {
        let mut rows = Vec::new();
        // cluster 0: 4 members at distance 1 from centroid 0.0
        for (i, v) in [-1.0f32, 1.0, -1.0, 1.0].iter().enumerate() {
            rows.push((i as u64, vec![*v]));
        }
        // cluster 1: 8 members at distance 3 from centroid 100.0
        for i in 0..8u64 {
            let v = if i % 2 == 0 { 97.0 } else { 103.0 };
            rows.push((4 + i, vec![v]));
        }
        let store = store_of(rows);
        let model = ClusterModel {
            k: 2,
            dim: 1,
            centroids: vec![vec![0.0], vec![100.0]],
            ids: (0..12).collect(),
            assignment: vec![0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1],
            inertia_history: vec![0.0],
            iterations: 1,
            converged: true,
            empty_cluster_events: 0,
        };
        (store, model)
    }

    fn euclidean_config() -> SamplerConfig {
        SamplerConfig {
            mode: DispersionMode::Euclidean,
            ..SamplerConfig::default()
        }
    }

    #[test]
    fn dispersion_weighting_splits_budget_proportionally() {
        let (store, model) = dispersion_fixture();
        let set = balance_partition(&store, &model, 8, &euclidean_config(), RngSeed(5)).unwrap();
        assert_eq!(set.audits[0].budget, 2);
        assert_eq!(set.audits[1].budget, 6);
        assert_eq!(set.ids.len(), 8);
        assert!(!set.shortfall);
    }

    #[test]
    fn saturated_target_returns_entire_source() {
        let (store, model) = dispersion_fixture();
        for weighting in [Weighting::Dispersion, Weighting::Equal] {
            let config = SamplerConfig {
                weighting,
                ..euclidean_config()
            };
            let set = balance_partition(&store, &model, 12, &config, RngSeed(5)).unwrap();
            assert_eq!(set.ids, (0..12).collect::<Vec<u64>>());
            assert!(!set.shortfall);
        }
    }

    #[test]
    fn equal_weighting_spreads_within_one() {
        let (store, model) = dispersion_fixture();
        let config = SamplerConfig {
            weighting: Weighting::Equal,
            ..euclidean_config()
        };
        let set = balance_partition(&store, &model, 7, &config, RngSeed(2)).unwrap();
        let budgets: Vec<usize> = set.audits.iter().map(|a| a.budget).collect();
        assert_eq!(budgets.iter().sum::<usize>(), 7);
        assert!(budgets[0].abs_diff(budgets[1]) <= 1);
        // remainder goes to the lowest cluster index
        assert_eq!(budgets[0], 4);
    }

    #[test]
    fn sampled_ids_are_unique_and_from_source() {
        let (store, model) = dispersion_fixture();
        let set = balance_partition(&store, &model, 9, &euclidean_config(), RngSeed(11)).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for &id in &set.ids {
            assert!(seen.insert(id), "duplicate id {id}");
            assert!(model.ids.binary_search(&id).is_ok());
        }
        assert_eq!(set.ids.len(), 9);
    }

    #[test]
    fn same_seed_same_sample() {
        let (store, model) = dispersion_fixture();
        let a = balance_partition(&store, &model, 6, &euclidean_config(), RngSeed(42)).unwrap();
        let b = balance_partition(&store, &model, 6, &euclidean_config(), RngSeed(42)).unwrap();
        assert_eq!(a.ids, b.ids);
    }

    #[test]
    fn infeasible_target_is_rejected() {
        let (store, model) = dispersion_fixture();
        assert!(matches!(
            balance_partition(&store, &model, 13, &euclidean_config(), RngSeed(0)),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn jsd_mode_runs_end_to_end() {
        let (store, model) = dispersion_fixture();
        let config = SamplerConfig {
            mode: DispersionMode::Jsd,
            bins: 8,
            ..SamplerConfig::default()
        };
        let set = balance_partition(&store, &model, 6, &config, RngSeed(1)).unwrap();
        assert_eq!(set.ids.len(), 6);
        assert_eq!(set.mode, DispersionMode::Jsd);
    }

    #[test]
    fn allocate_budgets_largest_remainder() {
        // weights 1:3 over target 8 → {2, 6}
        assert_eq!(allocate_budgets(8, &[1.0, 3.0], &[100, 100]), vec![2, 6]);
        let alloc = allocate_budgets(8, &[1.0, 1.0, 1.0], &[10, 10, 10]);
        assert_eq!(alloc.iter().sum::<usize>(), 8);
        assert!(alloc.iter().all(|&a| a == 2 || a == 3));
        // caps redistribute the excess
        assert_eq!(allocate_budgets(8, &[1.0, 3.0], &[100, 4]), vec![4, 4]);
        // zero weights fall back to equal split
        assert_eq!(allocate_budgets(4, &[0.0, 0.0], &[10, 10]), vec![2, 2]);
    }
}
