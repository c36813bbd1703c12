//! Bagged decision-tree ensemble used as the fusion meta-classifier.
//!
//! Each tree trains on a bootstrap sample with greedy best-split search by
//! Gini decrease over a random ⌈√d⌉ feature subset per node; split ties go to
//! the lowest feature index, then the lowest threshold. Ensemble prediction
//! is a majority vote over trees with ties resolved to label 0.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Minimum training samples per leaf.
    pub min_leaf: usize,
    /// Features examined per split; `None` means ⌈√d⌉.
    pub features_per_split: Option<usize>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: 16,
            min_leaf: 2,
            features_per_split: None,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.max_depth == 0 || self.min_leaf == 0 {
            return Err(Error::Config(
                "n_trees, max_depth, and min_leaf must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        /// Class frequencies of the bootstrap samples that reached the leaf.
        counts: [usize; 2],
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> u8 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if row[*feature] < *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return u8::from(counts[1] > counts[0]),
            }
        }
    }

    /// Total bootstrap samples accounted for by the leaves.
    pub fn leaf_sample_total(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Leaf { counts } => counts[0] + counts[1],
                Node::Split { .. } => 0,
            })
            .sum()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<DecisionTree>,
    pub dim: usize,
    pub config: ForestConfig,
}

impl TreeEnsemble {
    /// Fraction of trees voting for class 1.
    pub fn vote_fraction(&self, row: &[f64]) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.predict(row) == 1)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    /// Majority vote; exact ties resolve to 0.
    pub fn predict_one(&self, row: &[f64]) -> u8 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.predict(row) == 1)
            .count();
        u8::from(2 * votes > self.trees.len())
    }
}

fn gini(counts: [usize; 2]) -> f64 {
    let n = (counts[0] + counts[1]) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p0 = counts[0] as f64 / n;
    let p1 = counts[1] as f64 / n;
    1.0 - p0 * p0 - p1 * p1
}

struct TreeBuilder<'a> {
    rows: &'a [Vec<f64>],
    labels: &'a [u8],
    dim: usize,
    config: &'a ForestConfig,
    features_per_split: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn counts_of(&self, indices: &[usize]) -> [usize; 2] {
        let mut counts = [0usize; 2];
        for &i in indices {
            counts[self.labels[i] as usize] += 1;
        }
        counts
    }

    fn build(&mut self, indices: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts_of(&indices);
        let pure = counts[0] == 0 || counts[1] == 0;
        if pure || depth >= self.config.max_depth || indices.len() < 2 * self.config.min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        }

        let mut candidates =
            rand::seq::index::sample(rng, self.dim, self.features_per_split).into_vec();
        candidates.sort_unstable();

        let parent_gini = gini(counts);
        let n = indices.len() as f64;
        let mut best: Option<(f64, usize, f64)> = None;
        let mut scratch: Vec<(f64, u8)> = Vec::with_capacity(indices.len());

        for &feature in &candidates {
            scratch.clear();
            scratch.extend(
                indices
                    .iter()
                    .map(|&i| (self.rows[i][feature], self.labels[i])),
            );
            scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

            let mut left = [0usize; 2];
            for split_at in 1..scratch.len() {
                left[scratch[split_at - 1].1 as usize] += 1;
                if scratch[split_at].0 <= scratch[split_at - 1].0 {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1]];
                let nl = split_at;
                let nr = scratch.len() - split_at;
                if nl < self.config.min_leaf || nr < self.config.min_leaf {
                    continue;
                }
                let decrease = parent_gini
                    - (nl as f64 / n) * gini(left)
                    - (nr as f64 / n) * gini(right);
                // Features ascend and thresholds ascend within a feature, so
                // a strict comparison keeps the lowest-feature, lowest-
                // threshold winner on ties.
                if decrease > best.map_or(0.0, |(d, _, _)| d) {
                    let threshold = 0.5 * (scratch[split_at - 1].0 + scratch[split_at].0);
                    best = Some((decrease, feature, threshold));
                }
            }
        }

        let Some((decrease, feature, threshold)) = best else {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        };
        if decrease <= 0.0 {
            self.nodes.push(Node::Leaf { counts });
            return self.nodes.len() - 1;
        }

        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) = indices
            .into_iter()
            .partition(|&i| self.rows[i][feature] < threshold);

        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: [0, 0] }); // placeholder
        let left = self.build(left_idx, depth + 1, rng);
        let right = self.build(right_idx, depth + 1, rng);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }
}

/// Train the ensemble: one bootstrap sample and one child seed per tree,
/// trees built in parallel and assembled in tree-index order.
pub fn forest_train(
    rows: &[Vec<f64>],
    labels: &[u8],
    config: &ForestConfig,
    seed: RngSeed,
) -> Result<TreeEnsemble> {
    config.validate()?;
    if rows.is_empty() || rows.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} rows vs {} labels",
            rows.len(),
            labels.len()
        )));
    }
    let dim = rows[0].len();
    if dim == 0 {
        return Err(Error::Data("forest input dimension must be positive".into()));
    }
    if rows.iter().any(|r| r.len() != dim) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::Training(
            "forest training set must contain both classes".into(),
        ));
    }

    let features_per_split = config
        .features_per_split
        .unwrap_or_else(|| (dim as f64).sqrt().ceil() as usize)
        .clamp(1, dim);

    let trees: Vec<DecisionTree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.child("forest.tree", t as u64).rng();
            let n = rows.len();
            let bootstrap: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let mut builder = TreeBuilder {
                rows,
                labels,
                dim,
                config,
                features_per_split,
                nodes: Vec::new(),
            };
            builder.build(bootstrap, 0, &mut rng);
            DecisionTree {
                nodes: builder.nodes,
            }
        })
        .collect();

    Ok(TreeEnsemble {
        trees,
        dim,
        config: *config,
    })
}

/// Majority-vote labels for a batch.
pub fn forest_predict(ensemble: &TreeEnsemble, rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    for row in rows {
        if row.len() != ensemble.dim {
            return Err(Error::Shape(format!(
                "row dimension {} does not match forest dimension {}",
                row.len(),
                ensemble.dim
            )));
        }
    }
    Ok(rows
        .par_iter()
        .map(|r| ensemble.predict_one(r))
        .collect())
}
