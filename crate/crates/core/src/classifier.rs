//! Binary sub-problem classifiers.
//!
//! Each sub-problem (A vs B, A vs C, A vs B+C) gets a small head trained on
//! frozen input features: one hidden rectified-linear layer into two logits,
//! plain SGD on the cross-entropy loss, deterministic shuffling from the seed
//! stream. The hidden post-activation vector doubles as the encoder
//! representation consumed by the fusion stage.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureStore;
use crate::rng::RngSeed;

pub const MODEL_MAGIC: &[u8; 4] = b"PBMD";
pub const MODEL_VERSION: u32 = 1;

/// The three classification sub-problems from the partition decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubProblem {
    AvB,
    AvC,
    AvBC,
}

impl SubProblem {
    pub const ALL: [SubProblem; 3] = [SubProblem::AvB, SubProblem::AvC, SubProblem::AvBC];

    pub fn as_str(self) -> &'static str {
        match self {
            SubProblem::AvB => "AvB",
            SubProblem::AvC => "AvC",
            SubProblem::AvBC => "AvBC",
        }
    }
}

impl std::str::FromStr for SubProblem {
    type Err = Error;
    fn from_str(s: &str) -> Result<SubProblem> {
        match s.to_ascii_lowercase().as_str() {
            "avb" => Ok(SubProblem::AvB),
            "avc" => Ok(SubProblem::AvC),
            "avbc" | "av(b+c)" => Ok(SubProblem::AvBC),
            other => Err(Error::Config(format!(
                "unknown sub-problem {other:?}, expected avb, avc, or avbc"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 64,
            batch_size: 512,
            learning_rate: 1e-4,
            epochs: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "hidden size, batch size, and epochs must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Dense labeled matrix assembled from the feature store.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dim: usize,
    rows: Vec<f64>,
    pub labels: Vec<u8>,
    pub ids: Vec<u64>,
}

impl Dataset {
    pub fn from_store(store: &FeatureStore, entries: &[(u64, u8)]) -> Result<Dataset> {
        let dim = store.dim();
        let mut rows = Vec::with_capacity(entries.len() * dim);
        let mut labels = Vec::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        for &(id, label) in entries {
            let row = store
                .row_f64(id)
                .ok_or_else(|| Error::Data(format!("patch {id} missing from feature store")))?;
            rows.extend(row);
            labels.push(label);
            ids.push(id);
        }
        Ok(Dataset {
            dim,
            rows,
            labels,
            ids,
        })
    }

    pub fn from_rows(dim: usize, rows: Vec<f64>, labels: Vec<u8>, ids: Vec<u64>) -> Result<Dataset> {
        if rows.len() != labels.len() * dim || labels.len() != ids.len() {
            return Err(Error::Shape(format!(
                "row buffer {} does not match {} labels of dimension {dim}",
                rows.len(),
                labels.len()
            )));
        }
        Ok(Dataset {
            dim,
            rows,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }
}

/// One sub-problem's balanced training material: sampled A positives against
/// the sampled negative set.
#[derive(Debug, Clone)]
pub struct SubProblemDataset {
    pub problem: SubProblem,
    pub data: Dataset,
    pub positives: usize,
    pub negatives: usize,
}

impl SubProblemDataset {
    pub fn assemble(
        problem: SubProblem,
        store: &FeatureStore,
        positive_ids: &[u64],
        negative_ids: &[u64],
    ) -> Result<SubProblemDataset> {
        let mut entries: Vec<(u64, u8)> = Vec::with_capacity(positive_ids.len() + negative_ids.len());
        entries.extend(positive_ids.iter().map(|&id| (id, 1u8)));
        entries.extend(negative_ids.iter().map(|&id| (id, 0u8)));
        let data = Dataset::from_store(store, &entries)?;
        Ok(SubProblemDataset {
            problem,
            data,
            positives: positive_ids.len(),
            negatives: negative_ids.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub accuracy: f64,
}

/// Per-patch model output: hard label, softmax pair, and the hidden-layer
/// post-activation vector used as the encoder representation.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub label: u8,
    pub softmax: [f64; 2],
    pub hidden: Vec<f64>,
}

/// One-hidden-layer network `d → h → 2` with ReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryClassifier {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub(crate) w1: Vec<f64>,
    pub(crate) b1: Vec<f64>,
    pub(crate) w2: Vec<f64>,
    pub(crate) b2: Vec<f64>,
    pub training_log: Vec<EpochStats>,
}

fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

impl BinaryClassifier {
    /// Xavier-uniform initialization, biases zero.
    pub fn new(input_dim: usize, hidden_dim: usize, seed: RngSeed) -> BinaryClassifier {
        let mut rng = seed.child("classifier.init", 0).rng();
        let bound1 = (6.0 / (input_dim + hidden_dim) as f64).sqrt();
        let bound2 = (6.0 / (hidden_dim + 2) as f64).sqrt();
        let w1 = (0..hidden_dim * input_dim)
            .map(|_| rng.random_range(-bound1..bound1))
            .collect();
        let w2 = (0..2 * hidden_dim)
            .map(|_| rng.random_range(-bound2..bound2))
            .collect();
        BinaryClassifier {
            input_dim,
            hidden_dim,
            w1,
            b1: vec![0.0; hidden_dim],
            w2,
            b2: vec![0.0; 2],
            training_log: Vec::new(),
        }
    }

    fn forward(&self, x: &[f64]) -> (Vec<f64>, [f64; 2]) {
        let mut hidden = vec![0.0; self.hidden_dim];
        for h in 0..self.hidden_dim {
            let mut z = self.b1[h];
            let w = &self.w1[h * self.input_dim..(h + 1) * self.input_dim];
            for (wi, xi) in w.iter().zip(x) {
                z += wi * xi;
            }
            hidden[h] = z.max(0.0);
        }
        let mut logits = [self.b2[0], self.b2[1]];
        for (o, logit) in logits.iter_mut().enumerate() {
            let w = &self.w2[o * self.hidden_dim..(o + 1) * self.hidden_dim];
            for (wi, hi) in w.iter().zip(&hidden) {
                *logit += wi * hi;
            }
        }
        (hidden, logits)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "input dimension {} does not match model dimension {}",
                x.len(),
                self.input_dim
            )));
        }
        let (hidden, logits) = self.forward(x);
        let softmax = softmax2(logits);
        // argmax with ties resolved to label 0
        let label = u8::from(softmax[1] > softmax[0]);
        Ok(Prediction {
            label,
            softmax,
            hidden,
        })
    }

    pub fn predict(&self, data: &Dataset) -> Result<Vec<Prediction>> {
        if data.dim != self.input_dim {
            return Err(Error::Shape(format!(
                "dataset dimension {} does not match model dimension {}",
                data.dim, self.input_dim
            )));
        }
        (0..data.len())
            .into_par_iter()
            .map(|i| self.predict_one(data.row(i)))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    fn param(&self, index: usize) -> f64 {
        let mut i = index;
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            if i < part.len() {
                return part[i];
            }
            i -= part.len();
        }
        panic!("parameter index {index} out of range");
    }

    fn param_mut(&mut self, index: usize) -> &mut f64 {
        let mut i = index;
        if i < self.w1.len() {
            return &mut self.w1[i];
        }
        i -= self.w1.len();
        if i < self.b1.len() {
            return &mut self.b1[i];
        }
        i -= self.b1.len();
        if i < self.w2.len() {
            return &mut self.w2[i];
        }
        i -= self.w2.len();
        &mut self.b2[i]
    }

    /// Mean softmax cross-entropy over `indices` of `data`.
    fn loss_on(&self, data: &Dataset, indices: &[usize]) -> f64 {
        let mut total = 0.0;
        for &i in indices {
            let (_, logits) = self.forward(data.row(i));
            let p = softmax2(logits);
            let y = data.labels[i] as usize;
            total -= p[y].max(1e-300).ln();
        }
        total / indices.len() as f64
    }

    /// Mean-reduced analytic gradient over `indices`, flattened in parameter
    /// order `[w1, b1, w2, b2]`. Returns (gradient, loss).
    fn gradient_on(&self, data: &Dataset, indices: &[usize]) -> (Vec<f64>, f64) {
        let d = self.input_dim;
        let h = self.hidden_dim;
        let mut gw1 = vec![0.0; self.w1.len()];
        let mut gb1 = vec![0.0; h];
        let mut gw2 = vec![0.0; self.w2.len()];
        let mut gb2 = vec![0.0; 2];
        let mut loss = 0.0;

        for &i in indices {
            let x = data.row(i);
            let (hidden, logits) = self.forward(x);
            let p = softmax2(logits);
            let y = data.labels[i] as usize;
            loss -= p[y].max(1e-300).ln();

            // d loss / d logits = softmax - onehot
            let mut dlogits = p;
            dlogits[y] -= 1.0;

            for o in 0..2 {
                gb2[o] += dlogits[o];
                for (gw, hi) in gw2[o * h..(o + 1) * h].iter_mut().zip(&hidden) {
                    *gw += dlogits[o] * hi;
                }
            }
            for (hi, &act) in hidden.iter().enumerate() {
                if act <= 0.0 {
                    continue;
                }
                let dz = dlogits[0] * self.w2[hi] + dlogits[1] * self.w2[h + hi];
                gb1[hi] += dz;
                for (gw, xi) in gw1[hi * d..(hi + 1) * d].iter_mut().zip(x) {
                    *gw += dz * xi;
                }
            }
        }

        let inv = 1.0 / indices.len() as f64;
        let mut grad = Vec::with_capacity(self.param_count());
        for part in [gw1, gb1, gw2, gb2] {
            grad.extend(part.into_iter().map(|g| g * inv));
        }
        (grad, loss * inv)
    }

    fn apply_gradient(&mut self, grad: &[f64], lr: f64) {
        let mut offset = 0;
        for part in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            for v in part.iter_mut() {
                *v -= lr * grad[offset];
                offset += 1;
            }
        }
    }

    /// Checkpoint format: magic `PBMD`, version u32, input u32, hidden u32,
    /// then w1, b1, w2, b2 as little-endian f64.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(16 + self.param_count() * 8);
        bytes.extend_from_slice(MODEL_MAGIC);
        bytes.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        bytes.extend_from_slice(&(self.input_dim as u32).to_le_bytes());
        bytes.extend_from_slice(&(self.hidden_dim as u32).to_le_bytes());
        for part in [&self.w1, &self.b1, &self.w2, &self.b2] {
            for v in part.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<BinaryClassifier> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let fail = |detail: &str| Error::integrity(path, detail);
        if bytes.len() < 16 || &bytes[0..4] != MODEL_MAGIC {
            return Err(fail("bad magic, expected PBMD"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != MODEL_VERSION {
            return Err(fail(&format!("unsupported model version {version}")));
        }
        let input_dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let hidden_dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let n_params = hidden_dim * input_dim + hidden_dim + 2 * hidden_dim + 2;
        if bytes.len() != 16 + n_params * 8 {
            return Err(fail("parameter block size mismatch"));
        }
        let mut values = Vec::with_capacity(n_params);
        for i in 0..n_params {
            let off = 16 + i * 8;
            values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
        }
        let mut it = values.into_iter();
        let w1: Vec<f64> = it.by_ref().take(hidden_dim * input_dim).collect();
        let b1: Vec<f64> = it.by_ref().take(hidden_dim).collect();
        let w2: Vec<f64> = it.by_ref().take(2 * hidden_dim).collect();
        let b2: Vec<f64> = it.collect();
        Ok(BinaryClassifier {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
            training_log: Vec::new(),
        })
    }
}

/// Binary cross-entropy of positive-class probabilities against labels,
/// mean-reduced, with probabilities clamped to `[1e-12, 1-1e-12]`.
pub fn cross_entropy_loss(predicted: &[f64], labels: &[u8]) -> Result<f64> {
    if predicted.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} predictions vs {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut total = 0.0;
    for (&p, &y) in predicted.iter().zip(labels) {
        let p = p.clamp(1e-12, 1.0 - 1e-12);
        total -= if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(total / predicted.len() as f64)
}

/// SGD training with deterministic per-epoch shuffling. Requires both
/// classes present.
pub fn train(dataset: &Dataset, config: &TrainConfig, seed: RngSeed) -> Result<BinaryClassifier> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    let positives = dataset.labels.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::Training(
            "training set must contain both classes".into(),
        ));
    }

    let mut model = BinaryClassifier::new(dataset.dim, config.hidden, seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();

    for epoch in 0..config.epochs {
        let mut rng = seed.child("classifier.shuffle", epoch as u64).rng();
        // Fisher-Yates from the epoch stream
        for i in (1..indices.len()).rev() {
            let j = rng.random_range(0..=i);
            indices.swap(i, j);
        }
        for batch in indices.chunks(config.batch_size) {
            let (grad, _) = model.gradient_on(dataset, batch);
            model.apply_gradient(&grad, config.learning_rate);
        }

        let all: Vec<usize> = (0..dataset.len()).collect();
        let loss = model.loss_on(dataset, &all);
        let mut correct = 0usize;
        for i in 0..dataset.len() {
            let p = model.predict_one(dataset.row(i))?;
            if p.label == dataset.labels[i] {
                correct += 1;
            }
        }
        model.training_log.push(EpochStats {
            epoch,
            loss,
            accuracy: correct as f64 / dataset.len() as f64,
        });
    }
    Ok(model)
}

/// Maximum relative error between analytic gradients and central finite
/// differences (step 1e-5) on at least `min_params` randomly chosen
/// parameters. Relative error uses a denominator floor of 1e-3 so that
/// near-zero gradients compare absolutely.
pub fn finite_difference_check(
    model: &BinaryClassifier,
    data: &Dataset,
    min_params: usize,
    seed: RngSeed,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Training("gradient check needs a non-empty batch".into()));
    }
    if data.dim != model.input_dim {
        return Err(Error::Shape(format!(
            "dataset dimension {} does not match model dimension {}",
            data.dim, model.input_dim
        )));
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let (analytic, _) = model.gradient_on(data, &indices);

    let total = model.param_count();
    let n_check = min_params.max(20).min(total);
    let mut rng = seed.child("gradcheck", 0).rng();
    let mut chosen = rand::seq::index::sample(&mut rng, total, n_check).into_vec();
    chosen.sort_unstable();

    let step = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = model.clone();
    for idx in chosen {
        let original = model.param(idx);
        *probe.param_mut(idx) = original + step;
        let up = probe.loss_on(data, &indices);
        *probe.param_mut(idx) = original - step;
        let down = probe.loss_on(data, &indices);
        *probe.param_mut(idx) = original;
        let fd = (up - down) / (2.0 * step);
        let denom = analytic[idx].abs().max(fd.abs()).max(1e-3);
        worst = worst.max((fd - analytic[idx]).abs() / denom);
    }
    Ok(worst)
}
