//! Information integration across the three sub-problem models.
//!
//! Five strategies fuse per-patch outputs into one label:
//! - M0: majority vote over the three hard predictions;
//! - M1: a tree ensemble over the concatenated softmax pairs;
//! - M2: concatenated encoder features, PCA, then the ensemble;
//! - M3: per-model PCA, concatenation, then the ensemble;
//! - M4: elementwise average pooling of encoder features through GeLU,
//!   then the ensemble.
//!
//! The meta-classifier always fits on training-fold inputs and predicts the
//! held-out inputs, so fused metrics carry no fold leakage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{forest_train, ForestConfig, TreeEnsemble};
use crate::pca::{pca_fit, PcaModel, Retain};
use crate::rng::RngSeed;

/// Per-patch outputs of the three sub-problem models plus the ground truth
/// available for meta-training.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusionInput {
    pub patch_id: u64,
    /// Hard predictions (ŷ_AvB, ŷ_AvC, ŷ_Av(B+C)).
    pub labels: [u8; 3],
    /// Softmax pairs per model.
    pub softmax: [[f64; 2]; 3],
    /// Encoder representations per model, equal length.
    pub encoders: [Vec<f64>; 3],
    pub truth: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    M0,
    M1,
    M2,
    M3,
    M4,
}

impl FusionMode {
    pub const ALL: [FusionMode; 5] = [
        FusionMode::M0,
        FusionMode::M1,
        FusionMode::M2,
        FusionMode::M3,
        FusionMode::M4,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::M0 => "m0",
            FusionMode::M1 => "m1",
            FusionMode::M2 => "m2",
            FusionMode::M3 => "m3",
            FusionMode::M4 => "m4",
        }
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<FusionMode> {
        match s.to_ascii_lowercase().as_str() {
            "m0" => Ok(FusionMode::M0),
            "m1" => Ok(FusionMode::M1),
            "m2" => Ok(FusionMode::M2),
            "m3" => Ok(FusionMode::M3),
            "m4" => Ok(FusionMode::M4),
            other => Err(Error::Config(format!(
                "unknown fusion mode {other:?}, expected m0..m4"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Variance fraction retained by PCA in M2/M3.
    pub pca_variance: f64,
    /// Hard cap on retained components.
    pub pca_max_components: usize,
    pub forest: ForestConfig,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            pca_variance: 0.95,
            pca_max_components: 64,
            forest: ForestConfig::default(),
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pca_variance > 0.0 && self.pca_variance <= 1.0) {
            return Err(Error::Config(format!(
                "pca_variance must lie in (0, 1], got {}",
                self.pca_variance
            )));
        }
        if self.pca_max_components == 0 {
            return Err(Error::Config("pca_max_components must be positive".into()));
        }
        self.forest.validate()
    }
}

/// Gaussian error linear unit, tanh form:
/// `0.5·z·(1 + tanh(√(2/π)·(z + 0.044715·z³)))`.
pub fn gelu(z: f64) -> f64 {
    const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
    0.5 * z * (1.0 + (SQRT_2_OVER_PI * (z + 0.044715 * z * z * z)).tanh())
}

/// Majority vote: 1 iff at least two of the three labels are 1.
pub fn fuse_m0(labels: [u8; 3]) -> u8 {
    u8::from(labels.iter().map(|&l| u32::from(l)).sum::<u32>() >= 2)
}

/// Fused labels and positive-class scores for an evaluation set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FusedPrediction {
    pub mode: FusionMode,
    pub labels: Vec<u8>,
    /// Score in [0,1] per patch: vote fraction for M0, ensemble vote
    /// fraction for the learned modes.
    pub scores: Vec<f64>,
}

fn m1_features(input: &FusionInput) -> Vec<f64> {
    let mut out = Vec::with_capacity(6);
    for s in &input.softmax {
        out.extend_from_slice(s);
    }
    out
}

fn m2_raw_features(input: &FusionInput) -> Vec<f64> {
    let mut out =
        Vec::with_capacity(input.encoders[0].len() + input.encoders[1].len() + input.encoders[2].len());
    for e in &input.encoders {
        out.extend_from_slice(e);
    }
    out
}

fn m4_features(input: &FusionInput) -> Result<Vec<f64>> {
    let h = input.encoders[0].len();
    if input.encoders.iter().any(|e| e.len() != h) {
        return Err(Error::Shape(format!(
            "patch {}: encoder lengths differ",
            input.patch_id
        )));
    }
    Ok((0..h)
        .map(|i| {
            let pooled =
                (input.encoders[0][i] + input.encoders[1][i] + input.encoders[2][i]) / 3.0;
            gelu(pooled)
        })
        .collect())
}

fn validate_inputs(inputs: &[FusionInput]) -> Result<()> {
    let Some(first) = inputs.first() else {
        return Err(Error::Data("empty fusion input set".into()));
    };
    let h = first.encoders[0].len();
    for input in inputs {
        for e in &input.encoders {
            if e.len() != h {
                return Err(Error::Shape(format!(
                    "patch {}: encoder length {} differs from {h}",
                    input.patch_id,
                    e.len()
                )));
            }
        }
        for s in &input.softmax {
            let total = s[0] + s[1];
            if !((total - 1.0).abs() < 1e-6 && s[0] >= 0.0 && s[1] >= 0.0) {
                return Err(Error::Data(format!(
                    "patch {}: softmax pair {s:?} is not a distribution",
                    input.patch_id
                )));
            }
        }
    }
    Ok(())
}

fn forest_fuse(
    train_features: Vec<Vec<f64>>,
    train_labels: Vec<u8>,
    eval_features: Vec<Vec<f64>>,
    mode: FusionMode,
    config: &ForestConfig,
    seed: RngSeed,
) -> Result<FusedPrediction> {
    let ensemble: TreeEnsemble = forest_train(&train_features, &train_labels, config, seed)?;
    let labels = eval_features
        .iter()
        .map(|r| ensemble.predict_one(r))
        .collect();
    let scores = eval_features
        .iter()
        .map(|r| ensemble.vote_fraction(r))
        .collect();
    Ok(FusedPrediction {
        mode,
        labels,
        scores,
    })
}

fn fit_block_pca(
    train: &[FusionInput],
    block: usize,
    config: &FusionConfig,
) -> Result<PcaModel> {
    let rows: Vec<Vec<f64>> = train.iter().map(|i| i.encoders[block].clone()).collect();
    let mut model = pca_fit(&rows, Retain::VarianceFraction(config.pca_variance))?;
    model.truncate(config.pca_max_components);
    Ok(model)
}

/// Apply one fusion strategy: fit any learned parts on `train`, predict
/// `eval`. M0 needs no fitting and ignores `train`.
pub fn fuse(
    mode: FusionMode,
    train: &[FusionInput],
    eval: &[FusionInput],
    config: &FusionConfig,
    seed: RngSeed,
) -> Result<FusedPrediction> {
    config.validate()?;
    validate_inputs(eval)?;

    if mode == FusionMode::M0 {
        let labels: Vec<u8> = eval.iter().map(|i| fuse_m0(i.labels)).collect();
        let scores = eval
            .iter()
            .map(|i| i.labels.iter().map(|&l| f64::from(l)).sum::<f64>() / 3.0)
            .collect();
        return Ok(FusedPrediction {
            mode,
            labels,
            scores,
        });
    }

    validate_inputs(train)?;
    let train_labels: Vec<u8> = train.iter().map(|i| i.truth).collect();

    match mode {
        FusionMode::M0 => unreachable!(),
        FusionMode::M1 => {
            let train_features = train.iter().map(m1_features).collect();
            let eval_features = eval.iter().map(m1_features).collect();
            forest_fuse(
                train_features,
                train_labels,
                eval_features,
                mode,
                &config.forest,
                seed,
            )
        }
        FusionMode::M2 => {
            let train_raw: Vec<Vec<f64>> = train.iter().map(m2_raw_features).collect();
            let mut pca = pca_fit(&train_raw, Retain::VarianceFraction(config.pca_variance))?;
            pca.truncate(config.pca_max_components);
            let train_features = train_raw
                .iter()
                .map(|r| pca.project(r))
                .collect::<Result<Vec<_>>>()?;
            let eval_features = eval
                .iter()
                .map(|i| pca.project(&m2_raw_features(i)))
                .collect::<Result<Vec<_>>>()?;
            forest_fuse(
                train_features,
                train_labels,
                eval_features,
                mode,
                &config.forest,
                seed,
            )
        }
        FusionMode::M3 => {
            let pcas: Vec<PcaModel> = (0..3)
                .map(|b| fit_block_pca(train, b, config))
                .collect::<Result<Vec<_>>>()?;
            let project = |input: &FusionInput| -> Result<Vec<f64>> {
                let mut out = Vec::new();
                for (b, pca) in pcas.iter().enumerate() {
                    out.extend(pca.project(&input.encoders[b])?);
                }
                Ok(out)
            };
            let train_features = train.iter().map(project).collect::<Result<Vec<_>>>()?;
            let eval_features = eval.iter().map(project).collect::<Result<Vec<_>>>()?;
            forest_fuse(
                train_features,
                train_labels,
                eval_features,
                mode,
                &config.forest,
                seed,
            )
        }
        FusionMode::M4 => {
            let train_features = train.iter().map(m4_features).collect::<Result<Vec<_>>>()?;
            let eval_features = eval.iter().map(m4_features).collect::<Result<Vec<_>>>()?;
            forest_fuse(
                train_features,
                train_labels,
                eval_features,
                mode,
                &config.forest,
                seed,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn input_with(
        patch_id: u64,
        labels: [u8; 3],
        softmax: [[f64; 2]; 3],
        encoders: [Vec<f64>; 3],
        truth: u8,
    ) -> FusionInput {
        FusionInput {
            patch_id,
            labels,
            softmax,
            encoders,
            truth,
        }
    }

    fn simple_input(patch_id: u64, truth: u8, e: f64) -> FusionInput {
        let soft = if truth == 1 { [0.0, 1.0] } else { [1.0, 0.0] };
        input_with(
            patch_id,
            [truth; 3],
            [soft; 3],
            [vec![e], vec![e], vec![e]],
            truth,
        )
    }

    #[test]
    fn m0_truth_table_matches_sum_rule() {
        for a in 0..2u8 {
            for b in 0..2u8 {
                for c in 0..2u8 {
                    let expected = u8::from(a + b + c >= 2);
                    assert_eq!(fuse_m0([a, b, c]), expected, "case ({a},{b},{c})");
                }
            }
        }
        assert_eq!(fuse_m0([1, 1, 0]), 1);
        assert_eq!(fuse_m0([0, 0, 0]), 0);
    }

    #[test]
    fn gelu_hand_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(3.0) - 2.9964).abs() < 1e-4);
        assert!((gelu(-3.0) - (-0.0036)).abs() < 1e-4);
        // monotone-ish sanity around the origin
        assert!(gelu(1.0) > 0.8 && gelu(1.0) < 0.9);
    }

    #[test]
    fn m1_features_have_length_six() {
        let input = simple_input(0, 1, 0.5);
        assert_eq!(m1_features(&input).len(), 6);
    }

    fn informative_set(n: usize) -> Vec<FusionInput> {
        (0..n)
            .map(|i| {
                let truth = u8::from(i % 3 == 0);
                let e = if truth == 1 { 1.0 } else { -1.0 };
                simple_input(i as u64, truth, e + (i % 5) as f64 * 1e-3)
            })
            .collect()
    }

    #[test]
    fn m1_perfectly_informative_softmax_is_exact() {
        let train = informative_set(60);
        let eval = informative_set(30);
        let fused = fuse(
            FusionMode::M1,
            &train,
            &eval,
            &FusionConfig::default(),
            RngSeed(1),
        )
        .unwrap();
        let correct = fused
            .labels
            .iter()
            .zip(eval.iter())
            .filter(|(l, i)| **l == i.truth)
            .count();
        assert_eq!(correct, eval.len());
    }

    #[test]
    fn m1_uninformative_softmax_falls_back_to_prior() {
        let make = |n: usize| -> Vec<FusionInput> {
            (0..n)
                .map(|i| {
                    let truth = u8::from(i % 10 < 3); // 30% positive
                    input_with(
                        i as u64,
                        [0, 0, 0],
                        [[0.5, 0.5]; 3],
                        [vec![0.0], vec![0.0], vec![0.0]],
                        truth,
                    )
                })
                .collect()
        };
        let train = make(100);
        let eval = make(100);
        let fused = fuse(
            FusionMode::M1,
            &train,
            &eval,
            &FusionConfig::default(),
            RngSeed(2),
        )
        .unwrap();
        let acc = fused
            .labels
            .iter()
            .zip(eval.iter())
            .filter(|(l, i)| **l == i.truth)
            .count() as f64
            / eval.len() as f64;
        assert!((acc - 0.7).abs() < 0.05, "accuracy {acc} vs prior 0.7");
    }

    fn varied_encoders(n: usize, h: usize) -> Vec<FusionInput> {
        (0..n)
            .map(|i| {
                let truth = u8::from(i % 2 == 0);
                let base = if truth == 1 { 2.0 } else { -2.0 };
                let mk = |scale: f64| -> Vec<f64> {
                    (0..h)
                        .map(|c| base * scale + ((i * 7 + c * 3) % 11) as f64 * 0.05)
                        .collect()
                };
                input_with(
                    i as u64,
                    [truth; 3],
                    [[0.5, 0.5]; 3],
                    [mk(1.0), mk(0.7), mk(0.4)],
                    truth,
                )
            })
            .collect()
    }

    #[test]
    fn m2_projection_dimension_is_bounded() {
        let train = varied_encoders(12, 5);
        let raw: Vec<Vec<f64>> = train.iter().map(m2_raw_features).collect();
        let pca = pca_fit(&raw, Retain::VarianceFraction(0.95)).unwrap();
        assert!(pca.retained() <= 15.min(train.len() - 1));
    }

    #[test]
    fn m2_identical_inputs_fuse_identically() {
        let train = varied_encoders(40, 4);
        let mut eval = varied_encoders(10, 4);
        eval.push(eval[0].clone());
        let fused = fuse(
            FusionMode::M2,
            &train,
            &eval,
            &FusionConfig::default(),
            RngSeed(3),
        )
        .unwrap();
        assert_eq!(fused.labels[0], *fused.labels.last().unwrap());
        assert_eq!(fused.scores[0], *fused.scores.last().unwrap());
    }

    #[test]
    fn m3_concatenates_per_block_retained_counts() {
        let train = varied_encoders(30, 6);
        let config = FusionConfig::default();
        let pcas: Vec<PcaModel> = (0..3)
            .map(|b| fit_block_pca(&train, b, &config))
            .collect::<Result<Vec<_>>>()
            .unwrap();
        let total: usize = pcas.iter().map(|p| p.retained()).sum();
        let mut projected = Vec::new();
        for (b, pca) in pcas.iter().enumerate() {
            projected.extend(pca.project(&train[0].encoders[b]).unwrap());
        }
        assert_eq!(projected.len(), total);
    }

    /// With scalar encoders the per-block PCA is the identity up to sign, and
    /// on an uncorrelated descending-variance design the joint PCA of M2 is
    /// exactly the identity as well, so both modes see identical features.
    #[test]
    fn m3_equals_m2_for_scalar_encoders() {
        let mut inputs = Vec::new();
        let mut id = 0u64;
        for s0 in [-2.0f64, 2.0] {
            for s1 in [-1.4f64, 1.4] {
                for s2 in [-1.0f64, 1.0] {
                    for rep in 0..2 {
                        let truth = u8::from(s0 > 0.0);
                        inputs.push(input_with(
                            id,
                            [truth; 3],
                            [[0.5, 0.5]; 3],
                            [vec![s0], vec![s1], vec![s2]],
                            truth,
                        ));
                        id += 1;
                        let _ = rep;
                    }
                }
            }
        }
        let config = FusionConfig::default();
        let m2 = fuse(FusionMode::M2, &inputs, &inputs, &config, RngSeed(17)).unwrap();
        let m3 = fuse(FusionMode::M3, &inputs, &inputs, &config, RngSeed(17)).unwrap();
        assert_eq!(m2.labels, m3.labels);
        assert_eq!(m2.scores, m3.scores);
    }

    #[test]
    fn m4_pools_and_applies_gelu() {
        let input = input_with(
            0,
            [1, 1, 1],
            [[0.5, 0.5]; 3],
            [vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0]],
            1,
        );
        let features = m4_features(&input).unwrap();
        assert_eq!(features.len(), 2);
        assert!((features[0] - gelu(2.0)).abs() < 1e-12);

        let same = input_with(
            1,
            [0, 0, 0],
            [[0.5, 0.5]; 3],
            [vec![0.3, -0.7], vec![0.3, -0.7], vec![0.3, -0.7]],
            0,
        );
        let pooled = m4_features(&same).unwrap();
        assert!((pooled[0] - gelu(0.3)).abs() < 1e-12);
        assert!((pooled[1] - gelu(-0.7)).abs() < 1e-12);
    }

    #[test]
    fn fusion_is_deterministic_given_seed() {
        let train = varied_encoders(40, 3);
        let eval = varied_encoders(16, 3);
        for mode in FusionMode::ALL {
            let a = fuse(mode, &train, &eval, &FusionConfig::default(), RngSeed(5)).unwrap();
            let b = fuse(mode, &train, &eval, &FusionConfig::default(), RngSeed(5)).unwrap();
            assert_eq!(a.labels, b.labels, "mode {}", mode.as_str());
            assert_eq!(a.scores, b.scores);
        }
    }

    #[test]
    fn mismatched_encoder_lengths_are_rejected() {
        let bad = vec![input_with(
            0,
            [1, 0, 1],
            [[0.5, 0.5]; 3],
            [vec![1.0], vec![1.0, 2.0], vec![1.0]],
            1,
        )];
        assert!(matches!(
            fuse(FusionMode::M4, &bad, &bad, &FusionConfig::default(), RngSeed(0)),
            Err(Error::Shape(_))
        ));
    }
}
