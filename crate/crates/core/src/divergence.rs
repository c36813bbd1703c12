//! Probability-distribution representation of feature vectors and the
//! KL / Jensen-Shannon divergences between them.
//!
//! A vector becomes a histogram of its components over `C` equal-width bins
//! spanning the dataset-global component range, normalized to unit mass. A
//! Laplace floor of 1e-9 per bin keeps KL finite against binned
//! distributions.

use crate::error::{Error, Result};

/// Laplace floor added per bin before renormalization in [`to_distribution`].
pub const BIN_EPSILON: f64 = 1e-9;

/// Discrete distribution over `C` bins: nonnegative mass summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbDistribution {
    mass: Vec<f64>,
}

impl ProbDistribution {
    pub fn new(mass: Vec<f64>) -> Result<ProbDistribution> {
        if mass.is_empty() {
            return Err(Error::Data("distribution needs at least one bin".into()));
        }
        let mut total = 0.0;
        for &m in &mass {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::Data(format!("negative or non-finite mass {m}")));
            }
            total += m;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!(
                "distribution mass sums to {total}, expected 1"
            )));
        }
        Ok(ProbDistribution { mass })
    }

    pub fn bins(&self) -> usize {
        self.mass.len()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// Histogram a vector's components into `bins` equal-width bins over the
/// global `range`, divide by the component count, floor, renormalize.
pub fn to_distribution(values: &[f64], bins: usize, range: (f64, f64)) -> Result<ProbDistribution> {
    if bins < 2 {
        return Err(Error::Config(format!(
            "distribution bin count must be at least 2, got {bins}"
        )));
    }
    if values.is_empty() {
        return Err(Error::Data("cannot bin an empty vector".into()));
    }
    let (lo, hi) = range;
    if !lo.is_finite() || !hi.is_finite() || hi < lo {
        return Err(Error::Data(format!("invalid component range [{lo}, {hi}]")));
    }
    let width = hi - lo;
    let mut counts = vec![0u64; bins];
    for &v in values {
        if !v.is_finite() {
            return Err(Error::Data(format!("non-finite component {v}")));
        }
        let idx = if width == 0.0 {
            0
        } else {
            let raw = ((v - lo) / width * bins as f64).floor();
            (raw as i64).clamp(0, bins as i64 - 1) as usize
        };
        counts[idx] += 1;
    }
    let d = values.len() as f64;
    let norm = 1.0 + bins as f64 * BIN_EPSILON;
    let mass = counts
        .into_iter()
        .map(|c| (c as f64 / d + BIN_EPSILON) / norm)
        .collect();
    ProbDistribution::new(mass)
}

/// Kullback-Leibler divergence `Σ p(c)·ln(p(c)/q(c))`; terms with `p(c)=0`
/// contribute nothing.
pub fn kl_divergence(p: &ProbDistribution, q: &ProbDistribution) -> Result<f64> {
    if p.bins() != q.bins() {
        return Err(Error::Shape(format!(
            "bin-count mismatch: {} vs {}",
            p.bins(),
            q.bins()
        )));
    }
    let mut sum = 0.0;
    for (&pc, &qc) in p.mass().iter().zip(q.mass()) {
        if pc > 0.0 {
            if qc <= 0.0 {
                return Err(Error::Data(
                    "KL divergence undefined: q has zero mass where p does not".into(),
                ));
            }
            sum += pc * (pc / qc).ln();
        }
    }
    Ok(sum.max(0.0))
}

/// Jensen-Shannon divergence `½·KL(p1‖m) + ½·KL(p2‖m)` with `m = ½(p1+p2)`.
/// Symmetric, bounded by ln 2, zero iff the inputs are equal.
pub fn js_divergence(p1: &ProbDistribution, p2: &ProbDistribution) -> Result<f64> {
    if p1.bins() != p2.bins() {
        return Err(Error::Shape(format!(
            "bin-count mismatch: {} vs {}",
            p1.bins(),
            p2.bins()
        )));
    }
    let mid: Vec<f64> = p1
        .mass()
        .iter()
        .zip(p2.mass())
        .map(|(&a, &b)| 0.5 * (a + b))
        .collect();
    let m = ProbDistribution { mass: mid };
    Ok(0.5 * kl_divergence(p1, &m)? + 0.5 * kl_divergence(p2, &m)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(mass: &[f64]) -> ProbDistribution {
        ProbDistribution::new(mass.to_vec()).unwrap()
    }

    #[test]
    fn constant_vector_lands_in_one_bin() {
        let p = to_distribution(&[0.0, 0.0, 0.0, 0.0], 4, (-1.0, 1.0)).unwrap();
        // 0 falls into bin 2 of [-1,1) split four ways
        assert!(p.mass()[2] > 0.99);
        let rest: f64 = p.mass()[0] + p.mass()[1] + p.mass()[3];
        assert!(rest < 1e-6);
    }

    #[test]
    fn uniform_filling_vector_is_uniform() {
        let bins = 8;
        // one component per bin center
        let values: Vec<f64> = (0..bins).map(|i| (i as f64 + 0.5) / bins as f64).collect();
        let p = to_distribution(&values, bins, (0.0, 1.0)).unwrap();
        for &m in p.mass() {
            assert!((m - 1.0 / bins as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn single_bin_is_rejected() {
        assert!(matches!(
            to_distribution(&[1.0], 1, (0.0, 1.0)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_component_is_rejected() {
        assert!(matches!(
            to_distribution(&[f64::NAN], 4, (0.0, 1.0)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn kl_identity_is_zero() {
        let p = dist(&[0.3, 0.7]);
        assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn kl_hand_values() {
        let ln2 = std::f64::consts::LN_2;
        let v = kl_divergence(&dist(&[1.0, 0.0]), &dist(&[0.5, 0.5])).unwrap();
        assert!((v - ln2).abs() < 1e-12);

        let v = kl_divergence(&dist(&[0.5, 0.5]), &dist(&[0.9, 0.1])).unwrap();
        let expect = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.5108).abs() < 1e-4);
    }

    #[test]
    fn jsd_hand_values() {
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(
            js_divergence(&dist(&[0.4, 0.6]), &dist(&[0.4, 0.6])).unwrap(),
            0.0
        );
        let v = js_divergence(&dist(&[1.0, 0.0]), &dist(&[0.0, 1.0])).unwrap();
        assert!((v - ln2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = dist(&[1.0, 0.0]);
        let q = dist(&[0.5, 0.25, 0.25]);
        assert!(matches!(kl_divergence(&p, &q), Err(Error::Shape(_))));
        assert!(matches!(js_divergence(&p, &q), Err(Error::Shape(_))));
    }

    fn arbitrary_distribution(bins: usize) -> impl Strategy<Value = ProbDistribution> {
        proptest::collection::vec(1e-6f64..1.0, bins).prop_map(move |raw| {
            let total: f64 = raw.iter().sum();
            let mut mass: Vec<f64> = raw.iter().map(|v| v / total).collect();
            // absorb rounding into the last bin so the sum is exactly 1
            let sum_head: f64 = mass[..bins - 1].iter().sum();
            mass[bins - 1] = 1.0 - sum_head;
            ProbDistribution::new(mass).unwrap()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_jsd_symmetric_bounded(
            (p, q) in (arbitrary_distribution(16), arbitrary_distribution(16))
        ) {
            let ln2 = std::f64::consts::LN_2;
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert!((kl_divergence(&p, &p).unwrap()).abs() < 1e-12);
            let ab = js_divergence(&p, &q).unwrap();
            let ba = js_divergence(&q, &p).unwrap();
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!(ab >= 0.0 && ab <= ln2 + 1e-9);
        }
    }
}
