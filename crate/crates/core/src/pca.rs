//! Principal component analysis on the sample covariance.
//!
//! Components are eigenvectors of the centered covariance (divisor n-1) in
//! descending eigenvalue order, retained either by count or by the smallest
//! count reaching a variance fraction. Each eigenvector's sign is fixed so
//! its largest-magnitude entry is positive, which keeps fitted models
//! deterministic.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Retain {
    Components(usize),
    VarianceFraction(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Retained components as orthonormal rows, descending eigenvalue order.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalue (explained variance) per retained component.
    pub explained_variance: Vec<f64>,
    pub input_dim: usize,
}

impl PcaModel {
    pub fn retained(&self) -> usize {
        self.components.len()
    }

    /// Drop trailing components beyond `cap`.
    pub fn truncate(&mut self, cap: usize) {
        if cap >= 1 && self.components.len() > cap {
            self.components.truncate(cap);
            self.explained_variance.truncate(cap);
        }
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::Shape(format!(
                "vector dimension {} does not match PCA input dimension {}",
                x.len(),
                self.input_dim
            )));
        }
        Ok(self
            .components
            .iter()
            .map(|row| {
                row.iter()
                    .zip(x)
                    .zip(&self.mean)
                    .map(|((w, &v), &m)| w * (v - m))
                    .sum()
            })
            .collect())
    }

    pub fn reconstruct(&self, projected: &[f64]) -> Result<Vec<f64>> {
        if projected.len() != self.components.len() {
            return Err(Error::Shape(format!(
                "projection length {} does not match {} retained components",
                projected.len(),
                self.components.len()
            )));
        }
        let mut out = self.mean.clone();
        for (coef, row) in projected.iter().zip(&self.components) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += coef * w;
            }
        }
        Ok(out)
    }
}

/// Fit PCA on row vectors. Requires at least two rows of equal dimension.
pub fn pca_fit(data: &[Vec<f64>], retain: Retain) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Data(format!(
            "PCA needs at least 2 vectors, got {n}"
        )));
    }
    let dim = data[0].len();
    if dim == 0 {
        return Err(Error::Data("PCA input dimension must be positive".into()));
    }
    for (i, row) in data.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Shape(format!(
                "row {i} has dimension {}, expected {dim}",
                row.len()
            )));
        }
    }
    match retain {
        Retain::Components(c) if c == 0 => {
            return Err(Error::Config("must retain at least one component".into()))
        }
        Retain::Components(c) if c > dim => {
            return Err(Error::Config(format!(
                "cannot retain {c} components from dimension {dim}"
            )));
        }
        Retain::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
            return Err(Error::Config(format!(
                "variance fraction must lie in (0, 1], got {f}"
            )));
        }
        _ => {}
    }

    let mut mean = vec![0.0f64; dim];
    for row in data {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    // covariance with divisor n-1
    let mut cov = DMatrix::<f64>::zeros(dim, dim);
    for row in data {
        for i in 0..dim {
            let di = row[i] - mean[i];
            for j in i..dim {
                let dj = row[j] - mean[j];
                cov[(i, j)] += di * dj;
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..dim {
        for j in i..dim {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }

    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].partial_cmp(&eigen.eigenvalues[a]).unwrap());

    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();
    let mut components: Vec<Vec<f64>> = order
        .iter()
        .map(|&i| eigen.eigenvectors.column(i).iter().copied().collect())
        .collect();
    for row in &mut components {
        let mut max_idx = 0;
        for (i, v) in row.iter().enumerate() {
            if v.abs() > row[max_idx].abs() {
                max_idx = i;
            }
        }
        if row[max_idx] < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
    }

    let keep = match retain {
        Retain::Components(c) => c,
        Retain::VarianceFraction(fraction) => {
            let floor = eigenvalues[0] * 1e-12;
            let meaningful = eigenvalues.iter().filter(|&&v| v > floor).count().max(1);
            let total: f64 = eigenvalues[..meaningful].iter().sum();
            if total <= 0.0 {
                1
            } else {
                let mut cumulative = 0.0;
                let mut count = meaningful;
                for (i, &v) in eigenvalues[..meaningful].iter().enumerate() {
                    cumulative += v;
                    if cumulative >= fraction * total - 1e-15 {
                        count = i + 1;
                        break;
                    }
                }
                count
            }
        }
    };

    components.truncate(keep);
    let explained_variance = eigenvalues[..keep].to_vec();
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
        input_dim: dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_line_has_one_component() {
        let data: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64, i as f64]).collect();
        let model = pca_fit(&data, Retain::Components(2)).unwrap();
        let inv_sqrt2 = 1.0 / 2f64.sqrt();
        assert!((model.components[0][0] - inv_sqrt2).abs() < 1e-10);
        assert!((model.components[0][1] - inv_sqrt2).abs() < 1e-10);
        assert!(model.explained_variance[1].abs() < 1e-10);
    }

    #[test]
    fn full_rank_projection_reconstructs_exactly() {
        let data = vec![
            vec![1.0, 2.0, 0.5],
            vec![-1.0, 0.3, 2.0],
            vec![0.7, -2.2, 1.1],
            vec![3.0, 0.0, -0.4],
            vec![-0.5, 1.5, 0.9],
        ];
        let model = pca_fit(&data, Retain::Components(3)).unwrap();
        for row in &data {
            let projected = model.project(row).unwrap();
            let rebuilt = model.reconstruct(&projected).unwrap();
            for (a, b) in row.iter().zip(&rebuilt) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn hand_computed_covariance_eigenvalues() {
        // centered rows (±1, ±2, 0): covariance diag(4/3, 16/3, 0)
        let data = vec![
            vec![0.0, 0.0, 0.0],
            vec![2.0, 0.0, 0.0],
            vec![0.0, 4.0, 0.0],
            vec![2.0, 4.0, 0.0],
        ];
        let model = pca_fit(&data, Retain::Components(3)).unwrap();
        assert!((model.explained_variance[0] - 16.0 / 3.0).abs() < 1e-10);
        assert!((model.explained_variance[1] - 4.0 / 3.0).abs() < 1e-10);
        assert!(model.explained_variance[2].abs() < 1e-10);
        // leading component is the y axis, second the x axis
        assert!((model.components[0][1].abs() - 1.0).abs() < 1e-10);
        assert!((model.components[1][0].abs() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn components_are_orthonormal() {
        let data: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.7;
                vec![t.sin(), (2.0 * t).cos(), t * 0.1, (t * 0.3).tan().clamp(-2.0, 2.0)]
            })
            .collect();
        let model = pca_fit(&data, Retain::Components(4)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = model.components[i]
                    .iter()
                    .zip(&model.components[j])
                    .map(|(a, b)| a * b)
                    .sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "rows {i},{j} dot {dot}");
            }
        }
        // explained variances are non-increasing
        for w in model.explained_variance.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
    }

    #[test]
    fn variance_fraction_retains_smallest_sufficient_count() {
        // variances 4:1 along two axes → first component covers 80%
        let mut data = Vec::new();
        for i in 0..40 {
            let a = ((i % 5) as f64 - 2.0) * 2.0;
            let b = ((i % 3) as f64 - 1.0) * 1.0;
            data.push(vec![a, b]);
        }
        let model75 = pca_fit(&data, Retain::VarianceFraction(0.75)).unwrap();
        assert_eq!(model75.retained(), 1);
        let model99 = pca_fit(&data, Retain::VarianceFraction(0.999)).unwrap();
        assert_eq!(model99.retained(), 2);
    }

    #[test]
    fn too_many_components_is_a_config_error() {
        let data = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            pca_fit(&data, Retain::Components(3)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_row_is_rejected() {
        assert!(matches!(
            pca_fit(&[vec![1.0, 2.0]], Retain::Components(1)),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn truncate_caps_components() {
        let data: Vec<Vec<f64>> = (0..10)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1, (i % 3) as f64])
            .collect();
        let mut model = pca_fit(&data, Retain::Components(3)).unwrap();
        model.truncate(2);
        assert_eq!(model.retained(), 2);
        assert_eq!(model.explained_variance.len(), 2);
    }
}
