//! Diagonal-covariance Gaussian mixture emission densities.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.8378770664093453;

/// Mixture of diagonal Gaussians. `means` and `variances` are (M, D).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gmm {
    pub weights: Vec<f64>,
    pub means: Array2<f64>,
    pub variances: Array2<f64>,
}

impl Gmm {
    /// Single-component Gaussian.
    pub fn single(mean: Vec<f64>, variance: Vec<f64>) -> Self {
        let d = mean.len();
        Self {
            weights: vec![1.0],
            means: Array2::from_shape_vec((1, d), mean).unwrap(),
            variances: Array2::from_shape_vec((1, d), variance).unwrap(),
        }
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.dim().1
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.n_components();
        if m == 0 || self.means.dim().0 != m || self.variances.dim() != self.means.dim() {
            return Err(Error::InvalidConfig("inconsistent GMM shapes".into()));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("GMM weights sum to {wsum}")));
        }
        if self.variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::InvalidConfig("non-positive GMM variance".into()));
        }
        Ok(())
    }

    /// Per-component additive constants: ln w_k - 0.5 * sum_d ln(2 pi var).
    pub fn log_consts(&self) -> Vec<f64> {
        (0..self.n_components())
            .map(|k| {
                let mut c = self.weights[k].max(f64::MIN_POSITIVE).ln();
                for d in 0..self.dim() {
                    c -= 0.5 * (LN_2PI + self.variances[[k, d]].ln());
                }
                c
            })
            .collect()
    }

    /// Per-component joint log densities ln(w_k N_k(x)).
    pub fn component_log_joint(&self, x: ArrayView1<f64>, consts: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..self.n_components())
            .map(|k| {
                let mut q = 0.0;
                for j in 0..d {
                    let z = x[j] - self.means[[k, j]];
                    q += z * z / self.variances[[k, j]];
                }
                consts[k] - 0.5 * q
            })
            .collect()
    }

    /// Log mixture density, log-sum-exp over components.
    pub fn log_pdf(&self, x: ArrayView1<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let consts = self.log_consts();
        Ok(log_sum_exp(&self.component_log_joint(x, &consts)))
    }

    /// Like [`Gmm::log_pdf`] with precomputed [`Gmm::log_consts`], skipping
    /// the dimension check for inner loops.
    pub fn log_pdf_with_consts(&self, x: ArrayView1<f64>, consts: &[f64]) -> f64 {
        log_sum_exp(&self.component_log_joint(x, consts))
    }

    /// Double the component count: each component is replaced by two copies
    /// with means perturbed by +-0.2 standard deviations and halved weights.
    pub fn split_components(&mut self) {
        let m = self.n_components();
        let d = self.dim();
        let mut weights = Vec::with_capacity(2 * m);
        let mut means = Array2::zeros((2 * m, d));
        let mut variances = Array2::zeros((2 * m, d));
        for k in 0..m {
            for (dir, slot) in [(1.0, 2 * k), (-1.0, 2 * k + 1)] {
                weights.push(self.weights[k] / 2.0);
                for j in 0..d {
                    let sigma = self.variances[[k, j]].sqrt();
                    means[[slot, j]] = self.means[[k, j]] + dir * 0.2 * sigma;
                    variances[[slot, j]] = self.variances[[k, j]];
                }
            }
        }
        self.weights = weights;
        self.means = means;
        self.variances = variances;
    }
}

/// Numerically stable log(sum(exp(v))).
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_at_mode() {
        let g = Gmm::single(vec![0.0], vec![1.0]);
        let lp = g.log_pdf(arr1(&[0.0]).view()).unwrap();
        assert!((lp - (-0.5 * LN_2PI)).abs() < 1e-12);
        assert!((lp + 0.918939).abs() < 1e-6);
    }

    #[test]
    fn duplicate_components_equal_single() {
        let single = Gmm::single(vec![1.0, -2.0], vec![0.5, 2.0]);
        let dup = Gmm {
            weights: vec![0.5, 0.5],
            means: ndarray::stack![ndarray::Axis(0), single.means.row(0), single.means.row(0)],
            variances: ndarray::stack![
                ndarray::Axis(0),
                single.variances.row(0),
                single.variances.row(0)
            ],
        };
        let x = arr1(&[0.3, -1.0]);
        let a = single.log_pdf(x.view()).unwrap();
        let b = dup.log_pdf(x.view()).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn random_gmm_matches_naive_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = 3;
            let d = 4;
            let mut weights: Vec<f64> = (0..m).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= s);
            let means = Array2::from_shape_fn((m, d), |_| rng.gen_range(-2.0..2.0));
            let variances = Array2::from_shape_fn((m, d), |_| rng.gen_range(0.2..3.0));
            let g = Gmm {
                weights: weights.clone(),
                means: means.clone(),
                variances: variances.clone(),
            };
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            // naive linear-domain summation
            let mut p = 0.0;
            for k in 0..m {
                let mut dens = 1.0;
                for j in 0..d {
                    let var = variances[[k, j]];
                    let z = x[j] - means[[k, j]];
                    dens *= (-0.5 * z * z / var).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
                }
                p += weights[k] * dens;
            }
            let lp = g.log_pdf(arr1(&x).view()).unwrap();
            assert!((lp - p.ln()).abs() < 1e-10, "{lp} vs {}", p.ln());
        }
    }

    #[test]
    fn dim_mismatch_is_error() {
        let g = Gmm::single(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(g.log_pdf(arr1(&[0.0]).view()).is_err());
    }

    #[test]
    fn split_preserves_weight_sum_and_doubles() {
        let mut g = Gmm::single(vec![1.0], vec![4.0]);
        g.split_components();
        assert_eq!(g.n_components(), 2);
        assert!((g.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((g.means[[0, 0]] - 1.4).abs() < 1e-12);
        assert!((g.means[[1, 0]] - 0.6).abs() < 1e-12);
    }
}
