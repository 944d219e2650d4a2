//! Finite candidate sets and beliefs indexed by arm.
//!
//! An [`ArmSet`] caches the prior Gram matrix of every candidate and, lazily,
//! its Cholesky factor. [`ArmBelief`] pairs a [`GpBelief`] with the arm index
//! of every observation, which lets joint posterior samples over thousands of
//! candidates be drawn by pathwise conditioning:
//!
//! ```text
//! f_post(X) = f_prior(X) + K(X, Xo) (Koo + σ²I)⁻¹ (y − f_prior(Xo) − ε),   ε ~ N(0, σ²I)
//! ```
//!
//! which has exactly the posterior law of `f` but only needs the prior factor,
//! computed once per arm set, plus a solve against the belief's own factor.

use std::sync::{Arc, OnceLock};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gp::{GpBelief, KernelSpec};
use crate::linalg::{dot, LowerTri, BASE_JITTER};
use crate::rng::standard_normals;

/// Largest jitter (relative to the signal variance) tried when factorizing the prior Gram matrix.
pub const MAX_PRIOR_JITTER: f64 = 1e-4;

const PAR_THRESHOLD: usize = 512;

#[derive(Debug, Clone)]
struct PriorFactor {
    factor: Arc<LowerTri>,
    jitter: f64,
}

/// Candidate arms (feature vectors already in kernel space) with cached prior covariances.
#[derive(Debug)]
pub struct ArmSet {
    features: Vec<Arc<[f64]>>,
    kernel: KernelSpec,
    gram: Vec<f64>,
    prior: OnceLock<std::result::Result<PriorFactor, String>>,
}

impl ArmSet {
    pub fn new(features: Vec<Vec<f64>>, kernel: KernelSpec) -> Result<Self> {
        kernel.validate()?;
        if features.is_empty() {
            return Err(Error::input("arm set is empty"));
        }
        let d = features[0].len();
        if let Some(i) = features.iter().position(|f| f.len() != d) {
            return Err(Error::input(format!(
                "arm {i} has dimension {}, expected {d}",
                features[i].len()
            )));
        }
        let features: Vec<Arc<[f64]>> = features.into_iter().map(Arc::from).collect();
        let n = features.len();
        let mut gram = vec![0.0; n * n];
        gram.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, g) in row.iter_mut().enumerate() {
                *g = kernel.eval_unchecked(&features[i], &features[j]);
            }
        });
        Ok(Self {
            features,
            kernel,
            gram,
            prior: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn features(&self, arm: usize) -> &Arc<[f64]> {
        &self.features[arm]
    }

    pub fn all_features(&self) -> &[Arc<[f64]>] {
        &self.features
    }

    #[inline]
    pub fn covariance(&self, i: usize, j: usize) -> f64 {
        self.gram[i * self.len() + j]
    }

    fn prior(&self) -> Result<&PriorFactor> {
        let cached = self.prior.get_or_init(|| {
            let sv = self.kernel.signal_variance;
            LowerTri::factorize_jittered(
                self.len(),
                |i, j| self.covariance(i, j),
                BASE_JITTER * sv,
                MAX_PRIOR_JITTER * sv,
            )
            .map(|(factor, jitter)| PriorFactor {
                factor: Arc::new(factor),
                jitter,
            })
            .map_err(|e| e.to_string())
        });
        cached
            .as_ref()
            .map_err(|e| Error::numerical(format!("prior Gram factorization: {e}")))
    }

    /// Jitter that was needed to factorize the prior Gram matrix (forces the factorization).
    pub fn prior_jitter(&self) -> Result<f64> {
        Ok(self.prior()?.jitter)
    }
}

/// A GP belief whose observations are arms of a fixed [`ArmSet`].
#[derive(Debug, Clone)]
pub struct ArmBelief {
    arms: Arc<ArmSet>,
    gp: GpBelief,
    observed: Vec<usize>,
    tested: Vec<bool>,
}

impl ArmBelief {
    pub fn new(arms: Arc<ArmSet>, noise_variance: f64, prior_mean: f64) -> Result<Self> {
        let gp = GpBelief::new(*arms.kernel(), noise_variance)?.with_prior_mean(prior_mean);
        let tested = vec![false; arms.len()];
        Ok(Self {
            arms,
            gp,
            observed: Vec::new(),
            tested,
        })
    }

    pub fn arms(&self) -> &ArmSet {
        &self.arms
    }

    pub fn arms_arc(&self) -> &Arc<ArmSet> {
        &self.arms
    }

    pub fn gp(&self) -> &GpBelief {
        &self.gp
    }

    /// Observed arms in conditioning order.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn is_tested(&self, arm: usize) -> bool {
        self.tested[arm]
    }

    pub fn untested(&self) -> Vec<usize> {
        (0..self.arms.len()).filter(|&i| !self.tested[i]).collect()
    }

    pub fn untested_count(&self) -> usize {
        self.arms.len() - self.observed.len()
    }

    pub fn condition(&self, arm: usize, y: f64) -> Result<Self> {
        self.condition_many(&[arm], &[y])
    }

    pub fn condition_many(&self, arms: &[usize], ys: &[f64]) -> Result<Self> {
        let mut tested = self.tested.clone();
        for &a in arms {
            if a >= self.arms.len() {
                return Err(Error::NotFound(format!("arm index {a} out of range")));
            }
            if tested[a] {
                return Err(Error::Conflict(format!("arm {a} has already been observed")));
            }
            tested[a] = true;
        }
        let xs: Vec<Arc<[f64]>> = arms.iter().map(|&a| self.arms.features[a].clone()).collect();
        let gp = self.gp.condition_shared(&xs, ys)?;
        let mut observed = self.observed.clone();
        observed.extend_from_slice(arms);
        Ok(Self {
            arms: self.arms.clone(),
            gp,
            observed,
            tested,
        })
    }

    fn cross(&self, arm: usize) -> Vec<f64> {
        self.observed.iter().map(|&o| self.arms.covariance(arm, o)).collect()
    }

    /// Posterior mean and variance of `f` at one arm.
    pub fn marginal(&self, arm: usize) -> (f64, f64) {
        let k = self.cross(arm);
        let mean = self.gp.prior_mean() + dot(&k, self.gp.weights());
        let v = self.gp.factor().solve_lower(&k);
        let var = (self.arms.covariance(arm, arm) - dot(&v, &v)).max(0.0);
        (mean, var)
    }

    pub fn marginals(&self, arms: &[usize]) -> Vec<(f64, f64)> {
        if arms.len() >= 64 {
            arms.par_iter().map(|&a| self.marginal(a)).collect()
        } else {
            arms.iter().map(|&a| self.marginal(a)).collect()
        }
    }

    /// One joint posterior sample of `f` over every arm.
    pub fn sample_all<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let all: Vec<usize> = (0..self.arms.len()).collect();
        self.sample_at(&all, rng)
    }

    /// One joint posterior sample of `f` at the listed arms (in the given order).
    ///
    /// Consumes `|arms in set| + |observations|` normals (the latter only with
    /// positive noise) regardless of the subset, so streams stay aligned.
    pub fn sample_at<R: Rng + ?Sized>(&self, arms: &[usize], rng: &mut R) -> Result<Vec<f64>> {
        let prior = self.arms.prior()?;
        let n = self.arms.len();
        let z = standard_normals(rng, n);
        let m = self.observed.len();
        let noise_sd = self.gp.noise_variance().sqrt();
        let eps: Vec<f64> = if noise_sd > 0.0 {
            standard_normals(rng, m).into_iter().map(|e| e * noise_sd).collect()
        } else {
            vec![0.0; m]
        };
        let mu = self.gp.prior_mean();
        let l = &prior.factor;
        let base = |i: usize| mu + l.mul_row(i, &z);
        let w = if m > 0 {
            let residual: Vec<f64> = self
                .observed
                .iter()
                .zip(self.gp.targets())
                .zip(&eps)
                .map(|((&o, &y), &e)| y - base(o) - e)
                .collect();
            self.gp.solve(&residual)
        } else {
            Vec::new()
        };
        let value = |a: usize| {
            let correction: f64 = self
                .observed
                .iter()
                .zip(&w)
                .map(|(&o, &wj)| self.arms.covariance(a, o) * wj)
                .sum();
            base(a) + correction
        };
        if arms.len() >= PAR_THRESHOLD {
            Ok(arms.par_iter().map(|&a| value(a)).collect())
        } else {
            Ok(arms.iter().map(|&a| value(a)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn line_set(n: usize) -> Arc<ArmSet> {
        let feats = (0..n).map(|i| vec![i as f64 * 0.4]).collect();
        Arc::new(ArmSet::new(feats, KernelSpec::rbf(1.0, 1.0).unwrap()).unwrap())
    }

    #[test]
    fn marginals_agree_with_gp_posterior() {
        let set = line_set(8);
        let b = ArmBelief::new(set.clone(), 0.1, 0.5)
            .unwrap()
            .condition_many(&[1, 5], &[1.0, -0.4])
            .unwrap();
        let feats: Vec<&[f64]> = (0..8).map(|i| &set.features(i)[..]).collect();
        let direct = b.gp().posterior_marginals(&feats).unwrap();
        for (a, (m, v)) in direct.iter().enumerate() {
            let (m2, v2) = b.marginal(a);
            assert!((m - m2).abs() < 1e-12 && (v - v2).abs() < 1e-12);
        }
    }

    #[test]
    fn repeat_observation_is_conflict() {
        let b = ArmBelief::new(line_set(3), 0.1, 0.0)
            .unwrap()
            .condition(0, 1.0)
            .unwrap();
        assert!(matches!(b.condition(0, 2.0), Err(Error::Conflict(_))));
        assert!(matches!(b.condition(7, 2.0), Err(Error::NotFound(_))));
        assert_eq!(b.untested(), vec![1, 2]);
    }

    #[test]
    fn pathwise_samples_match_posterior_moments() {
        let set = line_set(5);
        let b = ArmBelief::new(set.clone(), 0.1, 0.0)
            .unwrap()
            .condition_many(&[0, 3], &[1.0, -1.0])
            .unwrap();
        let feats: Vec<&[f64]> = (0..5).map(|i| &set.features(i)[..]).collect();
        let post = b.gp().posterior(&feats).unwrap();
        let mut rng = stream(2024);
        let draws = 40_000;
        let mut sum = [0.0; 5];
        let mut cross = [[0.0; 5]; 5];
        for _ in 0..draws {
            let f = b.sample_all(&mut rng).unwrap();
            for i in 0..5 {
                sum[i] += f[i];
                for j in 0..5 {
                    cross[i][j] += f[i] * f[j];
                }
            }
        }
        let nf = draws as f64;
        for i in 0..5 {
            let mean = sum[i] / nf;
            let se = (post.covariance[i][i] / nf).sqrt().max(1e-6);
            assert!((mean - post.mean[i]).abs() < 5.0 * se, "mean {i}");
            for j in 0..5 {
                let cov = cross[i][j] / nf - (sum[i] / nf) * (sum[j] / nf);
                let expected = post.covariance[i][j];
                let se = ((post.covariance[i][i] * post.covariance[j][j] + expected * expected) / nf).sqrt();
                assert!(
                    (cov - expected).abs() < 5.0 * se + 1e-6,
                    "cov {i},{j}: {cov} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn subset_sample_matches_full_sample() {
        let b = ArmBelief::new(line_set(6), 0.1, 0.0)
            .unwrap()
            .condition(2, 0.7)
            .unwrap();
        let full = b.sample_all(&mut stream(4)).unwrap();
        let sub = b.sample_at(&[4, 1], &mut stream(4)).unwrap();
        assert!((sub[0] - full[4]).abs() < 1e-12);
        assert!((sub[1] - full[1]).abs() < 1e-12);
    }
}
