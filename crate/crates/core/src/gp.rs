//! Exact Gaussian-process regression with incremental conditioning.
//!
//! A [`GpBelief`] is an immutable posterior snapshot: conditioning returns a
//! new belief whose Cholesky factor extends the parent's by the new rows.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, LowerTri, BASE_JITTER};
use crate::rng::{standard_normal, standard_normals};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    #[default]
    Rbf,
}

/// Covariance function `k(x, x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub lengthscale: f64,
    pub signal_variance: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kind: KernelKind::Rbf,
            lengthscale: 1.0,
            signal_variance: 1.0,
        }
    }
}

impl KernelSpec {
    pub fn rbf(lengthscale: f64, signal_variance: f64) -> Result<Self> {
        let k = Self {
            kind: KernelKind::Rbf,
            lengthscale,
            signal_variance,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lengthscale > 0.0 && self.lengthscale.is_finite()) {
            return Err(Error::input(format!(
                "lengthscale must be positive, got {}",
                self.lengthscale
            )));
        }
        if !(self.signal_variance > 0.0 && self.signal_variance.is_finite()) {
            return Err(Error::input(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], x2: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Rbf => {
                let mut sq = 0.0;
                for (a, b) in x.iter().zip(x2) {
                    let d = a - b;
                    sq += d * d;
                }
                self.signal_variance * (-sq / (2.0 * self.lengthscale * self.lengthscale)).exp()
            }
        }
    }

    pub fn eval(&self, x: &[f64], x2: &[f64]) -> Result<f64> {
        if x.len() != x2.len() {
            return Err(Error::input(format!(
                "kernel arguments have dimensions {} and {}",
                x.len(),
                x2.len()
            )));
        }
        Ok(self.eval_unchecked(x, x2))
    }
}

pub fn kernel_eval(k: &KernelSpec, x: &[f64], x2: &[f64]) -> Result<f64> {
    k.eval(x, x2)
}

/// Joint posterior over a list of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGaussian {
    pub mean: Vec<f64>,
    /// Row-major `len × len`, symmetric, diagonal clamped at zero.
    pub covariance: Vec<Vec<f64>>,
}

impl PosteriorGaussian {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[i][i]
    }
}

#[derive(Debug, Clone)]
pub struct GpBelief {
    kernel: KernelSpec,
    noise_variance: f64,
    prior_mean: f64,
    inputs: Vec<Arc<[f64]>>,
    targets: Vec<f64>,
    chol: LowerTri,
    alpha: Vec<f64>,
}

fn check_noise(noise_variance: f64) -> Result<()> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::input(format!(
            "noise variance must be non-negative, got {noise_variance}"
        )));
    }
    Ok(())
}

impl GpBelief {
    /// The prior belief: no observations, constant mean `0`.
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        kernel.validate()?;
        check_noise(noise_variance)?;
        Ok(Self {
            kernel,
            noise_variance,
            prior_mean: 0.0,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: LowerTri::empty(),
            alpha: Vec::new(),
        })
    }

    /// Replaces the constant prior mean, refreshing the cached weights.
    pub fn with_prior_mean(mut self, prior_mean: f64) -> Self {
        self.prior_mean = prior_mean;
        self.refresh_alpha();
        self
    }

    /// Fits a belief from scratch on the given data.
    pub fn fit<Q: AsRef<[f64]>>(
        kernel: KernelSpec,
        noise_variance: f64,
        prior_mean: f64,
        inputs: &[Q],
        targets: &[f64],
    ) -> Result<Self> {
        let base = Self::new(kernel, noise_variance)?.with_prior_mean(prior_mean);
        let inputs: Vec<Arc<[f64]>> = inputs.iter().map(|x| Arc::from(x.as_ref())).collect();
        base.condition_shared(&inputs, targets)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn prior_mean(&self) -> f64 {
        self.prior_mean
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Input dimension, or `None` for a belief with no observations.
    pub fn dim(&self) -> Option<usize> {
        self.inputs.first().map(|x| x.len())
    }

    pub fn inputs(&self) -> &[Arc<[f64]>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn factor(&self) -> &LowerTri {
        &self.chol
    }

    /// `(K + σ²I)⁻¹ (y − m)`.
    pub fn weights(&self) -> &[f64] {
        &self.alpha
    }

    /// Solves `(K + σ²I) x = r` with the cached factor.
    pub fn solve(&self, r: &[f64]) -> Vec<f64> {
        self.chol.solve(r)
    }

    fn refresh_alpha(&mut self) {
        let centered: Vec<f64> = self.targets.iter().map(|y| y - self.prior_mean).collect();
        self.alpha = self.chol.solve(&centered);
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        match self.dim() {
            Some(d) if d != x.len() => Err(Error::input(format!(
                "input has dimension {}, belief has dimension {d}",
                x.len()
            ))),
            _ => Ok(()),
        }
    }

    fn check_queries<Q: AsRef<[f64]>>(&self, queries: &[Q]) -> Result<()> {
        let expected = self.dim().or_else(|| queries.first().map(|q| q.as_ref().len()));
        if let Some(d) = expected {
            for (i, q) in queries.iter().enumerate() {
                if q.as_ref().len() != d {
                    return Err(Error::input(format!(
                        "query {i} has dimension {}, expected {d}",
                        q.as_ref().len()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Returns a new belief with `(x, y)` appended.
    pub fn condition(&self, x: &[f64], y: f64) -> Result<Self> {
        self.condition_shared(&[Arc::from(x)], &[y])
    }

    pub fn condition_many<Q: AsRef<[f64]>>(&self, xs: &[Q], ys: &[f64]) -> Result<Self> {
        let xs: Vec<Arc<[f64]>> = xs.iter().map(|x| Arc::from(x.as_ref())).collect();
        self.condition_shared(&xs, ys)
    }

    /// Conditions on inputs that are already reference-counted, avoiding copies.
    pub fn condition_shared(&self, xs: &[Arc<[f64]>], ys: &[f64]) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::input(format!("{} inputs but {} targets", xs.len(), ys.len())));
        }
        let mut dim = self.dim();
        for (x, y) in xs.iter().zip(ys) {
            if let Some(d) = dim {
                if x.len() != d {
                    return Err(Error::input(format!(
                        "input has dimension {}, belief has dimension {d}",
                        x.len()
                    )));
                }
            }
            dim = Some(x.len());
            if !y.is_finite() {
                return Err(Error::input(format!("target {y} is not finite")));
            }
        }
        let mut next = self.clone();
        next.inputs.extend(xs.iter().cloned());
        next.targets.extend_from_slice(ys);
        let mut row = Vec::with_capacity(next.inputs.len());
        let mut extended = true;
        for i in self.len()..next.len() {
            next.cov_row(i, &mut row);
            if next.chol.push_row(&row).is_err() {
                extended = false;
                break;
            }
        }
        if !extended {
            next.chol = next.refactorize()?;
        }
        next.refresh_alpha();
        Ok(next)
    }

    fn cov_row(&self, i: usize, row: &mut Vec<f64>) {
        row.clear();
        let xi = &self.inputs[i];
        row.extend(self.inputs[..i].iter().map(|xj| self.kernel.eval_unchecked(xi, xj)));
        row.push(self.kernel.eval_unchecked(xi, xi) + self.noise_variance);
    }

    fn refactorize(&self) -> Result<LowerTri> {
        let mut l = LowerTri::with_capacity(self.len());
        let mut row = Vec::new();
        for i in 0..self.len() {
            self.cov_row(i, &mut row);
            l.push_row(&row)
                .map_err(|e| Error::numerical(format!("Cholesky of K + σ²I failed after refactorization: {e}")))?;
        }
        Ok(l)
    }

    /// `L⁻¹ k(X, q)` for one query point.
    fn whitened_cross(&self, q: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.inputs.iter().map(|x| self.kernel.eval_unchecked(x, q)).collect();
        self.chol.solve_lower(&k)
    }

    fn cross_mean(&self, q: &[f64]) -> f64 {
        let k: Vec<f64> = self.inputs.iter().map(|x| self.kernel.eval_unchecked(x, q)).collect();
        self.prior_mean + dot(&k, &self.alpha)
    }

    /// Joint predictive mean and covariance of `f` at the query points.
    pub fn posterior<Q: AsRef<[f64]>>(&self, queries: &[Q]) -> Result<PosteriorGaussian> {
        self.check_queries(queries)?;
        let n = queries.len();
        let mut mean = Vec::with_capacity(n);
        let mut white = Vec::with_capacity(n);
        for q in queries {
            let q = q.as_ref();
            let k: Vec<f64> = self.inputs.iter().map(|x| self.kernel.eval_unchecked(x, q)).collect();
            mean.push(self.prior_mean + dot(&k, &self.alpha));
            white.push(self.chol.solve_lower(&k));
        }
        let mut covariance = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..=i {
                let prior = self.kernel.eval_unchecked(queries[i].as_ref(), queries[j].as_ref());
                let c = prior - dot(&white[i], &white[j]);
                covariance[i][j] = c;
                covariance[j][i] = c;
            }
            if covariance[i][i] < 0.0 {
                covariance[i][i] = 0.0;
            }
        }
        Ok(PosteriorGaussian { mean, covariance })
    }

    /// Predictive mean and variance of `f` at each query, without the joint covariance.
    pub fn posterior_marginals<Q: AsRef<[f64]>>(&self, queries: &[Q]) -> Result<Vec<(f64, f64)>> {
        self.check_queries(queries)?;
        Ok(queries.iter().map(|q| self.marginal_unchecked(q.as_ref())).collect())
    }

    pub(crate) fn marginal_unchecked(&self, q: &[f64]) -> (f64, f64) {
        let mean = self.cross_mean(q);
        let v = self.whitened_cross(q);
        let var = (self.kernel.eval_unchecked(q, q) - dot(&v, &v)).max(0.0);
        (mean, var)
    }

    /// One joint draw of `f` over the candidates: `mean + L z` with `L` the
    /// Cholesky factor of the posterior covariance plus `1e-9` diagonal jitter.
    pub fn sample_function_values<Q, R>(&self, candidates: &[Q], rng: &mut R) -> Result<Vec<f64>>
    where
        Q: AsRef<[f64]>,
        R: Rng + ?Sized,
    {
        self.sample_function_values_jittered(candidates, rng, BASE_JITTER, BASE_JITTER)
    }

    /// Like [`Self::sample_function_values`], but escalates the jitter tenfold
    /// up to `max_jitter` when the covariance is numerically singular.
    pub fn sample_function_values_jittered<Q, R>(
        &self,
        candidates: &[Q],
        rng: &mut R,
        first_jitter: f64,
        max_jitter: f64,
    ) -> Result<Vec<f64>>
    where
        Q: AsRef<[f64]>,
        R: Rng + ?Sized,
    {
        if candidates.is_empty() {
            return Ok(Vec::new());
        }
        let post = self.posterior(candidates)?;
        let (l, _) = LowerTri::factorize_jittered(post.len(), |i, j| post.covariance[i][j], first_jitter, max_jitter)?;
        let z = standard_normals(rng, post.len());
        Ok(post.mean.iter().zip(l.mul_vec(&z)).map(|(m, lz)| m + lz).collect())
    }

    /// One draw of a noisy outcome `y` at `x` from the predictive distribution.
    pub fn sample_outcome<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        self.check_dim(x)?;
        let (mean, var) = self.marginal_unchecked(x);
        let sd = (var + self.noise_variance).sqrt();
        Ok(mean + sd * standard_normal(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rbf() -> KernelSpec {
        KernelSpec::rbf(1.0, 1.0).unwrap()
    }

    #[test]
    fn kernel_examples() {
        let k = rbf();
        assert_eq!(k.eval(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        assert!((k.eval(&[0.0], &[1.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((k.eval(&[0.0], &[1.0]).unwrap() - 0.60653).abs() < 1e-5);
        let far = k.eval(&[0.0], &[100.0]).unwrap();
        assert!((0.0..1e-300).contains(&far));
        assert!(matches!(k.eval(&[0.0], &[1.0, 2.0]), Err(Error::Input(_))));
        assert_eq!(
            k.eval(&[1.0, 2.0], &[0.5, 0.0]).unwrap(),
            k.eval(&[0.5, 0.0], &[1.0, 2.0]).unwrap()
        );
    }

    #[test]
    fn invalid_kernel_rejected() {
        assert!(KernelSpec::rbf(0.0, 1.0).is_err());
        assert!(KernelSpec::rbf(1.0, -1.0).is_err());
        assert!(GpBelief::new(rbf(), -0.1).is_err());
    }

    #[test]
    fn prior_posterior() {
        let b = GpBelief::new(rbf(), 0.1).unwrap();
        let p = b.posterior(&[vec![0.2, 0.4]]).unwrap();
        assert_eq!(p.mean, vec![0.0]);
        assert_eq!(p.variance(0), 1.0);
    }

    #[test]
    fn noiseless_interpolation() {
        let b = GpBelief::new(rbf(), 0.0).unwrap().condition(&[0.5], 1.0).unwrap();
        let p = b.posterior(&[[0.5]]).unwrap();
        assert!((p.mean[0] - 1.0).abs() < 1e-12);
        assert!(p.variance(0).abs() < 1e-12);
    }

    #[test]
    fn one_noisy_observation() {
        let b = GpBelief::new(rbf(), 0.1).unwrap().condition(&[0.0], 1.0).unwrap();
        let p = b.posterior(&[[0.0]]).unwrap();
        assert!((p.mean[0] - 1.0 / 1.1).abs() < 1e-12);
        assert!((p.variance(0) - (1.0 - 1.0 / 1.1)).abs() < 1e-12);
    }

    #[test]
    fn two_identical_noisy_observations_match_direct_solve() {
        let b = GpBelief::new(rbf(), 0.1)
            .unwrap()
            .condition(&[0.0], 1.0)
            .unwrap()
            .condition(&[0.0], 1.0)
            .unwrap();
        // [1,1] (J + 0.1 I)^{-1} [1,1]ᵀ with J the all-ones 2×2 matrix, by Cramer's rule.
        let (a, c) = (1.1, 1.0);
        let det = a * a - c * c;
        let inv = [[a / det, -c / det], [-c / det, a / det]];
        let quad = inv[0][0] + inv[0][1] + inv[1][0] + inv[1][1];
        let p = b.posterior(&[[0.0]]).unwrap();
        assert!((p.variance(0) - (1.0 - quad)).abs() < 1e-12);
    }

    #[test]
    fn conditioning_does_not_mutate_parent() {
        let b = GpBelief::new(rbf(), 0.1).unwrap().condition(&[0.0], 2.0).unwrap();
        let before = b.posterior(&[[0.3]]).unwrap();
        let _child = b.condition(&[0.3], -1.0).unwrap();
        assert_eq!(b.posterior(&[[0.3]]).unwrap(), before);
        assert_eq!(b.len(), 1);
    }

    #[test]
    fn condition_on_empty_equals_fit() {
        let a = GpBelief::new(rbf(), 0.1).unwrap().condition(&[0.7, 0.1], 0.4).unwrap();
        let b = GpBelief::fit(rbf(), 0.1, 0.0, &[[0.7, 0.1]], &[0.4]).unwrap();
        let q = [[0.0, 0.0], [0.7, 0.2]];
        assert_eq!(a.posterior(&q).unwrap(), b.posterior(&q).unwrap());
    }

    #[test]
    fn conditioning_order_is_exchangeable() {
        let base = GpBelief::new(rbf(), 0.1).unwrap().condition(&[0.0], 0.3).unwrap();
        let ab = base.condition(&[1.0], 1.0).unwrap().condition(&[-0.5], -2.0).unwrap();
        let ba = base.condition(&[-0.5], -2.0).unwrap().condition(&[1.0], 1.0).unwrap();
        let q = [[0.2], [0.9], [-1.0]];
        let (p, r) = (ab.posterior(&q).unwrap(), ba.posterior(&q).unwrap());
        for i in 0..3 {
            assert!((p.mean[i] - r.mean[i]).abs() < 1e-8);
            for j in 0..3 {
                assert!((p.covariance[i][j] - r.covariance[i][j]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn dimension_mismatches_are_input_errors() {
        let b = GpBelief::new(rbf(), 0.1).unwrap().condition(&[0.0, 1.0], 1.0).unwrap();
        assert!(matches!(b.condition(&[0.0], 1.0), Err(Error::Input(_))));
        assert!(matches!(b.posterior(&[[0.0]]), Err(Error::Input(_))));
        let empty = GpBelief::new(rbf(), 0.1).unwrap();
        assert!(empty.posterior(&[vec![0.0], vec![0.0, 1.0]]).is_err());
        assert!(empty.posterior(&[vec![0.0, 1.0], vec![0.0, 1.0]]).is_ok());
    }

    #[test]
    fn degenerate_noiseless_duplicate_is_numerical_error() {
        let b = GpBelief::new(rbf(), 0.0).unwrap().condition(&[0.0], 1.0).unwrap();
        assert!(matches!(b.condition(&[0.0], 1.0), Err(Error::Numerical(_))));
    }

    #[test]
    fn sampling_contracts() {
        let b = GpBelief::new(rbf(), 0.0).unwrap().condition(&[0.0], 1.0).unwrap();
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(b.sample_function_values(&empty, &mut stream(1)).unwrap().is_empty());
        let c = [[0.1], [0.4], [2.0]];
        assert_eq!(
            b.sample_function_values(&c, &mut stream(5)).unwrap(),
            b.sample_function_values(&c, &mut stream(5)).unwrap()
        );
        for seed in 0..10 {
            assert_eq!(b.sample_outcome(&[0.0], &mut stream(seed)).unwrap(), 1.0);
        }
        let noisy = GpBelief::new(rbf(), 0.1).unwrap();
        assert_eq!(
            noisy.sample_outcome(&[0.3], &mut stream(3)).unwrap(),
            noisy.sample_outcome(&[0.3], &mut stream(3)).unwrap()
        );
    }

    #[test]
    fn function_sample_mean_matches_posterior() {
        let b = GpBelief::new(rbf(), 0.1)
            .unwrap()
            .condition(&[0.0], 1.5)
            .unwrap()
            .condition(&[1.0], -0.5)
            .unwrap();
        let q = [[0.4]];
        let p = b.posterior(&q).unwrap();
        let mut rng = stream(77);
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| b.sample_function_values(&q, &mut rng).unwrap()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let se = (p.variance(0) / n as f64).sqrt();
        assert!((mean - p.mean[0]).abs() < 3.0 * se, "mean {mean} vs {}", p.mean[0]);
    }

    #[test]
    fn outcome_variance_at_prior_point() {
        let b = GpBelief::new(rbf(), 0.1).unwrap();
        let mut rng = stream(11);
        let n = 10_000;
        let draws: Vec<f64> = (0..n).map(|_| b.sample_outcome(&[0.0], &mut rng).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.1).abs() < 0.05 * 1.1, "variance {var}");
    }

    #[test]
    fn prior_mean_shifts_predictions() {
        let b = GpBelief::new(rbf(), 0.1).unwrap().with_prior_mean(6.0);
        assert_eq!(b.posterior(&[[3.0]]).unwrap().mean[0], 6.0);
        let c = b.condition(&[0.0], 7.0).unwrap();
        let p = c.posterior(&[[0.0]]).unwrap();
        assert!((p.mean[0] - (6.0 + 1.0 / 1.1)).abs() < 1e-12);
    }
}
