//! Thompson sampling for a Bayesian linear reward model (LB-TS).
//!
//! The precision accumulator starts at the identity, `B = I + Σ x xᵀ`, with
//! `f = Σ x y` and `μ̂ = B⁻¹ f`. Each step draws `μ̃ ~ N(μ̂, v² B⁻¹)` and plays
//! `argmax xᵀ μ̃`, where `v = R √(24/ε · d · ln(1/δ))` and `ε = 1/ln T`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normals;

#[derive(Debug, Clone)]
pub struct LinTsState {
    b: DMatrix<f64>,
    f: DVector<f64>,
    mu_hat: DVector<f64>,
    v: f64,
    r: f64,
    delta: f64,
    horizon: usize,
}

/// `v = R √(24/ε · d · ln(1/δ))` with `ε = 1/ln T`.
pub fn exploration_scale(r: f64, d: usize, delta: f64, horizon: usize) -> Result<f64> {
    if horizon < 2 {
        return Err(Error::input(format!("horizon must be at least 2, got {horizon}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::input(format!("R must be positive, got {r}")));
    }
    let epsilon = 1.0 / (horizon as f64).ln();
    Ok(r * (24.0 / epsilon * d as f64 * (1.0 / delta).ln()).sqrt())
}

pub fn lints_init(d: usize, r: f64, delta: f64, horizon: usize) -> Result<LinTsState> {
    if d == 0 {
        return Err(Error::input("feature dimension must be at least 1"));
    }
    let v = exploration_scale(r, d, delta, horizon)?;
    Ok(LinTsState {
        b: DMatrix::identity(d, d),
        f: DVector::zeros(d),
        mu_hat: DVector::zeros(d),
        v,
        r,
        delta,
        horizon,
    })
}

impl LinTsState {
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn scale(&self) -> f64 {
        self.v
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.f
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu_hat
    }

    /// Overrides the posterior scale `v`.
    pub fn with_scale(mut self, v: f64) -> Self {
        self.v = v;
        self
    }

    fn factor(&self) -> Result<Cholesky<f64, Dyn>> {
        Cholesky::new(self.b.clone()).ok_or_else(|| Error::numerical("precision matrix B is not positive definite"))
    }

    /// One draw `μ̃ ~ N(μ̂, v² B⁻¹)`.
    pub fn sample_mean<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let chol = self.factor()?;
        let z = DVector::from_vec(standard_normals(rng, self.dim()));
        // B = L Lᵀ, so L⁻ᵀ z has covariance B⁻¹.
        let u = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::numerical("triangular solve with Cholesky factor of B failed"))?;
        Ok(&self.mu_hat + u * self.v)
    }

    /// Returns the position (within `arms`) of `argmax xᵀ μ̃`; ties go to the lowest position.
    pub fn step<Q: AsRef<[f64]>, R: Rng + ?Sized>(&self, arms: &[Q], rng: &mut R) -> Result<usize> {
        if arms.is_empty() {
            return Err(Error::input("no arms to choose from"));
        }
        for (i, x) in arms.iter().enumerate() {
            if x.as_ref().len() != self.dim() {
                return Err(Error::input(format!(
                    "arm {i} has dimension {}, model has dimension {}",
                    x.as_ref().len(),
                    self.dim()
                )));
            }
        }
        let mu = self.sample_mean(rng)?;
        let mut best = 0;
        let mut best_score = f64::NEG_INFINITY;
        for (i, x) in arms.iter().enumerate() {
            let score: f64 = x.as_ref().iter().zip(mu.iter()).map(|(a, b)| a * b).sum();
            if score > best_score {
                best = i;
                best_score = score;
            }
        }
        Ok(best)
    }

    pub fn update(&self, x: &[f64], y: f64) -> Result<Self> {
        if x.len() != self.dim() {
            return Err(Error::input(format!(
                "context has dimension {}, model has dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let xv = DVector::from_column_slice(x);
        let mut next = self.clone();
        next.b += &xv * xv.transpose();
        next.f += &xv * y;
        next.mu_hat = next.factor()?.solve(&next.f);
        Ok(next)
    }
}

pub fn lints_step<Q: AsRef<[f64]>, R: Rng + ?Sized>(s: &LinTsState, arms: &[Q], rng: &mut R) -> Result<usize> {
    s.step(arms, rng)
}

pub fn lints_update(s: &LinTsState, x: &[f64], y: f64) -> Result<LinTsState> {
    s.update(x, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn init_state() {
        let s = lints_init(2, 1.0, 0.1, 100).unwrap();
        assert_eq!(s.precision(), &DMatrix::identity(2, 2));
        assert_eq!(s.mean(), &DVector::zeros(2));
        assert!((s.scale() - 22.6).abs() < 0.05);
        assert!(matches!(lints_init(2, 1.0, 0.1, 1), Err(Error::Input(_))));
        assert!(lints_init(2, 1.0, 1.0, 10).is_err());
        assert!(lints_init(0, 1.0, 0.5, 10).is_err());
    }

    #[test]
    fn single_update_arithmetic() {
        let s = lints_init(3, 1.0, 0.1, 10)
            .unwrap()
            .update(&[1.0, 0.0, 0.0], 1.0)
            .unwrap();
        assert_eq!(s.precision()[(0, 0)], 2.0);
        assert_eq!(s.precision()[(1, 1)], 1.0);
        assert_eq!(s.moment()[0], 1.0);
        assert!((s.mean()[0] - 0.5).abs() < 1e-15);
        assert_eq!(s.mean()[1], 0.0);
    }

    #[test]
    fn null_update_and_commuting_updates() {
        let s = lints_init(2, 1.0, 0.1, 10).unwrap().update(&[0.3, 0.1], 2.0).unwrap();
        let z = s.update(&[0.0, 0.0], 5.0).unwrap();
        assert_eq!(z.precision(), s.precision());
        assert_eq!(z.mean(), s.mean());
        let ab = s.update(&[1.0, -1.0], 0.5).unwrap().update(&[0.2, 0.7], -1.0).unwrap();
        let ba = s.update(&[0.2, 0.7], -1.0).unwrap().update(&[1.0, -1.0], 0.5).unwrap();
        assert!((ab.precision() - ba.precision()).abs().max() < 1e-10);
        assert!((ab.moment() - ba.moment()).abs().max() < 1e-10);
    }

    #[test]
    fn degenerate_steps() {
        let s = lints_init(2, 1.0, 0.1, 10).unwrap();
        assert_eq!(s.step(&[[0.4, 0.4]], &mut stream(0)).unwrap(), 0);
        let zero = s.clone().with_scale(0.0);
        assert_eq!(
            zero.step(&[[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]], &mut stream(0))
                .unwrap(),
            0
        );
        assert!(s.step(&[[1.0]], &mut stream(0)).is_err());
    }

    #[test]
    fn zero_scale_is_greedy() {
        let s = lints_init(2, 1.0, 0.1, 10)
            .unwrap()
            .update(&[1.0, 0.2], 3.0)
            .unwrap()
            .update(&[-0.4, 1.0], 1.0)
            .unwrap()
            .with_scale(0.0);
        let arms = [[0.1, 0.9], [1.0, 0.0], [0.5, 0.5], [-1.0, 2.0]];
        let scores: Vec<f64> = arms.iter().map(|x| x[0] * s.mean()[0] + x[1] * s.mean()[1]).collect();
        let brute = (0..arms.len()).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        assert_eq!(s.step(&arms, &mut stream(3)).unwrap(), brute);
    }
}
