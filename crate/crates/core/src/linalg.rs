//! Dense lower-triangular Cholesky factors stored row-packed.
//!
//! Row `i` occupies `data[i*(i+1)/2 ..= i*(i+1)/2 + i]`. Appending a row never
//! moves earlier rows, which makes rank-one (and block) extension of a factor a
//! plain push.

use crate::error::{Error, Result};

/// Jitter schedule used when a covariance has to be factorized for sampling.
pub const BASE_JITTER: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LowerTri {
    n: usize,
    data: Vec<f64>,
}

#[inline]
fn row_start(i: usize) -> usize {
    i * (i + 1) / 2
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in chunks * 4..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

impl LowerTri {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_capacity(n: usize) -> Self {
        Self {
            n: 0,
            data: Vec::with_capacity(row_start(n)),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let s = row_start(i);
        &self.data[s..s + i + 1]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j > i {
            0.0
        } else {
            self.data[row_start(i) + j]
        }
    }

    /// Appends the row for a new variable whose covariances with the existing
    /// variables (and itself, last entry) are `cov`.
    pub fn push_row(&mut self, cov: &[f64]) -> Result<()> {
        let i = self.n;
        if cov.len() != i + 1 {
            return Err(Error::input(format!(
                "covariance row has length {}, expected {}",
                cov.len(),
                i + 1
            )));
        }
        let start = self.data.len();
        self.data.reserve(i + 1);
        for c in 0..i {
            let rc = self.row(c);
            let partial = dot(&self.data[start..start + c], &rc[..c]);
            let v = (cov[c] - partial) / rc[c];
            self.data.push(v);
        }
        let sq = dot(&self.data[start..start + i], &self.data[start..start + i]);
        let d = cov[i] - sq;
        if d <= 0.0 || !d.is_finite() {
            self.data.truncate(start);
            return Err(Error::numerical(format!(
                "matrix is not positive definite at pivot {i} (residual {d:e})"
            )));
        }
        self.data.push(d.sqrt());
        self.n += 1;
        Ok(())
    }

    /// Factorizes a symmetric matrix given by an entry oracle (only `j <= i` is queried).
    pub fn factorize<F>(n: usize, entry: F) -> Result<Self>
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut l = Self::with_capacity(n);
        let mut row = Vec::with_capacity(n);
        for i in 0..n {
            row.clear();
            row.extend((0..=i).map(|j| entry(i, j)));
            l.push_row(&row)?;
        }
        Ok(l)
    }

    /// Factorizes `A + jitter·I`, escalating the jitter tenfold from `first`
    /// until the factorization succeeds or `last` is exceeded. Returns the
    /// factor and the jitter that was used.
    pub fn factorize_jittered<F>(n: usize, entry: F, first: f64, last: f64) -> Result<(Self, f64)>
    where
        F: Fn(usize, usize) -> f64,
    {
        let mut jitter = first;
        loop {
            match Self::factorize(n, |i, j| if i == j { entry(i, j) + jitter } else { entry(i, j) }) {
                Ok(l) => return Ok((l, jitter)),
                Err(err) if jitter * 10.0 > last * (1.0 + 1e-12) => {
                    return Err(Error::numerical(format!(
                        "jittered Cholesky failed up to jitter {jitter:e}: {err}"
                    )))
                }
                Err(_) => jitter *= 10.0,
            }
        }
    }

    /// Solves `L x = b`.
    pub fn solve_lower(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = self.row(i);
            let v = (b[i] - dot(&r[..i], &x)) / r[i];
            x.push(v);
        }
        x
    }

    /// Solves `Lᵀ x = b`.
    pub fn solve_upper(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            let r = self.row(i);
            x[i] /= r[i];
            let xi = x[i];
            for (j, &lij) in r[..i].iter().enumerate() {
                x[j] -= lij * xi;
            }
        }
        x
    }

    /// Solves `L Lᵀ x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Computes `L z`.
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.mul_row(i, z)).collect()
    }

    /// Row `i` of `L z`.
    #[inline]
    pub fn mul_row(&self, i: usize, z: &[f64]) -> f64 {
        dot(self.row(i), &z[..=i])
    }

    /// Rebuilds the dense matrix `L Lᵀ` (test helper and diagnostics).
    pub fn reconstruct(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| {
                        let k = i.min(j) + 1;
                        dot(&self.row(i)[..k], &self.row(j)[..k])
                    })
                    .collect()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd(n: usize) -> Vec<Vec<f64>> {
        // A = M Mᵀ + n I with a fixed M.
        let m: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.5).collect())
            .collect();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| dot(&m[i], &m[j]) + if i == j { n as f64 } else { 0.0 })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn factor_reconstructs_and_solves() {
        let a = spd(9);
        let l = LowerTri::factorize(9, |i, j| a[i][j]).unwrap();
        let back = l.reconstruct();
        for i in 0..9 {
            for j in 0..9 {
                assert!((back[i][j] - a[i][j]).abs() < 1e-12);
            }
        }
        let b: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let x = l.solve(&b);
        for i in 0..9 {
            let ax = dot(&a[i], &x);
            assert!((ax - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn non_pd_is_rejected_without_corrupting_factor() {
        let mut l = LowerTri::empty();
        l.push_row(&[1.0]).unwrap();
        assert!(matches!(l.push_row(&[1.0, 1.0]), Err(Error::Numerical(_))));
        assert_eq!(l.dim(), 1);
        l.push_row(&[0.5, 2.0]).unwrap();
        assert_eq!(l.dim(), 2);
    }

    #[test]
    fn jitter_escalates_on_singular_matrix() {
        // Rank-one matrix of ones.
        let (l, jitter) = LowerTri::factorize_jittered(4, |_, _| 1.0, 1e-12, 1e-3).unwrap();
        assert_eq!(l.dim(), 4);
        assert!(jitter >= 1e-12);
        assert!(LowerTri::factorize_jittered(3, |i, j| if i == j { -1.0 } else { 0.0 }, 1e-9, 1e-6).is_err());
    }
}
