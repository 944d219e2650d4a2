//! Seeded Gaussian random projection for compressing molecule features.
//!
//! Entries are i.i.d. `N(0, 1/m)` so that `E‖Px‖² = ‖x‖²`. They are generated
//! row-major from [`crate::rng::stream`]`(seed)` with the ziggurat normal
//! sampler, so `(d, m, seed)` determines the matrix bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::{standard_normal, stream};

/// Target dimension used when none is configured.
pub const DEFAULT_TARGET_DIM: usize = 128;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    rows: usize,
    cols: usize,
    seed: u64,
    entries: Vec<f64>,
}

pub fn build_projection(d: usize, m: usize, seed: u64) -> Result<ProjectionMatrix> {
    if m == 0 || d == 0 {
        return Err(Error::input("projection dimensions must be positive"));
    }
    if m > d {
        return Err(Error::input(format!(
            "target dimension {m} exceeds source dimension {d}"
        )));
    }
    let mut rng = stream(seed);
    let scale = 1.0 / (m as f64).sqrt();
    let entries = (0..m * d).map(|_| standard_normal(&mut rng) * scale).collect();
    Ok(ProjectionMatrix {
        rows: m,
        cols: d,
        seed,
        entries,
    })
}

impl ProjectionMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.entries[r * self.cols..(r + 1) * self.cols]
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::input(format!(
                "vector has dimension {}, projection expects {}",
                x.len(),
                self.cols
            )));
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    pub fn apply_all(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.par_iter().map(|x| self.apply(x)).collect()
    }

    /// Projects every feature vector of a dataset; ids and targets are untouched.
    pub fn project_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let features = self.apply_all(&data.features)?;
        Ok(Dataset {
            name: format!("{}-proj{}", data.name, self.rows),
            ids: data.ids.clone(),
            features,
            targets: data.targets.clone(),
            provenance: Provenance::Projected,
            y_range: data.y_range,
        })
    }
}

pub fn apply_projection(p: &ProjectionMatrix, x: &[f64]) -> Result<Vec<f64>> {
    p.apply(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::standard_normals;

    #[test]
    fn deterministic_in_seed() {
        assert_eq!(build_projection(8, 8, 1).unwrap(), build_projection(8, 8, 1).unwrap());
        assert_ne!(build_projection(8, 8, 1).unwrap(), build_projection(8, 8, 2).unwrap());
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(build_projection(4, 5, 0), Err(Error::Input(_))));
        assert!(matches!(build_projection(4, 0, 0), Err(Error::Input(_))));
        let p = build_projection(4, 2, 0).unwrap();
        assert!(matches!(p.apply(&[1.0; 3]), Err(Error::Input(_))));
    }

    #[test]
    fn entry_statistics() {
        let p = build_projection(1024, 64, 99).unwrap();
        let n = p.entries().len() as f64;
        let mean = p.entries().iter().sum::<f64>() / n;
        let var = p.entries().iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let target = 1.0 / 64.0;
        assert!(mean.abs() < 3.0 * (target / n).sqrt(), "mean {mean}");
        assert!((var - target).abs() < 0.05 * target, "variance {var}");
    }

    #[test]
    fn zero_and_linearity() {
        let p = build_projection(16, 5, 3).unwrap();
        assert!(p.apply(&[0.0; 16]).unwrap().iter().all(|v| *v == 0.0));
        let mut rng = stream(8);
        let x = standard_normals(&mut rng, 16);
        let z = standard_normals(&mut rng, 16);
        let (a, b) = (1.7, -0.3);
        let combo: Vec<f64> = x.iter().zip(&z).map(|(x, z)| a * x + b * z).collect();
        let lhs = p.apply(&combo).unwrap();
        let (px, pz) = (p.apply(&x).unwrap(), p.apply(&z).unwrap());
        for i in 0..5 {
            assert!((lhs[i] - (a * px[i] + b * pz[i])).abs() < 1e-10);
        }
    }
}
