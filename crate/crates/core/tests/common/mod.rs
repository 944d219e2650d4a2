#![allow(dead_code)]

use gptree_core::data::{generate_synthetic, median_pairwise_distance, Standardizer};
use gptree_core::gp::KernelSpec;
use gptree_core::rng::{standard_normal, stream};
use gptree_core::{Dataset, Provenance};
use rand::Rng;

pub const ASSAY_RANGE: (f64, f64) = (4.6, 8.0);

/// Signature-descriptor-like count features: molecules share one of a few
/// scaffolds and add sparse extra tokens. Targets are a smooth function of
/// the counts squeezed into the assay range.
pub fn descriptor_source(n: usize, d: usize, seed: u64) -> Dataset {
    let mut rng = stream(seed);
    let scaffolds = 6;
    let bases: Vec<Vec<f64>> = (0..scaffolds)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if rng.random::<f64>() < 0.15 {
                        rng.random_range(1..4) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let w: Vec<f64> = (0..d).map(|_| standard_normal(&mut rng)).collect();
    let mut features = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = bases[i % scaffolds].clone();
        for v in &mut x {
            if rng.random::<f64>() < 0.05 {
                *v += rng.random_range(1..3) as f64;
            }
        }
        features.push(x);
    }
    let raw: Vec<f64> = features
        .iter()
        .map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    let sd = (raw.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n as f64)
        .sqrt()
        .max(1e-12);
    let targets = raw
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let z = (r - mean) / sd;
            let scaffold = 0.25 * ((i % scaffolds) as f64 - 2.5) / 2.5;
            (6.3 + 0.8 * z.tanh() + scaffold).clamp(ASSAY_RANGE.0, ASSAY_RANGE.1)
        })
        .collect();
    Dataset {
        name: format!("descriptor-source-{seed}"),
        ids: (0..n).map(|i| format!("src-{i:04}")).collect(),
        features,
        targets,
        provenance: Provenance::Real,
        y_range: Some(ASSAY_RANGE),
    }
}

/// Signal variance used both to generate synthetic targets and to model them.
pub const SYNTH_SIGNAL_VARIANCE: f64 = 0.5;
pub const SYNTH_NOISE: f64 = 0.1;

/// A synthetic dataset sampled from a GP fitted to a descriptor-like source.
pub fn synthetic(n_arms: usize, source_n: usize, d: usize, seed: u64) -> Dataset {
    let source = descriptor_source(source_n, d, seed);
    let standardized = Standardizer::fit(&source.features).apply_all(&source.features);
    let lengthscale = median_pairwise_distance(&standardized);
    let kernel = KernelSpec::rbf(lengthscale, SYNTH_SIGNAL_VARIANCE).unwrap();
    generate_synthetic(&source, n_arms, seed ^ 0x5157, kernel, SYNTH_NOISE).unwrap()
}

/// One-sided sign test: P(X ≥ wins) for X ~ Binomial(n, 1/2).
pub fn sign_test_p(wins: usize, n: usize) -> f64 {
    let mut p = 0.0;
    let mut coeff = 1.0_f64;
    for k in 0..=n {
        if k > 0 {
            coeff *= (n - k + 1) as f64 / k as f64;
        }
        if k >= wins {
            p += coeff;
        }
    }
    p / 2f64.powi(n as i32)
}
