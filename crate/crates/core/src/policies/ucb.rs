use std::f64::consts::PI;

use super::{untested_or_err, CandidateValue, Decision};
use crate::arms::ArmBelief;
use crate::error::{Error, Result};

/// `β_t = 2 ln(D t² π² / (6δ))`.
pub fn ucb_beta(d_size: usize, t: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::input(format!("delta must lie in (0, 1), got {delta}")));
    }
    if t == 0 || d_size == 0 {
        return Err(Error::input("UCB needs t ≥ 1 and a nonempty arm set"));
    }
    let t = t as f64;
    Ok(2.0 * (d_size as f64 * t * t * PI * PI / (6.0 * delta)).ln())
}

/// Argmax of `μ + √β_t σ` over untested arms, ties to the lowest index.
pub fn gp_ucb_step(b: &ArmBelief, t: usize, delta: f64, d_size: usize) -> Result<Decision> {
    let beta = ucb_beta(d_size, t, delta)?;
    let untested = untested_or_err(b)?;
    let root = beta.max(0.0).sqrt();
    let scores: Vec<f64> = b
        .marginals(&untested)
        .into_iter()
        .map(|(m, v)| m + root * v.sqrt())
        .collect();
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok(Decision {
        arm_indices: vec![untested[best]],
        diagnostics: vec![CandidateValue {
            arms: vec![untested[best]],
            value: scores[best],
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::test_support::line_belief;

    #[test]
    fn beta_example() {
        let beta = ucb_beta(100, 1, 0.99).unwrap();
        let hand = 2.0 * (100.0 * 9.869_604_401_089_358 / 5.94_f64).ln();
        assert!((beta - hand).abs() < 1e-6);
        assert!((beta - 10.23).abs() < 0.005);
        assert!(matches!(ucb_beta(100, 1, 1.0), Err(Error::Input(_))));
        assert!(matches!(ucb_beta(100, 1, 0.0), Err(Error::Input(_))));
    }

    #[test]
    fn equal_means_pick_largest_variance() {
        // Arm 0 observed; its neighbours have reduced variance, so the far arm wins.
        let b = line_belief(8, 0.01).condition(0, 0.0).unwrap();
        let d = gp_ucb_step(&b, 3, 0.1, 8).unwrap();
        assert_eq!(d.arm_indices, vec![7]);
    }

    #[test]
    fn shift_invariance() {
        let b = line_belief(10, 0.1).condition_many(&[2, 6], &[1.0, -0.5]).unwrap();
        let shifted_prior = {
            let set = b.arms_arc().clone();
            ArmBelief::new(set, 0.1, 5.0)
                .unwrap()
                .condition_many(&[2, 6], &[6.0, 4.5])
                .unwrap()
        };
        for t in 1..20 {
            assert_eq!(
                gp_ucb_step(&b, t, 0.01, 10).unwrap().arm_indices,
                gp_ucb_step(&shifted_prior, t, 0.01, 10).unwrap().arm_indices
            );
        }
    }
}
