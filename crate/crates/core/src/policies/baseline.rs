use rand::Rng;

use super::{untested_or_err, Decision};
use crate::arms::ArmBelief;
use crate::error::Result;

/// Uniform choice among untested arms.
pub fn random_baseline_step<R: Rng + ?Sized>(b: &ArmBelief, rng: &mut R) -> Result<Decision> {
    let untested = untested_or_err(b)?;
    Ok(Decision::single(untested[rng.random_range(0..untested.len())]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policies::test_support::line_belief;
    use crate::rng::stream;

    #[test]
    fn uniform_over_untested() {
        let b = line_belief(10, 0.1);
        let mut rng = stream(9);
        let mut counts = [0usize; 10];
        for _ in 0..10_000 {
            counts[random_baseline_step(&b, &mut rng).unwrap().arm_indices[0]] += 1;
        }
        for c in counts {
            assert!((c as f64 / 10_000.0 - 0.1).abs() < 0.015, "{counts:?}");
        }
    }

    #[test]
    fn single_and_deterministic() {
        let b = line_belief(2, 0.1).condition(0, 1.0).unwrap();
        assert_eq!(random_baseline_step(&b, &mut stream(0)).unwrap().arm_indices, vec![1]);
        let b = line_belief(50, 0.1);
        assert_eq!(
            random_baseline_step(&b, &mut stream(4)).unwrap(),
            random_baseline_step(&b, &mut stream(4)).unwrap()
        );
    }
}
