use rand::Rng;

use super::{descending_order, untested_or_err, Decision};
use crate::arms::ArmBelief;
use crate::error::{Error, Result};

fn check_count(n: usize, available: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::input("Thompson sample count must be at least 1"));
    }
    if n > available {
        return Err(Error::input(format!(
            "requested {n} Thompson selections but only {available} untested arms remain"
        )));
    }
    Ok(())
}

/// Top-`n` untested arms of one joint posterior sample, best first.
pub fn thompson_rank<R: Rng + ?Sized>(b: &ArmBelief, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let untested = untested_or_err(b)?;
    check_count(n, untested.len())?;
    let f = b.sample_at(&untested, rng)?;
    Ok(descending_order(&f).into_iter().take(n).map(|i| untested[i]).collect())
}

/// `n` independent joint samples; the k-th pick is the argmax of the k-th
/// sample among arms not yet picked.
pub fn thompson_independent<R: Rng + ?Sized>(b: &ArmBelief, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    let untested = untested_or_err(b)?;
    check_count(n, untested.len())?;
    let mut taken = vec![false; untested.len()];
    let mut picks = Vec::with_capacity(n);
    for _ in 0..n {
        let f = b.sample_at(&untested, rng)?;
        let best = (0..untested.len())
            .filter(|&i| !taken[i])
            .fold(None, |best: Option<usize>, i| match best {
                Some(j) if f[j] >= f[i] => Some(j),
                _ => Some(i),
            })
            .expect("n does not exceed the untested count");
        taken[best] = true;
        picks.push(untested[best]);
    }
    Ok(picks)
}

/// Top-`size` batches from `n` joint samples, identical batches merged
/// (keeping the first occurrence).
pub fn thompson_rank_batches<R: Rng + ?Sized>(
    b: &ArmBelief,
    n: usize,
    size: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return Err(Error::input("Thompson sample count must be at least 1"));
    }
    let mut batches: Vec<Vec<usize>> = Vec::with_capacity(n);
    let mut keys: Vec<Vec<usize>> = Vec::with_capacity(n);
    for _ in 0..n {
        let batch = thompson_rank(b, size, rng)?;
        let mut key = batch.clone();
        key.sort_unstable();
        if !keys.contains(&key) {
            keys.push(key);
            batches.push(batch);
        }
    }
    Ok(batches)
}

pub fn gp_thompson_step<R: Rng + ?Sized>(b: &ArmBelief, rng: &mut R) -> Result<Decision> {
    let arm = thompson_rank(b, 1, rng)?[0];
    Ok(Decision::single(arm))
}
