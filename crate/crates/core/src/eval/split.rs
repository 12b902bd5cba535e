use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub ratios: (f64, f64, f64),
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub id: usize,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

fn shuffled(subjects: &[String], seed: u64) -> Vec<String> {
    let mut s: Vec<String> = subjects
        .iter()
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    s.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    s
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

/// Seeded subject shuffle; test and validation get `round(ratio · N)`
/// subjects each and training keeps the rest.
pub fn subject_split(
    subjects: &[String],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitPlan, EvalError> {
    let (tr, va, te) = ratios;
    if [tr, va, te].iter().any(|r| !(0.0..=1.0).contains(r)) || ((tr + va + te) - 1.0).abs() > 1e-9
    {
        return Err(EvalError::InvalidRatios(ratios));
    }
    let s = shuffled(subjects, seed);
    let n = s.len();
    if n < 3 {
        return Err(EvalError::TooFewSubjects(n));
    }
    let n_test = (te * n as f64).round() as usize;
    let n_val = (va * n as f64).round() as usize;
    if n_test + n_val >= n {
        return Err(EvalError::TooFewSubjects(n));
    }
    Ok(SplitPlan {
        test: sorted(s[..n_test].to_vec()),
        val: sorted(s[n_test..n_test + n_val].to_vec()),
        train: sorted(s[n_test + n_val..].to_vec()),
        ratios,
        seed,
    })
}

/// Seeded subject shuffle cut into `k` contiguous groups whose sizes differ
/// by at most one (larger groups first). Fold `i` tests group `i`.
pub fn kfold_plan(subjects: &[String], k: usize, seed: u64) -> Result<Vec<Fold>, EvalError> {
    let s = shuffled(subjects, seed);
    let n = s.len();
    if k < 2 || k > n {
        return Err(EvalError::KTooLarge { k, n });
    }
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for id in 0..k {
        let size = n / k + usize::from(id < n % k);
        let test = s[start..start + size].to_vec();
        let train = s[..start]
            .iter()
            .chain(&s[start + size..])
            .cloned()
            .collect();
        folds.push(Fold {
            id,
            train: sorted(train),
            test: sorted(test),
        });
        start += size;
    }
    Ok(folds)
}

/// Row indices whose group is in `subjects`.
pub fn rows_for_subjects<'a>(
    groups: impl IntoIterator<Item = &'a str>,
    subjects: &[String],
) -> Vec<usize> {
    let set: BTreeSet<&str> = subjects.iter().map(|s| s.as_str()).collect();
    groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| set.contains(g))
        .map(|(i, _)| i)
        .collect()
}
