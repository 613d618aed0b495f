use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Example;
use crate::rng::{rng_for, stream};
use crate::{Error, Result};

/// Train / validation / test fractions.
pub const SPLIT_RATIOS: [f64; 3] = [0.70, 0.15, 0.15];

const MIN_EXAMPLES: usize = 10;

/// Row indices of each part; serialized as the split manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub seed: u64,
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset<T> {
    pub train: Vec<Example<T>>,
    pub validation: Vec<Example<T>>,
    pub test: Vec<Example<T>>,
    pub seed: u64,
}

/// Seeded uniform permutation of `0..n` cut contiguously into 70/15/15.
pub fn split_indices(n: usize, seed: u64) -> Result<SplitIndices> {
    if n < MIN_EXAMPLES {
        return Err(Error::Data(format!(
            "too few examples to split: {n} (need at least {MIN_EXAMPLES})"
        )));
    }
    let n_train = (n as f64 * SPLIT_RATIOS[0]).round() as usize;
    let n_val = (n as f64 * SPLIT_RATIOS[1]).round() as usize;
    let n_test = n - n_train - n_val;

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng_for(seed, stream::SPLIT));
    let test = perm.split_off(n_train + n_val);
    let validation = perm.split_off(n_train);
    debug_assert_eq!(test.len(), n_test);
    Ok(SplitIndices {
        seed,
        train: perm,
        validation,
        test,
    })
}

/// Split already-encoded examples with the same permutation as [`split_indices`].
pub fn split<T>(examples: Vec<Example<T>>, seed: u64) -> Result<SplitDataset<T>> {
    let idx = split_indices(examples.len(), seed)?;
    let mut slots: Vec<Option<Example<T>>> = examples.into_iter().map(Some).collect();
    let mut take = |part: &[usize]| -> Vec<Example<T>> {
        part.iter().map(|&i| slots[i].take().expect("indices are a permutation")).collect()
    };
    let train = take(&idx.train);
    let validation = take(&idx.validation);
    let test = take(&idx.test);
    Ok(SplitDataset {
        train,
        validation,
        test,
        seed,
    })
}

impl<T> SplitDataset<T> {
    pub fn sizes(&self) -> [usize; 3] {
        [self.train.len(), self.validation.len(), self.test.len()]
    }
}
