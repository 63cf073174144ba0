use std::ops::Range;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, stream};

pub const TRAIN_LEN: usize = 3500;
pub const VALIDATION_LEN: usize = 1500;
pub const TEST_LEN: usize = 1000;
/// Rows used for fitting (training plus validation).
pub const FIT_LEN: usize = TRAIN_LEN + VALIDATION_LEN;
pub const MIN_TRIAL_LEN: usize = FIT_LEN + TEST_LEN;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Range<usize>,
    pub seed: u64,
}

fn check_len(trial_length: usize) -> Result<()> {
    if trial_length < MIN_TRIAL_LEN {
        return Err(Error::InsufficientData {
            actual: trial_length,
            required: MIN_TRIAL_LEN,
        });
    }
    Ok(())
}

/// Random 3500/1500 partition of rows `0..5000`; rows `5000..6000` are test.
pub fn make_split(trial_length: usize, seed: u64) -> Result<SplitIndices> {
    check_len(trial_length)?;
    let mut rows: Vec<usize> = (0..FIT_LEN).collect();
    rows.shuffle(&mut seeded(derive_seed(seed, stream::SPLIT)));
    let validation = rows.split_off(TRAIN_LEN);
    Ok(SplitIndices {
        train: rows,
        validation,
        test: FIT_LEN..MIN_TRIAL_LEN,
        seed,
    })
}

/// Sequential variant: the first 3500 rows train, the next 1500 validate.
pub fn make_sequential_split(trial_length: usize, seed: u64) -> Result<SplitIndices> {
    check_len(trial_length)?;
    Ok(SplitIndices {
        train: (0..TRAIN_LEN).collect(),
        validation: (TRAIN_LEN..FIT_LEN).collect(),
        test: FIT_LEN..MIN_TRIAL_LEN,
        seed,
    })
}
