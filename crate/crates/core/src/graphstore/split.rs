use std::sync::atomic::{AtomicUsize, Ordering};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::graph::AlignmentPair;
use crate::error::{Error, Result};

/// Name of the shuffle generator, recorded with every split.
pub const SPLIT_GENERATOR: &str = "chacha8/rand-0.9/v1";

pub const DEFAULT_TEST_FRACTION: f64 = 0.7;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.8;

/// Disjoint train / validation / test partition of an alignment set.
///
/// The test part is only reachable through [`AlignmentSplit::test`], which
/// counts its callers; training code receives a [`TrainingView`] instead.
#[derive(Debug, Serialize, Deserialize)]
pub struct AlignmentSplit {
    train: Vec<AlignmentPair>,
    validation: Vec<AlignmentPair>,
    test: Vec<AlignmentPair>,
    pub seed: u64,
    pub test_fraction: f64,
    pub train_fraction: f64,
    pub generator: String,
    #[serde(skip)]
    test_reads: AtomicUsize,
}

impl Clone for AlignmentSplit {
    fn clone(&self) -> Self {
        Self {
            train: self.train.clone(),
            validation: self.validation.clone(),
            test: self.test.clone(),
            seed: self.seed,
            test_fraction: self.test_fraction,
            train_fraction: self.train_fraction,
            generator: self.generator.clone(),
            test_reads: AtomicUsize::new(0),
        }
    }
}

impl PartialEq for AlignmentSplit {
    fn eq(&self, other: &Self) -> bool {
        self.train == other.train
            && self.validation == other.validation
            && self.test == other.test
            && self.seed == other.seed
            && self.test_fraction == other.test_fraction
            && self.train_fraction == other.train_fraction
            && self.generator == other.generator
    }
}

/// The parts of a split that training and model selection may read.
#[derive(Debug, Clone, Copy)]
pub struct TrainingView<'a> {
    pub train: &'a [AlignmentPair],
    pub validation: &'a [AlignmentPair],
}

fn check_fraction(name: &str, f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in (0, 1), got {f}")))
    }
}

/// Shuffles `alignments` with a seeded generator and cuts off
/// `floor(n * test_fraction)` test pairs, then `floor(rest * train_fraction)`
/// train pairs; the remainder is validation.
pub fn make_split(
    alignments: &[AlignmentPair],
    test_fraction: f64,
    train_fraction_of_rest: f64,
    seed: u64,
) -> Result<AlignmentSplit> {
    check_fraction("test fraction", test_fraction)?;
    check_fraction("train fraction", train_fraction_of_rest)?;
    if alignments.len() < 3 {
        return Err(Error::invalid(format!(
            "need at least 3 alignments to split, got {}",
            alignments.len()
        )));
    }
    let mut shuffled = alignments.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let n_test = (n as f64 * test_fraction).floor() as usize;
    let rest = n - n_test;
    let n_train = (rest as f64 * train_fraction_of_rest).floor() as usize;

    let validation = shuffled.split_off(n_test + n_train);
    let train = shuffled.split_off(n_test);
    Ok(AlignmentSplit {
        train,
        validation,
        test: shuffled,
        seed,
        test_fraction,
        train_fraction: train_fraction_of_rest,
        generator: SPLIT_GENERATOR.to_owned(),
        test_reads: AtomicUsize::new(0),
    })
}

/// Uses a predefined test set and splits the remaining alignments into train
/// and validation.
pub fn split_with_test(
    alignments: &[AlignmentPair],
    test: &[AlignmentPair],
    train_fraction_of_rest: f64,
    seed: u64,
) -> Result<AlignmentSplit> {
    check_fraction("train fraction", train_fraction_of_rest)?;
    let test_set: std::collections::HashSet<_> = test.iter().copied().collect();
    let mut rest: Vec<_> = alignments.iter().copied().filter(|p| !test_set.contains(p)).collect();
    if rest.len() + test.len() != alignments.len() {
        return Err(Error::invalid(
            "predefined test pairs must be a subset of the alignments",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rest.shuffle(&mut rng);
    let n_train = (rest.len() as f64 * train_fraction_of_rest).floor() as usize;
    let validation = rest.split_off(n_train);
    Ok(AlignmentSplit {
        train: rest,
        validation,
        test: test.to_vec(),
        seed,
        test_fraction: test.len() as f64 / alignments.len().max(1) as f64,
        train_fraction: train_fraction_of_rest,
        generator: SPLIT_GENERATOR.to_owned(),
        test_reads: AtomicUsize::new(0),
    })
}

impl AlignmentSplit {
    /// Assembles a split from explicit parts.
    pub fn from_parts(
        train: Vec<AlignmentPair>,
        validation: Vec<AlignmentPair>,
        test: Vec<AlignmentPair>,
    ) -> Result<Self> {
        let mut all: Vec<_> = train.iter().chain(&validation).chain(&test).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::invalid("split parts overlap"));
        }
        let total = n.max(1) as f64;
        let rest = (train.len() + validation.len()).max(1) as f64;
        Ok(Self {
            test_fraction: test.len() as f64 / total,
            train_fraction: train.len() as f64 / rest,
            train,
            validation,
            test,
            seed: 0,
            generator: "explicit".to_owned(),
            test_reads: AtomicUsize::new(0),
        })
    }

    pub fn train(&self) -> &[AlignmentPair] {
        &self.train
    }

    pub fn validation(&self) -> &[AlignmentPair] {
        &self.validation
    }

    /// Held-out test pairs. Every call is counted.
    pub fn test(&self) -> &[AlignmentPair] {
        self.test_reads.fetch_add(1, Ordering::SeqCst);
        &self.test
    }

    /// Number of [`AlignmentSplit::test`] calls so far.
    pub fn test_reads(&self) -> usize {
        self.test_reads.load(Ordering::SeqCst)
    }

    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.test.len(), self.train.len(), self.validation.len())
    }

    pub fn training_view(&self) -> TrainingView<'_> {
        TrainingView {
            train: &self.train,
            validation: &self.validation,
        }
    }
}
