use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::rng::SplitMix64;

/// Row indices of a seeded train/test partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Number of training rows: `round(ratio * n)`, kept inside `[1, n - 1]`
/// so neither side is empty. Below two rows everything goes to training.
pub fn train_size(n: usize, ratio: f64) -> usize {
    if n < 2 {
        return n;
    }
    ((ratio * n as f64).round() as usize).clamp(1, n - 1)
}

/// Shuffles `0..n` with a SplitMix64 Fisher–Yates pass and cuts it at
/// `train_size(n, ratio)`.
pub fn split_indices(n: usize, ratio: f64, seed: u64) -> Result<Partition, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::BadRatio(ratio));
    }
    if n < 2 {
        return Err(IngestError::TooFewRows(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed).shuffle(&mut order);
    let test = order.split_off(train_size(n, ratio));
    Ok(Partition { train: order, test })
}

/// Splits rows into `(train, test)` according to [`split_indices`].
pub fn split<T: Clone>(rows: &[T], ratio: f64, seed: u64) -> Result<(Vec<T>, Vec<T>), IngestError> {
    let p = split_indices(rows.len(), ratio, seed)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| rows[i].clone()).collect();
    Ok((pick(&p.train), pick(&p.test)))
}

/// Encoded features and targets of one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrices {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

impl Matrices {
    pub fn from_rows(rows: &[Vec<f64>], n_features: usize) -> Self {
        let n = rows.len();
        let width = rows.first().map_or(n_features, Vec::len);
        let n_targets = width - n_features;
        let mut x = Array2::zeros((n, n_features));
        let mut y = Array2::zeros((n, n_targets));
        for (i, row) in rows.iter().enumerate() {
            for j in 0..n_features {
                x[[i, j]] = row[j];
            }
            for j in 0..n_targets {
                y[[i, j]] = row[n_features + j];
            }
        }
        Self { x, y }
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Matrices,
    pub test: Matrices,
    pub split_ratio: f64,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub target_names: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn ten_rows_eight_two() {
        let rows: Vec<usize> = (0..10).collect();
        let (train, test) = split(&rows, 0.8, 42).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let a: HashSet<_> = train.iter().collect();
        assert!(test.iter().all(|t| !a.contains(t)));
        assert_eq!(split(&rows, 0.8, 42).unwrap(), (train, test));
    }

    #[test]
    fn bad_inputs() {
        assert_eq!(split_indices(10, 1.5, 1), Err(IngestError::BadRatio(1.5)));
        assert_eq!(split_indices(10, 0.0, 1), Err(IngestError::BadRatio(0.0)));
        assert!(matches!(split_indices(10, f64::NAN, 1), Err(IngestError::BadRatio(_))));
        assert_eq!(split_indices(1, 0.5, 1), Err(IngestError::TooFewRows(1)));
    }

    #[test]
    fn extreme_ratios_keep_both_sides() {
        let p = split_indices(2, 0.1, 3).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (1, 1));
        let p = split_indices(5, 0.99, 3).unwrap();
        assert_eq!((p.train.len(), p.test.len()), (4, 1));
    }

    #[test]
    fn seeds_give_distinct_partitions() {
        let distinct: HashSet<Vec<usize>> = (0..100u64)
            .map(|seed| {
                let mut t = split_indices(50, 0.8, seed).unwrap().train;
                t.sort_unstable();
                t
            })
            .collect();
        assert!(distinct.len() >= 99, "{}", distinct.len());
    }

    proptest::proptest! {
        #[test]
        fn partition_covers_and_is_disjoint(n in 2usize..300, ratio in 0.01f64..0.99, seed in proptest::prelude::any::<u64>()) {
            let p = split_indices(n, ratio, seed).unwrap();
            let mut all: Vec<usize> = p.train.iter().chain(&p.test).copied().collect();
            all.sort_unstable();
            proptest::prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            proptest::prop_assert_eq!(p.train.len(), train_size(n, ratio));
        }
    }
}
