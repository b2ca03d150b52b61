use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: BTreeMap<String, usize>,
}

impl FoldAssignment {
    /// Ids held out in `fold`, sorted.
    pub fn validation(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Ids used for training when `fold` is held out, sorted.
    pub fn training(&self, fold: usize) -> Vec<&str> {
        self.fold_of
            .iter()
            .filter(|(_, &f)| f != fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        (0..self.k).map(|f| self.validation(f).len()).collect()
    }
}

/// Seeded shuffle followed by round-robin assignment to `k` folds.
pub fn make_folds(ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {k}")));
    }
    if ids.len() < k {
        return Err(Error::Dataset(format!("{} samples cannot fill {k} folds", ids.len())));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Dataset("sample ids must be unique".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let fold_of = sorted.into_iter().enumerate().map(|(i, id)| (id, i % k)).collect();
    Ok(FoldAssignment { k, fold_of })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    #[test]
    fn partition() {
        let f = make_folds(&ids(10), 5, 3).unwrap();
        assert_eq!(f.sizes(), vec![2; 5]);
        let mut all: Vec<&str> = (0..5).flat_map(|i| f.validation(i)).collect();
        all.sort();
        let mut expected = ids(10);
        expected.sort();
        assert_eq!(all, expected.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(f, make_folds(&ids(10), 5, 3).unwrap());
        let uneven = make_folds(&ids(13), 5, 1).unwrap().sizes();
        assert!(uneven.iter().max().unwrap() - uneven.iter().min().unwrap() <= 1);
    }

    #[test]
    fn errors() {
        assert!(make_folds(&ids(4), 5, 0).is_err());
        assert!(make_folds(&["a".into(), "a".into(), "b".into()], 2, 0).is_err());
    }
}
