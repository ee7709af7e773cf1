use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// `k` disjoint test folds over dataset indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldSplit {
    pub fn len(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn test(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Every index outside `fold`, ascending.
    pub fn train(&self, fold: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != fold)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// Hex SHA-256 of the fold contents.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(&self.folds).expect("folds serialise")))
    }

    /// Checks that the folds partition `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.folds.iter().flatten() {
            if i >= n || seen[i] {
                return Err(Error::Contract(format!("fold split is not a partition of 0..{n}")));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) || self.folds.len() != self.k {
            return Err(Error::Contract(format!("fold split is not a partition of 0..{n}")));
        }
        Ok(())
    }
}

/// Per class, shuffles the members and deals them round-robin over the folds,
/// continuing the deal position from one class to the next.
pub fn stratified_kfold(labels: &[usize], k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut offset = 0;
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        if members.len() < k {
            return Err(Error::Config(format!("class {c} has {} samples, fewer than {k} folds", members.len())));
        }
        members.shuffle(&mut rng);
        for (j, i) in members.iter().enumerate() {
            folds[(offset + j) % k].push(*i);
        }
        offset = (offset + members.len()) % k;
    }
    if labels.is_empty() {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(FoldSplit { k, seed, folds })
}

/// `w_c = n / (2 n_c)`.
pub fn class_weights(labels: &[usize]) -> Result<[f64; 2]> {
    let mut counts = [0usize; 2];
    for &l in labels {
        *counts
            .get_mut(l)
            .ok_or_else(|| Error::Input(format!("label {l} is not binary")))? += 1;
    }
    if counts.contains(&0) {
        return Err(Error::Config("class weights need both classes present".into()));
    }
    let n = labels.len() as f64;
    Ok(counts.map(|c| n / (2.0 * c as f64)))
}
