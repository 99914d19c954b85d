//! Seeded stratified k-fold splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
}

fn members_by_class(labels: &[usize]) -> Vec<Vec<usize>> {
    let num_classes = labels.iter().max().map_or(0, |&c| c + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    by_class
}

/// Splits `0..labels.len()` into `k` folds whose test sets partition the
/// indices. Each class is shuffled and dealt round-robin, continuing the
/// deal position across classes, so every test fold holds
/// `floor(n_c / k)` or `ceil(n_c / k)` members of class `c`.
pub fn stratified_k_fold(labels: &[usize], k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let by_class = members_by_class(labels);
    for (class, members) in by_class.iter().enumerate() {
        if !members.is_empty() && members.len() < k {
            return Err(Error::Stratification {
                class,
                count: members.len(),
                folds: k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_sets = vec![Vec::new(); k];
    let mut position = 0usize;
    for mut members in by_class {
        members.shuffle(&mut rng);
        for id in members {
            test_sets[position % k].push(id);
            position += 1;
        }
    }
    Ok(test_sets
        .into_iter()
        .enumerate()
        .map(|(fold_index, mut test_ids)| {
            test_ids.sort_unstable();
            let mut in_test = vec![false; labels.len()];
            for &i in &test_ids {
                in_test[i] = true;
            }
            let train_ids = (0..labels.len()).filter(|&i| !in_test[i]).collect();
            FoldSplit {
                fold_index,
                train_ids,
                test_ids,
            }
        })
        .collect())
}

/// Carves a stratified holdout of roughly `fraction` of `ids` (at least one
/// member of each class that has two or more). Returns `(kept, holdout)`.
pub fn stratified_holdout(
    ids: &[usize],
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    if fraction <= 0.0 {
        return (ids.to_vec(), Vec::new());
    }
    let num_classes = ids.iter().map(|&i| labels[i]).max().map_or(0, |c| c + 1);
    let mut by_class = vec![Vec::new(); num_classes];
    for &i in ids {
        by_class[labels[i]].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept = Vec::new();
    let mut holdout = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        let take = if members.len() < 2 {
            0
        } else {
            ((members.len() as f64 * fraction).round() as usize).clamp(1, members.len() - 1)
        };
        holdout.extend_from_slice(&members[..take]);
        kept.extend_from_slice(&members[take..]);
    }
    kept.sort_unstable();
    holdout.sort_unstable();
    (kept, holdout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_divisibility_gives_one_of_each() {
        let labels = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1];
        let folds = stratified_k_fold(&labels, 5, 7).unwrap();
        for f in &folds {
            let classes: Vec<usize> = f.test_ids.iter().map(|&i| labels[i]).collect();
            assert_eq!(classes.len(), 2);
            assert!(classes.contains(&0) && classes.contains(&1));
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let labels: Vec<usize> = (0..37).map(|i| i % 3).collect();
        assert_eq!(
            stratified_k_fold(&labels, 4, 11).unwrap(),
            stratified_k_fold(&labels, 4, 11).unwrap()
        );
    }

    #[test]
    fn small_class_is_an_error() {
        let mut labels = vec![0; 9];
        labels.push(1);
        match stratified_k_fold(&labels, 5, 0).unwrap_err() {
            Error::Stratification { class, count, .. } => {
                assert_eq!(class, 1);
                assert_eq!(count, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn holdout_is_disjoint_and_covers() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let ids: Vec<usize> = (0..40).collect();
        let (kept, hold) = stratified_holdout(&ids, &labels, 0.1, 3);
        assert_eq!(kept.len() + hold.len(), 40);
        assert!(hold.iter().all(|h| !kept.contains(h)));
        assert!(hold.iter().any(|&h| labels[h] == 1));
    }
}
