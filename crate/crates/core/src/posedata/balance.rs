use rand::seq::SliceRandom;

use super::dataset::Sample;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Indices into `labels` after replicating minority classes up to the
/// largest class count.
///
/// The result starts with every original index in order; the additions for
/// each class follow, cycling through that class's originals in a seeded
/// shuffled order.
pub fn oversample_indices(labels: &[usize], num_classes: usize, seed: u64) -> Result<Vec<usize>> {
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= num_classes {
            return Err(Error::Config(format!("label {l} with {num_classes} classes")));
        }
        by_class[l].push(i);
    }
    if let Some(empty) = by_class.iter().position(|c| c.is_empty()) {
        return Err(Error::Config(format!("class {empty} has no samples to oversample")));
    }
    let target = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut out: Vec<usize> = (0..labels.len()).collect();
    for (c, members) in by_class.iter_mut().enumerate() {
        let missing = target - members.len();
        if missing == 0 {
            continue;
        }
        members.shuffle(&mut seeded(derive_seed(seed, c as u64)));
        out.extend(members.iter().cycle().take(missing));
    }
    Ok(out)
}

pub fn oversample_balance(samples: &[Sample], num_classes: usize, seed: u64) -> Result<Vec<Sample>> {
    let labels: Vec<usize> = samples.iter().map(|s| s.class_index).collect();
    Ok(oversample_indices(&labels, num_classes, seed)?
        .into_iter()
        .map(|i| samples[i].clone())
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(idx: &[usize], labels: &[usize], c: usize) -> Vec<usize> {
        let mut k = vec![0; c];
        idx.iter().for_each(|&i| k[labels[i]] += 1);
        k
    }

    #[test]
    fn examples() {
        let labels = [0, 0, 0, 1];
        let idx = oversample_indices(&labels, 2, 1).unwrap();
        assert_eq!(counts(&idx, &labels, 2), vec![3, 3]);

        let labels = [0, 1, 0, 1];
        assert_eq!(oversample_indices(&labels, 2, 1).unwrap(), vec![0, 1, 2, 3]);

        let labels = [0, 0, 0, 0, 0, 1, 1, 2];
        let idx = oversample_indices(&labels, 3, 9).unwrap();
        assert_eq!(idx.len(), 15);
        assert_eq!(counts(&idx, &labels, 3), vec![5, 5, 5]);
    }

    #[test]
    fn empty_class_is_error() {
        assert!(matches!(oversample_indices(&[0, 0], 2, 0), Err(Error::Config(_))));
    }
}
