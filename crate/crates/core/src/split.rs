//! Seeded stratified splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Splits positions `0..labels.len()` into `(train, validation)` so that each
/// category keeps `round(fraction * n_k)` members in training. Both halves
/// come back sorted ascending.
pub fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    if let Some(c) = members.iter().position(|m| m.len() == 1) {
        return Err(Error::data(format!("category {c} has fewer than 2 labeled members")));
    }
    let quotas = train_quotas(&members, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut validation = Vec::new();
    for (mut idx, n_train) in members.into_iter().zip(quotas) {
        idx.shuffle(&mut rng);
        validation.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train.extend(idx);
    }
    train.sort_unstable();
    validation.sort_unstable();
    Ok((train, validation))
}

/// Per-category training counts: largest-remainder apportionment of
/// `round(fraction * n)`, keeping at least one member on each side.
fn train_quotas(members: &[Vec<usize>], fraction: f64) -> Vec<usize> {
    let n: usize = members.iter().map(Vec::len).sum();
    let total = (fraction * n as f64).round() as usize;
    let exact: Vec<f64> = members.iter().map(|m| fraction * m.len() as f64).collect();
    let mut quotas: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let mut left = total.saturating_sub(quotas.iter().sum());
    for &c in &order {
        if left == 0 {
            break;
        }
        if quotas[c] < members[c].len() {
            quotas[c] += 1;
            left -= 1;
        }
    }
    for (q, m) in quotas.iter_mut().zip(members) {
        if !m.is_empty() {
            *q = (*q).clamp(1, m.len() - 1);
        }
    }
    quotas
}

/// Deterministic stratified subsample of at most `max` positions.
pub fn stratified_subsample(labels: &[usize], max: usize, seed: u64) -> Vec<usize> {
    if labels.len() <= max {
        return (0..labels.len()).collect();
    }
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &c) in labels.iter().enumerate() {
        members[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = max as f64 / labels.len() as f64;
    let mut keep = Vec::with_capacity(max);
    for mut idx in members {
        idx.shuffle(&mut rng);
        let n = ((idx.len() as f64 * ratio).floor() as usize).min(idx.len());
        keep.extend_from_slice(&idx[..n]);
    }
    keep.sort_unstable();
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn seventy_thirty() {
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i % 4 == 0)).collect();
        let (train, val) = stratified_split(&labels, 0.7, 1).unwrap();
        assert_eq!((train.len(), val.len()), (70, 30));
        let ones = train.iter().filter(|&&i| labels[i] == 1).count();
        assert!((ones as i64 - 18).abs() <= 1);
        assert_eq!(stratified_split(&labels, 0.7, 1).unwrap(), (train, val));
    }

    #[test]
    fn tiny_class_is_an_error() {
        assert!(stratified_split(&[0, 0, 0, 1], 0.7, 1).is_err());
        assert!(stratified_split(&[0, 0], 1.0, 1).is_err());
    }

    #[test]
    fn subsample_caps_size() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 3).collect();
        let s = stratified_subsample(&labels, 300, 2);
        assert!(s.len() <= 300 && s.len() >= 297);
    }

    proptest! {
        #[test]
        fn split_is_a_partition(labels in prop::collection::vec(0usize..3, 2..200), seed in 0u64..1000) {
            let mut counts = [0usize; 3];
            for &l in &labels { counts[l] += 1; }
            prop_assume!(counts.iter().all(|&c| c == 0 || c >= 2));
            let (train, val) = stratified_split(&labels, 0.7, seed).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
        }
    }
}
