use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WetError};

fn classes(labels: &[bool]) -> Result<[Vec<usize>; 2]> {
    let mut by_class = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l as usize].push(i);
    }
    for (c, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            let name = if c == 1 { "positive" } else { "negative" };
            return Err(WetError::invalid(format!(
                "class {name} has {} record(s); stratified splitting needs at least 2",
                members.len()
            )));
        }
    }
    Ok(by_class)
}

/// Stratified shuffled split into `(first, second)` index sets, each
/// sorted ascending. The first part receives `round(ratio * n)` items,
/// divided between classes by largest remainder; every class keeps at
/// least one item on each side.
pub fn stratified_split(
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(WetError::invalid(format!(
            "split ratio must be in (0, 1), got {ratio}"
        )));
    }
    let by_class = classes(labels)?;
    let target = (ratio * labels.len() as f64).round() as usize;
    let quotas: Vec<f64> = by_class.iter().map(|m| ratio * m.len() as f64).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..2).collect();
    order.sort_by(|&a, &b| {
        (quotas[b] - quotas[b].floor())
            .total_cmp(&(quotas[a] - quotas[a].floor()))
            .then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(take.iter().sum());
    for &c in order.iter().cycle().take(2 * 2) {
        if remaining == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            remaining -= 1;
        }
    }
    for (t, m) in take.iter_mut().zip(&by_class) {
        *t = (*t).clamp(1, m.len() - 1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for (members, &t) in by_class.iter().zip(&take) {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        first.extend_from_slice(&shuffled[..t]);
        second.extend_from_slice(&shuffled[t..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Stratified `k`-fold assignment: returns the held-out indices of each
/// fold, sorted ascending.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(WetError::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    let by_class = classes(labels)?;
    if by_class.iter().any(|m| m.len() < k) {
        return Err(WetError::invalid(format!(
            "each class needs at least {k} records for {k}-fold splitting"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for members in &by_class {
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        for i in shuffled {
            folds[next % k].push(i);
            next += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Splits items with labels into `(train, test)` copies.
pub fn split_train_test<T: Clone>(
    items: &[T],
    labels: &[bool],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if items.len() != labels.len() {
        return Err(WetError::dim(
            "split_train_test",
            format!("{} items, {} labels", items.len(), labels.len()),
        ));
    }
    let (a, b) = stratified_split(labels, ratio, seed)?;
    Ok((
        a.iter().map(|&i| items[i].clone()).collect(),
        b.iter().map(|&i| items[i].clone()).collect(),
    ))
}
