use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Dataset;
use crate::{FanError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    /// Original indices of each split, in split order.
    pub indices: [Vec<usize>; 3],
}

/// Stratified train/validation/test split.
///
/// Split sizes are the largest-remainder apportionment of `fractions` over
/// the whole dataset, and every `(group, label)` stratum contributes
/// `floor(f * m)` or `floor(f * m) + 1` samples to each split.
pub fn split(dataset: &Dataset, fractions: [f64; 3], seed: u64) -> Result<Splits> {
    if fractions.iter().any(|f| !(f.is_finite() && *f > 0.0)) {
        return Err(FanError::domain("split fractions must be positive"));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(FanError::domain("split fractions must sum to 1"));
    }

    let n_strata = dataset.n_groups() * 2;
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); n_strata];
    for (i, s) in dataset.samples().iter().enumerate() {
        strata[s.group * 2 + s.label as usize].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for members in &mut strata {
        members.shuffle(&mut rng);
    }

    let targets = apportion(dataset.len(), &fractions);
    let mut alloc: Vec<[usize; 3]> = strata
        .iter()
        .map(|m| {
            let n = m.len() as f64;
            [0, 1, 2].map(|k| (fractions[k] * n).floor() as usize)
        })
        .collect();
    let mut deficit: [isize; 3] =
        [0, 1, 2].map(|k| targets[k] as isize - alloc.iter().map(|a| a[k]).sum::<usize>() as isize);

    // Hand each stratum's leftover samples to the splits with the largest
    // fractional remainders, at most one extra per (stratum, split).
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (s, members) in strata.iter().enumerate() {
        for k in 0..3 {
            let exact = fractions[k] * members.len() as f64;
            candidates.push((exact - exact.floor(), s, k));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut bumped = vec![[false; 3]; n_strata];
    for pass in 0..4 {
        for &(_, s, k) in &candidates {
            let leftover = strata[s].len() - alloc[s].iter().sum::<usize>();
            if leftover == 0 || deficit[k] <= 0 || (pass == 0 && bumped[s][k]) {
                continue;
            }
            alloc[s][k] += 1;
            bumped[s][k] = true;
            deficit[k] -= 1;
        }
    }

    let mut indices: [Vec<usize>; 3] = Default::default();
    for (s, members) in strata.iter().enumerate() {
        let mut offset = 0;
        for k in 0..3 {
            let take = alloc[s][k];
            if take == 0 && !members.is_empty() {
                log::warn!(
                    "split {k} receives no samples from stratum (group {}, label {})",
                    s / 2,
                    s % 2
                );
            }
            indices[k].extend_from_slice(&members[offset..offset + take]);
            offset += take;
        }
    }
    for idx in &mut indices {
        idx.sort_unstable();
    }
    Ok(Splits {
        train: dataset.subset(&indices[0])?,
        val: dataset.subset(&indices[1])?,
        test: dataset.subset(&indices[2])?,
        indices,
    })
}

fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact = fractions.map(|f| f * n as f64);
    let mut out = exact.map(|e| e.floor() as usize);
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    let mut rest = n - out.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        out[k] += 1;
        rest -= 1;
    }
    out
}
