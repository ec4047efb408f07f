//! Deterministic batch planning. The triplet objective degenerates when a
//! batch lacks same-label pairs (empty positive sets) or distinct labels
//! (empty negative sets), so the default strategy deals same-label pairs
//! into every batch before topping up with whatever remains.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::rng::SeedRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BalanceStrategy {
    /// Guarantee (when feasible) ≥2 items sharing a label and ≥2 distinct
    /// labels in every batch.
    LabelBalanced,
    /// Plain seeded shuffle chunked into batches.
    Shuffle,
}

/// One epoch's batches, as record indices. `N mod B` records are left out
/// of the epoch; which ones is a deterministic function of the seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<usize>>,
    /// Set when balancing was requested but the corpus has a single label,
    /// forcing a plain shuffle (mining will skip every anchor).
    pub balance_warning: bool,
}

/// Plan one epoch over `labels[i]` = dense label id of record `i`.
pub fn plan_batches(
    labels: &[usize],
    batch_size: usize,
    seed: u64,
    strategy: BalanceStrategy,
) -> Result<BatchPlan> {
    let n = labels.len();
    if batch_size < 2 {
        return Err(CoreError::OutOfRange {
            what: "batch size",
            value: batch_size as f64,
        });
    }
    if batch_size > n {
        return Err(CoreError::BatchTooLarge { batch: batch_size, records: n });
    }
    let mut rng = SeedRng::from_seed(seed);
    let distinct = {
        let mut seen: Vec<usize> = labels.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    };
    if strategy == BalanceStrategy::Shuffle || distinct < 2 {
        let batches = shuffled_chunks(n, batch_size, &mut rng);
        return Ok(BatchPlan {
            batches,
            balance_warning: strategy == BalanceStrategy::LabelBalanced && distinct < 2,
        });
    }

    // Group record indices by label, shuffle within groups, then carve
    // each group into same-label pairs plus leftover singles.
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    let mut pairs: Vec<[usize; 2]> = Vec::new();
    let mut singles: Vec<usize> = Vec::new();
    for (_, mut members) in groups {
        rng.shuffle(&mut members);
        let mut it = members.chunks_exact(2);
        for c in &mut it {
            pairs.push([c[0], c[1]]);
        }
        singles.extend(it.remainder());
    }
    rng.shuffle(&mut pairs);
    rng.shuffle(&mut singles);

    let n_batches = n / batch_size;
    let mut batches: Vec<Vec<usize>> = vec![Vec::with_capacity(batch_size); n_batches];
    let mut pairs = pairs.into_iter();
    let mut singles = singles.into_iter();
    // One pair per batch up front, then greedy fill.
    for batch in &mut batches {
        if let Some([a, b]) = pairs.next() {
            batch.push(a);
            batch.push(b);
        }
    }
    let mut spare: Vec<usize> = Vec::new();
    for batch in &mut batches {
        while batch.len() < batch_size {
            if batch.len() + 2 <= batch_size {
                if let Some([a, b]) = pairs.next() {
                    batch.push(a);
                    batch.push(b);
                    continue;
                }
            }
            if let Some(s) = singles.next() {
                batch.push(s);
            } else if let Some(s) = spare.pop() {
                batch.push(s);
            } else if let Some([a, b]) = pairs.next() {
                // Only one slot left but only pairs remain: split one.
                batch.push(a);
                spare.push(b);
            } else {
                break;
            }
        }
    }

    // Repair pass: a batch whose items all share one label has an empty
    // negative set for every anchor; trade a pair with another batch.
    for v in 0..batches.len() {
        if !single_label(&batches[v], labels) {
            continue;
        }
        let lv = labels[batches[v][0]];
        'donor: for w in 0..batches.len() {
            if w == v {
                continue;
            }
            // Find a same-label pair in w with a different label, whose
            // removal leaves w still multi-label (or w is single-label
            // too, in which case the trade fixes both).
            let idxs = donor_pair(&batches[w], labels, lv);
            if let Some((x, y)) = idxs {
                let keeps_w_mixed = {
                    let lw = labels[batches[w][x]];
                    single_label(&batches[w], labels)
                        || batches[w]
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| *k != x && *k != y)
                            .any(|(_, &r)| labels[r] != lw)
                };
                if keeps_w_mixed {
                    let (a, b) = (batches[v][0], batches[v][1]);
                    let (c, d) = (batches[w][x], batches[w][y]);
                    batches[v][0] = c;
                    batches[v][1] = d;
                    batches[w][x] = a;
                    batches[w][y] = b;
                    break 'donor;
                }
            }
        }
    }

    Ok(BatchPlan { batches, balance_warning: false })
}

fn shuffled_chunks(n: usize, batch_size: usize, rng: &mut SeedRng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    order.chunks_exact(batch_size).map(|c| c.to_vec()).collect()
}

fn single_label(batch: &[usize], labels: &[usize]) -> bool {
    batch.windows(2).all(|w| labels[w[0]] == labels[w[1]])
}

/// Positions (within `batch`) of two items sharing a label != `exclude`.
fn donor_pair(batch: &[usize], labels: &[usize], exclude: usize) -> Option<(usize, usize)> {
    for i in 0..batch.len() {
        let li = labels[batch[i]];
        if li == exclude {
            continue;
        }
        for j in i + 1..batch.len() {
            if labels[batch[j]] == li {
                return Some((i, j));
            }
        }
    }
    None
}
