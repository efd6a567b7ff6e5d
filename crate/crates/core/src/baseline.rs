//! Randomized-partner baseline and the order-asymmetry (coordination) test.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::CellKey;
use crate::dyads::{Dyad, DyadSet};
use crate::matching::MatchedPair;
use crate::model::{PersonId, TransactionLog, TxIndex};
use crate::seed;
use crate::stats::{self, TTest};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomizationSpec {
    pub seed: u64,
    pub drop_if_no_candidate: bool,
    /// Draw replacements only among transactions carrying the daypart anchor,
    /// so randomized dyads stay eligible for matching.
    pub anchored_only: bool,
}

impl Default for RandomizationSpec {
    fn default() -> Self {
        Self { seed: 0, drop_if_no_candidate: true, anchored_only: true }
    }
}

fn cell_index(log: &TransactionLog, anchored_only: bool) -> BTreeMap<CellKey, Vec<TxIndex>> {
    let mut cells: BTreeMap<CellKey, Vec<TxIndex>> = BTreeMap::new();
    for (i, t) in log.transactions().iter().enumerate() {
        let daypart = t.daypart();
        if !daypart.is_studied() || (anchored_only && t.anchor().is_none()) {
            continue;
        }
        cells.entry(CellKey { shop: t.shop, date: t.date(), daypart }).or_default().push(i);
    }
    cells
}

/// Replaces each dyad's partner with a uniformly drawn transaction from the
/// same shop, date and daypart (any register), never the focal's own and
/// never the original partner transaction. Dyad `i` draws from stream `i`.
pub fn randomize_partners(log: &TransactionLog, dyads: &[Dyad], spec: &RandomizationSpec) -> DyadSet {
    let cells = cell_index(log, spec.anchored_only);
    let base = seed::derive(spec.seed, "baseline");
    let mut out = Vec::with_capacity(dyads.len());
    let mut candidates: Vec<TxIndex> = Vec::new();
    for (i, d) in dyads.iter().enumerate() {
        candidates.clear();
        if let Some(cell) = cells.get(&d.cell()) {
            candidates.extend(
                cell.iter().copied().filter(|&t| t != d.partner_tx && log.tx(t).person != d.focal),
            );
        }
        if candidates.is_empty() {
            if !spec.drop_if_no_candidate {
                out.push(*d);
            }
            continue;
        }
        let mut rng = seed::stream(base, i as u64);
        let pick = candidates[rng.random_range(0..candidates.len())];
        let p = log.tx(pick);
        let f = log.tx(d.focal_tx);
        out.push(Dyad {
            partner_tx: pick,
            partner: p.person,
            delay_s: (f.timestamp - p.timestamp).num_seconds(),
            ..*d
        });
    }
    out
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoordinationError {
    #[error("need at least 2 pairs with {min_per_order} matched pairs in both orders, found {found}")]
    InsufficientPairs { min_per_order: usize, found: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoordinationParams {
    pub min_per_order: usize,
    pub sample_per_pair: usize,
    pub seed: u64,
}

impl Default for CoordinationParams {
    fn default() -> Self {
        Self { min_per_order: 10, sample_per_pair: 10, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinationResult {
    pub test: TTest,
    pub n_pairs_used: usize,
    /// Mean treated-focal purchase rate in the dominant and the reverse order.
    pub mean_dominant: f64,
    pub mean_reverse: f64,
}

/// Compares the focal purchase rate across the two queue orders of each
/// frequent pair.
///
/// For every unordered pair with at least `min_per_order` matched pairs in
/// both orders, the order with more matched pairs (ties: lower partner id
/// first) forms the dominant role. `sample_per_pair` matched pairs are drawn
/// without replacement from each order; the treated focal's purchase
/// indicators are pooled by role and compared with Welch's t-test.
pub fn coordination_test(
    log: &TransactionLog,
    pairs: &[MatchedPair],
    params: &CoordinationParams,
) -> Result<CoordinationResult, CoordinationError> {
    let mut by_order: BTreeMap<(PersonId, PersonId), Vec<f64>> = BTreeMap::new();
    for p in pairs {
        let v = if p.treated.focal_has(log, p.item) { 1.0 } else { 0.0 };
        by_order.entry((p.treated.partner, p.treated.focal)).or_default().push(v);
    }
    let base = seed::derive(params.seed, "coordination");
    let take = params.sample_per_pair.max(1);
    let need = params.min_per_order.max(take);
    let (mut dominant, mut reverse) = (Vec::new(), Vec::new());
    let mut used = 0usize;
    for (&(a, b), ab) in &by_order {
        if a >= b {
            continue;
        }
        let Some(ba) = by_order.get(&(b, a)) else { continue };
        if ab.len() < need || ba.len() < need {
            continue;
        }
        let (first, second) = if ba.len() > ab.len() { (ba, ab) } else { (ab, ba) };
        let mut rng = seed::stream(base, used as u64);
        dominant.extend(sample_without_replacement(&mut rng, first, take));
        reverse.extend(sample_without_replacement(&mut rng, second, take));
        used += 1;
    }
    if used < 2 {
        return Err(CoordinationError::InsufficientPairs { min_per_order: need, found: used });
    }
    let test = stats::welch_t_test(&dominant, &reverse).expect("both samples have at least two values");
    Ok(CoordinationResult {
        test,
        n_pairs_used: used,
        mean_dominant: stats::mean(&dominant),
        mean_reverse: stats::mean(&reverse),
    })
}

fn sample_without_replacement(rng: &mut seed::Rng, values: &[f64], k: usize) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let k = k.min(idx.len());
    for i in 0..k {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| values[i]).collect()
}
