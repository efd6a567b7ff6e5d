//! Log → dyads → matched pairs → estimates, without any IO.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::context::ContextStats;
use crate::dyads::{addition_frequencies, build_dyads, AdditionFrequency, Dyad, DyadParams, DyadSet, Queues};
use crate::estimate::{estimate_effect, naive_risk_difference, outcomes, BootstrapParams, EffectEstimate};
use crate::matching::{balance_report, build_matched_pairs, AdjustmentSpec, BalanceReport, Covariate, MatchedPairSet};
use crate::model::{AdditionKind, Daypart, FocusItem, TransactionLog};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisParams {
    pub dyads: DyadParams,
    pub adjustment: AdjustmentSpec,
    pub bootstrap: BootstrapParams,
    /// Minimum share of dyads whose partner bought an addition for it to be studied in a daypart.
    pub addition_threshold: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            dyads: DyadParams::default(),
            adjustment: AdjustmentSpec::default(),
            bootstrap: BootstrapParams::default(),
            addition_threshold: 0.01,
        }
    }
}

pub struct Prepared {
    pub context: ContextStats,
    pub dyads: DyadSet,
    pub frequencies: Vec<AdditionFrequency>,
    pub selected: BTreeMap<Daypart, Vec<AdditionKind>>,
}

pub fn prepare(log: &TransactionLog, params: &AnalysisParams) -> Prepared {
    let queues = Queues::reconstruct(log);
    let dyads = build_dyads(log, &queues, &params.dyads);
    Prepared::from_dyads(log, dyads, params.addition_threshold)
}

impl Prepared {
    /// Context and addition selection around an existing dyad set.
    pub fn from_dyads(log: &TransactionLog, dyads: DyadSet, addition_threshold: f64) -> Self {
        let context = ContextStats::compute(log);
        let frequencies = addition_frequencies(log, &dyads, addition_threshold);
        let mut selected: BTreeMap<Daypart, Vec<AdditionKind>> = BTreeMap::new();
        for f in frequencies.iter().filter(|f| f.selected) {
            selected.entry(f.daypart).or_default().push(f.addition);
        }
        Prepared { context, dyads, frequencies, selected }
    }

    /// Additions selected in at least one daypart, in catalog order.
    pub fn selected_items(&self) -> Vec<FocusItem> {
        AdditionKind::ALL
            .into_iter()
            .filter(|a| self.selected.values().any(|v| v.contains(a)))
            .map(FocusItem::Addition)
            .collect()
    }

    /// Dyads in which `item` is studied: additions only in the dayparts
    /// where they were selected.
    pub fn dyads_for(&self, dyads: &[Dyad], item: FocusItem) -> DyadSet {
        match item {
            FocusItem::Addition(a) => dyads
                .iter()
                .filter(|d| self.selected.get(&d.daypart).is_some_and(|v| v.contains(&a)))
                .copied()
                .collect(),
            _ => dyads.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Ok,
    NoPairs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemAnalysis {
    pub item: FocusItem,
    pub status: ItemStatus,
    pub matched: MatchedPairSet,
    pub estimate: Option<EffectEstimate>,
    pub balance: Option<BalanceReport>,
    /// Unmatched contrast over the same eligible dyads.
    pub naive_rd: Option<f64>,
}

/// Matching, estimation and balance for one item over `dyads`.
pub fn analyze_item(
    log: &TransactionLog,
    dyads: &[Dyad],
    context: &ContextStats,
    item: FocusItem,
    params: &AnalysisParams,
    bootstrap: &BootstrapParams,
) -> ItemAnalysis {
    let matched = build_matched_pairs(log, dyads, item, context, &params.adjustment);
    let naive_rd = naive_risk_difference(log, dyads, item);
    if matched.is_empty() {
        return ItemAnalysis { item, status: ItemStatus::NoPairs, matched, estimate: None, balance: None, naive_rd };
    }
    let estimate = estimate_effect(&outcomes(log, &matched.pairs), bootstrap).ok();
    let balance = balance_report(log, dyads, &matched, context, &Covariate::DEFAULT).ok();
    ItemAnalysis { item, status: ItemStatus::Ok, matched, estimate, balance, naive_rd }
}

/// Bootstrap parameters for `item`, split from the run seed.
pub fn item_bootstrap(params: &AnalysisParams, item: FocusItem, label: &str) -> BootstrapParams {
    params.bootstrap.derive(&alloc::format!("{label}/{}", item.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, PerItem, SimulationConfig};

    #[test]
    fn small_simulation_end_to_end() {
        let mut delta = PerItem::splat(0.0);
        delta.dessert = 0.3;
        let cfg = SimulationConfig { n_persons: 200, n_days: 60, delta, pair_visit_rate: 0.6, seed: 2, ..Default::default() };
        let out = simulate(&cfg).unwrap();
        let log = out.log();
        let params = AnalysisParams {
            bootstrap: BootstrapParams { replicates: 200, ..Default::default() },
            ..Default::default()
        };
        let prep = prepare(&log, &params);
        assert!(!prep.dyads.is_empty());
        let dessert = FocusItem::Addition(AdditionKind::Dessert);
        assert!(prep.selected_items().contains(&dessert));
        let dy = prep.dyads_for(&prep.dyads, dessert);
        let a = analyze_item(&log, &dy, &prep.context, dessert, &params, &item_bootstrap(&params, dessert, "item"));
        assert_eq!(a.status, ItemStatus::Ok);
        let e = a.estimate.unwrap();
        assert!(e.rd > 0.1, "{}", e.rd);
    }
}
