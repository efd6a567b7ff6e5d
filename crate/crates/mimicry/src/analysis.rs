//! Pipeline stages over an in-memory log, shared by `run` and the
//! per-stage subcommands. Every random draw is keyed off the run seed, so a
//! stage fed from a dump reproduces what `run` computed.

use std::collections::BTreeMap;

use mimicry_core::baseline::{
    coordination_test, randomize_partners, CoordinationError, CoordinationParams, CoordinationResult,
    RandomizationSpec,
};
use mimicry_core::dyads::{build_dyads, AgeBins, Dyad, Queues, TieStrengths};
use mimicry_core::estimate::{
    anchor_mimicry, dose_response, estimate_effect, naive_risk_difference, outcomes, subgroup_estimates,
    AnchorAttribute, BootstrapParams, DoseResponseResult, PairedCounts, EffectEstimate, EstimateError, Grouping, GroupingContext,
    SubgroupEstimate,
};
use mimicry_core::infer::{self, FeatureVector, ForestParams, InferError, StatusModel};
use mimicry_core::matching::{balance_report, build_matched_pairs, BalanceReport, Covariate, MatchedPair, MatchedPairSet};
use mimicry_core::model::{Demographics, PersonId, PersonTable, Status, TransactionLog};
use mimicry_core::sensitivity::{gamma_grid, sensitivity_analysis, SensitivityError, SensitivityResult};
use mimicry_core::FocusItem;
use rayon::prelude::*;

use crate::config::{AnalysesConfig, DyadConfig, EstimationConfig, RunConfig};

/// Everything a stage needs from the config, with the seed resolved.
#[derive(Clone, Debug)]
pub struct Settings {
    pub seed: u64,
    pub dyads: DyadConfig,
    pub adjustment: mimicry_core::matching::AdjustmentSpec,
    pub estimation: EstimationConfig,
    pub analyses: AnalysesConfig,
}

impl Settings {
    pub fn new(cfg: &RunConfig) -> anyhow::Result<Self> {
        cfg.validate()?;
        Ok(Self {
            seed: cfg.seed()?,
            dyads: cfg.dyads,
            adjustment: cfg.adjustment,
            estimation: cfg.estimation,
            analyses: cfg.analyses.clone(),
        })
    }

    pub fn bootstrap(&self, label: &str) -> BootstrapParams {
        BootstrapParams { replicates: self.estimation.replicates, seed: self.seed, level: self.estimation.level }
            .derive(label)
    }
}

pub use mimicry_core::pipeline::Prepared as DyadStage;

/// Queues, dyads, context and the addition selection.
pub fn dyad_stage(log: &TransactionLog, s: &Settings) -> DyadStage {
    let queues = Queues::reconstruct(log);
    let dyads = build_dyads(log, &queues, &s.dyads.params());
    DyadStage::from_dyads(log, dyads, s.dyads.addition_threshold)
}

pub struct ItemMatch {
    pub item: FocusItem,
    pub set: MatchedPairSet,
    pub balance: Option<BalanceReport>,
    pub naive_rd: Option<f64>,
}

fn match_item(log: &TransactionLog, stage: &DyadStage, dyads: &[Dyad], item: FocusItem, s: &Settings) -> ItemMatch {
    let eligible = stage.dyads_for(dyads, item);
    let set = build_matched_pairs(log, &eligible, item, &stage.context, &s.adjustment);
    let balance = balance_report(log, &eligible, &set, &stage.context, &Covariate::DEFAULT).ok();
    let naive_rd = naive_risk_difference(log, &eligible, item);
    ItemMatch { item, set, balance, naive_rd }
}

/// Matching for every selected addition, items in parallel.
pub fn match_stage(log: &TransactionLog, stage: &DyadStage, s: &Settings) -> Vec<ItemMatch> {
    stage.selected_items().into_par_iter().map(|item| match_item(log, stage, &stage.dyads, item, s)).collect()
}

/// Splits a pair list by item, items in catalog order, pairs in input order.
pub fn group_pairs<'a>(pairs: impl IntoIterator<Item = &'a MatchedPair>) -> Vec<(FocusItem, Vec<MatchedPair>)> {
    let mut by: BTreeMap<FocusItem, Vec<MatchedPair>> = BTreeMap::new();
    for p in pairs {
        by.entry(p.item).or_default().push(*p);
    }
    FocusItem::all().filter_map(|i| by.remove(&i).map(|v| (i, v))).collect()
}

pub struct ItemEstimate {
    pub item: FocusItem,
    pub estimate: EffectEstimate,
}

fn estimate_groups(
    log: &TransactionLog,
    groups: &[(FocusItem, Vec<MatchedPair>)],
    s: &Settings,
    label: &str,
) -> Vec<ItemEstimate> {
    groups
        .par_iter()
        .filter_map(|(item, pairs)| {
            let b = s.bootstrap(&format!("{label}/{}", item.name()));
            estimate_effect(&outcomes(log, pairs), &b).ok().map(|estimate| ItemEstimate { item: *item, estimate })
        })
        .collect()
}

pub fn estimate_stage(log: &TransactionLog, groups: &[(FocusItem, Vec<MatchedPair>)], s: &Settings) -> Vec<ItemEstimate> {
    estimate_groups(log, groups, s, "effect")
}

pub struct BaselineStage {
    pub n_dyads: usize,
    pub matches: Vec<ItemMatch>,
    pub estimates: Vec<ItemEstimate>,
}

/// Randomized partners through the same matching and estimation path. Items
/// and their dayparts are those selected on the real dyads.
pub fn baseline_stage(log: &TransactionLog, stage: &DyadStage, s: &Settings) -> BaselineStage {
    let spec = RandomizationSpec { seed: s.seed, ..Default::default() };
    let randomized = randomize_partners(log, &stage.dyads, &spec);
    let matches: Vec<ItemMatch> =
        stage.selected_items().into_par_iter().map(|item| match_item(log, stage, &randomized, item, s)).collect();
    let groups: Vec<(FocusItem, Vec<MatchedPair>)> = matches.iter().map(|m| (m.item, m.set.pairs.clone())).collect();
    let estimates = estimate_groups(log, &groups, s, "baseline");
    BaselineStage { n_dyads: randomized.len(), matches, estimates }
}

pub struct ItemSensitivity {
    pub item: FocusItem,
    pub result: Result<SensitivityResult, SensitivityError>,
}

/// Rosenbaum bounds per item from its paired counts.
pub fn sensitivity_stage(log: &TransactionLog, groups: &[(FocusItem, Vec<MatchedPair>)], s: &Settings) -> Vec<ItemSensitivity> {
    let e = &s.estimation;
    let grid = gamma_grid(e.gamma_grid_max, 50);
    groups
        .iter()
        .map(|(item, pairs)| ItemSensitivity {
            item: *item,
            result: sensitivity_analysis(
                &PairedCounts::from_outcomes(&outcomes(log, pairs)),
                e.alpha,
                e.sidedness,
                &grid,
                e.lambda_max,
            ),
        })
        .collect()
}

/// Additions' pairs concatenated in item order.
pub fn pooled(groups: &[(FocusItem, Vec<MatchedPair>)]) -> Vec<MatchedPair> {
    groups
        .iter()
        .filter(|(i, _)| matches!(i, FocusItem::Addition(_)))
        .flat_map(|(_, p)| p.iter().copied())
        .collect()
}

pub fn dose_stage(log: &TransactionLog, pairs: &[MatchedPair], s: &Settings) -> Result<DoseResponseResult, EstimateError> {
    dose_response(log, pairs, &s.estimation.dose, &s.bootstrap("dose"))
}

pub fn coordination_stage(
    log: &TransactionLog,
    pairs: &[MatchedPair],
    s: &Settings,
) -> Result<CoordinationResult, CoordinationError> {
    let params = CoordinationParams {
        min_per_order: s.estimation.coordination_min_per_order,
        sample_per_pair: s.estimation.coordination_sample_per_pair,
        seed: s.seed,
    };
    coordination_test(log, pairs, &params)
}

/// Subgroup estimates over the pooled addition pairs. Tie strengths come
/// from `dyads`; age bins are the terciles of the persons' ages at their
/// dyads' treated transactions.
pub fn subgroup_stage(
    log: &TransactionLog,
    people: Option<&PersonTable>,
    dyads: &[Dyad],
    pairs: &[MatchedPair],
    s: &Settings,
) -> Vec<SubgroupEstimate> {
    let ties = TieStrengths::new(dyads);
    let mut ctx = GroupingContext::new(log);
    ctx.people = people;
    ctx.ties = Some(&ties);
    if let Some(t) = people {
        let ages: Vec<i32> = pairs
            .iter()
            .flat_map(|p| {
                let d = &p.treated;
                [
                    t.age_at(d.partner, &log.tx(d.partner_tx).timestamp),
                    t.age_at(d.focal, &log.tx(d.focal_tx).timestamp),
                ]
            })
            .flatten()
            .collect();
        if !ages.is_empty() {
            ctx.age_bins = AgeBins::terciles(&ages);
        }
    }
    let base = s.bootstrap("subgroups");
    s.analyses
        .subgroups
        .par_iter()
        .map(|&g: &Grouping| subgroup_estimates(&ctx, pairs, g, s.estimation.min_stratum, &base))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

pub struct AnchorOutcome {
    pub attribute: AnchorAttribute,
    pub result: Result<(MatchedPairSet, EffectEstimate), EstimateError>,
}

pub fn anchor_stage(log: &TransactionLog, stage: &DyadStage, s: &Settings) -> Vec<AnchorOutcome> {
    [AnchorAttribute::MealVegetarian, AnchorAttribute::BeverageKind]
        .into_par_iter()
        .map(|attribute| {
            let b = s.bootstrap(&format!("anchor/{}", attribute.item().name()));
            AnchorOutcome {
                attribute,
                result: anchor_mimicry(log, &stage.dyads, &stage.context, attribute, &s.adjustment, &b),
            }
        })
        .collect()
}

pub struct Prediction {
    pub person: String,
    pub status: Status,
    pub confidence: f64,
    /// Status taken from the demographics rather than predicted.
    pub labelled: bool,
}

pub struct StatusStage {
    pub model: StatusModel,
    pub predictions: Vec<Prediction>,
    /// Demographics with missing statuses filled from predictions.
    pub completed: Demographics,
}

fn fit_parallel(x: &[[f64; infer::N_FEATURES]], y: &[usize], p: &ForestParams) -> Vec<infer::Tree> {
    (0..p.n_trees).into_par_iter().map(|i| infer::fit_tree(x, y, p, i)).collect()
}

/// Trains on labelled student/staff persons and predicts everyone else.
pub fn status_stage(log: &TransactionLog, demographics: &Demographics, s: &Settings) -> Result<StatusStage, InferError> {
    let features: Vec<FeatureVector> = infer::extract_all(log);
    let known: Vec<Option<Status>> = (0..log.person_count())
        .map(|i| {
            demographics
                .get(log.person_name(PersonId(i as u32)))
                .and_then(|r| r.status)
        })
        .collect();
    let (train_x, train_y): (Vec<FeatureVector>, Vec<Status>) = features
        .iter()
        .zip(&known)
        .filter_map(|(f, s)| s.map(|s| (f.clone(), s)))
        .unzip();
    let params = ForestParams { seed: s.seed, ..Default::default() };
    let model = infer::train_status_model_with(&train_x, &train_y, &params, &fit_parallel)?;
    let mut completed = demographics.clone();
    let predictions = features
        .iter()
        .zip(&known)
        .enumerate()
        .map(|(i, (f, k))| {
            let person = log.person_name(PersonId(i as u32)).to_string();
            let (status, confidence) = infer::predict_status(&model, f);
            if k.is_none() {
                completed.set_status(&person, status);
            }
            Prediction { person, status, confidence, labelled: k.is_some() }
        })
        .collect();
    Ok(StatusStage { model, predictions, completed })
}
