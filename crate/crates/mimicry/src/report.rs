//! The results document and the per-table CSV files.

use std::path::Path;

use anyhow::Result;
use mimicry_core::baseline::CoordinationResult;
use mimicry_core::dyads::{pair_counts, AdditionFrequency};
use mimicry_core::estimate::{DoseResponseResult, EffectEstimate, SubgroupEstimate};
use mimicry_core::infer::{HoldoutMetrics, StatusModel};
use mimicry_core::matching::{AdjustmentSpec, BalanceReport};
use mimicry_core::model::TransactionLog;
use mimicry_core::pipeline::ItemStatus;
use mimicry_core::sensitivity::{SensitivityResult, Sidedness};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    AnchorOutcome, BaselineStage, DyadStage, ItemEstimate, ItemMatch, ItemSensitivity, Prediction, StatusStage,
};
use crate::analysis::Settings;
use crate::config::{AnalysesConfig, DyadConfig, EstimationConfig};
use crate::io::write_table;

pub const FORMAT_VERSION: u32 = 1;

/// Non-finite values become `null`.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub item: String,
    pub stratum: Option<String>,
    pub n_pairs: usize,
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
    pub rd: f64,
    pub rd_ci: [f64; 2],
    pub rd_se: f64,
    pub rr: Option<f64>,
    pub rr_ci: Option<[f64; 2]>,
    pub discordant_ratio: Option<f64>,
    pub chi2: Option<f64>,
    pub p: Option<f64>,
    pub exact_test: Option<bool>,
}

impl EstimateRow {
    pub fn new(item: &str, stratum: Option<&str>, e: &EffectEstimate) -> Self {
        let c = &e.counts;
        Self {
            item: item.to_string(),
            stratum: stratum.map(String::from),
            n_pairs: e.n_pairs,
            n11: c.n11,
            n10: c.n10,
            n01: c.n01,
            n00: c.n00,
            rd: e.rd,
            rd_ci: [e.rd_ci.0, e.rd_ci.1],
            rd_se: e.rd_se,
            rr: e.rr,
            rr_ci: e.rr_ci.map(|(a, b)| [a, b]),
            discordant_ratio: c.discordant_ratio(),
            chi2: e.mcnemar.map(|m| m.statistic),
            p: e.mcnemar.map(|m| m.p),
            exact_test: e.mcnemar.map(|m| m.exact),
        }
    }
}

pub const ESTIMATE_HEADER: [&str; 17] = [
    "item", "stratum", "n_pairs", "n11", "n10", "n01", "n00", "rd", "rd_lo", "rd_hi", "rd_se", "rr", "rr_lo",
    "rr_hi", "discordant_ratio", "chi2", "p",
];

fn estimate_cells(r: &EstimateRow) -> Vec<String> {
    vec![
        r.item.clone(),
        r.stratum.clone().unwrap_or_default(),
        r.n_pairs.to_string(),
        r.n11.to_string(),
        r.n10.to_string(),
        r.n01.to_string(),
        r.n00.to_string(),
        r.rd.to_string(),
        r.rd_ci[0].to_string(),
        r.rd_ci[1].to_string(),
        r.rd_se.to_string(),
        cell(r.rr),
        cell(r.rr_ci.map(|c| c[0])),
        cell(r.rr_ci.map(|c| c[1])),
        cell(r.discordant_ratio),
        cell(r.chi2),
        cell(r.p),
    ]
}

/// The forest-plot table.
pub fn write_estimates(rows: &[EstimateRow], path: &Path) -> Result<()> {
    write_table(&ESTIMATE_HEADER, &rows.iter().map(estimate_cells).collect::<Vec<_>>(), path)
}

pub fn estimate_rows(estimates: &[ItemEstimate]) -> Vec<EstimateRow> {
    estimates.iter().map(|e| EstimateRow::new(e.item.name(), None, &e.estimate)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub smd_before: Option<f64>,
    pub smd_after: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceJson {
    pub pass: bool,
    pub rows: Vec<BalanceRow>,
}

impl From<&BalanceReport> for BalanceJson {
    fn from(b: &BalanceReport) -> Self {
        Self {
            pass: b.pass,
            rows: b
                .rows
                .iter()
                .map(|r| BalanceRow {
                    covariate: covariate_name(r.covariate).to_string(),
                    smd_before: finite(r.smd_before),
                    smd_after: finite(r.smd_after),
                })
                .collect(),
        }
    }
}

fn covariate_name(c: mimicry_core::matching::Covariate) -> &'static str {
    use mimicry_core::matching::Covariate::*;
    match c {
        Popularity => "popularity",
        Daypart => "daypart",
        Shop => "shop",
        Weekday => "weekday",
        Year => "year",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemResult {
    pub item: String,
    pub status: ItemStatus,
    pub n_treated: usize,
    pub n_control: usize,
    pub unmatched_treated: usize,
    pub naive_rd: Option<f64>,
    pub estimate: Option<EstimateRow>,
    pub balance: Option<BalanceJson>,
}

pub fn item_results(matches: &[ItemMatch], estimates: &[ItemEstimate]) -> Vec<ItemResult> {
    matches
        .iter()
        .map(|m| {
            let estimate = estimates.iter().find(|e| e.item == m.item).map(|e| EstimateRow::new(m.item.name(), None, &e.estimate));
            ItemResult {
                item: m.item.name().to_string(),
                status: if m.set.is_empty() { ItemStatus::NoPairs } else { ItemStatus::Ok },
                n_treated: m.set.n_treated,
                n_control: m.set.n_control,
                unmatched_treated: m.set.unmatched_treated,
                naive_rd: m.naive_rd,
                estimate,
                balance: m.balance.as_ref().map(BalanceJson::from),
            }
        })
        .collect()
}

/// One row per item with matching counts and the naive contrast.
pub fn write_matching(matches: &[ItemMatch], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = matches
        .iter()
        .map(|m| {
            vec![
                m.item.name().to_string(),
                if m.set.is_empty() { "no_pairs" } else { "ok" }.to_string(),
                m.set.n_treated.to_string(),
                m.set.n_control.to_string(),
                m.set.len().to_string(),
                m.set.unmatched_treated.to_string(),
                cell(m.naive_rd),
            ]
        })
        .collect();
    write_table(&["item", "status", "n_treated", "n_control", "n_pairs", "unmatched_treated", "naive_rd"], &rows, path)
}

pub fn write_balance(matches: &[ItemMatch], path: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for m in matches {
        if let Some(b) = &m.balance {
            for r in &b.rows {
                rows.push(vec![
                    m.item.name().to_string(),
                    covariate_name(r.covariate).to_string(),
                    r.smd_before.to_string(),
                    r.smd_after.to_string(),
                    b.pass.to_string(),
                ]);
            }
        }
    }
    write_table(&["item", "covariate", "smd_before", "smd_after", "pass"], &rows, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineJson {
    pub baseline: bool,
    pub n_dyads: usize,
    pub items: Vec<ItemResult>,
}

impl From<&BaselineStage> for BaselineJson {
    fn from(b: &BaselineStage) -> Self {
        Self { baseline: true, n_dyads: b.n_dyads, items: item_results(&b.matches, &b.estimates) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SensitivityJson {
    pub item: String,
    pub status: String,
    pub gamma_star: Option<f64>,
    pub significant_at_baseline: Option<bool>,
    pub capped: Option<bool>,
    pub alpha: f64,
    pub sidedness: Sidedness,
    /// `[gamma, worst-case p]`
    pub p_at: Vec<[f64; 2]>,
    /// `[lambda, delta]`
    pub curve: Vec<[f64; 2]>,
}

pub fn sensitivity_json(rows: &[ItemSensitivity], alpha: f64, sidedness: Sidedness) -> Vec<SensitivityJson> {
    rows.iter()
        .map(|r| match &r.result {
            Ok(SensitivityResult { gamma_star, p_at, amplification, .. }) => SensitivityJson {
                item: r.item.name().to_string(),
                status: "ok".into(),
                gamma_star: Some(gamma_star.gamma),
                significant_at_baseline: Some(gamma_star.significant_at_baseline),
                capped: Some(gamma_star.capped),
                alpha,
                sidedness,
                p_at: p_at.iter().map(|&(g, p)| [g, p]).collect(),
                curve: amplification.iter().map(|a| [a.lambda, a.delta]).collect(),
            },
            Err(e) => SensitivityJson {
                item: r.item.name().to_string(),
                status: e.to_string(),
                gamma_star: None,
                significant_at_baseline: None,
                capped: None,
                alpha,
                sidedness,
                p_at: Vec::new(),
                curve: Vec::new(),
            },
        })
        .collect()
}

pub fn write_sensitivity(rows: &[SensitivityJson], dir: &Path) -> Result<()> {
    let summary: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.item.clone(),
                r.status.clone(),
                cell(r.gamma_star),
                r.significant_at_baseline.map(|b| b.to_string()).unwrap_or_default(),
                r.capped.map(|b| b.to_string()).unwrap_or_default(),
                r.alpha.to_string(),
            ]
        })
        .collect();
    write_table(
        &["item", "status", "gamma_star", "significant_at_baseline", "capped", "alpha"],
        &summary,
        &dir.join("sensitivity.csv"),
    )?;
    let curve: Vec<Vec<String>> = rows
        .iter()
        .flat_map(|r| r.curve.iter().map(move |[l, d]| vec![r.item.clone(), l.to_string(), d.to_string()]))
        .collect();
    write_table(&["item", "lambda", "delta"], &curve, &dir.join("boundary.csv"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseBinJson {
    pub lo_s: i64,
    pub hi_s: i64,
    pub midpoint_s: f64,
    pub estimate: EstimateRow,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DoseJson {
    Ok {
        bins: Vec<DoseBinJson>,
        slope_rd: f64,
        intercept_rd: f64,
        p_rd: f64,
        slope_rr: Option<f64>,
        p_rr: Option<f64>,
    },
    Skipped {
        reason: String,
    },
}

impl DoseJson {
    pub fn new<E: std::fmt::Display>(r: &Result<DoseResponseResult, E>) -> Self {
        match r {
            Ok(d) => DoseJson::Ok {
                bins: d
                    .bins
                    .iter()
                    .map(|b| DoseBinJson {
                        lo_s: b.lo_s,
                        hi_s: b.hi_s,
                        midpoint_s: b.midpoint_s,
                        estimate: EstimateRow::new("pooled", Some(&format!("{}-{}", b.lo_s, b.hi_s)), &b.estimate),
                    })
                    .collect(),
                slope_rd: d.rd_fit.slope,
                intercept_rd: d.rd_fit.intercept,
                p_rd: d.rd_fit.p,
                slope_rr: d.rr_fit.map(|f| f.slope),
                p_rr: d.rr_fit.and_then(|f| finite(f.p)),
            },
            Err(e) => DoseJson::Skipped { reason: e.to_string() },
        }
    }
}

pub fn write_dose(dose: &DoseJson, path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = match dose {
        DoseJson::Ok { bins, .. } => bins
            .iter()
            .map(|b| {
                let mut r = vec![b.lo_s.to_string(), b.hi_s.to_string(), b.midpoint_s.to_string()];
                r.extend(estimate_cells(&b.estimate).into_iter().skip(2));
                r
            })
            .collect(),
        DoseJson::Skipped { .. } => Vec::new(),
    };
    let mut header = vec!["lo_s", "hi_s", "midpoint_s"];
    header.extend_from_slice(&ESTIMATE_HEADER[2..]);
    write_table(&header, &rows, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CoordinationJson {
    Ok {
        t: f64,
        df: f64,
        p: f64,
        n_pairs_used: usize,
        mean_dominant: f64,
        mean_reverse: f64,
    },
    Skipped {
        reason: String,
    },
}

impl CoordinationJson {
    pub fn new<E: std::fmt::Display>(r: &Result<CoordinationResult, E>) -> Self {
        match r {
            Ok(c) => CoordinationJson::Ok {
                t: c.test.t,
                df: c.test.df,
                p: c.test.p,
                n_pairs_used: c.n_pairs_used,
                mean_dominant: c.mean_dominant,
                mean_reverse: c.mean_reverse,
            },
            Err(e) => CoordinationJson::Skipped { reason: e.to_string() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupJson {
    pub grouping: String,
    pub stratum: String,
    pub n_pairs: usize,
    /// `ok`, or `insufficient` below the minimum stratum size.
    pub status: String,
    pub estimate: Option<EstimateRow>,
}

pub fn subgroup_json(rows: &[SubgroupEstimate]) -> Vec<SubgroupJson> {
    rows.iter()
        .map(|r| SubgroupJson {
            grouping: r.grouping.name().to_string(),
            stratum: r.stratum.clone(),
            n_pairs: r.n_pairs,
            status: if r.estimate.is_some() { "ok" } else { "insufficient" }.to_string(),
            estimate: r.estimate.as_ref().map(|e| EstimateRow::new(r.grouping.name(), Some(&r.stratum), e)),
        })
        .collect()
}

pub fn write_subgroups(rows: &[SubgroupJson], path: &Path) -> Result<()> {
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut v = vec![r.grouping.clone(), r.stratum.clone(), r.n_pairs.to_string(), r.status.clone()];
            match &r.estimate {
                Some(e) => v.extend(estimate_cells(e).into_iter().skip(3)),
                None => v.extend(std::iter::repeat_n(String::new(), ESTIMATE_HEADER.len() - 3)),
            }
            v
        })
        .collect();
    let mut header = vec!["grouping", "stratum", "n_pairs", "status"];
    header.extend_from_slice(&ESTIMATE_HEADER[3..]);
    write_table(&header, &table, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorJson {
    pub attribute: String,
    pub item: String,
    pub status: ItemStatus,
    pub estimate: Option<EstimateRow>,
}

pub fn anchor_json(rows: &[AnchorOutcome]) -> Vec<AnchorJson> {
    rows.iter()
        .map(|r| {
            let attribute = match r.attribute {
                mimicry_core::estimate::AnchorAttribute::MealVegetarian => "meal_vegetarian",
                mimicry_core::estimate::AnchorAttribute::BeverageKind => "beverage_kind",
            };
            let item = r.attribute.item().name();
            AnchorJson {
                attribute: attribute.to_string(),
                item: item.to_string(),
                status: if r.result.is_ok() { ItemStatus::Ok } else { ItemStatus::NoPairs },
                estimate: r.result.as_ref().ok().map(|(_, e)| EstimateRow::new(item, None, e)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StatusJson {
    Ok {
        n_train: usize,
        n_labelled: usize,
        n_predicted: usize,
        metrics: Option<HoldoutMetrics>,
    },
    Skipped {
        reason: String,
    },
}

impl StatusJson {
    pub fn new<E: std::fmt::Display>(r: &Result<StatusStage, E>) -> Self {
        match r {
            Ok(s) => StatusJson::Ok {
                n_train: s.model.n_train,
                n_labelled: s.predictions.iter().filter(|p| p.labelled).count(),
                n_predicted: s.predictions.iter().filter(|p| !p.labelled).count(),
                metrics: s.model.metrics,
            },
            Err(e) => StatusJson::Skipped { reason: e.to_string() },
        }
    }
}

pub fn write_predictions(predictions: &[Prediction], path: &Path) -> Result<()> {
    let rows: Vec<Vec<String>> = predictions
        .iter()
        .map(|p| vec![p.person.clone(), p.status.name().to_string(), p.confidence.to_string()])
        .collect();
    write_table(&["person_id", "label", "confidence"], &rows, path)
}

pub fn write_model(model: &StatusModel, path: &Path) -> Result<()> {
    crate::io::write_json(model, path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestJson {
    pub n_transactions: usize,
    pub n_persons: usize,
    pub n_rejected: usize,
    /// `line: message` for each rejected record.
    pub rejected: Vec<String>,
    pub unknown_item_occurrences: usize,
    pub unknown_codes: Vec<String>,
}

impl IngestJson {
    pub fn new(log: &TransactionLog) -> Self {
        Self {
            n_transactions: log.len(),
            n_persons: log.person_count(),
            n_rejected: log.rejected().len(),
            rejected: log.rejected().iter().map(|e| e.to_string()).collect(),
            unknown_item_occurrences: log.warnings().unknown_item_occurrences,
            unknown_codes: log.warnings().unknown_codes.iter().cloned().collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditionJson {
    pub daypart: String,
    pub addition: String,
    pub n_dyads: usize,
    pub n_treated: usize,
    pub fraction: f64,
    pub selected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadsJson {
    pub n_dyads: usize,
    /// Distinct unordered person pairs among the dyads.
    pub n_person_pairs: usize,
    pub n_context_cells: usize,
    pub additions: Vec<AdditionJson>,
}

impl DyadsJson {
    pub fn new(stage: &DyadStage) -> Self {
        Self {
            n_dyads: stage.dyads.len(),
            n_person_pairs: pair_counts(&stage.dyads).len(),
            n_context_cells: stage.context.len(),
            additions: stage.frequencies.iter().map(addition_json).collect(),
        }
    }
}

fn addition_json(f: &AdditionFrequency) -> AdditionJson {
    AdditionJson {
        daypart: f.daypart.name().to_string(),
        addition: f.addition.name().to_string(),
        n_dyads: f.n_dyads,
        n_treated: f.n_treated,
        fraction: f.fraction,
        selected: f.selected,
    }
}

/// The analysis settings of a run; paths are left out so results do not
/// depend on where inputs and outputs live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettingsJson {
    pub dyads: DyadConfig,
    pub adjustment: AdjustmentSpec,
    pub estimation: EstimationConfig,
    pub analyses: AnalysesConfig,
}

impl From<&Settings> for SettingsJson {
    fn from(s: &Settings) -> Self {
        Self { dyads: s.dyads, adjustment: s.adjustment, estimation: s.estimation, analyses: s.analyses.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub format_version: u32,
    pub seed: u64,
    pub settings: SettingsJson,
    pub ingest: IngestJson,
    pub dyads: DyadsJson,
    pub items: Vec<ItemResult>,
    pub baseline: Option<BaselineJson>,
    pub sensitivity: Vec<SensitivityJson>,
    pub dose_response: Option<DoseJson>,
    pub coordination: Option<CoordinationJson>,
    pub subgroups: Vec<SubgroupJson>,
    pub anchor_mimicry: Vec<AnchorJson>,
    pub status_inference: Option<StatusJson>,
    pub balance_pass: bool,
    pub notices: Vec<String>,
}
