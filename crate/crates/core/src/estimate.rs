//! Outcome analysis over matched pairs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use chrono::Datelike;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextStats;
use crate::dyads::{AgeBins, Dyad, TieStrengths};
use crate::matching::{build_matched_pairs, AdjustmentSpec, MatchedPair, MatchedPairSet};
use crate::model::{FocusItem, PersonTable, TransactionLog};
use crate::seed;
use crate::stats::{self, OlsFit};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EstimateError {
    #[error("no matched pairs")]
    NoPairs,
    #[error("need at least {needed} pairs, got {got}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("need at least 3 non-empty delay bins, got {0}")]
    InsufficientBins(usize),
}

/// Focal purchases in the treated and control dyads of one matched pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PairOutcome {
    pub treated: bool,
    pub control: bool,
}

impl PairOutcome {
    pub fn of(log: &TransactionLog, pair: &MatchedPair) -> Self {
        Self {
            treated: pair.treated.focal_has(log, pair.item),
            control: pair.control.focal_has(log, pair.item),
        }
    }
}

pub fn outcomes(log: &TransactionLog, pairs: &[MatchedPair]) -> Vec<PairOutcome> {
    pairs.iter().map(|p| PairOutcome::of(log, p)).collect()
}

/// Paired 2×2 table; the first index is the treated focal's purchase, the
/// second the control focal's.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedCounts {
    pub n11: u64,
    pub n10: u64,
    pub n01: u64,
    pub n00: u64,
}

impl PairedCounts {
    pub fn from_outcomes(outcomes: &[PairOutcome]) -> Self {
        let mut c = PairedCounts::default();
        for o in outcomes {
            match (o.treated, o.control) {
                (true, true) => c.n11 += 1,
                (true, false) => c.n10 += 1,
                (false, true) => c.n01 += 1,
                (false, false) => c.n00 += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n10 + self.n01 + self.n00
    }

    pub fn discordant(&self) -> u64 {
        self.n10 + self.n01
    }

    pub fn treated_yes(&self) -> u64 {
        self.n11 + self.n10
    }

    pub fn control_yes(&self) -> u64 {
        self.n11 + self.n01
    }

    /// Dyad-level table: rows partner purchased (no, yes), columns focal purchased (no, yes).
    pub fn marginal(&self) -> [[u64; 2]; 2] {
        let n = self.total();
        [
            [n - self.control_yes(), self.control_yes()],
            [n - self.treated_yes(), self.treated_yes()],
        ]
    }

    /// n10 / n01.
    pub fn discordant_ratio(&self) -> Option<f64> {
        (self.n01 > 0).then(|| self.n10 as f64 / self.n01 as f64)
    }
}

pub fn paired_counts(outcomes: &[PairOutcome]) -> Result<PairedCounts, EstimateError> {
    if outcomes.is_empty() {
        return Err(EstimateError::NoPairs);
    }
    Ok(PairedCounts::from_outcomes(outcomes))
}

/// P(focal buys | partner bought) − P(focal buys | partner did not).
pub fn risk_difference(c: &PairedCounts) -> Result<f64, EstimateError> {
    let n = c.total();
    if n == 0 {
        return Err(EstimateError::NoPairs);
    }
    Ok((c.treated_yes() as f64 - c.control_yes() as f64) / n as f64)
}

/// P(focal buys | partner bought) / P(focal buys | partner did not); `None`
/// when no control focal bought.
pub fn risk_ratio(c: &PairedCounts) -> Option<f64> {
    (c.control_yes() > 0).then(|| c.treated_yes() as f64 / c.control_yes() as f64)
}

/// Risk difference from a dyad-level table as returned by [`PairedCounts::marginal`].
pub fn risk_difference_marginal(table: &[[u64; 2]; 2]) -> Option<f64> {
    let control_n = table[0][0] + table[0][1];
    let treated_n = table[1][0] + table[1][1];
    (control_n > 0 && treated_n > 0)
        .then(|| table[1][1] as f64 / treated_n as f64 - table[0][1] as f64 / control_n as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McNemarTest {
    pub statistic: f64,
    pub p: f64,
    /// Exact binomial p (fewer than 25 discordant pairs).
    pub exact: bool,
}

pub const MCNEMAR_EXACT_BELOW: u64 = 25;

/// McNemar test without continuity correction; exact two-sided binomial p
/// below 25 discordant pairs. `None` when there are no discordant pairs.
pub fn paired_chi2(c: &PairedCounts) -> Option<McNemarTest> {
    let d = c.discordant();
    if d == 0 {
        return None;
    }
    let diff = c.n10 as f64 - c.n01 as f64;
    let statistic = diff * diff / d as f64;
    if d < MCNEMAR_EXACT_BELOW {
        let k = c.n10.max(c.n01);
        let p = (2.0 * stats::binomial_sf(k, d, 0.5)).min(1.0);
        Some(McNemarTest { statistic, p, exact: true })
    } else {
        Some(McNemarTest { statistic, p: stats::chi2_1df_sf(statistic), exact: false })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    Rd,
    Rr,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub lo: f64,
    pub hi: f64,
    /// Standard deviation of the replicates.
    pub se: f64,
    /// Replicates where the statistic was defined.
    pub n_valid: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BootstrapParams {
    pub replicates: usize,
    pub seed: u64,
    pub level: f64,
}

impl Default for BootstrapParams {
    fn default() -> Self {
        Self { replicates: 1000, seed: 0, level: 0.95 }
    }
}

impl BootstrapParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..*self }
    }

    pub fn derive(&self, label: &str) -> Self {
        self.with_seed(seed::derive(self.seed, label))
    }
}

/// Resamples pairs with replacement; replicate `b` draws from ChaCha stream `b`.
fn bootstrap_replicates(outcomes: &[PairOutcome], params: &BootstrapParams) -> Vec<PairedCounts> {
    let n = outcomes.len();
    // cell index per pair: 0 = n11, 1 = n10, 2 = n01, 3 = n00
    let cells: Vec<u8> = outcomes.iter().map(|o| u8::from(!o.treated) * 2 + u8::from(!o.control)).collect();
    (0..params.replicates)
        .map(|b| {
            let mut rng = seed::stream(params.seed, b as u64);
            let mut k = [0u64; 4];
            for _ in 0..n {
                k[usize::from(cells[rng.random_range(0..n)])] += 1;
            }
            PairedCounts { n11: k[0], n10: k[1], n01: k[2], n00: k[3] }
        })
        .collect()
}

fn summarize(values: &[f64], level: f64) -> Option<BootstrapSummary> {
    let valid: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let tail = (1.0 - level) / 2.0;
    let (lo, hi) = stats::percentile_interval(&valid, tail, 1.0 - tail)?;
    let se = if valid.len() > 1 { libm::sqrt(stats::sample_variance(&valid)) } else { 0.0 };
    Some(BootstrapSummary { lo, hi, se, n_valid: valid.len() })
}

fn statistic_of(c: &PairedCounts, stat: Statistic) -> f64 {
    match stat {
        Statistic::Rd => risk_difference(c).unwrap_or(f64::NAN),
        Statistic::Rr => risk_ratio(c).unwrap_or(f64::NAN),
    }
}

/// Percentile bootstrap interval. `Ok(None)` when the statistic is undefined
/// in every replicate (risk ratio with no control purchases).
pub fn bootstrap(
    outcomes: &[PairOutcome],
    stat: Statistic,
    params: &BootstrapParams,
) -> Result<Option<BootstrapSummary>, EstimateError> {
    if outcomes.len() < 2 {
        return Err(EstimateError::InsufficientPairs { needed: 2, got: outcomes.len() });
    }
    let values: Vec<f64> = bootstrap_replicates(outcomes, params).iter().map(|c| statistic_of(c, stat)).collect();
    Ok(summarize(&values, params.level))
}

pub fn bootstrap_ci(
    outcomes: &[PairOutcome],
    stat: Statistic,
    params: &BootstrapParams,
) -> Result<Option<(f64, f64)>, EstimateError> {
    Ok(bootstrap(outcomes, stat, params)?.map(|s| (s.lo, s.hi)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub n_pairs: usize,
    pub counts: PairedCounts,
    pub rd: f64,
    pub rd_ci: (f64, f64),
    pub rd_se: f64,
    pub rr: Option<f64>,
    pub rr_ci: Option<(f64, f64)>,
    pub mcnemar: Option<McNemarTest>,
}

/// RD, RR, percentile intervals (both from the same replicates) and the
/// McNemar test. A single pair yields a zero-width interval.
pub fn estimate_effect(outcomes: &[PairOutcome], params: &BootstrapParams) -> Result<EffectEstimate, EstimateError> {
    let counts = paired_counts(outcomes)?;
    let rd = risk_difference(&counts)?;
    let rr = risk_ratio(&counts);
    let (rd_sum, rr_sum) = if outcomes.len() >= 2 {
        let reps = bootstrap_replicates(outcomes, params);
        let rds: Vec<f64> = reps.iter().map(|c| statistic_of(c, Statistic::Rd)).collect();
        let rrs: Vec<f64> = reps.iter().map(|c| statistic_of(c, Statistic::Rr)).collect();
        (summarize(&rds, params.level), summarize(&rrs, params.level))
    } else {
        let point = |v: f64| BootstrapSummary { lo: v, hi: v, se: 0.0, n_valid: 1 };
        (Some(point(rd)), rr.map(point))
    };
    let rd_sum = rd_sum.unwrap_or(BootstrapSummary { lo: rd, hi: rd, se: 0.0, n_valid: 0 });
    Ok(EffectEstimate {
        n_pairs: outcomes.len(),
        counts,
        rd,
        rd_ci: (rd_sum.lo, rd_sum.hi),
        rd_se: rd_sum.se,
        rr,
        rr_ci: if rr.is_some() { rr_sum.map(|s| (s.lo, s.hi)) } else { None },
        mcnemar: paired_chi2(&counts),
    })
}

/// Unmatched contrast over all eligible dyads: share of focal purchases when
/// the partner bought minus when the partner did not.
pub fn naive_risk_difference(log: &TransactionLog, dyads: &[Dyad], item: FocusItem) -> Option<f64> {
    let (mut t_n, mut t_y, mut c_n, mut c_y) = (0u64, 0u64, 0u64, 0u64);
    for d in dyads.iter().filter(|d| item.applies_to(d.daypart) && d.anchored(log)) {
        let focal = d.focal_has(log, item);
        if d.partner_has(log, item) {
            t_n += 1;
            t_y += u64::from(focal);
        } else {
            c_n += 1;
            c_y += u64::from(focal);
        }
    }
    (t_n > 0 && c_n > 0).then(|| t_y as f64 / t_n as f64 - c_y as f64 / c_n as f64)
}

// ---------------------------------------------------------------------------
// Subgroups

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    PartnerStatus,
    FocalStatus,
    StatusPair,
    PartnerAge,
    FocalAge,
    PartnerGender,
    FocalGender,
    Year,
    Shop,
    TieStrengthBins,
    AdditionItem,
    Daypart,
}

impl Grouping {
    pub const ALL: [Grouping; 12] = [
        Grouping::PartnerStatus,
        Grouping::FocalStatus,
        Grouping::StatusPair,
        Grouping::PartnerAge,
        Grouping::FocalAge,
        Grouping::PartnerGender,
        Grouping::FocalGender,
        Grouping::Year,
        Grouping::Shop,
        Grouping::TieStrengthBins,
        Grouping::AdditionItem,
        Grouping::Daypart,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Grouping::PartnerStatus => "partner_status",
            Grouping::FocalStatus => "focal_status",
            Grouping::StatusPair => "status_pair",
            Grouping::PartnerAge => "partner_age",
            Grouping::FocalAge => "focal_age",
            Grouping::PartnerGender => "partner_gender",
            Grouping::FocalGender => "focal_gender",
            Grouping::Year => "year",
            Grouping::Shop => "shop",
            Grouping::TieStrengthBins => "tie_strength_bins",
            Grouping::AdditionItem => "addition_item",
            Grouping::Daypart => "daypart",
        }
    }
}

impl core::str::FromStr for Grouping {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Grouping::ALL.into_iter().find(|g| g.name() == s).ok_or_else(|| format!("unknown grouping {s:?}"))
    }
}

pub const UNKNOWN_STRATUM: &str = "unknown";

/// Everything a grouping may need to label a pair. Person attributes refer to
/// the treated dyad (its partner is shared with the control dyad).
pub struct GroupingContext<'a> {
    pub log: &'a TransactionLog,
    pub people: Option<&'a PersonTable>,
    pub ties: Option<&'a TieStrengths>,
    pub age_bins: AgeBins,
    /// Upper edges of tie-strength bins (exclusive); the last bin is closed at 1.
    pub tie_edges: Vec<f64>,
}

impl<'a> GroupingContext<'a> {
    pub fn new(log: &'a TransactionLog) -> Self {
        Self { log, people: None, ties: None, age_bins: AgeBins::default(), tie_edges: alloc::vec![0.25, 0.5, 0.75] }
    }

    pub fn label(&self, pair: &MatchedPair, grouping: Grouping) -> String {
        let d = &pair.treated;
        let unknown = || UNKNOWN_STRATUM.to_string();
        let status = |p: crate::model::PersonId| {
            self.people.and_then(|t| t.status[p.index()]).map(|s| s.name().to_string())
        };
        let gender = |p: crate::model::PersonId| {
            self.people.and_then(|t| t.gender[p.index()]).map(|g| g.name().to_string())
        };
        let age = |p: crate::model::PersonId, tx: usize| {
            let labels = self.age_bins.labels();
            self.people
                .and_then(|t| t.age_at(p, &self.log.tx(tx).timestamp))
                .map(|a| labels[self.age_bins.bin(a)].clone())
        };
        match grouping {
            Grouping::PartnerStatus => status(d.partner).unwrap_or_else(unknown),
            Grouping::FocalStatus => status(d.focal).unwrap_or_else(unknown),
            Grouping::StatusPair => match (status(d.partner), status(d.focal)) {
                (Some(p), Some(f)) => format!("{p}-{f}"),
                _ => unknown(),
            },
            Grouping::PartnerAge => age(d.partner, d.partner_tx).unwrap_or_else(unknown),
            Grouping::FocalAge => age(d.focal, d.focal_tx).unwrap_or_else(unknown),
            Grouping::PartnerGender => gender(d.partner).unwrap_or_else(unknown),
            Grouping::FocalGender => gender(d.focal).unwrap_or_else(unknown),
            Grouping::Year => format!("{}", d.date.year()),
            Grouping::Shop => self.log.shop_name(d.shop).to_string(),
            Grouping::TieStrengthBins => match self.ties.and_then(|t| t.strength(d.partner, d.focal).ok()) {
                Some(s) => {
                    let i = self.tie_edges.iter().position(|&e| s < e).unwrap_or(self.tie_edges.len());
                    let lo = if i == 0 { 0.0 } else { self.tie_edges[i - 1] };
                    let hi = self.tie_edges.get(i).copied().unwrap_or(1.0);
                    format!("{lo:.2}-{hi:.2}")
                }
                None => unknown(),
            },
            Grouping::AdditionItem => pair.item.name().to_string(),
            Grouping::Daypart => d.daypart.name().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEstimate {
    pub grouping: Grouping,
    pub stratum: String,
    pub n_pairs: usize,
    /// `None` when the stratum has fewer pairs than the minimum.
    pub estimate: Option<EffectEstimate>,
}

pub fn subgroup_estimates(
    ctx: &GroupingContext<'_>,
    pairs: &[MatchedPair],
    grouping: Grouping,
    min_pairs: usize,
    params: &BootstrapParams,
) -> Vec<SubgroupEstimate> {
    let mut strata: BTreeMap<String, Vec<PairOutcome>> = BTreeMap::new();
    for p in pairs {
        strata.entry(ctx.label(p, grouping)).or_default().push(PairOutcome::of(ctx.log, p));
    }
    strata
        .into_iter()
        .map(|(stratum, outs)| {
            let estimate = if outs.len() >= min_pairs.max(1) {
                let label = format!("subgroup/{}/{}", grouping.name(), stratum);
                estimate_effect(&outs, &params.derive(&label)).ok()
            } else {
                None
            };
            SubgroupEstimate { grouping, stratum, n_pairs: outs.len(), estimate }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Anchor mimicry

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorAttribute {
    /// Treated: the partner's lunch meal is vegetarian.
    MealVegetarian,
    /// Treated: the partner's beverage is tea.
    BeverageKind,
}

impl AnchorAttribute {
    pub fn item(self) -> FocusItem {
        match self {
            AnchorAttribute::MealVegetarian => FocusItem::VegetarianMeal,
            AnchorAttribute::BeverageKind => FocusItem::Tea,
        }
    }
}

/// The matching and estimation pipeline with the anchor attribute as the item.
pub fn anchor_mimicry(
    log: &TransactionLog,
    dyads: &[Dyad],
    context: &ContextStats,
    attribute: AnchorAttribute,
    spec: &AdjustmentSpec,
    params: &BootstrapParams,
) -> Result<(MatchedPairSet, EffectEstimate), EstimateError> {
    let set = build_matched_pairs(log, dyads, attribute.item(), context, spec);
    if set.is_empty() {
        return Err(EstimateError::NoPairs);
    }
    let est = estimate_effect(&outcomes(log, &set.pairs), params)?;
    Ok((set, est))
}

// ---------------------------------------------------------------------------
// Dose-response

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoseParams {
    pub bin_width_s: i64,
    pub max_delay_s: i64,
    /// Bins with fewer pairs are left out of the regression.
    pub min_pairs_per_bin: usize,
}

impl Default for DoseParams {
    fn default() -> Self {
        Self { bin_width_s: 30, max_delay_s: 300, min_pairs_per_bin: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseBin {
    pub lo_s: i64,
    pub hi_s: i64,
    pub midpoint_s: f64,
    pub estimate: EffectEstimate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoseResponseResult {
    pub bins: Vec<DoseBin>,
    pub rd_fit: OlsFit,
    pub rr_fit: Option<OlsFit>,
}

impl DoseResponseResult {
    pub fn slope_rd(&self) -> f64 {
        self.rd_fit.slope
    }

    pub fn p_rd(&self) -> f64 {
        self.rd_fit.p
    }
}

/// Regresses per-bin point estimates on bin midpoints.
pub fn fit_dose_bins(midpoints: &[f64], rds: &[f64], rrs: &[Option<f64>]) -> Result<(OlsFit, Option<OlsFit>), EstimateError> {
    let rd_fit = stats::ols(midpoints, rds).ok_or(EstimateError::InsufficientBins(midpoints.len()))?;
    let (rx, ry): (Vec<f64>, Vec<f64>) = midpoints
        .iter()
        .zip(rrs)
        .filter_map(|(&x, y)| y.map(|y| (x, y)))
        .unzip();
    Ok((rd_fit, stats::ols(&rx, &ry)))
}

/// Bins pairs by the treated dyad's delay, estimates each bin and fits a
/// line through the per-bin RD (and RR where defined).
pub fn dose_response(
    log: &TransactionLog,
    pairs: &[MatchedPair],
    dose: &DoseParams,
    params: &BootstrapParams,
) -> Result<DoseResponseResult, EstimateError> {
    let width = dose.bin_width_s.max(1);
    let n_bins = ((dose.max_delay_s + width - 1) / width).max(1) as usize;
    let mut binned: Vec<Vec<PairOutcome>> = alloc::vec![Vec::new(); n_bins];
    for p in pairs {
        let delay = p.treated.delay_s;
        if delay < 0 || delay > dose.max_delay_s {
            continue;
        }
        let b = ((delay / width) as usize).min(n_bins - 1);
        binned[b].push(PairOutcome::of(log, p));
    }
    let mut bins = Vec::new();
    for (b, outs) in binned.iter().enumerate() {
        if outs.is_empty() || outs.len() < dose.min_pairs_per_bin {
            continue;
        }
        let lo_s = b as i64 * width;
        let hi_s = (lo_s + width).min(dose.max_delay_s);
        let estimate = estimate_effect(outs, &params.derive(&format!("dose/{b}")))?;
        bins.push(DoseBin { lo_s, hi_s, midpoint_s: (lo_s + hi_s) as f64 / 2.0, estimate });
    }
    if bins.len() < 3 {
        return Err(EstimateError::InsufficientBins(bins.len()));
    }
    let mids: Vec<f64> = bins.iter().map(|b| b.midpoint_s).collect();
    let rds: Vec<f64> = bins.iter().map(|b| b.estimate.rd).collect();
    let rrs: Vec<Option<f64>> = bins.iter().map(|b| b.estimate.rr).collect();
    let (rd_fit, rr_fit) = fit_dose_bins(&mids, &rds, &rrs)?;
    Ok(DoseResponseResult { bins, rd_fit, rr_fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outs(n11: usize, n10: usize, n01: usize, n00: usize) -> Vec<PairOutcome> {
        let mut v = Vec::new();
        v.extend((0..n11).map(|_| PairOutcome { treated: true, control: true }));
        v.extend((0..n10).map(|_| PairOutcome { treated: true, control: false }));
        v.extend((0..n01).map(|_| PairOutcome { treated: false, control: true }));
        v.extend((0..n00).map(|_| PairOutcome { treated: false, control: false }));
        v
    }

    const CAFETERIA: PairedCounts = PairedCounts { n11: 3042, n10: 12119, n01: 5221, n00: 28111 };

    #[test]
    fn published_contingency_table() {
        assert_eq!(CAFETERIA.total(), 48493);
        assert_eq!(CAFETERIA.treated_yes(), 15161);
        assert_eq!(CAFETERIA.control_yes(), 8263);
        assert_eq!(CAFETERIA.marginal(), [[40230, 8263], [33332, 15161]]);
        let rd = risk_difference(&CAFETERIA).unwrap();
        assert!((rd - 0.14225).abs() < 5e-6);
        assert!((risk_ratio(&CAFETERIA).unwrap() - 1.835).abs() < 1e-3);
        assert!((CAFETERIA.discordant_ratio().unwrap() - 2.32).abs() < 0.01);
        let t = paired_chi2(&CAFETERIA).unwrap();
        // 6898^2 / 17340
        assert!((t.statistic - 2744.09).abs() < 0.01);
        assert!(t.p < 1e-12);
        assert!(!t.exact);
    }

    #[test]
    fn small_tables() {
        let c = PairedCounts::from_outcomes(&outs(0, 6, 2, 2));
        // 10 pairs, 6 treated-yes, 2 control-yes
        assert!((risk_difference(&c).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(risk_ratio(&c), Some(3.0));
        let sym = PairedCounts { n11: 3, n10: 4, n01: 4, n00: 1 };
        assert_eq!(risk_difference(&sym).unwrap(), 0.0);
        assert_eq!(risk_ratio(&sym), Some(1.0));
        let none = PairedCounts { n11: 0, n10: 3, n01: 0, n00: 5 };
        assert_eq!(risk_ratio(&none), None);
        assert_eq!(risk_difference(&PairedCounts::default()), Err(EstimateError::NoPairs));
        assert_eq!(paired_counts(&[]), Err(EstimateError::NoPairs));
        let neg = PairedCounts::from_outcomes(&outs(0, 0, 0, 7));
        assert_eq!((neg.n10, neg.n01), (0, 0));
    }

    #[test]
    fn mcnemar_cases() {
        let t = paired_chi2(&PairedCounts { n11: 0, n10: 5, n01: 5, n00: 0 }).unwrap();
        assert_eq!((t.statistic, t.p), (0.0, 1.0));
        let t = paired_chi2(&PairedCounts { n11: 0, n10: 9, n01: 1, n00: 0 }).unwrap();
        assert!(t.exact);
        // 2 * (C(10,9) + C(10,10)) / 2^10
        assert!((t.p - 22.0 / 1024.0).abs() < 1e-12);
        assert!((t.p - 0.0215).abs() < 1e-4);
        assert!(paired_chi2(&PairedCounts { n11: 4, n10: 0, n01: 0, n00: 9 }).is_none());
    }

    #[test]
    fn bootstrap_properties() {
        let params = BootstrapParams { replicates: 200, seed: 11, level: 0.95 };
        let same = outs(0, 10, 0, 0);
        assert_eq!(bootstrap_ci(&same, Statistic::Rd, &params).unwrap(), Some((1.0, 1.0)));
        let data = outs(5, 30, 12, 53);
        let a = bootstrap_ci(&data, Statistic::Rd, &params).unwrap();
        let b = bootstrap_ci(&data, Statistic::Rd, &params).unwrap();
        assert_eq!(a, b);
        let (lo, hi) = a.unwrap();
        let rd = risk_difference(&PairedCounts::from_outcomes(&data)).unwrap();
        assert!(lo <= rd && rd <= hi);
        assert!(bootstrap_ci(&data[..1], Statistic::Rd, &params).is_err());
        // no control purchases in any replicate
        assert_eq!(bootstrap_ci(&outs(0, 4, 0, 4), Statistic::Rr, &params).unwrap(), None);
    }

    #[test]
    fn effect_estimate_brackets_point() {
        let params = BootstrapParams { replicates: 300, seed: 5, level: 0.95 };
        let e = estimate_effect(&outs(10, 40, 15, 135), &params).unwrap();
        assert!(e.rd_ci.0 <= e.rd && e.rd <= e.rd_ci.1);
        let (lo, hi) = e.rr_ci.unwrap();
        assert!(lo <= e.rr.unwrap() && e.rr.unwrap() <= hi);
        assert!(e.rd_se > 0.0);
        let one = estimate_effect(&outs(0, 1, 0, 0), &params).unwrap();
        assert_eq!(one.rd_ci, (1.0, 1.0));
    }

    #[test]
    fn dose_fit_on_noiseless_bins() {
        let mids: Vec<f64> = (0..10).map(|i| 15.0 + 30.0 * i as f64).collect();
        let rds: Vec<f64> = mids.iter().map(|m| 0.2 - 0.0004 * m).collect();
        let (fit, rr) = fit_dose_bins(&mids, &rds, &[None; 10]).unwrap();
        assert!((fit.slope + 0.0004).abs() < 1e-9);
        assert!(rr.is_none());
        let (flat, _) = fit_dose_bins(&mids, &[0.1; 10], &[Some(1.5); 10]).unwrap();
        assert_eq!(flat.slope, 0.0);
        assert!((flat.p - 1.0).abs() < 1e-12);
        assert_eq!(fit_dose_bins(&mids[..2], &rds[..2], &[None, None]).unwrap_err(), EstimateError::InsufficientBins(2));
    }
}
