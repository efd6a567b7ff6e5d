//! Matched pairs of dyads: same partner, shop and daypart (optionally the
//! same focal person and anchors), item available in both contexts and
//! popularity within a caliper, differing only in whether the partner bought
//! the item.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use chrono::Datelike;
use libm::sqrt;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::ContextStats;
use crate::dyads::Dyad;
use crate::model::{Anchor, Daypart, FocusItem, PersonId, ShopId, TransactionLog};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchingError {
    #[error("caliper must lie in (0, 1), got {0}")]
    InvalidCaliper(f64),
    #[error("need at least two values per arm, got {treated} and {control}")]
    InsufficientValues { treated: usize, control: usize },
    #[error("no matched pairs")]
    NoPairs,
}

/// Maximum allowed popularity discrepancy inside a pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", content = "width", rename_all = "snake_case")]
pub enum Caliper {
    /// |p_t − p_c| / max(p_t, p_c) ≤ width
    Relative(f64),
    /// |p_t − p_c| ≤ width
    Absolute(f64),
}

impl Caliper {
    pub fn width(self) -> f64 {
        match self {
            Caliper::Relative(w) | Caliper::Absolute(w) => w,
        }
    }

    pub fn admits(self, p_t: f64, p_c: f64) -> bool {
        let diff = (p_t - p_c).abs();
        match self {
            Caliper::Relative(w) => diff == 0.0 || diff / p_t.max(p_c) <= w,
            Caliper::Absolute(w) => diff <= w,
        }
    }
}

/// Which transactions a dyad's popularity is computed from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PopularityMode {
    /// The cell without the dyad's own two transactions. Keeps the focal
    /// outcome and the partner's treatment out of the matching variable.
    #[default]
    ExcludeDyad,
    /// Every transaction of the cell.
    Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjustmentSpec {
    pub match_focal_identity: bool,
    pub match_exact_anchor: bool,
    pub caliper: Caliper,
    pub popularity: PopularityMode,
}

impl Default for AdjustmentSpec {
    fn default() -> Self {
        Self {
            match_focal_identity: false,
            match_exact_anchor: false,
            caliper: Caliper::Relative(0.10),
            popularity: PopularityMode::ExcludeDyad,
        }
    }
}

impl AdjustmentSpec {
    pub fn validate(&self) -> Result<(), MatchingError> {
        let w = self.caliper.width();
        if !(w > 0.0 && w < 1.0) {
            return Err(MatchingError::InvalidCaliper(w));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub item: FocusItem,
    pub treated: Dyad,
    pub control: Dyad,
    pub popularity_t: f64,
    pub popularity_c: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPairSet {
    pub item: FocusItem,
    pub popularity: PopularityMode,
    pub pairs: Vec<MatchedPair>,
    /// Eligible treated and control dyads before matching.
    pub n_treated: usize,
    pub n_control: usize,
    pub unmatched_treated: usize,
}

impl MatchedPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct StratumKey {
    partner: PersonId,
    shop: ShopId,
    daypart: Daypart,
    focal: Option<PersonId>,
    anchors: Option<(Anchor, Anchor)>,
}

#[derive(Clone, Copy)]
struct Candidate {
    dyad: Dyad,
    popularity: f64,
}

struct Arms {
    treated: Vec<Candidate>,
    control: Vec<Candidate>,
}

/// Eligible dyads: item meaningful in the daypart, both baskets anchored,
/// item available in the dyad's context.
fn eligible_arms(
    log: &TransactionLog,
    dyads: &[Dyad],
    item: FocusItem,
    context: &ContextStats,
    mode: PopularityMode,
) -> Arms {
    let mut arms = Arms { treated: Vec::new(), control: Vec::new() };
    for d in dyads {
        if !item.applies_to(d.daypart) || !d.anchored(log) {
            continue;
        }
        let cell = d.cell();
        if !context.available(&cell, item) {
            continue;
        }
        let Some(popularity) = dyad_popularity(log, d, item, context, mode) else { continue };
        let c = Candidate { dyad: *d, popularity };
        if d.partner_has(log, item) {
            arms.treated.push(c);
        } else {
            arms.control.push(c);
        }
    }
    arms
}

/// Popularity of `item` in the dyad's cell under `mode`; `None` when the
/// cell holds nothing but the dyad.
pub fn dyad_popularity(
    log: &TransactionLog,
    d: &Dyad,
    item: FocusItem,
    context: &ContextStats,
    mode: PopularityMode,
) -> Option<f64> {
    let stats = context.cell(&d.cell())?;
    match mode {
        PopularityMode::Cell => Some(stats.popularity(item)),
        PopularityMode::ExcludeDyad => {
            let n = stats.n_transactions.checked_sub(2).filter(|&n| n > 0)?;
            let own = u32::from(d.partner_has(log, item)) + u32::from(d.focal_has(log, item));
            Some(f64::from(stats.item_counts[item.bit()] - own) / f64::from(n))
        }
    }
}

fn stratum(log: &TransactionLog, d: &Dyad, spec: &AdjustmentSpec) -> StratumKey {
    StratumKey {
        partner: d.partner,
        shop: d.shop,
        daypart: d.daypart,
        focal: spec.match_focal_identity.then_some(d.focal),
        anchors: if spec.match_exact_anchor {
            let p = log.tx(d.partner_tx).profile.anchor(d.daypart);
            let f = log.tx(d.focal_tx).profile.anchor(d.daypart);
            p.zip(f)
        } else {
            None
        },
    }
}

/// Greedy nearest-popularity 1:1 matching without replacement.
///
/// Within each exact-key stratum, treated dyads are visited in (date, partner
/// tx_id) order and take the unused control with the closest popularity that
/// satisfies the caliper; ties go to the earlier control in the same order.
pub fn build_matched_pairs(
    log: &TransactionLog,
    dyads: &[Dyad],
    item: FocusItem,
    context: &ContextStats,
    spec: &AdjustmentSpec,
) -> MatchedPairSet {
    let arms = eligible_arms(log, dyads, item, context, spec.popularity);
    let (n_treated, n_control) = (arms.treated.len(), arms.control.len());

    let mut strata: BTreeMap<StratumKey, (Vec<Candidate>, Vec<Candidate>)> = BTreeMap::new();
    for c in arms.treated {
        strata.entry(stratum(log, &c.dyad, spec)).or_default().0.push(c);
    }
    for c in arms.control {
        let key = stratum(log, &c.dyad, spec);
        // controls in strata without treated dyads can never be used
        if let Some(entry) = strata.get_mut(&key) {
            entry.1.push(c);
        }
    }

    let order = |c: &Candidate| (c.dyad.date, log.tx(c.dyad.partner_tx).tx_id.as_str());
    let mut pairs = Vec::new();
    for (_, (mut treated, mut controls)) in strata {
        treated.sort_by(|a, b| order(a).cmp(&order(b)));
        controls.sort_by(|a, b| order(a).cmp(&order(b)));
        let mut used = alloc::vec![false; controls.len()];
        for t in &treated {
            let mut best: Option<(usize, f64)> = None;
            for (j, c) in controls.iter().enumerate() {
                if used[j] || !spec.caliper.admits(t.popularity, c.popularity) {
                    continue;
                }
                let dist = (t.popularity - c.popularity).abs();
                if best.is_none_or(|(_, b)| dist < b) {
                    best = Some((j, dist));
                }
            }
            if let Some((j, _)) = best {
                used[j] = true;
                pairs.push(MatchedPair {
                    item,
                    treated: t.dyad,
                    control: controls[j].dyad,
                    popularity_t: t.popularity,
                    popularity_c: controls[j].popularity,
                });
            }
        }
    }
    let unmatched_treated = n_treated - pairs.len();
    MatchedPairSet { item, popularity: spec.popularity, pairs, n_treated, n_control, unmatched_treated }
}

/// Standardized mean difference (mean_t − mean_c) / sqrt((var_t + var_c) / 2).
///
/// Zero pooled variance gives ±∞ for unequal means and 0 for equal means.
pub fn smd(treated: &[f64], control: &[f64]) -> Result<f64, MatchingError> {
    if treated.len() < 2 || control.len() < 2 {
        return Err(MatchingError::InsufficientValues { treated: treated.len(), control: control.len() });
    }
    let (mt, mc) = (crate::stats::mean(treated), crate::stats::mean(control));
    let pooled = (crate::stats::sample_variance(treated) + crate::stats::sample_variance(control)) / 2.0;
    let diff = mt - mc;
    if pooled <= 0.0 {
        return Ok(if diff == 0.0 { 0.0 } else { f64::INFINITY.copysign(diff) });
    }
    Ok(diff / sqrt(pooled))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Popularity,
    Daypart,
    Shop,
    Weekday,
    Year,
}

impl Covariate {
    pub const DEFAULT: [Covariate; 3] = [Covariate::Popularity, Covariate::Daypart, Covariate::Shop];

    fn value(self, d: &Dyad, popularity: f64) -> f64 {
        match self {
            Covariate::Popularity => popularity,
            Covariate::Daypart => f64::from(d.daypart.code()),
            Covariate::Shop => f64::from(d.shop.0),
            Covariate::Weekday => f64::from(d.date.weekday().num_days_from_monday()),
            Covariate::Year => f64::from(d.date.year()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateBalance {
    pub covariate: Covariate,
    pub smd_before: f64,
    pub smd_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub item: FocusItem,
    pub rows: Vec<CovariateBalance>,
    /// Every after-matching |SMD| is below 0.2.
    pub pass: bool,
}

pub const BALANCE_THRESHOLD: f64 = 0.2;

/// SMD of each covariate between all eligible treated and control dyads
/// (before) and between the two arms of the matched set (after).
pub fn balance_report(
    log: &TransactionLog,
    dyads: &[Dyad],
    matched: &MatchedPairSet,
    context: &ContextStats,
    covariates: &[Covariate],
) -> Result<BalanceReport, MatchingError> {
    if matched.is_empty() {
        return Err(MatchingError::NoPairs);
    }
    let arms = eligible_arms(log, dyads, matched.item, context, matched.popularity);
    let mut rows = Vec::with_capacity(covariates.len());
    for &cov in covariates {
        let before_t: Vec<f64> = arms.treated.iter().map(|c| cov.value(&c.dyad, c.popularity)).collect();
        let before_c: Vec<f64> = arms.control.iter().map(|c| cov.value(&c.dyad, c.popularity)).collect();
        let after_t: Vec<f64> = matched.pairs.iter().map(|p| cov.value(&p.treated, p.popularity_t)).collect();
        let after_c: Vec<f64> = matched.pairs.iter().map(|p| cov.value(&p.control, p.popularity_c)).collect();
        let smd_before = smd(&before_t, &before_c).unwrap_or(f64::NAN);
        let smd_after = smd(&after_t, &after_c)?;
        rows.push(CovariateBalance { covariate: cov, smd_before, smd_after });
    }
    let pass = rows.iter().all(|r| r.smd_after.abs() < BALANCE_THRESHOLD);
    Ok(BalanceReport { item: matched.item, rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AdditionKind, ItemCatalog, ItemCategory, RawRecord};
    use alloc::format;
    use alloc::string::{String, ToString};
    use alloc::vec;
    use alloc::vec::Vec;
    use crate::dyads::{extract_dyads, Queues};

    const FRUIT: FocusItem = FocusItem::Addition(AdditionKind::Fruit);

    fn catalog() -> ItemCatalog {
        let mut c = ItemCatalog::new();
        c.insert("M", ItemCategory::AnchorMeal { vegetarian: false }).unwrap();
        c.insert("F", ItemCategory::Addition(AdditionKind::Fruit)).unwrap();
        c.insert("X", ItemCategory::Other).unwrap();
        c
    }

    /// Each day: `fill` filler transactions of which `fruity` contain fruit,
    /// then a dyad partner->focal at register "q".
    struct Day<'a> {
        date: &'a str,
        partner: &'a str,
        focal: &'a str,
        partner_fruit: bool,
        fill: usize,
        fruity: usize,
    }

    fn build(days: &[Day]) -> TransactionLog {
        let mut recs = Vec::new();
        let mut line = 0;
        let mut push = |id: String, person: &str, ts: String, reg: &str, items: Vec<&str>| {
            line += 1;
            recs.push(RawRecord {
                line,
                tx_id: id,
                person_id: person.to_string(),
                timestamp: ts,
                shop_id: "s".into(),
                register_id: reg.into(),
                items: items.into_iter().map(String::from).collect(),
            });
        };
        for (di, d) in days.iter().enumerate() {
            for k in 0..d.fill {
                let items = if k < d.fruity { vec!["M", "F"] } else { vec!["M"] };
                push(format!("{di}-f{k:03}"), &format!("filler{k}"), format!("{}T12:{:02}:00", d.date, k % 60), &format!("fill{k}"), items);
            }
            let pitems = if d.partner_fruit { vec!["M", "F"] } else { vec!["M"] };
            push(format!("{di}-a"), d.partner, format!("{}T13:00:00", d.date), "q", pitems);
            push(format!("{di}-b"), d.focal, format!("{}T13:00:30", d.date), "q", vec!["M"]);
        }
        TransactionLog::from_records(recs, &catalog()).unwrap()
    }

    fn run(days: &[Day], spec: &AdjustmentSpec) -> (TransactionLog, Vec<Dyad>, MatchedPairSet) {
        let log = build(days);
        let dyads: Vec<Dyad> = extract_dyads(&log, &Queues::reconstruct(&log), 300, true)
            .into_iter()
            .filter(|d| log.tx(d.partner_tx).tx_id.ends_with("-a"))
            .collect();
        let ctx = ContextStats::compute(&log);
        let set = build_matched_pairs(&log, &dyads, FRUIT, &ctx, spec);
        (log, dyads, set)
    }

    #[test]
    fn no_treated_gives_empty_set() {
        let days = [Day { date: "2018-01-02", partner: "A", focal: "B", partner_fruit: false, fill: 10, fruity: 2, }];
        let (_, _, set) = run(&days, &AdjustmentSpec::default());
        assert!(set.is_empty());
        assert_eq!(set.n_treated, 0);
    }

    #[test]
    fn nearest_control_within_caliper() {
        // partner's own fruit counts toward popularity: cells have 100 tx + 2 dyad tx.
        // treated: 19 fruity fillers + partner = 20/102
        // control 1: 21/102 ; control 2: 30/102 (outside caliper)
        let days = [
            Day { date: "2018-01-02", partner: "A", focal: "B", partner_fruit: true, fill: 100, fruity: 19 },
            Day { date: "2018-01-03", partner: "A", focal: "B", partner_fruit: false, fill: 100, fruity: 30 },
            Day { date: "2018-01-04", partner: "A", focal: "B", partner_fruit: false, fill: 100, fruity: 21 },
        ];
        let cell = AdjustmentSpec { popularity: PopularityMode::Cell, ..AdjustmentSpec::default() };
        let (log, _, set) = run(&days, &cell);
        assert_eq!(set.len(), 1);
        let p = set.pairs[0];
        assert_eq!(log.tx(p.control.partner_tx).tx_id, "2-a");
        assert!((p.popularity_t - 20.0 / 102.0).abs() < 1e-12);
        assert!((p.popularity_c - 21.0 / 102.0).abs() < 1e-12);
        // without the dyad itself: 19/100 against 21/100 and 30/100
        let (log, _, set) = run(&days, &AdjustmentSpec::default());
        let p = set.pairs[0];
        assert_eq!(log.tx(p.control.partner_tx).tx_id, "2-a");
        assert!((p.popularity_t - 0.19).abs() < 1e-12);
        assert!((p.popularity_c - 0.21).abs() < 1e-12);
        assert!(!Caliper::Relative(0.1).admits(0.20, 0.30));
        assert!(Caliper::Relative(0.1).admits(0.20, 0.21));
        assert!(Caliper::Absolute(0.05).admits(0.20, 0.24));
        assert!(Caliper::Relative(0.1).admits(0.0, 0.0));
    }

    #[test]
    fn different_partners_never_pair() {
        let days = [
            Day { date: "2018-01-02", partner: "A", focal: "B", partner_fruit: true, fill: 20, fruity: 5 },
            Day { date: "2018-01-03", partner: "C", focal: "B", partner_fruit: false, fill: 20, fruity: 5 },
        ];
        let (_, _, set) = run(&days, &AdjustmentSpec::default());
        assert!(set.is_empty());
        assert_eq!(set.unmatched_treated, 1);
    }

    #[test]
    fn focal_identity_refines_strata() {
        let days = [
            Day { date: "2018-01-02", partner: "A", focal: "B", partner_fruit: true, fill: 20, fruity: 5 },
            Day { date: "2018-01-03", partner: "A", focal: "C", partner_fruit: false, fill: 20, fruity: 5 },
        ];
        let (_, _, loose) = run(&days, &AdjustmentSpec::default());
        assert_eq!(loose.len(), 1);
        let strict = AdjustmentSpec { match_focal_identity: true, ..AdjustmentSpec::default() };
        let (_, _, tight) = run(&days, &strict);
        assert!(tight.is_empty());
    }

    #[test]
    fn unavailable_item_excludes_dyad() {
        let days = [
            Day { date: "2018-01-02", partner: "A", focal: "B", partner_fruit: true, fill: 20, fruity: 5 },
            // nobody buys fruit this day
            Day { date: "2018-01-03", partner: "A", focal: "B", partner_fruit: false, fill: 20, fruity: 0 },
        ];
        let (_, _, set) = run(&days, &AdjustmentSpec::default());
        assert_eq!(set.n_control, 0);
        assert!(set.is_empty());
    }

    #[test]
    fn smd_values() {
        assert_eq!(smd(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        // means 1 and 0, sample variances 1 and 1
        let t = [0.0, 1.0, 2.0];
        let c = [-1.0, 0.0, 1.0];
        assert!((smd(&t, &c).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(smd(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), f64::INFINITY);
        assert_eq!(smd(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!(smd(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn balance_improves_after_matching() {
        let mut days = Vec::new();
        let dates: Vec<String> = (1..=28).map(|d| format!("2018-02-{d:02}")).collect();
        for (i, date) in dates.iter().enumerate() {
            // treated days sit on high popularity, controls spread low to high
            let treated = i % 4 == 0;
            let fruity = if treated { 30 + i % 3 } else { 5 + i };
            days.push(Day { date, partner: "A", focal: "B", partner_fruit: treated, fill: 60, fruity });
        }
        let (log, dyads, set) = run(&days, &AdjustmentSpec::default());
        assert!(set.len() >= 2, "{}", set.len());
        let ctx = ContextStats::compute(&log);
        let report = balance_report(&log, &dyads, &set, &ctx, &Covariate::DEFAULT).unwrap();
        let pop = &report.rows[0];
        assert!(pop.smd_after.abs() < pop.smd_before.abs());
        // exact-matched keys
        assert_eq!(report.rows[1].smd_after, 0.0);
        assert_eq!(report.rows[2].smd_after, 0.0);
        assert_eq!(report.pass, report.rows.iter().all(|r| r.smd_after.abs() < BALANCE_THRESHOLD));

        let empty = MatchedPairSet { item: FRUIT, popularity: PopularityMode::Cell, pairs: vec![], n_treated: 0, n_control: 0, unmatched_treated: 0 };
        assert_eq!(balance_report(&log, &dyads, &empty, &ctx, &Covariate::DEFAULT), Err(MatchingError::NoPairs));
    }

    #[test]
    fn caliper_validation() {
        assert!(AdjustmentSpec::default().validate().is_ok());
        let bad = AdjustmentSpec { caliper: Caliper::Relative(1.5), ..AdjustmentSpec::default() };
        assert_eq!(bad.validate(), Err(MatchingError::InvalidCaliper(1.5)));
    }
}
