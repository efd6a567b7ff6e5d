//! Synthetic cafeteria logs with known mimicry, homophily, coordination and
//! delay decay.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use libm::{exp, log, sqrt};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    format_timestamp, AdditionKind, BeverageKind, Daypart, Demographics, FocusItem, Gender, ItemCatalog,
    ItemCategory, PersonRecord, RawRecord, Status, TransactionLog,
};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("pair_fraction must lie in [0, 1], got {0}")]
    PairFraction(f64),
    #[error("pair ({0}, {1}) refers to a person outside the population")]
    PairOutOfRange(usize, usize),
    #[error("person {0} appears in more than one pair")]
    PersonInTwoPairs(usize),
    #[error("pair ({0}, {0}) pairs a person with themself")]
    SelfPair(usize),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// One value per focus item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerItem<T> {
    pub condiment: T,
    pub dessert: T,
    pub fruit: T,
    pub pastry: T,
    pub salad: T,
    pub soft_drink: T,
    pub soup: T,
    pub vegetarian_meal: T,
    pub tea: T,
}

impl<T: Copy> PerItem<T> {
    pub fn splat(v: T) -> Self {
        Self {
            condiment: v,
            dessert: v,
            fruit: v,
            pastry: v,
            salad: v,
            soft_drink: v,
            soup: v,
            vegetarian_meal: v,
            tea: v,
        }
    }

    pub fn get(&self, item: FocusItem) -> T {
        match item {
            FocusItem::Addition(AdditionKind::Condiment) => self.condiment,
            FocusItem::Addition(AdditionKind::Dessert) => self.dessert,
            FocusItem::Addition(AdditionKind::Fruit) => self.fruit,
            FocusItem::Addition(AdditionKind::Pastry) => self.pastry,
            FocusItem::Addition(AdditionKind::Salad) => self.salad,
            FocusItem::Addition(AdditionKind::SoftDrink) => self.soft_drink,
            FocusItem::Addition(AdditionKind::Soup) => self.soup,
            FocusItem::VegetarianMeal => self.vegetarian_meal,
            FocusItem::Tea => self.tea,
        }
    }

    pub fn set(&mut self, item: FocusItem, v: T) {
        let slot = match item {
            FocusItem::Addition(AdditionKind::Condiment) => &mut self.condiment,
            FocusItem::Addition(AdditionKind::Dessert) => &mut self.dessert,
            FocusItem::Addition(AdditionKind::Fruit) => &mut self.fruit,
            FocusItem::Addition(AdditionKind::Pastry) => &mut self.pastry,
            FocusItem::Addition(AdditionKind::Salad) => &mut self.salad,
            FocusItem::Addition(AdditionKind::SoftDrink) => &mut self.soft_drink,
            FocusItem::Addition(AdditionKind::Soup) => &mut self.soup,
            FocusItem::VegetarianMeal => &mut self.vegetarian_meal,
            FocusItem::Tea => &mut self.tea,
        };
        *slot = v;
    }

    pub fn by_bit(&self) -> [T; FocusItem::COUNT] {
        let mut out = [self.condiment; FocusItem::COUNT];
        for item in FocusItem::all() {
            out[item.bit()] = self.get(item);
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatusMix {
    pub student: f64,
    pub staff: f64,
    pub other: f64,
}

impl Default for StatusMix {
    fn default() -> Self {
        Self { student: 0.70, staff: 0.27, other: 0.03 }
    }
}

/// Per-status visiting habits: daypart preference and a visit-rate
/// multiplier for each calendar month (January first).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub dayparts: [f64; 3],
    pub months: [f64; 12],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StatusSignatures {
    pub student: Signature,
    pub staff: Signature,
    pub other: Signature,
    /// Each person's daypart weights are scaled by a factor drawn from [1 - jitter, 1 + jitter].
    pub jitter: f64,
}

impl Default for StatusSignatures {
    fn default() -> Self {
        let mut student = [1.0; 12];
        student[1] = 0.6;
        student[6] = 0.15;
        student[7] = 0.15;
        let mut staff = [1.0; 12];
        staff[7] = 0.5;
        Self {
            student: Signature { dayparts: [0.15, 0.60, 0.25], months: student },
            staff: Signature { dayparts: [0.45, 0.35, 0.20], months: staff },
            other: Signature { dayparts: [0.30, 0.40, 0.30], months: [1.0; 12] },
            jitter: 0.3,
        }
    }
}

impl StatusSignatures {
    pub fn of(&self, s: Status) -> &Signature {
        match s {
            Status::Student => &self.student,
            Status::Staff => &self.staff,
            Status::Other => &self.other,
        }
    }

    fn month_factor(&self, s: Status, month: u32) -> f64 {
        self.of(s).months[(month as usize - 1) % 12]
    }
}

/// Addition deltas by the focal person's status; replaces the per-item
/// addition deltas when set.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatusDeltas {
    pub student: f64,
    pub staff: f64,
    pub other: f64,
}

impl StatusDeltas {
    fn get(&self, s: Status) -> f64 {
        match s {
            Status::Student => self.student,
            Status::Staff => self.staff,
            Status::Other => self.other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SocialSpec {
    /// Disjoint random pairs covering this fraction of persons.
    Random { pair_fraction: f64 },
    /// Explicit disjoint pairs of person indices.
    Pairs { pairs: Vec<(usize, usize)> },
}

impl Default for SocialSpec {
    fn default() -> Self {
        SocialSpec::Random { pair_fraction: 0.8 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinationMode {
    /// Focal members react to their partner's basket.
    #[default]
    None,
    /// The pair settles a joint basket before queueing; no reaction in line.
    PreAgreement,
    /// One member leads and usually queues first; only the other reacts.
    Asymmetric,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GapSpec {
    LogNormal { median_s: f64, sigma: f64, cap_s: f64 },
    Uniform { lo_s: f64, hi_s: f64 },
}

impl Default for GapSpec {
    fn default() -> Self {
        GapSpec::LogNormal { median_s: 40.0, sigma: 0.8, cap_s: 300.0 }
    }
}

impl GapSpec {
    fn sample(&self, rng: &mut seed::Rng) -> i64 {
        let g = match *self {
            GapSpec::LogNormal { median_s, sigma, cap_s } => {
                let z: f64 = rng.sample(StandardNormal);
                (median_s * exp(sigma * z)).min(cap_s)
            }
            GapSpec::Uniform { lo_s, hi_s } => rng.random_range(lo_s..=hi_s),
        };
        (libm::round(g) as i64).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub n_persons: usize,
    pub n_shops: usize,
    pub n_registers_per_shop: usize,
    /// Simulated (week)days.
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub weekdays_only: bool,
    pub status_mix: StatusMix,
    pub signatures: StatusSignatures,
    /// Base purchase probability per item for breakfast, lunch and afternoon.
    pub base_rates: PerItem<[f64; 3]>,
    /// Spread of personal propensities on the logit scale.
    pub propensity_sd: f64,
    pub social: SocialSpec,
    pub pair_visit_rate: f64,
    pub solo_visit_rate: f64,
    /// Mimicry effect per item; the vegetarian meal and tea entries act on the anchor.
    pub delta: PerItem<f64>,
    pub status_delta: Option<StatusDeltas>,
    /// Decay time constant of the effect with queue delay.
    pub decay_tau_s: Option<f64>,
    /// Correlation of pair members' latent propensities.
    pub homophily: f64,
    pub coordination: CoordinationMode,
    /// Probability that the leader queues first in asymmetric mode.
    pub leader_first: f64,
    /// Probability that an addition is unavailable in a shop and daypart on a day.
    pub availability_dropout: f64,
    /// Day-level popularity shock on the logit scale.
    pub popularity_shock_sd: f64,
    pub no_anchor_rate: f64,
    pub gap: GapSpec,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        let mut base_rates = PerItem::splat([0.0; 3]);
        base_rates.condiment = [0.05, 0.25, 0.05];
        base_rates.dessert = [0.05, 0.20, 0.15];
        base_rates.fruit = [0.10, 0.15, 0.10];
        base_rates.pastry = [0.30, 0.05, 0.20];
        base_rates.salad = [0.0, 0.20, 0.02];
        base_rates.soft_drink = [0.05, 0.20, 0.15];
        base_rates.soup = [0.0, 0.15, 0.02];
        base_rates.vegetarian_meal = [0.0, 0.30, 0.0];
        base_rates.tea = [0.30, 0.0, 0.30];
        Self {
            n_persons: 2000,
            n_shops: 2,
            n_registers_per_shop: 2,
            n_days: 250,
            start_date: NaiveDate::from_ymd_opt(2019, 9, 2).unwrap(),
            weekdays_only: true,
            status_mix: StatusMix::default(),
            signatures: StatusSignatures::default(),
            base_rates,
            propensity_sd: 0.8,
            social: SocialSpec::default(),
            pair_visit_rate: 0.3,
            solo_visit_rate: 0.25,
            delta: PerItem::splat(0.0),
            status_delta: None,
            decay_tau_s: None,
            homophily: 0.0,
            coordination: CoordinationMode::None,
            leader_first: 0.7,
            availability_dropout: 0.02,
            popularity_shock_sd: 0.2,
            no_anchor_rate: 0.03,
            gap: GapSpec::default(),
            seed: 0,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Invalid(m.to_string()));
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if self.n_shops == 0 || self.n_registers_per_shop == 0 {
            return bad("need at least one shop and register");
        }
        if !prob(self.pair_visit_rate) || !prob(self.solo_visit_rate) {
            return bad("visit rates must be probabilities");
        }
        if !prob(self.availability_dropout) || !prob(self.no_anchor_rate) || !prob(self.leader_first) {
            return bad("dropout, no-anchor and leader rates must be probabilities");
        }
        if !(-1.0..=1.0).contains(&self.homophily) {
            return bad("homophily must lie in [-1, 1]");
        }
        if FocusItem::all().any(|i| !(-1.0..=1.0).contains(&self.delta.get(i))) {
            return bad("deltas must lie in [-1, 1]");
        }
        if FocusItem::all().any(|i| !self.base_rates.get(i).iter().all(|&p| prob(p))) {
            return bad("base rates must be probabilities");
        }
        if self.decay_tau_s.is_some_and(|t| !(t > 0.0)) {
            return bad("decay_tau_s must be positive");
        }
        if self.propensity_sd < 0.0 || self.popularity_shock_sd < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        let m = self.status_mix;
        if m.student < 0.0 || m.staff < 0.0 || m.other < 0.0 || m.student + m.staff + m.other <= 0.0 {
            return bad("status mix must be non-negative with a positive sum");
        }
        let sig = &self.signatures;
        if !(0.0..1.0).contains(&sig.jitter)
            || [sig.student, sig.staff, sig.other].iter().any(|g| {
                g.dayparts.iter().chain(&g.months).any(|&x| !(x >= 0.0))
                    || g.dayparts.iter().sum::<f64>() <= 0.0
            })
        {
            return bad("signatures need non-negative weights, a positive daypart sum, and jitter in [0, 1)");
        }
        match self.gap {
            GapSpec::LogNormal { median_s, sigma, cap_s } if median_s > 0.0 && sigma >= 0.0 && cap_s >= 1.0 => {}
            GapSpec::Uniform { lo_s, hi_s } if lo_s >= 0.0 && hi_s >= lo_s => {}
            _ => return bad("invalid gap distribution"),
        }
        Ok(())
    }

    /// Simulated dates in order.
    pub fn calendar(&self) -> Vec<NaiveDate> {
        let mut out = Vec::with_capacity(self.n_days);
        let mut d = self.start_date;
        while out.len() < self.n_days {
            if !self.weekdays_only || !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
                out.push(d);
            }
            d = d.succ_opt().expect("date in range");
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Population

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimPerson {
    pub name: String,
    pub status: Status,
    pub gender: Gender,
    pub birth_year: i32,
    pub home_shop: usize,
    /// Preference for breakfast, lunch and afternoon visits.
    pub daypart_weights: [f64; 3],
    /// Standard-normal latent propensity per item (by item bit).
    pub latent: [f64; FocusItem::COUNT],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub persons: Vec<SimPerson>,
    /// (leader, follower) index pairs.
    pub pairs: Vec<(usize, usize)>,
}

impl Population {
    pub fn demographics(&self) -> Demographics {
        let mut d = Demographics::new();
        for p in &self.persons {
            d.insert(PersonRecord {
                person_id: p.name.clone(),
                gender: Some(p.gender),
                status: Some(p.status),
                birth_year: Some(p.birth_year),
            });
        }
        d
    }

    /// Pearson correlation of pair members' latent propensity for `item`.
    pub fn within_pair_correlation(&self, item: FocusItem) -> f64 {
        let a: Vec<f64> = self.pairs.iter().map(|&(l, _)| self.persons[l].latent[item.bit()]).collect();
        let b: Vec<f64> = self.pairs.iter().map(|&(_, f)| self.persons[f].latent[item.bit()]).collect();
        crate::stats::correlation(&a, &b)
    }
}

pub fn generate_population(config: &SimulationConfig) -> Result<Population, SimError> {
    config.validate()?;
    let n = config.n_persons;
    let mut rng = seed::rng(seed::derive(config.seed, "population"));
    let mix = config.status_mix;
    let total = mix.student + mix.staff + mix.other;
    let mut persons = Vec::with_capacity(n);
    for i in 0..n {
        let u: f64 = rng.random::<f64>() * total;
        let status = if u < mix.student {
            Status::Student
        } else if u < mix.student + mix.staff {
            Status::Staff
        } else {
            Status::Other
        };
        let gender = if rng.random_bool(0.5) { Gender::Female } else { Gender::Male };
        let birth_year = match status {
            Status::Student => rng.random_range(1996..=2003),
            Status::Staff => rng.random_range(1958..=1994),
            Status::Other => rng.random_range(1950..=2000),
        };
        let mut w = config.signatures.of(status).dayparts;
        let j = config.signatures.jitter;
        for x in w.iter_mut() {
            *x *= if j > 0.0 { rng.random_range(1.0 - j..1.0 + j) } else { 1.0 };
        }
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let mut latent = [0.0; FocusItem::COUNT];
        for z in latent.iter_mut() {
            *z = rng.sample(StandardNormal);
        }
        persons.push(SimPerson {
            name: format!("p{i:05}"),
            status,
            gender,
            birth_year,
            home_shop: rng.random_range(0..config.n_shops),
            daypart_weights: w,
            latent,
        });
    }

    let pairs = match &config.social {
        SocialSpec::Random { pair_fraction } => {
            if !(0.0..=1.0).contains(pair_fraction) {
                return Err(SimError::PairFraction(*pair_fraction));
            }
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let n_pairs = (libm::floor(pair_fraction * n as f64) as usize) / 2;
            (0..n_pairs).map(|k| (order[2 * k], order[2 * k + 1])).collect()
        }
        SocialSpec::Pairs { pairs } => {
            let mut seen = vec![false; n];
            for &(a, b) in pairs {
                if a >= n || b >= n {
                    return Err(SimError::PairOutOfRange(a, b));
                }
                if a == b {
                    return Err(SimError::SelfPair(a));
                }
                for p in [a, b] {
                    if seen[p] {
                        return Err(SimError::PersonInTwoPairs(p));
                    }
                    seen[p] = true;
                }
            }
            pairs.clone()
        }
    };

    // homophily: the follower's latent propensities lean on the leader's
    let h = config.homophily;
    let rest = sqrt(1.0 - h * h);
    for &(l, f) in &pairs {
        for k in 0..FocusItem::COUNT {
            let (zl, zf) = (persons[l].latent[k], persons[f].latent[k]);
            persons[f].latent[k] = h * zl + rest * zf;
        }
    }
    Ok(Population { persons, pairs })
}

// ---------------------------------------------------------------------------
// Catalog

pub const MEAL: &str = "meal";
pub const MEAL_VEG: &str = "meal_veg";
pub const COFFEE: &str = "coffee";
pub const TEA: &str = "tea";
pub const WATER: &str = "water";

pub fn catalog() -> ItemCatalog {
    let mut c = ItemCatalog::new();
    let fixed = [
        (MEAL, ItemCategory::AnchorMeal { vegetarian: false }),
        (MEAL_VEG, ItemCategory::AnchorMeal { vegetarian: true }),
        (COFFEE, ItemCategory::AnchorBeverage(BeverageKind::Coffee)),
        (TEA, ItemCategory::AnchorBeverage(BeverageKind::Tea)),
        (WATER, ItemCategory::Other),
    ];
    for (code, cat) in fixed {
        c.insert(code, cat).expect("distinct codes");
    }
    for a in AdditionKind::ALL {
        c.insert(a.name(), ItemCategory::Addition(a)).expect("distinct codes");
    }
    c
}

// ---------------------------------------------------------------------------
// Ground truth

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusTruth {
    pub status: Status,
    pub expected_rd: Option<f64>,
    pub n_events: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemTruth {
    pub item: String,
    pub delta: f64,
    /// Mean realized change in the focal's purchase probability over pair
    /// visits where the partner bought the item (after clipping and decay).
    pub expected_rd: Option<f64>,
    pub n_events: u64,
    pub by_focal_status: Vec<StatusTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub coordination: CoordinationMode,
    pub decay_tau_s: Option<f64>,
    pub homophily: f64,
    pub items: Vec<ItemTruth>,
}

impl GroundTruth {
    pub fn item(&self, item: FocusItem) -> Option<&ItemTruth> {
        self.items.iter().find(|t| t.item == item.name())
    }

    pub fn expected_rd(&self, item: FocusItem) -> Option<f64> {
        self.item(item).and_then(|t| t.expected_rd)
    }
}

/// Additive effect sums; merged across days in day order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TruthAccumulator {
    sum: [[f64; 3]; FocusItem::COUNT],
    n: [[u64; 3]; FocusItem::COUNT],
}

impl TruthAccumulator {
    fn add(&mut self, item: usize, status: Status, effect: f64) {
        self.sum[item][status as usize] += effect;
        self.n[item][status as usize] += 1;
    }

    pub fn merge(&mut self, other: &TruthAccumulator) {
        for i in 0..FocusItem::COUNT {
            for s in 0..3 {
                self.sum[i][s] += other.sum[i][s];
                self.n[i][s] += other.n[i][s];
            }
        }
    }

    pub fn finish(&self, config: &SimulationConfig) -> GroundTruth {
        let statuses = [Status::Student, Status::Staff, Status::Other];
        let items = FocusItem::all()
            .map(|item| {
                let b = item.bit();
                let n: u64 = self.n[b].iter().sum();
                let sum: f64 = self.sum[b].iter().sum();
                ItemTruth {
                    item: item.name().to_string(),
                    delta: config.delta.get(item),
                    expected_rd: (n > 0).then(|| sum / n as f64),
                    n_events: n,
                    by_focal_status: statuses
                        .iter()
                        .map(|&s| StatusTruth {
                            status: s,
                            expected_rd: (self.n[b][s as usize] > 0)
                                .then(|| self.sum[b][s as usize] / self.n[b][s as usize] as f64),
                            n_events: self.n[b][s as usize],
                        })
                        .collect(),
                }
            })
            .collect();
        GroundTruth {
            coordination: config.coordination,
            decay_tau_s: config.decay_tau_s,
            homophily: config.homophily,
            items,
        }
    }
}

// ---------------------------------------------------------------------------
// Days

fn logit(p: f64) -> f64 {
    log(p / (1.0 - p))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

fn daypart_index(d: Daypart) -> usize {
    match d {
        Daypart::Breakfast => 0,
        Daypart::Lunch => 1,
        _ => 2,
    }
}

/// Conditions shared by everyone in one shop and daypart on one day.
struct Cell {
    available: [bool; FocusItem::COUNT],
    shock: [f64; FocusItem::COUNT],
}

struct Visit {
    shop: usize,
    register: usize,
    daypart: Daypart,
    start_s: u32,
    /// Person index and basket, in queue order.
    members: Vec<(usize, Vec<&'static str>)>,
    gap_s: i64,
}

pub struct DayOutput {
    pub records: Vec<RawRecord>,
    pub truth: TruthAccumulator,
    /// Visits that did not fit in their daypart window.
    pub dropped_visits: usize,
}

struct DaySim<'a> {
    pop: &'a Population,
    config: &'a SimulationConfig,
    base: [[f64; 3]; FocusItem::COUNT],
    delta: [f64; FocusItem::COUNT],
    rng: seed::Rng,
    cells: Vec<Cell>,
    truth: TruthAccumulator,
}

const STUDIED: [Daypart; 3] = [Daypart::Breakfast, Daypart::Lunch, Daypart::Afternoon];

impl DaySim<'_> {
    fn cell(&self, shop: usize, daypart: Daypart) -> &Cell {
        &self.cells[shop * 3 + daypart_index(daypart)]
    }

    fn prob(&self, person: usize, item: usize, shop: usize, daypart: Daypart) -> f64 {
        let base = self.base[item][daypart_index(daypart)];
        let cell = self.cell(shop, daypart);
        if base <= 0.0 || !cell.available[item] {
            return 0.0;
        }
        if base >= 1.0 {
            return 1.0;
        }
        let z = self.pop.persons[person].latent[item];
        sigmoid(logit(base) + self.config.propensity_sd * z + cell.shock[item])
    }

    fn effect_delta(&self, focal: usize, item: usize) -> f64 {
        let is_addition = item < AdditionKind::ALL.len();
        match (is_addition, self.config.status_delta) {
            (true, Some(sd)) => sd.get(self.pop.persons[focal].status),
            _ => self.delta[item],
        }
    }

    fn basket(&mut self, bought: &[bool; FocusItem::COUNT], daypart: Daypart) -> Vec<&'static str> {
        let mut items = Vec::new();
        if !self.rng.random_bool(self.config.no_anchor_rate) {
            match daypart {
                Daypart::Lunch => items.push(if bought[FocusItem::VegetarianMeal.bit()] { MEAL_VEG } else { MEAL }),
                _ => items.push(if bought[FocusItem::Tea.bit()] { TEA } else { COFFEE }),
            }
        }
        for a in AdditionKind::ALL {
            if bought[a as usize] {
                items.push(a.name());
            }
        }
        if self.rng.random_bool(0.1) {
            items.push(WATER);
        }
        if items.is_empty() {
            items.push(WATER);
        }
        items
    }

    fn draw(&mut self, person: usize, shop: usize, daypart: Daypart) -> [bool; FocusItem::COUNT] {
        let mut bought = [false; FocusItem::COUNT];
        for (k, b) in bought.iter_mut().enumerate() {
            let p = self.prob(person, k, shop, daypart);
            *b = self.rng.random_bool(p);
        }
        bought
    }

    fn pair_visit(
        &mut self,
        first: usize,
        second: usize,
        second_follows: bool,
        shop: usize,
        daypart: Daypart,
        gap_s: i64,
    ) -> [[bool; FocusItem::COUNT]; 2] {
        match self.config.coordination {
            CoordinationMode::PreAgreement => {
                let mut out = [[false; FocusItem::COUNT]; 2];
                for k in 0..FocusItem::COUNT {
                    let q = 0.5 * (self.prob(first, k, shop, daypart) + self.prob(second, k, shop, daypart));
                    let joint = self.rng.random_bool(q);
                    let follow = if joint { 0.85 } else { 0.05 * q };
                    for o in out.iter_mut() {
                        o[k] = self.rng.random_bool(follow);
                    }
                }
                out
            }
            mode => {
                let a = self.draw(first, shop, daypart);
                // in asymmetric mode only the follower reacts
                let reacts = mode != CoordinationMode::Asymmetric || second_follows;
                let decay = self.config.decay_tau_s.map_or(1.0, |tau| exp(-(gap_s as f64) / tau));
                let status = self.pop.persons[second].status;
                let mut b = [false; FocusItem::COUNT];
                for k in 0..FocusItem::COUNT {
                    let p = self.prob(second, k, shop, daypart);
                    let mut q = p;
                    if a[k] && p > 0.0 {
                        let d = if reacts { self.effect_delta(second, k) } else { 0.0 };
                        q = (p + d * decay).clamp(0.0, 1.0);
                        self.truth.add(k, status, q - p);
                    }
                    b[k] = self.rng.random_bool(q);
                }
                [a, b]
            }
        }
    }
}

fn pick_daypart(rng: &mut seed::Rng, w: &[f64; 3]) -> Daypart {
    let u: f64 = rng.random();
    if u < w[0] {
        Daypart::Breakfast
    } else if u < w[0] + w[1] {
        Daypart::Lunch
    } else {
        Daypart::Afternoon
    }
}

/// Simulates day `day` (an index into the calendar) from its own seed stream.
pub fn simulate_day(pop: &Population, config: &SimulationConfig, date: NaiveDate, day: usize) -> DayOutput {
    let rng = seed::stream(seed::derive(config.seed, "day"), day as u64);
    let base = config.base_rates.by_bit();
    let mut sim = DaySim {
        pop,
        config,
        base,
        delta: config.delta.by_bit(),
        rng,
        cells: Vec::new(),
        truth: TruthAccumulator::default(),
    };
    for _shop in 0..config.n_shops {
        for _dp in STUDIED {
            let mut cell = Cell { available: [true; FocusItem::COUNT], shock: [0.0; FocusItem::COUNT] };
            for k in 0..FocusItem::COUNT {
                let z: f64 = sim.rng.sample(StandardNormal);
                cell.shock[k] = config.popularity_shock_sd * z;
                if k < AdditionKind::ALL.len() {
                    cell.available[k] = !sim.rng.random_bool(config.availability_dropout);
                }
            }
            sim.cells.push(cell);
        }
    }

    let month = date.month();
    let mut visits: Vec<Visit> = Vec::new();
    let mut in_pair = vec![false; pop.persons.len()];
    let leader_first = match config.coordination {
        CoordinationMode::Asymmetric => config.leader_first,
        _ => 0.5,
    };
    for &(l, f) in &pop.pairs {
        in_pair[l] = true;
        in_pair[f] = true;
        let leader = &pop.persons[l];
        let rate = config.pair_visit_rate * config.signatures.month_factor(leader.status, month);
        if !sim.rng.random_bool(rate.min(1.0)) {
            continue;
        }
        let daypart = pick_daypart(&mut sim.rng, &leader.daypart_weights);
        let (first, second) = if sim.rng.random_bool(leader_first) { (l, f) } else { (f, l) };
        let shop = leader.home_shop;
        let register = sim.rng.random_range(0..config.n_registers_per_shop);
        let gap_s = config.gap.sample(&mut sim.rng);
        let [a, b] = sim.pair_visit(first, second, second == f, shop, daypart, gap_s);
        let ba = sim.basket(&a, daypart);
        let bb = sim.basket(&b, daypart);
        visits.push(Visit { shop, register, daypart, start_s: 0, members: vec![(first, ba), (second, bb)], gap_s });
    }
    for (i, p) in pop.persons.iter().enumerate() {
        let rate = config.solo_visit_rate * config.signatures.month_factor(p.status, month) * if in_pair[i] { 0.5 } else { 1.0 };
        if !sim.rng.random_bool(rate.min(1.0)) {
            continue;
        }
        let daypart = pick_daypart(&mut sim.rng, &p.daypart_weights);
        let shop = if config.n_shops > 1 && sim.rng.random_bool(0.1) {
            sim.rng.random_range(0..config.n_shops)
        } else {
            p.home_shop
        };
        let register = sim.rng.random_range(0..config.n_registers_per_shop);
        let bought = sim.draw(i, shop, daypart);
        let basket = sim.basket(&bought, daypart);
        visits.push(Visit { shop, register, daypart, start_s: 0, members: vec![(i, basket)], gap_s: 0 });
    }

    // arrival times: uniform within the window, then serialized per register
    for v in visits.iter_mut() {
        let (lo, hi) = v.daypart.window_secs().expect("studied daypart");
        v.start_s = sim.rng.random_range(lo..hi - 1);
    }
    visits.sort_by_key(|v| (v.shop, v.register, daypart_index(v.daypart), v.start_s));
    let midnight = NaiveDateTime::new(date, NaiveTime::MIN);
    let mut records = Vec::new();
    let mut dropped = 0;
    let mut prev: Option<(usize, usize, Daypart, i64)> = None;
    let mut seq = 0usize;
    for v in &visits {
        let key = (v.shop, v.register, v.daypart);
        let mut t = i64::from(v.start_s);
        if let Some((s, r, d, end)) = prev {
            if (s, r, d) == key {
                t = t.max(end + 1);
            }
        }
        let end = t + v.gap_s;
        let (_, hi) = v.daypart.window_secs().expect("studied daypart");
        if end >= i64::from(hi) {
            dropped += 1;
            continue;
        }
        prev = Some((v.shop, v.register, v.daypart, end));
        for (k, (person, basket)) in v.members.iter().enumerate() {
            let ts = midnight + Duration::seconds(if k == 0 { t } else { end });
            seq += 1;
            records.push(RawRecord {
                line: 0,
                tx_id: format!("{}-{seq:05}", date.format("%Y%m%d")),
                person_id: pop.persons[*person].name.clone(),
                timestamp: format_timestamp(&ts),
                shop_id: format!("shop{}", v.shop + 1),
                register_id: format!("reg{}", v.register + 1),
                items: basket.iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    records.sort_by(|a, b| (&a.timestamp, &a.shop_id, &a.register_id, &a.tx_id).cmp(&(&b.timestamp, &b.shop_id, &b.register_id, &b.tx_id)));
    DayOutput { records, truth: sim.truth, dropped_visits: dropped }
}

#[derive(Clone, Debug)]
pub struct SimOutput {
    pub population: Population,
    pub records: Vec<RawRecord>,
    pub truth: GroundTruth,
    pub dropped_visits: usize,
}

impl SimOutput {
    pub fn log(&self) -> TransactionLog {
        TransactionLog::from_records(self.records.iter().cloned(), &catalog()).expect("simulated ids are unique")
    }

    pub fn demographics(&self) -> Demographics {
        self.population.demographics()
    }
}

/// Joins day outputs (in calendar order) into one log.
pub fn assemble(config: &SimulationConfig, population: Population, days: Vec<DayOutput>) -> SimOutput {
    let mut truth = TruthAccumulator::default();
    let mut records = Vec::new();
    let mut dropped = 0;
    for d in days {
        truth.merge(&d.truth);
        dropped += d.dropped_visits;
        records.extend(d.records);
    }
    for (i, r) in records.iter_mut().enumerate() {
        r.line = i + 1;
    }
    SimOutput { population, records, truth: truth.finish(config), dropped_visits: dropped }
}

pub fn simulate_log(population: &Population, config: &SimulationConfig) -> SimOutput {
    let days = config
        .calendar()
        .into_iter()
        .enumerate()
        .map(|(i, date)| simulate_day(population, config, date, i))
        .collect();
    assemble(config, population.clone(), days)
}

pub fn simulate(config: &SimulationConfig) -> Result<SimOutput, SimError> {
    let pop = generate_population(config)?;
    Ok(simulate_log(&pop, config))
}

/// Named per-item values, e.g. for reports.
pub fn per_item_map<T: Copy>(v: &PerItem<T>) -> BTreeMap<&'static str, T> {
    FocusItem::all().map(|i| (i.name(), v.get(i))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig { n_persons: 120, n_days: 20, seed: 9, ..Default::default() }
    }

    #[test]
    fn homophily_correlation() {
        for (h, target) in [(0.0, 0.0), (0.8, 0.8)] {
            let cfg = SimulationConfig {
                n_persons: 2000,
                social: SocialSpec::Random { pair_fraction: 1.0 },
                homophily: h,
                seed: 17,
                ..Default::default()
            };
            let pop = generate_population(&cfg).unwrap();
            assert_eq!(pop.pairs.len(), 1000);
            let r = pop.within_pair_correlation(FocusItem::Addition(AdditionKind::Dessert));
            assert!((r - target).abs() < 0.05, "h={h} r={r}");
        }
    }

    #[test]
    fn degenerate_and_infeasible_populations() {
        let one = generate_population(&SimulationConfig { n_persons: 1, ..Default::default() }).unwrap();
        assert!(one.pairs.is_empty());
        let cfg = |pairs| SimulationConfig { n_persons: 4, social: SocialSpec::Pairs { pairs }, ..Default::default() };
        assert_eq!(generate_population(&cfg(vec![(0, 1), (1, 2)])).unwrap_err(), SimError::PersonInTwoPairs(1));
        assert_eq!(generate_population(&cfg(vec![(0, 9)])).unwrap_err(), SimError::PairOutOfRange(0, 9));
        assert_eq!(generate_population(&cfg(vec![(2, 2)])).unwrap_err(), SimError::SelfPair(2));
        assert!(generate_population(&SimulationConfig {
            social: SocialSpec::Random { pair_fraction: 1.5 },
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn output_is_a_valid_deterministic_log() {
        let a = simulate(&small()).unwrap();
        let b = simulate(&small()).unwrap();
        assert_eq!(a.records, b.records);
        let log = a.log();
        assert_eq!(log.len(), a.records.len());
        assert!(log.rejected().is_empty());
        assert_eq!(log.warnings().count(), 0);
        assert!(log.transactions().iter().all(|t| t.daypart().is_studied()));
        assert_ne!(simulate(&SimulationConfig { seed: 10, ..small() }).unwrap().records, a.records);
    }

    #[test]
    fn pair_visits_are_adjacent_within_cap() {
        let out = simulate(&small()).unwrap();
        let log = out.log();
        let queues = crate::dyads::Queues::reconstruct(&log);
        let dyads = crate::dyads::extract_dyads(&log, &queues, 300, false);
        let pairs: alloc::collections::BTreeSet<(String, String)> = out
            .population
            .pairs
            .iter()
            .map(|&(a, b)| {
                let (x, y) = (out.population.persons[a].name.clone(), out.population.persons[b].name.clone());
                if x < y { (x, y) } else { (y, x) }
            })
            .collect();
        let social = dyads
            .iter()
            .filter(|d| {
                let (x, y) = (log.person_name(d.partner).to_string(), log.person_name(d.focal).to_string());
                pairs.contains(&if x < y { (x, y) } else { (y, x) })
            })
            .count();
        assert!(social > 100, "{social}");
    }

    #[test]
    fn ground_truth_is_delta_without_clipping() {
        let mut delta = PerItem::splat(0.0);
        delta.dessert = 0.1;
        let cfg = SimulationConfig { delta, propensity_sd: 0.0, popularity_shock_sd: 0.0, ..small() };
        let out = simulate(&cfg).unwrap();
        let t = out.truth.expected_rd(FocusItem::Addition(AdditionKind::Dessert)).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        assert_eq!(out.truth.expected_rd(FocusItem::Addition(AdditionKind::Fruit)), Some(0.0));
    }

    #[test]
    fn calendar_skips_weekends() {
        let cal = SimulationConfig { n_days: 6, ..Default::default() }.calendar();
        assert_eq!(cal.len(), 6);
        assert_eq!(cal[5], NaiveDate::from_ymd_opt(2019, 9, 9).unwrap());
    }
}
