//! Queue reconstruction and partner→focal dyad extraction.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::context::CellKey;
use crate::model::{AdditionKind, Daypart, FocusItem, PersonId, PersonTable, RegisterId, ShopId, TransactionLog, TxIndex};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DyadError {
    #[error("neither person of the pair appears in any dyad")]
    UndefinedPair,
    #[error("no dyad has the attribute known for both persons")]
    EmptyMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct QueueKey {
    pub shop: ShopId,
    pub register: RegisterId,
    pub date: NaiveDate,
}

/// Per-register, per-day transaction sequences in service order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Queues {
    queues: BTreeMap<QueueKey, Vec<TxIndex>>,
}

impl Queues {
    /// Groups by (shop, register, date); ties in timestamp are broken by tx_id.
    pub fn reconstruct(log: &TransactionLog) -> Self {
        let mut queues: BTreeMap<QueueKey, Vec<TxIndex>> = BTreeMap::new();
        for (i, t) in log.transactions().iter().enumerate() {
            queues
                .entry(QueueKey { shop: t.shop, register: t.register, date: t.date() })
                .or_default()
                .push(i);
        }
        for seq in queues.values_mut() {
            seq.sort_by(|&a, &b| {
                let (ta, tb) = (log.tx(a), log.tx(b));
                (ta.timestamp, &ta.tx_id).cmp(&(tb.timestamp, &tb.tx_id))
            });
        }
        Self { queues }
    }

    pub fn len(&self) -> usize {
        self.queues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queues.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueueKey, &[TxIndex])> {
        self.queues.iter().map(|(k, v)| (k, v.as_slice()))
    }

    pub fn get(&self, key: &QueueKey) -> Option<&[TxIndex]> {
        self.queues.get(key).map(Vec::as_slice)
    }
}

/// Two consecutive transactions at one register: partner first, focal second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Dyad {
    pub partner_tx: TxIndex,
    pub focal_tx: TxIndex,
    pub partner: PersonId,
    pub focal: PersonId,
    /// Seconds between the two transactions. Negative only for randomized baselines.
    pub delay_s: i64,
    pub shop: ShopId,
    pub register: RegisterId,
    pub date: NaiveDate,
    pub daypart: Daypart,
}

impl Dyad {
    /// Rebuilds a dyad from its two transactions; context comes from the partner's.
    pub fn between(log: &TransactionLog, partner_tx: TxIndex, focal_tx: TxIndex) -> Self {
        let (p, f) = (log.tx(partner_tx), log.tx(focal_tx));
        Dyad {
            partner_tx,
            focal_tx,
            partner: p.person,
            focal: f.person,
            delay_s: (f.timestamp - p.timestamp).num_seconds(),
            shop: p.shop,
            register: p.register,
            date: p.date(),
            daypart: p.daypart(),
        }
    }

    pub fn cell(&self) -> CellKey {
        CellKey { shop: self.shop, date: self.date, daypart: self.daypart }
    }

    pub fn pair(&self) -> PairKey {
        PairKey::new(self.partner, self.focal)
    }

    /// Both transactions carry the daypart anchor.
    pub fn anchored(&self, log: &TransactionLog) -> bool {
        log.tx(self.partner_tx).profile.anchor(self.daypart).is_some()
            && log.tx(self.focal_tx).profile.anchor(self.daypart).is_some()
    }

    pub fn partner_has(&self, log: &TransactionLog, item: FocusItem) -> bool {
        log.tx(self.partner_tx).profile.contains(item, self.daypart)
    }

    pub fn focal_has(&self, log: &TransactionLog, item: FocusItem) -> bool {
        log.tx(self.focal_tx).profile.contains(item, self.daypart)
    }
}

pub type DyadSet = Vec<Dyad>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DyadParams {
    pub max_gap_s: i64,
    pub require_anchor: bool,
    pub min_pair_count: usize,
    /// Apply the pair-frequency filter before the anchor requirement.
    pub frequency_before_anchor: bool,
}

impl Default for DyadParams {
    fn default() -> Self {
        Self { max_gap_s: 300, require_anchor: true, min_pair_count: 10, frequency_before_anchor: false }
    }
}

/// Every consecutive pair of transactions by different persons within
/// `max_gap_s`, in the same studied daypart. Dyads may overlap: a middle
/// transaction can be focal in one dyad and partner in the next.
pub fn extract_dyads(log: &TransactionLog, queues: &Queues, max_gap_s: i64, require_anchor: bool) -> DyadSet {
    let mut out = Vec::new();
    for (key, seq) in queues.iter() {
        for w in seq.windows(2) {
            let (p, f) = (log.tx(w[0]), log.tx(w[1]));
            if p.person == f.person {
                continue;
            }
            let delay_s = (f.timestamp - p.timestamp).num_seconds();
            if delay_s > max_gap_s {
                continue;
            }
            let daypart = p.daypart();
            if !daypart.is_studied() || f.daypart() != daypart {
                continue;
            }
            let dyad = Dyad {
                partner_tx: w[0],
                focal_tx: w[1],
                partner: p.person,
                focal: f.person,
                delay_s,
                shop: key.shop,
                register: key.register,
                date: key.date,
                daypart,
            };
            if require_anchor && !dyad.anchored(log) {
                continue;
            }
            out.push(dyad);
        }
    }
    out
}

pub fn retain_anchored(log: &TransactionLog, dyads: DyadSet) -> DyadSet {
    dyads.into_iter().filter(|d| d.anchored(log)).collect()
}

/// Unordered person pair, lower id first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairKey {
    pub low: PersonId,
    pub high: PersonId,
}

impl PairKey {
    pub fn new(a: PersonId, b: PersonId) -> Self {
        if a <= b {
            Self { low: a, high: b }
        } else {
            Self { low: b, high: a }
        }
    }
}

/// Dyad counts for one unordered pair, split by order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderCounts {
    /// `low` is partner.
    pub low_first: usize,
    /// `high` is partner.
    pub high_first: usize,
}

impl OrderCounts {
    pub fn total(&self) -> usize {
        self.low_first + self.high_first
    }
}

pub fn pair_counts(dyads: &[Dyad]) -> BTreeMap<PairKey, OrderCounts> {
    let mut counts: BTreeMap<PairKey, OrderCounts> = BTreeMap::new();
    for d in dyads {
        let key = d.pair();
        let c = counts.entry(key).or_default();
        if d.partner == key.low {
            c.low_first += 1;
        } else {
            c.high_first += 1;
        }
    }
    counts
}

/// Keeps dyads whose unordered pair occurs in at least `min_count` dyads.
pub fn filter_frequent_pairs(dyads: &[Dyad], min_count: usize) -> DyadSet {
    let counts = pair_counts(dyads);
    dyads
        .iter()
        .filter(|d| counts[&d.pair()].total() >= min_count)
        .copied()
        .collect()
}

/// Extraction, anchor requirement and pair-frequency filter in the configured order.
pub fn build_dyads(log: &TransactionLog, queues: &Queues, params: &DyadParams) -> DyadSet {
    if params.frequency_before_anchor {
        let all = extract_dyads(log, queues, params.max_gap_s, false);
        let frequent = filter_frequent_pairs(&all, params.min_pair_count);
        if params.require_anchor {
            retain_anchored(log, frequent)
        } else {
            frequent
        }
    } else {
        let anchored = extract_dyads(log, queues, params.max_gap_s, params.require_anchor);
        filter_frequent_pairs(&anchored, params.min_pair_count)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdditionFrequency {
    pub daypart: Daypart,
    pub addition: AdditionKind,
    pub n_dyads: usize,
    pub n_treated: usize,
    pub fraction: f64,
    pub selected: bool,
}

/// Per daypart and addition, the share of dyads whose partner bought it;
/// additions at or above `threshold` are selected.
pub fn addition_frequencies(log: &TransactionLog, dyads: &[Dyad], threshold: f64) -> Vec<AdditionFrequency> {
    let mut out = Vec::new();
    for daypart in Daypart::STUDIED {
        let in_part: Vec<&Dyad> = dyads.iter().filter(|d| d.daypart == daypart).collect();
        for addition in AdditionKind::ALL {
            let n_treated = in_part
                .iter()
                .filter(|d| log.tx(d.partner_tx).profile.has_addition(addition))
                .count();
            let n_dyads = in_part.len();
            let fraction = if n_dyads == 0 { 0.0 } else { n_treated as f64 / n_dyads as f64 };
            out.push(AdditionFrequency {
                daypart,
                addition,
                n_dyads,
                n_treated,
                fraction,
                selected: n_treated > 0 && fraction >= threshold,
            });
        }
    }
    out
}

pub fn select_additions(log: &TransactionLog, dyads: &[Dyad], threshold: f64) -> BTreeMap<Daypart, Vec<AdditionKind>> {
    let mut out: BTreeMap<Daypart, Vec<AdditionKind>> = BTreeMap::new();
    for f in addition_frequencies(log, dyads, threshold) {
        if f.selected {
            out.entry(f.daypart).or_default().push(f.addition);
        }
    }
    out
}

/// Dyads shared by a pair over dyads involving either member.
#[derive(Clone, Debug, Default)]
pub struct TieStrengths {
    per_person: BTreeMap<PersonId, usize>,
    per_pair: BTreeMap<PairKey, usize>,
}

impl TieStrengths {
    pub fn new(dyads: &[Dyad]) -> Self {
        let mut per_person: BTreeMap<PersonId, usize> = BTreeMap::new();
        let mut per_pair: BTreeMap<PairKey, usize> = BTreeMap::new();
        for d in dyads {
            *per_person.entry(d.partner).or_default() += 1;
            *per_person.entry(d.focal).or_default() += 1;
            *per_pair.entry(d.pair()).or_default() += 1;
        }
        Self { per_person, per_pair }
    }

    pub fn strength(&self, a: PersonId, b: PersonId) -> Result<f64, DyadError> {
        let key = PairKey::new(a, b);
        let shared = self.per_pair.get(&key).copied().unwrap_or(0);
        let da = self.per_person.get(&a).copied().unwrap_or(0);
        let db = self.per_person.get(&b).copied().unwrap_or(0);
        let union = da + db - shared;
        if union == 0 {
            return Err(DyadError::UndefinedPair);
        }
        Ok(shared as f64 / union as f64)
    }
}

pub fn tie_strength(dyads: &[Dyad], a: PersonId, b: PersonId) -> Result<f64, DyadError> {
    TieStrengths::new(dyads).strength(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoPurchaseAttribute {
    Gender,
    Status,
    AgeTercile,
}

/// Age bins given by inclusive upper edges; the last bin is open-ended.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBins {
    pub upper_edges: Vec<i32>,
}

impl Default for AgeBins {
    fn default() -> Self {
        Self { upper_edges: vec![22, 32] }
    }
}

impl AgeBins {
    /// Edges at the empirical 1/3 and 2/3 quantiles.
    pub fn terciles(ages: &[i32]) -> Self {
        let mut sorted = ages.to_vec();
        sorted.sort_unstable();
        if sorted.is_empty() {
            return Self::default();
        }
        let at = |q: f64| sorted[(((sorted.len() - 1) as f64) * q) as usize];
        Self { upper_edges: vec![at(1.0 / 3.0), at(2.0 / 3.0)] }
    }

    pub fn bin(&self, age: i32) -> usize {
        self.upper_edges.iter().position(|&e| age <= e).unwrap_or(self.upper_edges.len())
    }

    pub fn labels(&self) -> Vec<String> {
        let mut labels = Vec::with_capacity(self.upper_edges.len() + 1);
        let mut lo: Option<i32> = None;
        for &e in &self.upper_edges {
            labels.push(match lo {
                None => format!("<={e}"),
                Some(l) => format!("{l}-{e}"),
            });
            lo = Some(e + 1);
        }
        labels.push(format!(">{}", self.upper_edges.last().copied().unwrap_or(0)));
        labels
    }
}

/// Dyad shares in percent; rows are the focal person's value, columns the partner's.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoPurchaseMatrix {
    pub attribute: CoPurchaseAttribute,
    pub labels: Vec<String>,
    pub percent: Vec<Vec<f64>>,
    pub n_dyads: usize,
    pub n_skipped: usize,
}

pub fn co_purchase_matrix(
    log: &TransactionLog,
    dyads: &[Dyad],
    people: &PersonTable,
    attribute: CoPurchaseAttribute,
    age_bins: &AgeBins,
) -> Result<CoPurchaseMatrix, DyadError> {
    use crate::model::{Gender, Status};
    let labels: Vec<String> = match attribute {
        CoPurchaseAttribute::Gender => [Gender::Female, Gender::Male].iter().map(|g| g.name().into()).collect(),
        CoPurchaseAttribute::Status => {
            [Status::Student, Status::Staff, Status::Other].iter().map(|s| s.name().into()).collect()
        }
        CoPurchaseAttribute::AgeTercile => age_bins.labels(),
    };
    let value = |person: PersonId, tx: TxIndex| -> Option<usize> {
        match attribute {
            CoPurchaseAttribute::Gender => people.gender[person.index()].map(|g| g as usize),
            CoPurchaseAttribute::Status => people.status[person.index()].map(|s| s as usize),
            CoPurchaseAttribute::AgeTercile => people.age_at(person, &log.tx(tx).timestamp).map(|a| age_bins.bin(a)),
        }
    };
    let k = labels.len();
    let mut counts = vec![vec![0usize; k]; k];
    let (mut used, mut skipped) = (0usize, 0usize);
    for d in dyads {
        match (value(d.focal, d.focal_tx), value(d.partner, d.partner_tx)) {
            (Some(r), Some(c)) => {
                counts[r][c] += 1;
                used += 1;
            }
            _ => skipped += 1,
        }
    }
    if used == 0 {
        return Err(DyadError::EmptyMatrix);
    }
    let percent = counts
        .iter()
        .map(|row| row.iter().map(|&c| 100.0 * c as f64 / used as f64).collect())
        .collect();
    Ok(CoPurchaseMatrix { attribute, labels, percent, n_dyads: used, n_skipped: skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BeverageKind, Gender, ItemCatalog, ItemCategory, PersonRecord, RawRecord, Demographics};
    use alloc::string::ToString;

    fn catalog() -> ItemCatalog {
        let mut c = ItemCatalog::new();
        c.insert("C", ItemCategory::AnchorBeverage(BeverageKind::Coffee)).unwrap();
        c.insert("P", ItemCategory::Addition(AdditionKind::Pastry)).unwrap();
        c.insert("X", ItemCategory::Other).unwrap();
        c
    }

    /// (tx_id, person, register, seconds after 08:00, items)
    fn log(rows: &[(&str, &str, &str, i64, &[&str])]) -> TransactionLog {
        let recs = rows.iter().enumerate().map(|(i, (id, person, reg, secs, items))| RawRecord {
            line: i + 1,
            tx_id: id.to_string(),
            person_id: person.to_string(),
            timestamp: format!("2018-01-02T{:02}:{:02}:{:02}", 8 + secs / 3600, (secs / 60) % 60, secs % 60),
            shop_id: "s".into(),
            register_id: reg.to_string(),
            items: items.iter().map(|s| s.to_string()).collect(),
        });
        TransactionLog::from_records(recs, &catalog()).unwrap()
    }

    fn ids(log: &TransactionLog, dyads: &[Dyad]) -> Vec<(String, String)> {
        dyads
            .iter()
            .map(|d| (log.tx(d.partner_tx).tx_id.clone(), log.tx(d.focal_tx).tx_id.clone()))
            .collect()
    }

    #[test]
    fn empty_log_has_no_queues() {
        let log = TransactionLog::default();
        assert!(Queues::reconstruct(&log).is_empty());
    }

    #[test]
    fn queues_split_by_register_and_keep_time_order() {
        let log = log(&[
            ("a", "A", "r1", 0, &["C"]),
            ("b", "B", "r2", 10, &["C"]),
            ("c", "C", "r1", 20, &["C"]),
            ("d", "D", "r2", 30, &["C"]),
            ("e", "E", "r1", 40, &["C"]),
        ]);
        let q = Queues::reconstruct(&log);
        assert_eq!(q.len(), 2);
        let seqs: Vec<Vec<&str>> = q
            .iter()
            .map(|(_, s)| s.iter().map(|&i| log.tx(i).tx_id.as_str()).collect())
            .collect();
        assert_eq!(seqs, vec![vec!["a", "c", "e"], vec!["b", "d"]]);
    }

    #[test]
    fn equal_timestamps_order_by_tx_id() {
        let log = log(&[("z", "A", "r", 0, &["C"]), ("y", "B", "r", 0, &["C"])]);
        let q = Queues::reconstruct(&log);
        let seq: Vec<&str> = q.iter().next().unwrap().1.iter().map(|&i| log.tx(i).tx_id.as_str()).collect();
        assert_eq!(seq, vec!["y", "z"]);
    }

    #[test]
    fn gap_limit_and_overlap() {
        let l = log(&[("a", "A", "r", 0, &["C"]), ("b", "B", "r", 120, &["C"]), ("c", "C", "r", 520, &["C"])]);
        let d = extract_dyads(&l, &Queues::reconstruct(&l), 300, true);
        assert_eq!(ids(&l, &d), vec![("a".into(), "b".into())]);

        let l = log(&[("a", "A", "r", 0, &["C"]), ("b", "B", "r", 100, &["C"]), ("c", "C", "r", 250, &["C"])]);
        let d = extract_dyads(&l, &Queues::reconstruct(&l), 300, true);
        assert_eq!(ids(&l, &d), vec![("a".into(), "b".into()), ("b".into(), "c".into())]);
        assert_eq!(d[1].delay_s, 150);
    }

    #[test]
    fn same_person_is_not_a_dyad() {
        let l = log(&[("a", "A", "r", 0, &["C"]), ("b", "A", "r", 60, &["C"])]);
        assert!(extract_dyads(&l, &Queues::reconstruct(&l), 300, true).is_empty());
    }

    #[test]
    fn anchor_requirement() {
        let l = log(&[("a", "A", "r", 0, &["C"]), ("b", "B", "r", 60, &["P"])]);
        let q = Queues::reconstruct(&l);
        assert!(extract_dyads(&l, &q, 300, true).is_empty());
        assert_eq!(extract_dyads(&l, &q, 300, false).len(), 1);
    }

    fn synthetic(pairs: &[(u32, u32, usize)]) -> Vec<Dyad> {
        let date = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let mut out = Vec::new();
        for &(a, b, n) in pairs {
            for _ in 0..n {
                out.push(Dyad {
                    partner_tx: 0,
                    focal_tx: 0,
                    partner: PersonId(a),
                    focal: PersonId(b),
                    delay_s: 10,
                    shop: ShopId(0),
                    register: RegisterId(0),
                    date,
                    daypart: Daypart::Lunch,
                });
            }
        }
        out
    }

    #[test]
    fn frequency_filter_pools_both_orders() {
        let d = synthetic(&[(0, 1, 9), (2, 3, 6), (3, 2, 4)]);
        let kept = filter_frequent_pairs(&d, 10);
        assert_eq!(kept.len(), 10);
        assert!(kept.iter().all(|x| x.pair() == PairKey::new(PersonId(2), PersonId(3))));
        assert_eq!(filter_frequent_pairs(&d, 1), d);
        assert_eq!(filter_frequent_pairs(&kept, 10), kept);
        let counts = pair_counts(&d);
        assert_eq!(counts[&PairKey::new(PersonId(3), PersonId(2))], OrderCounts { low_first: 6, high_first: 4 });
    }

    #[test]
    fn tie_strength_fixture() {
        // A=0, B=1, C=2, D=3
        let d = synthetic(&[(0, 1, 4), (0, 2, 4), (1, 3, 2)]);
        assert_eq!(tie_strength(&d, PersonId(0), PersonId(1)).unwrap(), 0.4);
        assert_eq!(tie_strength(&d, PersonId(2), PersonId(3)).unwrap(), 0.0);
        assert_eq!(tie_strength(&d, PersonId(8), PersonId(9)), Err(DyadError::UndefinedPair));
        let exclusive = synthetic(&[(0, 1, 3), (1, 0, 2)]);
        assert_eq!(tie_strength(&exclusive, PersonId(1), PersonId(0)).unwrap(), 1.0);
    }

    #[test]
    fn addition_selection_threshold() {
        let mut rows: Vec<(String, String, i64, Vec<&str>)> = Vec::new();
        // 51 transactions -> 50 dyads; exactly one partner buys pastry
        for i in 0..51i64 {
            let items = if i == 10 { vec!["C", "P"] } else { vec!["C"] };
            rows.push((format!("t{i:03}"), format!("p{}", i % 2), i * 5, items));
        }
        let refs: Vec<(&str, &str, &str, i64, &[&str])> =
            rows.iter().map(|(a, b, s, it)| (a.as_str(), b.as_str(), "r", *s, it.as_slice())).collect();
        let l = log(&refs);
        let d = extract_dyads(&l, &Queues::reconstruct(&l), 300, true);
        assert_eq!(d.len(), 50);
        let sel = select_additions(&l, &d, 0.01);
        assert_eq!(sel[&Daypart::Breakfast], vec![AdditionKind::Pastry]);
        let freqs = addition_frequencies(&l, &d, 0.01);
        let pastry = freqs.iter().find(|f| f.daypart == Daypart::Breakfast && f.addition == AdditionKind::Pastry).unwrap();
        assert_eq!(pastry.fraction, 0.02);
        assert!(!freqs.iter().any(|f| f.addition == AdditionKind::Soup && f.selected));
    }

    #[test]
    fn co_purchase_gender_fixture() {
        // persons: A f, B f, C m, D m; dyads partner->focal
        let l = log(&[
            ("1", "A", "r", 0, &["C"]),
            ("2", "B", "r", 10, &["C"]),  // A->B : focal f, partner f
            ("3", "A", "r", 20, &["C"]),  // B->A : FF
            ("4", "C", "r", 30, &["C"]),  // A->C : focal m, partner f
            ("5", "B", "r", 40, &["C"]),  // C->B : focal f, partner m
        ]);
        let d = extract_dyads(&l, &Queues::reconstruct(&l), 300, true);
        assert_eq!(d.len(), 4);
        let mut demo = Demographics::new();
        for (p, g) in [("A", Gender::Female), ("B", Gender::Female), ("C", Gender::Male)] {
            demo.insert(PersonRecord { person_id: p.into(), gender: Some(g), status: None, birth_year: Some(1996) });
        }
        let table = demo.resolve(&l).unwrap();
        let m = co_purchase_matrix(&l, &d, &table, CoPurchaseAttribute::Gender, &AgeBins::default()).unwrap();
        assert_eq!(m.percent, vec![vec![50.0, 25.0], vec![25.0, 0.0]]);
        let total: f64 = m.percent.iter().flatten().sum();
        assert!((total - 100.0).abs() < 1e-9);

        let ages = co_purchase_matrix(&l, &d, &table, CoPurchaseAttribute::AgeTercile, &AgeBins::default()).unwrap();
        // born 1996, transacting in 2018 -> 22 -> first bin
        assert_eq!(ages.labels[0], "<=22");
        assert_eq!(ages.percent[0][0], 100.0);

        assert_eq!(
            co_purchase_matrix(&l, &d, &table, CoPurchaseAttribute::Status, &AgeBins::default()),
            Err(DyadError::EmptyMatrix)
        );
    }

    #[test]
    fn age_bins() {
        let b = AgeBins::default();
        assert_eq!(b.labels(), vec!["<=22", "23-32", ">32"]);
        assert_eq!((b.bin(22), b.bin(23), b.bin(32), b.bin(33)), (0, 1, 1, 2));
        let t = AgeBins::terciles(&[20, 21, 22, 30, 31, 32, 50, 51, 52]);
        assert_eq!(t.upper_edges, vec![22, 32]);
    }
}
