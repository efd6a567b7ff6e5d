//! Campus-status inference from temporal activity features, using a bagged
//! ensemble of Gini decision trees.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use chrono::{Datelike, Timelike};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{PersonId, Status, TransactionLog};
use crate::seed;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InferError {
    #[error("unknown person {0}")]
    UnknownPerson(String),
    #[error("class {class} has {got} labelled persons, need {needed}")]
    InsufficientLabels { class: &'static str, got: usize, needed: usize },
    #[error("features and labels differ in length")]
    LengthMismatch,
}

pub const N_FEATURES: usize = 2 + 12 + 7 + 24;

/// Activity summary of one person. Purchased items are never part of it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub total_tx: u32,
    pub years_active: f64,
    pub month_dist: [f64; 12],
    pub weekday_dist: [f64; 7],
    pub hour_dist: [f64; 24],
}

impl FeatureVector {
    pub fn values(&self) -> [f64; N_FEATURES] {
        let mut v = [0.0; N_FEATURES];
        v[0] = f64::from(self.total_tx);
        v[1] = self.years_active;
        v[2..14].copy_from_slice(&self.month_dist);
        v[14..21].copy_from_slice(&self.weekday_dist);
        v[21..].copy_from_slice(&self.hour_dist);
        v
    }
}

#[derive(Clone, Default)]
struct Accumulator {
    n: u32,
    first: Option<chrono::NaiveDateTime>,
    last: Option<chrono::NaiveDateTime>,
    month: [u32; 12],
    weekday: [u32; 7],
    hour: [u32; 24],
}

impl Accumulator {
    fn finish(&self) -> Option<FeatureVector> {
        if self.n == 0 {
            return None;
        }
        let n = f64::from(self.n);
        let norm = |c: &[u32], out: &mut [f64]| {
            for (o, &x) in out.iter_mut().zip(c) {
                *o = f64::from(x) / n;
            }
        };
        let mut fv = FeatureVector {
            total_tx: self.n,
            years_active: 0.0,
            month_dist: [0.0; 12],
            weekday_dist: [0.0; 7],
            hour_dist: [0.0; 24],
        };
        norm(&self.month, &mut fv.month_dist);
        norm(&self.weekday, &mut fv.weekday_dist);
        norm(&self.hour, &mut fv.hour_dist);
        if let (Some(a), Some(b)) = (self.first, self.last) {
            fv.years_active = (b - a).num_seconds() as f64 / (365.25 * 86_400.0);
        }
        Some(fv)
    }
}

/// Features of every person in the log, indexed by person id.
pub fn extract_all(log: &TransactionLog) -> Vec<FeatureVector> {
    let mut acc = vec![Accumulator::default(); log.person_count()];
    for t in log.transactions() {
        let a = &mut acc[t.person.index()];
        a.n += 1;
        a.first = Some(a.first.map_or(t.timestamp, |f| f.min(t.timestamp)));
        a.last = Some(a.last.map_or(t.timestamp, |l| l.max(t.timestamp)));
        a.month[t.timestamp.month0() as usize] += 1;
        a.weekday[t.timestamp.weekday().num_days_from_monday() as usize] += 1;
        a.hour[t.timestamp.hour() as usize] += 1;
    }
    // interned persons always have at least one transaction
    acc.iter().filter_map(Accumulator::finish).collect()
}

pub fn extract_features(log: &TransactionLog, person: &str) -> Result<FeatureVector, InferError> {
    let id = log.person_id(person).ok_or_else(|| InferError::UnknownPerson(person.into()))?;
    Ok(extract_person(log, id))
}

fn extract_person(log: &TransactionLog, id: PersonId) -> FeatureVector {
    let mut a = Accumulator::default();
    for t in log.transactions().iter().filter(|t| t.person == id) {
        a.n += 1;
        a.first = Some(a.first.map_or(t.timestamp, |f| f.min(t.timestamp)));
        a.last = Some(a.last.map_or(t.timestamp, |l| l.max(t.timestamp)));
        a.month[t.timestamp.month0() as usize] += 1;
        a.weekday[t.timestamp.weekday().num_days_from_monday() as usize] += 1;
        a.hour[t.timestamp.hour() as usize] += 1;
    }
    a.finish().expect("interned person has transactions")
}

// ---------------------------------------------------------------------------
// Trees

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { counts: [u32; 2] },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_counts(&self, x: &[f64]) -> [u32; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the leaf reached by `x`; ties go to class 0.
    pub fn vote(&self, x: &[f64]) -> usize {
        let c = self.leaf_counts(x);
        usize::from(c[1] > c[0])
    }
}

fn gini(c: [u32; 2]) -> f64 {
    let n = f64::from(c[0] + c[1]);
    if n == 0.0 {
        return 0.0;
    }
    let (a, b) = (f64::from(c[0]) / n, f64::from(c[1]) / n);
    1.0 - a * a - b * b
}

struct TreeBuilder<'a> {
    x: &'a [[f64; N_FEATURES]],
    y: &'a [usize],
    max_depth: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; 2] {
        let mut c = [0u32; 2];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut seed::Rng) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts });
        if depth >= self.max_depth || counts[0] == 0 || counts[1] == 0 || idx.len() < 2 {
            return id;
        }
        let Some((feature, threshold)) = self.best_split(idx, counts, rng) else {
            return id;
        };
        let mut split = 0;
        for k in 0..idx.len() {
            if self.x[idx[k]][feature] <= threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }

    fn best_split(&self, idx: &[usize], total: [u32; 2], rng: &mut seed::Rng) -> Option<(usize, f64)> {
        let mut features: Vec<usize> = (0..N_FEATURES).collect();
        for i in 0..N_FEATURES - 1 {
            let j = rng.random_range(i..N_FEATURES);
            features.swap(i, j);
        }
        let n = idx.len() as f64;
        let parent = gini(total);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut order: Vec<(f64, usize)> = Vec::with_capacity(idx.len());
        // keep drawing past mtry until some feature separates the node
        for (rank, &f) in features.iter().enumerate() {
            if rank >= self.mtry && best.is_some() {
                break;
            }
            order.clear();
            order.extend(idx.iter().map(|&i| (self.x[i][f], self.y[i])));
            order.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = [0u32; 2];
            for k in 0..order.len() - 1 {
                left[order[k].1] += 1;
                if order[k].0 == order[k + 1].0 {
                    continue;
                }
                let right = [total[0] - left[0], total[1] - left[1]];
                let nl = (k + 1) as f64;
                let impurity = (nl * gini(left) + (n - nl) * gini(right)) / n;
                let gain = parent - impurity;
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, 0.5 * (order[k].0 + order[k + 1].0)));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub holdout: f64,
    pub min_per_class: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, holdout: 0.2, min_per_class: 50, seed: 0 }
    }
}

/// Fits tree `index` of a forest on a bootstrap sample of `(x, y)`.
pub fn fit_tree(x: &[[f64; N_FEATURES]], y: &[usize], params: &ForestParams, index: usize) -> Tree {
    let mut rng = seed::stream(seed::derive(params.seed, "forest"), index as u64);
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
    let mtry = libm::sqrt(N_FEATURES as f64) as usize;
    let mut b = TreeBuilder { x, y, max_depth: params.max_depth, mtry: mtry.max(1), nodes: Vec::new() };
    b.build(&mut idx, 0, &mut rng);
    Tree { nodes: b.nodes }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutMetrics {
    pub student: ClassMetrics,
    pub staff: ClassMetrics,
    pub accuracy: f64,
    pub n_test: usize,
}

pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatusModel {
    pub version: u32,
    pub params: ForestParams,
    pub n_train: usize,
    pub metrics: Option<HoldoutMetrics>,
    pub trees: Vec<Tree>,
}

/// Classes in vote order.
const CLASSES: [Status; 2] = [Status::Student, Status::Staff];

fn class_of(s: Status) -> Option<usize> {
    CLASSES.iter().position(|&c| c == s)
}

impl StatusModel {
    /// Majority vote and the winning vote fraction; ties go to student.
    pub fn predict(&self, features: &FeatureVector) -> (Status, f64) {
        self.predict_values(&features.values())
    }

    pub fn predict_values(&self, x: &[f64]) -> (Status, f64) {
        let mut votes = [0usize; 2];
        for t in &self.trees {
            votes[t.vote(x)] += 1;
        }
        let k = usize::from(votes[1] > votes[0]);
        let total = votes[0] + votes[1];
        (CLASSES[k], if total == 0 { 0.0 } else { votes[k] as f64 / total as f64 })
    }
}

pub fn predict_status(model: &StatusModel, features: &FeatureVector) -> (Status, f64) {
    model.predict(features)
}

/// Fits all trees with `fit`, which receives the tree index. Lets callers
/// train trees in parallel.
pub type TreeFitter<'a> = &'a dyn Fn(&[[f64; N_FEATURES]], &[usize], &ForestParams) -> Vec<Tree>;

pub fn fit_trees_sequential(x: &[[f64; N_FEATURES]], y: &[usize], params: &ForestParams) -> Vec<Tree> {
    (0..params.n_trees).map(|i| fit_tree(x, y, params, i)).collect()
}

/// Trains on a stratified split and reports held-out precision and recall.
/// Persons labelled `other` are ignored.
pub fn train_status_model(
    features: &[FeatureVector],
    labels: &[Status],
    params: &ForestParams,
) -> Result<StatusModel, InferError> {
    train_status_model_with(features, labels, params, &fit_trees_sequential)
}

pub fn train_status_model_with(
    features: &[FeatureVector],
    labels: &[Status],
    params: &ForestParams,
    fit: TreeFitter<'_>,
) -> Result<StatusModel, InferError> {
    if features.len() != labels.len() {
        return Err(InferError::LengthMismatch);
    }
    let mut per_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &s) in labels.iter().enumerate() {
        if let Some(k) = class_of(s) {
            per_class[k].push(i);
        }
    }
    for (k, members) in per_class.iter().enumerate() {
        if members.len() < params.min_per_class {
            return Err(InferError::InsufficientLabels {
                class: CLASSES[k].name(),
                got: members.len(),
                needed: params.min_per_class,
            });
        }
    }
    let mut rng = seed::rng(seed::derive(params.seed, "holdout"));
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (k, members) in per_class.iter_mut().enumerate() {
        for i in (1..members.len()).rev() {
            let j = rng.random_range(0..=i);
            members.swap(i, j);
        }
        let n_test = libm::round(members.len() as f64 * params.holdout) as usize;
        test.extend(members[..n_test].iter().map(|&i| (i, k)));
        train.extend(members[n_test..].iter().map(|&i| (i, k)));
    }
    train.sort_unstable();
    test.sort_unstable();
    let x: Vec<[f64; N_FEATURES]> = train.iter().map(|&(i, _)| features[i].values()).collect();
    let y: Vec<usize> = train.iter().map(|&(_, k)| k).collect();
    let trees = fit(&x, &y, params);
    let mut model = StatusModel { version: MODEL_VERSION, params: *params, n_train: train.len(), metrics: None, trees };
    if !test.is_empty() {
        let mut confusion = [[0usize; 2]; 2];
        for &(i, k) in &test {
            let (s, _) = model.predict(&features[i]);
            confusion[k][class_of(s).unwrap()] += 1;
        }
        model.metrics = Some(metrics(&confusion));
    }
    Ok(model)
}

/// `confusion[truth][predicted]`.
fn metrics(confusion: &[[usize; 2]; 2]) -> HoldoutMetrics {
    let class = |k: usize| {
        let tp = confusion[k][k] as f64;
        let predicted = (confusion[0][k] + confusion[1][k]) as f64;
        let actual = (confusion[k][0] + confusion[k][1]) as f64;
        ClassMetrics {
            precision: if predicted > 0.0 { tp / predicted } else { 0.0 },
            recall: if actual > 0.0 { tp / actual } else { 0.0 },
            support: actual as usize,
        }
    };
    let n = confusion.iter().flatten().sum::<usize>();
    HoldoutMetrics {
        student: class(0),
        staff: class(1),
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / n as f64,
        n_test: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ItemCatalog, ItemCategory, RawRecord};
    use alloc::format;
    use alloc::string::ToString;

    fn log_of(rows: &[(&str, &str)]) -> TransactionLog {
        let mut c = ItemCatalog::new();
        c.insert("M", ItemCategory::AnchorMeal { vegetarian: false }).unwrap();
        let recs = rows.iter().enumerate().map(|(i, (p, ts))| RawRecord {
            line: i + 1,
            tx_id: format!("t{i}"),
            person_id: p.to_string(),
            timestamp: ts.to_string(),
            shop_id: "s".into(),
            register_id: "r".into(),
            items: vec!["M".into()],
        });
        TransactionLog::from_records(recs, &c).unwrap()
    }

    #[test]
    fn single_transaction_is_one_hot() {
        let log = log_of(&[("A", "2021-03-10 12:15:00")]);
        let f = extract_features(&log, "A").unwrap();
        assert_eq!(f.total_tx, 1);
        assert_eq!(f.years_active, 0.0);
        assert_eq!(f.month_dist[2], 1.0);
        // 2021-03-10 is a Wednesday
        assert_eq!(f.weekday_dist[2], 1.0);
        assert_eq!(f.hour_dist[12], 1.0);
        assert!(matches!(extract_features(&log, "nobody"), Err(InferError::UnknownPerson(_))));
    }

    #[test]
    fn two_year_fixture() {
        let rows = [
            ("A", "2020-01-06 08:00:00"),
            ("A", "2020-01-07 12:00:00"),
            ("A", "2020-03-02 12:30:00"),
            ("A", "2020-06-05 15:00:00"),
            ("A", "2020-09-14 12:00:00"),
            ("A", "2020-11-20 08:30:00"),
            ("A", "2021-01-04 12:00:00"),
            ("A", "2021-02-10 12:10:00"),
            ("A", "2021-05-05 15:45:00"),
            ("A", "2021-07-06 12:00:00"),
        ];
        let log = log_of(&rows);
        let f = extract_features(&log, "A").unwrap();
        assert_eq!(f.total_tx, 10);
        // 2020-01-06 08:00 to 2021-07-06 12:00 is 547 days 4 hours
        assert!((f.years_active - (547.0 + 4.0 / 24.0) / 365.25).abs() < 1e-12);
        assert_eq!(f.month_dist[0], 0.3);
        assert_eq!(f.month_dist[1], 0.1);
        assert_eq!(f.hour_dist[12], 0.6);
        assert_eq!(f.hour_dist[8], 0.2);
        assert_eq!(f.hour_dist[15], 0.2);
        // Mon: 01-06, 03-02, 09-14, 01-04; Tue: 01-07, 07-06; Wed: 02-10, 05-05; Fri: 06-05, 11-20
        assert_eq!(f.weekday_dist[0], 0.4);
        assert_eq!(f.weekday_dist[1], 0.2);
        assert_eq!(f.weekday_dist[4], 0.2);
        for d in [&f.month_dist[..], &f.weekday_dist[..], &f.hour_dist[..]] {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        assert_eq!(extract_all(&log), vec![f]);
    }

    fn synthetic(n: usize, separable: bool, seed_v: u64) -> (Vec<FeatureVector>, Vec<Status>) {
        let mut rng = seed::rng(seed_v);
        let mut fs = Vec::new();
        let mut ls = Vec::new();
        for i in 0..n {
            let status = if i % 2 == 0 { Status::Student } else { Status::Staff };
            let mut fv = FeatureVector {
                total_tx: rng.random_range(10..200),
                years_active: rng.random_range(0.0..4.0),
                month_dist: [1.0 / 12.0; 12],
                weekday_dist: [1.0 / 7.0; 7],
                hour_dist: [0.0; 24],
            };
            let h = if separable && status == Status::Staff { 8 } else { 12 };
            fv.hour_dist[h] = 1.0;
            fs.push(fv);
            ls.push(status);
        }
        (fs, ls)
    }

    #[test]
    fn separable_features_are_learned_exactly() {
        let (f, l) = synthetic(200, true, 1);
        let params = ForestParams { n_trees: 15, seed: 4, ..Default::default() };
        let m = train_status_model(&f, &l, &params).unwrap();
        let metrics = m.metrics.unwrap();
        assert_eq!(metrics.n_test, 40);
        assert_eq!((metrics.student.precision, metrics.student.recall), (1.0, 1.0));
        assert_eq!((metrics.staff.precision, metrics.staff.recall), (1.0, 1.0));
        assert_eq!(train_status_model(&f, &l, &params).unwrap(), m);
    }

    #[test]
    fn too_few_labels() {
        let (f, mut l) = synthetic(120, true, 1);
        for s in l.iter_mut().skip(1).step_by(2).skip(40) {
            *s = Status::Other;
        }
        let err = train_status_model(&f, &l, &ForestParams::default()).unwrap_err();
        assert_eq!(err, InferError::InsufficientLabels { class: "staff", got: 40, needed: 50 });
    }

    #[test]
    fn single_tree_reproduces_pure_exemplar() {
        let x = [[0.0; N_FEATURES], {
            let mut v = [0.0; N_FEATURES];
            v[5] = 1.0;
            v
        }];
        let tree = Tree {
            nodes: vec![
                Node::Split { feature: 5, threshold: 0.5, left: 1, right: 2 },
                Node::Leaf { counts: [3, 0] },
                Node::Leaf { counts: [0, 4] },
            ],
        };
        let model = StatusModel { version: MODEL_VERSION, params: ForestParams::default(), n_train: 7, metrics: None, trees: vec![tree] };
        assert_eq!(model.predict_values(&x[0]), (Status::Student, 1.0));
        assert_eq!(model.predict_values(&x[1]), (Status::Staff, 1.0));
    }
}
