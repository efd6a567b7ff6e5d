//! Transactions, the item taxonomy, demographics and log construction.
//!
//! Person, shop and register identifiers are interned when a log is built;
//! the log keeps the original names so dumps can be written back out.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use chrono::{Datelike, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position of a transaction inside its [`TransactionLog`].
pub type TxIndex = usize;

macro_rules! interned_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub struct $name(pub u32);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }
    };
}

interned_id!(
    /// Interned person identifier.
    PersonId
);
interned_id!(
    /// Interned shop identifier.
    ShopId
);
interned_id!(
    /// Interned register identifier (register names are global, not per shop).
    RegisterId
);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate tx_id {tx_id:?} at line {line}")]
    DuplicateTxId { tx_id: String, line: usize },
    #[error("unknown item category {0:?}")]
    UnknownCategory(String),
    #[error("unknown subtype {subtype:?} for category {category:?}")]
    UnknownSubtype { category: String, subtype: String },
    #[error("item code {0:?} listed twice in catalog")]
    DuplicateItemCode(String),
    #[error("invalid demographic value {value:?} for {field}")]
    InvalidDemographic { field: &'static str, value: String },
    #[error("person {person:?} has negative age at {timestamp}")]
    NegativeAge { person: String, timestamp: NaiveDateTime },
    #[error("unknown person {0:?}")]
    UnknownPerson(String),
}

/// Why a single input record was rejected. Rejections do not abort ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub kind: RecordErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[serde(rename_all = "snake_case")]
pub enum RecordErrorKind {
    #[error("malformed timestamp {0:?}")]
    InvalidTimestamp(String),
    #[error("empty basket")]
    EmptyBasket,
    #[error("missing field {0}")]
    MissingField(String),
}

impl fmt::Display for RecordError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

// ---------------------------------------------------------------------------
// Dayparts

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Daypart {
    Breakfast,
    Lunch,
    Afternoon,
    OutOfWindow,
}

impl Daypart {
    pub const STUDIED: [Daypart; 3] = [Daypart::Breakfast, Daypart::Lunch, Daypart::Afternoon];

    /// Half-open windows: [06:00, 11:00), [11:00, 14:30), [14:30, 20:00).
    pub fn of(time: NaiveTime) -> Daypart {
        let secs = time.num_seconds_from_midnight();
        const H: u32 = 3600;
        if secs < 6 * H {
            Daypart::OutOfWindow
        } else if secs < 11 * H {
            Daypart::Breakfast
        } else if secs < 14 * H + 30 * 60 {
            Daypart::Lunch
        } else if secs < 20 * H {
            Daypart::Afternoon
        } else {
            Daypart::OutOfWindow
        }
    }

    /// Start and end of the window in seconds after midnight.
    pub fn window_secs(self) -> Option<(u32, u32)> {
        match self {
            Daypart::Breakfast => Some((6 * 3600, 11 * 3600)),
            Daypart::Lunch => Some((11 * 3600, 14 * 3600 + 1800)),
            Daypart::Afternoon => Some((14 * 3600 + 1800, 20 * 3600)),
            Daypart::OutOfWindow => None,
        }
    }

    pub fn is_studied(self) -> bool {
        self != Daypart::OutOfWindow
    }

    pub fn name(self) -> &'static str {
        match self {
            Daypart::Breakfast => "breakfast",
            Daypart::Lunch => "lunch",
            Daypart::Afternoon => "afternoon",
            Daypart::OutOfWindow => "out_of_window",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for Daypart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Daypart {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "breakfast" => Ok(Daypart::Breakfast),
            "lunch" => Ok(Daypart::Lunch),
            "afternoon" => Ok(Daypart::Afternoon),
            "out_of_window" => Ok(Daypart::OutOfWindow),
            other => Err(ModelError::UnknownCategory(other.to_string())),
        }
    }
}

// ---------------------------------------------------------------------------
// Item taxonomy

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeverageKind {
    Coffee,
    Tea,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdditionKind {
    Condiment,
    Dessert,
    Fruit,
    Pastry,
    Salad,
    SoftDrink,
    Soup,
}

impl AdditionKind {
    pub const ALL: [AdditionKind; 7] = [
        AdditionKind::Condiment,
        AdditionKind::Dessert,
        AdditionKind::Fruit,
        AdditionKind::Pastry,
        AdditionKind::Salad,
        AdditionKind::SoftDrink,
        AdditionKind::Soup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdditionKind::Condiment => "condiment",
            AdditionKind::Dessert => "dessert",
            AdditionKind::Fruit => "fruit",
            AdditionKind::Pastry => "pastry",
            AdditionKind::Salad => "salad",
            AdditionKind::SoftDrink => "soft_drink",
            AdditionKind::Soup => "soup",
        }
    }
}

impl FromStr for AdditionKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdditionKind::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| ModelError::UnknownCategory(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ItemCategory {
    AnchorMeal { vegetarian: bool },
    AnchorBeverage(BeverageKind),
    Addition(AdditionKind),
    Other,
}

impl ItemCategory {
    /// Parses the `category,subtype` columns of a catalog row.
    pub fn parse(category: &str, subtype: &str) -> Result<Self, ModelError> {
        let bad_subtype = || ModelError::UnknownSubtype {
            category: category.to_string(),
            subtype: subtype.to_string(),
        };
        match category.trim() {
            "anchor_meal" => match subtype.trim() {
                "vegetarian" => Ok(ItemCategory::AnchorMeal { vegetarian: true }),
                "" | "meat" | "non_vegetarian" => Ok(ItemCategory::AnchorMeal { vegetarian: false }),
                _ => Err(bad_subtype()),
            },
            "anchor_beverage" => match subtype.trim() {
                "coffee" => Ok(ItemCategory::AnchorBeverage(BeverageKind::Coffee)),
                "tea" => Ok(ItemCategory::AnchorBeverage(BeverageKind::Tea)),
                _ => Err(bad_subtype()),
            },
            "addition" => subtype.trim().parse().map(ItemCategory::Addition).map_err(|_| bad_subtype()),
            "other" => Ok(ItemCategory::Other),
            other => Err(ModelError::UnknownCategory(other.to_string())),
        }
    }

    /// Inverse of [`ItemCategory::parse`].
    pub fn columns(self) -> (&'static str, &'static str) {
        match self {
            ItemCategory::AnchorMeal { vegetarian: true } => ("anchor_meal", "vegetarian"),
            ItemCategory::AnchorMeal { vegetarian: false } => ("anchor_meal", "meat"),
            ItemCategory::AnchorBeverage(BeverageKind::Coffee) => ("anchor_beverage", "coffee"),
            ItemCategory::AnchorBeverage(BeverageKind::Tea) => ("anchor_beverage", "tea"),
            ItemCategory::Addition(a) => ("addition", a.name()),
            ItemCategory::Other => ("other", ""),
        }
    }
}

/// Maps item codes to categories. Codes absent from the catalog are `Other`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemCatalog {
    items: BTreeMap<String, ItemCategory>,
}

impl ItemCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, code: impl Into<String>, category: ItemCategory) -> Result<(), ModelError> {
        let code = code.into();
        if self.items.contains_key(&code) {
            return Err(ModelError::DuplicateItemCode(code));
        }
        self.items.insert(code, category);
        Ok(())
    }

    pub fn get(&self, code: &str) -> Option<ItemCategory> {
        self.items.get(code).copied()
    }

    pub fn category(&self, code: &str) -> ItemCategory {
        self.get(code).unwrap_or(ItemCategory::Other)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, ItemCategory)> {
        self.items.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn profile<S: AsRef<str>>(&self, basket: &[S]) -> BasketProfile {
        BasketProfile::from_categories(basket.iter().map(|c| self.category(c.as_ref())))
    }

    /// The daypart anchor contained in `basket`, if any.
    pub fn anchor_of<S: AsRef<str>>(&self, basket: &[S], daypart: Daypart) -> Option<Anchor> {
        self.profile(basket).anchor(daypart)
    }
}

/// The daypart-defining purchase.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Anchor {
    Meal { vegetarian: bool },
    Beverage(BeverageKind),
}

/// Something whose mimicry can be estimated: an addition or an anchor attribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusItem {
    Addition(AdditionKind),
    /// The lunch anchor is a vegetarian meal.
    VegetarianMeal,
    /// The beverage anchor is tea rather than coffee.
    Tea,
}

impl FocusItem {
    pub const COUNT: usize = 9;

    pub fn all() -> impl Iterator<Item = FocusItem> {
        AdditionKind::ALL
            .into_iter()
            .map(FocusItem::Addition)
            .chain([FocusItem::VegetarianMeal, FocusItem::Tea])
    }

    pub fn bit(self) -> usize {
        match self {
            FocusItem::Addition(a) => a as usize,
            FocusItem::VegetarianMeal => 7,
            FocusItem::Tea => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FocusItem::Addition(a) => a.name(),
            FocusItem::VegetarianMeal => "vegetarian_meal",
            FocusItem::Tea => "tea",
        }
    }

    /// Dayparts in which this item is meaningful.
    pub fn applies_to(self, daypart: Daypart) -> bool {
        match self {
            FocusItem::Addition(_) => daypart.is_studied(),
            FocusItem::VegetarianMeal => daypart == Daypart::Lunch,
            FocusItem::Tea => matches!(daypart, Daypart::Breakfast | Daypart::Afternoon),
        }
    }
}

impl fmt::Display for FocusItem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FocusItem {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vegetarian_meal" => Ok(FocusItem::VegetarianMeal),
            "tea" => Ok(FocusItem::Tea),
            other => other.parse().map(FocusItem::Addition),
        }
    }
}

/// Catalog-resolved summary of a basket.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasketProfile {
    /// Vegetarian flag of the first meal in the basket.
    pub meal: Option<bool>,
    pub coffee: bool,
    pub tea: bool,
    /// Bit per [`AdditionKind`].
    pub additions: u8,
}

impl BasketProfile {
    pub fn from_categories(categories: impl IntoIterator<Item = ItemCategory>) -> Self {
        let mut p = BasketProfile::default();
        for c in categories {
            match c {
                ItemCategory::AnchorMeal { vegetarian } => {
                    if p.meal.is_none() {
                        p.meal = Some(vegetarian);
                    }
                }
                ItemCategory::AnchorBeverage(BeverageKind::Coffee) => p.coffee = true,
                ItemCategory::AnchorBeverage(BeverageKind::Tea) => p.tea = true,
                ItemCategory::Addition(a) => p.additions |= 1 << (a as u8),
                ItemCategory::Other => {}
            }
        }
        p
    }

    /// Meal at lunch; coffee, then tea, at breakfast and afternoon.
    pub fn anchor(&self, daypart: Daypart) -> Option<Anchor> {
        match daypart {
            Daypart::Lunch => self.meal.map(|vegetarian| Anchor::Meal { vegetarian }),
            Daypart::Breakfast | Daypart::Afternoon => {
                if self.coffee {
                    Some(Anchor::Beverage(BeverageKind::Coffee))
                } else if self.tea {
                    Some(Anchor::Beverage(BeverageKind::Tea))
                } else {
                    None
                }
            }
            Daypart::OutOfWindow => None,
        }
    }

    pub fn has_addition(&self, a: AdditionKind) -> bool {
        self.additions & (1 << (a as u8)) != 0
    }

    pub fn contains(&self, item: FocusItem, daypart: Daypart) -> bool {
        match item {
            FocusItem::Addition(a) => self.has_addition(a),
            FocusItem::VegetarianMeal => self.anchor(daypart) == Some(Anchor::Meal { vegetarian: true }),
            FocusItem::Tea => self.anchor(daypart) == Some(Anchor::Beverage(BeverageKind::Tea)),
        }
    }
}

// ---------------------------------------------------------------------------
// Transactions and the log

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: String,
    pub person: PersonId,
    pub timestamp: NaiveDateTime,
    pub shop: ShopId,
    pub register: RegisterId,
    /// Item codes in input order, duplicates removed.
    pub basket: Vec<String>,
    pub profile: BasketProfile,
}

impl Transaction {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date()
    }

    pub fn daypart(&self) -> Daypart {
        Daypart::of(self.timestamp.time())
    }

    pub fn anchor(&self) -> Option<Anchor> {
        self.profile.anchor(self.daypart())
    }

    pub fn contains(&self, item: FocusItem) -> bool {
        self.profile.contains(item, self.daypart())
    }
}

/// One input row before validation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawRecord {
    /// 1-based line (or record) number, used in error messages.
    pub line: usize,
    pub tx_id: String,
    pub person_id: String,
    pub timestamp: String,
    pub shop_id: String,
    pub register_id: String,
    pub items: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarnings {
    /// Basket entries whose code is missing from the catalog.
    pub unknown_item_occurrences: usize,
    pub unknown_codes: BTreeSet<String>,
}

impl IngestWarnings {
    pub fn count(&self) -> usize {
        self.unknown_item_occurrences
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
struct Interner {
    names: Vec<String>,
    #[serde(skip)]
    lookup: BTreeMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }
}

/// Parses `YYYY-MM-DDTHH:MM:SS` (a space separator is also accepted).
pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
}

/// Canonical timestamp rendering used by every writer.
pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    alloc::format!(
        "{:04}-{:02}-{:02}T{:02}:{:02}:{:02}",
        ts.year(),
        ts.month(),
        ts.day(),
        ts.hour(),
        ts.minute(),
        ts.second()
    )
}

struct Pending {
    tx_id: String,
    person: String,
    timestamp: NaiveDateTime,
    shop: String,
    register: String,
    basket: Vec<String>,
}

/// Streaming validator that folds raw records into a [`TransactionLog`].
pub struct LogBuilder<'c> {
    catalog: &'c ItemCatalog,
    pending: Vec<Pending>,
    seen: BTreeMap<String, usize>,
    rejected: Vec<RecordError>,
    warnings: IngestWarnings,
}

impl<'c> LogBuilder<'c> {
    pub fn new(catalog: &'c ItemCatalog) -> Self {
        Self {
            catalog,
            pending: Vec::new(),
            seen: BTreeMap::new(),
            rejected: Vec::new(),
            warnings: IngestWarnings::default(),
        }
    }

    /// Adds one record. Malformed records are set aside in
    /// [`TransactionLog::rejected`]; only a duplicate `tx_id` is fatal.
    pub fn push(&mut self, rec: RawRecord) -> Result<(), ModelError> {
        let line = rec.line;
        let reject = |this: &mut Self, kind| {
            this.rejected.push(RecordError { line, kind });
            Ok(())
        };
        for (name, value) in [
            ("tx_id", &rec.tx_id),
            ("person_id", &rec.person_id),
            ("shop_id", &rec.shop_id),
            ("register_id", &rec.register_id),
        ] {
            if value.trim().is_empty() {
                return reject(self, RecordErrorKind::MissingField(name.to_string()));
            }
        }
        if let Some(&first) = self.seen.get(&rec.tx_id) {
            let _ = first;
            return Err(ModelError::DuplicateTxId { tx_id: rec.tx_id, line });
        }
        let Some(timestamp) = parse_timestamp(&rec.timestamp) else {
            return reject(self, RecordErrorKind::InvalidTimestamp(rec.timestamp));
        };
        let mut basket: Vec<String> = Vec::with_capacity(rec.items.len());
        for item in rec.items {
            let item = item.trim();
            if !item.is_empty() && !basket.iter().any(|b| b == item) {
                basket.push(item.to_string());
            }
        }
        if basket.is_empty() {
            return reject(self, RecordErrorKind::EmptyBasket);
        }
        for code in &basket {
            if self.catalog.get(code).is_none() {
                self.warnings.unknown_item_occurrences += 1;
                self.warnings.unknown_codes.insert(code.clone());
            }
        }
        self.seen.insert(rec.tx_id.clone(), line);
        self.pending.push(Pending {
            tx_id: rec.tx_id,
            person: rec.person_id,
            timestamp,
            shop: rec.shop_id,
            register: rec.register_id,
            basket,
        });
        Ok(())
    }

    pub fn finish(self) -> TransactionLog {
        let mut pending = self.pending;
        pending.sort_by(|a, b| {
            (a.timestamp, &a.shop, &a.register, &a.tx_id).cmp(&(b.timestamp, &b.shop, &b.register, &b.tx_id))
        });
        let mut persons = Interner::default();
        let mut shops = Interner::default();
        let mut registers = Interner::default();
        let mut by_tx_id = BTreeMap::new();
        let transactions: Vec<Transaction> = pending
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                by_tx_id.insert(p.tx_id.clone(), i);
                let profile = self.catalog.profile(&p.basket);
                Transaction {
                    person: PersonId(persons.intern(&p.person)),
                    shop: ShopId(shops.intern(&p.shop)),
                    register: RegisterId(registers.intern(&p.register)),
                    tx_id: p.tx_id,
                    timestamp: p.timestamp,
                    basket: p.basket,
                    profile,
                }
            })
            .collect();
        TransactionLog {
            transactions,
            persons,
            shops,
            registers,
            by_tx_id,
            warnings: self.warnings,
            rejected: self.rejected,
        }
    }
}

/// Validated, timestamp-sorted transactions. Immutable once built.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TransactionLog {
    transactions: Vec<Transaction>,
    persons: Interner,
    shops: Interner,
    registers: Interner,
    by_tx_id: BTreeMap<String, TxIndex>,
    warnings: IngestWarnings,
    rejected: Vec<RecordError>,
}

impl TransactionLog {
    /// Builds a log from records, stopping at the first fatal error.
    pub fn from_records(
        records: impl IntoIterator<Item = RawRecord>,
        catalog: &ItemCatalog,
    ) -> Result<Self, ModelError> {
        let mut builder = LogBuilder::new(catalog);
        for rec in records {
            builder.push(rec)?;
        }
        Ok(builder.finish())
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn tx(&self, index: TxIndex) -> &Transaction {
        &self.transactions[index]
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn find(&self, tx_id: &str) -> Option<TxIndex> {
        self.by_tx_id.get(tx_id).copied()
    }

    pub fn person_count(&self) -> usize {
        self.persons.names.len()
    }

    pub fn person_name(&self, id: PersonId) -> &str {
        &self.persons.names[id.index()]
    }

    pub fn person_id(&self, name: &str) -> Option<PersonId> {
        self.persons.lookup.get(name).copied().map(PersonId)
    }

    pub fn shop_name(&self, id: ShopId) -> &str {
        &self.shops.names[id.index()]
    }

    pub fn register_name(&self, id: RegisterId) -> &str {
        &self.registers.names[id.index()]
    }

    pub fn warnings(&self) -> &IngestWarnings {
        &self.warnings
    }

    pub fn rejected(&self) -> &[RecordError] {
        &self.rejected
    }

    /// Raw records that rebuild this log exactly.
    pub fn to_records(&self) -> impl Iterator<Item = RawRecord> + '_ {
        self.transactions.iter().enumerate().map(|(i, t)| RawRecord {
            line: i + 1,
            tx_id: t.tx_id.clone(),
            person_id: self.person_name(t.person).to_string(),
            timestamp: format_timestamp(&t.timestamp),
            shop_id: self.shop_name(t.shop).to_string(),
            register_id: self.register_name(t.register).to_string(),
            items: t.basket.clone(),
        })
    }
}

// ---------------------------------------------------------------------------
// Demographics

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Student,
    Staff,
    Other,
}

impl Gender {
    pub fn name(self) -> &'static str {
        match self {
            Gender::Female => "female",
            Gender::Male => "male",
        }
    }

    pub fn parse(s: &str) -> Result<Option<Self>, ModelError> {
        match s.trim() {
            "" => Ok(None),
            "female" | "f" | "F" => Ok(Some(Gender::Female)),
            "male" | "m" | "M" => Ok(Some(Gender::Male)),
            other => Err(ModelError::InvalidDemographic { field: "gender", value: other.to_string() }),
        }
    }
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Student => "student",
            Status::Staff => "staff",
            Status::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Result<Option<Self>, ModelError> {
        match s.trim() {
            "" => Ok(None),
            "student" => Ok(Some(Status::Student)),
            "staff" => Ok(Some(Status::Staff)),
            "other" => Ok(Some(Status::Other)),
            other => Err(ModelError::InvalidDemographic { field: "status", value: other.to_string() }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonRecord {
    pub person_id: String,
    pub gender: Option<Gender>,
    pub status: Option<Status>,
    pub birth_year: Option<i32>,
}

/// Demographic attributes keyed by person name.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    records: BTreeMap<String, PersonRecord>,
}

/// Demographics indexed by the interned ids of one log.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PersonTable {
    pub gender: Vec<Option<Gender>>,
    pub status: Vec<Option<Status>>,
    pub birth_year: Vec<Option<i32>>,
}

impl Demographics {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, record: PersonRecord) {
        self.records.insert(record.person_id.clone(), record);
    }

    pub fn get(&self, person: &str) -> Option<&PersonRecord> {
        self.records.get(person)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PersonRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Replaces the status of `person`, creating the record when absent.
    pub fn set_status(&mut self, person: &str, status: Status) {
        self.records
            .entry(person.to_string())
            .or_insert_with(|| PersonRecord {
                person_id: person.to_string(),
                gender: None,
                status: None,
                birth_year: None,
            })
            .status = Some(status);
    }

    /// Resolves records against a log's person ids, checking that every
    /// birth year gives a non-negative age at each of the person's transactions.
    pub fn resolve(&self, log: &TransactionLog) -> Result<PersonTable, ModelError> {
        let n = log.person_count();
        let mut table = PersonTable {
            gender: alloc::vec![None; n],
            status: alloc::vec![None; n],
            birth_year: alloc::vec![None; n],
        };
        for rec in self.records.values() {
            if let Some(id) = log.person_id(&rec.person_id) {
                table.gender[id.index()] = rec.gender;
                table.status[id.index()] = rec.status;
                table.birth_year[id.index()] = rec.birth_year;
            }
        }
        for t in log.transactions() {
            if let Some(by) = table.birth_year[t.person.index()] {
                if t.timestamp.year() < by {
                    return Err(ModelError::NegativeAge {
                        person: log.person_name(t.person).to_string(),
                        timestamp: t.timestamp,
                    });
                }
            }
        }
        Ok(table)
    }
}

impl PersonTable {
    /// Age in years at `timestamp` (transaction year minus birth year).
    pub fn age_at(&self, person: PersonId, timestamp: &NaiveDateTime) -> Option<i32> {
        self.birth_year[person.index()].map(|by| timestamp.year() - by)
    }
}
