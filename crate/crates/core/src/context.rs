//! Purchase context per (shop, date, daypart) cell: how popular each focus
//! item was and whether it was available at all.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::model::{Daypart, FocusItem, ShopId, TransactionLog};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub shop: ShopId,
    pub date: NaiveDate,
    pub daypart: Daypart,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellStats {
    pub n_transactions: u32,
    /// Transactions containing each focus item, indexed by [`FocusItem::bit`].
    pub item_counts: [u32; FocusItem::COUNT],
}

impl CellStats {
    pub fn popularity(&self, item: FocusItem) -> f64 {
        if self.n_transactions == 0 {
            return 0.0;
        }
        f64::from(self.item_counts[item.bit()]) / f64::from(self.n_transactions)
    }

    /// Availability proxy: bought at least once in the cell.
    pub fn available(&self, item: FocusItem) -> bool {
        self.item_counts[item.bit()] > 0
    }
}

/// One row of the context dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextRow {
    pub cell: CellKey,
    pub item: FocusItem,
    pub popularity: f64,
    pub available: bool,
    pub n: u32,
}

/// Popularity and availability over all transactions of each studied cell.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextStats {
    cells: BTreeMap<CellKey, CellStats>,
}

impl ContextStats {
    pub fn compute(log: &TransactionLog) -> Self {
        let mut cells: BTreeMap<CellKey, CellStats> = BTreeMap::new();
        for t in log.transactions() {
            let daypart = t.daypart();
            if !daypart.is_studied() {
                continue;
            }
            let key = CellKey { shop: t.shop, date: t.date(), daypart };
            let cell = cells
                .entry(key)
                .or_insert(CellStats { n_transactions: 0, item_counts: [0; FocusItem::COUNT] });
            cell.n_transactions += 1;
            for item in FocusItem::all() {
                if t.profile.contains(item, daypart) {
                    cell.item_counts[item.bit()] += 1;
                }
            }
        }
        Self { cells }
    }

    pub fn cell(&self, key: &CellKey) -> Option<&CellStats> {
        self.cells.get(key)
    }

    pub fn popularity(&self, key: &CellKey, item: FocusItem) -> f64 {
        self.cells.get(key).map_or(0.0, |c| c.popularity(item))
    }

    pub fn available(&self, key: &CellKey, item: FocusItem) -> bool {
        self.cells.get(key).is_some_and(|c| c.available(item))
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CellKey, &CellStats)> {
        self.cells.iter()
    }

    /// Flattened rows for every cell and every item meaningful in its daypart.
    pub fn rows(&self) -> Vec<ContextRow> {
        let mut rows = Vec::new();
        for (key, cell) in &self.cells {
            for item in FocusItem::all().filter(|i| i.applies_to(key.daypart)) {
                rows.push(ContextRow {
                    cell: *key,
                    item,
                    popularity: cell.popularity(item),
                    available: cell.available(item),
                    n: cell.n_transactions,
                });
            }
        }
        rows
    }
}
