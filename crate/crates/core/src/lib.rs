//! Core algorithms for detecting purchasing mimicry in point-of-sale logs.
//!
//! Adjacent transactions at a register are paired into *dyads* (partner then
//! focal person). Dyads are matched on partner identity and purchase context,
//! and the focal person's purchase probability is contrasted between dyads
//! where the partner did and did not buy an item. Around that estimator sit
//! sensitivity analysis, a randomized-partner baseline, a coordination test,
//! status inference for persons without demographics, and a simulator that
//! produces logs with known ground truth.
//!
//! The crate is `no_std` and only needs `alloc`; file formats, the CLI and
//! parallel drivers live in the `mimicry` crate.

#![no_std]
// `!(x >= y)` is how NaN gets rejected alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod baseline;
pub mod context;
pub mod dyads;
pub mod estimate;
pub mod infer;
pub mod matching;
pub mod model;
pub mod pipeline;
pub mod seed;
pub mod sensitivity;
pub mod sim;
pub mod stats;

pub use context::{CellKey, ContextStats};
pub use dyads::{Dyad, DyadSet, Queues};
pub use estimate::{EffectEstimate, PairOutcome, PairedCounts};
pub use matching::{AdjustmentSpec, Caliper, MatchedPair, MatchedPairSet, PopularityMode};
pub use model::{
    AdditionKind, Anchor, BeverageKind, Daypart, Demographics, FocusItem, ItemCatalog,
    ItemCategory, LogBuilder, PersonId, RawRecord, RegisterId, ShopId, Transaction,
    TransactionLog, TxIndex,
};
