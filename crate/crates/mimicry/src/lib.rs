//! File formats, parallel stage drivers, plots and the `mimicry` command line
//! on top of `mimicry-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod config;
pub mod io;
pub mod plot;
pub mod report;
pub mod schema;
