// negated comparisons are how range checks reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod apportion;
pub mod cli;
pub mod concepts;
pub mod connect;
pub mod domain;
pub mod error;
pub mod evaluate;
pub mod graph;
pub mod intermit;
pub mod numfmt;
pub mod plan;
pub mod providers;
pub mod scenarios;
pub mod sensitivity;
pub mod stats;

pub use error::{Error, ProviderError, Result};
