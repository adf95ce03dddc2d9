// NaN must fail parameter checks, which negated comparisons express directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod causal;
pub mod data;
pub mod datagen;
pub mod error;
pub mod harness;
pub mod matching;
pub mod metrics;
pub mod ranking;
pub mod rng;
pub mod similarity;
