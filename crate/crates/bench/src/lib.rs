//! Experiment harness for the splinekrr predictors: configuration files,
//! sweeps with incremental result tables, SVG plots and a property self-test.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod plot;
pub mod runner;
pub mod selftest;
