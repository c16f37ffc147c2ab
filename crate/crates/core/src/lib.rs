//! Cost-aware sparse portfolio construction and rebalancing.
//!
//! The crate is organised bottom-up:
//!
//! * [`moments`] estimates mean vectors and (shrunk) covariance matrices.
//! * [`solver`] solves hyperplane-constrained quadratic programs with
//!   per-coordinate ℓ1 weights, the workhorse behind every strategy.
//! * [`strategy`] assembles the benchmark strategies (1/N, MV, PMV, CMV) and
//!   the cost-aware estimators (CAPE-L, CAPE-S via local linear approximation
//!   of the SCAD penalty), oracle solutions and λ tuning.
//! * [`backtest`] runs the multi-stage construction / drift / rebalance loop
//!   and computes turnover, leverage, cost and Sharpe statistics.
//! * [`simgen`] generates three-factor synthetic return panels.
//! * [`experiment`] wires the pieces into replicated simulation studies.
//! * [`io`] and [`config`] read and write the CSV and key=value formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN as well

pub mod backtest;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod moments;
pub mod simgen;
pub mod solver;
pub mod strategy;

pub use error::{Error, Result};
