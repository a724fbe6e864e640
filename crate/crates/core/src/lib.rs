//! Desk-scale toolkit for energy-aware base-station on/off control.
//!
//! The crate simulates a dense downlink deployment (many small base
//! stations cooperatively serving a handful of mobiles in a square area),
//! computes exact per-mobile rates and the three-part network power
//! ledger, and exposes two linear-programming oracles: a feasibility
//! probe (degree of infeasibility of a mode vector) and a minimum
//! transmit-power allocator. On top of those sit classical on/off
//! baselines and a deep Q-learning agent whose action space is pruned by
//! two learned selection heads before the argmax.
//!
//! Module map:
//! - [`env`] — geometry, mobility, large-scale fading, state vectors
//! - [`powermodel`] — rates, power breakdown, reward
//! - [`lp`] — two-phase simplex and the two problem builders
//! - [`nn`] — dense feed-forward nets with backprop and SGD/Adam
//! - [`agent`] — replay memory, action filtering, training loop
//! - [`baselines`] — full association, sequential on/off, exhaustive on/off
//! - [`harness`] — experiment orchestration, sweeps, CSV metrics

pub mod agent;
pub mod baselines;
pub mod env;
pub mod error;
pub mod harness;
pub mod lp;
pub mod nn;
pub mod powermodel;

pub use error::{Error, Result};
