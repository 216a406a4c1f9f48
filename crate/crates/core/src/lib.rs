//! Distributed optimization over directed graphs with an inexact ADMM
//! (one gradient step per round, weight-balanced averaging for the
//! consensus step, Bernoulli agent participation), plus Push-DIGing and an
//! exact-local-step ADMM for comparison.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod balancing;
pub mod baselines;
pub mod error;
pub mod graph;
pub mod harness;
pub mod ipd;
pub mod metrics;
pub mod objectives;

pub use error::{Error, Result};
pub use graph::{DirectedGraph, GraphFacts};
pub use ipd::{run_ipd, RunConfig};
pub use metrics::{Trace, TraceRecord};
pub use objectives::Objective;
