//! Comparison methods: Push-DIGing and ADMM with exact local minimization.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphFacts};
use crate::ipd::{self, RoundView, RunConfig, XStep};
use crate::metrics::{self, Method, RelativeCost, RoundFacts, RunDiagnostics, Trace, TraceRecord};
use crate::objectives::{self, BoxedObjective};

/// `v_i` below this is treated as degenerate.
pub const V_UNDERFLOW: f64 = 1e-300;

/// Default gradient-norm tolerance of the exact local solver.
pub const DEFAULT_INNER_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_INNER: usize = 1_000_000;

/// `c_ij = 1/(1 + d_j)` on edges `j -> i` and on the diagonal.
pub fn column_stochastic_c(g: &DirectedGraph) -> DMatrix<f64> {
    let n = g.n();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        let share = 1.0 / (1.0 + g.out_degree(j) as f64);
        c[(j, j)] = share;
        for &i in g.out_neighbors(j) {
            c[(i, j)] = share;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushDigingState {
    pub u: Vec<DVector<f64>>,
    pub v: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    /// Gradient tracker.
    pub y: Vec<DVector<f64>>,
    /// `grad f_i(x_i)` at the current iterate, kept for the tracker correction.
    pub grad: Vec<DVector<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PushDigingConfig {
    pub eta: f64,
    pub max_iter: usize,
    /// Stop at or below this relative cost error.
    pub tol: f64,
}

/// Applies the sparse column-stochastic `C` to per-agent vectors.
fn push<T: Clone>(g: &DirectedGraph, values: &[T], scale: impl Fn(&T, f64) -> T, add: impl Fn(&mut T, &T)) -> Vec<T> {
    (0..g.n())
        .map(|i| {
            let mut acc = scale(&values[i], 1.0 / (1.0 + g.out_degree(i) as f64));
            for &j in g.in_neighbors(i) {
                add(&mut acc, &scale(&values[j], 1.0 / (1.0 + g.out_degree(j) as f64)));
            }
            acc
        })
        .collect()
}

fn push_vectors(g: &DirectedGraph, values: &[DVector<f64>]) -> Vec<DVector<f64>> {
    push(g, values, |v, s| v * s, |a, b| *a += b)
}

pub fn run_push_diging(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &PushDigingConfig,
) -> Result<Trace> {
    run_push_diging_observed(g, facts, objectives, f_star, config, &mut |_, _| {})
}

/// [`run_push_diging`] with a callback after every round (round 0 is the initial state).
pub fn run_push_diging_observed(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &PushDigingConfig,
    observer: &mut dyn FnMut(usize, &PushDigingState),
) -> Result<Trace> {
    let n = g.n();
    if !facts.strongly_connected {
        return Err(Error::InvalidTopology("graph is not strongly connected".into()));
    }
    if objectives.len() != n {
        return Err(Error::InvalidInput(format!("{} objectives for {n} agents", objectives.len())));
    }
    if !(config.eta > 0.0 && config.eta.is_finite()) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {}", config.eta)));
    }
    if config.max_iter == 0 {
        return Err(Error::InvalidInput("max_iter must be at least 1".into()));
    }
    let d = objectives::common_dim(objectives)?;
    let zero = DVector::zeros(d);
    let x0 = vec![zero.clone(); n];
    let grad: Vec<DVector<f64>> = objectives.iter().map(|f| f.gradient(&zero)).collect();
    let mut state = PushDigingState {
        u: x0.clone(),
        v: vec![1.0; n],
        x: x0.clone(),
        y: grad.clone(),
        grad,
    };
    let cost = RelativeCost::new(objectives, &x0, n as f64 * f_star)?;
    let ledger = |agents: usize| {
        metrics::cost_ledger_update(
            Method::PushDiging,
            RoundFacts {
                active_agents: agents,
                relaying_agents: 0,
                dim: d,
                inner_rounds: 1,
                inner_gradient_evals: 0,
            },
        )
    };
    // initial tracker needs one gradient per agent
    let (mut gradient_evals, _) = ledger(n);
    let mut broadcast_scalars = 0u64;
    let record = |round: usize, x: &[DVector<f64>], grads: u64, scalars: u64| TraceRecord {
        round,
        relative_cost_error: cost.eval(x),
        consensus_residual: metrics::consensus_residual(x),
        primal_gap: f64::NAN,
        dual_sum_norm: f64::NAN,
        gradient_evals: grads,
        broadcast_scalars: scalars,
        active_count: if round == 0 { 0 } else { n },
    };
    let mut records = vec![record(0, &state.x, gradient_evals, 0)];
    observer(0, &state);

    for round in 1..=config.max_iter {
        let shifted: Vec<DVector<f64>> = state.u.iter().zip(&state.y).map(|(u, y)| u - y * config.eta).collect();
        let u = push_vectors(g, &shifted);
        let v = push(g, &state.v, |v, s| v * s, |a, b| *a += b);
        if let Some(i) = v.iter().position(|&vi| !(vi >= V_UNDERFLOW)) {
            return Err(Error::NumericDegeneracy {
                round,
                msg: format!("v_{i} = {:e} underflowed", v[i]),
            });
        }
        let x: Vec<DVector<f64>> = u.iter().zip(&v).map(|(u, &vi)| u / vi).collect();
        let new_grad: Vec<DVector<f64>> = x.par_iter().zip(objectives.par_iter()).map(|(x, f)| f.gradient(x)).collect();
        let mut y = push_vectors(g, &state.y);
        for ((yi, gn), go) in y.iter_mut().zip(&new_grad).zip(&state.grad) {
            *yi += gn - go;
        }
        for (i, xi) in x.iter().enumerate() {
            let norm = xi.norm();
            if !norm.is_finite() || norm > ipd::DIVERGENCE_LIMIT {
                return Err(Error::Divergence {
                    round,
                    msg: format!("agent {i} has |x| = {norm:e}"),
                });
            }
        }
        state = PushDigingState {
            u,
            v,
            x,
            y,
            grad: new_grad,
        };
        let (grads, scalars) = ledger(n);
        gradient_evals += grads;
        broadcast_scalars += scalars;
        let rec = record(round, &state.x, gradient_evals, broadcast_scalars);
        let done = rec.relative_cost_error <= config.tol;
        records.push(rec);
        observer(round, &state);
        if done {
            break;
        }
    }

    Ok(Trace {
        method: Method::PushDiging,
        records,
        final_x: state.x,
        diagnostics: RunDiagnostics::default(),
    })
}

/// ADMM whose x-step minimizes the local augmented Lagrangian to `inner_tol`
/// by gradient descent; z and dual steps as in IPD.
pub fn run_exact_admm(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &RunConfig,
    inner_tol: f64,
    max_inner: usize,
) -> Result<Trace> {
    run_exact_admm_observed(g, facts, objectives, f_star, config, inner_tol, max_inner, &mut |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn run_exact_admm_observed(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &RunConfig,
    inner_tol: f64,
    max_inner: usize,
    observer: &mut dyn FnMut(&RoundView<'_>),
) -> Result<Trace> {
    if !(inner_tol > 0.0) {
        return Err(Error::InvalidInput(format!("inner_tol must be positive, got {inner_tol}")));
    }
    if max_inner == 0 {
        return Err(Error::InvalidInput("max_inner must be at least 1".into()));
    }
    ipd::run_engine(g, facts, objectives, f_star, config, XStep::Exact { inner_tol, max_inner }, observer)
}
