//! The IPD engine: inexact ADMM over a directed graph.
//!
//! Every outer round each active agent takes one gradient step on its local
//! augmented Lagrangian, seeds its consensus proxy `xi` with the new iterate,
//! runs `B` rounds of broadcast + weight balancing + weighted averaging, takes
//! the result as `z`, and finishes with a dual ascent step. Inactive agents
//! freeze their whole state; whatever they last broadcast stays in their
//! out-neighbors' buffers.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::balancing::{self, BalanceRule, WeightInit, WeightState};
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphFacts};
use crate::metrics::{self, Method, RelativeCost, RoundFacts, RunDiagnostics, Trace, TraceRecord};
use crate::objectives::{self, BoxedObjective, Objective};

/// State norms above this abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub enum Participation {
    Full,
    /// Every agent active with the same probability.
    Uniform(f64),
    PerAgent(Vec<f64>),
}

impl Participation {
    pub fn probabilities(&self, n: usize) -> Vec<f64> {
        match self {
            Participation::Full => vec![1.0; n],
            Participation::Uniform(q) => vec![*q; n],
            Participation::PerAgent(q) => q.clone(),
        }
    }

    pub fn q_min(&self, n: usize) -> f64 {
        self.probabilities(n).into_iter().fold(1.0, f64::min)
    }
}

/// What agents that were not drawn active do during a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InactivePolicy {
    /// Nothing: no step, no broadcast, no averaging. Out-neighbors keep the
    /// last values they received.
    #[default]
    Frozen,
    /// Skip only the gradient step; still seed `xi` from the held `x`,
    /// average, and take the dual step.
    Relay,
}

/// What seeds the averaging proxy at the start of the inner loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum XiSeed {
    /// `xi_i(0) = x_i^{k+1}`.
    #[default]
    Primal,
    /// `xi_i(0) = x_i^{k+1} + y_i^k / rho`, the argument of the exact z-minimizer's average.
    PrimalPlusScaledDual,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub eta: f64,
    pub rho: f64,
    pub inner_rounds: usize,
    pub participation: Participation,
    /// Contraction factor assumed when deriving parameters; recorded, not used by the loop.
    pub delta: f64,
    pub seed: u64,
    pub max_outer_iterations: usize,
    /// Stop once the relative cost error is at or below this.
    pub stop_tolerance: f64,
    pub balance_rule: BalanceRule,
    pub weight_init: WeightInit,
    pub xi_seed: XiSeed,
    pub inactive_policy: InactivePolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            rho: 0.01,
            inner_rounds: 1,
            participation: Participation::Full,
            delta: 0.9,
            seed: 0,
            max_outer_iterations: 1000,
            stop_tolerance: 0.0,
            balance_rule: BalanceRule::default(),
            weight_init: WeightInit::default(),
            xi_seed: XiSeed::default(),
            inactive_policy: InactivePolicy::default(),
        }
    }
}

impl RunConfig {
    /// Stepsize, penalty and inner rounds from a rate certificate.
    pub fn from_certificate(cert: &metrics::RateCertificate, delta: f64) -> Self {
        Self {
            eta: cert.eta,
            rho: cert.rho,
            inner_rounds: cert.b_used,
            delta,
            ..Self::default()
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta must be positive, got {}", self.eta));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho must be positive, got {}", self.rho));
        }
        if self.inner_rounds == 0 {
            return bad("inner rounds B must be at least 1".into());
        }
        if self.max_outer_iterations == 0 {
            return bad("max_outer_iterations must be at least 1".into());
        }
        if !(self.stop_tolerance >= 0.0) {
            return bad(format!("stop tolerance must be nonnegative, got {}", self.stop_tolerance));
        }
        let q = self.participation.probabilities(n);
        if q.len() != n {
            return bad(format!("{} activation probabilities for {n} agents", q.len()));
        }
        if let Some(v) = q.iter().find(|&&v| !(v > 0.0 && v <= 1.0)) {
            return bad(format!("activation probability {v} outside (0, 1]"));
        }
        Ok(())
    }
}

/// Seeded Bernoulli activations, replayable per round.
#[derive(Debug, Clone)]
pub struct ActivationSchedule {
    seed: u64,
    q: Vec<f64>,
    always: bool,
}

impl ActivationSchedule {
    pub fn new(participation: &Participation, n: usize, seed: u64) -> Self {
        Self {
            seed,
            q: participation.probabilities(n),
            always: matches!(participation, Participation::Full),
        }
    }

    /// Mask for outer round `k`; one uniform draw per agent from the stream keyed by `(seed, k)`.
    pub fn mask(&self, k: usize) -> Vec<bool> {
        if self.always {
            return vec![true; self.q.len()];
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(k as u64);
        self.q
            .iter()
            .map(|&q| {
                let u: f64 = rng.random();
                u < q
            })
            .collect()
    }
}

pub fn draw_activation(config: &RunConfig, n: usize, k: usize) -> Vec<bool> {
    ActivationSchedule::new(&config.participation, n, config.seed).mask(k)
}

/// `x - eta (grad + y + rho (x - z))`.
pub fn local_x_step(
    x: &DVector<f64>,
    z: &DVector<f64>,
    y: &DVector<f64>,
    grad: &DVector<f64>,
    eta: f64,
    rho: f64,
) -> Result<DVector<f64>> {
    let next = x - (grad + y + (x - z) * rho) * eta;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            round: 0,
            msg: "local step produced a non-finite iterate".into(),
        });
    }
    Ok(next)
}

/// `y + rho (x - z)`.
pub fn dual_step(y: &DVector<f64>, x: &DVector<f64>, z: &DVector<f64>, rho: f64) -> DVector<f64> {
    y + (x - z) * rho
}

/// `(1 - d_i w_i) xi_i + sum_j w_j xi_j` over the in-neighbors' broadcasts.
fn mix<'a>(
    own_weight: f64,
    own_xi: &DVector<f64>,
    out_degree: usize,
    received: impl Iterator<Item = (f64, &'a DVector<f64>)>,
) -> DVector<f64> {
    let mut next = own_xi * (1.0 - out_degree as f64 * own_weight);
    for (w, xi) in received {
        next.axpy(w, xi, 1.0);
    }
    next
}

/// One averaging round where every agent reads the given `(w, xi)` of its
/// in-neighbors; inactive agents keep their `xi`.
pub fn averaging_round(
    g: &DirectedGraph,
    xi: &[DVector<f64>],
    w: &WeightState,
    active: &[bool],
) -> Result<Vec<DVector<f64>>> {
    let weights = w.as_slice();
    if xi.len() != g.n() || weights.len() != g.n() || active.len() != g.n() {
        return Err(Error::InvalidState("averaging inputs disagree on agent count".into()));
    }
    (0..g.n())
        .map(|i| {
            if !active[i] {
                return Ok(xi[i].clone());
            }
            balancing::check_weight(g, i, weights[i])?;
            let received = g.in_neighbors(i).iter().map(|&j| (weights[j], &xi[j]));
            Ok(mix(weights[i], &xi[i], g.out_degree(i), received))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Broadcast {
    pub w: f64,
    pub xi: DVector<f64>,
}

/// Local state of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub w: f64,
    pub xi: DVector<f64>,
    /// Last `(w, xi)` this agent broadcast. Every out-neighbor buffers exactly
    /// this message, so it stands in for the per-edge buffers.
    pub sent: Broadcast,
}

impl AgentState {
    /// What agent `i` holds in its buffer for in-neighbor `j`.
    pub fn buffered(agents: &[AgentState], j: usize) -> &Broadcast {
        &agents[j].sent
    }
}

/// Read-only view handed to observers after every round (round 0 is the initial state).
pub struct RoundView<'a> {
    pub round: usize,
    pub agents: &'a [AgentState],
    pub active: &'a [bool],
}

/// How the primal step is taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum XStep {
    /// One gradient step.
    Inexact,
    /// Gradient descent on the local augmented Lagrangian to a gradient-norm tolerance.
    Exact { inner_tol: f64, max_inner: usize },
}

pub fn run_ipd(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &RunConfig,
) -> Result<Trace> {
    run_ipd_observed(g, facts, objectives, f_star, config, &mut |_| {})
}

/// [`run_ipd`] with a callback after each round.
pub fn run_ipd_observed(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &RunConfig,
    observer: &mut dyn FnMut(&RoundView<'_>),
) -> Result<Trace> {
    run_engine(g, facts, objectives, f_star, config, XStep::Inexact, observer)
}

fn exact_local_solve(
    f: &dyn Objective,
    start: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    rho: f64,
    inner_tol: f64,
    max_inner: usize,
) -> std::result::Result<(DVector<f64>, usize), (usize, f64)> {
    let step = 1.0 / (f.smoothness() + rho);
    let mut x = start.clone();
    let mut evals = 0;
    loop {
        let g = f.gradient(&x) + y + (&x - z) * rho;
        evals += 1;
        let norm = g.norm();
        if norm <= inner_tol {
            return Ok((x, evals));
        }
        if evals >= max_inner || !norm.is_finite() {
            return Err((evals, norm));
        }
        x.axpy(-step, &g, 1.0);
    }
}

/// Minimizer of `f(x) + y.x + (rho/2)||x - z||^2` by gradient descent with
/// stepsize `1/(M_f + rho)`, warm-started at `start`. Returns the point and
/// the number of gradient evaluations.
pub fn solve_local_subproblem(
    f: &dyn Objective,
    start: &DVector<f64>,
    y: &DVector<f64>,
    z: &DVector<f64>,
    rho: f64,
    inner_tol: f64,
    max_inner: usize,
) -> Result<(DVector<f64>, usize)> {
    exact_local_solve(f, start, y, z, rho, inner_tol, max_inner).map_err(|(iterations, grad_norm)| Error::InnerSolve {
        agent: 0,
        iterations,
        grad_norm,
    })
}

fn check_state(round: usize, agent: usize, v: &DVector<f64>, what: &str) -> Result<()> {
    let norm = v.norm();
    if !norm.is_finite() || norm > DIVERGENCE_LIMIT {
        return Err(Error::Divergence {
            round,
            msg: format!("agent {agent} has |{what}| = {norm:e}"),
        });
    }
    Ok(())
}

fn snapshot(
    round: usize,
    agents: &[AgentState],
    cost: &RelativeCost<'_>,
    gradient_evals: u64,
    broadcast_scalars: u64,
    active_count: usize,
) -> TraceRecord {
    let x: Vec<DVector<f64>> = agents.iter().map(|a| a.x.clone()).collect();
    let d = x[0].len();
    let primal_gap = agents.iter().map(|a| (&a.x - &a.z).norm_squared()).sum::<f64>().sqrt();
    let dual_sum = agents.iter().fold(DVector::zeros(d), |acc, a| acc + &a.y);
    TraceRecord {
        round,
        relative_cost_error: cost.eval(&x),
        consensus_residual: metrics::consensus_residual(&x),
        primal_gap,
        dual_sum_norm: dual_sum.norm(),
        gradient_evals,
        broadcast_scalars,
        active_count,
    }
}

pub(crate) fn run_engine(
    g: &DirectedGraph,
    facts: &GraphFacts,
    objectives: &[BoxedObjective],
    f_star: f64,
    config: &RunConfig,
    xstep: XStep,
    observer: &mut dyn FnMut(&RoundView<'_>),
) -> Result<Trace> {
    let n = g.n();
    if !facts.strongly_connected {
        return Err(Error::InvalidTopology("graph is not strongly connected".into()));
    }
    if objectives.len() != n {
        return Err(Error::InvalidInput(format!("{} objectives for {n} agents", objectives.len())));
    }
    let d = objectives::common_dim(objectives)?;
    config.validate(n)?;
    let method = match xstep {
        XStep::Inexact => Method::Ipd,
        XStep::Exact { .. } => Method::ExactAdmm,
    };

    let w0 = balancing::initial_weights(g, facts, config.weight_init, config.balance_rule)?;
    let zero = DVector::zeros(d);
    let mut agents: Vec<AgentState> = (0..n)
        .map(|i| AgentState {
            x: zero.clone(),
            y: zero.clone(),
            z: zero.clone(),
            w: w0.as_slice()[i],
            xi: zero.clone(),
            sent: Broadcast {
                w: w0.as_slice()[i],
                xi: zero.clone(),
            },
        })
        .collect();

    let x0: Vec<DVector<f64>> = vec![zero.clone(); n];
    let cost = RelativeCost::new(objectives, &x0, n as f64 * f_star)?;
    let schedule = ActivationSchedule::new(&config.participation, n, config.seed);
    let mut diagnostics = RunDiagnostics::default();
    let mut gradient_evals = 0u64;
    let mut broadcast_scalars = 0u64;

    let mut records = vec![snapshot(0, &agents, &cost, 0, 0, 0)];
    observer(&RoundView {
        round: 0,
        agents: &agents,
        active: &vec![false; n],
    });

    for round in 1..=config.max_outer_iterations {
        let active = schedule.mask(round - 1);
        let active_count = active.iter().filter(|&&a| a).count();
        let talks: Vec<bool> = match config.inactive_policy {
            InactivePolicy::Frozen => active.clone(),
            InactivePolicy::Relay => vec![true; n],
        };
        let relaying = talks.iter().filter(|&&t| t).count() - active_count;
        let full = active_count + relaying == n;

        // primal step
        let steps: Vec<Result<(DVector<f64>, usize)>> = agents
            .par_iter()
            .enumerate()
            .map(|(i, a)| {
                if !active[i] {
                    return Ok((a.x.clone(), 0));
                }
                match xstep {
                    XStep::Inexact => {
                        let grad = objectives[i].gradient(&a.x);
                        local_x_step(&a.x, &a.z, &a.y, &grad, config.eta, config.rho)
                            .map(|x| (x, 1))
                            .map_err(|_| Error::Divergence {
                                round,
                                msg: format!("agent {i} produced a non-finite iterate"),
                            })
                    }
                    XStep::Exact { inner_tol, max_inner } => {
                        exact_local_solve(objectives[i].as_ref(), &a.x, &a.y, &a.z, config.rho, inner_tol, max_inner)
                            .map_err(|(iterations, grad_norm)| Error::InnerSolve {
                                agent: i,
                                iterations,
                                grad_norm,
                            })
                    }
                }
            })
            .collect();
        let mut inner_evals = 0u64;
        for (i, step) in steps.into_iter().enumerate() {
            let (x, evals) = step?;
            if active[i] {
                check_state(round, i, &x, "x")?;
                agents[i].x = x;
                inner_evals += evals as u64;
                diagnostics.max_inner_iterations = diagnostics.max_inner_iterations.max(evals);
            }
            if talks[i] {
                let a = &mut agents[i];
                a.xi = match config.xi_seed {
                    XiSeed::Primal => a.x.clone(),
                    XiSeed::PrimalPlusScaledDual => &a.x + &a.y / config.rho,
                };
            }
        }

        // inner averaging rounds
        for _ in 0..config.inner_rounds {
            let before = full.then(|| coordinate_sums(&agents, d));
            for a in agents.iter_mut().zip(&talks).filter(|(_, &t)| t).map(|(a, _)| a) {
                a.sent.w = a.w;
                a.sent.xi.copy_from(&a.xi);
            }
            let updates: Vec<Option<(DVector<f64>, f64)>> = (0..n)
                .map(|i| {
                    if !talks[i] {
                        return Ok(None);
                    }
                    let a = &agents[i];
                    balancing::check_weight(g, i, a.w)?;
                    let received = g.in_neighbors(i).iter().map(|&j| {
                        let b = AgentState::buffered(&agents, j);
                        (b.w, &b.xi)
                    });
                    let xi = mix(a.w, &a.xi, g.out_degree(i), received);
                    let w = balancing::updated_weight(g, config.balance_rule, i, a.w, |j| {
                        AgentState::buffered(&agents, j).w
                    });
                    Ok(Some((xi, w)))
                })
                .collect::<Result<_>>()?;
            for (a, update) in agents.iter_mut().zip(updates) {
                if let Some((xi, w)) = update {
                    a.xi = xi;
                    a.w = w;
                }
            }
            if let Some((sums, scale)) = before {
                let (after, _) = coordinate_sums(&agents, d);
                for l in 0..d {
                    if scale[l] > 0.0 {
                        let drift = (after[l] - sums[l]).abs() / scale[l];
                        diagnostics.max_xi_sum_drift = diagnostics.max_xi_sum_drift.max(drift);
                    }
                }
            }
        }

        // consensus proxy and dual ascent
        for i in (0..n).filter(|&i| talks[i]) {
            let a = &mut agents[i];
            a.z = a.xi.clone();
            a.y = dual_step(&a.y, &a.x, &a.z, config.rho);
            check_state(round, i, &a.z, "z")?;
            check_state(round, i, &a.y, "y")?;
        }

        let (grads, scalars) = metrics::cost_ledger_update(
            method,
            RoundFacts {
                active_agents: active_count,
                relaying_agents: relaying,
                dim: d,
                inner_rounds: config.inner_rounds,
                inner_gradient_evals: inner_evals,
            },
        );
        gradient_evals += grads;
        broadcast_scalars += scalars;

        let record = snapshot(round, &agents, &cost, gradient_evals, broadcast_scalars, active_count);
        diagnostics.max_dual_sum_norm = diagnostics.max_dual_sum_norm.max(record.dual_sum_norm);
        let done = record.relative_cost_error <= config.stop_tolerance;
        if !record.relative_cost_error.is_finite() {
            return Err(Error::Divergence {
                round,
                msg: "relative cost error is not finite".into(),
            });
        }
        records.push(record);
        observer(&RoundView {
            round,
            agents: &agents,
            active: &active,
        });
        if done {
            break;
        }
    }

    Ok(Trace {
        method,
        records,
        final_x: agents.into_iter().map(|a| a.x).collect(),
        diagnostics,
    })
}

/// Per-coordinate `sum_i xi_i` and `sum_i |xi_i|`.
fn coordinate_sums(agents: &[AgentState], d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sums = vec![0.0; d];
    let mut scale = vec![0.0; d];
    for a in agents {
        for l in 0..d {
            sums[l] += a.xi[l];
            scale[l] += a.xi[l].abs();
        }
    }
    (sums, scale)
}
