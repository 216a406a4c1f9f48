//! Weight balancing and the induced mixing matrix `W = I - (D - A) diag(w)`.
//!
//! `W` is column-stochastic for any weights; it becomes doubly stochastic once
//! `d_i w_i = sum_{j in N_in(i)} w_j` for every agent, which is the fixed
//! point of the receiver-degree recursion
//! `w_i <- (w_i + (1/d_i) sum_{j in N_in(i)} w_j) / 2`. In `u = D w`
//! coordinates that recursion is exactly `u <- P u`, so the imbalance decays
//! at rate `lambda2(P)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphFacts};

/// Which degree divides the in-neighbor sum in the weight update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BalanceRule {
    /// `w_i <- (w_i + (1/d_i) sum_j w_j) / 2`. Converges to balanced weights.
    #[default]
    ReceiverDegree,
    /// `w <- P w`, i.e. `w_i <- (w_i + sum_j w_j / d_j) / 2`. Preserves
    /// `sum w` but only balances regular graphs.
    SenderDegree,
}

/// How every agent picks its starting weight.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum WeightInit {
    /// `d_max^-(2 phi + 1)`.
    DegreeBound,
    /// Largest uniform weight that keeps every diagonal entry of `W` at or
    /// above 1/2 under any activation pattern (see [`safe_uniform_weight`]).
    #[default]
    Safe,
    Uniform(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightState {
    w: Vec<f64>,
}

impl WeightState {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(i) = w.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidState(format!("weight of agent {i} is {}", w[i])));
        }
        Ok(Self { w })
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.w
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

/// New weight of agent `i` given its own weight and the (possibly buffered)
/// weights of its in-neighbors.
pub(crate) fn updated_weight(
    g: &DirectedGraph,
    rule: BalanceRule,
    i: usize,
    own: f64,
    neighbor_weight: impl Fn(usize) -> f64,
) -> f64 {
    let d_i = g.out_degree(i);
    if d_i == 0 {
        // only the single-agent graph has an agent that cannot send
        return own;
    }
    let inflow: f64 = match rule {
        BalanceRule::ReceiverDegree => {
            g.in_neighbors(i).iter().map(|&j| neighbor_weight(j)).sum::<f64>() / d_i as f64
        }
        BalanceRule::SenderDegree => g
            .in_neighbors(i)
            .iter()
            .map(|&j| neighbor_weight(j) / g.out_degree(j) as f64)
            .sum(),
    };
    0.5 * (own + inflow)
}

/// One synchronous balancing round for all agents.
pub fn balance_step(g: &DirectedGraph, w: &WeightState, rule: BalanceRule) -> Result<WeightState> {
    check_len(g, w)?;
    if g.n() > 1 {
        if let Some(agent) = (0..g.n()).find(|&i| g.out_degree(i) == 0) {
            return Err(Error::ZeroOutDegree { agent });
        }
    }
    let next = (0..g.n())
        .map(|i| updated_weight(g, rule, i, w.w[i], |j| w.w[j]))
        .collect();
    WeightState::new(next)
}

/// `|| d_i w_i - sum_{j in N_in(i)} w_j ||_2`; zero iff `W` is doubly stochastic.
pub fn balance_residual(g: &DirectedGraph, w: &WeightState) -> f64 {
    (0..g.n())
        .map(|i| {
            let inflow: f64 = g.in_neighbors(i).iter().map(|&j| w.w[j]).sum();
            let r = g.out_degree(i) as f64 * w.w[i] - inflow;
            r * r
        })
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn check_weight(g: &DirectedGraph, i: usize, w: f64) -> Result<()> {
    let d = g.out_degree(i);
    if d > 0 && w * d as f64 > 1.0 {
        return Err(Error::WeightTooLarge {
            agent: i,
            weight: w,
            limit: 1.0 / d as f64,
        });
    }
    Ok(())
}

/// Dense `W = I - (D - A) diag(w)`.
pub fn mixing_matrix(g: &DirectedGraph, w: &WeightState) -> Result<DMatrix<f64>> {
    check_len(g, w)?;
    let n = g.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        check_weight(g, i, w.w[i])?;
        m[(i, i)] = 1.0 - g.out_degree(i) as f64 * w.w[i];
        for &j in g.in_neighbors(i) {
            m[(i, j)] = w.w[j];
        }
    }
    Ok(m)
}

/// Perron vector of `P`, normalized to sum 1, by power iteration.
pub fn perron_vector(g: &DirectedGraph) -> Result<DVector<f64>> {
    let p = g.build_p()?;
    let n = g.n();
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let next = &p * &v;
        let delta = (&next - &v).lp_norm(1);
        v = next;
        if delta < 1e-15 {
            break;
        }
    }
    Ok(v)
}

/// Uniform starting weight `w0` such that `d_i w_i <= 1/2` for every agent at
/// every round, whatever the activation pattern and however stale the
/// buffered weights are.
///
/// Receiver rule: with `u = D w` and `pi` the Perron vector of `P`, any update
/// maps `u <= R pi` (componentwise, over current and buffered values) to
/// `u <= R pi`, with `R = w0 max_j d_j / pi_j`. Sender rule: the same argument
/// runs on `w` directly.
pub fn safe_uniform_weight(g: &DirectedGraph, rule: BalanceRule) -> Result<f64> {
    if g.n() == 1 {
        return Ok(1.0);
    }
    let pi = perron_vector(g)?;
    let d: Vec<f64> = g.out_degrees().into_iter().map(|d| d as f64).collect();
    let (numer, denom) = match rule {
        BalanceRule::ReceiverDegree => {
            let pi_max = pi.max();
            let ratio = (0..g.n()).map(|j| d[j] / pi[j]).fold(0.0, f64::max);
            (1.0, 2.0 * pi_max * ratio)
        }
        BalanceRule::SenderDegree => {
            let peak = (0..g.n()).map(|i| d[i] * pi[i]).fold(0.0, f64::max);
            let inv = (0..g.n()).map(|j| 1.0 / pi[j]).fold(0.0, f64::max);
            (1.0, 2.0 * peak * inv)
        }
    };
    Ok(numer / denom)
}

pub fn initial_weights(
    g: &DirectedGraph,
    facts: &GraphFacts,
    init: WeightInit,
    rule: BalanceRule,
) -> Result<WeightState> {
    let value = match init {
        WeightInit::DegreeBound => facts.initial_weight_bound()?,
        WeightInit::Safe => safe_uniform_weight(g, rule)?,
        WeightInit::Uniform(v) => v,
    };
    WeightState::uniform(g.n(), value)
}

fn check_len(g: &DirectedGraph, w: &WeightState) -> Result<()> {
    if w.len() != g.n() {
        return Err(Error::InvalidState(format!(
            "{} weights for {} agents",
            w.len(),
            g.n()
        )));
    }
    Ok(())
}
