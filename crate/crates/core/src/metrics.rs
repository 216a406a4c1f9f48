//! Convergence metrics, cost accounting, rate certificates and rate fitting.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objectives::BoxedObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Ipd,
    PushDiging,
    ExactAdmm,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ipd, Method::PushDiging, Method::ExactAdmm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ipd => "ipd",
            Method::PushDiging => "push_diging",
            Method::ExactAdmm => "exact_admm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "ipd" => Ok(Method::Ipd),
            "push_diging" | "push-diging" => Ok(Method::PushDiging),
            "exact_admm" | "exact-admm" => Ok(Method::ExactAdmm),
            other => Err(format!("unknown method `{other}` (expected ipd, push_diging or exact_admm)")),
        }
    }
}

/// One row of a convergence trace. Column order of the CSV follows field order.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub round: usize,
    pub relative_cost_error: f64,
    /// `||x - 1 (x) mean(x)||` over the stacked local iterates.
    pub consensus_residual: f64,
    /// `||x - z||`; NaN for methods without a consensus proxy.
    pub primal_gap: f64,
    /// `||sum_i y_i||`; NaN for methods without a dual variable.
    pub dual_sum_norm: f64,
    pub gradient_evals: u64,
    pub broadcast_scalars: u64,
    pub active_count: usize,
}

impl TraceRecord {
    pub const CSV_HEADER: &'static str = "round,relative_cost_error,consensus_residual,primal_gap,dual_sum_norm,gradient_evals,broadcast_scalars,active_count";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.round,
            fmt_float(self.relative_cost_error),
            fmt_float(self.consensus_residual),
            fmt_float(self.primal_gap),
            fmt_float(self.dual_sum_norm),
            self.gradient_evals,
            self.broadcast_scalars,
            self.active_count
        )
    }
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        format!("{v}")
    }
}

/// Per-run diagnostics that are not part of the CSV schema.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunDiagnostics {
    /// Largest relative change of a per-coordinate `sum_i xi_i` across one
    /// inner averaging step (only tracked under full participation).
    pub max_xi_sum_drift: f64,
    /// Largest `||sum_i y_i||` seen over the run.
    pub max_dual_sum_norm: f64,
    /// Largest gradient-evaluation count of a single inner solve (exact ADMM).
    pub max_inner_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
    pub final_x: Vec<DVector<f64>>,
    pub diagnostics: RunDiagnostics,
}

impl Trace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("traces always hold the round-0 record")
    }

    /// First record at or below `tol`.
    pub fn first_below(&self, tol: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.relative_cost_error <= tol)
    }

    pub fn rounds_to(&self, tol: f64) -> Option<usize> {
        self.first_below(tol).map(|r| r.round)
    }

    pub fn cost_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.relative_cost_error).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.records.len() * 128);
        out.push_str(TraceRecord::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&r.to_csv_row());
            out.push('\n');
        }
        out
    }

    pub fn average_iterate(&self) -> DVector<f64> {
        mean(&self.final_x)
    }
}

pub fn mean(x: &[DVector<f64>]) -> DVector<f64> {
    let d = x.first().map_or(0, DVector::len);
    x.iter().fold(DVector::zeros(d), |acc, xi| acc + xi) / x.len() as f64
}

/// `||x - 1 (x) mean(x)||_2` over the stacked vector.
pub fn consensus_residual(x: &[DVector<f64>]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let avg = mean(x);
    x.iter().map(|xi| (xi - &avg).norm_squared()).sum::<f64>().sqrt()
}

/// Normalizer for the relative cost error
/// `[sum_i F(x_i) - sum_i F(x*)] / [sum_i F(x_i^0) - sum_i F(x*)]`.
pub struct RelativeCost<'a> {
    objectives: &'a [BoxedObjective],
    f_star_sum: f64,
    denominator: f64,
}

impl<'a> RelativeCost<'a> {
    /// `f_star_sum` is `sum_i F(x_i*) = n F(x*)`.
    pub fn new(objectives: &'a [BoxedObjective], x0: &[DVector<f64>], f_star_sum: f64) -> Result<Self> {
        let denominator = stacked_cost(objectives, x0) - f_star_sum;
        if !(denominator > 0.0) {
            return Err(Error::DegenerateStart(format!(
                "initial cost gap is {denominator:e}; the run starts at the optimum"
            )));
        }
        Ok(Self {
            objectives,
            f_star_sum,
            denominator,
        })
    }

    pub fn eval(&self, x: &[DVector<f64>]) -> f64 {
        (stacked_cost(self.objectives, x) - self.f_star_sum) / self.denominator
    }
}

/// `sum_i F(x_i)` where `F` is the global cost.
pub fn stacked_cost(objectives: &[BoxedObjective], x: &[DVector<f64>]) -> f64 {
    let Some(first) = x.first() else { return 0.0 };
    let points = DMatrix::from_fn(first.len(), x.len(), |r, c| x[c][r]);
    let per_objective: Vec<f64> = objectives
        .par_iter()
        .map(|f| f.values_at(&points).into_iter().sum::<f64>())
        .collect();
    per_objective.into_iter().sum()
}

pub fn relative_cost_error(
    x: &[DVector<f64>],
    objectives: &[BoxedObjective],
    x0: &[DVector<f64>],
    f_star_sum: f64,
) -> Result<f64> {
    Ok(RelativeCost::new(objectives, x0, f_star_sum)?.eval(x))
}

/// What one round costs an agent population, per method.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundFacts {
    pub active_agents: usize,
    /// Inactive agents that still took part in averaging.
    pub relaying_agents: usize,
    pub dim: usize,
    pub inner_rounds: usize,
    /// Gradient evaluations spent by inner solvers this round (exact ADMM).
    pub inner_gradient_evals: u64,
}

/// `(gradient_evals, broadcast_scalars)` added by one round.
pub fn cost_ledger_update(method: Method, facts: RoundFacts) -> (u64, u64) {
    let a = facts.active_agents as u64;
    let talkers = a + facts.relaying_agents as u64;
    let d = facts.dim as u64;
    let b = facts.inner_rounds as u64;
    match method {
        Method::Ipd => (a, talkers * b * (d + 1)),
        Method::PushDiging => (a, a * (2 * d + 1)),
        Method::ExactAdmm => (facts.inner_gradient_evals, talkers * b * (d + 1)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParameterMode {
    /// Stepsize at its bound, penalty at the midpoint of its interval, and the
    /// smallest inner-round count meeting all three lower bounds.
    Theorem,
    /// Same stepsize and penalty, inner rounds from the logarithmic bound in
    /// the condition number.
    Corollary,
}

impl FromStr for ParameterMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "theorem" => Ok(ParameterMode::Theorem),
            "corollary" => Ok(ParameterMode::Corollary),
            other => Err(format!("unknown mode `{other}` (expected theorem or corollary)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificateInputs {
    pub m_f: f64,
    pub big_m_f: f64,
    pub delta: f64,
    pub mode: ParameterMode,
    /// Second eigenvalue magnitude of `P`; 0 when only the optimization part matters.
    pub lambda2: f64,
    /// Overrides the derived inner-round count.
    pub inner_rounds: Option<usize>,
}

impl CertificateInputs {
    pub fn new(m_f: f64, big_m_f: f64, delta: f64, mode: ParameterMode) -> Self {
        Self {
            m_f,
            big_m_f,
            delta,
            mode,
            lambda2: 0.0,
            inner_rounds: None,
        }
    }
}

/// Value of one of the four sufficient inequalities for the linear rate,
/// evaluated with `gamma = 4`, `tau = 3(M+m)/4`, `zeta = 3(M+m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub label: &'static str,
    /// Signed quantity; must be positive for `descent`, negative otherwise.
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCertificate {
    pub eta: f64,
    pub rho: f64,
    /// Inner-round bound prescribed by the selected mode's formula.
    pub b_min: usize,
    /// Inner rounds the constants below are evaluated at.
    pub b_used: usize,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// `max{(c1+c2)/(2 c2), 1 - (2/3) rho c3}`.
    pub mu1: f64,
    /// `max{(c1+c2)/(2 c2), 1 - 2 rho c3}`, the alternative closing constant.
    pub mu1_proof: f64,
    pub lambda: f64,
    pub lambda2: f64,
    pub kappa: f64,
    pub inequalities: Vec<InequalityCheck>,
}

impl RateCertificate {
    /// Partial-participation rate `max{lambda2, 1 - q_min (1 - mu1)/(1 + mu1)}`.
    pub fn lambda_partial(&self, q_min: f64) -> f64 {
        self.lambda2
            .max(1.0 - q_min * (1.0 - self.mu1) / (1.0 + self.mu1))
    }

    pub const CSV_HEADER: &'static str = "eta,rho,b_min,b_used,c1,c2,c3,mu1,mu1_proof,lambda,lambda2,kappa";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_float(self.eta),
            fmt_float(self.rho),
            self.b_min,
            self.b_used,
            fmt_float(self.c1),
            fmt_float(self.c2),
            fmt_float(self.c3),
            fmt_float(self.mu1),
            fmt_float(self.mu1_proof),
            fmt_float(self.lambda),
            fmt_float(self.lambda2),
            fmt_float(self.kappa)
        )
    }
}

pub fn stepsize_bound(m_f: f64, big_m_f: f64) -> f64 {
    4.0 / (15.0 * (big_m_f + m_f))
}

/// Midpoint of `(0, (4/87) M m / (M + m))`.
pub fn penalty_midpoint(m_f: f64, big_m_f: f64) -> f64 {
    2.0 / 87.0 * big_m_f * m_f / (big_m_f + m_f)
}

/// Smallest integer inner-round count meeting the three lower bounds.
pub fn inner_rounds_theorem(m_f: f64, big_m_f: f64, delta: f64) -> usize {
    let ln_d = delta.ln();
    let b2 = 0.5 * ((5.0f64 / 36.0).ln() / ln_d + 1.0);
    let b3 = 0.5 * ((8.0 * big_m_f * m_f / (9.0 * (big_m_f + m_f).powi(2))).ln() / ln_d + 1.0);
    1f64.max(b2).max(b3).ceil() as usize
}

/// Smallest integer strictly above `1/2 + ln(1000(kappa+1)) / (2 ln(1/delta))`.
pub fn inner_rounds_corollary(m_f: f64, big_m_f: f64, delta: f64) -> usize {
    let kappa = big_m_f / m_f;
    let bound = 0.5 + (1000.0 * (kappa + 1.0)).ln() / (2.0 * (1.0 / delta).ln());
    bound.floor() as usize + 1
}

/// The four sufficient conditions at a given `(eta, rho, B)`, with
/// `gamma = 4`, `tau = 3(M+m)/4`, `zeta = 3(M+m)`.
pub fn check_inequalities(m_f: f64, big_m_f: f64, eta: f64, rho: f64, b: usize, delta: f64) -> Vec<InequalityCheck> {
    let s = m_f + big_m_f;
    let gamma = 4.0;
    let tau = 3.0 * s / 4.0;
    let zeta = 3.0 * s;
    let dp = delta.powi(2 * b as i32 - 1);
    let a = 1.0 / (4.0 * tau) + 1.0 / zeta - 1.0 / s;
    let bb = tau + rho + 1.0 / (gamma * eta) - 1.0 / (2.0 * eta);
    let c = 1.0 / (2.0 * eta) - (dp * (5.0 * rho / 4.0 + gamma / (4.0 * eta) + zeta / 4.0) + rho);
    let d = dp * (17.0 * rho / 4.0 + gamma / (4.0 * eta) + zeta / 4.0) + 3.0 * rho - m_f * big_m_f / s;
    vec![
        InequalityCheck { label: "curvature", value: a, holds: a < 0.0 },
        InequalityCheck { label: "step", value: bb, holds: bb < 0.0 },
        InequalityCheck { label: "descent", value: c, holds: c > 0.0 },
        InequalityCheck { label: "contraction", value: d, holds: d < 0.0 },
    ]
}

/// First `B >= from` at which all four inequalities hold. The printed bounds
/// can fall short, so the certificate climbs from them; gives up after a
/// large cap and returns `from`, letting the caller report the failure.
pub fn smallest_feasible_inner_rounds(m_f: f64, big_m_f: f64, eta: f64, rho: f64, delta: f64, from: usize) -> usize {
    (from.max(1)..from.max(1) + 100_000)
        .find(|&b| check_inequalities(m_f, big_m_f, eta, rho, b, delta).iter().all(|c| c.holds))
        .unwrap_or(from)
}

pub fn derive_parameters(inputs: &CertificateInputs) -> Result<RateCertificate> {
    let CertificateInputs {
        m_f,
        big_m_f: mm,
        delta,
        mode,
        lambda2,
        inner_rounds,
    } = *inputs;
    if !(m_f > 0.0 && m_f <= mm && mm.is_finite()) {
        return Err(Error::InvalidInput(format!("need 0 < m_f <= M_f, got m_f={m_f}, M_f={mm}")));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidInput(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(0.0..=1.0).contains(&lambda2) {
        return Err(Error::InvalidInput(format!("lambda2 must lie in [0, 1], got {lambda2}")));
    }
    let eta = stepsize_bound(m_f, mm);
    let rho = penalty_midpoint(m_f, mm);
    let b_min = match mode {
        ParameterMode::Theorem => inner_rounds_theorem(m_f, mm, delta),
        ParameterMode::Corollary => inner_rounds_corollary(m_f, mm, delta),
    };
    let b = match inner_rounds {
        Some(0) => return Err(Error::InvalidInput("inner rounds must be at least 1".into())),
        Some(b) => b,
        None => smallest_feasible_inner_rounds(m_f, mm, eta, rho, delta, b_min),
    };
    let s = m_f + mm;
    let dp = delta.powi(2 * b as i32 - 1);
    let c1 = 1.0 / (2.0 * eta) + 2.0 * rho + 3.0 * rho * dp - m_f * mm / s;
    let c2 = 1.0 / (2.0 * eta) - dp * (5.0 * rho / 4.0 + 1.0 / eta + 3.0 * s / 4.0) - rho;
    let inequalities = check_inequalities(m_f, mm, eta, rho, b, delta);
    let failed: Vec<&str> = inequalities.iter().filter(|c| !c.holds).map(|c| c.label).collect();
    if c2 <= c1 || !failed.is_empty() {
        return Err(Error::CertificateInfeasible(format!(
            "with B={b}, delta={delta}: c1={c1:e}, c2={c2:e}; failing inequalities: {}",
            if failed.is_empty() { "none".to_string() } else { failed.join(", ") }
        )));
    }
    let c3 = (1.0 / (3.0 * s))
        .min(eta * eta * (3.0 * s / 16.0 - rho))
        .min((c2 - c1) / (rho * rho * (4.0 + 4.0 * dp)));
    let first = (c1 + c2) / (2.0 * c2);
    let mu1 = first.max(1.0 - 2.0 / 3.0 * rho * c3);
    let mu1_proof = first.max(1.0 - 2.0 * rho * c3);
    let lambda = (2.0 * mu1 / (1.0 + mu1)).max(lambda2);
    Ok(RateCertificate {
        eta,
        rho,
        b_min,
        b_used: b,
        c1,
        c2,
        c3,
        mu1,
        mu1_proof,
        lambda,
        lambda2,
        kappa: mm / m_f,
        inequalities,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    /// `exp(slope)` of the least-squares line through `ln(series)`.
    pub rate: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `ln(series[k]) ~ intercept + slope * k` over `window`.
pub fn fit_geometric_rate(series: &[f64], window: std::ops::Range<usize>) -> Result<RateFit> {
    let window = window.start..window.end.min(series.len());
    let points = window.len();
    if points < 10 {
        return Err(Error::Fit(format!("need at least 10 points, window has {points}")));
    }
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for k in window {
        let v = series[k];
        if !(v > 0.0) {
            return Err(Error::Fit(format!("entry {k} is {v}, not positive")));
        }
        xs.push(k as f64);
        ys.push(v.ln());
    }
    let n = points as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy <= f64::EPSILON * f64::EPSILON * n { 1.0 } else { 1.0 - ss_res / syy };
    Ok(RateFit {
        rate: slope.exp(),
        slope,
        intercept,
        r_squared,
        points,
    })
}

/// Fit over everything after the first `burn_in` fraction of the series.
pub fn fit_after_burn_in(series: &[f64], burn_in: f64) -> Result<RateFit> {
    let start = (series.len() as f64 * burn_in).ceil() as usize;
    fit_geometric_rate(series, start..series.len())
}

pub const DEFAULT_BURN_IN: f64 = 0.2;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::Quadratic;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scalars(v: &[f64]) -> Vec<DVector<f64>> {
        v.iter().map(|&x| DVector::from_element(1, x)).collect()
    }

    #[test]
    fn consensus_residual_examples() {
        assert_eq!(consensus_residual(&scalars(&[3.0, 3.0, 3.0])), 0.0);
        assert_abs_diff_eq!(consensus_residual(&scalars(&[0.0, 2.0])), 2f64.sqrt(), epsilon = 1e-15);
        let x = scalars(&[0.5, -1.0, 4.0]);
        let shifted = scalars(&[10.5, 9.0, 14.0]);
        assert_abs_diff_eq!(consensus_residual(&x), consensus_residual(&shifted), epsilon = 1e-13);
    }

    fn quad_instance() -> (Vec<BoxedObjective>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let centers: Vec<DVector<f64>> = (0..4).map(|_| DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0))).collect();
        let star = mean(&centers);
        let objs = centers
            .into_iter()
            .map(|c| Box::new(Quadratic::new(c, 1.0).unwrap()) as BoxedObjective)
            .collect();
        (objs, star)
    }

    #[test]
    fn relative_cost_error_endpoints() {
        let (objs, star) = quad_instance();
        let f_star: f64 = objs.iter().map(|f| f.value(&star)).sum();
        let x0 = vec![DVector::zeros(2); 4];
        assert_eq!(relative_cost_error(&x0, &objs, &x0, 4.0 * f_star).unwrap(), 1.0);
        let at_star = vec![star.clone(); 4];
        assert_abs_diff_eq!(relative_cost_error(&at_star, &objs, &x0, 4.0 * f_star).unwrap(), 0.0, epsilon = 1e-15);
        assert!(matches!(
            relative_cost_error(&at_star, &objs, &at_star, 4.0 * f_star),
            Err(Error::DegenerateStart(_))
        ));
    }

    #[test]
    fn relative_cost_error_matches_dense_recomputation() {
        let (objs, star) = quad_instance();
        let centers: Vec<DVector<f64>> = vec![
            DVector::from_vec(vec![0.1, 0.2]),
            DVector::from_vec(vec![-0.3, 0.9]),
            DVector::from_vec(vec![1.1, -0.4]),
            DVector::from_vec(vec![0.0, 0.5]),
        ];
        let x0 = vec![DVector::zeros(2); 4];
        let f = |x: &DVector<f64>| objs.iter().map(|o| o.value(x)).sum::<f64>();
        let f_star = f(&star);
        // independent recomputation: F(x) = (n/2)||x - x*||^2 + F(x*) for unit-curvature quadratics
        let gap = |x: &DVector<f64>| 2.0 * (x - &star).norm_squared();
        let expected = centers.iter().map(gap).sum::<f64>() / x0.iter().map(gap).sum::<f64>();
        let got = relative_cost_error(&centers, &objs, &x0, 4.0 * f_star).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn corollary_parameters_example() {
        let cert = derive_parameters(&CertificateInputs::new(0.1, 1.0, 0.9, ParameterMode::Corollary)).unwrap();
        assert_abs_diff_eq!(cert.eta, 4.0 / 16.5, epsilon = 1e-15);
        assert_abs_diff_eq!(cert.rho, 2.0 / 87.0 * 0.1 / 1.1, epsilon = 1e-15);
        assert_abs_diff_eq!(cert.rho, 2.0898e-3, epsilon = 1e-7);
        assert_eq!(cert.b_min, 45);
        assert!(cert.lambda > 0.0 && cert.lambda < 1.0);
        assert!(cert.mu1_proof <= cert.mu1);
    }

    #[test]
    fn inequalities_hold_on_grid() {
        for kappa in [2.0, 10.0, 100.0] {
            for delta in [0.5, 0.9] {
                let cert =
                    derive_parameters(&CertificateInputs::new(1.0, kappa, delta, ParameterMode::Theorem)).unwrap();
                assert!(cert.inequalities.iter().all(|c| c.holds), "{kappa} {delta}");
                assert!(cert.c2 > cert.c1);
                assert!(cert.lambda < 1.0);
            }
        }
    }

    #[test]
    fn theorem_bound_is_raised_to_feasibility() {
        let expected = [((2.0, 0.5), 2, 3), ((2.0, 0.9), 10, 16), ((10.0, 0.5), 3, 4), ((10.0, 0.9), 13, 20), ((100.0, 0.5), 4, 5), ((100.0, 0.9), 24, 30)];
        for ((kappa, delta), formula, used) in expected {
            let cert = derive_parameters(&CertificateInputs::new(1.0, kappa, delta, ParameterMode::Theorem)).unwrap();
            assert_eq!((cert.b_min, cert.b_used), (formula, used), "{kappa} {delta}");
            let mut fixed = CertificateInputs::new(1.0, kappa, delta, ParameterMode::Theorem);
            fixed.inner_rounds = Some(formula);
            assert!(derive_parameters(&fixed).is_err());
        }
    }

    #[test]
    fn too_few_inner_rounds_is_infeasible() {
        let mut inputs = CertificateInputs::new(0.1, 1.0, 0.9, ParameterMode::Theorem);
        inputs.inner_rounds = Some(1);
        let err = derive_parameters(&inputs).unwrap_err();
        assert!(err.to_string().contains("contraction"), "{err}");
    }

    #[test]
    fn invalid_certificate_inputs() {
        assert!(derive_parameters(&CertificateInputs::new(0.1, 1.0, 1.0, ParameterMode::Theorem)).is_err());
        assert!(derive_parameters(&CertificateInputs::new(2.0, 1.0, 0.5, ParameterMode::Theorem)).is_err());
    }

    #[test]
    fn partial_rate_reduces_to_full_rate() {
        let mut inputs = CertificateInputs::new(1.0, 1.0, 0.5, ParameterMode::Corollary);
        inputs.lambda2 = 0.3;
        let cert = derive_parameters(&inputs).unwrap();
        assert_abs_diff_eq!(cert.lambda_partial(1.0), cert.lambda, epsilon = 1e-15);
        assert!(cert.lambda_partial(0.5) >= cert.lambda);
    }

    #[test]
    fn fit_exact_geometric() {
        let s: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k)).collect();
        let fit = fit_geometric_rate(&s, 0..40).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.r_squared, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_noisy_geometric() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s: Vec<f64> = (0..200)
            .map(|k| 3.0 * 0.9f64.powi(k) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            .collect();
        let fit = fit_after_burn_in(&s, DEFAULT_BURN_IN).unwrap();
        assert_abs_diff_eq!(fit.rate, 0.9, epsilon = 0.01);
    }

    #[test]
    fn fit_constant_and_errors() {
        let fit = fit_geometric_rate(&[2.0; 20], 0..20).unwrap();
        assert_eq!(fit.rate, 1.0);
        assert!(fit_geometric_rate(&[1.0; 5], 0..5).is_err());
        let mut s = vec![1.0; 20];
        s[4] = 0.0;
        assert!(fit_geometric_rate(&s, 0..20).is_err());
    }

    #[test]
    fn ledger_examples() {
        let facts = RoundFacts { active_agents: 50, relaying_agents: 0, dim: 22, inner_rounds: 1, inner_gradient_evals: 0 };
        assert_eq!(cost_ledger_update(Method::Ipd, facts), (50, 1150));
        assert_eq!(cost_ledger_update(Method::PushDiging, facts), (50, 2250));
        let idle = RoundFacts { active_agents: 0, ..facts };
        assert_eq!(cost_ledger_update(Method::Ipd, idle), (0, 0));
        let relay = RoundFacts { active_agents: 10, relaying_agents: 40, ..facts };
        assert_eq!(cost_ledger_update(Method::Ipd, relay), (10, 1150));
        let exact = RoundFacts { inner_gradient_evals: 731, ..facts };
        assert_eq!(cost_ledger_update(Method::ExactAdmm, exact), (731, 1150));
    }

    #[test]
    fn single_round_ipd_broadcast_undercuts_push_diging() {
        for d in 1..200 {
            let facts = RoundFacts { active_agents: 1, relaying_agents: 0, dim: d, inner_rounds: 1, inner_gradient_evals: 0 };
            assert!(cost_ledger_update(Method::Ipd, facts).1 < cost_ledger_update(Method::PushDiging, facts).1);
        }
    }
}
