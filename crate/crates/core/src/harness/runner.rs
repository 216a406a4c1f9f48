//! Builds the problem instance of a spec, expands its sweep and writes CSVs.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::data::{quadratic_centers, read_centers, synthetic_logistic};
use super::spec::{CenterSource, DataSource, ExperimentSpec, GraphSpec, InnerRounds, ObjectiveSpec, Scalar};
use crate::baselines::{run_exact_admm, run_push_diging, PushDigingConfig};
use crate::error::{Error, Result};
use crate::graph::{DirectedGraph, GraphFacts};
use crate::ipd::{run_ipd, Participation, RunConfig};
use crate::metrics::{
    derive_parameters, fit_after_burn_in, fmt_float, CertificateInputs, Method, RateCertificate, Trace, TraceRecord,
    DEFAULT_BURN_IN,
};
use crate::objectives::{
    conditioning, logistic_per_agent, parse_libsvm, partition_uniform, solve_centralized, BoxedObjective, Quadratic,
};

/// Gradient-norm tolerance of the reference solve, per objective family.
const QUADRATIC_REFERENCE_TOL: f64 = 1e-12;
const LOGISTIC_REFERENCE_TOL: f64 = 1e-6;

pub struct Instance {
    pub graph: DirectedGraph,
    pub facts: GraphFacts,
    pub objectives: Vec<BoxedObjective>,
    /// Optimal global cost `F(x*)`.
    pub f_star: f64,
    pub m_f: f64,
    pub big_m_f: f64,
    pub dim: usize,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

pub fn build_graph(spec: &GraphSpec) -> Result<DirectedGraph> {
    match spec {
        GraphSpec::RingWithChords { n, chord_probability, seed } => {
            DirectedGraph::ring_with_random_chords(*n, *chord_probability, *seed)
        }
        GraphSpec::File(path) => DirectedGraph::read_edge_list(open(path)?),
    }
}

pub fn build_instance(spec: &ExperimentSpec) -> Result<Instance> {
    let graph = build_graph(&spec.graph)?;
    let facts = graph.analyze();
    if !facts.strongly_connected {
        return Err(Error::InvalidTopology("graph is not strongly connected".into()));
    }
    let n = graph.n();
    let (objectives, reference_tol) = match &spec.objective {
        ObjectiveSpec::Quadratic { centers, curvature } => {
            let centers = match centers {
                CenterSource::File(path) => read_centers(open(path)?)?,
                CenterSource::Synthetic { dim, seed } => quadratic_centers(n, *dim, *seed)?,
            };
            if centers.len() != n {
                return Err(Error::InvalidInput(format!("{} centers for {n} agents", centers.len())));
            }
            let objectives = centers
                .into_iter()
                .map(|c| Ok(Box::new(Quadratic::new(c, *curvature)?) as BoxedObjective))
                .collect::<Result<Vec<_>>>()?;
            (objectives, QUADRATIC_REFERENCE_TOL)
        }
        ObjectiveSpec::Logistic { data, ridge, partition_seed } => {
            let data = match data {
                DataSource::File(path) => parse_libsvm(open(path)?)?,
                DataSource::Synthetic { samples, dim, seed } => synthetic_logistic(*samples, *dim, *seed)?,
            };
            let partition = partition_uniform(&data, n, *partition_seed)?;
            (logistic_per_agent(&data, &partition, *ridge)?, LOGISTIC_REFERENCE_TOL)
        }
    };
    let (m_f, big_m_f) = conditioning(&objectives);
    let reference = solve_centralized(&objectives, reference_tol)?;
    info!(
        "instance: n={n}, edges={}, lambda2={:.4}, m_f={m_f:e}, M_f={big_m_f:e}, F*={} after {} reference iterations",
        facts.edges, facts.lambda2, reference.f_star, reference.iterations
    );
    Ok(Instance {
        dim: reference.x_star.len(),
        graph,
        facts,
        objectives,
        f_star: reference.f_star,
        m_f,
        big_m_f,
    })
}

/// One run of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub method: Method,
    pub inner_rounds: usize,
    pub q: f64,
    pub eta: f64,
    pub rho: f64,
    pub seed: u64,
}

impl SweepPoint {
    pub fn file_name(&self) -> String {
        let eta = if self.eta.is_nan() { "-".to_string() } else { self.eta.to_string() };
        format!("{}_B{}_q{}_eta{}_seed{}.csv", self.method, self.inner_rounds, self.q, eta, self.seed)
    }
}

fn resolve(s: Scalar, cert: &Option<RateCertificate>, from_cert: fn(&RateCertificate) -> f64, inst: &Instance) -> Result<f64> {
    Ok(match s {
        Scalar::Auto => from_cert(cert.as_ref().expect("certificate computed when a value is auto")),
        Scalar::Value(v) => v,
        Scalar::OverSmoothness(k) => k / inst.big_m_f,
        Scalar::GeometricMean => (inst.m_f * inst.big_m_f).sqrt(),
    })
}

/// Certificate for the instance; only derived when some sweep value is `auto`.
pub fn instance_certificate(spec: &ExperimentSpec, inst: &Instance) -> Result<Option<RateCertificate>> {
    let needs = spec.rho == Scalar::Auto
        || spec.eta.contains(&Scalar::Auto)
        || spec.inner_rounds.contains(&InnerRounds::Auto);
    if !needs {
        return Ok(None);
    }
    let mut inputs = CertificateInputs::new(inst.m_f, inst.big_m_f, spec.delta, spec.params);
    inputs.lambda2 = inst.facts.lambda2;
    derive_parameters(&inputs).map(Some)
}

/// Cross product of the sweep axes. Push-DIGing ignores `B`, `q` and `rho`;
/// exact ADMM ignores `eta`. Collapsed axes yield a single point.
pub fn sweep_points(spec: &ExperimentSpec, inst: &Instance) -> Result<Vec<SweepPoint>> {
    let cert = instance_certificate(spec, inst)?;
    let rho = resolve(spec.rho, &cert, |c| c.rho, inst)?;
    let etas = spec
        .eta
        .iter()
        .map(|&e| resolve(e, &cert, |c| c.eta, inst))
        .collect::<Result<Vec<_>>>()?;
    let bs: Vec<usize> = spec
        .inner_rounds
        .iter()
        .map(|b| match b {
            InnerRounds::Auto => cert.as_ref().expect("certificate computed when B is auto").b_used,
            InnerRounds::Fixed(b) => *b,
        })
        .collect();
    let mut points = Vec::new();
    for &method in &spec.methods {
        let (bs, qs, etas): (&[usize], &[f64], &[f64]) = match method {
            Method::Ipd => (&bs, &spec.q, &etas),
            Method::PushDiging => (&[1], &[1.0], &etas),
            Method::ExactAdmm => (&bs, &spec.q, &etas[..1]),
        };
        for &b in bs {
            for &q in qs {
                for &eta in etas {
                    for &seed in &spec.seeds {
                        points.push(SweepPoint {
                            method,
                            inner_rounds: b,
                            q,
                            eta: if method == Method::ExactAdmm { f64::NAN } else { eta },
                            rho: if method == Method::PushDiging { f64::NAN } else { rho },
                            seed,
                        });
                    }
                }
            }
        }
    }
    Ok(points)
}

pub fn run_point(spec: &ExperimentSpec, inst: &Instance, p: &SweepPoint) -> Result<Trace> {
    let cfg = RunConfig {
        eta: p.eta,
        rho: p.rho,
        inner_rounds: p.inner_rounds,
        participation: if p.q >= 1.0 { Participation::Full } else { Participation::Uniform(p.q) },
        delta: spec.delta,
        seed: p.seed,
        max_outer_iterations: spec.max_rounds,
        stop_tolerance: spec.stop_tolerance,
        balance_rule: spec.balance_rule,
        weight_init: spec.weight_init,
        xi_seed: spec.xi_seed,
        inactive_policy: spec.inactive,
    };
    let (g, facts, objs) = (&inst.graph, &inst.facts, &inst.objectives);
    match p.method {
        Method::Ipd => run_ipd(g, facts, objs, inst.f_star, &cfg),
        Method::PushDiging => run_push_diging(
            g,
            facts,
            objs,
            inst.f_star,
            &PushDigingConfig {
                eta: p.eta,
                max_iter: spec.max_rounds,
                tol: spec.stop_tolerance,
            },
        ),
        Method::ExactAdmm => {
            // The engine validates eta even though the exact step never uses it.
            let cfg = RunConfig { eta: 1.0 / inst.big_m_f, ..cfg };
            run_exact_admm(g, facts, objs, inst.f_star, &cfg, spec.inner_tol, spec.max_inner)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Ok,
    Diverged,
    Failed,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Ok => "ok",
            RunStatus::Diverged => "diverged",
            RunStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub point: SweepPoint,
    pub status: RunStatus,
    pub rounds: Option<usize>,
    pub final_error: Option<f64>,
    pub to_tol: Option<TraceRecord>,
    pub fitted_rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub message: String,
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str = "method,B,q,eta,rho,seed,status,rounds,final_error,rounds_to_tol,grads_to_tol,scalars_to_tol,fitted_rate,r_squared,message";

    pub fn from_result(point: SweepPoint, result: &Result<Trace>, tolerance: f64) -> Self {
        match result {
            Ok(trace) => {
                let fit = fit_after_burn_in(&trace.cost_errors(), DEFAULT_BURN_IN);
                let last = trace.last();
                Self {
                    point,
                    status: RunStatus::Ok,
                    rounds: Some(last.round),
                    final_error: Some(last.relative_cost_error),
                    to_tol: trace.first_below(tolerance).cloned(),
                    fitted_rate: fit.as_ref().ok().map(|f| f.rate),
                    r_squared: fit.as_ref().ok().map(|f| f.r_squared),
                    message: fit.err().map(|e| e.to_string()).unwrap_or_default(),
                }
            }
            Err(e) => Self {
                point,
                status: if matches!(e, Error::Divergence { .. }) { RunStatus::Diverged } else { RunStatus::Failed },
                rounds: None,
                final_error: None,
                to_tol: None,
                fitted_rate: None,
                r_squared: None,
                message: e.to_string(),
            },
        }
    }

    pub fn to_csv_row(&self) -> String {
        let opt_f = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let opt_u = |v: Option<u64>| v.map(|v| v.to_string()).unwrap_or_default();
        let p = &self.point;
        let axis = |v: f64| if v.is_nan() { String::new() } else { fmt_float(v) };
        let message = self.message.replace(['"', '\n'], "'");
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},\"{}\"",
            p.method,
            p.inner_rounds,
            fmt_float(p.q),
            axis(p.eta),
            axis(p.rho),
            p.seed,
            self.status.as_str(),
            opt_u(self.rounds.map(|r| r as u64)),
            opt_f(self.final_error),
            opt_u(self.to_tol.as_ref().map(|r| r.round as u64)),
            opt_u(self.to_tol.as_ref().map(|r| r.gradient_evals)),
            opt_u(self.to_tol.as_ref().map(|r| r.broadcast_scalars)),
            opt_f(self.fitted_rate),
            opt_f(self.r_squared),
            message
        )
    }
}

pub struct RunReport {
    pub out_dir: PathBuf,
    pub rows: Vec<SummaryRow>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Runs every sweep point (in parallel), writing one trace CSV per run and
/// `summary.csv`. Failed runs are recorded in the summary; only I/O and
/// instance errors abort.
pub fn run_spec(spec: &ExperimentSpec, out_dir: &Path) -> Result<RunReport> {
    spec.validate()?;
    let inst = build_instance(spec)?;
    let points = sweep_points(spec, &inst)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    info!("{} runs into {}", points.len(), out_dir.display());
    let rows = points
        .into_par_iter()
        .map(|point| {
            let result = run_point(spec, &inst, &point);
            match &result {
                Ok(trace) => write(&out_dir.join(point.file_name()), &trace.to_csv())?,
                Err(e) => warn!("{}: {e}", point.file_name()),
            }
            Ok(SummaryRow::from_result(point, &result, spec.tolerance))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut summary = String::from(SummaryRow::CSV_HEADER);
    summary.push('\n');
    for row in &rows {
        summary.push_str(&row.to_csv_row());
        summary.push('\n');
    }
    write(&out_dir.join("summary.csv"), &summary)?;
    Ok(RunReport {
        out_dir: out_dir.to_path_buf(),
        rows,
    })
}
