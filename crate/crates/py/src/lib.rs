//! Python bindings: graphs, problems, the three solvers, certificates and rate fits.

use std::fs::File;
use std::io::BufReader;

use nalgebra::DVector;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use ipd::baselines::{self, PushDigingConfig};
use ipd::graph::DirectedGraph;
use ipd::harness::data::{quadratic_centers, synthetic_logistic};
use ipd::ipd::{InactivePolicy, Participation, RunConfig, XiSeed};
use ipd::metrics::{self as m, CertificateInputs, ParameterMode};
use ipd::objectives::{self as obj, BoxedObjective, Quadratic};

fn py_err(e: ipd::Error) -> PyErr {
    match e {
        ipd::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_lists(x: &[DVector<f64>]) -> Vec<Vec<f64>> {
    x.iter().map(|v| v.iter().copied().collect()).collect()
}

/// Directed communication graph.
#[pyclass(name = "Graph", frozen)]
struct PyGraph {
    inner: DirectedGraph,
}

#[pymethods]
impl PyGraph {
    /// Graph from `(src, dst)` pairs.
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Ok(Self {
            inner: DirectedGraph::from_edges(n, &edges).map_err(py_err)?,
        })
    }

    /// Directed ring plus independent random chords.
    #[staticmethod]
    #[pyo3(signature = (n, chord_probability=0.2, seed=1))]
    fn ring_with_random_chords(n: usize, chord_probability: f64, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: DirectedGraph::ring_with_random_chords(n, chord_probability, seed).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn read_edge_list(path: &str) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        Ok(Self {
            inner: DirectedGraph::read_edge_list(BufReader::new(file)).map_err(py_err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges()
    }

    fn out_degrees(&self) -> Vec<usize> {
        self.inner.out_degrees()
    }

    fn to_edge_list(&self) -> String {
        self.inner.to_edge_list()
    }

    fn facts(&self) -> GraphFacts {
        let f = self.inner.analyze();
        GraphFacts {
            n: f.n,
            edges: f.edges,
            d_max: f.d_max,
            diameter: f.phi,
            lambda2: f.lambda2,
            strongly_connected: f.strongly_connected,
        }
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.inner.n(), self.inner.edge_count())
    }
}

#[pyclass(frozen, get_all)]
struct GraphFacts {
    n: usize,
    edges: usize,
    d_max: usize,
    diameter: Option<usize>,
    lambda2: f64,
    strongly_connected: bool,
}

/// Per-agent local costs.
#[pyclass(frozen)]
struct Problem {
    objectives: Vec<BoxedObjective>,
}

#[pymethods]
impl Problem {
    /// `f_i(x) = (curvature/2) ||x - c_i||^2`, one center per agent.
    #[staticmethod]
    #[pyo3(signature = (centers, curvature=1.0))]
    fn quadratic(centers: Vec<Vec<f64>>, curvature: f64) -> PyResult<Self> {
        let objectives = centers
            .into_iter()
            .map(|c| Ok(Box::new(Quadratic::new(DVector::from_vec(c), curvature)?) as BoxedObjective))
            .collect::<ipd::Result<Vec<_>>>()
            .map_err(py_err)?;
        Self::checked(objectives)
    }

    /// Quadratics with seeded standard-normal centers.
    #[staticmethod]
    #[pyo3(signature = (n, dim, seed=7, curvature=1.0))]
    fn random_quadratic(n: usize, dim: usize, seed: u64, curvature: f64) -> PyResult<Self> {
        let centers = quadratic_centers(n, dim, seed).map_err(py_err)?;
        Self::quadratic(to_lists(&centers), curvature)
    }

    /// Ridge-regularized logistic regression on seeded synthetic data split across `n` agents.
    #[staticmethod]
    #[pyo3(signature = (n, samples=5000, dim=22, data_seed=2, partition_seed=3, ridge=1e-3))]
    fn synthetic_logistic(
        n: usize,
        samples: usize,
        dim: usize,
        data_seed: u64,
        partition_seed: u64,
        ridge: f64,
    ) -> PyResult<Self> {
        let data = synthetic_logistic(samples, dim, data_seed).map_err(py_err)?;
        Self::split(&data, n, partition_seed, ridge)
    }

    /// Logistic regression on a LIBSVM file split across `n` agents.
    #[staticmethod]
    #[pyo3(signature = (path, n, partition_seed=3, ridge=1e-3))]
    fn libsvm_logistic(path: &str, n: usize, partition_seed: u64, ridge: f64) -> PyResult<Self> {
        let file = File::open(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        let data = obj::parse_libsvm(BufReader::new(file)).map_err(py_err)?;
        Self::split(&data, n, partition_seed, ridge)
    }

    #[getter]
    fn n(&self) -> usize {
        self.objectives.len()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.objectives[0].dim()
    }

    /// `(m_f, M_f)`: smallest strong convexity and largest smoothness.
    fn conditioning(&self) -> (f64, f64) {
        obj::conditioning(&self.objectives)
    }

    /// `F(x) = sum_i f_i(x)`.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_point(&x)?;
        Ok(obj::global_value(&self.objectives, &DVector::from_vec(x)))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_point(&x)?;
        Ok(obj::global_gradient(&self.objectives, &DVector::from_vec(x)).iter().copied().collect())
    }

    /// Centralized gradient descent; returns `(x_star, f_star)`.
    #[pyo3(signature = (tol=1e-10))]
    fn solve_centralized(&self, py: Python<'_>, tol: f64) -> PyResult<(Vec<f64>, f64)> {
        let s = py
            .detach(|| obj::solve_centralized(&self.objectives, tol))
            .map_err(py_err)?;
        Ok((s.x_star.iter().copied().collect(), s.f_star))
    }
}

impl Problem {
    fn checked(objectives: Vec<BoxedObjective>) -> PyResult<Self> {
        obj::common_dim(&objectives).map_err(py_err)?;
        Ok(Self { objectives })
    }

    fn split(data: &obj::Dataset, n: usize, partition_seed: u64, ridge: f64) -> PyResult<Self> {
        let part = obj::partition_uniform(data, n, partition_seed).map_err(py_err)?;
        Self::checked(obj::logistic_per_agent(data, &part, ridge).map_err(py_err)?)
    }

    fn check_point(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.dim() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.dim(), x.len())));
        }
        Ok(())
    }
}

/// Per-round convergence record of a run.
#[pyclass(frozen)]
struct Trace {
    inner: m::Trace,
}

#[pymethods]
impl Trace {
    #[getter]
    fn method(&self) -> &'static str {
        self.inner.method.as_str()
    }

    #[getter]
    fn rounds(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.round).collect()
    }

    #[getter]
    fn relative_cost_error(&self) -> Vec<f64> {
        self.inner.cost_errors()
    }

    #[getter]
    fn consensus_residual(&self) -> Vec<f64> {
        self.inner.records.iter().map(|r| r.consensus_residual).collect()
    }

    #[getter]
    fn gradient_evals(&self) -> Vec<u64> {
        self.inner.records.iter().map(|r| r.gradient_evals).collect()
    }

    #[getter]
    fn broadcast_scalars(&self) -> Vec<u64> {
        self.inner.records.iter().map(|r| r.broadcast_scalars).collect()
    }

    #[getter]
    fn active_count(&self) -> Vec<usize> {
        self.inner.records.iter().map(|r| r.active_count).collect()
    }

    /// Local iterates after the last round, one list per agent.
    #[getter]
    fn final_x(&self) -> Vec<Vec<f64>> {
        to_lists(&self.inner.final_x)
    }

    /// First round at or below `tol`, or None.
    fn rounds_to(&self, tol: f64) -> Option<usize> {
        self.inner.rounds_to(tol)
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn __len__(&self) -> usize {
        self.inner.records.len()
    }
}

fn inactive_policy(s: &str) -> PyResult<InactivePolicy> {
    match s {
        "frozen" => Ok(InactivePolicy::Frozen),
        "relay" => Ok(InactivePolicy::Relay),
        _ => Err(PyValueError::new_err(format!("unknown inactive policy {s:?} (frozen | relay)"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_config(
    eta: f64,
    rho: f64,
    inner_rounds: usize,
    q: f64,
    seed: u64,
    max_rounds: usize,
    stop_tolerance: f64,
    inactive: &str,
    xi_plus_dual: bool,
) -> PyResult<RunConfig> {
    Ok(RunConfig {
        eta,
        rho,
        inner_rounds,
        participation: if q >= 1.0 { Participation::Full } else { Participation::Uniform(q) },
        seed,
        max_outer_iterations: max_rounds,
        stop_tolerance,
        inactive_policy: inactive_policy(inactive)?,
        xi_seed: if xi_plus_dual { XiSeed::PrimalPlusScaledDual } else { XiSeed::Primal },
        ..RunConfig::default()
    })
}

/// Inexact ADMM with weight-balanced averaging. `f_star` is the optimal global cost.
#[pyfunction]
#[pyo3(signature = (graph, problem, f_star, eta, rho, inner_rounds=1, q=1.0, seed=0, max_rounds=1000, stop_tolerance=0.0, inactive="frozen", xi_plus_dual=false))]
#[allow(clippy::too_many_arguments)]
fn run_ipd(
    py: Python<'_>,
    graph: &PyGraph,
    problem: &Problem,
    f_star: f64,
    eta: f64,
    rho: f64,
    inner_rounds: usize,
    q: f64,
    seed: u64,
    max_rounds: usize,
    stop_tolerance: f64,
    inactive: &str,
    xi_plus_dual: bool,
) -> PyResult<Trace> {
    let cfg = run_config(eta, rho, inner_rounds, q, seed, max_rounds, stop_tolerance, inactive, xi_plus_dual)?;
    let g = &graph.inner;
    let inner = py
        .detach(|| ipd::run_ipd(g, &g.analyze(), &problem.objectives, f_star, &cfg))
        .map_err(py_err)?;
    Ok(Trace { inner })
}

/// ADMM with the local step solved to `inner_tol`.
#[pyfunction]
#[pyo3(signature = (graph, problem, f_star, rho, inner_rounds=1, q=1.0, seed=0, max_rounds=1000, stop_tolerance=0.0, inner_tol=1e-10, max_inner=1_000_000))]
#[allow(clippy::too_many_arguments)]
fn run_exact_admm(
    py: Python<'_>,
    graph: &PyGraph,
    problem: &Problem,
    f_star: f64,
    rho: f64,
    inner_rounds: usize,
    q: f64,
    seed: u64,
    max_rounds: usize,
    stop_tolerance: f64,
    inner_tol: f64,
    max_inner: usize,
) -> PyResult<Trace> {
    let (_, big_m) = obj::conditioning(&problem.objectives);
    let cfg = run_config(1.0 / big_m, rho, inner_rounds, q, seed, max_rounds, stop_tolerance, "frozen", false)?;
    let g = &graph.inner;
    let inner = py
        .detach(|| baselines::run_exact_admm(g, &g.analyze(), &problem.objectives, f_star, &cfg, inner_tol, max_inner))
        .map_err(py_err)?;
    Ok(Trace { inner })
}

/// Push-DIGing with stepsize `eta`.
#[pyfunction]
#[pyo3(signature = (graph, problem, f_star, eta, max_rounds=1000, stop_tolerance=0.0))]
fn run_push_diging(
    py: Python<'_>,
    graph: &PyGraph,
    problem: &Problem,
    f_star: f64,
    eta: f64,
    max_rounds: usize,
    stop_tolerance: f64,
) -> PyResult<Trace> {
    let cfg = PushDigingConfig {
        eta,
        max_iter: max_rounds,
        tol: stop_tolerance,
    };
    let g = &graph.inner;
    let inner = py
        .detach(|| baselines::run_push_diging(g, &g.analyze(), &problem.objectives, f_star, &cfg))
        .map_err(py_err)?;
    Ok(Trace { inner })
}

#[pyclass(frozen, get_all)]
struct Certificate {
    eta: f64,
    rho: f64,
    b_min: usize,
    b_used: usize,
    c1: f64,
    c2: f64,
    c3: f64,
    mu1: f64,
    lambda_: f64,
    lambda2: f64,
    kappa: f64,
    /// `(label, value, holds)` per sufficient inequality.
    inequalities: Vec<(&'static str, f64, bool)>,
}

#[pymethods]
impl Certificate {
    fn __repr__(&self) -> String {
        format!(
            "Certificate(eta={}, rho={}, b_min={}, b_used={}, lambda={})",
            self.eta, self.rho, self.b_min, self.b_used, self.lambda_
        )
    }
}

/// Stepsize, penalty, inner rounds and rate for conditioning `(m_f, M_f)`.
#[pyfunction]
#[pyo3(signature = (m_f, big_m_f, delta=0.9, mode="corollary", lambda2=0.0, inner_rounds=None))]
fn certify(
    m_f: f64,
    big_m_f: f64,
    delta: f64,
    mode: &str,
    lambda2: f64,
    inner_rounds: Option<usize>,
) -> PyResult<Certificate> {
    let mode: ParameterMode = mode.parse().map_err(PyValueError::new_err)?;
    let mut inputs = CertificateInputs::new(m_f, big_m_f, delta, mode);
    inputs.lambda2 = lambda2;
    inputs.inner_rounds = inner_rounds;
    let c = m::derive_parameters(&inputs).map_err(py_err)?;
    Ok(Certificate {
        eta: c.eta,
        rho: c.rho,
        b_min: c.b_min,
        b_used: c.b_used,
        c1: c.c1,
        c2: c.c2,
        c3: c.c3,
        mu1: c.mu1,
        lambda_: c.lambda,
        lambda2: c.lambda2,
        kappa: c.kappa,
        inequalities: c.inequalities.iter().map(|i| (i.label, i.value, i.holds)).collect(),
    })
}

/// Least-squares geometric rate of `series[start:end]`; returns `(rate, r_squared)`.
#[pyfunction]
#[pyo3(signature = (series, start=0, end=None))]
fn fit_geometric_rate(series: Vec<f64>, start: usize, end: Option<usize>) -> PyResult<(f64, f64)> {
    let end = end.unwrap_or(series.len());
    let fit = m::fit_geometric_rate(&series, start..end).map_err(py_err)?;
    Ok((fit.rate, fit.r_squared))
}

#[pymodule]
fn ipd_py(module: &Bound<'_, PyModule>) -> PyResult<()> {
    module.add_class::<PyGraph>()?;
    module.add_class::<GraphFacts>()?;
    module.add_class::<Problem>()?;
    module.add_class::<Trace>()?;
    module.add_class::<Certificate>()?;
    module.add_function(wrap_pyfunction!(run_ipd, module)?)?;
    module.add_function(wrap_pyfunction!(run_exact_admm, module)?)?;
    module.add_function(wrap_pyfunction!(run_push_diging, module)?)?;
    module.add_function(wrap_pyfunction!(certify, module)?)?;
    module.add_function(wrap_pyfunction!(fit_geometric_rate, module)?)?;
    Ok(())
}
