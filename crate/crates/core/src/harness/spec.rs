//! Experiment spec files: one `key = value` per line, lists comma-separated,
//! `#` starts a comment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::balancing::{BalanceRule, WeightInit};
use crate::error::{Error, Result};
use crate::ipd::{InactivePolicy, XiSeed};
use crate::metrics::{Method, ParameterMode};

#[derive(Debug, Clone, PartialEq)]
pub enum GraphSpec {
    RingWithChords { n: usize, chord_probability: f64, seed: u64 },
    /// Edge-list file.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CenterSource {
    File(PathBuf),
    Synthetic { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    File(PathBuf),
    Synthetic { samples: usize, dim: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSpec {
    Quadratic { centers: CenterSource, curvature: f64 },
    Logistic { data: DataSource, ridge: f64, partition_seed: u64 },
}

/// Where a stepsize or penalty comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scalar {
    /// Derived from the certificate of `params`.
    Auto,
    Value(f64),
    /// Multiple of `1/M_f`.
    OverSmoothness(f64),
    /// `sqrt(m_f M_f)`.
    GeometricMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerRounds {
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub graph: GraphSpec,
    pub objective: ObjectiveSpec,
    pub params: ParameterMode,
    pub delta: f64,
    pub rho: Scalar,
    pub eta: Vec<Scalar>,
    pub inner_rounds: Vec<InnerRounds>,
    pub q: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_rounds: usize,
    pub stop_tolerance: f64,
    /// Target for the to-tolerance summary columns.
    pub tolerance: f64,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub balance_rule: BalanceRule,
    pub weight_init: WeightInit,
    pub xi_seed: XiSeed,
    pub inactive: InactivePolicy,
    pub out: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            methods: vec![Method::Ipd],
            graph: GraphSpec::RingWithChords {
                n: 10,
                chord_probability: 0.2,
                seed: 1,
            },
            objective: ObjectiveSpec::Quadratic {
                centers: CenterSource::Synthetic { dim: 2, seed: 7 },
                curvature: 1.0,
            },
            params: ParameterMode::Corollary,
            delta: 0.9,
            rho: Scalar::Auto,
            eta: vec![Scalar::Auto],
            inner_rounds: vec![InnerRounds::Auto],
            q: vec![1.0],
            seeds: vec![0],
            max_rounds: 5000,
            stop_tolerance: 0.0,
            tolerance: 0.1,
            inner_tol: crate::baselines::DEFAULT_INNER_TOL,
            max_inner: crate::baselines::DEFAULT_MAX_INNER,
            balance_rule: BalanceRule::default(),
            weight_init: WeightInit::default(),
            xi_seed: XiSeed::default(),
            inactive: InactivePolicy::default(),
            out: None,
        }
    }
}

const KEYS: &[&str] = &[
    "methods",
    "graph.n",
    "graph.chord_probability",
    "graph.seed",
    "graph.file",
    "objective",
    "objective.centers",
    "objective.dim",
    "objective.seed",
    "objective.curvature",
    "objective.data",
    "objective.samples",
    "objective.ridge",
    "objective.partition_seed",
    "params",
    "delta",
    "rho",
    "eta",
    "B",
    "q",
    "seeds",
    "max_rounds",
    "stop_tolerance",
    "tolerance",
    "inner_tol",
    "max_inner",
    "balance_rule",
    "weight_init",
    "xi_seed",
    "inactive",
    "out",
];

struct Entry {
    line: usize,
    value: String,
}

fn field_error(key: &str, line: Option<usize>, msg: impl std::fmt::Display) -> Error {
    match line {
        Some(line) => Error::Parse {
            line,
            msg: format!("{key}: {msg}"),
        },
        None => Error::InvalidInput(format!("{key}: {msg}")),
    }
}

struct Fields {
    entries: BTreeMap<String, Entry>,
}

impl Fields {
    fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|e| e.value.parse::<T>().map_err(|err| field_error(key, Some(e.line), err)))
            .transpose()
    }

    fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn list<T>(&self, key: &str, item: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<Vec<T>>> {
        let Some(e) = self.get(key) else { return Ok(None) };
        let items: Vec<&str> = e.value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(field_error(key, Some(e.line), "empty list"));
        }
        items
            .into_iter()
            .map(|s| item(s).map_err(|msg| field_error(key, Some(e.line), msg)))
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.get(key).map(|e| e.line)
    }
}

fn parse_number<T: FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse::<T>().map_err(|_| format!("cannot parse {s:?}"))
}

fn parse_scalar(s: &str) -> std::result::Result<Scalar, String> {
    if s == "auto" {
        return Ok(Scalar::Auto);
    }
    if s == "sqrt_mM" {
        return Ok(Scalar::GeometricMean);
    }
    if let Some(k) = s.strip_suffix("/M") {
        let k: f64 = parse_number(k.trim())?;
        return if k > 0.0 { Ok(Scalar::OverSmoothness(k)) } else { Err(format!("{s:?} must be positive")) };
    }
    let v: f64 = parse_number(s)?;
    if v > 0.0 && v.is_finite() {
        Ok(Scalar::Value(v))
    } else {
        Err(format!("{s:?} must be positive"))
    }
}

fn parse_rule(s: &str) -> std::result::Result<BalanceRule, String> {
    match s {
        "receiver" => Ok(BalanceRule::ReceiverDegree),
        "sender" => Ok(BalanceRule::SenderDegree),
        _ => Err(format!("unknown balance rule {s:?} (receiver | sender)")),
    }
}

fn parse_weight_init(s: &str) -> std::result::Result<WeightInit, String> {
    match s {
        "safe" => Ok(WeightInit::Safe),
        "degree" => Ok(WeightInit::DegreeBound),
        other => match other.parse::<f64>() {
            Ok(v) if v > 0.0 => Ok(WeightInit::Uniform(v)),
            _ => Err(format!("unknown weight init {s:?} (safe | degree | positive number)")),
        },
    }
}

fn parse_xi_seed(s: &str) -> std::result::Result<XiSeed, String> {
    match s {
        "primal" => Ok(XiSeed::Primal),
        "primal_plus_dual" => Ok(XiSeed::PrimalPlusScaledDual),
        _ => Err(format!("unknown xi seed {s:?} (primal | primal_plus_dual)")),
    }
}

fn parse_inactive(s: &str) -> std::result::Result<InactivePolicy, String> {
    match s {
        "frozen" => Ok(InactivePolicy::Frozen),
        "relay" => Ok(InactivePolicy::Relay),
        _ => Err(format!("unknown inactive policy {s:?} (frozen | relay)")),
    }
}

fn one<T>(fields: &Fields, key: &str, f: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Option<T>> {
    fields
        .get(key)
        .map(|e| f(&e.value).map_err(|msg| field_error(key, Some(e.line), msg)))
        .transpose()
}

impl ExperimentSpec {
    /// Parses and validates spec text. Relative paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
                line,
                msg: format!("expected `key = value`, got {content:?}"),
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown key {key:?}"),
                });
            }
            let value = value.trim().to_string();
            if value.is_empty() {
                return Err(field_error(key, Some(line), "missing value"));
            }
            if let Some(prev) = entries.insert(key.to_string(), Entry { line, value }) {
                return Err(field_error(key, Some(line), format!("already set on line {}", prev.line)));
            }
        }
        let f = Fields { entries };
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let d = Self::default();

        let methods = f
            .list("methods", |s| s.parse::<Method>())?
            .unwrap_or(d.methods);

        let graph = match f.get("graph.file") {
            Some(e) => {
                for k in ["graph.n", "graph.chord_probability", "graph.seed"] {
                    if let Some(line) = f.line(k) {
                        return Err(field_error(k, Some(line), "conflicts with graph.file"));
                    }
                }
                GraphSpec::File(resolve(&e.value))
            }
            None => GraphSpec::RingWithChords {
                n: f.parse_or("graph.n", 10)?,
                chord_probability: f.parse_or("graph.chord_probability", 0.2)?,
                seed: f.parse_or("graph.seed", 1)?,
            },
        };

        let kind = f.get("objective").map_or("quadratic", |e| e.value.as_str());
        let objective = match kind {
            "quadratic" => {
                let centers = match f.get("objective.centers") {
                    Some(e) => CenterSource::File(resolve(&e.value)),
                    None => CenterSource::Synthetic {
                        dim: f.parse_or("objective.dim", 2)?,
                        seed: f.parse_or("objective.seed", 7)?,
                    },
                };
                ObjectiveSpec::Quadratic {
                    centers,
                    curvature: f.parse_or("objective.curvature", 1.0)?,
                }
            }
            "logistic" => {
                let data = match f.get("objective.data") {
                    Some(e) => DataSource::File(resolve(&e.value)),
                    None => DataSource::Synthetic {
                        samples: f.parse_or("objective.samples", 5000)?,
                        dim: f.parse_or("objective.dim", 22)?,
                        seed: f.parse_or("objective.seed", 2)?,
                    },
                };
                ObjectiveSpec::Logistic {
                    data,
                    ridge: f.parse_or("objective.ridge", 1e-3)?,
                    partition_seed: f.parse_or("objective.partition_seed", 3)?,
                }
            }
            other => {
                return Err(field_error(
                    "objective",
                    f.line("objective"),
                    format!("unknown objective {other:?} (quadratic | logistic)"),
                ))
            }
        };

        let spec = Self {
            methods,
            graph,
            objective,
            params: one(&f, "params", |s| s.parse::<ParameterMode>())?.unwrap_or(d.params),
            delta: f.parse_or("delta", d.delta)?,
            rho: one(&f, "rho", parse_scalar)?.unwrap_or(d.rho),
            eta: f.list("eta", parse_scalar)?.unwrap_or(d.eta),
            inner_rounds: f
                .list("B", |s| {
                    if s == "auto" {
                        Ok(InnerRounds::Auto)
                    } else {
                        parse_number::<usize>(s).map(InnerRounds::Fixed)
                    }
                })?
                .unwrap_or(d.inner_rounds),
            q: f.list("q", parse_number::<f64>)?.unwrap_or(d.q),
            seeds: f.list("seeds", parse_number::<u64>)?.unwrap_or(d.seeds),
            max_rounds: f.parse_or("max_rounds", d.max_rounds)?,
            stop_tolerance: f.parse_or("stop_tolerance", d.stop_tolerance)?,
            tolerance: f.parse_or("tolerance", d.tolerance)?,
            inner_tol: f.parse_or("inner_tol", d.inner_tol)?,
            max_inner: f.parse_or("max_inner", d.max_inner)?,
            balance_rule: one(&f, "balance_rule", parse_rule)?.unwrap_or(d.balance_rule),
            weight_init: one(&f, "weight_init", parse_weight_init)?.unwrap_or(d.weight_init),
            xi_seed: one(&f, "xi_seed", parse_xi_seed)?.unwrap_or(d.xi_seed),
            inactive: one(&f, "inactive", parse_inactive)?.unwrap_or(d.inactive),
            out: f.get("out").map(|e| resolve(&e.value)),
        };
        spec.validate_with(|key| f.line(key))?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_| None)
    }

    fn validate_with(&self, line: impl Fn(&str) -> Option<usize>) -> Result<()> {
        let err = |key: &str, msg: String| Err(field_error(key, line(key), msg));
        if self.methods.is_empty() {
            return err("methods", "at least one method is required".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return err("methods", "a method is listed twice".into());
        }
        for (key, empty) in [
            ("eta", self.eta.is_empty()),
            ("B", self.inner_rounds.is_empty()),
            ("q", self.q.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return err(key, "sweep axis is empty".into());
            }
        }
        match &self.graph {
            GraphSpec::RingWithChords { n, chord_probability, .. } => {
                if *n < 2 {
                    return err("graph.n", format!("need at least 2 agents, got {n}"));
                }
                if !(0.0..=1.0).contains(chord_probability) {
                    return err("graph.chord_probability", format!("{chord_probability} is outside [0, 1]"));
                }
            }
            GraphSpec::File(p) if !p.is_file() => return err("graph.file", format!("{} does not exist", p.display())),
            GraphSpec::File(_) => {}
        }
        match &self.objective {
            ObjectiveSpec::Quadratic { centers, curvature } => {
                if !(*curvature > 0.0) {
                    return err("objective.curvature", format!("must be positive, got {curvature}"));
                }
                match centers {
                    CenterSource::File(p) if !p.is_file() => {
                        return err("objective.centers", format!("{} does not exist", p.display()))
                    }
                    CenterSource::Synthetic { dim: 0, .. } => return err("objective.dim", "must be positive".into()),
                    _ => {}
                }
            }
            ObjectiveSpec::Logistic { data, ridge, .. } => {
                if !(*ridge > 0.0) {
                    return err("objective.ridge", format!("must be positive for strong convexity, got {ridge}"));
                }
                match data {
                    DataSource::File(p) if !p.is_file() => {
                        return err("objective.data", format!("{} does not exist", p.display()))
                    }
                    DataSource::Synthetic { samples: 0, .. } => return err("objective.samples", "must be positive".into()),
                    DataSource::Synthetic { dim: 0, .. } => return err("objective.dim", "must be positive".into()),
                    _ => {}
                }
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return err("delta", format!("must lie in (0, 1), got {}", self.delta));
        }
        if let Some(q) = self.q.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
            return err("q", format!("{q} is outside (0, 1]"));
        }
        if self.inner_rounds.contains(&InnerRounds::Fixed(0)) {
            return err("B", "inner rounds must be at least 1".into());
        }
        if self.max_rounds == 0 {
            return err("max_rounds", "must be at least 1".into());
        }
        if !(self.stop_tolerance >= 0.0) {
            return err("stop_tolerance", "must be nonnegative".into());
        }
        if !(self.tolerance > 0.0) {
            return err("tolerance", "must be positive".into());
        }
        if !(self.inner_tol > 0.0) {
            return err("inner_tol", "must be positive".into());
        }
        if self.max_inner == 0 {
            return err("max_inner", "must be at least 1".into());
        }
        Ok(())
    }
}
