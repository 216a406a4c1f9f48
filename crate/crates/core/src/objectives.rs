//! Local cost functions, datasets and the centralized reference solver.

use std::io::BufRead;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// A smooth local cost `f_i`.
pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &DVector<f64>) -> f64;
    fn gradient(&self, x: &DVector<f64>) -> DVector<f64>;
    /// Lipschitz constant of the gradient.
    fn smoothness(&self) -> f64;
    /// Strong-convexity modulus (may be zero).
    fn strong_convexity(&self) -> f64;
    /// `value` at every column of `points`.
    fn values_at(&self, points: &DMatrix<f64>) -> Vec<f64> {
        points.column_iter().map(|c| self.value(&c.clone_owned())).collect()
    }
}

pub type BoxedObjective = Box<dyn Objective>;

/// `(curvature / 2) * ||x - center||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    center: DVector<f64>,
    curvature: f64,
}

impl Quadratic {
    pub fn new(center: DVector<f64>, curvature: f64) -> Result<Self> {
        if !(curvature > 0.0 && curvature.is_finite()) {
            return Err(Error::InvalidInput(format!("curvature must be positive, got {curvature}")));
        }
        Ok(Self { center, curvature })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn curvature(&self) -> f64 {
        self.curvature
    }
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * self.curvature * (x - &self.center).norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (x - &self.center) * self.curvature
    }

    fn smoothness(&self) -> f64 {
        self.curvature
    }

    fn strong_convexity(&self) -> f64 {
        self.curvature
    }
}

pub fn quadratic_objective(center: DVector<f64>, curvature: f64) -> Result<Quadratic> {
    Quadratic::new(center, curvature)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: DVector<f64>,
    /// 0 or 1.
    pub label: u8,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub dim: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let dim = samples.first().map_or(0, |s| s.features.len());
        if let Some(bad) = samples.iter().position(|s| s.features.len() != dim) {
            return Err(Error::InvalidInput(format!(
                "sample {bad} has dimension {}, expected {dim}",
                samples[bad].features.len()
            )));
        }
        if let Some(bad) = samples.iter().position(|s| s.label > 1) {
            return Err(Error::InvalidInput(format!("sample {bad} has a non-binary label")));
        }
        Ok(Self { samples, dim })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            dim: self.dim,
        }
    }

    /// Writes the dataset in LIBSVM text form with `{0, 1}` labels, skipping zeros.
    pub fn to_libsvm(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        for s in &self.samples {
            let _ = write!(out, "{}", s.label);
            for (j, v) in s.features.iter().enumerate() {
                if *v != 0.0 {
                    let _ = write!(out, " {}:{}", j + 1, v);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Logistic loss with labels in `{0, 1}` plus a ridge term:
/// `(1/m) sum_j [ln(1 + e^{a_j.x}) + (1 - y_j) a_j.x] + (ridge/2) ||x||^2`.
#[derive(Debug, Clone)]
pub struct Logistic {
    data: Dataset,
    /// Samples as rows.
    features: DMatrix<f64>,
    /// `1 - y_j` per sample.
    offsets: DVector<f64>,
    ridge: f64,
    smoothness: f64,
}

impl Logistic {
    pub fn new(data: Dataset, ridge: f64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InvalidInput("logistic objective needs at least one sample".into()));
        }
        if !(ridge >= 0.0 && ridge.is_finite()) {
            return Err(Error::InvalidInput(format!("ridge must be nonnegative, got {ridge}")));
        }
        let m = data.len() as f64;
        let smoothness =
            data.samples.iter().map(|s| s.features.norm_squared()).sum::<f64>() / (4.0 * m) + ridge;
        let features = DMatrix::from_fn(data.len(), data.dim, |r, c| data.samples[r].features[c]);
        let offsets = DVector::from_iterator(data.len(), data.samples.iter().map(|s| f64::from(1 - s.label)));
        Ok(Self {
            data,
            features,
            offsets,
            ridge,
            smoothness,
        })
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    /// Mean loss given the margins `t_j = a_j . x`.
    fn loss(&self, t: &[f64]) -> f64 {
        let total: f64 = t.iter().zip(self.offsets.iter()).map(|(&t, o)| softplus(t) + o * t).sum();
        total / self.data.len() as f64
    }
}

/// `ln(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

impl Objective for Logistic {
    fn dim(&self) -> usize {
        self.data.dim
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let t = &self.features * x;
        self.loss(t.as_slice()) + 0.5 * self.ridge * x.norm_squared()
    }

    fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.data.len() as f64;
        let mut coef = &self.features * x;
        for (c, o) in coef.iter_mut().zip(self.offsets.iter()) {
            *c = (sigmoid(*c) + o) / m;
        }
        let mut g = x * self.ridge;
        g.gemv_tr(1.0, &self.features, &coef, 1.0);
        g
    }

    fn values_at(&self, points: &DMatrix<f64>) -> Vec<f64> {
        let t = &self.features * points;
        t.column_iter()
            .zip(points.column_iter())
            .map(|(tc, x)| self.loss(tc.as_slice()) + 0.5 * self.ridge * x.norm_squared())
            .collect()
    }

    fn smoothness(&self) -> f64 {
        self.smoothness
    }

    fn strong_convexity(&self) -> f64 {
        self.ridge
    }
}

pub fn logistic_objective(data: Dataset, ridge: f64) -> Result<Logistic> {
    Logistic::new(data, ridge)
}

/// Disjoint per-agent index lists covering a dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub parts: Vec<Vec<usize>>,
}

/// Seeded shuffle split into `n` contiguous blocks whose sizes differ by at most one.
pub fn partition_uniform(data: &Dataset, n: usize, seed: u64) -> Result<Partition> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot partition across zero agents".into()));
    }
    if data.len() < n {
        return Err(Error::InvalidInput(format!(
            "{} samples cannot cover {n} agents",
            data.len()
        )));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = data.len() / n;
    let extra = data.len() % n;
    let mut parts = Vec::with_capacity(n);
    let mut start = 0;
    for i in 0..n {
        let len = base + usize::from(i < extra);
        parts.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(Partition { parts })
}

/// One logistic objective per partition block.
pub fn logistic_per_agent(data: &Dataset, partition: &Partition, ridge: f64) -> Result<Vec<BoxedObjective>> {
    partition
        .parts
        .iter()
        .map(|idx| Ok(Box::new(Logistic::new(data.subset(idx), ridge)?) as BoxedObjective))
        .collect()
}

/// Reads LIBSVM sparse text (`label idx:val ...`, 1-based indices).
///
/// Labels `<= 0` map to 0. When exactly two distinct positive-or-other labels
/// appear, the smaller maps to 0 and the larger to 1; e.g. `{1, 2}` becomes `{0, 1}`.
pub fn parse_libsvm(reader: impl BufRead) -> Result<Dataset> {
    let mut rows: Vec<(f64, Vec<(usize, f64)>)> = Vec::new();
    let mut width = 0;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok.parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("non-numeric label `{label_tok}`"),
        })?;
        let mut feats = Vec::new();
        for tok in tokens {
            let (i, v) = tok.split_once(':').ok_or_else(|| Error::Parse {
                line: line_no,
                msg: format!("expected `index:value`, got `{tok}`"),
            })?;
            let i: usize = i.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad feature index `{i}`"),
            })?;
            if i == 0 {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "feature indices are 1-based".into(),
                });
            }
            let v: f64 = v.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("non-numeric value `{v}`"),
            })?;
            width = width.max(i);
            feats.push((i - 1, v));
        }
        rows.push((label, feats));
    }

    let mut distinct: Vec<f64> = rows.iter().map(|r| r.0).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let zero_label = (distinct.len() == 2).then(|| distinct[0]);

    let samples = rows
        .into_iter()
        .map(|(label, feats)| {
            let mut features = DVector::zeros(width);
            for (j, v) in feats {
                features[j] = v;
            }
            let label = u8::from(!(label <= 0.0 || Some(label) == zero_label));
            Sample { features, label }
        })
        .collect();
    Dataset::new(samples)
}

/// Global cost `F(x) = sum_i f_i(x)`.
pub fn global_value(objectives: &[BoxedObjective], x: &DVector<f64>) -> f64 {
    objectives.iter().map(|f| f.value(x)).sum()
}

pub fn global_gradient(objectives: &[BoxedObjective], x: &DVector<f64>) -> DVector<f64> {
    let parts: Vec<DVector<f64>> = objectives.par_iter().map(|f| f.gradient(x)).collect();
    parts.into_iter().fold(DVector::zeros(x.len()), |acc, g| acc + g)
}

pub fn common_dim(objectives: &[BoxedObjective]) -> Result<usize> {
    let d = objectives
        .first()
        .ok_or_else(|| Error::InvalidInput("no objectives".into()))?
        .dim();
    if objectives.iter().any(|f| f.dim() != d) {
        return Err(Error::InvalidInput("objectives disagree on dimension".into()));
    }
    Ok(d)
}

/// Largest smoothness and smallest strong-convexity constant across agents.
pub fn conditioning(objectives: &[BoxedObjective]) -> (f64, f64) {
    let m = objectives
        .iter()
        .map(|f| f.strong_convexity())
        .fold(f64::INFINITY, f64::min);
    let big_m = objectives.iter().map(|f| f.smoothness()).fold(0.0, f64::max);
    (m, big_m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralSolution {
    pub x_star: DVector<f64>,
    pub f_star: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

pub const CENTRAL_MAX_ITERATIONS: usize = 10_000_000;

/// Gradient descent on `F = sum f_i` with stepsize `1 / sum M_f` until `||grad F|| <= tol`.
pub fn solve_centralized(objectives: &[BoxedObjective], tol: f64) -> Result<CentralSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let d = common_dim(objectives)?;
    let total_m: f64 = objectives.iter().map(|f| f.strong_convexity()).sum();
    if total_m <= 0.0 {
        warn!("sum of local costs is not strongly convex; relying on the iteration cap");
    }
    let step = 1.0 / objectives.iter().map(|f| f.smoothness()).sum::<f64>();
    let mut x = DVector::zeros(d);
    let mut grad = global_gradient(objectives, &x);
    let mut iterations = 0;
    while grad.norm() > tol && iterations < CENTRAL_MAX_ITERATIONS {
        x.axpy(-step, &grad, 1.0);
        grad = global_gradient(objectives, &x);
        iterations += 1;
    }
    let grad_norm = grad.norm();
    if grad_norm > tol {
        warn!("centralized solve stopped at the iteration cap with gradient norm {grad_norm:e}");
    }
    Ok(CentralSolution {
        f_star: global_value(objectives, &x),
        x_star: x,
        iterations,
        grad_norm,
    })
}
