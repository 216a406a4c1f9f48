//! Seeded synthetic instances and the center-list file format.

use std::io::BufRead;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::metrics::fmt_float;
use crate::objectives::{Dataset, Sample};

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn normal_vector(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
}

/// Standard-normal features; label 1 with probability `sigma(w_true . a)`,
/// where `w_true` is itself standard normal and drawn first.
pub fn synthetic_logistic(samples: usize, d: usize, seed: u64) -> Result<Dataset> {
    if samples == 0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "synthetic logistic data needs positive sizes, got samples={samples}, d={d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w_true = normal_vector(&mut rng, d);
    let rows = (0..samples)
        .map(|_| {
            let features = normal_vector(&mut rng, d);
            let p = sigmoid(w_true.dot(&features));
            let u: f64 = rng.random();
            Sample {
                features,
                label: u8::from(u < p),
            }
        })
        .collect();
    Dataset::new(rows)
}

/// `n` standard-normal centers in `R^d`.
pub fn quadratic_centers(n: usize, d: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!("quadratic centers need positive sizes, got n={n}, d={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| normal_vector(&mut rng, d)).collect())
}

/// One center per line, coordinates separated by spaces.
pub fn centers_to_text(centers: &[DVector<f64>]) -> String {
    let mut out = String::new();
    for c in centers {
        let line: Vec<String> = c.iter().map(|&v| fmt_float(v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn read_centers(reader: impl BufRead) -> Result<Vec<DVector<f64>>> {
    let mut centers: Vec<DVector<f64>> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse { line: line_no, msg: e.to_string() })?;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let values = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::Parse { line: line_no, msg: format!("bad number {t:?}") })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = centers.first() {
            if first.len() != values.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("{} coordinates, expected {}", values.len(), first.len()),
                });
            }
        }
        centers.push(DVector::from_vec(values));
    }
    if centers.is_empty() {
        return Err(Error::InvalidInput("center list is empty".into()));
    }
    Ok(centers)
}
