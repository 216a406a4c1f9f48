//! Printable rate certificates.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::{derive_parameters, fmt_float, CertificateInputs, RateCertificate};

pub struct CertifyReport {
    pub certificate: RateCertificate,
    /// `(q, lambda_1(q))` for each requested participation probability.
    pub partial: Vec<(f64, f64)>,
}

pub fn certify(inputs: &CertificateInputs, qs: &[f64]) -> Result<CertifyReport> {
    if let Some(q) = qs.iter().find(|&&q| !(q > 0.0 && q <= 1.0)) {
        return Err(Error::InvalidInput(format!("q = {q} is outside (0, 1]")));
    }
    let certificate = derive_parameters(inputs)?;
    let partial = qs.iter().map(|&q| (q, certificate.lambda_partial(q))).collect();
    Ok(CertifyReport { certificate, partial })
}

impl CertifyReport {
    pub fn human(&self) -> String {
        let c = &self.certificate;
        let mut s = String::new();
        let _ = writeln!(s, "kappa    = {}", c.kappa);
        let _ = writeln!(s, "eta      = {}", c.eta);
        let _ = writeln!(s, "rho      = {}", c.rho);
        let _ = writeln!(s, "B_min    = {}", c.b_min);
        if c.b_used != c.b_min {
            let _ = writeln!(s, "B_used   = {}  (smallest B meeting every inequality)", c.b_used);
        }
        let _ = writeln!(s, "c1       = {}", c.c1);
        let _ = writeln!(s, "c2       = {}", c.c2);
        let _ = writeln!(s, "c3       = {}", c.c3);
        let _ = writeln!(s, "mu1      = {}", c.mu1);
        let _ = writeln!(s, "lambda2  = {}", c.lambda2);
        let _ = writeln!(s, "lambda   = {}", c.lambda);
        for (q, l) in &self.partial {
            let _ = writeln!(s, "lambda1(q={q}) = {l}");
        }
        for check in &c.inequalities {
            let _ = writeln!(
                s,
                "{:<12} {:>+.6e}  {}",
                check.label,
                check.value,
                if check.holds { "holds" } else { "FAILS" }
            );
        }
        s
    }

    /// Certificate header and row, then a `q,lambda1` table.
    pub fn csv(&self) -> String {
        let mut s = format!("{}\n{}\n", RateCertificate::CSV_HEADER, self.certificate.to_csv_row());
        if !self.partial.is_empty() {
            s.push_str("q,lambda1\n");
            for (q, l) in &self.partial {
                let _ = writeln!(s, "{},{}", fmt_float(*q), fmt_float(*l));
            }
        }
        s
    }
}
