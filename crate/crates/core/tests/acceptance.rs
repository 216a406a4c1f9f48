//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). A FAIL line is a measured
//! outcome, not a crash, so the process exits 0 unless a run itself errors.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;

use ipd::balancing::{balance_residual, balance_step, initial_weights, BalanceRule, WeightInit};
use ipd::baselines::{run_exact_admm, run_push_diging, run_push_diging_observed, PushDigingConfig};
use ipd::graph::DirectedGraph;
use ipd::harness::data::synthetic_logistic;
use ipd::harness::runner::{build_instance, run_spec, Instance};
use ipd::harness::spec::{DataSource, ExperimentSpec, InnerRounds, ObjectiveSpec, Scalar};
use ipd::ipd::{run_ipd, run_ipd_observed, InactivePolicy, Participation, RunConfig};
use ipd::metrics::{
    check_inequalities, derive_parameters, fit_after_burn_in, fit_geometric_rate, CertificateInputs, Method,
    ParameterMode, RateCertificate, Trace, DEFAULT_BURN_IN,
};
use ipd::objectives::{logistic_per_agent, partition_uniform};

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, id: usize, name: &str, pass: bool, detail: String) {
        self.total += 1;
        self.passed += usize::from(pass);
        println!("criterion {id:>2} {name:<28} {}  {detail}", if pass { "PASS" } else { "FAIL" });
        let _ = std::io::stdout().flush();
    }
}

fn quadratic_instance() -> Instance {
    build_instance(&ExperimentSpec::default()).expect("criterion-1 instance")
}

fn corollary_certificate(inst: &Instance) -> RateCertificate {
    let mut inputs = CertificateInputs::new(inst.m_f, inst.big_m_f, 0.9, ParameterMode::Corollary);
    inputs.lambda2 = inst.facts.lambda2;
    derive_parameters(&inputs).expect("corollary certificate")
}

fn run(inst: &Instance, cfg: &RunConfig) -> Trace {
    run_ipd(&inst.graph, &inst.facts, &inst.objectives, inst.f_star, cfg).expect("IPD run")
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        (v[k / 2 - 1] + v[k / 2]) / 2.0
    }
}

fn rounds(r: Option<usize>) -> f64 {
    r.map_or(f64::INFINITY, |r| r as f64)
}

/// Criteria 1-3 share one full-participation run.
fn criteria_1_to_3(report: &mut Report, inst: &Instance, cert: &RateCertificate) {
    let cfg = RunConfig {
        max_outer_iterations: 5000,
        ..RunConfig::from_certificate(cert, 0.9)
    };
    let mut max_dual = 0.0_f64;
    let trace = run_ipd_observed(&inst.graph, &inst.facts, &inst.objectives, inst.f_star, &cfg, &mut |view| {
        let sum = view.agents.iter().fold(DVector::zeros(inst.dim), |acc, a| acc + &a.y);
        max_dual = max_dual.max(sum.norm());
    })
    .expect("criterion-1 run");
    let x_star = ipd::objectives::solve_centralized(&inst.objectives, 1e-12).unwrap().x_star;
    let reach = trace.rounds_to(1e-8);
    let x_err = (trace.average_iterate() - &x_star).amax();
    report.line(
        1,
        "correctness vs oracle",
        reach.is_some() && x_err <= 1e-6,
        format!("rounds to 1e-8: {reach:?} of 5000 (B={}); |mean x - x*|_inf = {x_err:.2e}", cert.b_used),
    );

    let fit = fit_after_burn_in(&trace.cost_errors(), DEFAULT_BURN_IN).expect("rate fit");
    report.line(
        2,
        "linear rate",
        fit.rate < 1.0 && fit.r_squared >= 0.98 && fit.rate <= cert.lambda + 0.05,
        format!(
            "fitted {:.5} (R^2 {:.5}); certified {:.8}",
            fit.rate, fit.r_squared, cert.lambda
        ),
    );

    let drift = trace.diagnostics.max_xi_sum_drift;
    report.line(
        3,
        "conservation invariants",
        drift <= 1e-12 && max_dual <= 1e-10,
        format!("max xi-sum drift {drift:.2e}; max |sum y| {max_dual:.2e}"),
    );
}

fn criterion_4(report: &mut Report) {
    let g = DirectedGraph::ring_with_random_chords(20, 0.2, 1).unwrap();
    let facts = g.analyze();
    let rule = BalanceRule::ReceiverDegree;
    let mut w = initial_weights(&g, &facts, WeightInit::Safe, rule).unwrap();
    let mut residuals = vec![balance_residual(&g, &w)];
    for _ in 0..60 {
        w = balance_step(&g, &w, rule).unwrap();
        residuals.push(balance_residual(&g, &w));
    }
    let fit = fit_geometric_rate(&residuals, 10..61).expect("residual fit");
    let rel = (fit.rate - facts.lambda2).abs() / facts.lambda2;
    report.line(
        4,
        "weight balancing",
        rel <= 0.15,
        format!(
            "fitted {:.4} over steps 10..60 (R^2 {:.4}); lambda2 {:.4}; off by {:.1}%",
            fit.rate,
            fit.r_squared,
            facts.lambda2,
            100.0 * rel
        ),
    );
}

fn criterion_5(report: &mut Report, inst: &Instance, cert: &RateCertificate) {
    let qs = [0.3, 0.5, 0.8, 1.0];
    let medians_for = |policy: InactivePolicy| -> Vec<f64> {
        qs.iter()
            .map(|&q| {
                let per_seed = (0..10)
                    .map(|seed| {
                        let cfg = RunConfig {
                            participation: if q < 1.0 { Participation::Uniform(q) } else { Participation::Full },
                            seed,
                            stop_tolerance: 1e-6,
                            max_outer_iterations: 20_000,
                            inactive_policy: policy,
                            ..RunConfig::from_certificate(cert, 0.9)
                        };
                        rounds(run(inst, &cfg).rounds_to(1e-6))
                    })
                    .collect();
                median(per_seed)
            })
            .collect()
    };
    let verdict = |m: &[f64]| (m[1] <= 4.0 * m[3], m.windows(2).all(|p| p[1] <= p[0]));
    let frozen = medians_for(InactivePolicy::Frozen);
    let (within, monotone) = verdict(&frozen);
    let relay = medians_for(InactivePolicy::Relay);
    let (r_within, r_monotone) = verdict(&relay);
    report.line(
        5,
        "partial participation",
        within && monotone,
        format!(
            "median rounds to 1e-6 (cap 20000) for q=0.3,0.5,0.8,1: {frozen:?}; 4x bound {within}, nonincreasing {monotone}. \
             Relay policy: {relay:?}; 4x bound {r_within}, nonincreasing {r_monotone}"
        ),
    );
}

fn criterion_6(report: &mut Report, inst: &Instance, cert: &RateCertificate) {
    let to_tol: Vec<(usize, f64)> = [1, 2, 5]
        .iter()
        .map(|&b| {
            let cfg = RunConfig {
                inner_rounds: b,
                stop_tolerance: 1e-4,
                max_outer_iterations: 100_000,
                ..RunConfig::from_certificate(cert, 0.9)
            };
            (b, rounds(run(inst, &cfg).rounds_to(1e-4)))
        })
        .collect();
    let base = to_tol[0].1;
    let pass = base.is_finite() && to_tol.iter().all(|(_, r)| (r - base).abs() <= 0.25 * base);
    report.line(
        6,
        "B-insensitivity",
        pass,
        format!("rounds to 1e-4 (cap 100000) by B: {to_tol:?}"),
    );
}

fn logistic_instance() -> Instance {
    let spec = ExperimentSpec {
        graph: ipd::harness::spec::GraphSpec::RingWithChords {
            n: 50,
            chord_probability: 0.2,
            seed: 1,
        },
        objective: ObjectiveSpec::Logistic {
            data: DataSource::Synthetic {
                samples: 5000,
                dim: 22,
                seed: 2,
            },
            ridge: 1e-3,
            partition_seed: 3,
        },
        ..ExperimentSpec::default()
    };
    build_instance(&spec).expect("logistic instance")
}

#[derive(Debug, Clone, Copy)]
struct Cost {
    k: i32,
    rounds: usize,
    grads: u64,
    scalars: u64,
}

impl std::fmt::Display for Cost {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "k={} ({} rounds, {} gradients, {} scalars)", self.k, self.rounds, self.grads, self.scalars)
    }
}

fn best(costs: &[Cost]) -> Option<Cost> {
    costs.iter().copied().min_by_key(|c| (c.grads, c.scalars))
}

fn saving(ours: u64, theirs: u64) -> f64 {
    100.0 * (1.0 - ours as f64 / theirs as f64)
}

fn criteria_7_and_8(report: &mut Report) {
    let inst = logistic_instance();
    let rho = (inst.m_f * inst.big_m_f).sqrt();
    let (g, facts, objs) = (&inst.graph, &inst.facts, &inst.objectives);
    let mut ipd_costs = Vec::new();
    let mut pd_costs = Vec::new();
    for k in -1..=8 {
        let eta = 2f64.powi(k) / inst.big_m_f;
        let cfg = RunConfig {
            eta,
            rho,
            inner_rounds: 1,
            stop_tolerance: 0.1,
            max_outer_iterations: 3000,
            ..RunConfig::default()
        };
        if let Ok(t) = run_ipd(g, facts, objs, inst.f_star, &cfg) {
            if let Some(r) = t.first_below(0.1) {
                ipd_costs.push(Cost { k, rounds: r.round, grads: r.gradient_evals, scalars: r.broadcast_scalars });
            }
        }
        let pcfg = PushDigingConfig { eta, max_iter: 3000, tol: 0.1 };
        if let Ok(t) = run_push_diging(g, facts, objs, inst.f_star, &pcfg) {
            if let Some(r) = t.first_below(0.1) {
                pd_costs.push(Cost { k, rounds: r.round, grads: r.gradient_evals, scalars: r.broadcast_scalars });
            }
        }
    }
    let (ib, pb) = (best(&ipd_costs), best(&pd_costs));
    match (ib, pb) {
        (Some(i), Some(p)) => {
            let (sg, ss) = (saving(i.grads, p.grads), saving(i.scalars, p.scalars));
            report.line(
                7,
                "baseline comparison",
                sg >= 30.0 && ss >= 30.0,
                format!(
                    "best IPD {i} vs best Push-DIGing {p} (eta = 2^k/M); savings: gradients {sg:.1}%, scalars {ss:.1}%"
                ),
            );
        }
        _ => report.line(7, "baseline comparison", false, format!("IPD {ib:?}, Push-DIGing {pb:?}")),
    }

    let cfg = RunConfig {
        eta: 1.0 / inst.big_m_f,
        rho,
        inner_rounds: 1,
        stop_tolerance: 0.1,
        max_outer_iterations: 3000,
        ..RunConfig::default()
    };
    let exact = run_exact_admm(g, facts, objs, inst.f_star, &cfg, 1e-8, 10_000_000).expect("exact ADMM run");
    match (exact.first_below(0.1), ib) {
        (Some(e), Some(i)) => {
            let s = saving(i.grads, e.gradient_evals);
            report.line(
                8,
                "exact-ADMM comparison",
                s >= 50.0,
                format!(
                    "exact ADMM: {} rounds, {} gradients; IPD best: {} gradients; saving {s:.1}%",
                    e.round, e.gradient_evals, i.grads
                ),
            );
        }
        (e, i) => report.line(8, "exact-ADMM comparison", false, format!("exact {:?}, IPD {i:?}", e.map(|r| r.round))),
    }
}

fn criterion_9(report: &mut Report) {
    let data = synthetic_logistic(60, 3, 11).unwrap();
    let part = partition_uniform(&data, 1, 0).unwrap();
    let objs = logistic_per_agent(&data, &part, 0.1).unwrap();
    let g = DirectedGraph::singleton();
    let facts = g.analyze();
    let eta = 0.5 / objs[0].smoothness();
    let mut gd = vec![DVector::zeros(3)];
    for k in 0..100 {
        let x = &gd[k];
        gd.push(x - objs[0].gradient(x) * eta);
    }
    let cfg = RunConfig { eta, rho: 0.7, max_outer_iterations: 100, ..RunConfig::default() };
    let mut ipd_err = 0.0_f64;
    run_ipd_observed(&g, &facts, &objs, 0.0, &cfg, &mut |v| {
        ipd_err = ipd_err.max((&v.agents[0].x - &gd[v.round]).amax());
    })
    .unwrap();
    let mut pd_err = 0.0_f64;
    let pcfg = PushDigingConfig { eta, max_iter: 100, tol: 0.0 };
    run_push_diging_observed(&g, &facts, &objs, 0.0, &pcfg, &mut |k, s| {
        pd_err = pd_err.max((&s.x[0] - &gd[k]).amax());
    })
    .unwrap();
    report.line(
        9,
        "single-agent reductions",
        ipd_err <= 1e-12 && pd_err <= 1e-12,
        format!("max deviation from gradient descent over 100 rounds: IPD {ipd_err:.1e}, Push-DIGing {pd_err:.1e}"),
    );
}

fn criterion_10(report: &mut Report, inst: &Instance) {
    let cfg = PushDigingConfig { eta: 0.2, max_iter: 500, tol: 0.0 };
    let mut worst = 0.0_f64;
    run_push_diging_observed(&inst.graph, &inst.facts, &inst.objectives, inst.f_star, &cfg, &mut |_, s| {
        let tracked = s.y.iter().fold(DVector::zeros(inst.dim), |acc, y| acc + y);
        let actual = inst
            .objectives
            .iter()
            .zip(&s.x)
            .fold(DVector::zeros(inst.dim), |acc, (f, x)| acc + f.gradient(x));
        worst = worst.max((tracked - actual).norm());
    })
    .unwrap();
    report.line(
        10,
        "tracker identity",
        worst <= 1e-10,
        format!("max |sum y - sum grad| over 500 rounds: {worst:.2e}"),
    );
}

fn criterion_11(report: &mut Report) {
    let mut failures = Vec::new();
    let mut bs = Vec::new();
    for kappa in [2.0, 10.0, 100.0] {
        for delta in [0.5, 0.9] {
            let inputs = CertificateInputs::new(1.0, kappa, delta, ParameterMode::Theorem);
            match derive_parameters(&inputs) {
                Ok(c) => {
                    let checks = check_inequalities(1.0, kappa, c.eta, c.rho, c.b_used, delta);
                    if !checks.iter().all(|c| c.holds) {
                        failures.push(format!("kappa={kappa}, delta={delta}"));
                    }
                    bs.push(format!("({kappa},{delta}):{}->{}", c.b_min, c.b_used));
                }
                Err(e) => failures.push(format!("kappa={kappa}, delta={delta}: {e}")),
            }
        }
    }
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_ipd"))
        .args(["certify", "--m-f", "0.1", "--big-m-f", "1", "--delta", "0.9"])
        .output()
        .expect("certify subcommand");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let printed = stdout.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["B_min", "=", "45"]);
    report.line(
        11,
        "certificate feasibility",
        failures.is_empty() && printed && out.status.success(),
        format!("theorem-mode B formula->feasible: {}; infeasible: {failures:?}; certify prints B_min=45: {printed}", bs.join(" ")),
    );
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_12(report: &mut Report) {
    let spec = ExperimentSpec {
        methods: vec![Method::Ipd, Method::PushDiging, Method::ExactAdmm],
        eta: vec![Scalar::Auto],
        inner_rounds: vec![InnerRounds::Auto, InnerRounds::Fixed(1)],
        q: vec![0.5, 1.0],
        seeds: vec![0, 1],
        max_rounds: 400,
        ..ExperimentSpec::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_spec(&spec, &a).unwrap();
    run_spec(&spec, &b).unwrap();
    let (fa, fb) = (read_dir(&a), read_dir(&b));
    report.line(
        12,
        "determinism",
        fa.len() > 1 && fa == fb,
        format!("{} CSV files written twice; identical: {}", fa.len(), fa == fb),
    );
}

fn main() {
    // `cargo test` passes libtest flags; `--list` must not trigger the full run.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let start = Instant::now();
    let mut report = Report { passed: 0, total: 0 };
    let quad = quadratic_instance();
    let cert = corollary_certificate(&quad);
    criteria_1_to_3(&mut report, &quad, &cert);
    criterion_4(&mut report);
    criterion_5(&mut report, &quad, &cert);
    criterion_6(&mut report, &quad, &cert);
    criteria_7_and_8(&mut report);
    criterion_9(&mut report);
    criterion_10(&mut report, &quad);
    criterion_11(&mut report);
    criterion_12(&mut report);
    println!(
        "acceptance: {}/{} criteria pass ({:.0} s)",
        report.passed,
        report.total,
        start.elapsed().as_secs_f64()
    );
}
