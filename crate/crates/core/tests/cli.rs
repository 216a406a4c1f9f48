use std::path::Path;
use std::process::{Command, Output};

fn ipd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipd")).args(args).output().expect("spawn ipd")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn certify_prints_human_and_csv() {
    let o = ipd(&["certify", "--m-f", "0.1", "--big-m-f", "1", "--delta", "0.9", "--q", "0.5,1", "--graph-n", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("B_min    = 45"));
    assert!(out.contains("lambda1(q=0.5)"));
    assert!(out.contains("eta,rho,b_min,b_used"));
    assert!(out.contains("q,lambda1"));
}

#[test]
fn certify_unit_kappa_and_bad_delta() {
    let o = ipd(&["certify", "--m-f", "1", "--big-m-f", "1"]);
    assert!(stdout(&o).contains("kappa    = 1\n"));
    let o = ipd(&["certify", "--m-f", "1", "--big-m-f", "1", "--delta", "1"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn gen_data_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.svm");
    let b = dir.path().join("b.svm");
    for p in [&a, &b] {
        let o = ipd(&["gen-data", "synthetic-logistic", "--samples", "5000", "--d", "22", "--seed", "4", "--out", p.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 5000);
    let max_index = text
        .split_whitespace()
        .filter_map(|t| t.split_once(':'))
        .map(|(i, _)| i.parse::<usize>().unwrap())
        .max();
    assert_eq!(max_index, Some(22));

    let c = dir.path().join("c.txt");
    let o = ipd(&["gen-data", "quadratic", "--n", "4", "--d", "3", "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    let centers = std::fs::read_to_string(&c).unwrap();
    assert_eq!(centers.lines().count(), 4);
    assert!(centers.lines().all(|l| l.split_whitespace().count() == 3));

    let o = ipd(&["gen-data", "synthetic-logistic", "--samples", "0", "--out", c.to_str().unwrap()]);
    assert!(!o.status.success());
    let o = ipd(&["gen-data", "quadratic", "--out", "/no/such/dir/x.txt"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/dir/x.txt"));
}

#[test]
fn invalid_spec_reports_line_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.spec");
    std::fs::write(&spec, "methods = ipd\n\nq = 0.5, 2\n").unwrap();
    let o = ipd(&["run", spec.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("line 3") && err.contains("q"), "{err}");
}

fn field<'a>(header: &str, row: &'a str, name: &str) -> &'a str {
    let idx = header.split(',').position(|h| h == name).unwrap();
    row.split(',').nth(idx).unwrap()
}

#[test]
fn spec_run_writes_traces_and_consistent_summary() {
    let dir = tempfile::tempdir().unwrap();
    let centers = dir.path().join("centers.txt");
    let o = ipd(&["gen-data", "quadratic", "--n", "6", "--d", "2", "--seed", "3", "--out", centers.to_str().unwrap()]);
    assert!(o.status.success());
    std::fs::write(
        dir.path().join("sweep.spec"),
        "# small sweep\nmethods = ipd, push_diging\ngraph.n = 6\ngraph.seed = 5\nobjective.centers = centers.txt\n\
         eta = 0.3, 0.6\nrho = 0.5\nB = 2\nq = 0.5, 1\nseeds = 1, 2\nmax_rounds = 300\nout = results\n",
    )
    .unwrap();
    let o = ipd(&["run", dir.path().join("sweep.spec").to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("results");
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    let mut lines = summary.lines();
    let header = lines.next().unwrap();
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2 * 2 * 2 + 2 * 2);
    let dim = 2u64;
    let mut checked = 0;
    for row in rows.iter().filter(|r| r.starts_with("ipd,")) {
        assert_eq!(field(header, row, "status"), "ok");
        let b: u64 = field(header, row, "B").parse().unwrap();
        let q: f64 = field(header, row, "q").parse().unwrap();
        let eta: f64 = field(header, row, "eta").parse().unwrap();
        let seed = field(header, row, "seed");
        let file = out.join(format!("ipd_B{b}_q{q}_eta{eta}_seed{seed}.csv"));
        let trace = std::fs::read_to_string(&file).unwrap_or_else(|_| panic!("missing {}", file.display()));
        let mut tl = trace.lines();
        let th = tl.next().unwrap();
        assert_eq!(th, ipd::TraceRecord::CSV_HEADER);
        let Ok(to_tol) = field(header, row, "rounds_to_tol").parse::<usize>() else {
            continue;
        };
        let ledger: u64 = tl
            .take(to_tol + 1)
            .map(|r| field(th, r, "active_count").parse::<u64>().unwrap())
            .skip(1)
            .sum::<u64>()
            * b
            * (dim + 1);
        assert_eq!(field(header, row, "scalars_to_tol").parse::<u64>().unwrap(), ledger, "{row}");
        checked += 1;
    }
    assert!(checked >= 4, "only {checked} runs reached the tolerance");
}

#[test]
fn seed_flag_and_out_root() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.spec");
    std::fs::write(&spec, "graph.n = 4\nmax_rounds = 20\nB = 1\nseeds = 1, 2, 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_ipd"))
        .args(["run", spec.to_str().unwrap(), "--seed", "9"])
        .env("IPD_OUT_ROOT", dir.path().join("root"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(dir.path().join("root/tiny/summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(summary.lines().nth(1).unwrap().contains(",9,ok,"));
}

#[test]
fn preset_and_spec_are_exclusive() {
    let o = ipd(&["run"]);
    assert!(!o.status.success());
    let o = ipd(&["run", "--preset", "fig9"]);
    assert!(!o.status.success());
    assert!(!Path::new("out/fig9").exists());
}
