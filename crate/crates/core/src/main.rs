use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use ipd::graph::DirectedGraph;
use ipd::harness::certify::certify;
use ipd::harness::data::{centers_to_text, quadratic_centers, synthetic_logistic};
use ipd::harness::presets::Preset;
use ipd::harness::runner::run_spec;
use ipd::harness::spec::ExperimentSpec;
use ipd::metrics::{CertificateInputs, ParameterMode};
use ipd::{Error, Result};

/// Output root used when neither `--out` nor the spec's `out` is given.
const OUT_ROOT_VAR: &str = "IPD_OUT_ROOT";

#[derive(Parser)]
#[command(name = "ipd", version, about = "Inexact ADMM on directed graphs: experiments and certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a spec file or a preset; writes per-run trace CSVs and summary.csv.
    Run {
        spec: Option<PathBuf>,
        #[arg(long)]
        preset: Option<Preset>,
        /// Output directory (overrides the spec's `out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the spec's seed list with this single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the stepsize, penalty, inner rounds and rate certificate.
    Certify(CertifyArgs),
    /// Write a synthetic instance.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long = "m-f")]
    m_f: f64,
    #[arg(long = "big-m-f")]
    big_m_f: f64,
    #[arg(long, default_value_t = 0.9)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = Mode::Corollary)]
    mode: Mode,
    /// Agents of a ring-with-chords graph supplying lambda2.
    #[arg(long)]
    graph_n: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    chord_probability: f64,
    #[arg(long, default_value_t = 1)]
    graph_seed: u64,
    /// Edge-list file supplying lambda2.
    #[arg(long, conflicts_with = "graph_n")]
    graph_file: Option<PathBuf>,
    /// Participation probabilities to report lambda1 for.
    #[arg(long, value_delimiter = ',')]
    q: Vec<f64>,
    /// Pin the inner-round count instead of deriving it.
    #[arg(long)]
    inner_rounds: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Theorem,
    Corollary,
}

#[derive(Clone, Copy, ValueEnum)]
enum DataKind {
    Quadratic,
    SyntheticLogistic,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(value_enum)]
    kind: DataKind,
    /// Agents (quadratic centers).
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 22)]
    d: usize,
    #[arg(long, default_value_t = 5000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn out_dir(cli_out: Option<PathBuf>, spec: &ExperimentSpec, name: &str) -> PathBuf {
    cli_out.or_else(|| spec.out.clone()).unwrap_or_else(|| {
        std::env::var_os(OUT_ROOT_VAR)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("out"))
            .join(name)
    })
}

fn run(spec_path: Option<PathBuf>, preset: Option<Preset>, out: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let (mut spec, name) = match (spec_path, preset) {
        (Some(path), None) => {
            let name = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            (ExperimentSpec::from_file(&path)?, name)
        }
        (None, Some(p)) => (p.spec(), p.name().to_string()),
        _ => return Err(Error::InvalidInput("give exactly one of a spec file or --preset".into())),
    };
    if let Some(seed) = seed {
        spec.seeds = vec![seed];
    }
    let dir = out_dir(out, &spec, &name);
    let report = run_spec(&spec, &dir)?;
    let failed = report.rows.iter().filter(|r| r.status.as_str() != "ok").count();
    println!(
        "{} runs ({failed} failed or diverged); summary at {}",
        report.rows.len(),
        report.out_dir.join("summary.csv").display()
    );
    Ok(())
}

fn run_certify(a: CertifyArgs) -> Result<()> {
    let mode = match a.mode {
        Mode::Theorem => ParameterMode::Theorem,
        Mode::Corollary => ParameterMode::Corollary,
    };
    let mut inputs = CertificateInputs::new(a.m_f, a.big_m_f, a.delta, mode);
    inputs.inner_rounds = a.inner_rounds;
    let graph = match (a.graph_n, &a.graph_file) {
        (Some(n), _) => Some(DirectedGraph::ring_with_random_chords(n, a.chord_probability, a.graph_seed)?),
        (None, Some(path)) => {
            let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
            Some(DirectedGraph::read_edge_list(std::io::BufReader::new(file))?)
        }
        (None, None) => None,
    };
    if let Some(g) = graph {
        let facts = g.analyze();
        if !facts.strongly_connected {
            return Err(Error::InvalidTopology("graph is not strongly connected".into()));
        }
        inputs.lambda2 = facts.lambda2;
    }
    let report = certify(&inputs, &a.q)?;
    print!("{}\n{}", report.human(), report.csv());
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let text = match a.kind {
        DataKind::Quadratic => centers_to_text(&quadratic_centers(a.n, a.d, a.seed)?),
        DataKind::SyntheticLogistic => synthetic_logistic(a.samples, a.d, a.seed)?.to_libsvm(),
    };
    std::fs::write(&a.out, text).map_err(|e| Error::io(&a.out, e))?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { spec, preset, out, seed } => run(spec, preset, out, seed),
        Command::Certify(a) => run_certify(a),
        Command::GenData(a) => gen_data(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
