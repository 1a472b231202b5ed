//! `netrecon`: config-driven experiments for grounding-based topology reconstruction.

mod config;
mod error;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use netrecon::bench::{bench_estimated, bench_oracle, BenchRow, CostModel};

use crate::config::ExperimentConfig;
use crate::error::{CliError, StageExt};
use crate::pipeline::*;

#[derive(Parser, Debug)]
#[command(name = "netrecon", version, about = "Reconstruct LTI network topology from cross-power spectral densities")]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replace both the network and the noise seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Correlation path timed by `bench`.
    #[arg(long, global = true, value_enum, default_value_t = CostModelArg::Fft)]
    cost_model: CostModelArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CostModelArg {
    Fft,
    Paper,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write network.txt and node.txt.
    Generate,
    /// Simulate the full run (and the grounded runs the mode needs) into series/.
    Simulate {
        /// Also write plot-ready CSV copies.
        #[arg(long)]
        csv: bool,
    },
    /// Estimate CPSDs into cpsd/ from saved series (analytic in oracle modes).
    Estimate {
        /// Directory holding series/ (default: the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reconstruct from saved CPSDs.
    Reconstruct {
        /// Directory holding cpsd/ (default: the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Compare saved weights.txt or boolean.txt with the true network.
    Evaluate {
        /// Directory holding the recovered matrices (default: the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Full pipeline: generate, simulate, estimate, reconstruct, evaluate.
    Run,
    /// Time the pipeline stages over a sweep of (N, L) points; writes bench.csv.
    Bench {
        /// Points as `N:L` separated by commas; `L = 0` times the analytic path.
        #[arg(long, value_delimiter = ',')]
        sweep: Vec<String>,
    },
}

/// `println!` that ignores a closed stdout (e.g. piped into `head`).
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed_override {
        cfg.override_seed(seed);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(k) = cli.workers {
        if k == 0 {
            return Err(CliError::config("--workers must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start worker pool: {e}")))?;
    }
    let out = Layout::new(cfg.output.dir.clone());
    let input_or_out = |input: &Option<PathBuf>| Layout::new(input.clone().unwrap_or_else(|| cfg.output.dir.clone()));

    match &cli.command {
        Command::Generate => {
            let sys = build_system(&cfg)?;
            write_system(&out, &sys)?;
            write_manifest(&cfg, &out, None, sys.n_nodes())?;
        }
        Command::Simulate { csv } => {
            let sys = build_system(&cfg)?;
            write_system(&out, &sys)?;
            simulate_to_disk(&cfg, &sys, &out, *csv)?;
            write_manifest(&cfg, &out, None, sys.n_nodes())?;
        }
        Command::Estimate { input } => {
            let set = if cfg.reconstruction.mode.is_oracle() {
                oracle_cpsds(&cfg, &build_system(&cfg)?)?
            } else {
                estimate_from_disk(&cfg, &build_node(&cfg)?, &input_or_out(input))?
            };
            write_cpsds(&out, &set)?;
            out!("omega0 {}", set.omega0);
        }
        Command::Reconstruct { input } => {
            let set = read_cpsds(&input_or_out(input))?;
            let sys = build_system(&cfg)?;
            let priors = Priors {
                node: sys.node(),
                eigenpair: sys.connectivity().eigenpair(),
                known_input_psd: known_input_psd(&cfg, set.omega0),
            };
            let result = reconstruct(&cfg, &set, &priors)?;
            write_result(&out, &result)?;
        }
        Command::Evaluate { input } => {
            let input = input_or_out(input);
            let truth = if input.network().exists() {
                let text = std::fs::read_to_string(input.network()).map_err(|e| CliError::io("evaluate", &input.network(), e))?;
                netrecon::ConnectivityMatrix::from_text(&text).stage("evaluate")?
            } else {
                build_system(&cfg)?.connectivity().clone()
            };
            let (weights, boolean) = read_recovered(&input)?;
            let eval = evaluate(&cfg, &truth, weights.as_ref(), boolean.as_ref())?;
            write_evaluation(&out, &truth, &eval, &[])?;
            print_metrics(&eval.metrics);
        }
        Command::Run => {
            let summary = run_pipeline(&cfg, &out)?;
            out!("omega0 {}", summary.omega0);
            print_metrics(&summary.metrics);
        }
        Command::Bench { sweep } => {
            let points = if sweep.is_empty() {
                cfg.bench.sweep.clone()
            } else {
                sweep.iter().map(|s| parse_point(s)).collect::<Result<Vec<_>, _>>()?
            };
            let cost_model = match cli.cost_model {
                CostModelArg::Fft => CostModel::Fft,
                CostModelArg::Paper => CostModel::Paper,
            };
            let spectral = cfg.spectral_config()?;
            // Stages run many times; repeat warnings would drown the table.
            if std::env::var_os("RUST_LOG").is_none() {
                log::set_max_level(log::LevelFilter::Error);
            }
            let mut csv = format!("{}\n", BenchRow::CSV_HEADER);
            out!("{}", BenchRow::CSV_HEADER);
            for (n, len) in points {
                let row = if len == 0 {
                    bench_oracle(n, cfg.network.seed)
                } else {
                    bench_estimated(n, len, cost_model, &spectral, cfg.network.seed)
                }
                .stage("bench")?;
                out!("{}", row.to_csv());
                csv.push_str(&row.to_csv());
                csv.push('\n');
            }
            write_file("bench", &out.bench(), &csv)?;
        }
    }
    Ok(())
}

fn parse_point(s: &str) -> Result<(usize, usize), CliError> {
    let bad = || CliError::config(format!("bad sweep point {s:?}; expected N:L"));
    let (n, l) = s.trim().split_once(':').ok_or_else(bad)?;
    let n: usize = n.trim().parse().map_err(|_| bad())?;
    let l: usize = l.trim().parse().map_err(|_| bad())?;
    if n < 2 {
        return Err(CliError::config(format!("sweep point {s:?}: N must be at least 2")));
    }
    Ok((n, l))
}

fn print_metrics(m: &netrecon::graph::EdgeMetrics) {
    out!("f1 {} precision {} recall {}", m.f1, m.precision, m.recall);
    if let Some(max) = m.max_abs_error {
        out!("max_abs_error {max:e}");
    }
}
