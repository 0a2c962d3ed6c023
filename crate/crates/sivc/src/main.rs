use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use sivc::config::{ClusterMode, ExperimentKind, ModelName, RunConfig};
use sivc::{cmd_cluster, cmd_experiment, cmd_fit, cmd_report, cmd_simulate, Outcome};

/// Exit status when some fits failed but a report was still produced.
const EXIT_PARTIAL: u8 = 2;

#[derive(Parser)]
#[command(
    name = "sivc",
    version,
    about = "Sparse inverse covariance estimation of group functional connectivity"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gmm,
    RoiAverage,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Gl,
    Fgl,
    Ggl,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentArg {
    GoldDriven,
    CrossValidation,
}

#[derive(Subcommand)]
enum Command {
    /// Pool all volumes, fit per-region mixtures and write per-cohort node averages.
    Cluster {
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        atlas: Option<PathBuf>,
    },
    /// Estimate precision matrices from per-cohort subject matrices.
    Fit {
        #[arg(long, value_enum)]
        model: Option<ModelArg>,
        #[arg(long)]
        lambda1: Option<f64>,
        #[arg(long)]
        lambda2: Option<f64>,
        /// Subject-matrix CSV, one per cohort (repeatable).
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        partial_correlations: bool,
    },
    /// Generate a synthetic gold standard and optionally sample cohorts from it.
    Simulate {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
        /// Subjects sampled per cohort; 0 writes only the gold standard.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the gold-driven or cross-validation evaluation protocol.
    Experiment {
        #[arg(long, value_enum)]
        experiment: Option<ExperimentArg>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Gold-standard directory containing gold.json.
        #[arg(long)]
        gold: Option<PathBuf>,
    },
    /// Re-summarize a finished experiment directory.
    Report {
        #[arg(long)]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if let Some(t) = cli.threads.or(cfg.threads) {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring worker threads")?;
    }
    let seed = cfg.seed();
    let out = cli
        .out
        .or(cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let outcome = match cli.command {
        Command::Cluster { mode, atlas } => {
            if let Some(m) = mode {
                cfg.cluster.mode = match m {
                    ModeArg::Gmm => ClusterMode::Gmm,
                    ModeArg::RoiAverage => ClusterMode::RoiAverage,
                };
            }
            if atlas.is_some() {
                cfg.cluster.atlas = atlas;
            }
            cmd_cluster(&cfg.cluster, seed, &out)?
        }
        Command::Fit {
            model,
            lambda1,
            lambda2,
            inputs,
            partial_correlations,
        } => {
            let fit = &mut cfg.fit;
            if let Some(m) = model {
                fit.model = match m {
                    ModelArg::Gl => ModelName::Gl,
                    ModelArg::Fgl => ModelName::Fgl,
                    ModelArg::Ggl => ModelName::Ggl,
                };
            }
            fit.lambda1 = lambda1.unwrap_or(fit.lambda1);
            fit.lambda2 = lambda2.unwrap_or(fit.lambda2);
            if !inputs.is_empty() {
                fit.inputs = inputs;
            }
            fit.partial_correlations |= partial_correlations;
            cmd_fit(fit, seed, &out)?
        }
        Command::Simulate { p, groups, n } => {
            let sim = &mut cfg.simulate;
            sim.spec.p = p.unwrap_or(sim.spec.p);
            sim.spec.groups = groups.unwrap_or(sim.spec.groups);
            sim.n = n.unwrap_or(sim.n);
            cmd_simulate(sim, seed, &out)?
        }
        Command::Experiment {
            experiment,
            sizes,
            replicates,
            gold,
        } => {
            let exp = &mut cfg.experiment;
            if let Some(k) = experiment {
                exp.kind = match k {
                    ExperimentArg::GoldDriven => ExperimentKind::GoldDriven,
                    ExperimentArg::CrossValidation => ExperimentKind::CrossValidation,
                };
            }
            if let Some(s) = sizes {
                exp.sizes = s;
            }
            exp.replicates = replicates.unwrap_or(exp.replicates);
            if gold.is_some() {
                exp.gold = gold;
            }
            cmd_experiment(exp, seed, &out)?
        }
        Command::Report { input } => cmd_report(&input, &out)?,
    };
    Ok(outcome)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIVC_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(outcome) => {
            // A closed stdout (e.g. piped into `head`) is not an error.
            let mut stdout = std::io::stdout().lock();
            let _ = writeln!(stdout, "{}", outcome.message);
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for a in &outcome.artifacts {
                let _ = writeln!(stdout, "wrote {}", a.display());
            }
            if outcome.is_complete() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} fits failed; see manifest.json", outcome.failures);
                ExitCode::from(EXIT_PARTIAL)
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
