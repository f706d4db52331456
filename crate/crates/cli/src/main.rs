use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use zetalab_cli::config::RunConfig;
use zetalab_cli::{pipeline, verify, CliError};

/// Dynamical Fredholm determinants of hyperbolic torus maps: periodic
/// orbits, trace formulas, determinant zeros and spectral cross-checks.
#[derive(Parser)]
#[command(name = "zetalab", version, about)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override the cache directory (also via ZETALAB_CACHE).
    #[arg(long, global = true)]
    cache: Option<PathBuf>,

    /// Override the root-finder seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Permit n_max beyond 16.
    #[arg(long, global = true, default_value_t = false)]
    allow_large: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate, continue, validate and cache periodic-orbit sets.
    Orbits {
        /// Compute periods 1..N instead of 1..n_max.
        #[arg(long)]
        n: Option<u32>,
    },
    /// Weighted periodic-orbit trace sums tr_n.
    Traces,
    /// Determinant series, certified radius and stable zeros.
    Determinant,
    /// Fourier-Galerkin spectra with cross-cutoff convergence tracking.
    Galerkin {
        /// Single cutoff instead of the configured k_list.
        #[arg(long)]
        k: Option<i64>,
        /// Dump the (largest) Galerkin matrix to this path.
        #[arg(long)]
        dump_matrix: Option<PathBuf>,
    },
    /// Mollified delta-kernel trace ladders with extrapolation.
    Mollifier,
    /// Machine-readable verification verdicts.
    Verify {
        /// identities | lemma2 | crosscheck | all
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Consolidated report with plot-ready resonance scatter data.
    Report {
        /// csv | json
        #[arg(long, default_value = "json")]
        format: String,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(out) = &cli.out {
        cfg.output.out_dir = out.clone();
    }
    if let Some(cache) = &cli.cache {
        cfg.output.cache_dir = cache.clone();
    } else if let Ok(env_cache) = std::env::var("ZETALAB_CACHE") {
        if !env_cache.is_empty() {
            cfg.output.cache_dir = PathBuf::from(env_cache);
        }
    }
    if let Some(seed) = cli.seed {
        cfg.run.seed = seed;
    }
    cfg.validate(cli.allow_large)?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<bool, CliError> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Orbits { n } => {
            pipeline::cmd_orbits(&cfg, *n)?;
        }
        Command::Traces => {
            pipeline::cmd_traces(&cfg)?;
        }
        Command::Determinant => {
            pipeline::cmd_determinant(&cfg)?;
        }
        Command::Galerkin { k, dump_matrix } => {
            pipeline::cmd_galerkin(&cfg, *k, dump_matrix.as_deref())?;
        }
        Command::Mollifier => {
            pipeline::cmd_mollifier(&cfg)?;
        }
        Command::Verify { suite } => {
            let verdicts = verify::cmd_verify(&cfg, suite)?;
            return Ok(verdicts.iter().all(|v| v.pass));
        }
        Command::Report { format } => {
            pipeline::cmd_report(&cfg, format)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
