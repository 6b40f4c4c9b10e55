use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use pumpshape::lab::{self, demos, ScenarioConfig};
use pumpshape::Error;

const OUT_DIR_ENV: &str = "PUMPSHAPE_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "out";

/// Pump-shaping simulator for entangled photons behind a thin diffuser.
#[derive(Debug, Parser)]
#[command(name = "pumpshape", version)]
struct Cli {
    /// Override the master seed of every scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory that receives one subdirectory per scenario.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,

    /// Number of scenarios run concurrently by `demo`.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    jobs: u16,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scenario described by a JSON config file.
    Run { config: PathBuf },
    /// Check a config file and print the resolved parameters.
    Validate { config: PathBuf },
    /// Run built-in scenarios (fig2, fig3-degenerate, fig3-nondegenerate or all).
    Demo {
        #[arg(required = true, value_parser = demo_name)]
        names: Vec<String>,
    },
    /// Compare the transform path against direct quadrature on a small grid.
    Oracle {
        #[arg(default_value_t = 32)]
        n: usize,
        /// Random signal positions per wavelength split.
        #[arg(long, default_value_t = 10)]
        points: usize,
    },
}

fn demo_name(s: &str) -> Result<String, String> {
    if s == "all" || demos::NAMES.contains(&s) {
        Ok(s.to_string())
    } else {
        Err(format!("expected one of all, {}", demos::NAMES.join(", ")))
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::load(path).map_err(|e| match e {
        Error::Io { .. } => Error::Config(e.to_string()),
        other => other,
    })
}

fn out_base(cli: &Cli, cfg: &ScenarioConfig) -> PathBuf {
    cli.out_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn apply_overrides(cli: &Cli, mut cfg: ScenarioConfig) -> ScenarioConfig {
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg
}

fn run_one(cli: &Cli, cfg: &ScenarioConfig) -> Result<String, Error> {
    let outcome = lab::run_scenario(cfg)?;
    let dir = out_base(cli, cfg).join(&cfg.name);
    lab::write_artifacts(&outcome, &dir)?;
    let m = &outcome.metrics;
    log::info!("{}: finished in {:.1} s", cfg.name, outcome.elapsed_seconds);
    Ok(format!(
        "{}: enhancement {:.2} (coincidences {:.2}), pearson {:.6}, scale ratio {:.4}, focus {:?} expected {:?} -> {}",
        cfg.name,
        m.enhancement_pump,
        m.enhancement_coinc,
        m.pearson_pump_vs_coinc,
        m.scale_ratio,
        m.coinc_argmax_steps,
        m.expected_focus_steps,
        dir.display()
    ))
}

fn execute(cli: &Cli) -> Result<(), Error> {
    match &cli.command {
        Command::Validate { config } => {
            let cfg = apply_overrides(cli, load_config(config)?);
            let resolved = cfg.resolve()?;
            println!(
                "{}",
                serde_json::to_string_pretty(&resolved).expect("resolved scenario serializes")
            );
            Ok(())
        }
        Command::Run { config } => {
            let cfg = apply_overrides(cli, load_config(config)?);
            println!("{}", run_one(cli, &cfg)?);
            Ok(())
        }
        Command::Demo { names } => {
            let mut configs: Vec<ScenarioConfig> = Vec::new();
            for name in names {
                let picked = if name == "all" {
                    demos::all()
                } else {
                    demos::by_name(name).into_iter().collect()
                };
                for cfg in picked {
                    if !configs.iter().any(|c| c.name == cfg.name) {
                        configs.push(apply_overrides(cli, cfg));
                    }
                }
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(cli.jobs as usize)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            let results: Vec<Result<String, Error>> =
                pool.install(|| configs.par_iter().map(|cfg| run_one(cli, cfg)).collect());
            let mut first_err = None;
            for r in results {
                match r {
                    Ok(line) => println!("{line}"),
                    Err(e) => {
                        log::error!("{e}");
                        first_err.get_or_insert(e);
                    }
                }
            }
            first_err.map_or(Ok(()), Err)
        }
        Command::Oracle { n, points } => {
            let report = lab::run_oracle(*n, *points, cli.seed.unwrap_or(0))?;
            for s in &report.splits {
                println!(
                    "lambda_s {:.1} nm / lambda_i {:.1} nm, q_i {:?}: max rel. err {:.3e}",
                    s.lambda_s * 1e9,
                    s.lambda_i * 1e9,
                    s.q_i_steps,
                    s.max_rel_err
                );
            }
            println!(
                "n = {}, {} points per split: max rel. err {:.3e}",
                report.n, report.points, report.max_rel_err
            );
            if report.max_rel_err < 1e-8 {
                Ok(())
            } else {
                Err(Error::Numerical(format!(
                    "transform path disagrees with quadrature by {:.3e}",
                    report.max_rel_err
                )))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}
