mod args;
mod commands;
mod config;
mod manifest;

use std::path::Path;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command};
use commands::{Artifacts, Diverged, MANIFEST_FILE};
use config::RunConfig;
use manifest::{hash_inputs, Manifest};

const THREADS_ENV: &str = "SSGL_IMC_THREADS";

fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().with_context(|| format!("{THREADS_ENV}={raw} is not a thread count"))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    Ok(())
}

fn seed_of(cfg: &RunConfig, command: &Command) -> u64 {
    match command {
        Command::Simulate(_) => cfg.simulation.seed,
        Command::Fit(_) | Command::Predict(_) => cfg.hyper.seed,
        _ => cfg.plan.seed,
    }
}

fn run(cli: &Cli) -> Result<()> {
    init_threads()?;
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    cli.command.apply(&mut cfg)?;
    cfg.plan.init = cfg.init;
    cfg.hyper.validate()?;

    let out = cli.out_dir.as_path();
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut art = Artifacts::default();
    let result = match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, out, &mut art),
        Command::Fit(_) => commands::fit(&cfg, out, &mut art),
        Command::Predict(a) => commands::predict(&cfg, &a.model, a.output.as_deref(), out, &mut art),
        Command::Evaluate(a) => commands::evaluate(&cfg, a.model.as_deref(), out, &mut art),
        Command::GridSearch(_) => commands::grid(&cfg, out, &mut art),
        Command::XiSweep(_) => commands::xi(&cfg, out, &mut art),
    };
    write_manifest(out, cli.command.name(), seed_of(&cfg, &cli.command), &cfg, art)?;
    result
}

fn write_manifest(out: &Path, command: &str, seed: u64, cfg: &RunConfig, art: Artifacts) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed,
        scalar: "f64",
        config: cfg,
        inputs: hash_inputs(&art.inputs)?,
        outputs: art.outputs,
    };
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(out.join(MANIFEST_FILE), text + "\n")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<Diverged>().is_some() {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
