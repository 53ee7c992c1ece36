use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use priorgan_cli::commands::{self, GanOverrides};
use priorgan_cli::RunConfig;
use priorgan_core::simi_gan::LossToggles;

/// Clustering with a learned categorical prior and a generator / critic /
/// encoder game.
#[derive(Parser)]
#[command(name = "priorgan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Learn the categorical prior from unlabeled training data.
    TrainPrior(ConfigArg),
    /// Train generator, critic and encoder against the prior.
    TrainGan {
        #[command(flatten)]
        config: ConfigArg,
        /// Prior parameter file (default: prior.params in the output directory).
        #[arg(long, conflicts_with = "uniform_prior")]
        prior: Option<PathBuf>,
        /// Draw classes uniformly instead of from a learned prior.
        #[arg(long)]
        uniform_prior: bool,
        /// Active auxiliary losses: comma-separated subset of ce,mse,rec,pce,cm,
        /// or `all` / `none`.
        #[arg(long, value_parser = parse_losses)]
        losses: Option<LossToggles>,
    },
    /// Cluster the encoded test split and export a 2-D projection.
    Evaluate {
        #[command(flatten)]
        config: ConfigArg,
        /// Encoder parameter file (default: encoder.params in the output directory).
        #[arg(long)]
        encoder: Option<PathBuf>,
    },
    /// Sample the generator class by class.
    Generate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        generator: Option<PathBuf>,
        /// Samples per class.
        #[arg(long, default_value_t = 10)]
        per_class: usize,
        /// Restrict to these classes (repeatable).
        #[arg(long = "class")]
        classes: Vec<usize>,
        /// Instead of per-class batches, sweep from class B to class A in STEPS frames.
        #[arg(long, num_args = 3, value_names = ["A", "B", "STEPS"])]
        interpolate: Option<Vec<usize>>,
    },
    /// Sweep the categorical code from class B to class A at fixed noise.
    Interpolate {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        generator: Option<PathBuf>,
        a: usize,
        b: usize,
        steps: usize,
        /// Samples per frame.
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
}

fn parse_losses(s: &str) -> Result<LossToggles, String> {
    let mut t = LossToggles::none();
    for name in s.split(',').map(str::trim) {
        match name {
            "all" => t = LossToggles::default(),
            "none" => {}
            "ce" => t.ce = true,
            "mse" => t.mse = true,
            "rec" => t.rec = true,
            "pce" => t.pce = true,
            "cm" => t.cm = true,
            other => {
                return Err(format!(
                    "unknown loss `{other}`; expected ce, mse, rec, pce, cm, all or none"
                ))
            }
        }
    }
    Ok(t)
}

fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    match cli.command {
        Command::TrainPrior(c) => commands::train_prior(&RunConfig::load(&c.config)?),
        Command::TrainGan {
            config,
            prior,
            uniform_prior,
            losses,
        } => {
            let mut c = RunConfig::load(&config.config)?;
            GanOverrides {
                prior: prior.map(std::path::absolute).transpose()?,
                uniform_prior,
                losses,
            }
            .apply(&mut c);
            commands::train_gan(&c)
        }
        Command::Evaluate { config, encoder } => {
            commands::evaluate(&RunConfig::load(&config.config)?, encoder.as_deref())
        }
        Command::Generate {
            config,
            generator,
            per_class,
            classes,
            interpolate,
        } => {
            let c = RunConfig::load(&config.config)?;
            match interpolate.as_deref() {
                Some(&[a, b, steps]) => commands::interpolate(&c, generator.as_deref(), a, b, steps, per_class),
                Some(_) => bail!("--interpolate takes A B STEPS"),
                None => commands::generate(&c, generator.as_deref(), per_class, &classes),
            }
        }
        Command::Interpolate {
            config,
            generator,
            a,
            b,
            steps,
            samples,
        } => commands::interpolate(
            &RunConfig::load(&config.config)?,
            generator.as_deref(),
            a,
            b,
            steps,
            samples,
        ),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            for p in written {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
