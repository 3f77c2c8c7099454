//! `grasp` — shield images against a differentiable manipulation model and
//! evaluate the result.
//!
//! Exit codes: 0 ok, 1 partial failure, 2 config error, 3 protocol error.
//! Log verbosity comes from the GRASP_LOG environment variable.

mod commands;
mod config;
mod io;
mod report;

use clap::{Args, Parser, Subcommand};
use commands::exit_code_for;
use config::{apply_config, parse_config_file, ModelSpec, Settings};
use grasp_core::Result;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "grasp", version, about = "Adversarial shielding engine and evaluation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Flat key-value config file (dotted keys); CLI flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Built-in model: identity | affine | conv.
    #[arg(long)]
    model: Option<String>,

    /// Remote model endpoint: HOST:PORT, tcp://HOST:PORT, or "exec:CMD ARGS".
    #[arg(long, conflicts_with = "model")]
    bridge: Option<String>,

    /// Seed for seeded builtin models.
    #[arg(long)]
    seed: Option<u64>,

    /// Perturbation budget (l-infinity).
    #[arg(long)]
    epsilon: Option<f64>,

    /// Iteration count.
    #[arg(long)]
    iters: Option<usize>,

    /// Step scale.
    #[arg(long)]
    kappa: Option<f64>,

    /// Worker pool size for per-image parallelism.
    #[arg(long)]
    jobs: Option<usize>,

    /// Output directory for artifacts.
    #[arg(long, default_value = "grasp-out")]
    out: PathBuf,
}

impl CommonArgs {
    fn resolve(&self) -> Result<Settings> {
        let mut settings = Settings::default();
        if let Some(path) = &self.config {
            let map = parse_config_file(path)?;
            apply_config(&mut settings, &map)?;
        }
        if let Some(endpoint) = &self.bridge {
            settings.model = ModelSpec::Bridge { endpoint: endpoint.clone() };
        } else if let Some(name) = &self.model {
            let seed = match &settings.model {
                ModelSpec::Builtin { seed, .. } => *seed,
                _ => 42,
            };
            settings.model = ModelSpec::Builtin {
                name: name.clone(),
                seed,
                gain: 1.0,
                bias: 0.0,
            };
        }
        if let Some(seed) = self.seed {
            if let ModelSpec::Builtin { seed: s, .. } = &mut settings.model {
                *s = seed;
            }
        }
        if let Some(epsilon) = self.epsilon {
            settings.defense.epsilon = epsilon;
        }
        if let Some(iters) = self.iters {
            settings.defense.iterations = iters;
        }
        if let Some(kappa) = self.kappa {
            settings.defense.kappa = kappa;
        }
        if let Some(jobs) = self.jobs {
            settings.jobs = jobs.max(1);
        }
        settings.defense.validate()?;
        Ok(settings)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Embed adversarial shields into images and report metrics.
    Defend {
        #[command(flatten)]
        common: CommonArgs,
        /// Drop the structural-similarity term.
        #[arg(long)]
        no_ssim: bool,
        /// Drop the low-frequency term.
        #[arg(long)]
        no_lf: bool,
        /// Sum oriented gradients directly instead of projecting conflicts.
        #[arg(long)]
        no_projection: bool,
        /// Input PNG images.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Compute metrics for existing (original, adversarial) pairs.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory of adversarial counterparts (matched by file stem).
        #[arg(long)]
        adv: PathBuf,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run the blur/rotation battery on existing pairs.
    Robustness {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        adv: PathBuf,
        /// Gaussian blur kernel sizes.
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
        gaussian_blur: Vec<usize>,
        /// Average blur kernel sizes.
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7")]
        average_blur: Vec<usize>,
        /// Rotation angles in degrees.
        #[arg(long, value_delimiter = ',', default_value = "45,90,135,180")]
        rotate: Vec<f64>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Run the four-row component study on one image set.
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Re-run the defense while varying one hyperparameter.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// One of eta1 | eta2 | eta3 | kappa | epsilon | iters.
        #[arg(long)]
        axis: String,
        /// Comma-separated values for the axis.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Check analytic gradients against finite differences.
    Gradcheck {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of random seeds to test.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        /// Image side length (even, >= 6).
        #[arg(long, default_value_t = 8)]
        size: usize,
    },
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Defend { common, no_ssim, no_lf, no_projection, inputs } => {
            let mut settings = common.resolve()?;
            settings.defense.losses.ssim &= !no_ssim;
            settings.defense.losses.lf &= !no_lf;
            settings.defense.use_projection &= !no_projection;
            commands::defend::run(&settings, &inputs, &common.out)
        }
        Command::Evaluate { common, adv, inputs } => {
            let settings = common.resolve()?;
            commands::evaluate::run(&settings, &inputs, &adv, &common.out)
        }
        Command::Robustness { common, adv, gaussian_blur, average_blur, rotate, inputs } => {
            let settings = common.resolve()?;
            let battery = commands::robustness::Battery {
                gaussian_kernels: gaussian_blur,
                average_kernels: average_blur,
                rotations: rotate,
            };
            commands::robustness::run(&settings, &inputs, &adv, &battery, &common.out)
        }
        Command::Ablate { common, inputs } => {
            let settings = common.resolve()?;
            commands::ablate::run(&settings, &inputs, &common.out)
        }
        Command::Sweep { common, axis, values, inputs } => {
            let settings = common.resolve()?;
            commands::sweep::run(&settings, &inputs, &axis, &values, &common.out)
        }
        Command::Gradcheck { common, seeds, size } => {
            let settings = common.resolve()?;
            commands::gradcheck::run(&settings, seeds, size, &common.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("GRASP_LOG")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(error) => {
            eprintln!("error: {error}");
            ExitCode::from(exit_code_for(&error))
        }
    }
}
