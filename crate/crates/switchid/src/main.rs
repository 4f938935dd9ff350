//! Command-line interface: simulate trajectories, run identification,
//! check persistence of excitation, and replay from checkpoints.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use switchid_core::hybrid::Identifier;

use switchid::harness::{self, EvalSet, ExperimentConfig, SystemRef};
use switchid::simulate::{self, generate_trajectory};
use switchid::{Error, Result};

#[derive(Parser)]
#[command(name = "switchid", version, about = "Online switched-system identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SystemArgs {
    /// Built-in system preset (exp1 | exp2).
    #[arg(long, conflicts_with = "system")]
    preset: Option<String>,
    /// Path to a JSON system description.
    #[arg(long)]
    system: Option<PathBuf>,
}

impl SystemArgs {
    fn resolve(&self) -> Result<simulate::SwitchedSystemSpec> {
        match (&self.preset, &self.system) {
            (Some(name), None) => SystemRef::Preset(name.clone()).resolve(),
            (None, Some(path)) => {
                let text = fs::read_to_string(path)
                    .map_err(|source| Error::Io { path: path.clone(), source })?;
                let spec: simulate::SwitchedSystemSpec = serde_json::from_str(&text)
                    .map_err(|source| Error::Json { path: path.clone(), source })?;
                spec.validate()?;
                Ok(spec)
            }
            _ => Err(Error::Config("exactly one of --preset or --system is required".into())),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        system: SystemArgs,
        /// Number of samples.
        #[arg(long, default_value_t = 150)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the identifier on a recorded trajectory CSV.
    Identify {
        /// Trajectory CSV produced by `simulate`.
        #[arg(long)]
        input: PathBuf,
        /// JSON experiment config overriding the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preset whose identifier defaults to use (exp1 | exp2).
        #[arg(long, default_value = "exp1")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Full experiment: simulate, identify, evaluate, write artifacts.
    Run {
        #[command(flatten)]
        system: SystemArgs,
        /// JSON experiment config overriding the preset defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        /// Override the stream length.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Windowed persistence-of-excitation check on a trajectory CSV.
    PeCheck {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        window: usize,
    },
    /// Resume identification from a checkpoint on a trajectory CSV.
    Replay {
        /// Checkpoint JSON written by `run` or `identify`.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf) -> Result<ExperimentConfig> {
    let text =
        fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.clone(), source })
}

fn identify_stream(
    mut id: Identifier,
    traj: &simulate::Trajectory,
    out: &PathBuf,
) -> Result<()> {
    fs::create_dir_all(out).map_err(|source| Error::Io { path: out.clone(), source })?;
    let mut records = Vec::new();
    let mut source = traj
        .samples
        .iter()
        .cycle()
        .map(|s| (s.phi.clone(), s.psi.clone()));
    let levels = id.run_all_levels(&mut source, |rec| records.push(rec.clone()))?;
    let model = id.finalize()?;
    harness::write_sample_csv(&out.join("samples.csv"), &records)?;
    let ck = out.join("checkpoint.json");
    fs::write(
        &ck,
        serde_json::to_string_pretty(&id)
            .map_err(|source| Error::Json { path: ck.clone(), source })?,
    )
    .map_err(|source| Error::Io { path: ck.clone(), source })?;
    let model_path = out.join("model.json");
    fs::write(
        &model_path,
        serde_json::to_string_pretty(&model)
            .map_err(|source| Error::Json { path: model_path.clone(), source })?,
    )
    .map_err(|source| Error::Io { path: model_path.clone(), source })?;
    println!(
        "identified {} modes over {} cells in {} levels",
        model.num_modes(),
        model.num_cells(),
        levels.len()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { system, n, seed, out } => {
            let spec = system.resolve()?;
            let traj = generate_trajectory(&spec, n, seed, None)?;
            harness::write_trajectory_csv(&out, &traj)?;
            println!("wrote {} samples to {}", traj.samples.len(), out.display());
            Ok(())
        }
        Command::Identify { input, config, preset, seed, out } => {
            let cfg = match config {
                Some(path) => load_config(&path)?,
                None => ExperimentConfig::preset(&preset, seed, out.clone())?,
            };
            cfg.identifier.validate().map_err(Error::Core)?;
            let traj = harness::read_trajectory_csv(&input)?;
            if traj.samples.is_empty() {
                return Err(Error::InvalidInput("trajectory has no samples".into()));
            }
            let id = Identifier::new(switchid_core::IdentifierConfig {
                seed,
                ..cfg.identifier
            })?;
            identify_stream(id, &traj, &out)
        }
        Command::Run { system, config, seed, out, repeats, n } => {
            let mut cfg = match (&config, &system.preset) {
                (Some(path), _) => load_config(path)?,
                (None, Some(name)) => ExperimentConfig::preset(name, seed, out.clone())?,
                (None, None) => {
                    let spec = system.resolve()?;
                    ExperimentConfig {
                        system: SystemRef::Inline(spec),
                        identifier: switchid_core::IdentifierConfig { seed, ..Default::default() },
                        n: 150,
                        repeats: 1,
                        seed,
                        output_dir: out.clone(),
                        eval: EvalSet::FreshTrajectory { n: 300 },
                    }
                }
            };
            cfg.seed = seed;
            cfg.output_dir = out;
            cfg.repeats = repeats;
            if let Some(n) = n {
                cfg.n = n;
            }
            let report = harness::run_experiment(&cfg)?;
            for r in &report.runs {
                println!(
                    "seed {}: s_hat={} K={} misclassification={:.4} rmse_hard={:.4} ({:.2}s)",
                    r.seed, r.s_hat, r.k_final, r.misclassification, r.rmse_hard, r.wall_secs
                );
            }
            Ok(())
        }
        Command::PeCheck { input, window } => {
            let traj = harness::read_trajectory_csv(&input)?;
            let (alpha_min, beta_max) = simulate::pe_check(&traj, window)?;
            let holds = alpha_min > 0.0 && beta_max.is_finite();
            println!(
                "alpha_min={alpha_min:.6e} beta_max={beta_max:.6e} persistently_exciting={holds}"
            );
            Ok(())
        }
        Command::Replay { checkpoint, input, out } => {
            let text = fs::read_to_string(&checkpoint)
                .map_err(|source| Error::Io { path: checkpoint.clone(), source })?;
            let id: Identifier = serde_json::from_str(&text)
                .map_err(|source| Error::Json { path: checkpoint.clone(), source })?;
            let traj = harness::read_trajectory_csv(&input)?;
            if traj.samples.is_empty() {
                return Err(Error::InvalidInput("trajectory has no samples".into()));
            }
            identify_stream(id, &traj, &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
