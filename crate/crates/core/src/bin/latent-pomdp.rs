//! Command-line front end; every subcommand is a thin wrapper over the library.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use latent_pomdp::env::ObsMode;
use latent_pomdp::error::{Error, Result};
use latent_pomdp::format;
use latent_pomdp::harness::{self, Config};
use latent_pomdp::inference::StrategyKind;
use latent_pomdp::latent_model::Model;
use latent_pomdp::rcpi::{self, Learner, Policy};
use latent_pomdp::seed::{self, stream};
use latent_pomdp::trainer;

#[derive(Parser)]
#[command(version, about = "Latent state representations for partially observable mountain car")]
struct Cli {
    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for outputs whose path is not given explicitly.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// `key = value` file applied over the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Inference strategy.
    #[arg(long, global = true, default_value = "fobs")]
    strategy: StrategyKind,
    /// Latent size; overrides `latent_dim` from the config.
    #[arg(long, global = true)]
    latent_dim: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect random-action trajectories.
    Collect {
        /// FO (position and speed) or PO (position only).
        #[arg(long, default_value = "PO")]
        mode: ObsMode,
        /// Number of trajectories; overrides `trajectories` from the config.
        #[arg(long)]
        trajectories: Option<usize>,
        /// Dataset file [default: <out-dir>/data_<mode>.txt].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Hidden-state sidecar [default: <out>.states].
        #[arg(long)]
        states_out: Option<PathBuf>,
    },
    /// Fit a latent model to a dataset.
    TrainRepr {
        #[arg(long)]
        data: PathBuf,
        /// Model file [default: <out-dir>/model.txt].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the fitted training latents here.
        #[arg(long)]
        latents_out: Option<PathBuf>,
    },
    /// Learn a policy with rollout classification policy iteration.
    TrainPolicy {
        /// Latent model; required by flat, fdyn and fpar.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Observation mode of the environment.
        #[arg(long, default_value = "PO")]
        mode: ObsMode,
        /// Policy file [default: <out-dir>/policy.txt].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Success rate of a stored policy on fresh episodes.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value = "PO")]
        mode: ObsMode,
        #[arg(long, default_value_t = 1000)]
        episodes: usize,
    },
    /// Write `episode,step,z1,z2,x_true,v_true` rows for a 2-dimensional model.
    ExportLatent {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Hidden-state sidecar [default: <data>.states].
        #[arg(long)]
        states: Option<PathBuf>,
        /// CSV file [default: <out-dir>/latent.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the whole result matrix and print the table.
    ReproduceTable {
        /// Seeded runs per row; overrides `runs` from the config.
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Reproduce the table and the latent export into a fresh run directory.
    RunAll,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn states_path(data: &Path) -> PathBuf {
    let mut s = data.as_os_str().to_owned();
    s.push(".states");
    PathBuf::from(s)
}

fn read_model_for(path: Option<&Path>, kind: StrategyKind, mode: ObsMode, latent_dim: Option<usize>) -> Result<Option<Model>> {
    if !kind.needs_model() {
        return Ok(None);
    }
    let path = path.ok_or_else(|| Error::Config(format!("strategy {kind} needs --model")))?;
    let model = format::read_model(path)?;
    if model.obs_dim() != mode.dim() {
        return Err(Error::Shape(format!(
            "model decodes {}-dimensional observations but {mode} observations have {}",
            model.obs_dim(),
            mode.dim()
        )));
    }
    if let Some(n) = latent_dim.filter(|&n| n != model.latent_dim()) {
        return Err(Error::Shape(format!("--latent-dim {n} but the model has {}", model.latent_dim())));
    }
    Ok(Some(model))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(n) = cli.latent_dim {
        cfg.train.n = n;
        cfg.validate()?;
    }
    let out_or = |p: Option<PathBuf>, name: &str| p.unwrap_or_else(|| cli.out_dir.join(name));
    let progress = |line: &str| eprintln!("{line}");

    match cli.command {
        Command::Collect {
            mode,
            trajectories,
            out,
            states_out,
        } => {
            if let Some(q) = trajectories {
                cfg.trajectories = q;
                cfg.validate()?;
            }
            let episodes = harness::collect(&cfg, mode, cli.seed)?;
            let out = out_or(out, &format!("data_{}.txt", mode.to_string().to_lowercase()));
            let states_out = states_out.unwrap_or_else(|| states_path(&out));
            format::write_dataset(&out, &harness::to_dataset(mode, cfg.t_max, &episodes))?;
            let states: Vec<_> = episodes.iter().map(|e| e.rollout.states.clone()).collect();
            format::write_file(&states_out, &format::states_to_string(&states))?;
            let wins = episodes.iter().filter(|e| e.rollout.success()).count();
            println!("{} trajectories ({wins} successful) -> {}", episodes.len(), out.display());
        }
        Command::TrainRepr { data, out, latents_out } => {
            let dataset = format::read_dataset(&data)?;
            let fit = harness::train_model(&cfg, &dataset, cfg.train.n, cli.seed)?;
            let out = out_or(out, "model.txt");
            format::write_model(&out, &fit.model)?;
            if let Some(p) = latents_out {
                format::write_file(&p, &format::latents_to_string(&fit.latents))?;
            }
            println!("{}", trainer::train_report(&fit.loss_curve)?);
            println!("model -> {}", out.display());
        }
        Command::TrainPolicy { model, mode, out } => {
            let model = read_model_for(model.as_deref(), cli.strategy, mode, cli.latent_dim)?;
            let learner = Learner {
                mode,
                strategy: cfg.strategy(cli.strategy),
                model: model.as_ref(),
            };
            let run = rcpi::rcpi_train(&learner, &cfg.rcpi, seed::derive(cli.seed, stream::RCPI))?;
            for (i, v) in run.curve.iter().enumerate() {
                println!("iteration {}: validation success {v:.3}", i + 1);
            }
            let out = out_or(out, "policy.txt");
            format::write_policy(&out, &run.policy)?;
            println!("policy of iteration {} -> {}", run.chosen + 1, out.display());
        }
        Command::Evaluate {
            policy,
            model,
            mode,
            episodes,
        } => {
            let model = read_model_for(model.as_deref(), cli.strategy, mode, cli.latent_dim)?;
            let learner = Learner {
                mode,
                strategy: cfg.strategy(cli.strategy),
                model: model.as_ref(),
            };
            let policy = format::read_policy(&policy)?;
            if policy.n_features() != learner.repr_dim() + 1 {
                return Err(Error::Shape(format!(
                    "policy reads {} features but {} under {mode} gives {}",
                    policy.n_features() - 1,
                    cli.strategy,
                    learner.repr_dim()
                )));
            }
            let rate = rcpi::evaluate(
                &Policy::Linear(policy),
                &learner,
                episodes,
                cfg.t_max,
                seed::derive(cli.seed, stream::EVAL),
            )?;
            println!("success rate: {rate:.4} over {episodes} episodes");
        }
        Command::ExportLatent { model, data, states, out } => {
            let model = format::read_model(&model)?;
            let dataset = format::read_dataset(&data)?;
            let states_file = states.unwrap_or_else(|| states_path(&data));
            let states = format::parse_states(&format::read_file(&states_file)?, &states_file)?;
            let csv = harness::export_latent(
                &model,
                &dataset,
                &states,
                cfg.strategy(StrategyKind::FLat),
                seed::derive(cli.seed, stream::EXPORT),
            )?;
            let out = out_or(out, "latent.csv");
            format::write_file(&out, &csv)?;
            println!("latents -> {}", out.display());
        }
        Command::ReproduceTable { runs } => {
            if let Some(r) = runs {
                cfg.runs = r;
            }
            let rows = harness::reproduce_table(&cfg, &harness::table_rows(&cfg.latent_dims), cli.seed, progress)?;
            print!("{}", harness::format_table(&rows));
            std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::Io {
                path: cli.out_dir.clone(),
                source: e,
            })?;
            let csv = cli.out_dir.join(harness::TABLE_FILE);
            format::write_file(&csv, &harness::format_csv(&rows, cfg.runs))?;
            println!("table -> {}", csv.display());
        }
        Command::RunAll => {
            let result = harness::run_all(&cfg, cli.seed, &cli.out_dir, progress)?;
            print!("{}", harness::format_table(&result.rows));
            let s = result.separation;
            println!(
                "speed from n=2 latents: R^2 {:.3} (position-only baseline {:.3})",
                s.latent_r2, s.position_r2
            );
            println!("results -> {}", result.dir.display());
            if !result.all_ok() {
                return Err(Error::Config("some rows failed; see the table".into()));
            }
        }
    }
    Ok(())
}
