//! Experiment orchestration: configuration, the result matrix, latent export
//! for plotting and the `run-all` driver.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::env::{collect_random, CarState, Episode, ObsMode, Observation, DEFAULT_T_MAX};
use crate::error::{Error, Result};
use crate::format::{self, Dataset, KeyValues, StoredEpisode};
use crate::inference::{History, InferenceStrategy, StrategyKind};
use crate::latent_model::Model;
use crate::rcpi::{self, Learner, Policy, RolloutConfig};
use crate::seed::{self, stream};
use crate::trainer::{self, TrainConfig};

/// Every tunable of the pipeline, loadable from a `key = value` file.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    /// Random trajectories collected to train each representation.
    pub trajectories: usize,
    /// Episode length cap for collection and evaluation.
    pub t_max: usize,
    pub train: TrainConfig,
    /// Inference settings; the strategy kind itself is chosen per experiment.
    pub inference: InferenceStrategy,
    pub rcpi: RolloutConfig,
    /// Seeded repetitions per table row.
    pub runs: usize,
    /// Latent sizes of the model-based rows.
    pub latent_dims: Vec<usize>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            trajectories: 200,
            t_max: DEFAULT_T_MAX,
            train: TrainConfig::default(),
            inference: InferenceStrategy::new(StrategyKind::FObs),
            rcpi: RolloutConfig::default(),
            runs: 5,
            latent_dims: vec![2, 3, 5],
        }
    }
}

fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims = s
        .split(',')
        .map(|d| d.trim().parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::Config(format!("latent_dims must be a comma-separated list of sizes, found `{s}`")))?;
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Config("latent sizes must be positive".into()));
    }
    Ok(dims)
}

/// Comma-separated list of latent sizes, as written in config files.
#[derive(Clone, Debug, PartialEq)]
struct Dims(Vec<usize>);

impl std::str::FromStr for Dims {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_dims(s).map(Dims)
    }
}

impl Config {
    /// Overrides the defaults with the keys present in `text`; any key not
    /// listed in [`Config::to_text`] is an error.
    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut kv = KeyValues::parse(text, path)?;
        let mut c = Config::default();
        kv.take_into("trajectories", &mut c.trajectories)?;
        kv.take_into("t_max", &mut c.t_max)?;

        let t = &mut c.train;
        kv.take_into("latent_dim", &mut t.n)?;
        kv.take_into("epochs", &mut t.epochs)?;
        kv.take_into("smooth_epochs", &mut t.smooth_epochs)?;
        kv.take_into("step_size_params", &mut t.step_size_params)?;
        kv.take_into("step_size_latents", &mut t.step_size_latents)?;
        kv.take_into("lambda", &mut t.lambda)?;
        kv.take_into("init_scale", &mut t.init_scale)?;
        kv.take_into("train_seed", &mut t.seed)?;
        kv.take_into("delta", &mut t.delta)?;
        kv.take_into("optimizer", &mut t.optimizer)?;

        let i = &mut c.inference;
        kv.take_into("mix_probability", &mut i.mix_probability)?;
        kv.take_into("refine_steps", &mut i.exact.refine_steps)?;
        kv.take_into("refine_step_size", &mut i.exact.step_size)?;
        kv.take_into("refine_window", &mut i.exact.window)?;
        kv.take_into("warmup_init_scale", &mut i.exact.init_scale)?;
        kv.take_into("warmup_refine_steps", &mut i.exact.initial_steps)?;

        let r = &mut c.rcpi;
        kv.take_into("states_per_iter", &mut r.states_per_iter)?;
        kv.take_into("rollouts_per_state_action", &mut r.rollouts_per_state_action)?;
        kv.take_into("iterations", &mut r.iterations)?;
        kv.take_into("horizon", &mut r.horizon)?;
        kv.take_into("rollout_space", &mut r.rollout_space)?;
        kv.take_into("discount", &mut r.discount)?;
        kv.take_into("weight_by_gap", &mut r.weight_by_gap)?;
        kv.take_into("eval_episodes", &mut r.eval_episodes)?;
        kv.take_into("max_start_offset", &mut r.max_start_offset)?;
        kv.take_into("select_best", &mut r.select_best)?;
        kv.take_into("sample_memory", &mut r.sample_memory)?;
        kv.take_into("classifier_epochs", &mut r.classifier.epochs)?;
        kv.take_into("classifier_step_size", &mut r.classifier.step_size)?;
        kv.take_into("classifier_margin", &mut r.classifier.margin)?;

        kv.take_into("runs", &mut c.runs)?;
        if let Some(Dims(d)) = kv.take("latent_dims")? {
            c.latent_dims = d;
        }
        kv.finish()?;
        c.validate()?;
        Ok(c)
    }

    /// Defaults, or the file at `path` applied over them.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Config::default()),
            Some(p) => Config::from_text(&format::read_file(p)?, p),
        }
    }

    /// Every key with its current value; parses back to `self`.
    pub fn to_text(&self) -> String {
        let t = &self.train;
        let i = &self.inference;
        let r = &self.rcpi;
        let dims: Vec<String> = self.latent_dims.iter().map(usize::to_string).collect();
        let lines: Vec<(&str, String)> = vec![
            ("trajectories", self.trajectories.to_string()),
            ("t_max", self.t_max.to_string()),
            ("latent_dim", t.n.to_string()),
            ("epochs", t.epochs.to_string()),
            ("smooth_epochs", t.smooth_epochs.to_string()),
            ("step_size_params", t.step_size_params.to_string()),
            ("step_size_latents", t.step_size_latents.to_string()),
            ("lambda", t.lambda.to_string()),
            ("init_scale", t.init_scale.to_string()),
            ("train_seed", t.seed.to_string()),
            ("delta", t.delta.to_string()),
            ("optimizer", t.optimizer.to_string()),
            ("mix_probability", i.mix_probability.to_string()),
            ("refine_steps", i.exact.refine_steps.to_string()),
            ("refine_step_size", i.exact.step_size.to_string()),
            ("refine_window", i.exact.window.to_string()),
            ("warmup_init_scale", i.exact.init_scale.to_string()),
            ("warmup_refine_steps", i.exact.initial_steps.to_string()),
            ("states_per_iter", r.states_per_iter.to_string()),
            ("rollouts_per_state_action", r.rollouts_per_state_action.to_string()),
            ("iterations", r.iterations.to_string()),
            ("horizon", r.horizon.to_string()),
            ("rollout_space", r.rollout_space.to_string()),
            ("discount", r.discount.to_string()),
            ("weight_by_gap", r.weight_by_gap.to_string()),
            ("eval_episodes", r.eval_episodes.to_string()),
            ("max_start_offset", r.max_start_offset.to_string()),
            ("select_best", r.select_best.to_string()),
            ("sample_memory", r.sample_memory.to_string()),
            ("classifier_epochs", r.classifier.epochs.to_string()),
            ("classifier_step_size", r.classifier.step_size.to_string()),
            ("classifier_margin", r.classifier.margin.to_string()),
            ("runs", self.runs.to_string()),
            ("latent_dims", dims.join(",")),
        ];
        let mut out = String::new();
        for (k, v) in lines {
            writeln!(out, "{k} = {v}").expect("infallible");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories == 0 || self.t_max == 0 || self.runs == 0 {
            return Err(Error::Config("trajectories, t_max and runs must be positive".into()));
        }
        self.train.validate()?;
        self.inference.validate()?;
        self.rcpi.validate()
    }

    /// Training configuration for latent size `n` and the given seed.
    pub fn train_for(&self, n: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            n,
            seed,
            ..self.train.clone()
        }
    }

    pub fn strategy(&self, kind: StrategyKind) -> InferenceStrategy {
        InferenceStrategy { kind, ..self.inference }
    }
}

/// One row of the reproduction matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExperimentSpec {
    pub mode: ObsMode,
    pub kind: StrategyKind,
    /// Latent size; `None` for observation-based rows.
    pub dim: Option<usize>,
}

/// Result rows: the two observation baselines, then FLat, FDyn and FPar at
/// every latent size.
pub fn table_rows(dims: &[usize]) -> Vec<ExperimentSpec> {
    let mut rows = vec![
        ExperimentSpec {
            mode: ObsMode::Full,
            kind: StrategyKind::FObs,
            dim: None,
        },
        ExperimentSpec {
            mode: ObsMode::Partial,
            kind: StrategyKind::FObs,
            dim: None,
        },
    ];
    for kind in [StrategyKind::FLat, StrategyKind::FDyn, StrategyKind::FPar] {
        for &n in dims {
            rows.push(ExperimentSpec {
                mode: ObsMode::Partial,
                kind,
                dim: Some(n),
            });
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub spec: ExperimentSpec,
    /// Final success rate of each seeded run.
    pub per_run: Vec<f64>,
    /// Set when any run of the row aborted.
    pub failure: Option<String>,
}

impl ResultRow {
    pub fn mean(&self) -> Option<f64> {
        if self.failure.is_some() || self.per_run.is_empty() {
            return None;
        }
        Some(self.per_run.iter().sum::<f64>() / self.per_run.len() as f64)
    }
}

/// Seed of run `r` under a master seed.
pub fn run_seed(master: u64, run: usize) -> u64 {
    seed::derive(master, run as u64)
}

/// Random PO or FO dataset of one run, with hidden states kept alongside.
pub fn collect(cfg: &Config, mode: ObsMode, seed: u64) -> Result<Vec<Episode>> {
    collect_random(cfg.trajectories, mode, cfg.t_max, &mut seed::rng(seed::derive(seed, stream::COLLECT)))
}

pub fn to_dataset(mode: ObsMode, t_max: usize, episodes: &[Episode]) -> Dataset {
    Dataset {
        mode,
        t_max,
        episodes: episodes
            .iter()
            .map(|e| StoredEpisode {
                trajectory: e.rollout.trajectory.clone(),
                warmup: e.start.warmup.clone(),
            })
            .collect(),
    }
}

/// Trains the representation of one run.
pub fn train_model(cfg: &Config, data: &Dataset, n: usize, seed: u64) -> Result<trainer::Fit> {
    let tc = cfg.train_for(n, seed::derive(seed, stream::TRAIN));
    trainer::fit(&data.trajectories(), &tc)
}

/// Learns a policy with RCPI and scores it on fresh episodes.
pub fn policy_success(cfg: &Config, mode: ObsMode, kind: StrategyKind, model: Option<&Model>, seed: u64) -> Result<f64> {
    let learner = Learner {
        mode,
        strategy: cfg.strategy(kind),
        model: if kind.needs_model() { model } else { None },
    };
    if kind.needs_model() && model.is_none() {
        return Err(Error::Config(format!("strategy {kind} needs a trained model")));
    }
    let run = rcpi::rcpi_train(&learner, &cfg.rcpi, seed::derive(seed, stream::RCPI))?;
    rcpi::evaluate(
        &Policy::Linear(run.policy),
        &learner,
        cfg.rcpi.eval_episodes,
        cfg.t_max,
        seed::derive(seed, stream::EVAL),
    )
}

/// Runs every row over `cfg.runs` seeded runs. Models are trained once per
/// (run, latent size) and shared by the FLat, FDyn and FPar rows. `progress`
/// receives one line per finished (row, run).
pub fn reproduce_table(
    cfg: &Config,
    rows: &[ExperimentSpec],
    master_seed: u64,
    mut progress: impl FnMut(&str),
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let mut results: Vec<ResultRow> = rows
        .iter()
        .map(|&spec| ResultRow {
            spec,
            per_run: Vec::new(),
            failure: None,
        })
        .collect();
    for run in 0..cfg.runs {
        let s = run_seed(master_seed, run);
        let mut models: Vec<(usize, std::result::Result<Model, String>)> = Vec::new();
        let mut po_data: Option<Dataset> = None;
        for row in results.iter_mut() {
            if row.failure.is_some() {
                continue;
            }
            let spec = row.spec;
            let model = match spec.dim {
                Some(n) if spec.kind.needs_model() => {
                    if !models.iter().any(|(d, _)| *d == n) {
                        let data = match &po_data {
                            Some(d) => d.clone(),
                            None => {
                                let d = to_dataset(spec.mode, cfg.t_max, &collect(cfg, spec.mode, s)?);
                                po_data = Some(d.clone());
                                d
                            }
                        };
                        let fit = train_model(cfg, &data, n, s).map(|f| f.model).map_err(|e| e.to_string());
                        models.push((n, fit));
                    }
                    match &models.iter().find(|(d, _)| *d == n).expect("inserted above").1 {
                        Ok(m) => Some(m.clone()),
                        Err(e) => {
                            row.failure = Some(format!("run {run}: training failed: {e}"));
                            continue;
                        }
                    }
                }
                _ => None,
            };
            let row_seed = seed::derive_path(s, &[spec.mode as u64, spec.kind as u64, spec.dim.unwrap_or(0) as u64]);
            match policy_success(cfg, spec.mode, spec.kind, model.as_ref(), row_seed) {
                Ok(v) => {
                    progress(&format!("{} run {run}: {v:.3}", row_label(&spec)));
                    row.per_run.push(v);
                }
                Err(e) => {
                    progress(&format!("{} run {run}: FAILED: {e}", row_label(&spec)));
                    row.failure = Some(format!("run {run}: {e}"));
                }
            }
        }
    }
    Ok(results)
}

fn row_label(spec: &ExperimentSpec) -> String {
    match spec.dim {
        Some(n) => format!("{}/{}/{n}", spec.mode, spec.kind),
        None => format!("{}/{}", spec.mode, spec.kind),
    }
}

/// Aligned text table, one line per row with the per-run values at the end.
pub fn format_table(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    writeln!(out, "{:<5} {:<5} {:>4} {:>7}  per-run", "Input", "Model", "Dim", "Perf").expect("infallible");
    for r in rows {
        let dim = r.spec.dim.map_or("-".to_string(), |n| n.to_string());
        let perf = r.mean().map_or("FAILED".to_string(), |m| format!("{m:.3}"));
        let runs: Vec<String> = r.per_run.iter().map(|v| format!("{v:.3}")).collect();
        write!(out, "{:<5} {:<5} {:>4} {:>7}  {}", r.spec.mode.to_string(), r.spec.kind.name(), dim, perf, runs.join(" "))
            .expect("infallible");
        if let Some(f) = &r.failure {
            write!(out, "  ({f})").expect("infallible");
        }
        out.push('\n');
    }
    out
}

/// Machine-readable rows: `input,model,dims,mean,status,run_1..run_k`.
pub fn format_csv(rows: &[ResultRow], runs: usize) -> String {
    let mut out = String::from("input,model,dims,mean,status");
    for r in 1..=runs {
        write!(out, ",run_{r}").expect("infallible");
    }
    out.push('\n');
    for r in rows {
        let dim = r.spec.dim.map_or(String::new(), |n| n.to_string());
        let mean = r.mean().map_or(String::new(), |m| format!("{m:.4}"));
        let status = if r.failure.is_some() { "failed" } else { "ok" };
        write!(out, "{},{},{dim},{mean},{status}", r.spec.mode, r.spec.kind.name()).expect("infallible");
        for i in 0..runs {
            match r.per_run.get(i) {
                Some(v) => write!(out, ",{v:.4}"),
                None => write!(out, ","),
            }
            .expect("infallible");
        }
        out.push('\n');
    }
    out
}

/// FLat representations of every step of `data`, paired with hidden states.
pub fn latent_rows(model: &Model, data: &Dataset, states: &[Vec<CarState>], strategy: InferenceStrategy, seed: u64) -> Result<Vec<LatentRow>> {
    if states.len() != data.episodes.len() {
        return Err(Error::Shape(format!(
            "{} hidden-state records for {} episodes",
            states.len(),
            data.episodes.len()
        )));
    }
    let strategy = InferenceStrategy {
        kind: StrategyKind::FLat,
        ..strategy
    };
    let mut rows = Vec::new();
    for (e, (ep, st)) in data.episodes.iter().zip(states).enumerate() {
        let traj = &ep.trajectory;
        if st.len() != traj.len() {
            return Err(Error::Shape(format!(
                "episode {e}: {} hidden states for {} steps",
                st.len(),
                traj.len()
            )));
        }
        let mut history = History::new(strategy, Some(model), seed::derive(seed, e as u64))?;
        let mut z = history
            .begin(&ep.warmup, &Observation(traj.observation(0).to_vec()))?
            .to_vec();
        for t in 0..traj.len() {
            rows.push(LatentRow {
                episode: e,
                step: t,
                z: z.clone(),
                state: st[t],
            });
            if t + 1 < traj.len() {
                let next = Observation(traj.observation(t + 1).to_vec());
                z = history.advance(traj.actions()[t], Some(&next))?.to_vec();
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LatentRow {
    pub episode: usize,
    pub step: usize,
    pub z: Vec<f64>,
    pub state: CarState,
}

/// `episode,step,z1,z2,x_true,v_true` for a 2-dimensional model.
pub fn export_latent(model: &Model, data: &Dataset, states: &[Vec<CarState>], strategy: InferenceStrategy, seed: u64) -> Result<String> {
    if model.latent_dim() != 2 {
        return Err(Error::Config(format!(
            "latent export needs a 2-dimensional model, this one has n = {}",
            model.latent_dim()
        )));
    }
    let mut out = String::from("episode,step,z1,z2,x_true,v_true\n");
    for r in latent_rows(model, data, states, strategy, seed)? {
        writeln!(
            out,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.episode, r.step, r.z[0], r.z[1], r.state.x, r.state.v
        )
        .expect("infallible");
    }
    Ok(out)
}

/// Speed-separation statistics of a set of latent rows.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeedSeparation {
    /// R² of the least-squares fit of `v` from the latent.
    pub latent_r2: f64,
    /// R² of the least-squares fit of `v` from the position alone.
    pub position_r2: f64,
}

pub fn speed_separation(rows: &[LatentRow]) -> SpeedSeparation {
    let v: Vec<f64> = rows.iter().map(|r| r.state.v).collect();
    let z: Vec<Vec<f64>> = rows.iter().map(|r| r.z.clone()).collect();
    let x: Vec<Vec<f64>> = rows.iter().map(|r| vec![r.state.x]).collect();
    SpeedSeparation {
        latent_r2: r_squared(&z, &v),
        position_r2: r_squared(&x, &v),
    }
}

/// Least-squares coefficients of `y ~ x` with an intercept, intercept last.
/// Rank-deficient directions get coefficient 0.
pub fn least_squares(xs: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let d = xs.first().map_or(0, Vec::len) + 1;
    // normal equations, solved by Gauss-Jordan elimination with partial pivoting
    let mut a = vec![vec![0.0; d + 1]; d];
    for (x, &y) in xs.iter().zip(ys) {
        let row: Vec<f64> = x.iter().copied().chain([1.0]).collect();
        for i in 0..d {
            for j in 0..d {
                a[i][j] += row[i] * row[j];
            }
            a[i][d] += row[i] * y;
        }
    }
    let scale = (0..d).map(|i| a[i][i].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut pivot_of = vec![None; d];
    let mut r = 0;
    for c in 0..d {
        let p = (r..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()));
        let Some(p) = p else { break };
        if a[p][c].abs() <= 1e-12 * scale {
            continue;
        }
        a.swap(r, p);
        let piv = a[r][c];
        for k in c..=d {
            a[r][k] /= piv;
        }
        for i in 0..d {
            if i != r && a[i][c] != 0.0 {
                let f = a[i][c];
                for k in c..=d {
                    a[i][k] -= f * a[r][k];
                }
            }
        }
        pivot_of[c] = Some(r);
        r += 1;
    }
    (0..d).map(|c| pivot_of[c].map_or(0.0, |r| a[r][d])).collect()
}

/// Coefficient of determination of the least-squares fit of `y ~ x`.
pub fn r_squared(xs: &[Vec<f64>], ys: &[f64]) -> f64 {
    let beta = least_squares(xs, ys);
    let (coef, intercept) = beta.split_last().map(|(b, c)| (c, *b)).expect("intercept slot");
    let mean = ys.iter().sum::<f64>() / ys.len().max(1) as f64;
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for (x, &y) in xs.iter().zip(ys) {
        let pred = intercept + x.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>();
        ss_res += (y - pred).powi(2);
        ss_tot += (y - mean).powi(2);
    }
    if ss_tot == 0.0 {
        return 0.0;
    }
    1.0 - ss_res / ss_tot
}

/// Outcome of [`run_all`].
#[derive(Clone, Debug)]
pub struct RunAll {
    pub dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub separation: SpeedSeparation,
}

impl RunAll {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.failure.is_none())
    }
}

pub const TABLE_FILE: &str = "table1.csv";
pub const LATENT_FILE: &str = "latent_n2.csv";

/// Full reproduction under `<out_dir>/run-<unix seconds>-seed<k>/`: the
/// configuration, a version stamp, the result table and one latent export.
pub fn run_all(cfg: &Config, master_seed: u64, out_dir: &Path, progress: impl FnMut(&str)) -> Result<RunAll> {
    cfg.validate()?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs());
    let mut dir = out_dir.join(format!("run-{stamp}-seed{master_seed}"));
    let mut k = 1;
    while dir.exists() {
        dir = out_dir.join(format!("run-{stamp}-seed{master_seed}-{k}"));
        k += 1;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    format::write_file(
        &dir.join("config.txt"),
        &format!("# master seed {master_seed}\n{}", cfg.to_text()),
    )?;
    format::write_file(&dir.join("VERSION"), &format!("{} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")))?;

    let rows = reproduce_table(cfg, &table_rows(&cfg.latent_dims), master_seed, progress)?;
    format::write_file(&dir.join(TABLE_FILE), &format_csv(&rows, cfg.runs))?;

    // plot data: a 2-dimensional PO model from the first run
    let s = run_seed(master_seed, 0);
    let episodes = collect(cfg, ObsMode::Partial, s)?;
    let data = to_dataset(ObsMode::Partial, cfg.t_max, &episodes);
    let states: Vec<Vec<CarState>> = episodes.iter().map(|e| e.rollout.states.clone()).collect();
    let model = train_model(cfg, &data, 2, s)?.model;
    let export_seed = seed::derive(s, stream::EXPORT);
    let strategy = cfg.strategy(StrategyKind::FLat);
    format::write_file(&dir.join(LATENT_FILE), &export_latent(&model, &data, &states, strategy, export_seed)?)?;
    let separation = speed_separation(&latent_rows(&model, &data, &states, strategy, export_seed)?);
    Ok(RunAll { dir, rows, separation })
}

/// Configuration small enough for smoke tests: few trajectories, epochs,
/// states and episodes, two runs, one latent size.
pub fn smoke_config() -> Config {
    let mut c = Config {
        trajectories: 20,
        runs: 2,
        latent_dims: vec![2],
        ..Config::default()
    };
    c.train.epochs = 40;
    c.train.smooth_epochs = 30;
    c.inference.exact.refine_steps = 5;
    c.rcpi.states_per_iter = 200;
    c.rcpi.iterations = 2;
    c.rcpi.eval_episodes = 40;
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_and_rejects_unknown_keys() {
        let mut c = Config::default();
        c.train.epochs = 7;
        c.latent_dims = vec![3, 4];
        c.rcpi.discount = 0.5;
        let text = c.to_text();
        assert_eq!(Config::from_text(&text, Path::new("c")).unwrap(), c);
        let err = Config::from_text("epochs = 3\nepoch = 4\n", Path::new("c")).unwrap_err();
        assert!(err.to_string().contains("unknown key `epoch`"), "{err}");
        assert!(Config::from_text("latent_dims = 2,x\n", Path::new("c")).is_err());
        assert!(Config::from_text("epochs = 0\n", Path::new("c")).is_err());
    }

    #[test]
    fn rows_follow_table_order() {
        let rows = table_rows(&[2, 3, 5]);
        assert_eq!(rows.len(), 11);
        assert_eq!(rows[0].mode, ObsMode::Full);
        assert_eq!(rows[1].kind, StrategyKind::FObs);
        assert_eq!(rows[2].kind, StrategyKind::FLat);
        assert_eq!(rows[4].dim, Some(5));
        assert_eq!(rows[5].kind, StrategyKind::FDyn);
        assert_eq!(rows[10].kind, StrategyKind::FPar);
    }

    #[test]
    fn least_squares_recovers_exact_fit() {
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x[0] - 3.0 * x[1] + 0.5).collect();
        let b = least_squares(&xs, &ys);
        for (got, want) in b.iter().zip([2.0, -3.0, 0.5]) {
            assert!((got - want).abs() < 1e-9, "{b:?}");
        }
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
        // a constant column is rank deficient and gets no weight
        let xs: Vec<Vec<f64>> = (0..10).map(|i| vec![1.0, i as f64]).collect();
        let ys: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!((r_squared(&xs, &ys) - 1.0).abs() < 1e-12);
        // an unrelated regressor explains nothing
        let xs: Vec<Vec<f64>> = [1.0, -1.0, 1.0, -1.0].iter().map(|&v| vec![v]).collect();
        assert!(r_squared(&xs, &[1.0, 1.0, -1.0, -1.0]).abs() < 1e-12);
    }

    #[test]
    fn table_formats() {
        let rows = vec![
            ResultRow {
                spec: table_rows(&[2])[0],
                per_run: vec![0.9, 0.8],
                failure: None,
            },
            ResultRow {
                spec: table_rows(&[2])[2],
                per_run: vec![0.5],
                failure: Some("run 1: boom".into()),
            },
        ];
        let text = format_table(&rows);
        assert!(text.contains("0.850"), "{text}");
        assert!(text.contains("FAILED"), "{text}");
        let csv = format_csv(&rows, 2);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "input,model,dims,mean,status,run_1,run_2");
        assert_eq!(lines[1], "FO,FObs,,0.8500,ok,0.9000,0.8000");
        assert_eq!(lines[2], "PO,FLat,2,,failed,0.5000,");
    }
}
