//! Latent inference for new episodes.
//!
//! Two primitives: exact inference re-optimizes every latent of a prefix with
//! the model frozen, and fast inference advances the last latent through the
//! learned dynamics without looking at any observation. The [`History`] type
//! combines them into the four per-step representation strategies.

use std::fmt;

use rand::Rng;

use crate::env::{Action, Observation, Trajectory};
use crate::error::{Error, Result};
use crate::latent_model::{accumulate, LatentTrajectory, Model, Seq};
use crate::optim::Adam;
use crate::seed;

/// Maximum number of step halvings tried by one backtracking sweep.

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// The representation is the raw observation.
    FObs,
    /// Exact inference over the whole history at every step.
    FLat,
    /// Exact inference on the warm-up, then dynamics only.
    FDyn,
    /// Per-step random choice between `FLat` and `FDyn`.
    FPar,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 4] = [
        StrategyKind::FObs,
        StrategyKind::FLat,
        StrategyKind::FDyn,
        StrategyKind::FPar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::FObs => "FObs",
            StrategyKind::FLat => "FLat",
            StrategyKind::FDyn => "FDyn",
            StrategyKind::FPar => "FPar",
        }
    }

    pub fn needs_model(self) -> bool {
        self != StrategyKind::FObs
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fobs" => Ok(StrategyKind::FObs),
            "flat" => Ok(StrategyKind::FLat),
            "fdyn" => Ok(StrategyKind::FDyn),
            "fpar" => Ok(StrategyKind::FPar),
            _ => Err(Error::Config(format!(
                "unknown strategy `{s}` (expected fobs, flat, fdyn or fpar)"
            ))),
        }
    }
}

/// Budget for latent-only optimization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactConfig {
    /// Subgradient iterations per call.
    pub refine_steps: usize,
    /// Subgradient iterations for the one-off fit of the warm-up latents.
    pub initial_steps: usize,
    /// Initial step, decayed linearly to zero over `refine_steps`.
    pub step_size: f64,
    /// Half-width of the uniform initialization of the warm-up latents.
    pub init_scale: f64,
    /// Number of trailing latents optimized per call; earlier latents stay
    /// fixed. 0 optimizes the whole sequence.
    pub window: usize,
}

impl Default for ExactConfig {
    fn default() -> Self {
        ExactConfig {
            refine_steps: 20,
            initial_steps: 200,
            step_size: 0.01,
            init_scale: 0.1,
            window: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InferenceStrategy {
    pub kind: StrategyKind,
    /// Probability of an exact step under `FPar`.
    pub mix_probability: f64,
    pub exact: ExactConfig,
}

impl InferenceStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        InferenceStrategy {
            kind,
            mix_probability: 0.5,
            exact: ExactConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mix_probability) {
            return Err(Error::Config("mix_probability must lie in [0, 1]".into()));
        }
        if !(self.exact.step_size > 0.0) {
            return Err(Error::Config("inference step size must be positive".into()));
        }
        Ok(())
    }
}


/// Re-optimizes every latent of `prefix` with the model frozen.
///
/// `warm_start` may cover the whole prefix or all but its last step; in the
/// latter case the missing latent is predicted by the dynamics. Without a warm
/// start all latents start at zero. The returned loss never exceeds the loss
/// at initialization.
pub fn infer_exact(
    model: &Model,
    prefix: Seq<'_>,
    warm_start: Option<&LatentTrajectory>,
    cfg: &ExactConfig,
) -> LatentTrajectory {
    assert!(!prefix.is_empty(), "exact inference needs at least one step");
    let n = model.latent_dim();
    let len = prefix.len();
    let mut zs = match warm_start {
        None => LatentTrajectory::zeros(n, len),
        Some(w) if w.len() == len => w.clone(),
        Some(w) if w.len() + 1 == len => {
            let mut z = w.clone();
            let next = model.dynamics(w.last(), prefix.actions[len - 2]);
            z.z.extend_from_slice(&next);
            z
        }
        Some(w) => panic!("warm start of length {} for a prefix of length {len}", w.len()),
    };
    refine(model, prefix, &mut zs.z, cfg);
    zs
}

fn refine(model: &Model, seq: Seq<'_>, zs: &mut [f64], cfg: &ExactConfig) {
    let n = model.latent_dim();
    let len = seq.len();
    let m = seq.obs.len() / len;
    let free_from = match cfg.window {
        0 => 0,
        w => len.saturating_sub(w),
    };
    // the latent just before the window is kept fixed; it anchors the first
    // dynamics term of the block
    let from = free_from.saturating_sub(1);
    let fixed = (free_from - from) * n;
    let block = Seq {
        obs: &seq.obs[from * m..],
        actions: &seq.actions[from..],
    };
    let z = &mut zs[from * n..];

    let mut best_z = z.to_vec();
    let mut best = f64::INFINITY;
    let mut moments = Adam::new(z.len());
    let mut g = vec![0.0; z.len()];
    for k in 0..=cfg.refine_steps {
        g.iter_mut().for_each(|v| *v = 0.0);
        let l = accumulate(model, block, z, Some(&mut g), None);
        if l < best {
            best = l;
            best_z.copy_from_slice(z);
        }
        g[..fixed].iter_mut().for_each(|v| *v = 0.0);
        if k == cfg.refine_steps || g.iter().all(|&v| v == 0.0) {
            break;
        }
        let eta = cfg.step_size * (1.0 - k as f64 / cfg.refine_steps as f64);
        for (zi, d) in z.iter_mut().zip(moments.direction(&g)) {
            *zi -= eta * d;
        }
    }
    z.copy_from_slice(&best_z);
}

/// `z_{t+1} = m(z_t, a_t)`. Takes no observation.
pub fn infer_fast(model: &Model, z: &[f64], a: Action) -> Vec<f64> {
    model.dynamics(z, a)
}

/// Latents for the five warm-up steps, fitted from a small random initialization.
pub fn infer_initial<R: Rng + ?Sized>(
    model: &Model,
    warmup: &Trajectory,
    cfg: &ExactConfig,
    rng: &mut R,
) -> LatentTrajectory {
    let init = LatentTrajectory::random(model.latent_dim(), warmup.len(), cfg.init_scale, rng);
    let full = ExactConfig {
        refine_steps: cfg.initial_steps,
        window: 0,
        ..*cfg
    };
    infer_exact(model, warmup.into(), Some(&init), &full)
}

/// Per-episode inference state: everything observed so far plus the latents.
///
/// The observation buffer ends with the newest observation; its paired action
/// is unknown until [`History::advance`] and is held as a placeholder that the
/// loss never reads.
#[derive(Clone, Debug)]
pub struct History<'m> {
    strategy: InferenceStrategy,
    model: Option<&'m Model>,
    obs: Vec<f64>,
    actions: Vec<Action>,
    latents: LatentTrajectory,
    rng: seed::Rng,
    exact_steps: usize,
    steps: usize,
}

impl<'m> History<'m> {
    pub fn new(strategy: InferenceStrategy, model: Option<&'m Model>, seed: u64) -> Result<Self> {
        strategy.validate()?;
        let model = if strategy.kind.needs_model() {
            Some(model.ok_or_else(|| Error::Config(format!("{} needs a trained model", strategy.kind)))?)
        } else {
            None
        };
        Ok(History {
            strategy,
            model,
            obs: Vec::new(),
            actions: Vec::new(),
            latents: LatentTrajectory::zeros(1, 0),
            rng: seed::rng(seed),
            exact_steps: 0,
            steps: 0,
        })
    }

    pub fn strategy(&self) -> &InferenceStrategy {
        &self.strategy
    }

    /// Replaces the generator used for `FPar` draws.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = seed::rng(seed);
    }

    /// Dimension of the produced representation (`m` for `FObs`).
    pub fn dim(&self) -> Option<usize> {
        self.model.map(Model::latent_dim)
    }

    /// The most recent representation.
    pub fn current(&self) -> &[f64] {
        self.latents.last()
    }

    /// All latents of the episode so far, warm-up included.
    pub fn latents(&self) -> &LatentTrajectory {
        &self.latents
    }

    /// Steps resolved by exact inference, and steps in total (warm-up excluded).
    pub fn exact_fraction(&self) -> (usize, usize) {
        (self.exact_steps, self.steps)
    }

    /// Starts an episode from its warm-up and first observation; returns `z_1`.
    pub fn begin(&mut self, warmup: &Trajectory, first: &Observation) -> Result<&[f64]> {
        self.obs.clear();
        self.actions.clear();
        self.exact_steps = 0;
        self.steps = 0;
        let Some(model) = self.model else {
            self.latents = LatentTrajectory {
                n: first.dim(),
                z: first.0.clone(),
            };
            self.steps = 1;
            return Ok(self.current());
        };
        self.check_obs(model, first)?;
        self.obs.extend_from_slice(warmup.observations());
        self.actions.extend_from_slice(warmup.actions());
        self.latents = infer_initial(model, warmup, &self.strategy.exact, &mut self.rng);
        let last_warmup_action = *warmup.actions().last().expect("warm-up is never empty");
        self.push_step(model, last_warmup_action, Some(first))?;
        Ok(self.current())
    }

    /// Records that `action` was applied and produces the next representation.
    /// `obs` is the observation of the resulting state, if acquired.
    pub fn advance(&mut self, action: Action, obs: Option<&Observation>) -> Result<&[f64]> {
        let Some(model) = self.model else {
            let o = obs.ok_or(Error::MissingObservation { strategy: "FObs" })?;
            self.latents.z.copy_from_slice(&o.0);
            self.steps += 1;
            return Ok(self.current());
        };
        if let Some(o) = obs {
            self.check_obs(model, o)?;
        }
        if let Some(last) = self.actions.last_mut() {
            *last = action;
        }
        self.push_step(model, action, obs)?;
        Ok(self.current())
    }

    fn check_obs(&self, model: &Model, o: &Observation) -> Result<()> {
        if o.dim() != model.obs_dim() {
            return Err(Error::Shape(format!(
                "observation of dimension {} for a decoder of dimension {}",
                o.dim(),
                model.obs_dim()
            )));
        }
        Ok(())
    }

    fn push_step(&mut self, model: &Model, action: Action, obs: Option<&Observation>) -> Result<()> {
        self.steps += 1;
        let exact = match self.strategy.kind {
            StrategyKind::FObs => unreachable!("handled without a model"),
            StrategyKind::FLat => true,
            StrategyKind::FDyn => false,
            StrategyKind::FPar => self.rng.gen::<f64>() < self.strategy.mix_probability,
        };
        if self.strategy.kind != StrategyKind::FDyn {
            let o = obs.ok_or(Error::MissingObservation {
                strategy: self.strategy.kind.name(),
            })?;
            self.obs.extend_from_slice(&o.0);
            // placeholder until the next action is known
            self.actions.push(Action::Neutral);
        }
        let next = infer_fast(model, self.latents.last(), action);
        self.latents.z.extend_from_slice(&next);
        if exact {
            self.exact_steps += 1;
            let seq = Seq {
                obs: &self.obs,
                actions: &self.actions,
            };
            refine(model, seq, &mut self.latents.z, &self.strategy.exact);
        }
        Ok(())
    }
}
