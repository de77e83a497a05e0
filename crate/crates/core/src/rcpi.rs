//! Rollout classification policy iteration over a representation space.
//!
//! Every iteration samples episode starts, estimates the return of each
//! action by Monte-Carlo rollouts under the current policy, keeps the states
//! with a unique best action and fits a fresh linear multiclass hinge-loss
//! classifier on them.

use rand::Rng;
use rayon::prelude::*;

use crate::env::{self, Action, Agent, CarState, EpisodeStart, ObsMode, Observation, Trajectory};
use crate::error::{Error, Result};
use crate::inference::{infer_fast, History, InferenceStrategy};
use crate::latent_model::{dot, Model};
use crate::seed;

/// One weight vector per action over `(z, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearPolicy {
    weights: Vec<Vec<f64>>,
}

impl LinearPolicy {
    pub fn zeros(dim: usize) -> Self {
        LinearPolicy {
            weights: vec![vec![0.0; dim + 1]; Action::COUNT],
        }
    }

    pub fn from_weights(weights: Vec<Vec<f64>>) -> Result<Self> {
        let features = weights.first().map_or(0, Vec::len);
        if weights.len() != Action::COUNT || features < 2 || weights.iter().any(|w| w.len() != features) {
            return Err(Error::Shape(format!(
                "a policy needs {} weight vectors of equal length >= 2",
                Action::COUNT
            )));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::Config("non-finite policy weight".into()));
        }
        Ok(LinearPolicy { weights })
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Number of features including the bias slot.
    pub fn n_features(&self) -> usize {
        self.weights[0].len()
    }

    pub fn score(&self, a: Action, z: &[f64]) -> f64 {
        let w = &self.weights[a.index()];
        let (bias, lin) = w.split_last().expect("non-empty weights");
        dot(lin, z) + bias
    }

    /// Highest-scoring action; ties go to the lowest index.
    pub fn action(&self, z: &[f64]) -> Action {
        assert_eq!(z.len() + 1, self.n_features(), "representation dimension");
        let mut best = Action::ALL[0];
        let mut best_score = self.score(best, z);
        for a in &Action::ALL[1..] {
            let s = self.score(*a, z);
            if s > best_score {
                best = *a;
                best_score = s;
            }
        }
        best
    }

    pub fn scaled(&self, c: f64) -> Self {
        LinearPolicy {
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|v| v * c).collect())
                .collect(),
        }
    }
}

/// Behaviour followed inside rollouts.
#[derive(Clone, Debug, PartialEq)]
pub enum Policy {
    /// Uniformly random actions; the starting point of policy iteration.
    Random,
    Linear(LinearPolicy),
}

impl Policy {
    pub fn choose<R: Rng + ?Sized>(&self, z: &[f64], rng: &mut R) -> Action {
        match self {
            Policy::Random => Action::random(rng),
            Policy::Linear(p) => p.action(z),
        }
    }

    fn reads_representation(&self) -> bool {
        matches!(self, Policy::Linear(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RolloutSpace {
    /// Rollouts step the real environment.
    RealEnv,
    /// Rollouts step the learned latent dynamics only.
    LatentSim,
}

impl std::str::FromStr for RolloutSpace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real_env" => Ok(RolloutSpace::RealEnv),
            "latent_sim" => Ok(RolloutSpace::LatentSim),
            _ => Err(Error::Config(format!(
                "unknown rollout space `{s}` (expected real_env or latent_sim)"
            ))),
        }
    }
}

impl std::fmt::Display for RolloutSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RolloutSpace::RealEnv => "real_env",
            RolloutSpace::LatentSim => "latent_sim",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub step_size: f64,
    pub margin: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            epochs: 200,
            step_size: 0.1,
            margin: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RolloutConfig {
    pub states_per_iter: usize,
    pub rollouts_per_state_action: usize,
    pub iterations: usize,
    pub horizon: usize,
    pub rollout_space: RolloutSpace,
    /// Per-step discount applied to the success reward inside rollouts; `1.0`
    /// gives the plain success indicator.
    pub discount: f64,
    /// Weight each training state by the gap between its best and second-best
    /// action estimate instead of uniformly.
    pub weight_by_gap: bool,
    /// Fresh episodes used to score each iteration's policy.
    pub eval_episodes: usize,
    /// Training states are taken after following the current policy for a
    /// uniform number of steps in `0..=max_start_offset` from a fresh start;
    /// 0 uses the fresh starts themselves.
    pub max_start_offset: usize,
    /// Return the iterate with the best validation score instead of the last.
    pub select_best: bool,
    /// Labeled sets of this many earlier iterations are kept in the
    /// classifier's training set.
    pub sample_memory: usize,
    pub classifier: ClassifierConfig,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            states_per_iter: 1000,
            rollouts_per_state_action: 1,
            iterations: 10,
            horizon: env::DEFAULT_T_MAX,
            rollout_space: RolloutSpace::RealEnv,
            discount: 0.99,
            weight_by_gap: true,
            eval_episodes: 1000,
            max_start_offset: 50,
            select_best: true,
            sample_memory: 0,
            classifier: ClassifierConfig::default(),
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.states_per_iter,
            self.rollouts_per_state_action,
            self.iterations,
            self.horizon,
            self.eval_episodes,
            self.classifier.epochs,
        ];
        if counts.contains(&0) {
            return Err(Error::Config("rollout counts and horizon must be positive".into()));
        }
        if !(self.discount > 0.0 && self.discount <= 1.0) {
            return Err(Error::Config("discount must lie in (0, 1]".into()));
        }
        if !(self.classifier.step_size > 0.0) {
            return Err(Error::Config("classifier step size must be positive".into()));
        }
        Ok(())
    }
}

/// What the agent sees and how it turns observations into representations.
#[derive(Clone, Copy, Debug)]
pub struct Learner<'m> {
    pub mode: ObsMode,
    pub strategy: InferenceStrategy,
    pub model: Option<&'m Model>,
}

impl<'m> Learner<'m> {
    pub fn history(&self, seed: u64) -> Result<History<'m>> {
        History::new(self.strategy, self.model, seed)
    }

    /// Dimension of the representation the policy reads.
    pub fn repr_dim(&self) -> usize {
        match self.model {
            Some(m) if self.strategy.kind.needs_model() => m.latent_dim(),
            _ => self.mode.dim(),
        }
    }
}

/// Policy acting on representations produced by a [`History`].
pub struct PolicyAgent<'m, 'p> {
    pub history: History<'m>,
    pub policy: &'p Policy,
    pub rng: seed::Rng,
    last: Option<Action>,
}

impl<'m, 'p> PolicyAgent<'m, 'p> {
    pub fn new(history: History<'m>, policy: &'p Policy, seed: u64) -> Self {
        PolicyAgent {
            history,
            policy,
            rng: seed::rng(seed),
            last: None,
        }
    }
}

impl Agent for PolicyAgent<'_, '_> {
    fn begin(&mut self, warmup: &Trajectory, first: &Observation) -> Result<Action> {
        let z = self.history.begin(warmup, first)?;
        let a = self.policy.choose(z, &mut self.rng);
        self.last = Some(a);
        Ok(a)
    }

    fn act(&mut self, obs: &Observation) -> Result<Action> {
        let prev = self.last.expect("begin() must be called first");
        let a = if self.policy.reads_representation() {
            let z = self.history.advance(prev, Some(obs))?;
            self.policy.choose(z, &mut self.rng)
        } else {
            self.policy.choose(&[], &mut self.rng)
        };
        self.last = Some(a);
        Ok(a)
    }
}

/// A state to estimate action values from, with the representation history
/// that led to it.
#[derive(Clone, Debug)]
pub struct StartPoint<'m> {
    pub start: EpisodeStart,
    pub history: History<'m>,
    state: CarState,
    /// Steps taken since the episode start.
    elapsed: usize,
}

impl<'m> StartPoint<'m> {
    /// The episode start itself, with its first representation inferred.
    pub fn new(learner: &Learner<'m>, start: EpisodeStart, seed: u64) -> Result<Self> {
        let mut history = learner.history(seed)?;
        history.begin(&start.warmup, &env::observe(start.state, learner.mode))?;
        Ok(StartPoint {
            state: start.state,
            start,
            history,
            elapsed: 0,
        })
    }

    /// Follows `policy` for `steps` steps. Returns `None` if the goal is
    /// reached on the way.
    pub fn advance(mut self, mode: ObsMode, policy: &Policy, steps: usize, seed: u64) -> Result<Option<Self>> {
        let mut rng = seed::rng(seed);
        for _ in 0..steps {
            let a = policy.choose(self.history.current(), &mut rng);
            let (next, terminal) = env::step(self.state, a);
            if terminal {
                return Ok(None);
            }
            self.state = next;
            self.elapsed += 1;
            let obs = env::observe(next, mode);
            self.history.advance(a, Some(&obs))?;
        }
        Ok(Some(self))
    }

    pub fn state(&self) -> CarState {
        self.state
    }

    pub fn elapsed(&self) -> usize {
        self.elapsed
    }

    pub fn representation(&self) -> &[f64] {
        self.history.current()
    }
}

/// Discounted success of one real-environment rollout: `first_action`, then
/// `policy`, for whatever remains of the horizon.
fn single_rollout(
    point: &StartPoint<'_>,
    mode: ObsMode,
    first_action: Action,
    policy: &Policy,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<f64> {
    if point.state().at_goal() {
        return Ok(1.0);
    }
    let remaining = cfg.horizon.saturating_sub(point.elapsed()).max(1);
    let mut history = point.history.clone();
    history.reseed(seed::derive(seed, 0));
    let mut rng = seed::rng(seed::derive(seed, 1));
    let mut prev = first_action;
    let reads = policy.reads_representation();
    let rollout = env::run_from(point.state(), mode, remaining, |o, t| {
        if t == 0 {
            return Ok(first_action);
        }
        let a = if reads {
            let z = history.advance(prev, Some(o))?;
            policy.choose(z, &mut rng)
        } else {
            policy.choose(&[], &mut rng)
        };
        prev = a;
        Ok(a)
    })?;
    Ok(success_value(rollout.success(), rollout.trajectory.len(), cfg.discount))
}

/// `discount^(steps - 1)` on success, else 0.
fn success_value(success: bool, steps: usize, discount: f64) -> f64 {
    if success {
        discount.powi(steps.saturating_sub(1) as i32)
    } else {
        0.0
    }
}

/// Monte-Carlo estimate in `[0, 1]` of the discounted success after taking
/// `first_action` from `point` and following `policy` in the real environment.
pub fn rollout_return(
    point: &StartPoint<'_>,
    mode: ObsMode,
    first_action: Action,
    policy: &Policy,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<f64> {
    let mut total = 0.0;
    for r in 0..cfg.rollouts_per_state_action {
        total += single_rollout(point, mode, first_action, policy, cfg, seed::derive(seed, r as u64))?;
    }
    Ok(total / cfg.rollouts_per_state_action as f64)
}

/// Like [`rollout_return`] but every transition goes through the learned
/// dynamics; the goal is detected on the decoded position.
pub fn latent_rollout_return(
    z_start: &[f64],
    first_action: Action,
    policy: &Policy,
    model: &Model,
    cfg: &RolloutConfig,
    seed: u64,
) -> f64 {
    let reached = |z: &[f64]| model.decode(z)[0] >= env::GOAL_POSITION;
    if reached(z_start) {
        return 1.0;
    }
    let mut total = 0.0;
    for r in 0..cfg.rollouts_per_state_action {
        let mut rng = seed::rng(seed::derive(seed, r as u64));
        let mut z = z_start.to_vec();
        let mut a = first_action;
        for t in 1..=cfg.horizon {
            z = infer_fast(model, &z, a);
            if reached(&z) {
                total += success_value(true, t, cfg.discount);
                break;
            }
            a = policy.choose(&z, &mut rng);
        }
    }
    total / cfg.rollouts_per_state_action as f64
}

/// Difference between the best and the second best estimate.
pub fn regret_gap(q: &[f64; Action::COUNT]) -> f64 {
    let mut sorted = *q;
    sorted.sort_by(|a, b| b.total_cmp(a));
    sorted[0] - sorted[1]
}

/// Labeled representation for the classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Action,
    /// Importance of the sample; scales its subgradient steps.
    pub weight: f64,
}

/// Returns the unique maximizer, or `None` on any tie for the maximum.
pub fn strict_argmax(q: &[f64; Action::COUNT]) -> Option<Action> {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = Action::ALL.iter().filter(|a| q[a.index()] == best);
    let first = winners.next().copied();
    if winners.next().is_some() {
        None
    } else {
        first
    }
}

/// Multiclass hinge loss `sum_i max(0, margin + max_{j != y_i} w_j.x_i - w_{y_i}.x_i)`.
pub fn hinge_loss(policy: &LinearPolicy, samples: &[Sample], margin: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let own = policy.score(s.label, &s.features);
            let rival = Action::ALL
                .iter()
                .filter(|&&a| a != s.label)
                .map(|&a| policy.score(a, &s.features))
                .fold(f64::NEG_INFINITY, f64::max);
            (margin + rival - own).max(0.0)
        })
        .sum()
}

/// Fits a linear multiclass hinge classifier by epoch-wise subgradient steps
/// over the samples in order. Training stops at the first epoch without a
/// margin violation and returns those weights; otherwise the current or
/// running-average iterate with the lowest weighted training error seen at
/// any epoch end is returned.
///
/// Features are whitened during training and the transform is folded back
/// into the returned weights, so the policy reads raw representations.
pub fn train_classifier(samples: &[Sample], cfg: &ClassifierConfig) -> Result<LinearPolicy> {
    let dim = samples
        .first()
        .map(|s| s.features.len())
        .ok_or_else(|| Error::Config("no training samples".into()))?;
    if samples.iter().any(|s| s.features.len() != dim) {
        return Err(Error::Shape("samples with different feature dimensions".into()));
    }
    let whitener = Whitener::fit(samples.iter().map(|s| s.features.as_slice()), dim);
    let standardized: Vec<Vec<f64>> = samples
        .iter()
        .map(|s| {
            let mut x = whitener.apply(&s.features);
            x.push(1.0);
            x
        })
        .collect();

    // weighted training error of a candidate, the cost the policy step pays
    let cost = |w: &[Vec<f64>]| -> f64 {
        standardized
            .iter()
            .zip(samples)
            .filter(|(x, s)| argmax_scores(w, x) != s.label.index())
            .map(|(_, s)| s.weight)
            .sum()
    };
    let mut w = vec![vec![0.0; dim + 1]; Action::COUNT];
    let mut avg = w.clone();
    let mut best = (cost(&w), w.clone());
    let mut visits = 0usize;
    for _ in 0..cfg.epochs {
        let mut violations = 0;
        for (x, s) in standardized.iter().zip(samples) {
            let y = s.label.index();
            let scores: Vec<f64> = w.iter().map(|wa| dot(wa, x)).collect();
            let (rival, rival_score) = scores
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != y)
                .fold((usize::MAX, f64::NEG_INFINITY), |acc, (j, &v)| if v > acc.1 { (j, v) } else { acc });
            if cfg.margin + rival_score - scores[y] > 0.0 {
                violations += 1;
                for (k, xk) in x.iter().enumerate() {
                    w[y][k] += cfg.step_size * s.weight * xk;
                    w[rival][k] -= cfg.step_size * s.weight * xk;
                }
            }
            visits += 1;
            for (sa, wa) in avg.iter_mut().zip(&w) {
                for (s, v) in sa.iter_mut().zip(wa) {
                    *s += (v - *s) / visits as f64;
                }
            }
        }
        if violations == 0 {
            // every margin holds: zero hinge loss
            best = (0.0, w);
            break;
        }
        for candidate in [&w, &avg] {
            let c = cost(candidate);
            if c < best.0 {
                best = (c, candidate.clone());
            }
        }
    }
    let w = best.1;

    let weights = w
        .into_iter()
        .map(|wa| {
            let (bias, lin) = wa.split_last().expect("bias slot");
            whitener.fold(lin, *bias)
        })
        .collect();
    LinearPolicy::from_weights(weights)
}

/// Affine map `x -> L^{-1} (x - mean)` where `L L^T` is the (slightly
/// ridged) feature covariance, so the classifier trains on decorrelated,
/// unit-variance features.
struct Whitener {
    mean: Vec<f64>,
    /// Lower-triangular Cholesky factor, row-major.
    chol: Vec<f64>,
    dim: usize,
}

impl Whitener {
    /// Ridge added to the covariance, relative to its mean diagonal.
    const RIDGE: f64 = 1e-6;

    fn fit<'a>(xs: impl Iterator<Item = &'a [f64]> + Clone, dim: usize) -> Self {
        let count = xs.clone().count().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for x in xs.clone() {
            for (m, v) in mean.iter_mut().zip(x) {
                *m += v / count;
            }
        }
        let mut cov = vec![0.0; dim * dim];
        for x in xs {
            for i in 0..dim {
                for j in 0..=i {
                    cov[i * dim + j] += (x[i] - mean[i]) * (x[j] - mean[j]) / count;
                }
            }
        }
        let trace: f64 = (0..dim).map(|i| cov[i * dim + i]).sum();
        let ridge = if trace > 0.0 { Self::RIDGE * trace / dim as f64 } else { 1.0 };
        for i in 0..dim {
            cov[i * dim + i] += ridge;
        }
        // Cholesky of the lower triangle
        let mut chol = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..=i {
                let s: f64 = (0..j).map(|k| chol[i * dim + k] * chol[j * dim + k]).sum();
                if i == j {
                    chol[i * dim + i] = (cov[i * dim + i] - s).max(ridge).sqrt();
                } else {
                    chol[i * dim + j] = (cov[i * dim + j] - s) / chol[j * dim + j];
                }
            }
        }
        Whitener { mean, chol, dim }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; d];
        for i in 0..d {
            let s: f64 = (0..i).map(|k| self.chol[i * d + k] * y[k]).sum();
            y[i] = (x[i] - self.mean[i] - s) / self.chol[i * d + i];
        }
        y
    }

    /// Raw-feature weights (bias last) with the same scores as `w . apply(x) + bias`.
    fn fold(&self, w: &[f64], bias: f64) -> Vec<f64> {
        let d = self.dim;
        // solve L^T u = w
        let mut u = vec![0.0; d];
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| self.chol[k * d + i] * u[k]).sum();
            u[i] = (w[i] - s) / self.chol[i * d + i];
        }
        let shift: f64 = u.iter().zip(&self.mean).map(|(a, b)| a * b).sum();
        u.push(bias - shift);
        u
    }
}

fn argmax_scores(w: &[Vec<f64>], x: &[f64]) -> usize {
    // first maximum wins, as in LinearPolicy::action
    w.iter()
        .map(|wa| dot(wa, x))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc })
        .0
}

/// Labeled training set of one iteration, in sample order.
pub fn collect_samples(
    policy: &Policy,
    learner: &Learner<'_>,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<(Vec<Sample>, usize)> {
    if cfg.rollout_space == RolloutSpace::LatentSim && !learner.strategy.kind.needs_model() {
        return Err(Error::Config("latent-space rollouts need a learned model".into()));
    }
    let labels: Vec<Option<Sample>> = (0..cfg.states_per_iter as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(seed, i);
            let start = env::sample_initial(learner.mode, &mut seed::rng(seed::derive(s, 0)))?;
            let mut point = StartPoint::new(learner, start, seed::derive(s, 1))?;
            if cfg.max_start_offset > 0 {
                let steps = seed::rng(seed::derive(s, 3)).gen_range(0..=cfg.max_start_offset);
                match point.advance(learner.mode, policy, steps, seed::derive(s, 4))? {
                    Some(p) => point = p,
                    None => return Ok(None),
                }
            }
            let mut q = [0.0; Action::COUNT];
            for a in Action::ALL {
                let rs = seed::derive_path(s, &[2, a.index() as u64]);
                q[a.index()] = match cfg.rollout_space {
                    RolloutSpace::RealEnv => rollout_return(&point, learner.mode, a, policy, cfg, rs)?,
                    RolloutSpace::LatentSim => latent_rollout_return(
                        point.representation(),
                        a,
                        policy,
                        learner.model.expect("checked above"),
                        cfg,
                        rs,
                    ),
                };
            }
            Ok(strict_argmax(&q).map(|label| Sample {
                features: point.representation().to_vec(),
                label,
                weight: if cfg.weight_by_gap { regret_gap(&q) } else { 1.0 },
            }))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<Sample> = labels.into_iter().flatten().collect();
    Ok((samples, cfg.states_per_iter))
}

/// One policy-iteration step from `policy`.
pub fn rcpi_iteration(policy: &Policy, learner: &Learner<'_>, cfg: &RolloutConfig, seed: u64) -> Result<LinearPolicy> {
    cfg.validate()?;
    train_classifier(&labeled_set(policy, learner, cfg, seed)?, &cfg.classifier)
}

fn labeled_set(policy: &Policy, learner: &Learner<'_>, cfg: &RolloutConfig, seed: u64) -> Result<Vec<Sample>> {
    let (samples, sampled) = collect_samples(policy, learner, cfg, seed)?;
    if samples.len() * 100 < sampled || samples.is_empty() {
        return Err(Error::DegenerateRollouts {
            kept: samples.len(),
            sampled,
        });
    }
    Ok(samples)
}

/// Fraction of fresh episodes that reach the goal within `t_max` steps.
pub fn evaluate(policy: &Policy, learner: &Learner<'_>, episodes: usize, t_max: usize, seed: u64) -> Result<f64> {
    let wins: Vec<bool> = (0..episodes as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed::derive(seed, i);
            let start = env::sample_initial(learner.mode, &mut seed::rng(seed::derive(s, 0)))?;
            let history = learner.history(seed::derive(s, 1))?;
            let mut agent = PolicyAgent::new(history, policy, seed::derive(s, 2));
            Ok(env::run_episode(&start, &mut agent, learner.mode, t_max)?.success())
        })
        .collect::<Result<_>>()?;
    Ok(wins.iter().filter(|&&w| w).count() as f64 / episodes.max(1) as f64)
}

#[derive(Clone, Debug)]
pub struct RcpiRun {
    pub policy: LinearPolicy,
    /// Validation success rate of the policy after each iteration.
    pub curve: Vec<f64>,
    /// Index into `curve` of the returned policy.
    pub chosen: usize,
}

/// Runs `cfg.iterations` iterations from the uniform random policy.
///
/// Every iterate is scored on its own validation episodes; with
/// `select_best` the highest-scoring one (earliest on ties) is returned.
pub fn rcpi_train(learner: &Learner<'_>, cfg: &RolloutConfig, seed: u64) -> Result<RcpiRun> {
    cfg.validate()?;
    let mut policy = Policy::Random;
    let mut curve: Vec<f64> = Vec::with_capacity(cfg.iterations);
    let mut kept: Option<(usize, LinearPolicy)> = None;
    let mut memory: std::collections::VecDeque<Vec<Sample>> = Default::default();
    for it in 0..cfg.iterations as u64 {
        let fresh = labeled_set(&policy, learner, cfg, seed::derive_path(seed, &[it, 0]))?;
        let next = if memory.is_empty() {
            train_classifier(&fresh, &cfg.classifier)?
        } else {
            let all: Vec<Sample> = memory.iter().flatten().chain(&fresh).cloned().collect();
            train_classifier(&all, &cfg.classifier)?
        };
        if cfg.sample_memory > 0 {
            if memory.len() == cfg.sample_memory {
                memory.pop_front();
            }
            memory.push_back(fresh);
        }
        policy = Policy::Linear(next.clone());
        curve.push(evaluate(
            &policy,
            learner,
            cfg.eval_episodes,
            cfg.horizon,
            seed::derive_path(seed, &[it, 1]),
        )?);
        let improved = match &kept {
            Some((best, _)) => curve[it as usize] > curve[*best],
            None => true,
        };
        if improved || !cfg.select_best {
            kept = Some((it as usize, next));
        }
    }
    let (chosen, policy) = kept.expect("at least one iteration");
    Ok(RcpiRun { policy, curve, chosen })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::StrategyKind;

    fn fobs(mode: ObsMode) -> Learner<'static> {
        Learner {
            mode,
            strategy: InferenceStrategy::new(StrategyKind::FObs),
            model: None,
        }
    }

    #[test]
    fn zero_policy_breaks_ties_low() {
        let p = LinearPolicy::zeros(3);
        assert_eq!(p.action(&[0.3, -1.0, 2.0]), Action::Reverse);
    }

    #[test]
    fn forward_weight_selects_forward() {
        let mut w = vec![vec![0.0; 3]; 3];
        w[Action::Forward.index()][0] = 1.0;
        let p = LinearPolicy::from_weights(w).unwrap();
        assert_eq!(p.action(&[0.2, -5.0]), Action::Forward);
        assert_eq!(p.scaled(7.5).action(&[0.2, -5.0]), Action::Forward);
    }

    #[test]
    fn strict_argmax_rules() {
        assert_eq!(strict_argmax(&[0.0, 1.0, 0.0]), Some(Action::Neutral));
        assert_eq!(strict_argmax(&[1.0, 1.0, 0.0]), None);
        assert_eq!(strict_argmax(&[0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn rollout_from_goal_is_a_win() {
        let learner = fobs(ObsMode::Full);
        let start = EpisodeStart {
            origin: CarState::new(0.55, 0.0),
            state: CarState::new(0.55, 0.0),
            warmup: Trajectory::new(2),
        };
        let point = StartPoint::new(&learner, start, 0).unwrap();
        let cfg = RolloutConfig::default();
        for a in Action::ALL {
            assert_eq!(rollout_return(&point, ObsMode::Full, a, &Policy::Random, &cfg, 3).unwrap(), 1.0);
        }
    }

    #[test]
    fn valley_policy_never_succeeds() {
        let learner = fobs(ObsMode::Full);
        let start = EpisodeStart {
            origin: CarState::new(-0.5, 0.0),
            state: CarState::new(-0.5, 0.0),
            warmup: Trajectory::new(2),
        };
        let point = StartPoint::new(&learner, start, 0).unwrap();
        let mut w = vec![vec![0.0; 3]; 3];
        w[Action::Neutral.index()][2] = 1.0;
        let neutral = Policy::Linear(LinearPolicy::from_weights(w).unwrap());
        let cfg = RolloutConfig::default();
        let r = rollout_return(&point, ObsMode::Full, Action::Neutral, &neutral, &cfg, 0).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(r, rollout_return(&point, ObsMode::Full, Action::Neutral, &neutral, &cfg, 0).unwrap());
    }

    #[test]
    fn trapped_latent_simulator_never_succeeds() {
        // A = 0, c = 0: every action maps to z = 0, decoded to x = b = 0.
        let model = Model::zeros(2, 1, 0.0);
        let cfg = RolloutConfig::default();
        for a in Action::ALL {
            assert_eq!(latent_rollout_return(&[0.3, 0.1], a, &Policy::Random, &model, &cfg, 1), 0.0);
        }
        let mut at_goal = Model::zeros(2, 1, 0.0);
        at_goal.decoder.b = vec![0.6];
        assert_eq!(latent_rollout_return(&[0.0, 0.0], Action::Neutral, &Policy::Random, &at_goal, &cfg, 1), 1.0);
    }

    #[test]
    fn classifier_separates_separable_data() {
        let mut rng = seed::rng(4);
        let samples: Vec<Sample> = (0..300)
            .filter_map(|_| {
                let x: f64 = rng.gen_range(-1.0..1.0);
                let y: f64 = rng.gen_range(-1.0..1.0);
                let label = if x > 0.2 && y > 0.0 {
                    Action::Forward
                } else if x < -0.2 && y > 0.0 {
                    Action::Reverse
                } else if y < -0.2 {
                    Action::Neutral
                } else {
                    return None;
                };
                Some(Sample {
                    features: vec![x, y],
                    label,
                    weight: 1.0,
                })
            })
            .collect();
        let p = train_classifier(&samples, &ClassifierConfig::default()).unwrap();
        assert!(samples.iter().all(|s| p.action(&s.features) == s.label));
        assert!(hinge_loss(&p, &samples, 1.0) < 1e-9);
    }

    #[test]
    fn all_zero_returns_abort() {
        // a one-step horizon from sampled starts almost never reaches the goal
        let learner = fobs(ObsMode::Full);
        let cfg = RolloutConfig {
            states_per_iter: 50,
            horizon: 1,
            ..Default::default()
        };
        match rcpi_iteration(&Policy::Random, &learner, &cfg, 0) {
            Err(Error::DegenerateRollouts { sampled, .. }) => assert_eq!(sampled, 50),
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn iteration_is_deterministic() {
        let learner = fobs(ObsMode::Full);
        let cfg = RolloutConfig {
            states_per_iter: 200,
            ..Default::default()
        };
        let a = rcpi_iteration(&Policy::Random, &learner, &cfg, 17).unwrap();
        let b = rcpi_iteration(&Policy::Random, &learner, &cfg, 17).unwrap();
        assert_eq!(a, b);
    }
}
