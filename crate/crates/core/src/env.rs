//! Deterministic mountain car with a randomized warm-up start.
//!
//! The physics follow the classic formulation: an underpowered car in a
//! valley must rock back and forth to reach the goal at `x >= 0.5`.
//! Episodes start from a uniformly drawn state followed by five random
//! actions; those five steps are kept so that learners can fit an initial
//! latent state on them.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};

pub const MIN_POSITION: f64 = -1.2;
pub const MAX_POSITION: f64 = 0.6;
pub const MAX_SPEED: f64 = 0.07;
pub const GOAL_POSITION: f64 = 0.5;
pub const FORCE: f64 = 0.001;
pub const GRAVITY: f64 = 0.0025;

/// Number of random steps that generate an episode's first state.
pub const WARMUP_STEPS: usize = 5;
/// Episode length cap used throughout the experiments.
pub const DEFAULT_T_MAX: usize = 100;
const MAX_RESAMPLES: usize = 1000;

/// Hidden ground-truth state. Never handed to a learner in PO mode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CarState {
    pub x: f64,
    pub v: f64,
}

impl CarState {
    pub fn new(x: f64, v: f64) -> Self {
        CarState { x, v }
    }

    pub fn is_valid(&self) -> bool {
        (MIN_POSITION..=MAX_POSITION).contains(&self.x) && (-MAX_SPEED..=MAX_SPEED).contains(&self.v)
    }

    pub fn at_goal(&self) -> bool {
        self.x >= GOAL_POSITION
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Reverse,
    Neutral,
    Forward,
}

impl Action {
    pub const COUNT: usize = 3;
    pub const ALL: [Action; 3] = [Action::Reverse, Action::Neutral, Action::Forward];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn thrust(self) -> f64 {
        match self {
            Action::Reverse => -1.0,
            Action::Neutral => 0.0,
            Action::Forward => 1.0,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Action {
        Action::ALL[rng.gen_range(0..Action::COUNT)]
    }
}

/// Full observation (position and speed) or partial observation (position only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObsMode {
    Full,
    Partial,
}

impl ObsMode {
    pub fn dim(self) -> usize {
        match self {
            ObsMode::Full => 2,
            ObsMode::Partial => 1,
        }
    }
}

impl fmt::Display for ObsMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObsMode::Full => "FO",
            ObsMode::Partial => "PO",
        })
    }
}

impl std::str::FromStr for ObsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FO" | "FULL" => Ok(ObsMode::Full),
            "PO" | "PARTIAL" => Ok(ObsMode::Partial),
            _ => Err(Error::Config(format!("unknown observation mode `{s}` (expected FO or PO)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Observation/action sequence. Observations are stored row-major, `m` values per step.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    m: usize,
    obs: Vec<f64>,
    actions: Vec<Action>,
    pub success: bool,
}

impl Trajectory {
    pub fn new(m: usize) -> Self {
        Trajectory {
            m,
            obs: Vec::new(),
            actions: Vec::new(),
            success: false,
        }
    }

    pub fn from_parts(m: usize, obs: Vec<f64>, actions: Vec<Action>, success: bool) -> Result<Self> {
        if m == 0 || obs.len() != m * actions.len() {
            return Err(Error::Shape(format!(
                "{} observation values for {} steps of dimension {m}",
                obs.len(),
                actions.len()
            )));
        }
        Ok(Trajectory {
            m,
            obs,
            actions,
            success,
        })
    }

    pub fn push(&mut self, obs: &[f64], action: Action) {
        assert_eq!(obs.len(), self.m, "observation dimension");
        self.obs.extend_from_slice(obs);
        self.actions.push(action);
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.m
    }

    pub fn observation(&self, t: usize) -> &[f64] {
        &self.obs[t * self.m..(t + 1) * self.m]
    }

    pub fn observations(&self) -> &[f64] {
        &self.obs
    }

    pub fn observations_mut(&mut self) -> &mut [f64] {
        &mut self.obs
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn steps(&self) -> impl Iterator<Item = (&[f64], Action)> + '_ {
        self.obs.chunks_exact(self.m).zip(self.actions.iter().copied())
    }
}

/// First state of an episode and the random warm-up that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeStart {
    pub origin: CarState,
    pub state: CarState,
    pub warmup: Trajectory,
}

impl EpisodeStart {
    /// Re-applies the warm-up actions from the origin.
    pub fn replay(&self) -> CarState {
        self.warmup.actions().iter().fold(self.origin, |s, &a| step(s, a).0)
    }
}

/// One environment transition. Returns the successor and whether it reached the goal.
pub fn step(s: CarState, a: Action) -> (CarState, bool) {
    let v = (s.v + FORCE * a.thrust() - GRAVITY * (3.0 * s.x).cos()).clamp(-MAX_SPEED, MAX_SPEED);
    let x = (s.x + v).clamp(MIN_POSITION, MAX_POSITION);
    let v = if x == MIN_POSITION && v < 0.0 { 0.0 } else { v };
    let next = CarState { x, v };
    (next, next.at_goal())
}

pub fn observe(s: CarState, mode: ObsMode) -> Observation {
    match mode {
        ObsMode::Full => Observation(vec![s.x, s.v]),
        ObsMode::Partial => Observation(vec![s.x]),
    }
}

/// Draws a uniform state, applies five random actions and returns the result.
/// Starts whose warm-up touches the goal are discarded and redrawn.
pub fn sample_initial<R: Rng + ?Sized>(mode: ObsMode, rng: &mut R) -> Result<EpisodeStart> {
    for _ in 0..MAX_RESAMPLES {
        let origin = CarState {
            x: rng.gen_range(MIN_POSITION..=MAX_POSITION),
            v: rng.gen_range(-MAX_SPEED..=MAX_SPEED),
        };
        let mut warmup = Trajectory::new(mode.dim());
        let mut s = origin;
        let mut hit_goal = origin.at_goal();
        for _ in 0..WARMUP_STEPS {
            let a = Action::random(rng);
            warmup.push(observe(s, mode).as_slice(), a);
            let (next, terminal) = step(s, a);
            s = next;
            hit_goal |= terminal;
        }
        if !hit_goal {
            return Ok(EpisodeStart {
                origin,
                state: s,
                warmup,
            });
        }
    }
    Err(Error::Config(format!(
        "no goal-free warm-up found in {MAX_RESAMPLES} draws"
    )))
}

/// Trajectory together with the hidden states that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    pub trajectory: Trajectory,
    /// `states[t]` generated `trajectory.observation(t)`. Evaluation only.
    pub states: Vec<CarState>,
    pub final_state: CarState,
}

impl Rollout {
    pub fn success(&self) -> bool {
        self.trajectory.success
    }
}

/// Runs from `start` for at most `t_max` steps. `choose` receives the current
/// observation and step index and returns the action to apply.
pub fn run_from<F>(start: CarState, mode: ObsMode, t_max: usize, mut choose: F) -> Result<Rollout>
where
    F: FnMut(&Observation, usize) -> Result<Action>,
{
    if t_max == 0 {
        return Err(Error::Config("T_max must be at least 1".into()));
    }
    let mut trajectory = Trajectory::new(mode.dim());
    let mut states = Vec::with_capacity(t_max);
    let mut s = start;
    for t in 0..t_max {
        let o = observe(s, mode);
        let a = choose(&o, t)?;
        trajectory.push(o.as_slice(), a);
        states.push(s);
        let (next, terminal) = step(s, a);
        s = next;
        if terminal {
            trajectory.success = true;
            break;
        }
    }
    Ok(Rollout {
        trajectory,
        states,
        final_state: s,
    })
}

/// Something that picks actions from observations over one episode.
pub trait Agent {
    /// Called once with the warm-up and the first observation of the episode.
    fn begin(&mut self, warmup: &Trajectory, first: &Observation) -> Result<Action>;
    /// Called for every later step with the newly observed state.
    fn act(&mut self, obs: &Observation) -> Result<Action>;
}

pub fn run_episode<A: Agent + ?Sized>(
    start: &EpisodeStart,
    agent: &mut A,
    mode: ObsMode,
    t_max: usize,
) -> Result<Rollout> {
    run_from(start.state, mode, t_max, |o, t| {
        if t == 0 {
            agent.begin(&start.warmup, o)
        } else {
            agent.act(o)
        }
    })
}

/// Uniformly random behaviour, used for data collection and as RCPI's initial policy.
pub struct RandomAgent<R> {
    pub rng: R,
}

impl<R: Rng> Agent for RandomAgent<R> {
    fn begin(&mut self, _warmup: &Trajectory, _first: &Observation) -> Result<Action> {
        Ok(Action::random(&mut self.rng))
    }

    fn act(&mut self, _obs: &Observation) -> Result<Action> {
        Ok(Action::random(&mut self.rng))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub start: EpisodeStart,
    pub rollout: Rollout,
}

impl Episode {
    pub fn trajectory(&self) -> &Trajectory {
        &self.rollout.trajectory
    }
}

/// Collects `q` episodes under the uniform random policy.
pub fn collect_random<R: Rng + ?Sized>(
    q: usize,
    mode: ObsMode,
    t_max: usize,
    rng: &mut R,
) -> Result<Vec<Episode>> {
    if q == 0 {
        return Err(Error::Config("need at least one trajectory".into()));
    }
    (0..q)
        .map(|_| {
            let start = sample_initial(mode, rng)?;
            let rollout = run_from(start.state, mode, t_max, |_, _| Ok(Action::random(rng)))?;
            Ok(Episode { start, rollout })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn forward_from_rest() {
        let (s, terminal) = step(CarState::new(-0.5, 0.0), Action::Forward);
        let v = 0.001 - 0.0025 * (-1.5f64).cos();
        assert!((s.v - v).abs() < 1e-15);
        assert!((s.x - (-0.5 + v)).abs() < 1e-15);
        assert!((s.v - 0.000_823_2).abs() < 1e-7);
        assert!(!terminal);
    }

    #[test]
    fn neutral_from_rest() {
        let (s, terminal) = step(CarState::new(-0.5, 0.0), Action::Neutral);
        assert!((s.v + 0.000_176_8).abs() < 1e-7);
        assert!((s.x + 0.500_176_8).abs() < 1e-7);
        assert!(!terminal);
    }

    #[test]
    fn goal_fires() {
        for a in Action::ALL {
            assert!(step(CarState::new(0.55, 0.01), a).1);
        }
    }

    #[test]
    fn left_wall_resets_speed() {
        let (s, _) = step(CarState::new(-1.2, -0.07), Action::Reverse);
        assert_eq!(s, CarState::new(-1.2, 0.0));
    }

    #[test]
    fn observation_modes() {
        let s = CarState::new(-0.5, 0.02);
        assert_eq!(observe(s, ObsMode::Full).0, vec![-0.5, 0.02]);
        assert_eq!(observe(s, ObsMode::Partial).0, vec![-0.5]);
        assert_eq!(ObsMode::Full.dim(), 2);
        assert_eq!(ObsMode::Partial.dim(), 1);
    }

    #[test]
    fn action_index_roundtrip() {
        for (i, a) in Action::ALL.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i), Some(*a));
        }
        assert_eq!(Action::from_index(3), None);
    }

    #[test]
    fn sample_initial_is_deterministic_and_replays() {
        for s in 0..50 {
            let a = sample_initial(ObsMode::Partial, &mut seed::rng(s)).unwrap();
            let b = sample_initial(ObsMode::Partial, &mut seed::rng(s)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.warmup.len(), WARMUP_STEPS);
            assert!(a.origin.is_valid());
            assert_eq!(a.replay(), a.state);
            assert!(!a.state.at_goal());
        }
    }

    #[test]
    fn neutral_cannot_escape_valley() {
        let r = run_from(CarState::new(-0.5, 0.0), ObsMode::Full, 100, |_, _| Ok(Action::Neutral)).unwrap();
        assert!(!r.success());
        assert_eq!(r.trajectory.len(), 100);
    }

    #[test]
    fn zero_horizon_rejected() {
        assert!(run_from(CarState::new(-0.5, 0.0), ObsMode::Full, 0, |_, _| Ok(Action::Neutral)).is_err());
        assert!(collect_random(0, ObsMode::Full, 100, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn single_step_episode_never_succeeds_from_sampled_start() {
        for s in 0..200 {
            let start = sample_initial(ObsMode::Full, &mut seed::rng(s)).unwrap();
            let mut agent = RandomAgent { rng: seed::rng(s + 1000) };
            let r = run_episode(&start, &mut agent, ObsMode::Full, 1).unwrap();
            assert_eq!(r.trajectory.len(), 1);
            // a one-step episode can only succeed if the start is within one step of the goal
            if r.success() {
                assert!(start.state.x + start.state.v + 0.002 >= GOAL_POSITION - 0.01);
            }
        }
    }

    #[test]
    fn collection_respects_cap_and_seed() {
        let a = collect_random(20, ObsMode::Partial, 100, &mut seed::rng(9)).unwrap();
        let b = collect_random(20, ObsMode::Partial, 100, &mut seed::rng(9)).unwrap();
        assert_eq!(a, b);
        for e in &a {
            assert!(e.trajectory().len() <= 100 && !e.trajectory().is_empty());
            assert_eq!(e.rollout.states.len(), e.trajectory().len());
            assert_eq!(e.trajectory().obs_dim(), 1);
        }
    }
}
