//! Inference guarantees: descent of the warm-up fit, FDyn blindness to
//! observations, FPar mixing rate and strategy determinism.

use latent_pomdp::env::{self, Action, ObsMode, Observation};
use latent_pomdp::inference::{infer_initial, ExactConfig, History, InferenceStrategy, StrategyKind};
use latent_pomdp::latent_model::{loss, LatentTrajectory, Model};
use latent_pomdp::seed;

fn small_model(s: u64, n: usize) -> Model {
    Model::random(n, 1, 0.01, 0.8, &mut seed::rng(s))
}

/// Runs one PO episode of `len` steps with fixed random actions and returns
/// every representation; `corrupt` replaces observations after the first.
fn run(
    model: &Model,
    strategy: InferenceStrategy,
    start: &env::EpisodeStart,
    actions: &[Action],
    corrupt: Option<f64>,
    seed: u64,
) -> (Vec<Vec<f64>>, (usize, usize)) {
    let mut h = History::new(strategy, Some(model), seed).unwrap();
    let mut s = start.state;
    let mut out = vec![h.begin(&start.warmup, &env::observe(s, ObsMode::Partial)).unwrap().to_vec()];
    for &a in actions {
        s = env::step(s, a).0;
        let o = match corrupt {
            Some(v) => Observation(vec![v]),
            None => env::observe(s, ObsMode::Partial),
        };
        out.push(h.advance(a, Some(&o)).unwrap().to_vec());
    }
    (out, h.exact_fraction())
}

#[test]
fn initial_inference_descends_on_the_warmup() {
    for s in 0..100u64 {
        let model = small_model(s, 3);
        let start = env::sample_initial(ObsMode::Partial, &mut seed::rng(s)).unwrap();
        let cfg = ExactConfig::default();
        let init = LatentTrajectory::random(3, env::WARMUP_STEPS, cfg.init_scale, &mut seed::rng(s + 7));
        let fitted = infer_initial(&model, &start.warmup, &cfg, &mut seed::rng(s + 7));
        assert_eq!(fitted.len(), env::WARMUP_STEPS);
        assert!(loss(&model, (&start.warmup).into(), &fitted) <= loss(&model, (&start.warmup).into(), &init));
    }
}

#[test]
fn fdyn_ignores_every_observation_after_the_warmup() {
    for s in 0..20u64 {
        let model = small_model(s, 4);
        let mut rng = seed::rng(s);
        let start = env::sample_initial(ObsMode::Partial, &mut rng).unwrap();
        let actions: Vec<Action> = (0..60).map(|_| Action::random(&mut rng)).collect();
        let strategy = InferenceStrategy::new(StrategyKind::FDyn);
        let (clean, _) = run(&model, strategy, &start, &actions, None, 3);
        for garbage in [1e9, -7.0, f64::NAN] {
            let (dirty, _) = run(&model, strategy, &start, &actions, Some(garbage), 3);
            assert_eq!(clean, dirty, "seed {s}, corrupted with {garbage}");
        }
        // an absent observation is accepted as well
        let mut h = History::new(strategy, Some(&model), 3).unwrap();
        h.begin(&start.warmup, &env::observe(start.state, ObsMode::Partial)).unwrap();
        for (t, &a) in actions.iter().enumerate() {
            assert_eq!(h.advance(a, None).unwrap(), &clean[t + 1][..]);
        }
    }
}

#[test]
fn fpar_mixes_at_the_configured_rate() {
    let model = small_model(1, 2);
    let mut strategy = InferenceStrategy::new(StrategyKind::FPar);
    strategy.exact.refine_steps = 1;
    let mut exact = 0;
    let mut total = 0;
    let mut rng = seed::rng(9);
    // 100 episodes of z_1 plus 100 steps
    for e in 0..100u64 {
        let start = env::sample_initial(ObsMode::Partial, &mut rng).unwrap();
        let actions: Vec<Action> = (0..100).map(|_| Action::random(&mut rng)).collect();
        let (_, (x, t)) = run(&model, strategy, &start, &actions, None, e);
        exact += x;
        total += t;
    }
    assert_eq!(total, 10_100);
    let fraction = exact as f64 / total as f64;
    assert!((fraction - 0.5).abs() <= 0.02, "exact fraction {fraction}");
}

#[test]
fn strategies_are_deterministic_given_their_seeds() {
    let model = small_model(4, 3);
    let mut rng = seed::rng(4);
    let start = env::sample_initial(ObsMode::Partial, &mut rng).unwrap();
    let actions: Vec<Action> = (0..25).map(|_| Action::random(&mut rng)).collect();
    for kind in [StrategyKind::FLat, StrategyKind::FDyn, StrategyKind::FPar] {
        let strategy = InferenceStrategy::new(kind);
        let a = run(&model, strategy, &start, &actions, None, 11);
        let b = run(&model, strategy, &start, &actions, None, 11);
        assert_eq!(a, b, "{kind}");
    }
    // a different mixing seed changes which FPar steps are exact
    let strategy = InferenceStrategy::new(StrategyKind::FPar);
    let draws: Vec<_> = (0..8).map(|s| run(&model, strategy, &start, &actions, None, s).0).collect();
    assert!(draws.iter().any(|d| *d != draws[0]));
}

#[test]
fn fobs_representation_is_the_observation() {
    let mut h = History::new(InferenceStrategy::new(StrategyKind::FObs), None, 0).unwrap();
    let start = env::sample_initial(ObsMode::Full, &mut seed::rng(2)).unwrap();
    let first = env::observe(start.state, ObsMode::Full);
    assert_eq!(h.begin(&start.warmup, &first).unwrap(), first.as_slice());
    let (next, _) = env::step(start.state, Action::Forward);
    let o = env::observe(next, ObsMode::Full);
    assert_eq!(h.advance(Action::Forward, Some(&o)).unwrap(), o.as_slice());
    assert_eq!(h.current().len(), ObsMode::Full.dim());
}
