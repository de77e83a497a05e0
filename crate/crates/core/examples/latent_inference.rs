//! Runs one episode under the four inference strategies and shows what each
//! one hands to a policy, then checks that FDyn ignores observations.
//!
//!     cargo run --release --example latent_inference

use latent_pomdp::env::{self, collect_random, Action, ObsMode, Observation};
use latent_pomdp::inference::{History, InferenceStrategy, StrategyKind};
use latent_pomdp::seed;
use latent_pomdp::trainer::{fit, TrainConfig};

fn main() -> latent_pomdp::error::Result<()> {
    let episodes = collect_random(100, ObsMode::Partial, 100, &mut seed::rng(11))?;
    let data: Vec<_> = episodes.iter().map(|e| e.trajectory().clone()).collect();
    let model = fit(
        &data,
        &TrainConfig {
            n: 2,
            epochs: 600,
            smooth_epochs: 540,
            ..Default::default()
        },
    )?
    .model;

    let mut rng = seed::rng(5);
    let start = env::sample_initial(ObsMode::Partial, &mut rng)?;
    let actions: Vec<Action> = (0..30).map(|_| Action::random(&mut rng)).collect();

    for kind in [StrategyKind::FObs, StrategyKind::FLat, StrategyKind::FDyn, StrategyKind::FPar] {
        let mut history = History::new(InferenceStrategy::new(kind), Some(&model), 1)?;
        let mut s = start.state;
        history.begin(&start.warmup, &env::observe(s, ObsMode::Partial))?;
        for &a in &actions {
            s = env::step(s, a).0;
            history.advance(a, Some(&env::observe(s, ObsMode::Partial)))?;
        }
        let (exact, total) = history.exact_fraction();
        println!(
            "{kind:>4}: final representation {:?} (true state x {:.3} v {:.4}), exact steps {exact}/{total}",
            history.current(),
            s.x,
            s.v
        );
    }

    // FDyn after the warm-up: garbage observations change nothing
    let run = |corrupt: bool| -> latent_pomdp::error::Result<Vec<f64>> {
        let mut history = History::new(InferenceStrategy::new(StrategyKind::FDyn), Some(&model), 1)?;
        let mut s = start.state;
        history.begin(&start.warmup, &env::observe(s, ObsMode::Partial))?;
        for &a in &actions {
            s = env::step(s, a).0;
            let o = if corrupt { Observation(vec![1e6]) } else { env::observe(s, ObsMode::Partial) };
            history.advance(a, Some(&o))?;
        }
        Ok(history.current().to_vec())
    };
    println!("FDyn unchanged by corrupted observations: {}", run(false)? == run(true)?);
    Ok(())
}
