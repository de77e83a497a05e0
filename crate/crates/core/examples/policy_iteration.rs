//! Learns a mountain-car policy with rollout classification policy iteration.
//!
//!     cargo run --release --example policy_iteration -- [fobs|flat|fdyn|fpar] [FO|PO]
//!
//! Latent strategies first fit a 5-dimensional model on random trajectories.

use latent_pomdp::env::{collect_random, ObsMode};
use latent_pomdp::inference::{InferenceStrategy, StrategyKind};
use latent_pomdp::rcpi::{evaluate, rcpi_train, Learner, Policy, RolloutConfig};
use latent_pomdp::seed;
use latent_pomdp::trainer::{fit, TrainConfig};

fn main() -> latent_pomdp::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: StrategyKind = args.next().as_deref().unwrap_or("fobs").parse()?;
    let mode: ObsMode = args.next().as_deref().unwrap_or("PO").parse()?;

    let model = if kind.needs_model() {
        let episodes = collect_random(200, mode, 100, &mut seed::rng(1))?;
        let data: Vec<_> = episodes.iter().map(|e| e.trajectory().clone()).collect();
        Some(fit(&data, &TrainConfig::default())?.model)
    } else {
        None
    };
    let learner = Learner {
        mode,
        strategy: InferenceStrategy::new(kind),
        model: model.as_ref(),
    };
    let cfg = RolloutConfig::default();
    let run = rcpi_train(&learner, &cfg, 2)?;
    for (i, v) in run.curve.iter().enumerate() {
        println!("iteration {:>2}: validation success {v:.3}", i + 1);
    }
    let test = evaluate(&Policy::Linear(run.policy), &learner, 1000, 100, 3)?;
    println!("{mode} {kind}: iteration {} kept, success on fresh episodes {test:.3}", run.chosen + 1);
    Ok(())
}
