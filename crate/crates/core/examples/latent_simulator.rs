//! FDyn policy iteration with rollouts simulated in the learned latent space
//! instead of the real environment. Success inside the simulator is decided
//! by decoding positions; the final score uses the real environment.
//!
//!     cargo run --release --example latent_simulator

use latent_pomdp::env::{collect_random, ObsMode};
use latent_pomdp::inference::{InferenceStrategy, StrategyKind};
use latent_pomdp::rcpi::{evaluate, rcpi_train, Learner, Policy, RolloutConfig, RolloutSpace};
use latent_pomdp::seed;
use latent_pomdp::trainer::{fit, TrainConfig};

fn main() -> latent_pomdp::error::Result<()> {
    let episodes = collect_random(200, ObsMode::Partial, 100, &mut seed::rng(1))?;
    let data: Vec<_> = episodes.iter().map(|e| e.trajectory().clone()).collect();
    let model = fit(&data, &TrainConfig::default())?.model;
    let learner = Learner {
        mode: ObsMode::Partial,
        strategy: InferenceStrategy::new(StrategyKind::FDyn),
        model: Some(&model),
    };
    for space in [RolloutSpace::RealEnv, RolloutSpace::LatentSim] {
        let cfg = RolloutConfig {
            rollout_space: space,
            ..Default::default()
        };
        let run = rcpi_train(&learner, &cfg, 2)?;
        let test = evaluate(&Policy::Linear(run.policy), &learner, 1000, 100, 3)?;
        println!("FDyn with {space} rollouts: success {test:.3}");
    }
    Ok(())
}
