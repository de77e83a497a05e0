//! Fits latent models of several sizes to random position-only trajectories
//! and reports how much speed information the fitted latents carry.
//!
//!     cargo run --release --example train_representation -- [epochs]

use latent_pomdp::env::{collect_random, ObsMode};
use latent_pomdp::harness::r_squared;
use latent_pomdp::seed;
use latent_pomdp::trainer::{fit, train_report, TrainConfig};

fn main() -> latent_pomdp::error::Result<()> {
    let epochs: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let episodes = collect_random(200, ObsMode::Partial, 100, &mut seed::rng(3))?;
    let data: Vec<_> = episodes.iter().map(|e| e.trajectory().clone()).collect();

    // hidden speed and position of every training step, for diagnostics only
    let v: Vec<f64> = episodes.iter().flat_map(|e| e.rollout.states.iter().map(|s| s.v)).collect();
    let x: Vec<Vec<f64>> = episodes.iter().flat_map(|e| e.rollout.states.iter().map(|s| vec![s.x])).collect();
    println!("speed from position alone: R^2 {:.3}", r_squared(&x, &v));

    for n in [2, 3, 5] {
        let cfg = TrainConfig {
            n,
            epochs,
            smooth_epochs: epochs * 9 / 10,
            ..Default::default()
        };
        let result = fit(&data, &cfg)?;
        let report = train_report(&result.loss_curve)?;
        let z: Vec<Vec<f64>> = result
            .latents
            .iter()
            .flat_map(|l| (0..l.len()).map(move |t| l.get(t).to_vec()))
            .collect();
        println!(
            "n = {n}: loss {:.2} -> {:.2}, speed from training latents: R^2 {:.3}",
            report.initial,
            report.final_loss,
            r_squared(&z, &v)
        );
    }
    Ok(())
}
