//! Fits a 2-dimensional model on position-only data and writes the latents a
//! filtering agent would see next to the true position and speed, ready to
//! plot as a speed-coloured scatter.
//!
//!     cargo run --release --example export_latent -- [out.csv]

use std::path::PathBuf;

use latent_pomdp::env::{CarState, ObsMode};
use latent_pomdp::harness::{self, Config};
use latent_pomdp::inference::StrategyKind;
use latent_pomdp::format;

fn main() -> latent_pomdp::error::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map_or_else(|| std::env::temp_dir().join("latent_n2.csv"), PathBuf::from);
    let cfg = Config::default();
    let episodes = harness::collect(&cfg, ObsMode::Partial, 0)?;
    let data = harness::to_dataset(ObsMode::Partial, cfg.t_max, &episodes);
    let states: Vec<Vec<CarState>> = episodes.iter().map(|e| e.rollout.states.clone()).collect();
    let model = harness::train_model(&cfg, &data, 2, 0)?.model;
    let strategy = cfg.strategy(StrategyKind::FLat);

    format::write_file(&out, &harness::export_latent(&model, &data, &states, strategy, 1)?)?;
    let sep = harness::speed_separation(&harness::latent_rows(&model, &data, &states, strategy, 1)?);
    println!(
        "speed R^2 from (z1, z2): {:.3}; from position alone: {:.3}",
        sep.latent_r2, sep.position_r2
    );
    println!("rows -> {}", out.display());
    Ok(())
}
