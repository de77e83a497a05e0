//! Collects random-action datasets in both observation modes and writes them
//! with their hidden-state sidecars.
//!
//!     cargo run --release --example collect_dataset -- [out-dir] [trajectories]

use std::path::PathBuf;

use latent_pomdp::env::{collect_random, ObsMode};
use latent_pomdp::{format, harness, seed};

fn main() -> latent_pomdp::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let out_dir = args.next().map_or_else(std::env::temp_dir, PathBuf::from);
    let q: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);

    for mode in [ObsMode::Full, ObsMode::Partial] {
        let episodes = collect_random(q, mode, 100, &mut seed::rng(7))?;
        let lengths: Vec<usize> = episodes.iter().map(|e| e.trajectory().len()).collect();
        let wins = episodes.iter().filter(|e| e.rollout.success()).count();
        let path = out_dir.join(format!("data_{}.txt", mode.to_string().to_lowercase()));
        format::write_dataset(&path, &harness::to_dataset(mode, 100, &episodes))?;
        let states: Vec<_> = episodes.iter().map(|e| e.rollout.states.clone()).collect();
        format::write_file(&path.with_extension("txt.states"), &format::states_to_string(&states))?;
        println!(
            "{mode}: {q} trajectories, {wins} reached the goal, mean length {:.1} -> {}",
            lengths.iter().sum::<usize>() as f64 / q as f64,
            path.display()
        );
    }
    Ok(())
}
