//! Runs the full result matrix: FObs under full and partial observation, then
//! FLat, FDyn and FPar for each latent size, averaged over seeded runs.
//!
//!     cargo run --release --example reproduce_table -- [--smoke] [runs]

use latent_pomdp::harness::{self, Config};

fn main() -> latent_pomdp::error::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = if args.iter().any(|a| a == "--smoke") {
        harness::smoke_config()
    } else {
        Config::default()
    };
    if let Some(runs) = args.iter().find_map(|a| a.parse().ok()) {
        cfg.runs = runs;
    }
    let rows = harness::reproduce_table(&cfg, &harness::table_rows(&cfg.latent_dims), 0, |line| eprintln!("{line}"))?;
    print!("{}", harness::format_table(&rows));
    Ok(())
}
