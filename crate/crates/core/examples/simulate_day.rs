//! Simulate one day of the synthetic benchmark with each controller.
//!
//! cargo run --release --example simulate_day -- [seed] [epsilon] [controllers]
//!
//! `controllers` is a comma list such as `oracle,ccmpc,gbm` (default: all four).

use std::time::Instant;

use amod::optimizer::ControllerKind;
use amod::sim::{benchmark_scenario, run_simulation_with, table, ForecastCache, NoObserver, RunConfig};

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let epsilon: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.35);
    let kinds: Vec<ControllerKind> = match args.next() {
        Some(list) => list.split(',').map(str::parse).collect::<amod::Result<_>>()?,
        None => ControllerKind::ALL.to_vec(),
    };

    let scenario = benchmark_scenario(seed)?;
    println!(
        "{} stations, {} vehicles, {} history requests, {} requests to serve",
        scenario.n_stations(),
        scenario.fleet_size,
        scenario.history.len(),
        scenario.requests.len()
    );
    let cache = ForecastCache::new();
    let mut runs = Vec::new();
    for kind in kinds {
        let cfg = RunConfig {
            controller: kind,
            epsilon,
            seed,
            ..RunConfig::default()
        };
        let clock = Instant::now();
        let m = run_simulation_with(&scenario, &cfg, &cache, &mut NoObserver)?;
        println!("{kind}: {:.1} s", clock.elapsed().as_secs_f64());
        runs.push(m);
    }
    print!("{}", table(&runs));
    Ok(())
}
