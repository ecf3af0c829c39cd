//! Train per-flow GP forecasts on the benchmark history and compare the
//! busiest flows against what actually happened on the simulated day.
//!
//! cargo run --release --example train_forecast -- [seed]

use std::time::Instant;

use amod::forecast::FlowModel;
use amod::network::nearest;
use amod::sim::{benchmark_scenario, train_forecasts, RunConfig};

fn main() -> amod::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = benchmark_scenario(seed)?;
    let n = scenario.n_stations();
    let clock = Instant::now();
    let models = train_forecasts(&scenario, scenario.start, &RunConfig::default().training())?;
    println!("trained {} flows in {:.1} s", n * (n - 1), clock.elapsed().as_secs_f64());

    let mut counts = vec![[0u32; 24]; n * n];
    for r in &scenario.requests {
        let (o, d) = (nearest(&scenario.stations, &r.origin), nearest(&scenario.stations, &r.destination));
        let hour = ((r.time - scenario.start) / 3600.0) as usize;
        counts[o * n + d][hour.min(23)] += 1;
    }
    let mut busiest: Vec<usize> = (0..n * n).filter(|f| f / n != f % n).collect();
    busiest.sort_by_key(|&f| std::cmp::Reverse(counts[f].iter().sum::<u32>()));

    for &f in busiest.iter().take(4) {
        let (i, j) = (f / n, f % n);
        if let FlowModel::Gp(gp) = models.model(i, j) {
            println!("flow {i} -> {j}: {} (noise {:.3}, lml {:.1})", gp.kernel.kernel, gp.noise_variance, gp.lml);
        }
        println!("  hour  actual   mean    std");
        let tensor = models.horizon(scenario.start, 3600.0, 24);
        for h in 0..24 {
            let p = tensor.get(i, j, h + 1);
            println!("  {h:>4}  {:>6}  {:>5.1}  {:>5.1}", counts[f][h], p.mean, p.std);
        }
    }
    Ok(())
}
