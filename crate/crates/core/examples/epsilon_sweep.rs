//! Sweep the violation probability of the chance-constrained controller on
//! the benchmark day.
//!
//! cargo run --release --example epsilon_sweep -- [seed] [values]

use amod::optimizer::ControllerKind;
use amod::sim::{benchmark_scenario, metrics_csv, parse_values, sweep, table, RunConfig, SweepAxis};

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let values = parse_values(&args.next().unwrap_or_else(|| "0.2,0.35,0.5,0.65,0.8".into()))?;
    let scenario = benchmark_scenario(seed)?;
    let cfg = RunConfig {
        controller: ControllerKind::Ccmpc,
        seed,
        ..RunConfig::default()
    };
    let result = sweep(SweepAxis::Epsilon, &values, &scenario, &cfg)?;
    print!("{}", table(&result.points));
    println!();
    print!("{}", metrics_csv(&result.points));
    Ok(())
}
