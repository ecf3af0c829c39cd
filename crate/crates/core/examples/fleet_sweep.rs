//! Mean wait against fleet size for one controller.
//!
//! cargo run --release --example fleet_sweep -- [controller] [sizes] [seed]

use amod::optimizer::ControllerKind;
use amod::sim::{benchmark_scenario, parse_values, sweep, RunConfig, SweepAxis};

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let controller: ControllerKind = args.next().unwrap_or_else(|| "gbm".into()).parse()?;
    let sizes = parse_values(&args.next().unwrap_or_else(|| "200,250,300,350,400".into()))?;
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = benchmark_scenario(seed)?;
    let cfg = RunConfig {
        controller,
        seed,
        ..RunConfig::default()
    };
    let result = sweep(SweepAxis::Fleet, &sizes, &scenario, &cfg)?;
    println!("fleet  mean wait (s)  served");
    for (size, m) in result.values.iter().zip(&result.points) {
        let wait = m.mean_wait().map_or("-".into(), |w| format!("{w:.1}"));
        println!("{size:>5}  {wait:>13}  {:.3}", m.served_fraction());
    }
    Ok(())
}
