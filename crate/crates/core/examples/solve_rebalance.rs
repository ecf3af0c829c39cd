//! Build and solve one chance-constrained rebalancing problem on a 10-station grid.
//!
//! cargo run --release --example solve_rebalance -- [seed] [epsilon]

use amod::forecast::{Forecast, ForecastTensor};
use amod::network::{FleetState, GeoPoint, InTransit, OutstandingDemand, Purpose, StationNetwork};
use amod::optimizer::{build_problem, solve_ilp, CostWeights, DemandInput, DemandMode, QuantileRows, SolverConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let epsilon: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.35);
    let (n, horizon) = (10, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let centroids = (0..n)
        .map(|_| GeoPoint::new(rng.gen_range(0.0..10_000.0), rng.gen_range(0.0..10_000.0)))
        .collect();
    let net = StationNetwork::from_centroids(centroids, 8.0, 900.0)?;

    let mut idle = vec![0u32; n];
    let mut fleet = FleetState::default();
    for _ in 0..300 {
        let s = rng.gen_range(0..n);
        if rng.gen_bool(0.3) {
            idle[s] += 1;
        } else {
            fleet.in_transit.push(InTransit {
                destination: s,
                arrival_step: rng.gen_range(1..=3),
                purpose: Purpose::Customer,
            });
        }
    }
    fleet.idle = idle;

    let hot = rng.gen_range(0..n);
    let mut forecast = ForecastTensor::new(n, horizon + 1);
    let mut outstanding = OutstandingDemand::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let base = if i == hot { 3.0 } else { 0.8 };
            for k in 0..=horizon {
                let mean = base * rng.gen_range(0.5..1.5);
                forecast.set(i, j, k, Forecast { mean, std: mean.sqrt() });
            }
            outstanding.waiting[(i, j)] = rng.gen_range(0..2);
        }
    }

    let demand = DemandInput {
        mode: DemandMode::Quantile {
            forecast,
            epsilon,
            rows: QuantileRows::Equality,
        },
        outstanding,
    };
    let weights = CostWeights::default_for(&net, horizon);
    let problem = build_problem(&fleet, &net, &demand, &weights, horizon)?;
    println!("{} variables, {} rows", problem.n_vars(), problem.rows.len());

    let plan = solve_ilp(&problem, &SolverConfig::default())?;
    println!(
        "status {:?}, objective {:.3}, {} nodes, {} LP iterations, {} cold starts, root integral {}, {:.3} s",
        plan.status,
        plan.objective,
        plan.stats.nodes,
        plan.stats.lp_iterations,
        plan.stats.cold_starts,
        plan.stats.root_integral,
        plan.stats.seconds
    );
    let moves = plan.first_step();
    for i in 0..n {
        for j in 0..n {
            if i != j && moves[(i, j)] > 0 {
                println!("  rebalance {} vehicle(s) {i} -> {j}", moves[(i, j)]);
            }
        }
    }
    Ok(())
}
