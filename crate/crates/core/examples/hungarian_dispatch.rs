//! Match waiting requests to idle vehicles by pickup distance and compare
//! with a greedy nearest-vehicle assignment.
//!
//! cargo run --release --example hungarian_dispatch -- [requests] [vehicles] [seed]

use amod::dispatch::{hungarian, CostMatrix};
use amod::network::GeoPoint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let n_req: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(40);
    let n_veh: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || GeoPoint::new(rng.gen_range(0.0..3000.0), rng.gen_range(0.0..3000.0));
    let requests: Vec<GeoPoint> = (0..n_req).map(|_| point()).collect();
    let vehicles: Vec<GeoPoint> = (0..n_veh).map(|_| point()).collect();

    let cost = CostMatrix::euclidean(&requests, &vehicles);
    let optimal = hungarian(&cost);

    let mut taken = vec![false; n_veh];
    let mut greedy = 0.0;
    for r in 0..n_req {
        if let Some(v) = (0..n_veh).filter(|&v| !taken[v]).min_by(|&a, &b| cost.get(r, a).total_cmp(&cost.get(r, b))) {
            taken[v] = true;
            greedy += cost.get(r, v);
        }
    }

    println!("{n_req} requests, {n_veh} vehicles");
    println!("hungarian: {} matches, total pickup {:.0} m", optimal.pairs.len(), optimal.cost);
    println!("greedy:    total pickup {greedy:.0} m");
    for &(r, v) in optimal.pairs.iter().take(5) {
        println!("  request {r} <- vehicle {v} ({:.0} m)", cost.get(r, v));
    }
    Ok(())
}
