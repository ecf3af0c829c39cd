//! Cluster the benchmark's historical pickups into stations and compare
//! station counts by within-cluster spread.
//!
//! cargo run --release --example partition_stations -- [seed]

use amod::network::{kmeans_partition, GeoPoint};
use amod::sim::benchmark_scenario;

fn main() -> amod::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = benchmark_scenario(seed)?;
    let origins: Vec<GeoPoint> = scenario.history.iter().map(|r| r.origin).collect();
    println!("{} pickups", origins.len());
    println!("stations  rms spread (m)  iterations");
    for k in [4, 6, 8, 10, 12, 16] {
        let p = kmeans_partition(&origins, k, seed, 100)?;
        println!("{k:>8}  {:>14.0}  {:>10}", (p.sse / origins.len() as f64).sqrt(), p.iterations);
    }

    let p = kmeans_partition(&origins, 10, seed, 100)?;
    let mut sizes = vec![0usize; 10];
    for &a in &p.assignment {
        sizes[a] += 1;
    }
    println!("\nten stations:");
    for (c, n) in p.centroids.iter().zip(&sizes) {
        println!("  ({:>7.0}, {:>7.0})  {n} pickups", c.x, c.y);
    }
    Ok(())
}
