//! Read a trip file (CSV or a directory of cab traces), project it to
//! meters and build stations from it.
//!
//! cargo run --release --example ingest_trips -- <path> [csv|cabtrace] [stations]
//!
//! CSV rows are `time,origin_lon,origin_lat,dest_lon,dest_lat`; a header line is skipped.

use std::path::PathBuf;

use amod::network::{kmeans_partition, GeoPoint};
use amod::sim::{ingest_trips, project_trips, TripFormat};

fn main() -> amod::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next().map(PathBuf::from) else {
        eprintln!("usage: ingest_trips <path> [csv|cabtrace] [stations]");
        std::process::exit(2);
    };
    let format: TripFormat = args.next().unwrap_or_else(|| "csv".into()).parse()?;
    let k: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(10);

    let trips = ingest_trips(&path, format)?;
    let (requests, projection) = project_trips(&trips, None);
    let (first, last) = (requests[0].time, requests[requests.len() - 1].time);
    println!("{} trips over {:.1} h, projected about ({:.4}, {:.4})", requests.len(), (last - first) / 3600.0, projection.lon0, projection.lat0);

    let origins: Vec<GeoPoint> = requests.iter().map(|r| r.origin).collect();
    let p = kmeans_partition(&origins, k.min(origins.len()), 0, 100)?;
    for c in &p.centroids {
        println!("  station at ({:.0}, {:.0}) m", c.x, c.y);
    }
    Ok(())
}
