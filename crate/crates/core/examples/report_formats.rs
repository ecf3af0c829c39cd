//! Render one GBM benchmark run as a table, CSV and JSON, and round-trip
//! the JSON through the report reader.
//!
//! cargo run --release --example report_formats -- [seed]

use amod::optimizer::ControllerKind;
use amod::sim::{benchmark_scenario, report, run_simulation, ReportFormat, ReportInput, RunConfig};

fn main() -> amod::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = benchmark_scenario(seed)?;
    let cfg = RunConfig {
        controller: ControllerKind::Gbm,
        seed,
        ..RunConfig::default()
    };
    let input = ReportInput::Run(run_simulation(&scenario, &cfg)?);
    for format in [ReportFormat::Table, ReportFormat::Csv] {
        println!("{}", report(&input, format, false));
    }
    let dir = std::env::temp_dir().join("amod-report-example.json");
    input.write(&dir)?;
    let back = ReportInput::read(&dir)?;
    println!("json round trip equal: {}", back == input);
    Ok(())
}
