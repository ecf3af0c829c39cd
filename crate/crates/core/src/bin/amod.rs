use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use amod::forecast::save_models;
use amod::network::{kmeans_partition, GeoPoint, Projection};
use amod::optimizer::ControllerKind;
use amod::sim::{
    ingest_trips, load_scenario, metrics_csv, parse_values, report, run_simulation, sweep, table, timing_csv, train_forecasts,
    write_text, ReportFormat, ReportInput, RunConfig, Scenario, SweepAxis, TripFormat,
};
use amod::{Error, Result};

#[derive(Parser)]
#[command(name = "amod", version, about = "Mobility-on-demand fleet rebalancing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster trip origins into stations.
    Partition {
        /// Trip file, or a directory of cab traces.
        #[arg(long)]
        trips: PathBuf,
        #[arg(long, default_value = "csv")]
        format: TripFormat,
        #[arg(long, default_value_t = 10)]
        stations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Where to write the station list (TOML); stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the demand forecasts for a scenario and save them.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Training instant in scenario seconds; defaults to the start.
        #[arg(long)]
        at: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate one run and print its metrics.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Simulate one run per value of epsilon or fleet size.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. 0.2,0.35,0.5.
        #[arg(long)]
        values: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Render a saved metrics file.
    Report {
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
        /// Solver timing instead of the metric columns (csv only).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario TOML.
    #[arg(long)]
    scenario: PathBuf,
    /// Run configuration TOML.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    controller: Option<ControllerKind>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fleet: Option<usize>,
}

#[derive(Args)]
struct OutArgs {
    /// Metrics as JSON, readable by `report`.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    timing_csv: Option<PathBuf>,
}

#[derive(Serialize)]
struct StationsFile {
    stations: Vec<[f64; 2]>,
    projection: Projection,
    sse: f64,
}

impl RunArgs {
    fn load(&self) -> Result<(Scenario, RunConfig)> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::read(p)?,
            None => RunConfig::default(),
        };
        if let Some(c) = self.controller {
            cfg.controller = c;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        let mut scenario = load_scenario(&self.scenario)?;
        if let Some(f) = self.fleet {
            scenario = scenario.with_fleet(f);
        }
        Ok((scenario, cfg))
    }
}

impl OutArgs {
    fn write(&self, input: &ReportInput) -> Result<()> {
        if let Some(p) = &self.json {
            input.write(p)?;
        }
        if let Some(p) = &self.csv {
            write_text(p, &metrics_csv(input.runs()))?;
        }
        if let Some(p) = &self.timing_csv {
            write_text(p, &timing_csv(input.runs()))?;
        }
        Ok(())
    }
}

fn partition(trips: &Path, format: TripFormat, k: usize, seed: u64, out: Option<&Path>) -> Result<()> {
    let raw = ingest_trips(trips, format)?;
    let lonlat: Vec<(f64, f64)> = raw.iter().map(|t| t.origin).collect();
    let projection = Projection::about_mean(&lonlat).ok_or_else(|| Error::InvalidInput("no trip origins".into()))?;
    let points: Vec<GeoPoint> = lonlat.iter().map(|&(lon, lat)| projection.project(lon, lat)).collect();
    let p = kmeans_partition(&points, k, seed, 100)?;
    let file = StationsFile {
        stations: p.centroids.iter().map(|c| [c.x, c.y]).collect(),
        projection,
        sse: p.sse,
    };
    let text = toml::to_string(&file).map_err(|e| Error::InvalidInput(e.to_string()))?;
    match out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Partition {
            trips,
            format,
            stations,
            seed,
            out,
        } => partition(&trips, format, stations, seed, out.as_deref()),
        Command::Train { run, at, out } => {
            let (scenario, cfg) = run.load()?;
            let models = train_forecasts(&scenario, at.unwrap_or(scenario.start), &cfg.training())?;
            save_models(&models, &out)
        }
        Command::Simulate { run, out } => {
            let (scenario, cfg) = run.load()?;
            let m = run_simulation(&scenario, &cfg)?;
            print!("{}", table(std::slice::from_ref(&m)));
            out.write(&ReportInput::Run(m))
        }
        Command::Sweep { run, axis, values, out } => {
            let (scenario, cfg) = run.load()?;
            let result = sweep(axis, &parse_values(&values)?, &scenario, &cfg)?;
            print!("{}", table(&result.points));
            out.write(&ReportInput::Sweep(result))
        }
        Command::Report { input, format, timing } => {
            let input = ReportInput::read(&input)?;
            print!("{}", report(&input, format, timing));
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
