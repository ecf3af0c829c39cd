//! Fleet simulation, scenarios and reporting.

mod config;
mod engine;
mod ingest;
mod metrics;
mod report;
mod scenario;
mod sweep;
mod synth;

pub use config::RunConfig;
pub use engine::{
    run_simulation, run_simulation_with, train_forecasts, ControlContext, ForecastCache, NoObserver, SimObserver, TickAudit,
};
pub use ingest::{ingest_trips, parse_cabtrace, parse_generic_csv, project_trips, RawTrip, TripFormat};
pub use metrics::{mean, median, DistanceLedger, Leg, SimMetrics, SolveTimeStats};
pub use report::{metrics_csv, report, table, timing_csv, to_json, write_text, ReportFormat, ReportInput, METRIC_COLUMNS, TIMING_COLUMNS};
pub use scenario::{largest_remainder, load_scenario, Request, RequestSource, Scenario, ScenarioFile};
pub use sweep::{parse_values, sweep, sweep_with, SweepAxis, SweepResult};
pub use synth::{benchmark_scenario, benchmark_spec, synth_demand, DailyProfile, FlowSpec, RateFunction, SynthSpec, Zone, BENCHMARK_HOTSPOTS};
