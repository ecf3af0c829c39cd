use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::ingest::{ingest_trips, project_trips, TripFormat};
use super::synth::benchmark_scenario;
use crate::error::{Error, Result};
use crate::network::{kmeans_partition, BoundingBox, GeoPoint, Projection, StationNetwork};

/// One customer request in planar meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Request {
    /// Seconds on the scenario clock.
    pub time: f64,
    pub origin: GeoPoint,
    pub destination: GeoPoint,
}

/// Everything a simulation run needs apart from the controller settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub stations: Vec<GeoPoint>,
    /// Requests before `start`, used for training and initial placement.
    pub history: Vec<Request>,
    /// Requests in `[start, end)`, sorted by time.
    pub requests: Vec<Request>,
    pub history_start: f64,
    pub start: f64,
    pub end: f64,
    pub fleet_size: usize,
    /// Vehicles per station at `start`; proportional to request frequency when unset.
    pub initial_placement: Option<Vec<u32>>,
    pub speed_mps: f64,
    /// Operating area; every origin and destination lies inside it.
    pub area: BoundingBox,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.stations.is_empty() {
            return Err(Error::invalid("scenario has no stations"));
        }
        if !(self.start < self.end) || !self.start.is_finite() || !self.end.is_finite() {
            return Err(Error::invalid(format!("bad simulation window [{}, {})", self.start, self.end)));
        }
        if self.history_start > self.start {
            return Err(Error::invalid("history starts after the simulation"));
        }
        if !(self.speed_mps > 0.0 && self.speed_mps.is_finite()) {
            return Err(Error::invalid(format!("speed must be positive, got {}", self.speed_mps)));
        }
        if self.fleet_size == 0 {
            return Err(Error::invalid("fleet size must be positive"));
        }
        if let Some(p) = &self.initial_placement {
            if p.len() != self.stations.len() || p.iter().map(|&c| c as usize).sum::<usize>() != self.fleet_size {
                return Err(Error::invalid("initial placement must cover every station and sum to the fleet size"));
            }
        }
        let check = |r: &Request, lo: f64, hi: f64, what: &str| -> Result<()> {
            if !(r.time >= lo && r.time < hi) {
                return Err(Error::invalid(format!("{what} request at {} lies outside [{lo}, {hi})", r.time)));
            }
            if !self.area.contains(&r.origin) || !self.area.contains(&r.destination) {
                return Err(Error::invalid(format!("{what} request at {} leaves the operating area", r.time)));
            }
            Ok(())
        };
        for (set, lo, hi, what) in [
            (&self.history, self.history_start, self.start, "history"),
            (&self.requests, self.start, self.end, "simulated"),
        ] {
            for r in set.iter() {
                check(r, lo, hi, what)?;
            }
            if set.windows(2).any(|w| w[0].time > w[1].time) {
                return Err(Error::invalid(format!("{what} requests are not sorted by time")));
            }
        }
        Ok(())
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn network(&self, step_seconds: f64) -> Result<StationNetwork> {
        StationNetwork::from_centroids(self.stations.clone(), self.speed_mps, step_seconds)
    }

    /// Same scenario with another fleet size; an explicit placement is rescaled.
    pub fn with_fleet(&self, fleet_size: usize) -> Scenario {
        let mut s = self.clone();
        s.fleet_size = fleet_size;
        if let Some(p) = &self.initial_placement {
            let w: Vec<f64> = p.iter().map(|&c| c as f64).collect();
            s.initial_placement = Some(largest_remainder(&w, fleet_size));
        }
        s
    }

    /// Vehicles per station at `start`.
    ///
    /// Without an explicit placement the fleet is split in proportion to
    /// request origins per station (history, or the simulated requests when
    /// there is no history), rounding by largest remainder.
    pub fn placement(&self) -> Vec<u32> {
        if let Some(p) = &self.initial_placement {
            return p.clone();
        }
        let source = if self.history.is_empty() { &self.requests } else { &self.history };
        let mut counts = vec![0.0; self.n_stations()];
        for r in source {
            counts[crate::network::nearest(&self.stations, &r.origin)] += 1.0;
        }
        if counts.iter().all(|&c| c == 0.0) {
            counts.iter_mut().for_each(|c| *c = 1.0);
        }
        largest_remainder(&counts, self.fleet_size)
    }
}

/// Split `total` in proportion to `weights`; leftovers go to the largest
/// fractional parts, lower index first on ties.
pub fn largest_remainder(weights: &[f64], total: usize) -> Vec<u32> {
    let sum: f64 = weights.iter().sum();
    if weights.is_empty() {
        return Vec::new();
    }
    if !(sum > 0.0) {
        return largest_remainder(&vec![1.0; weights.len()], total);
    }
    let shares: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut out: Vec<u32> = shares.iter().map(|s| s.floor() as u32).collect();
    let assigned: usize = out.iter().map(|&c| c as usize).sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[i] += 1;
    }
    out
}

/// Where a scenario file gets its requests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RequestSource {
    /// The built-in synthetic benchmark.
    Synthetic { seed: u64 },
    /// A trip file; relative paths resolve against the scenario file.
    Trips {
        path: PathBuf,
        format: TripFormat,
        #[serde(default)]
        projection: Option<Projection>,
    },
}

/// Scenario file contents (TOML).
///
/// ```toml
/// fleet_size = 300
/// speed_mps = 8.0
/// start = 1212278400.0
/// end = 1212364800.0
/// history_start = 1211846400.0
/// stations = [[-1200.0, 340.5], [800.0, -95.0]]
///
/// [source]
/// kind = "trips"
/// path = "trips.csv"
/// format = "csv"
/// ```
///
/// With `kind = "synthetic"` and a `seed` every other key is optional and
/// overrides the benchmark's value. When `stations` is empty they are found by
/// k-means over history origins with `n_stations` clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub source: RequestSource,
    #[serde(default)]
    pub fleet_size: Option<usize>,
    #[serde(default)]
    pub speed_mps: Option<f64>,
    #[serde(default)]
    pub start: Option<f64>,
    #[serde(default)]
    pub end: Option<f64>,
    #[serde(default)]
    pub history_start: Option<f64>,
    #[serde(default)]
    pub stations: Vec<[f64; 2]>,
    #[serde(default)]
    pub n_stations: Option<usize>,
    #[serde(default)]
    pub initial_placement: Option<Vec<u32>>,
}

impl ScenarioFile {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::invalid(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Build the scenario; `base_dir` resolves relative trip paths.
    pub fn load(&self, base_dir: &Path) -> Result<Scenario> {
        let mut s = match &self.source {
            RequestSource::Synthetic { seed } => benchmark_scenario(*seed)?,
            RequestSource::Trips { path, format, projection } => {
                let path = if path.is_relative() { base_dir.join(path) } else { path.clone() };
                let trips = ingest_trips(&path, *format)?;
                let (requests, _) = project_trips(&trips, *projection);
                let start = self.start.unwrap_or(requests[0].time);
                let end = self.end.unwrap_or_else(|| requests.last().map_or(start, |r| r.time) + 1.0);
                let history_start = self.history_start.unwrap_or(start.min(requests[0].time));
                let all: Vec<Request> = requests.into_iter().filter(|r| r.time >= history_start && r.time < end).collect();
                let area = BoundingBox::around(all.iter().flat_map(|r| [&r.origin, &r.destination]), 1.0)
                    .ok_or_else(|| Error::invalid("trip file has no requests in the chosen window"))?;
                let (history, requests): (Vec<Request>, Vec<Request>) = all.into_iter().partition(|r| r.time < start);
                Scenario {
                    stations: Vec::new(),
                    history,
                    requests,
                    history_start,
                    start,
                    end,
                    fleet_size: 300,
                    initial_placement: None,
                    speed_mps: 8.0,
                    area,
                }
            }
        };
        if let Some(f) = self.fleet_size {
            s.fleet_size = f;
        }
        if let Some(v) = self.speed_mps {
            s.speed_mps = v;
        }
        if matches!(self.source, RequestSource::Synthetic { .. }) {
            // Narrowing the synthetic window only drops requests.
            if let Some(t) = self.start {
                s.start = t;
            }
            if let Some(t) = self.end {
                s.end = t;
            }
            let mut all = std::mem::take(&mut s.history);
            all.append(&mut s.requests);
            if let Some(t) = self.history_start {
                s.history_start = t;
            }
            let (history, requests): (Vec<Request>, Vec<Request>) = all
                .into_iter()
                .filter(|r| r.time >= s.history_start && r.time < s.end)
                .partition(|r| r.time < s.start);
            s.history = history;
            s.requests = requests;
        }
        if !self.stations.is_empty() {
            s.stations = self.stations.iter().map(|p| GeoPoint::new(p[0], p[1])).collect();
        } else if s.stations.is_empty() || self.n_stations.is_some_and(|k| k != s.stations.len()) {
            let origins: Vec<GeoPoint> = s.history.iter().chain(&s.requests).map(|r| r.origin).collect();
            s.stations = kmeans_partition(&origins, self.n_stations.unwrap_or(10), 0, 100)?.centroids;
        }
        s.initial_placement = self.initial_placement.clone();
        s.validate()?;
        Ok(s)
    }
}

/// Read and build a scenario from a TOML file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let file = ScenarioFile::read(path)?;
    file.load(path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_rounding() {
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(largest_remainder(&[0.5, 0.25, 0.25], 7), vec![3, 2, 2]);
        assert_eq!(largest_remainder(&[0.0, 0.0], 3), vec![2, 1]);
        assert_eq!(largest_remainder(&[3.0, 1.0], 0), vec![0, 0]);
    }

    #[test]
    fn placement_follows_history_origins() {
        let r = |x: f64| Request {
            time: 0.0,
            origin: GeoPoint::new(x, 0.0),
            destination: GeoPoint::new(x, 0.0),
        };
        let s = Scenario {
            stations: vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(100.0, 0.0)],
            history: vec![r(1.0), r(2.0), r(99.0)],
            requests: vec![],
            history_start: 0.0,
            start: 1.0,
            end: 2.0,
            fleet_size: 6,
            initial_placement: None,
            speed_mps: 5.0,
            area: BoundingBox {
                min_x: -1.0,
                min_y: -1.0,
                max_x: 101.0,
                max_y: 1.0,
            },
        };
        assert_eq!(s.placement(), vec![4, 2]);
        s.validate().unwrap();
        let mut bad = s.clone();
        bad.requests.push(Request { time: 5.0, ..r(1.0) });
        assert!(bad.validate().is_err());
    }
}
