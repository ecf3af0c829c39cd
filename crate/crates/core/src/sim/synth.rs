//! Synthetic request streams from inhomogeneous Poisson flows.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use super::scenario::{Request, Scenario};
use crate::error::{Error, Result};
use crate::network::{kmeans_partition, BoundingBox, GeoPoint};

const DAY: f64 = 86_400.0;

/// Piecewise-constant rate over a day, repeated every day.
///
/// `segments` holds `(start_hour, requests_per_hour)` sorted by start hour;
/// the first segment starts at hour 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyProfile {
    pub segments: Vec<(f64, f64)>,
}

impl DailyProfile {
    pub fn constant(rate: f64) -> Self {
        Self {
            segments: vec![(0.0, rate)],
        }
    }

    fn validate(&self) -> Result<()> {
        match self.segments.first() {
            Some(&(h, _)) if h == 0.0 => {}
            _ => return Err(Error::invalid("daily profile must start at hour 0")),
        }
        if self.segments.windows(2).any(|w| !(w[0].0 < w[1].0)) || self.segments.iter().any(|s| s.0 >= 24.0) {
            return Err(Error::invalid("profile segments must have increasing start hours below 24"));
        }
        if self.segments.iter().any(|s| !(s.1 >= 0.0 && s.1.is_finite())) {
            return Err(Error::invalid("rates must be finite and non-negative"));
        }
        Ok(())
    }

    /// Requests per hour at `seconds` after midnight of day 0.
    pub fn rate(&self, seconds: f64) -> f64 {
        let hour = seconds.rem_euclid(DAY) / 3600.0;
        let idx = self.segments.partition_point(|s| s.0 <= hour);
        self.segments[idx.saturating_sub(1)].1
    }

    pub fn max_rate(&self) -> f64 {
        self.segments.iter().map(|s| s.1).fold(0.0, f64::max)
    }
}

/// A place requests start or end at: a Gaussian blob around a center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub center: GeoPoint,
    pub spread_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub origin: Zone,
    pub destination: Zone,
    pub profile: DailyProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub flows: Vec<FlowSpec>,
    pub days: f64,
    pub seed: u64,
    /// Sampled points are kept inside this box.
    pub area: BoundingBox,
}

/// Exact request rate of each flow, requests per hour.
#[derive(Debug, Clone, PartialEq)]
pub struct RateFunction {
    profiles: Vec<DailyProfile>,
}

impl RateFunction {
    pub fn n_flows(&self) -> usize {
        self.profiles.len()
    }

    pub fn rate(&self, flow: usize, seconds: f64) -> f64 {
        self.profiles[flow].rate(seconds)
    }

    pub fn total_rate(&self, seconds: f64) -> f64 {
        self.profiles.iter().map(|p| p.rate(seconds)).sum()
    }
}

fn sample_in(zone: &Zone, area: &BoundingBox, rng: &mut ChaCha8Rng) -> GeoPoint {
    let normal = Normal::new(0.0, zone.spread_m.max(0.0)).expect("finite spread");
    for _ in 0..20 {
        let p = GeoPoint::new(zone.center.x + normal.sample(rng), zone.center.y + normal.sample(rng));
        if area.contains(&p) {
            return p;
        }
    }
    GeoPoint::new(
        zone.center.x.clamp(area.min_x, area.max_x),
        zone.center.y.clamp(area.min_y, area.max_y),
    )
}

/// Sample each flow by thinning a homogeneous process at the flow's peak
/// rate. Flows use independent streams of one seeded generator, so adding a
/// flow leaves the others unchanged. Requests start at time 0.
pub fn synth_demand(spec: &SynthSpec) -> Result<(Vec<Request>, RateFunction)> {
    if !(spec.days >= 0.0 && spec.days.is_finite()) {
        return Err(Error::invalid("days must be finite and non-negative"));
    }
    let horizon = spec.days * DAY;
    let mut requests = Vec::new();
    for (f, flow) in spec.flows.iter().enumerate() {
        flow.profile.validate()?;
        let peak = flow.profile.max_rate();
        if peak == 0.0 {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(f as u64);
        let gap = Exp::new(peak / 3600.0).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut rng);
            if t >= horizon {
                break;
            }
            if rng.gen::<f64>() * peak < flow.profile.rate(t) {
                let origin = sample_in(&flow.origin, &spec.area, &mut rng);
                let destination = sample_in(&flow.destination, &spec.area, &mut rng);
                requests.push(Request { time: t, origin, destination });
            }
        }
    }
    requests.sort_by(|a, b| a.time.total_cmp(&b.time));
    let rates = RateFunction {
        profiles: spec.flows.iter().map(|f| f.profile.clone()).collect(),
    };
    Ok((requests, rates))
}

/// Hotspot centers of the benchmark city, meters.
pub const BENCHMARK_HOTSPOTS: [(f64, f64); 10] = [
    (1500.0, 1500.0),
    (4500.0, 1200.0),
    (8000.0, 1800.0),
    (2000.0, 4500.0),
    (5200.0, 4800.0),
    (8500.0, 5000.0),
    (1200.0, 8200.0),
    (4200.0, 7800.0),
    (7000.0, 8500.0),
    (9000.0, 9000.0),
];

/// The benchmark city: ten hotspots on a 10 km square, two commute corridors
/// (0 <-> 9 and 3 <-> 8) with morning and evening peaks, and background
/// traffic between every pair of hotspots. Five history days then one
/// simulated day.
pub fn benchmark_spec(seed: u64) -> SynthSpec {
    let zone = |h: usize| Zone {
        center: GeoPoint::new(BENCHMARK_HOTSPOTS[h].0, BENCHMARK_HOTSPOTS[h].1),
        spread_m: 600.0,
    };
    let background = DailyProfile {
        segments: vec![(0.0, 0.6), (6.0, 2.0), (10.0, 3.0), (16.0, 3.5), (21.0, 1.5)],
    };
    let morning = DailyProfile {
        segments: vec![(0.0, 4.0), (6.0, 60.0), (7.0, 150.0), (9.0, 60.0), (10.0, 8.0), (21.0, 4.0)],
    };
    let evening = DailyProfile {
        segments: vec![(0.0, 4.0), (7.0, 8.0), (16.0, 60.0), (17.0, 150.0), (19.0, 60.0), (20.0, 8.0), (22.0, 4.0)],
    };
    let mut flows = Vec::new();
    for (home, work) in [(0, 9), (3, 8)] {
        flows.push(FlowSpec {
            origin: zone(home),
            destination: zone(work),
            profile: morning.clone(),
        });
        flows.push(FlowSpec {
            origin: zone(work),
            destination: zone(home),
            profile: evening.clone(),
        });
    }
    for i in 0..BENCHMARK_HOTSPOTS.len() {
        for j in 0..BENCHMARK_HOTSPOTS.len() {
            if i != j {
                flows.push(FlowSpec {
                    origin: zone(i),
                    destination: zone(j),
                    profile: background.clone(),
                });
            }
        }
    }
    SynthSpec {
        flows,
        days: 6.0,
        seed,
        area: BoundingBox {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 10_000.0,
            max_y: 10_000.0,
        },
    }
}

/// Benchmark scenario: stations from k-means over history origins, 300
/// vehicles at 8 m/s, history days 0-4, simulated day 5.
pub fn benchmark_scenario(seed: u64) -> Result<Scenario> {
    let spec = benchmark_spec(seed);
    let (all, _) = synth_demand(&spec)?;
    let start = (spec.days - 1.0) * DAY;
    let (history, requests): (Vec<Request>, Vec<Request>) = all.into_iter().partition(|r| r.time < start);
    let origins: Vec<GeoPoint> = history.iter().map(|r| r.origin).collect();
    let stations = kmeans_partition(&origins, BENCHMARK_HOTSPOTS.len(), seed, 100)?.centroids;
    let s = Scenario {
        stations,
        history,
        requests,
        history_start: 0.0,
        start,
        end: spec.days * DAY,
        fleet_size: 300,
        initial_placement: None,
        speed_mps: 8.0,
        area: spec.area,
    };
    s.validate()?;
    Ok(s)
}
