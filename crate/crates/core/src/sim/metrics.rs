use serde::{Deserialize, Serialize};

use crate::optimizer::ControllerKind;

/// Which part of a vehicle's driving a distance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leg {
    /// Carrying a customer.
    Customer,
    /// Driving empty between stations.
    Rebalance,
    /// Driving empty to a customer.
    Pickup,
}

/// Distance driven by one vehicle, whole meters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DistanceLedger {
    pub customer_m: u64,
    pub rebalance_m: u64,
    pub pickup_m: u64,
    /// Accumulated independently of the split.
    pub total_m: u64,
}

impl DistanceLedger {
    pub fn record(&mut self, leg: Leg, meters: u64) {
        match leg {
            Leg::Customer => self.customer_m += meters,
            Leg::Rebalance => self.rebalance_m += meters,
            Leg::Pickup => self.pickup_m += meters,
        }
        self.total_m += meters;
    }

    pub fn is_balanced(&self) -> bool {
        self.total_m == self.customer_m + self.rebalance_m + self.pickup_m
    }

    pub fn merge(&mut self, other: &DistanceLedger) {
        self.customer_m += other.customer_m;
        self.rebalance_m += other.rebalance_m;
        self.pickup_m += other.pickup_m;
        self.total_m += other.total_m;
    }
}

/// Summary of per-solve wall-clock times.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveTimeStats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub max: f64,
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Middle value, or the average of the two middle values.
pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

impl SolveTimeStats {
    pub fn from_samples(xs: &[f64]) -> Self {
        let Some(mu) = mean(xs) else { return Self::default() };
        let var = xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64;
        Self {
            count: xs.len(),
            mean: mu,
            median: median(xs).unwrap_or(0.0),
            std: var.sqrt(),
            max: xs.iter().copied().fold(0.0, f64::max),
        }
    }
}

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub controller: ControllerKind,
    pub epsilon: f64,
    pub seed: u64,
    pub fleet_size: usize,
    pub total_requests: usize,
    /// Seconds from request to pickup for every served request, in request order.
    pub waits: Vec<f64>,
    /// Requests still waiting when the simulation ended.
    pub unserved: usize,
    pub vehicles: Vec<DistanceLedger>,
    pub mpc_steps: usize,
    pub rebalance_trips: u64,
    /// Wall-clock seconds per MPC solve. Not reproducible between runs.
    pub solve_seconds: Vec<f64>,
}

impl SimMetrics {
    pub fn served(&self) -> usize {
        self.waits.len()
    }

    pub fn served_fraction(&self) -> f64 {
        if self.total_requests == 0 {
            1.0
        } else {
            self.served() as f64 / self.total_requests as f64
        }
    }

    pub fn mean_wait(&self) -> Option<f64> {
        mean(&self.waits)
    }

    pub fn median_wait(&self) -> Option<f64> {
        median(&self.waits)
    }

    pub fn fleet_distance(&self) -> DistanceLedger {
        let mut total = DistanceLedger::default();
        for v in &self.vehicles {
            total.merge(v);
        }
        total
    }

    pub fn solve_stats(&self) -> SolveTimeStats {
        SolveTimeStats::from_samples(&self.solve_seconds)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wait_statistics() {
        assert_eq!(mean(&[10.0, 20.0, 30.0]), Some(20.0));
        assert_eq!(median(&[30.0, 10.0, 20.0]), Some(20.0));
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), Some(2.5));
        assert_eq!(mean(&[]), None);
        let s = SolveTimeStats::from_samples(&[1.0, 3.0]);
        assert_eq!((s.count, s.mean, s.median, s.std, s.max), (2, 2.0, 2.0, 1.0, 3.0));
    }

    #[test]
    fn ledger_identity() {
        let mut l = DistanceLedger::default();
        l.record(Leg::Customer, 1200);
        l.record(Leg::Pickup, 300);
        l.record(Leg::Rebalance, 45);
        assert!(l.is_balanced());
        assert_eq!(l.total_m, 1545);
    }
}
