//! Integer program for one receding-horizon rebalancing decision.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::demand::{quantile_demand, DemandTensor};
use crate::error::{Error, Result};
use crate::forecast::ForecastTensor;
use crate::network::{FleetState, OutstandingDemand, StationNetwork};

/// Decision variable families, in index-map order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarKind {
    /// Empty vehicles sent from i to j. The diagonal means "stay one step".
    Rebalance,
    /// Vehicles carrying customers from i to j.
    Customer,
    /// Unserved requests carried over (imbalance slack).
    Slack,
    /// Outstanding requests scheduled for pickup.
    Pickup,
}

impl VarKind {
    pub const ALL: [VarKind; 4] = [VarKind::Rebalance, VarKind::Customer, VarKind::Slack, VarKind::Pickup];

    fn prefix(self) -> &'static str {
        match self {
            VarKind::Rebalance => "xr",
            VarKind::Customer => "xc",
            VarKind::Slack => "s",
            VarKind::Pickup => "w",
        }
    }
}

/// Dense index map over (kind, i, j, step) with step in `0..=horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarIndex {
    pub n: usize,
    pub horizon: usize,
}

impl VarIndex {
    pub fn steps(&self) -> usize {
        self.horizon + 1
    }

    pub fn len(&self) -> usize {
        4 * self.n * self.n * self.steps()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, kind: VarKind, i: usize, j: usize, k: usize) -> usize {
        let kind = kind as usize;
        ((kind * self.n + i) * self.n + j) * self.steps() + k
    }

    pub fn decode(&self, idx: usize) -> (VarKind, usize, usize, usize) {
        let k = idx % self.steps();
        let rest = idx / self.steps();
        let j = rest % self.n;
        let rest = rest / self.n;
        let i = rest % self.n;
        (VarKind::ALL[rest / self.n], i, j, k)
    }

    pub fn name(&self, idx: usize) -> String {
        let (kind, i, j, k) = self.decode(idx);
        format!("{}_{i}_{j}_{k}", kind.prefix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        })
    }
}

/// What a constraint row models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowKind {
    Imbalance { i: usize, j: usize, k: usize },
    Conservation { i: usize, k: usize },
    Outstanding { i: usize, j: usize },
    Generic(usize),
}

impl fmt::Display for RowKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RowKind::Imbalance { i, j, k } => write!(f, "imb_{i}_{j}_{k}"),
            RowKind::Conservation { i, k } => write!(f, "veh_{i}_{k}"),
            RowKind::Outstanding { i, j } => write!(f, "out_{i}_{j}"),
            RowKind::Generic(r) => write!(f, "r{r}"),
        }
    }
}

/// Sparse linear constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub kind: RowKind,
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Row {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v]).sum()
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Eq => (lhs - self.rhs).abs(),
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
        }
    }
}

/// Minimize `objective . x` subject to `rows`, `lower <= x <= upper`, with
/// integrality on flagged variables.
#[derive(Debug, Clone, PartialEq)]
pub struct IlpProblem {
    pub layout: Option<VarIndex>,
    pub objective: Vec<f64>,
    pub rows: Vec<Row>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub integer: Vec<bool>,
    /// Optional starting basis: one column per row, forming a feasible basis
    /// under the default bounds.
    pub basis_hint: Option<Vec<usize>>,
    /// Optional integer point known to be feasible; seeds the incumbent.
    pub start: Option<Vec<u32>>,
}

impl IlpProblem {
    /// Non-negative integer variables with no constraints yet.
    pub fn new(n_vars: usize) -> Self {
        Self {
            layout: None,
            objective: vec![0.0; n_vars],
            rows: Vec::new(),
            lower: vec![0.0; n_vars],
            upper: vec![f64::INFINITY; n_vars],
            integer: vec![true; n_vars],
            basis_hint: None,
            start: None,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_row(&mut self, kind: RowKind, coeffs: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        self.rows.push(Row { kind, coeffs, sense, rhs });
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let rows = self.rows.iter().map(|r| r.residual(x));
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| (l - v).max(v - u).max(0.0));
        rows.chain(bounds).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.lower.len() != n || self.upper.len() != n || self.integer.len() != n {
            return Err(Error::invalid("bound/integrality vectors do not match variable count"));
        }
        for (r, row) in self.rows.iter().enumerate() {
            if let Some(&(v, _)) = row.coeffs.iter().find(|(v, _)| *v >= n) {
                return Err(Error::invalid(format!("row {r} references undeclared variable {v}")));
            }
            if !row.rhs.is_finite() || row.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                return Err(Error::invalid(format!("row {r} has non-finite data")));
            }
        }
        if self.lower.iter().any(|&l| !l.is_finite()) {
            return Err(Error::invalid("lower bounds must be finite"));
        }
        if let Some(h) = &self.basis_hint {
            if h.len() != self.rows.len() || h.iter().any(|&c| c >= n) {
                return Err(Error::invalid("basis hint does not match the rows"));
            }
        }
        if self.start.as_ref().is_some_and(|x| x.len() != n) {
            return Err(Error::invalid("start point does not match the variable count"));
        }
        Ok(())
    }

    pub fn var_name(&self, idx: usize) -> String {
        match &self.layout {
            Some(l) => l.name(idx),
            None => format!("x{idx}"),
        }
    }
}

/// Per-step objective weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub n: usize,
    pub steps: usize,
    /// Rebalancing cost per vehicle, `[(i * n + j) * steps + k]`.
    pub rebalance: Vec<f64>,
    /// Cost per unserved request per step.
    pub imbalance: Vec<f64>,
    /// Cost of picking up an outstanding request at step k, `[(i * n + j) * steps + k]`.
    pub pickup: Vec<f64>,
}

/// Scalars from which default weights are derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightParams {
    /// Multiplier on the inter-station distance in km.
    pub rebalance_per_km: f64,
    pub imbalance_per_step: f64,
    /// Outstanding-pickup cost grows by this much per step of delay.
    pub pickup_delay_per_step: f64,
}

impl Default for WeightParams {
    fn default() -> Self {
        Self {
            rebalance_per_km: 1.0,
            imbalance_per_step: 10.0,
            pickup_delay_per_step: 0.1,
        }
    }
}

impl CostWeights {
    pub fn from_params(net: &StationNetwork, horizon: usize, p: &WeightParams) -> Self {
        let n = net.n_stations();
        let steps = horizon + 1;
        let mut rebalance = vec![0.0; n * n * steps];
        let mut pickup = vec![0.0; n * n * steps];
        for i in 0..n {
            for j in 0..n {
                for k in 0..steps {
                    let at = (i * n + j) * steps + k;
                    rebalance[at] = p.rebalance_per_km * net.travel_distance(i, j) / 1000.0;
                    pickup[at] = p.pickup_delay_per_step * k as f64;
                }
            }
        }
        Self {
            n,
            steps,
            rebalance,
            imbalance: vec![p.imbalance_per_step; steps],
            pickup,
        }
    }

    /// Distance in km for rebalancing, 10 per unserved request-step, 0.1 per step of pickup delay.
    pub fn default_for(net: &StationNetwork, horizon: usize) -> Self {
        Self::from_params(net, horizon, &WeightParams::default())
    }

    pub fn validate(&self) -> Result<()> {
        let len = self.n * self.n * self.steps;
        if self.rebalance.len() != len || self.pickup.len() != len || self.imbalance.len() != self.steps {
            return Err(Error::invalid("cost weight dimensions are inconsistent"));
        }
        if self.rebalance.iter().any(|&c| !(c >= 0.0)) {
            return Err(Error::invalid("rebalancing costs must be non-negative"));
        }
        if self.imbalance.iter().any(|&c| !(c > 0.0)) {
            return Err(Error::invalid("imbalance costs must be positive"));
        }
        for f in 0..self.n * self.n {
            let row = &self.pickup[f * self.steps..(f + 1) * self.steps];
            if row.iter().any(|&c| !(c >= 0.0)) || row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::invalid("pickup costs must be non-negative and non-decreasing in time"));
            }
        }
        Ok(())
    }

    fn at(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.steps + k
    }
}

/// How the quantile demand enters the imbalance rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileRows {
    /// Same row form as deterministic demand, with the quantile as demand.
    #[default]
    Equality,
    /// `xc + s - s_prev - w >= quantile`.
    Inequality,
}

/// Demand over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub enum DemandMode {
    Deterministic(DemandTensor),
    Quantile {
        forecast: ForecastTensor,
        epsilon: f64,
        rows: QuantileRows,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemandInput {
    pub mode: DemandMode,
    pub outstanding: OutstandingDemand,
}

/// Assemble the rebalancing program over `horizon` steps after the current one.
///
/// Rows, for every station pair (i, j) and step k = 0..=horizon:
/// imbalance `xc + s(k) - s(k-1) - w = demand(k)` (demand(0) = 0, the
/// current step sees outstanding requests only); vehicle conservation per
/// station and step, where a move i -> j started at k arrives at
/// `k + kappa_ij` and staying put takes one step; and `sum_k w = outstanding`.
pub fn build_problem(
    state: &FleetState,
    net: &StationNetwork,
    demand: &DemandInput,
    weights: &CostWeights,
    horizon: usize,
) -> Result<IlpProblem> {
    let n = net.n_stations();
    if horizon < 1 {
        return Err(Error::invalid("horizon must be at least one step"));
    }
    if state.idle.len() != n || demand.outstanding.waiting.dim() != n {
        return Err(Error::invalid("fleet or outstanding demand does not match the station count"));
    }
    if weights.n != n || weights.steps != horizon + 1 {
        return Err(Error::invalid("cost weights do not match the network and horizon"));
    }
    weights.validate()?;
    if let Some(v) = state.in_transit.iter().find(|v| v.destination >= n) {
        return Err(Error::invalid(format!("vehicle in transit to unknown station {}", v.destination)));
    }

    let (lambda, ge_rows) = match &demand.mode {
        DemandMode::Deterministic(t) => (t.clone(), false),
        DemandMode::Quantile { forecast, epsilon, rows } => {
            (quantile_demand(forecast, *epsilon)?, *rows == QuantileRows::Inequality)
        }
    };
    if lambda.n != n || lambda.steps < horizon + 1 {
        return Err(Error::invalid(format!(
            "demand tensor is {}x{}x{}, need {n}x{n}x{}",
            lambda.n,
            lambda.n,
            lambda.steps,
            horizon + 1
        )));
    }

    let layout = VarIndex { n, horizon };
    let steps = layout.steps();
    let mut p = IlpProblem::new(layout.len());
    p.layout = Some(layout);
    let mut hint = Vec::new();
    let v = |kind, i, j, k| layout.index(kind, i, j, k);

    for i in 0..n {
        for j in 0..n {
            for k in 0..steps {
                p.objective[v(VarKind::Rebalance, i, j, k)] = weights.rebalance[weights.at(i, j, k)];
                p.objective[v(VarKind::Slack, i, j, k)] = weights.imbalance[k];
                p.objective[v(VarKind::Pickup, i, j, k)] = weights.pickup[weights.at(i, j, k)];
            }
        }
    }

    for i in 0..n {
        for j in 0..n {
            for k in 0..steps {
                let mut coeffs = vec![
                    (v(VarKind::Customer, i, j, k), 1.0),
                    (v(VarKind::Slack, i, j, k), 1.0),
                    (v(VarKind::Pickup, i, j, k), -1.0),
                ];
                if k > 0 {
                    coeffs.push((v(VarKind::Slack, i, j, k - 1), -1.0));
                }
                let rhs = if k == 0 || i == j { 0.0 } else { lambda.get(i, j, k) as f64 };
                let sense = if ge_rows && k > 0 { Sense::Ge } else { Sense::Eq };
                p.add_row(RowKind::Imbalance { i, j, k }, coeffs, sense, rhs);
                hint.push(v(VarKind::Slack, i, j, k));
            }
        }
    }

    let phi = state.availability(horizon);
    for i in 0..n {
        for k in 0..steps {
            let mut coeffs = Vec::with_capacity(4 * n);
            for j in 0..n {
                coeffs.push((v(VarKind::Customer, i, j, k), 1.0));
                coeffs.push((v(VarKind::Rebalance, i, j, k), 1.0));
            }
            for j in 0..n {
                let delay = if i == j { 1 } else { net.kappa(j, i) };
                if k >= delay {
                    coeffs.push((v(VarKind::Customer, j, i, k - delay), -1.0));
                    coeffs.push((v(VarKind::Rebalance, j, i, k - delay), -1.0));
                }
            }
            p.add_row(RowKind::Conservation { i, k }, coeffs, Sense::Eq, phi[k][i] as f64);
            hint.push(v(VarKind::Rebalance, i, i, k));
        }
    }

    for i in 0..n {
        for j in 0..n {
            let coeffs = (0..steps).map(|k| (v(VarKind::Pickup, i, j, k), 1.0)).collect();
            p.add_row(
                RowKind::Outstanding { i, j },
                coeffs,
                Sense::Eq,
                demand.outstanding.waiting[(i, j)] as f64,
            );
            hint.push(v(VarKind::Pickup, i, j, 0));
        }
    }

    p.basis_hint = Some(hint);

    // Everyone stays put, nobody is picked up, slack takes all demand.
    let mut start = vec![0u32; layout.len()];
    let mut here: Vec<u32> = phi[0].clone();
    for k in 0..steps {
        for i in 0..n {
            start[v(VarKind::Rebalance, i, i, k)] = here[i];
        }
        if k + 1 < steps {
            for i in 0..n {
                here[i] += phi[k + 1][i];
            }
        }
    }
    for i in 0..n {
        for j in 0..n {
            let mut slack = demand.outstanding.waiting[(i, j)];
            start[v(VarKind::Pickup, i, j, 0)] = slack;
            for k in 0..steps {
                if k > 0 && i != j {
                    slack += lambda.get(i, j, k);
                }
                start[v(VarKind::Slack, i, j, k)] = slack;
            }
        }
    }
    p.start = Some(start);
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::GeoPoint;

    fn two_station_net() -> StationNetwork {
        StationNetwork::from_centroids(vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(3000.0, 0.0)], 10.0, 300.0).unwrap()
    }

    #[test]
    fn index_map_round_trips() {
        let l = VarIndex { n: 3, horizon: 4 };
        for idx in 0..l.len() {
            let (kind, i, j, k) = l.decode(idx);
            assert_eq!(l.index(kind, i, j, k), idx);
        }
        assert_eq!(l.name(l.index(VarKind::Slack, 2, 0, 3)), "s_2_0_3");
    }

    #[test]
    fn ten_stations_twelve_steps_has_5200_variables() {
        assert_eq!(VarIndex { n: 10, horizon: 12 }.len(), 5200);
    }

    #[test]
    fn row_counts_and_shapes() {
        let net = two_station_net();
        let demand = DemandInput {
            mode: DemandMode::Deterministic(DemandTensor::zeros(2, 3)),
            outstanding: OutstandingDemand::zeros(2),
        };
        let w = CostWeights::default_for(&net, 2);
        let p = build_problem(&FleetState::new(vec![1, 0]), &net, &demand, &w, 2).unwrap();
        assert_eq!(p.n_vars(), 4 * 4 * 3);
        assert_eq!(p.rows.len(), 4 * 3 + 2 * 3 + 4);
        p.validate().unwrap();
        assert!(p.rows.iter().all(|r| r.sense == Sense::Eq));
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let net = two_station_net();
        let demand = DemandInput {
            mode: DemandMode::Deterministic(DemandTensor::zeros(3, 3)),
            outstanding: OutstandingDemand::zeros(2),
        };
        let w = CostWeights::default_for(&net, 2);
        assert!(build_problem(&FleetState::new(vec![0, 0]), &net, &demand, &w, 2).is_err());
        let demand = DemandInput {
            mode: DemandMode::Deterministic(DemandTensor::zeros(2, 3)),
            outstanding: OutstandingDemand::zeros(2),
        };
        assert!(build_problem(&FleetState::new(vec![0, 0, 0]), &net, &demand, &w, 2).is_err());
        assert!(build_problem(&FleetState::new(vec![0, 0]), &net, &demand, &w, 0).is_err());
    }

    #[test]
    fn start_point_is_feasible() {
        let net = two_station_net();
        let mut lambda = DemandTensor::zeros(2, 4);
        lambda.set(0, 1, 2, 3);
        lambda.set(1, 0, 3, 1);
        let mut outstanding = OutstandingDemand::zeros(2);
        outstanding.waiting[(1, 0)] = 2;
        let mut state = FleetState::new(vec![2, 1]);
        state.in_transit.push(crate::network::InTransit {
            destination: 0,
            arrival_step: 2,
            purpose: crate::network::Purpose::Customer,
        });
        let demand = DemandInput {
            mode: DemandMode::Deterministic(lambda),
            outstanding,
        };
        let p = build_problem(&state, &net, &demand, &CostWeights::default_for(&net, 3), 3).unwrap();
        let x: Vec<f64> = p.start.as_ref().unwrap().iter().map(|&v| v as f64).collect();
        assert_eq!(p.max_residual(&x), 0.0);
    }

    #[test]
    fn default_weights() {
        let net = two_station_net();
        let w = CostWeights::default_for(&net, 3);
        assert_eq!(w.rebalance[w.at(0, 1, 2)], 3.0);
        assert_eq!(w.imbalance, vec![10.0; 4]);
        assert!((w.pickup[w.at(1, 0, 3)] - 0.3).abs() < 1e-12);
        w.validate().unwrap();
    }
}
