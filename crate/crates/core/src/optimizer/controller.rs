use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bnb::{IlpSolver, RebalancePlan, SolverConfig};
use super::demand::DemandTensor;
use super::problem::{build_problem, CostWeights, DemandInput, DemandMode, QuantileRows};
use crate::error::{Error, Result};
use crate::forecast::ForecastTensor;
use crate::network::{FleetState, OutstandingDemand, SquareMatrix, StationNetwork};

/// Fleet control policies compared by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// Chance-constrained MPC on forecast quantiles.
    Ccmpc,
    /// MPC that knows the realized future demand.
    Oracle,
    /// MPC assuming the last observed step's demand repeats.
    FixedDemand,
    /// Global matching of requests to vehicles, no rebalancing.
    Gbm,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 4] = [
        ControllerKind::Oracle,
        ControllerKind::Ccmpc,
        ControllerKind::FixedDemand,
        ControllerKind::Gbm,
    ];

    pub fn is_mpc(self) -> bool {
        self != ControllerKind::Gbm
    }

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Ccmpc => "ccmpc",
            ControllerKind::Oracle => "oracle",
            ControllerKind::FixedDemand => "fixed_demand",
            ControllerKind::Gbm => "gbm",
        }
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "ccmpc" => Ok(ControllerKind::Ccmpc),
            "oracle" => Ok(ControllerKind::Oracle),
            "fixed_demand" | "fixed" => Ok(ControllerKind::FixedDemand),
            "gbm" => Ok(ControllerKind::Gbm),
            other => Err(Error::invalid(format!("unknown controller {other:?}"))),
        }
    }
}

/// Demand over the horizon as seen by a controller.
#[derive(Debug, Clone, PartialEq)]
pub enum HorizonDemand {
    /// Realized (Oracle) or assumed (FixedDemand) counts.
    Known(DemandTensor),
    Forecast(ForecastTensor),
}

impl HorizonDemand {
    /// The last observed step's counts repeated over the horizon.
    pub fn replicate_last(last: &SquareMatrix<u32>, steps: usize) -> Self {
        HorizonDemand::Known(DemandTensor::from_fn(last.dim(), steps, |i, j, _| if i == j { 0 } else { last[(i, j)] }))
    }
}

/// What a controller decided at one control step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDecision {
    /// Vehicles to send from i to j now; the diagonal is vehicles kept in place.
    pub moves: SquareMatrix<u32>,
    pub plan: Option<RebalancePlan>,
}

impl StepDecision {
    pub fn total_moves(&self) -> u32 {
        let n = self.moves.dim();
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| self.moves[(i, j)]).sum()
    }
}

/// Settings shared by the MPC controllers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcSettings {
    pub horizon: usize,
    pub epsilon: f64,
    pub rows: QuantileRows,
    pub solver: SolverConfig,
}

impl Default for MpcSettings {
    fn default() -> Self {
        Self {
            horizon: 12,
            epsilon: 0.35,
            rows: QuantileRows::Equality,
            solver: SolverConfig::default(),
        }
    }
}

/// Build and solve one receding-horizon problem and keep only the current step.
#[allow(clippy::too_many_arguments)]
pub fn controller_step(
    kind: ControllerKind,
    state: &FleetState,
    outstanding: &OutstandingDemand,
    net: &StationNetwork,
    demand: &HorizonDemand,
    weights: &CostWeights,
    settings: &MpcSettings,
    solver: &dyn IlpSolver,
) -> Result<StepDecision> {
    let n = net.n_stations();
    let mode = match (kind, demand) {
        (ControllerKind::Gbm, _) => {
            let mut moves = SquareMatrix::new(n);
            for i in 0..n.min(state.idle.len()) {
                moves[(i, i)] = state.idle[i];
            }
            return Ok(StepDecision { moves, plan: None });
        }
        (ControllerKind::Ccmpc, HorizonDemand::Forecast(f)) => DemandMode::Quantile {
            forecast: f.clone(),
            epsilon: settings.epsilon,
            rows: settings.rows,
        },
        (ControllerKind::Oracle | ControllerKind::FixedDemand, HorizonDemand::Known(t)) => DemandMode::Deterministic(t.clone()),
        (kind, _) => return Err(Error::invalid(format!("{kind} controller was given the wrong demand source"))),
    };
    let input = DemandInput {
        mode,
        outstanding: outstanding.clone(),
    };
    let problem = build_problem(state, net, &input, weights, settings.horizon)?;
    let plan = solver.solve(&problem, &settings.solver)?;
    Ok(StepDecision {
        moves: plan.first_step(),
        plan: Some(plan),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::GeoPoint;
    use crate::optimizer::BranchAndBound;

    fn net() -> StationNetwork {
        StationNetwork::from_centroids(vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(1500.0, 0.0)], 5.0, 300.0).unwrap()
    }

    #[test]
    fn single_vehicle_moves_toward_demand() {
        let net = net();
        let demand = DemandTensor::from_fn(2, 3, |i, j, k| u32::from(i == 1 && j == 0 && k == 1));
        let settings = MpcSettings {
            horizon: 2,
            ..MpcSettings::default()
        };
        let w = CostWeights::default_for(&net, 2);
        let d = controller_step(
            ControllerKind::Oracle,
            &FleetState::new(vec![1, 0]),
            &OutstandingDemand::zeros(2),
            &net,
            &HorizonDemand::Known(demand),
            &w,
            &settings,
            &BranchAndBound,
        )
        .unwrap();
        assert_eq!(d.moves[(0, 1)], 1);
        assert_eq!(d.total_moves(), 1);
    }

    #[test]
    fn zero_demand_means_no_moves() {
        let net = net();
        let settings = MpcSettings {
            horizon: 3,
            ..MpcSettings::default()
        };
        let w = CostWeights::default_for(&net, 3);
        for (kind, demand) in [
            (ControllerKind::Oracle, HorizonDemand::Known(DemandTensor::zeros(2, 4))),
            (ControllerKind::FixedDemand, HorizonDemand::replicate_last(&SquareMatrix::new(2), 4)),
            (ControllerKind::Ccmpc, HorizonDemand::Forecast(ForecastTensor::new(2, 4))),
        ] {
            let d = controller_step(kind, &FleetState::new(vec![3, 1]), &OutstandingDemand::zeros(2), &net, &demand, &w, &settings, &BranchAndBound)
                .unwrap();
            assert_eq!(d.total_moves(), 0, "{kind}");
            assert_eq!(d.plan.unwrap().objective, 0.0);
        }
    }

    #[test]
    fn median_forecast_matches_oracle_on_ceiled_means() {
        let net = net();
        let settings = MpcSettings {
            horizon: 2,
            epsilon: 0.5,
            ..MpcSettings::default()
        };
        let w = CostWeights::default_for(&net, 2);
        let f = ForecastTensor::from_means(2, 3, |i, j, k| if i != j { 0.4 + (i + k) as f64 } else { 0.0 });
        let ceiled = DemandTensor::from_fn(2, 3, |i, j, k| f.get(i, j, k).mean.ceil() as u32);
        let state = FleetState::new(vec![2, 1]);
        let out = OutstandingDemand::zeros(2);
        let a = controller_step(ControllerKind::Ccmpc, &state, &out, &net, &HorizonDemand::Forecast(f), &w, &settings, &BranchAndBound).unwrap();
        let b = controller_step(ControllerKind::Oracle, &state, &out, &net, &HorizonDemand::Known(ceiled), &w, &settings, &BranchAndBound).unwrap();
        assert_eq!(a.moves, b.moves);
    }

    #[test]
    fn mismatched_sources_are_rejected() {
        let net = net();
        let w = CostWeights::default_for(&net, 2);
        let settings = MpcSettings {
            horizon: 2,
            ..MpcSettings::default()
        };
        let r = controller_step(
            ControllerKind::Ccmpc,
            &FleetState::new(vec![1, 0]),
            &OutstandingDemand::zeros(2),
            &net,
            &HorizonDemand::Known(DemandTensor::zeros(2, 3)),
            &w,
            &settings,
            &BranchAndBound,
        );
        assert!(r.is_err());
        assert_eq!("fixed-demand".parse::<ControllerKind>().unwrap(), ControllerKind::FixedDemand);
    }
}
