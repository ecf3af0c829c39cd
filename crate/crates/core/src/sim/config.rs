use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{FlowTrainingConfig, TrainConfig};
use crate::optimizer::{ControllerKind, ExternalSolver, MpcSettings, QuantileRows, SolverChoice, SolverConfig, WeightParams};

/// Settings of one simulation run.
///
/// Stored as flat TOML; every key is optional:
///
/// ```toml
/// controller = "ccmpc"          # ccmpc | oracle | fixed_demand | gbm
/// epsilon = 0.35                # violation probability, 0 < epsilon < 1
/// horizon = 12                  # MPC steps
/// step_seconds = 900            # model step
/// dispatch_seconds = 30         # matching interval
/// mpc_seconds = 900             # rebalancing cadence
/// gp_seconds = 86400            # forecast retraining cadence
/// seed = 1
/// rebalance_per_km = 1.0
/// imbalance_per_step = 10.0
/// pickup_delay_per_step = 0.1
/// time_limit_seconds = 10.0
/// gap = 0.0
/// quantile_rows = "equality"    # equality | inequality
/// gp_window_hours = 120
/// gp_max_iters = 60
/// external_solver = ["cbc", "{lp}", "solve", "solu", "{sol}"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub controller: ControllerKind,
    pub epsilon: f64,
    pub horizon: usize,
    pub step_seconds: f64,
    pub dispatch_seconds: f64,
    pub mpc_seconds: f64,
    pub gp_seconds: f64,
    pub seed: u64,
    pub rebalance_per_km: f64,
    pub imbalance_per_step: f64,
    pub pickup_delay_per_step: f64,
    pub time_limit_seconds: f64,
    pub gap: f64,
    pub quantile_rows: QuantileRows,
    pub gp_window_hours: usize,
    pub gp_max_iters: usize,
    /// Command for a third-party MILP solver; the built-in one when empty.
    pub external_solver: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Ccmpc,
            epsilon: 0.35,
            horizon: 12,
            step_seconds: 900.0,
            dispatch_seconds: 30.0,
            mpc_seconds: 900.0,
            gp_seconds: 86_400.0,
            seed: 1,
            rebalance_per_km: 1.0,
            imbalance_per_step: 10.0,
            pickup_delay_per_step: 0.1,
            time_limit_seconds: 10.0,
            gap: 0.0,
            quantile_rows: QuantileRows::Equality,
            gp_window_hours: 120,
            gp_max_iters: 60,
            external_solver: Vec::new(),
        }
    }
}

fn ticks(what: &str, value: f64, unit: f64) -> Result<usize> {
    let n = (value / unit).round();
    if !(value > 0.0) || !value.is_finite() || n < 1.0 || (n * unit - value).abs() > 1e-9 * value.max(1.0) {
        return Err(Error::invalid(format!("{what} = {value} must be a positive multiple of {unit} s")));
    }
    Ok(n as usize)
}

impl RunConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        self.cadence()?;
        if !(self.time_limit_seconds > 0.0) || !(self.gap >= 0.0) {
            return Err(Error::invalid("solver time limit must be positive and gap non-negative"));
        }
        if self.gp_window_hours == 0 {
            return Err(Error::invalid("training window must be positive"));
        }
        Ok(())
    }

    /// Dispatch ticks per model step, per MPC call and per retraining.
    pub fn cadence(&self) -> Result<(usize, usize, usize)> {
        if !(self.dispatch_seconds > 0.0 && self.dispatch_seconds.is_finite()) {
            return Err(Error::invalid("dispatch interval must be positive"));
        }
        let step = ticks("step_seconds", self.step_seconds, self.dispatch_seconds)?;
        ticks("mpc_seconds", self.mpc_seconds, self.step_seconds)?;
        ticks("gp_seconds", self.gp_seconds, self.step_seconds)?;
        let mpc = ticks("mpc_seconds", self.mpc_seconds, self.dispatch_seconds)?;
        let gp = ticks("gp_seconds", self.gp_seconds, self.dispatch_seconds)?;
        Ok((step, mpc, gp))
    }

    pub fn weights(&self) -> WeightParams {
        WeightParams {
            rebalance_per_km: self.rebalance_per_km,
            imbalance_per_step: self.imbalance_per_step,
            pickup_delay_per_step: self.pickup_delay_per_step,
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            time_limit_seconds: self.time_limit_seconds,
            gap: self.gap,
        }
    }

    pub fn solver_choice(&self) -> SolverChoice {
        if self.external_solver.is_empty() {
            SolverChoice::Bundled
        } else {
            SolverChoice::External(ExternalSolver::new(self.external_solver.clone()))
        }
    }

    pub fn mpc_settings(&self) -> MpcSettings {
        MpcSettings {
            horizon: self.horizon,
            epsilon: self.epsilon,
            rows: self.quantile_rows,
            solver: self.solver_config(),
        }
    }

    pub fn training(&self) -> FlowTrainingConfig {
        FlowTrainingConfig {
            window_bins: self.gp_window_hours,
            train: TrainConfig {
                max_iters: self.gp_max_iters,
                ..TrainConfig::default()
            },
            ..FlowTrainingConfig::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_defaults() {
        let cfg = RunConfig::from_toml("controller = \"gbm\"\nepsilon = 0.2\n").unwrap();
        assert_eq!(cfg.controller, ControllerKind::Gbm);
        assert_eq!(cfg.epsilon, 0.2);
        assert_eq!(cfg.horizon, 12);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(cfg.cadence().unwrap(), (30, 30, 2880));
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml("epsilon = 1.0").is_err());
        assert!(RunConfig::from_toml("horizon = 0").is_err());
        assert!(RunConfig::from_toml("mpc_seconds = 1000").is_err());
        assert!(RunConfig::from_toml("dispatch_seconds = 7").is_err());
        assert!(RunConfig::from_toml("unknown_key = 3").is_err());
    }
}
