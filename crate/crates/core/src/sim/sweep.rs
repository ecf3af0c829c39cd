use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::engine::{run_simulation_with, ForecastCache, NoObserver};
use super::metrics::SimMetrics;
use super::scenario::Scenario;
use crate::error::{Error, Result};
use crate::optimizer::ControllerKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Epsilon,
    Fleet,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "epsilon" | "eps" => Ok(SweepAxis::Epsilon),
            "fleet" => Ok(SweepAxis::Fleet),
            other => Err(Error::invalid(format!("unknown sweep axis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// One run per value, same order.
    pub points: Vec<SimMetrics>,
}

/// Run one simulation per axis value on the same request stream.
///
/// Points run in parallel. Forecasts are trained once up front and shared.
pub fn sweep(axis: SweepAxis, values: &[f64], scenario: &Scenario, cfg: &RunConfig) -> Result<SweepResult> {
    sweep_with(axis, values, scenario, cfg, &ForecastCache::new())
}

pub fn sweep_with(axis: SweepAxis, values: &[f64], scenario: &Scenario, cfg: &RunConfig, cache: &ForecastCache) -> Result<SweepResult> {
    if values.len() < 2 {
        return Err(Error::invalid("a sweep needs at least two values"));
    }
    let mut runs = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        let s = match axis {
            SweepAxis::Epsilon => {
                c.epsilon = v;
                scenario.clone()
            }
            SweepAxis::Fleet => {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(Error::invalid(format!("fleet size must be a positive integer, got {v}")));
                }
                scenario.with_fleet(v as usize)
            }
        };
        c.validate()?;
        runs.push((s, c));
    }
    if cfg.controller == ControllerKind::Ccmpc {
        // Every point retrains at the same instants; fit once before fanning out.
        let (_, _, gp_every) = cfg.cadence()?;
        let step = gp_every as f64 * cfg.dispatch_seconds;
        let mut t = scenario.start;
        while t < scenario.end {
            cache.get_or_train(scenario, t, &cfg.training())?;
            t += step;
        }
    }
    let points = runs
        .par_iter()
        .map(|(s, c)| run_simulation_with(s, c, cache, &mut NoObserver))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        points,
    })
}

/// Parse `0.2,0.35,0.5` style lists.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| Error::invalid(format!("{t:?} is not a number"))))
        .collect()
}
