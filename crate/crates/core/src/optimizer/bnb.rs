use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::problem::{IlpProblem, VarIndex, VarKind};
use super::simplex::{LpStatus, WarmLp};
use crate::error::{Error, Result};
use crate::network::SquareMatrix;

const INT_TOL: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub time_limit_seconds: f64,
    /// Absolute optimality gap.
    pub gap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            time_limit_seconds: 10.0,
            gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    /// Best incumbent when the time limit was hit.
    TimeLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub lp_iterations: usize,
    pub root_integral: bool,
    pub root_bound: f64,
    pub cold_starts: usize,
    pub seconds: f64,
}

/// Integer solution of an [`IlpProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebalancePlan {
    pub layout: Option<VarIndex>,
    pub values: Vec<u32>,
    pub objective: f64,
    pub status: SolveStatus,
    pub stats: SolveStats,
}

impl RebalancePlan {
    /// Wrap an integer point, checking it against every row and bound.
    pub fn from_values(p: &IlpProblem, values: Vec<u32>, status: SolveStatus, stats: SolveStats) -> Result<Self> {
        if values.len() != p.n_vars() {
            return Err(Error::invalid(format!("solution has {} values for {} variables", values.len(), p.n_vars())));
        }
        let x: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let res = p.max_residual(&x);
        if res > RESIDUAL_TOL {
            return Err(Error::Numerical(format!("solution violates the problem by {res}")));
        }
        Ok(Self {
            layout: p.layout,
            objective: p.objective_value(&x),
            values,
            status,
            stats,
        })
    }

    pub fn get(&self, kind: VarKind, i: usize, j: usize, k: usize) -> u32 {
        let l = self.layout.expect("plan has no rebalancing layout");
        self.values[l.index(kind, i, j, k)]
    }

    /// `[i][j][k]` tensor for one variable family.
    pub fn tensor(&self, kind: VarKind) -> Vec<Vec<Vec<u32>>> {
        let l = self.layout.expect("plan has no rebalancing layout");
        (0..l.n)
            .map(|i| (0..l.n).map(|j| (0..l.steps()).map(|k| self.get(kind, i, j, k)).collect()).collect())
            .collect()
    }

    /// Rebalancing moves ordered for the current step. The diagonal counts
    /// vehicles told to stay.
    pub fn first_step(&self) -> SquareMatrix<u32> {
        let l = self.layout.expect("plan has no rebalancing layout");
        let mut m = SquareMatrix::new(l.n);
        for i in 0..l.n {
            for j in 0..l.n {
                m[(i, j)] = self.get(VarKind::Rebalance, i, j, 0);
            }
        }
        m
    }
}

/// Anything that turns an [`IlpProblem`] into a [`RebalancePlan`].
pub trait IlpSolver: Send + Sync {
    fn solve(&self, problem: &IlpProblem, cfg: &SolverConfig) -> Result<RebalancePlan>;
}

/// Depth-first branch-and-bound over the bundled simplex.
#[derive(Debug, Clone, Copy, Default)]
pub struct BranchAndBound;

impl IlpSolver for BranchAndBound {
    fn solve(&self, problem: &IlpProblem, cfg: &SolverConfig) -> Result<RebalancePlan> {
        solve_ilp(problem, cfg)
    }
}

/// Fractional variable whose fractional part is nearest 0.5, lowest index on ties.
fn branching_variable(p: &IlpProblem, x: &[f64]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    let mut best_dist = f64::INFINITY;
    for (v, &xv) in x.iter().enumerate() {
        if !p.integer[v] {
            continue;
        }
        let frac = xv - xv.floor();
        if frac <= INT_TOL || frac >= 1.0 - INT_TOL {
            continue;
        }
        let dist = (frac - 0.5).abs();
        if dist < best_dist {
            best_dist = dist;
            best = Some((v, frac));
        }
    }
    best
}

fn round_solution(p: &IlpProblem, x: &[f64]) -> Option<Vec<u32>> {
    let vals: Vec<u32> = x
        .iter()
        .enumerate()
        .map(|(v, &xv)| if p.integer[v] { xv.round().max(0.0) as u32 } else { xv.max(0.0).round() as u32 })
        .collect();
    let xf: Vec<f64> = vals.iter().map(|&v| v as f64).collect();
    (p.max_residual(&xf) <= RESIDUAL_TOL).then_some(vals)
}

struct Node {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

/// Solve `problem` to optimality within `cfg.gap`, or return the best
/// incumbent when the time limit expires.
pub fn solve_ilp(problem: &IlpProblem, cfg: &SolverConfig) -> Result<RebalancePlan> {
    problem.validate()?;
    if problem.lower.iter().any(|&l| l < 0.0) {
        return Err(Error::invalid("variables must be non-negative"));
    }
    if !(cfg.time_limit_seconds > 0.0) || !(cfg.gap >= 0.0) {
        return Err(Error::invalid("time limit must be positive and gap non-negative"));
    }
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(cfg.time_limit_seconds);
    let mut stats = SolveStats::default();
    let mut incumbent: Option<(f64, Vec<u32>)> = problem.start.as_ref().and_then(|x| {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        (problem.max_residual(&xf) <= RESIDUAL_TOL).then(|| (problem.objective_value(&xf), x.clone()))
    });
    let mut stack = vec![Node {
        lower: problem.lower.clone(),
        upper: problem.upper.clone(),
    }];
    let mut timed_out = false;
    let mut lp_solver = WarmLp::new(problem);

    while let Some(node) = stack.pop() {
        if Instant::now() >= deadline {
            timed_out = true;
            break;
        }
        stats.nodes += 1;
        let root = stats.nodes == 1;
        let mut lp = lp_solver.solve(&node.lower, &node.upper, Some(deadline));
        stats.lp_iterations += lp.iterations;
        if lp.status == LpStatus::Optimal
            && branching_variable(problem, &lp.x).is_none()
            && round_solution(problem, &lp.x).is_none()
        {
            // Drift in a reused tableau; solve this node again from scratch.
            lp_solver.reset();
            lp = lp_solver.solve(&node.lower, &node.upper, Some(deadline));
            stats.lp_iterations += lp.iterations;
        }
        match lp.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible if root => return Err(Error::Infeasible),
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded => return Err(Error::Numerical("LP relaxation is unbounded".into())),
            LpStatus::TimeLimit => {
                timed_out = true;
                break;
            }
        }
        if root {
            stats.root_bound = lp.objective;
        }
        if let Some((best, _)) = &incumbent {
            let tol = 1e-9 * best.abs().max(1.0);
            if lp.objective >= best - cfg.gap - tol {
                continue;
            }
        }
        match branching_variable(problem, &lp.x) {
            None => {
                if root {
                    stats.root_integral = true;
                }
                if let Some(vals) = round_solution(problem, &lp.x) {
                    let obj = problem.objective_value(&vals.iter().map(|&v| v as f64).collect::<Vec<_>>());
                    if incumbent.as_ref().map_or(true, |(best, _)| obj < *best) {
                        incumbent = Some((obj, vals));
                    }
                }
            }
            Some((v, frac)) => {
                let down = lp.x[v].floor();
                let mut lo_child = Node {
                    lower: node.lower.clone(),
                    upper: node.upper.clone(),
                };
                lo_child.upper[v] = down;
                let mut hi_child = node;
                hi_child.lower[v] = down + 1.0;
                if frac > 0.5 {
                    stack.push(lo_child);
                    stack.push(hi_child);
                } else {
                    stack.push(hi_child);
                    stack.push(lo_child);
                }
            }
        }
    }

    stats.cold_starts = lp_solver.cold_starts;
    stats.seconds = start.elapsed().as_secs_f64();
    let status = if timed_out { SolveStatus::TimeLimit } else { SolveStatus::Optimal };
    match incumbent {
        Some((_, vals)) => RebalancePlan::from_values(problem, vals, status, stats),
        None if timed_out => Err(Error::NoSolution),
        None => Err(Error::Infeasible),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{Forecast, ForecastTensor};
    use crate::network::{FleetState, GeoPoint, OutstandingDemand, StationNetwork};
    use crate::optimizer::problem::{build_problem, CostWeights, DemandInput, DemandMode, QuantileRows, RowKind, Sense};
    use crate::optimizer::simplex::solve_lp;

    fn knapsack() -> IlpProblem {
        // max 5a + 4b + 3c s.t. 2a + 3b + c <= 5, 4a + b + 2c <= 11, 3a + 4b + 2c <= 8, a, b, c <= 2.
        let mut p = IlpProblem::new(3);
        p.objective = vec![-5.0, -4.0, -3.0];
        p.add_row(RowKind::Generic(0), vec![(0, 2.0), (1, 3.0), (2, 1.0)], Sense::Le, 5.0);
        p.add_row(RowKind::Generic(1), vec![(0, 4.0), (1, 1.0), (2, 2.0)], Sense::Le, 11.0);
        p.add_row(RowKind::Generic(2), vec![(0, 3.0), (1, 4.0), (2, 2.0)], Sense::Le, 8.0);
        p.upper = vec![2.0; 3];
        p
    }

    fn brute(p: &IlpProblem, max: u32) -> f64 {
        let mut best = f64::INFINITY;
        let n = p.n_vars();
        let mut x = vec![0u32; n];
        loop {
            let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
            if p.max_residual(&xf) == 0.0 {
                best = best.min(p.objective_value(&xf));
            }
            let mut k = 0;
            while k < n {
                x[k] += 1;
                if x[k] <= max {
                    break;
                }
                x[k] = 0;
                k += 1;
            }
            if k == n {
                return best;
            }
        }
    }

    #[test]
    fn branching_reaches_the_integer_optimum() {
        let p = knapsack();
        let plan = solve_ilp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(plan.objective, brute(&p, 2));
        assert_eq!(plan.status, SolveStatus::Optimal);
        let lp = solve_lp(&p, &p.lower, &p.upper, None);
        assert!(lp.objective <= plan.objective + 1e-9);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let mut p = IlpProblem::new(1);
        p.add_row(RowKind::Generic(0), vec![(0, 2.0)], Sense::Eq, 3.0);
        assert!(matches!(solve_ilp(&p, &SolverConfig::default()), Err(Error::Infeasible)));
        p.rows[0].rhs = -1.0;
        assert!(matches!(solve_ilp(&p, &SolverConfig::default()), Err(Error::Infeasible)));
    }

    #[test]
    fn vehicle_is_sent_to_the_station_that_will_need_it() {
        let net = StationNetwork::from_centroids(vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(3000.0, 0.0)], 10.0, 300.0).unwrap();
        assert_eq!(net.kappa(0, 1), 1);
        let mut f = ForecastTensor::new(2, 3);
        f.set(1, 0, 1, Forecast { mean: 1.0, std: 0.0 });
        let demand = DemandInput {
            mode: DemandMode::Quantile {
                forecast: f,
                epsilon: 0.3,
                rows: QuantileRows::Equality,
            },
            outstanding: OutstandingDemand::zeros(2),
        };
        let w = CostWeights::default_for(&net, 2);
        let p = build_problem(&FleetState::new(vec![1, 0]), &net, &demand, &w, 2).unwrap();
        let plan = solve_ilp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(plan.first_step()[(0, 1)], 1);
        assert_eq!(plan.get(VarKind::Customer, 1, 0, 1), 1);
        assert_eq!(plan.objective, 3.0);
    }

    #[test]
    fn all_zero_problem_has_zero_optimum() {
        let net = StationNetwork::from_centroids(vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(1000.0, 0.0)], 10.0, 300.0).unwrap();
        let demand = DemandInput {
            mode: DemandMode::Deterministic(crate::optimizer::DemandTensor::zeros(2, 3)),
            outstanding: OutstandingDemand::zeros(2),
        };
        let w = CostWeights::default_for(&net, 2);
        let p = build_problem(&FleetState::new(vec![0, 0]), &net, &demand, &w, 2).unwrap();
        let plan = solve_ilp(&p, &SolverConfig::default()).unwrap();
        assert_eq!(plan.objective, 0.0);
        assert!(plan.values.iter().all(|&v| v == 0));
    }

    #[test]
    fn rejects_bad_configs() {
        let p = knapsack();
        let cfg = SolverConfig {
            time_limit_seconds: 0.0,
            gap: 0.0,
        };
        assert!(solve_ilp(&p, &cfg).is_err());
    }
}
