//! Receding-horizon rebalancing as an integer program.

mod bnb;
mod controller;
mod demand;
mod lp_format;
mod problem;
mod simplex;

pub use bnb::{solve_ilp, BranchAndBound, IlpSolver, RebalancePlan, SolveStats, SolveStatus, SolverConfig};
pub use controller::{controller_step, ControllerKind, HorizonDemand, MpcSettings, StepDecision};
pub use demand::{quantile_demand, DemandTensor};
pub use lp_format::{parse_solution, write_lp, ExternalSolver, ParsedSolution, SolverChoice};
pub use problem::{
    build_problem, CostWeights, DemandInput, DemandMode, IlpProblem, QuantileRows, Row, RowKind, Sense, VarIndex,
    VarKind, WeightParams,
};
pub use simplex::{solve_lp, LpSolution, LpStatus, WarmLp};
