//! Bridge to third-party MILP solvers through the CPLEX LP text format.
//!
//! [`write_lp`] emits
//!
//! ```text
//! \ amod rebalancing problem
//! Minimize
//!  obj: 1.2 xr_0_1_0 + 10 s_0_1_0 + ...
//! Subject To
//!  imb_0_1_1: xc_0_1_1 + s_0_1_1 - s_0_1_0 - w_0_1_1 = 2
//!  ...
//! Bounds
//!  0 <= xr_0_1_0 <= 3        (only bounds other than [0, +inf))
//! General
//!  xr_0_1_0 xr_0_1_1 ...
//! End
//! ```
//!
//! Variable names come from the index map (`xr`, `xc`, `s`, `w` followed by
//! origin, destination and step) or `x<idx>` for generic problems. Solution
//! files are read leniently: on each line, a token equal to a variable name
//! followed by a number assigns that value. This covers the column listings
//! written by CBC, GLPK (`-w`), HiGHS and SCIP. Variables not mentioned are 0.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::bnb::{IlpSolver, RebalancePlan, SolveStats, SolveStatus, SolverConfig};
use super::problem::{IlpProblem, RowKind};
use crate::error::{Error, Result};

const TERMS_PER_LINE: usize = 8;

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_terms(out: &mut String, p: &IlpProblem, terms: impl Iterator<Item = (usize, f64)>) {
    let mut count = 0;
    for (v, c) in terms {
        if c == 0.0 {
            continue;
        }
        if count > 0 && count % TERMS_PER_LINE == 0 {
            out.push_str("\n   ");
        }
        let sign = if c < 0.0 { "-" } else { "+" };
        if count == 0 && c > 0.0 {
            let _ = write!(out, " {} {}", fmt_num(c), p.var_name(v));
        } else {
            let _ = write!(out, " {sign} {} {}", fmt_num(c.abs()), p.var_name(v));
        }
        count += 1;
    }
    if count == 0 {
        // An empty expression is written as a zero multiple of the first variable.
        let _ = write!(out, " 0 {}", p.var_name(0));
    }
}

/// Render `p` in CPLEX LP format.
pub fn write_lp(p: &IlpProblem) -> String {
    let mut out = String::from("\\ amod rebalancing problem\nMinimize\n obj:");
    write_terms(&mut out, p, p.objective.iter().copied().enumerate());
    out.push_str("\nSubject To\n");
    for (r, row) in p.rows.iter().enumerate() {
        let name = match row.kind {
            RowKind::Generic(_) => format!("r{r}"),
            kind => kind.to_string(),
        };
        let _ = write!(out, " {name}:");
        write_terms(&mut out, p, row.coeffs.iter().copied());
        let _ = writeln!(out, " {} {}", row.sense, fmt_num(row.rhs));
    }
    out.push_str("Bounds\n");
    for v in 0..p.n_vars() {
        let (l, u) = (p.lower[v], p.upper[v]);
        if l == 0.0 && u == f64::INFINITY {
            continue;
        }
        if u.is_finite() {
            let _ = writeln!(out, " {} <= {} <= {}", fmt_num(l), p.var_name(v), fmt_num(u));
        } else {
            let _ = writeln!(out, " {} >= {}", p.var_name(v), fmt_num(l));
        }
    }
    let ints: Vec<usize> = (0..p.n_vars()).filter(|&v| p.integer[v]).collect();
    if !ints.is_empty() {
        out.push_str("General\n");
        for chunk in ints.chunks(TERMS_PER_LINE) {
            let names: Vec<String> = chunk.iter().map(|&v| p.var_name(v)).collect();
            let _ = writeln!(out, " {}", names.join(" "));
        }
    }
    out.push_str("End\n");
    out
}

/// Outcome of reading a solver's solution file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedSolution {
    pub values: Vec<f64>,
    pub infeasible: bool,
    pub time_limited: bool,
}

/// Read variable values out of a solution listing.
pub fn parse_solution(p: &IlpProblem, text: &str) -> ParsedSolution {
    let names: HashMap<String, usize> = (0..p.n_vars()).map(|v| (p.var_name(v), v)).collect();
    let mut values = vec![0.0; p.n_vars()];
    let lower = text.to_ascii_lowercase();
    for line in text.lines() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        for (t, tok) in tokens.iter().enumerate() {
            let Some(&v) = names.get(*tok) else { continue };
            if let Some(val) = tokens.get(t + 1).and_then(|s| s.parse::<f64>().ok()) {
                values[v] = val;
            }
            break;
        }
    }
    ParsedSolution {
        values,
        infeasible: lower.contains("infeasible") && !lower.contains("optimal"),
        time_limited: lower.contains("stopped on time") || lower.contains("time limit"),
    }
}

/// Runs an external command on an exported LP file.
///
/// `command` is a program followed by arguments; `{lp}` and `{sol}` in any
/// argument are replaced by the problem and solution file paths. For
/// example `["cbc", "{lp}", "solve", "solu", "{sol}"]` or
/// `["glpsol", "--lp", "{lp}", "-w", "{sol}"]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSolver {
    pub command: Vec<String>,
    /// Directory for the exchange files; a fresh temporary directory when unset.
    #[serde(default)]
    pub work_dir: Option<PathBuf>,
}

impl ExternalSolver {
    pub fn new(command: Vec<String>) -> Self {
        Self { command, work_dir: None }
    }

    fn run_in(&self, problem: &IlpProblem, dir: &Path) -> Result<RebalancePlan> {
        let lp_path = dir.join("problem.lp");
        let sol_path = dir.join("solution.txt");
        std::fs::write(&lp_path, write_lp(problem)).map_err(|e| Error::io(&lp_path, e))?;
        let subst = |a: &String| {
            a.replace("{lp}", &lp_path.to_string_lossy())
                .replace("{sol}", &sol_path.to_string_lossy())
        };
        let (prog, args) = self
            .command
            .split_first()
            .ok_or_else(|| Error::invalid("external solver command is empty"))?;
        let start = Instant::now();
        let output = Command::new(subst(prog))
            .args(args.iter().map(subst))
            .current_dir(dir)
            .output()
            .map_err(|e| Error::ExternalSolver(format!("cannot run {prog}: {e}")))?;
        if !output.status.success() {
            return Err(Error::ExternalSolver(format!(
                "{prog} exited with {}: {}",
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol_path).map_err(|e| Error::io(&sol_path, e))?;
        let parsed = parse_solution(problem, &text);
        if parsed.infeasible {
            return Err(Error::Infeasible);
        }
        let mut values = Vec::with_capacity(parsed.values.len());
        for (v, &x) in parsed.values.iter().enumerate() {
            if (x - x.round()).abs() > 1e-6 || x < -1e-6 {
                return Err(Error::ExternalSolver(format!("{} = {x} is not a non-negative integer", problem.var_name(v))));
            }
            values.push(x.round().max(0.0) as u32);
        }
        let status = if parsed.time_limited { SolveStatus::TimeLimit } else { SolveStatus::Optimal };
        let stats = SolveStats {
            seconds: start.elapsed().as_secs_f64(),
            ..SolveStats::default()
        };
        RebalancePlan::from_values(problem, values, status, stats)
    }
}

impl IlpSolver for ExternalSolver {
    fn solve(&self, problem: &IlpProblem, _cfg: &SolverConfig) -> Result<RebalancePlan> {
        problem.validate()?;
        match &self.work_dir {
            Some(dir) => {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                self.run_in(problem, dir)
            }
            None => {
                let dir = tempfile::tempdir().map_err(|e| Error::io(std::env::temp_dir(), e))?;
                self.run_in(problem, dir.path())
            }
        }
    }
}

/// Which solver the controllers use.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverChoice {
    #[default]
    Bundled,
    External(ExternalSolver),
}

impl SolverChoice {
    pub fn solver(&self) -> Box<dyn IlpSolver> {
        match self {
            SolverChoice::Bundled => Box::new(super::bnb::BranchAndBound),
            SolverChoice::External(e) => Box::new(e.clone()),
        }
    }
}
