//! Dense-tableau primal simplex for bounded variables.
//!
//! Inequality rows get an explicit slack column. The starting basis comes
//! from the problem's basis hint where it yields a valid pivot and feasible
//! basic values; every other row gets an artificial variable and a phase-one
//! objective. Artificials never enter the basis again once they leave it, so
//! they need no columns. Pricing is Dantzig's rule, falling back to Bland's
//! rule after a run of degenerate pivots.
//!
//! [`WarmLp`] keeps the final tableau so that a later solve with tightened or
//! shifted bounds restarts from the previous basis with the dual simplex.

use std::time::Instant;

use super::problem::{IlpProblem, Sense};

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-7;
const COST_TOL: f64 = 1e-9;
const ZERO_TOL: f64 = 1e-12;
const DEGENERATE_RUN: usize = 50;
const ART: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    TimeLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Values of the structural variables.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

enum DualOutcome {
    Feasible,
    Infeasible,
    TimeLimit,
    Stalled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Basic,
    Lower,
    Upper,
}

struct Tableau {
    m: usize,
    w: usize,
    a: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
    xb: Vec<f64>,
    state: Vec<State>,
    x: Vec<f64>,
    lo: Vec<f64>,
    up: Vec<f64>,
    d: Vec<f64>,
    /// Upper bound of basic artificials: unbounded in phase one, zero after.
    art_up: f64,
    iterations: usize,
    scratch: Vec<(usize, f64)>,
    /// Devex reference weights for primal pricing.
    devex: Vec<f64>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.a[r * self.w + c]
    }

    fn basic_bounds(&self, r: usize) -> (f64, f64) {
        match self.basis[r] {
            ART => (0.0, self.art_up),
            b => (self.lo[b], self.up[b]),
        }
    }

    /// Gauss-Jordan pivot on (r, c); also applies to `rhs` and `d`.
    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.w;
        let inv = 1.0 / self.a[r * w + c];
        self.scratch.clear();
        {
            let row = &mut self.a[r * w..(r + 1) * w];
            for (k, v) in row.iter_mut().enumerate() {
                if *v != 0.0 {
                    *v *= inv;
                    if v.abs() < ZERO_TOL {
                        *v = 0.0;
                    } else {
                        self.scratch.push((k, *v));
                    }
                }
            }
            row[c] = 1.0;
        }
        self.rhs[r] *= inv;
        let rr = self.rhs[r];
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * w..(i + 1) * w];
            for &(k, v) in &self.scratch {
                let nv = row[k] - f * v;
                row[k] = if nv.abs() < ZERO_TOL { 0.0 } else { nv };
            }
            row[c] = 0.0;
            self.rhs[i] -= f * rr;
        }
        let f = self.d[c];
        if f != 0.0 {
            for &(k, v) in &self.scratch {
                self.d[k] -= f * v;
            }
            self.d[c] = 0.0;
        }
    }

    fn set_costs(&mut self, cost: impl Fn(usize) -> f64) {
        let mut d: Vec<f64> = (0..self.w).map(&cost).collect();
        for r in 0..self.m {
            let cb = match self.basis[r] {
                ART => cost(ART),
                b => cost(b),
            };
            if cb == 0.0 {
                continue;
            }
            let row = &self.a[r * self.w..(r + 1) * self.w];
            for (k, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    d[k] -= cb * v;
                }
            }
        }
        for (k, s) in self.state.iter().enumerate() {
            if *s == State::Basic {
                d[k] = 0.0;
            }
        }
        self.d = d;
    }

    fn choose_entering(&self, bland: bool) -> Option<usize> {
        let mut best = None;
        let mut best_score = 0.0;
        for j in 0..self.w {
            let gain = match self.state[j] {
                State::Basic => continue,
                _ if self.lo[j] == self.up[j] => continue,
                State::Lower => -self.d[j],
                State::Upper => self.d[j],
            };
            if gain <= COST_TOL {
                continue;
            }
            if bland {
                return Some(j);
            }
            let score = gain * gain / self.devex[j];
            if score > best_score {
                best_score = score;
                best = Some(j);
            }
        }
        best
    }

    /// Run primal simplex iterations to optimality for the current costs.
    fn iterate(&mut self, deadline: Option<Instant>) -> LpStatus {
        let mut degenerate = 0usize;
        loop {
            if self.iterations % 32 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return LpStatus::TimeLimit;
            }
            let bland = degenerate > DEGENERATE_RUN;
            let Some(j) = self.choose_entering(bland) else {
                return LpStatus::Optimal;
            };
            let dir = if self.state[j] == State::Lower { 1.0 } else { -1.0 };
            let mut t_max = self.up[j] - self.lo[j];
            let mut leave: Option<(usize, f64)> = None;
            let mut leave_alpha = 0.0f64;
            for r in 0..self.m {
                let alpha = self.at(r, j);
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let delta = -dir * alpha;
                let (blo, bup) = self.basic_bounds(r);
                let lim = if delta < 0.0 {
                    (self.xb[r] - blo) / -delta
                } else if bup.is_finite() {
                    (bup - self.xb[r]) / delta
                } else {
                    continue;
                };
                let lim = lim.max(0.0);
                let better = match leave {
                    _ if lim < t_max - ZERO_TOL => true,
                    Some((lr, _)) if lim <= t_max + ZERO_TOL => {
                        if bland {
                            self.basis[r] < self.basis[lr]
                        } else {
                            alpha.abs() > leave_alpha
                        }
                    }
                    _ => false,
                };
                if better {
                    t_max = lim.min(t_max);
                    leave = Some((r, delta));
                    leave_alpha = alpha.abs();
                }
            }
            if !t_max.is_finite() {
                return LpStatus::Unbounded;
            }
            let t = t_max;
            if t > ZERO_TOL {
                for r in 0..self.m {
                    let alpha = self.a[r * self.w + j];
                    if alpha != 0.0 {
                        self.xb[r] -= dir * alpha * t;
                    }
                }
                degenerate = 0;
            } else {
                degenerate += 1;
            }
            self.iterations += 1;
            match leave {
                None => {
                    if self.state[j] == State::Lower {
                        self.state[j] = State::Upper;
                        self.x[j] = self.up[j];
                    } else {
                        self.state[j] = State::Lower;
                        self.x[j] = self.lo[j];
                    }
                }
                Some((r, delta)) => {
                    let b = self.basis[r];
                    if b != ART {
                        if delta < 0.0 {
                            self.state[b] = State::Lower;
                            self.x[b] = self.lo[b];
                        } else {
                            self.state[b] = State::Upper;
                            self.x[b] = self.up[b];
                        }
                    }
                    let entering = self.x[j] + dir * t;
                    let alpha = self.at(r, j);
                    self.pivot(r, j);
                    let wq = self.devex[j];
                    for &(k, v) in &self.scratch {
                        let cand = v * v * wq;
                        if cand > self.devex[k] {
                            self.devex[k] = cand;
                        }
                    }
                    if b != ART {
                        self.devex[b] = (wq / (alpha * alpha)).max(1.0);
                    }
                    self.basis[r] = j;
                    self.state[j] = State::Basic;
                    self.xb[r] = entering;
                }
            }
        }
    }

    fn infeasibility(&self, r: usize) -> f64 {
        let (lo, up) = self.basic_bounds(r);
        (lo - self.xb[r]).max(self.xb[r] - up).max(0.0)
    }

    fn primal_feasible(&self) -> bool {
        (0..self.m).all(|r| self.infeasibility(r) <= FEAS_TOL)
    }

    /// Dual simplex from a dual feasible basis until the basic values are within bounds.
    fn dual_iterate(&mut self, deadline: Option<Instant>) -> DualOutcome {
        let limit = self.iterations + 10 * (self.m + self.w);
        let mut degenerate = 0usize;
        loop {
            if self.iterations % 32 == 0 && deadline.is_some_and(|d| Instant::now() >= d) {
                return DualOutcome::TimeLimit;
            }
            if self.iterations > limit {
                return DualOutcome::Stalled;
            }
            let careful = degenerate > DEGENERATE_RUN;
            let mut leave = None;
            let mut worst = FEAS_TOL;
            for r in 0..self.m {
                let inf = self.infeasibility(r);
                if inf > worst {
                    leave = Some(r);
                    if careful {
                        break;
                    }
                    worst = inf;
                }
            }
            let Some(r) = leave else {
                return DualOutcome::Feasible;
            };
            let (lo, up) = self.basic_bounds(r);
            let below = self.xb[r] < lo;
            let target = if below { lo } else { up };
            // Raising x_B(r) needs alpha < 0 on an increasing column or alpha > 0 on a decreasing one.
            let mut enter = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0f64;
            let row = &self.a[r * self.w..(r + 1) * self.w];
            for (j, &alpha) in row.iter().enumerate() {
                if alpha.abs() <= PIVOT_TOL || self.state[j] == State::Basic || self.lo[j] == self.up[j] {
                    continue;
                }
                let increasing = self.state[j] == State::Lower;
                let eligible = if below { (alpha < 0.0) == increasing } else { (alpha > 0.0) == increasing };
                if !eligible {
                    continue;
                }
                let ratio = self.d[j].abs() / alpha.abs();
                let better = ratio < best_ratio - ZERO_TOL
                    || (ratio <= best_ratio + ZERO_TOL && !careful && alpha.abs() > best_alpha);
                if better {
                    best_ratio = ratio.min(best_ratio);
                    best_alpha = alpha.abs();
                    enter = Some(j);
                }
            }
            let Some(j) = enter else {
                return DualOutcome::Infeasible;
            };
            degenerate = if best_ratio <= ZERO_TOL { degenerate + 1 } else { 0 };
            let alpha = self.at(r, j);
            let step = (self.xb[r] - target) / alpha;
            for i in 0..self.m {
                let a = self.a[i * self.w + j];
                if a != 0.0 {
                    self.xb[i] -= a * step;
                }
            }
            let b = self.basis[r];
            if b != ART {
                self.state[b] = if below { State::Lower } else { State::Upper };
                self.x[b] = target;
            }
            let entering = self.x[j] + step;
            self.pivot(r, j);
            self.basis[r] = j;
            self.state[j] = State::Basic;
            self.xb[r] = entering;
            self.iterations += 1;
        }
    }

    /// Residual of row r with respect to the nonbasic values, excluding its basic column.
    fn row_value(&self, r: usize) -> f64 {
        let row = &self.a[r * self.w..(r + 1) * self.w];
        let mut v = self.rhs[r];
        for (k, &c) in row.iter().enumerate() {
            if c != 0.0 && self.state[k] != State::Basic && self.x[k] != 0.0 {
                v -= c * self.x[k];
            }
        }
        v
    }
}

/// Solve the LP relaxation of `p` with the given bounds.
pub fn solve_lp(p: &IlpProblem, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> LpSolution {
    WarmLp::new(p).solve(lower, upper, deadline)
}

/// LP relaxation solver that reuses its last basis between calls.
pub struct WarmLp<'a> {
    problem: &'a IlpProblem,
    tab: Option<Tableau>,
    /// Solves that could not reuse the previous basis.
    pub cold_starts: usize,
}

enum Warm {
    Done(LpSolution),
    Cold,
}

impl<'a> WarmLp<'a> {
    pub fn new(problem: &'a IlpProblem) -> Self {
        Self {
            problem,
            tab: None,
            cold_starts: 0,
        }
    }

    /// Forget the stored basis so the next solve starts cold.
    pub fn reset(&mut self) {
        self.tab = None;
    }

    pub fn solve(&mut self, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> LpSolution {
        if lower.iter().zip(upper).any(|(l, u)| l > u) {
            return LpSolution {
                status: LpStatus::Infeasible,
                x: Vec::new(),
                objective: f64::INFINITY,
                iterations: 0,
            };
        }
        if let Some(mut tab) = self.tab.take() {
            if let Warm::Done(sol) = warm_solve(&mut tab, self.problem, lower, upper, deadline) {
                if matches!(sol.status, LpStatus::Optimal | LpStatus::Infeasible) {
                    self.tab = Some(tab);
                }
                return sol;
            }
        }
        self.cold_starts += 1;
        let (tab, sol) = cold_solve(self.problem, lower, upper, deadline);
        if sol.status == LpStatus::Optimal {
            self.tab = Some(tab);
        }
        sol
    }
}

fn finish(tab: &Tableau, p: &IlpProblem, status: LpStatus, iterations: usize) -> LpSolution {
    let n = p.n_vars();
    if status != LpStatus::Optimal {
        return LpSolution {
            status,
            x: Vec::new(),
            objective: f64::INFINITY,
            iterations,
        };
    }
    let mut x = tab.x[..n].to_vec();
    for r in 0..tab.m {
        let b = tab.basis[r];
        if b != ART && b < n {
            x[b] = tab.xb[r];
        }
    }
    LpSolution {
        status,
        objective: p.objective_value(&x),
        x,
        iterations,
    }
}

/// Re-optimize an optimal tableau after a bound change.
fn warm_solve(tab: &mut Tableau, p: &IlpProblem, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> Warm {
    let n = p.n_vars();
    tab.lo[..n].copy_from_slice(lower);
    tab.up[..n].copy_from_slice(upper);
    let mut dual_feasible = true;
    for j in 0..tab.w {
        if tab.state[j] == State::Basic {
            continue;
        }
        let (lo, up) = (tab.lo[j], tab.up[j]);
        let (state, value) = if lo == up || tab.d[j] > COST_TOL {
            (State::Lower, lo)
        } else if tab.d[j] < -COST_TOL {
            if up.is_finite() {
                (State::Upper, up)
            } else {
                dual_feasible = false;
                (State::Lower, lo)
            }
        } else if tab.state[j] == State::Upper && up.is_finite() {
            (State::Upper, up)
        } else {
            (State::Lower, lo)
        };
        tab.state[j] = state;
        tab.x[j] = value;
    }
    for r in 0..tab.m {
        tab.xb[r] = tab.row_value(r);
    }
    let start = tab.iterations;
    if dual_feasible {
        match tab.dual_iterate(deadline) {
            DualOutcome::Feasible => {}
            DualOutcome::Infeasible => return Warm::Done(finish(tab, p, LpStatus::Infeasible, tab.iterations - start)),
            DualOutcome::TimeLimit => return Warm::Done(finish(tab, p, LpStatus::TimeLimit, tab.iterations - start)),
            DualOutcome::Stalled => return Warm::Cold,
        }
    } else if !tab.primal_feasible() {
        return Warm::Cold;
    }
    let status = tab.iterate(deadline);
    Warm::Done(finish(tab, p, status, tab.iterations - start))
}

fn cold_solve(p: &IlpProblem, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> (Tableau, LpSolution) {
    let n = p.n_vars();
    let m = p.rows.len();
    let slack_rows: Vec<usize> = (0..m).filter(|&r| p.rows[r].sense != Sense::Eq).collect();
    let w = n + slack_rows.len();
    let mut a = vec![0.0; m * w];
    let mut rhs = vec![0.0; m];
    let mut slack_of = vec![None; m];
    for (s, &r) in slack_rows.iter().enumerate() {
        slack_of[r] = Some(n + s);
        a[r * w + n + s] = if p.rows[r].sense == Sense::Le { 1.0 } else { -1.0 };
    }
    for (r, row) in p.rows.iter().enumerate() {
        for &(v, c) in &row.coeffs {
            a[r * w + v] += c;
        }
        rhs[r] = row.rhs;
    }
    let mut lo = lower.to_vec();
    let mut up = upper.to_vec();
    lo.resize(w, 0.0);
    up.resize(w, f64::INFINITY);

    let mut tab = Tableau {
        m,
        w,
        a,
        rhs,
        basis: vec![ART; m],
        xb: vec![0.0; m],
        state: vec![State::Lower; w],
        x: lo.clone(),
        lo,
        up,
        d: vec![0.0; w],
        art_up: f64::INFINITY,
        iterations: 0,
        scratch: Vec::new(),
        devex: vec![1.0; w],
    };

    // Crash basis.
    for r in 0..m {
        let hint = p.basis_hint.as_ref().map(|h| h[r]).or(slack_of[r]);
        let Some(c) = hint else { continue };
        if tab.state[c] == State::Basic || tab.at(r, c).abs() <= PIVOT_TOL {
            continue;
        }
        tab.pivot(r, c);
        tab.basis[r] = c;
        tab.state[c] = State::Basic;
    }
    let mut any_art = false;
    for r in 0..m {
        let b = tab.basis[r];
        if b != ART {
            let v = tab.row_value(r);
            if v >= tab.lo[b] - FEAS_TOL && v <= tab.up[b] + FEAS_TOL {
                tab.xb[r] = v;
                continue;
            }
            let bound = if v < tab.lo[b] { tab.lo[b] } else { tab.up[b] };
            tab.state[b] = if v < tab.lo[b] { State::Lower } else { State::Upper };
            tab.x[b] = bound;
            tab.basis[r] = ART;
        }
        let v = tab.row_value(r);
        if v < 0.0 {
            for c in &mut tab.a[r * w..(r + 1) * w] {
                *c = -*c;
            }
            tab.rhs[r] = -tab.rhs[r];
        }
        tab.xb[r] = v.abs();
        any_art = true;
    }

    if any_art {
        tab.set_costs(|k| if k == ART { 1.0 } else { 0.0 });
        match tab.iterate(deadline) {
            LpStatus::Optimal => {}
            LpStatus::TimeLimit => {
                let sol = finish(&tab, p, LpStatus::TimeLimit, tab.iterations);
                return (tab, sol);
            }
            _ => {
                let sol = finish(&tab, p, LpStatus::Infeasible, tab.iterations);
                return (tab, sol);
            }
        }
        let residual: f64 = (0..m).filter(|&r| tab.basis[r] == ART).map(|r| tab.xb[r]).sum();
        if residual > FEAS_TOL * (1.0 + m as f64).sqrt() {
            let sol = finish(&tab, p, LpStatus::Infeasible, tab.iterations);
            return (tab, sol);
        }
        tab.art_up = 0.0;
        for r in 0..m {
            if tab.basis[r] != ART {
                continue;
            }
            tab.xb[r] = 0.0;
            let mut best = None;
            let mut best_abs = 1e-7;
            for c in 0..w {
                let v = tab.at(r, c).abs();
                if tab.state[c] != State::Basic && v > best_abs {
                    best_abs = v;
                    best = Some(c);
                }
            }
            if let Some(c) = best {
                let value = tab.x[c];
                tab.pivot(r, c);
                tab.basis[r] = c;
                tab.state[c] = State::Basic;
                tab.xb[r] = value;
            }
        }
    }

    tab.set_costs(|k| if k < n { p.objective[k] } else { 0.0 });
    let status = tab.iterate(deadline);
    let sol = finish(&tab, p, status, tab.iterations);
    (tab, sol)
}
