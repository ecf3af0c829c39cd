//! Brute-force reference implementations and seeded instance generators.

#![allow(dead_code)]

use std::collections::HashMap;

use amod::network::{FleetState, GeoPoint, InTransit, OutstandingDemand, Purpose, SquareMatrix, StationNetwork};
use amod::optimizer::{build_problem, CostWeights, DemandInput, DemandMode, DemandTensor, IlpProblem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Minimum cost over every injective row-to-column map (rows <= cols assumed
/// after transposing).
pub fn brute_force_assignment(cost: &[Vec<f64>]) -> f64 {
    let rows = cost.len();
    if rows == 0 || cost[0].is_empty() {
        return 0.0;
    }
    let cols = cost[0].len();
    let c: Vec<Vec<f64>> = if rows <= cols {
        cost.to_vec()
    } else {
        (0..cols).map(|j| (0..rows).map(|i| cost[i][j]).collect()).collect()
    };
    let mut used = vec![false; c[0].len()];
    let mut best = f64::INFINITY;
    fn go(c: &[Vec<f64>], r: usize, used: &mut [bool], acc: f64, best: &mut f64) {
        if r == c.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                go(c, r + 1, used, acc + c[r][j], best);
                used[j] = false;
            }
        }
    }
    go(&c, 0, &mut used, 0.0, &mut best);
    best
}

/// A small rebalancing instance with exactly representable weights.
#[derive(Debug, Clone)]
pub struct SmallInstance {
    pub net: StationNetwork,
    pub state: FleetState,
    pub demand: DemandTensor,
    pub outstanding: OutstandingDemand,
    pub weights: CostWeights,
    pub horizon: usize,
}

impl SmallInstance {
    pub fn problem(&self) -> IlpProblem {
        let input = DemandInput {
            mode: DemandMode::Deterministic(self.demand.clone()),
            outstanding: self.outstanding.clone(),
        };
        build_problem(&self.state, &self.net, &input, &self.weights, self.horizon).expect("valid instance")
    }
}

/// Random instance with n <= 3 stations, horizon <= 3 and at most 3 vehicles.
/// All weights are multiples of 1/8 so objective sums are exact.
pub fn small_instance(seed: u64) -> SmallInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=3);
    let horizon = rng.gen_range(1..=3);
    let steps = horizon + 1;
    let step_seconds = 300.0;

    let centroids = (0..n).map(|i| GeoPoint::new(1000.0 * i as f64, 0.0)).collect();
    let mut time = SquareMatrix::new(n);
    let mut dist = SquareMatrix::new(n);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                time[(i, j)] = step_seconds * rng.gen_range(1..=horizon + 1) as f64;
                dist[(i, j)] = 250.0 * rng.gen_range(1..=8) as f64;
            }
        }
    }
    let net = StationNetwork::with_matrices(centroids, time, dist, step_seconds).unwrap();

    let fleet = rng.gen_range(0..=3);
    let mut idle = vec![0u32; n];
    let mut in_transit = Vec::new();
    for _ in 0..fleet {
        let at = rng.gen_range(0..n);
        if rng.gen_bool(0.7) {
            idle[at] += 1;
        } else {
            in_transit.push(InTransit {
                destination: at,
                arrival_step: rng.gen_range(1..=horizon + 1),
                purpose: Purpose::Customer,
            });
        }
    }
    let state = FleetState {
        idle,
        in_transit,
        vehicle_positions: Vec::new(),
    };

    let demand = DemandTensor::from_fn(n, steps, |_, _, _| 0);
    let mut demand = demand;
    let mut outstanding = OutstandingDemand::zeros(n);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 1..steps {
                demand.set(i, j, k, if rng.gen_bool(0.3) { rng.gen_range(1..=2) } else { 0 });
            }
            if rng.gen_bool(0.25) {
                outstanding.waiting[(i, j)] = 1;
            }
        }
    }

    let mut weights = CostWeights {
        n,
        steps,
        rebalance: vec![0.0; n * n * steps],
        imbalance: (0..steps).map(|_| rng.gen_range(2..=12) as f64).collect(),
        pickup: vec![0.0; n * n * steps],
    };
    for i in 0..n {
        for j in 0..n {
            let r = if i == j { 0.0 } else { 0.25 * rng.gen_range(0..=8) as f64 };
            let slope = 0.125 * rng.gen_range(0..=4) as f64;
            for k in 0..steps {
                let at = (i * n + j) * steps + k;
                weights.rebalance[at] = r;
                weights.pickup[at] = slope * k as f64;
            }
        }
    }

    SmallInstance {
        net,
        state,
        demand,
        outstanding,
        weights,
        horizon,
    }
}

/// Optimal objective by enumerating every integer solution.
///
/// Vehicle movements are enumerated step by step: each vehicle present at a
/// station either stays (one step) or drives to another station. For fixed
/// movements the customer, slack and pickup variables of different station
/// pairs are independent, so each pair is enumerated separately. Returns
/// `None` when no integer point exists.
pub fn brute_force_rebalance(inst: &SmallInstance) -> Option<f64> {
    let n = inst.net.n_stations();
    let steps = inst.horizon + 1;
    let mut arrivals = inst.state.availability(inst.horizon);
    let mut moves = vec![vec![0u32; steps]; n * n];
    let mut memo: HashMap<(usize, Vec<u32>), Option<f64>> = HashMap::new();
    let mut best: Option<f64> = None;
    search(inst, 0, 0, &mut arrivals, &mut moves, &mut memo, &mut best);
    best
}

fn search(
    inst: &SmallInstance,
    k: usize,
    i: usize,
    arrivals: &mut Vec<Vec<u32>>,
    moves: &mut Vec<Vec<u32>>,
    memo: &mut HashMap<(usize, Vec<u32>), Option<f64>>,
    best: &mut Option<f64>,
) {
    let n = inst.net.n_stations();
    let steps = inst.horizon + 1;
    if k == steps {
        let mut total = 0.0;
        for f in 0..n * n {
            let cost = *memo
                .entry((f, moves[f].clone()))
                .or_insert_with(|| pair_cost(inst, f / n, f % n, &moves[f]));
            match cost {
                Some(c) => total += c,
                None => return,
            }
        }
        if best.map_or(true, |b| total < b) {
            *best = Some(total);
        }
        return;
    }
    let (nk, ni) = if i + 1 == n { (k + 1, 0) } else { (k, i + 1) };
    let available = arrivals[k][i];
    let mut split = vec![0u32; n];
    compositions(available, 0, &mut split, &mut |split| {
        for j in 0..n {
            moves[i * n + j][k] = split[j];
            let delay = if i == j { 1 } else { inst.net.kappa(i, j) };
            if k + delay < steps {
                arrivals[k + delay][j] += split[j];
            }
        }
        search(inst, nk, ni, arrivals, moves, memo, best);
        for j in 0..n {
            moves[i * n + j][k] = 0;
            let delay = if i == j { 1 } else { inst.net.kappa(i, j) };
            if k + delay < steps {
                arrivals[k + delay][j] -= split[j];
            }
        }
    });
}

fn compositions(left: u32, at: usize, split: &mut Vec<u32>, f: &mut dyn FnMut(&[u32])) {
    if at + 1 == split.len() {
        split[at] = left;
        f(split);
        return;
    }
    for v in 0..=left {
        split[at] = v;
        compositions(left - v, at + 1, split, f);
    }
}

/// Cheapest way for pair (i, j) to split `moves[k]` into customer and empty
/// trips and to schedule its outstanding pickups.
fn pair_cost(inst: &SmallInstance, i: usize, j: usize, moves: &[u32]) -> Option<f64> {
    let n = inst.net.n_stations();
    let steps = moves.len();
    let w = &inst.weights;
    let at = |k: usize| (i * n + j) * steps + k;
    let outstanding = inst.outstanding.waiting[(i, j)];
    let mut best: Option<f64> = None;

    let mut pickups = vec![0u32; steps];
    let mut carry = vec![0u32; steps];
    compositions(outstanding, 0, &mut pickups, &mut |pickups| {
        let mut odo = vec![0u32; steps];
        loop {
            carry.copy_from_slice(&odo);
            let mut slack = 0i64;
            let mut cost = 0.0;
            let mut ok = true;
            for k in 0..steps {
                let demand = if k == 0 || i == j { 0 } else { inst.demand.get(i, j, k) as i64 };
                slack = slack + pickups[k] as i64 + demand - carry[k] as i64;
                if slack < 0 {
                    ok = false;
                    break;
                }
                cost += w.rebalance[at(k)] * (moves[k] - carry[k]) as f64 + w.imbalance[k] * slack as f64 + w.pickup[at(k)] * pickups[k] as f64;
            }
            if ok && best.map_or(true, |b| cost < b) {
                best = Some(cost);
            }
            let mut d = 0;
            while d < steps && odo[d] == moves[d] {
                odo[d] = 0;
                d += 1;
            }
            if d == steps {
                break;
            }
            odo[d] += 1;
        }
    });
    best
}
