//! Operation area discretization: stations, travel matrices and the
//! instantaneous fleet / request state handed to the optimizer.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Planar position in projected meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(&self, other: &GeoPoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn dist(&self, other: &GeoPoint) -> f64 {
        self.dist2(other).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

/// Axis-aligned bounds of the operation area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: &GeoPoint) -> bool {
        p.is_finite() && p.x >= self.min_x && p.x <= self.max_x && p.y >= self.min_y && p.y <= self.max_y
    }

    /// Smallest box holding every point, grown by `margin` meters.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a GeoPoint>, margin: f64) -> Option<Self> {
        let mut it = points.into_iter();
        let first = it.next()?;
        let mut bb = BoundingBox {
            min_x: first.x,
            min_y: first.y,
            max_x: first.x,
            max_y: first.y,
        };
        for p in it {
            bb.min_x = bb.min_x.min(p.x);
            bb.min_y = bb.min_y.min(p.y);
            bb.max_x = bb.max_x.max(p.x);
            bb.max_y = bb.max_y.max(p.y);
        }
        bb.min_x -= margin;
        bb.min_y -= margin;
        bb.max_x += margin;
        bb.max_y += margin;
        Some(bb)
    }
}

/// Equirectangular projection about a reference latitude/longitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lat0: f64,
    pub lon0: f64,
}

impl Projection {
    /// Reference at the mean of the given (lon, lat) pairs.
    pub fn about_mean(lonlat: &[(f64, f64)]) -> Option<Self> {
        if lonlat.is_empty() {
            return None;
        }
        let n = lonlat.len() as f64;
        let lon0 = lonlat.iter().map(|p| p.0).sum::<f64>() / n;
        let lat0 = lonlat.iter().map(|p| p.1).sum::<f64>() / n;
        Some(Self { lat0, lon0 })
    }

    pub fn project(&self, lon: f64, lat: f64) -> GeoPoint {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        GeoPoint {
            x: k * (lon - self.lon0) * self.lat0.to_radians().cos(),
            y: k * (lat - self.lat0),
        }
    }
}

/// Dense row-major square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> SquareMatrix<T> {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            data: vec![T::default(); n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::invalid("matrix is not square"));
        }
        Ok(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n.max(1)).map(|r| r.to_vec()).collect()
    }
}

impl<T> SquareMatrix<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.data.iter()
    }
}

impl<T> std::ops::Index<(usize, usize)> for SquareMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for SquareMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Stations and the complete travel graph between them.
///
/// Immutable once built; `kappa` holds travel times in model steps.
#[derive(Debug, Clone, PartialEq)]
pub struct StationNetwork {
    centroids: Vec<GeoPoint>,
    travel_time: SquareMatrix<f64>,
    travel_distance: SquareMatrix<f64>,
    step_seconds: f64,
    kappa: SquareMatrix<usize>,
}

impl StationNetwork {
    /// Euclidean travel matrices between centroids at a constant speed.
    pub fn from_centroids(centroids: Vec<GeoPoint>, speed_mps: f64, step_seconds: f64) -> Result<Self> {
        if !(speed_mps > 0.0 && speed_mps.is_finite()) {
            return Err(Error::invalid(format!("speed must be positive, got {speed_mps}")));
        }
        let n = centroids.len();
        let mut dist = SquareMatrix::new(n);
        let mut time = SquareMatrix::new(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = centroids[i].dist(&centroids[j]);
                    dist[(i, j)] = d;
                    time[(i, j)] = d / speed_mps;
                }
            }
        }
        Self::with_matrices(centroids, time, dist, step_seconds)
    }

    /// Network with explicit travel-time (s) and distance (m) matrices.
    pub fn with_matrices(
        centroids: Vec<GeoPoint>,
        travel_time: SquareMatrix<f64>,
        travel_distance: SquareMatrix<f64>,
        step_seconds: f64,
    ) -> Result<Self> {
        let n = centroids.len();
        if n == 0 {
            return Err(Error::invalid("network needs at least one station"));
        }
        if !(step_seconds > 0.0 && step_seconds.is_finite()) {
            return Err(Error::invalid(format!("step length must be positive, got {step_seconds}")));
        }
        if travel_time.dim() != n || travel_distance.dim() != n {
            return Err(Error::invalid("travel matrices do not match station count"));
        }
        if let Some(p) = centroids.iter().find(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("non-finite centroid {p:?}")));
        }
        let mut kappa = SquareMatrix::new(n);
        for i in 0..n {
            for j in 0..n {
                let (t, d) = (travel_time[(i, j)], travel_distance[(i, j)]);
                if !t.is_finite() || !d.is_finite() {
                    return Err(Error::invalid(format!("non-finite travel entry ({i},{j})")));
                }
                if i == j {
                    if t != 0.0 || d != 0.0 {
                        return Err(Error::invalid(format!("diagonal entry ({i},{i}) must be zero")));
                    }
                } else {
                    if t <= 0.0 || d <= 0.0 {
                        return Err(Error::invalid(format!(
                            "travel entry ({i},{j}) must be positive (coincident centroids?)"
                        )));
                    }
                    kappa[(i, j)] = ((t / step_seconds).round() as usize).max(1);
                }
            }
        }
        Ok(Self {
            centroids,
            travel_time,
            travel_distance,
            step_seconds,
            kappa,
        })
    }

    pub fn n_stations(&self) -> usize {
        self.centroids.len()
    }

    pub fn centroids(&self) -> &[GeoPoint] {
        &self.centroids
    }

    pub fn centroid(&self, i: usize) -> GeoPoint {
        self.centroids[i]
    }

    pub fn step_seconds(&self) -> f64 {
        self.step_seconds
    }

    pub fn travel_time(&self, i: usize, j: usize) -> f64 {
        self.travel_time[(i, j)]
    }

    pub fn travel_distance(&self, i: usize, j: usize) -> f64 {
        self.travel_distance[(i, j)]
    }

    pub fn kappa(&self, i: usize, j: usize) -> usize {
        self.kappa[(i, j)]
    }

    pub fn travel_time_matrix(&self) -> &SquareMatrix<f64> {
        &self.travel_time
    }

    pub fn travel_distance_matrix(&self) -> &SquareMatrix<f64> {
        &self.travel_distance
    }

    pub fn kappa_matrix(&self) -> &SquareMatrix<usize> {
        &self.kappa
    }

    /// Nearest station to `p`; ties go to the lowest index.
    pub fn assign_station(&self, p: &GeoPoint) -> usize {
        nearest(&self.centroids, p)
    }
}

/// Index of the closest point in `centroids`; ties go to the lowest index.
pub fn nearest(centroids: &[GeoPoint], p: &GeoPoint) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centroids.iter().enumerate() {
        let d = c.dist2(p);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Free-function form of [`StationNetwork::assign_station`].
pub fn assign_station(p: &GeoPoint, net: &StationNetwork) -> usize {
    net.assign_station(p)
}

/// Why a vehicle is moving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    Customer,
    Rebalance,
}

/// A vehicle that becomes idle at `destination` after `arrival_step` model steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InTransit {
    pub destination: usize,
    pub arrival_step: usize,
    pub purpose: Purpose,
}

/// Snapshot of the fleet at the current control step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FleetState {
    /// Idle vehicles per station.
    pub idle: Vec<u32>,
    pub in_transit: Vec<InTransit>,
    /// Positions of idle vehicles, when tracked.
    pub vehicle_positions: Vec<GeoPoint>,
}

impl FleetState {
    pub fn new(idle: Vec<u32>) -> Self {
        Self {
            idle,
            ..Self::default()
        }
    }

    pub fn fleet_size(&self) -> usize {
        self.idle.iter().map(|&c| c as usize).sum::<usize>() + self.in_transit.len()
    }

    /// Exogenous vehicle arrivals at each station per horizon step, `[step][station]`.
    ///
    /// Step 0 includes the vehicles idle right now. Arrivals past the horizon are dropped.
    pub fn availability(&self, horizon: usize) -> Vec<Vec<u32>> {
        let n = self.idle.len();
        let mut phi = vec![vec![0u32; n]; horizon + 1];
        phi[0].clone_from(&self.idle);
        for v in &self.in_transit {
            if v.arrival_step <= horizon && v.destination < n {
                phi[v.arrival_step][v.destination] += 1;
            }
        }
        phi
    }
}

/// Requests currently waiting, by (origin, destination) station.
#[derive(Debug, Clone, PartialEq)]
pub struct OutstandingDemand {
    pub waiting: SquareMatrix<u32>,
}

impl OutstandingDemand {
    pub fn zeros(n: usize) -> Self {
        Self {
            waiting: SquareMatrix::new(n),
        }
    }

    pub fn total(&self) -> u64 {
        self.waiting.iter().map(|&c| c as u64).sum()
    }
}

/// Result of partitioning historical request locations.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub centroids: Vec<GeoPoint>,
    pub assignment: Vec<usize>,
    pub sse: f64,
    pub iterations: usize,
}

/// k-means with k-means++ seeding, Lloyd iterations and a final
/// single-point exchange pass. Deterministic for a given seed.
pub fn kmeans_partition(points: &[GeoPoint], n_stations: usize, seed: u64, max_iter: usize) -> Result<Partition> {
    if points.is_empty() {
        return Err(Error::invalid("k-means needs at least one point"));
    }
    if n_stations == 0 {
        return Err(Error::invalid("k-means needs k >= 1"));
    }
    if let Some(p) = points.iter().find(|p| !p.is_finite()) {
        return Err(Error::invalid(format!("non-finite point {p:?}")));
    }
    let mut distinct: Vec<(u64, u64)> = points.iter().map(|p| (p.x.to_bits(), p.y.to_bits())).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < n_stations {
        return Err(Error::invalid(format!(
            "{} distinct points cannot form {n_stations} clusters",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(n_stations);
    centroids.push(points[rng.gen_range(0..points.len())]);
    let mut d2: Vec<f64> = points.iter().map(|p| p.dist2(&centroids[0])).collect();
    while centroids.len() < n_stations {
        // Weighted by squared distance; zero-weight points coincide with a centroid.
        let dist = WeightedIndex::new(&d2).map_err(|e| Error::Numerical(format!("k-means++ seeding: {e}")))?;
        let c = points[dist.sample(&mut rng)];
        centroids.push(c);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(p.dist2(&c));
        }
    }

    let k = n_stations;
    let mut assignment = vec![usize::MAX; points.len()];
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut changed = false;
        for (a, p) in assignment.iter_mut().zip(points) {
            let c = nearest(&centroids, p);
            if *a != c {
                *a = c;
                changed = true;
            }
        }
        repair_empty(points, &mut centroids, &mut assignment, k);
        recompute(points, &assignment, &mut centroids);
        if !changed {
            break;
        }
    }
    if assignment[0] == usize::MAX {
        // max_iter == 0: still hand back a valid partition.
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(&centroids, p);
        }
        repair_empty(points, &mut centroids, &mut assignment, k);
        recompute(points, &assignment, &mut centroids);
    }
    exchange_pass(points, &mut centroids, &mut assignment, k);

    let sse = sse(points, &centroids, &assignment);
    Ok(Partition {
        centroids,
        assignment,
        sse,
        iterations,
    })
}

/// Sum of squared distances from each point to its cluster centroid.
pub fn sse(points: &[GeoPoint], centroids: &[GeoPoint], assignment: &[usize]) -> f64 {
    points.iter().zip(assignment).map(|(p, &a)| p.dist2(&centroids[a])).sum()
}

fn recompute(points: &[GeoPoint], assignment: &[usize], centroids: &mut [GeoPoint]) {
    let k = centroids.len();
    let mut sx = vec![0.0; k];
    let mut sy = vec![0.0; k];
    let mut cnt = vec![0usize; k];
    for (p, &a) in points.iter().zip(assignment) {
        sx[a] += p.x;
        sy[a] += p.y;
        cnt[a] += 1;
    }
    for c in 0..k {
        if cnt[c] > 0 {
            centroids[c] = GeoPoint::new(sx[c] / cnt[c] as f64, sy[c] / cnt[c] as f64);
        }
    }
}

/// Give every empty cluster the point farthest from its current centroid.
fn repair_empty(points: &[GeoPoint], centroids: &mut [GeoPoint], assignment: &mut [usize], k: usize) {
    loop {
        let mut cnt = vec![0usize; k];
        for &a in assignment.iter() {
            cnt[a] += 1;
        }
        let Some(empty) = cnt.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if cnt[a] < 2 {
                continue;
            }
            let d = p.dist2(&centroids[a]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let Some(i) = far else { return };
        assignment[i] = empty;
        centroids[empty] = points[i];
    }
}

/// Move single points between clusters while that lowers the SSE, using
/// exact centroid updates.
fn exchange_pass(points: &[GeoPoint], centroids: &mut [GeoPoint], assignment: &mut [usize], k: usize) {
    let mut cnt = vec![0usize; k];
    for &a in assignment.iter() {
        cnt[a] += 1;
    }
    let mut improved = true;
    let mut sweeps = 0;
    while improved && sweeps < 1000 {
        improved = false;
        sweeps += 1;
        for (i, p) in points.iter().enumerate() {
            let a = assignment[i];
            if cnt[a] < 2 {
                continue;
            }
            let na = cnt[a] as f64;
            let loss = na / (na - 1.0) * p.dist2(&centroids[a]);
            let mut best = None;
            let mut best_gain = 0.0;
            for b in 0..k {
                if b == a {
                    continue;
                }
                let nb = cnt[b] as f64;
                let cost = nb / (nb + 1.0) * p.dist2(&centroids[b]);
                let gain = loss - cost;
                if gain > best_gain * (1.0 + 1e-12) + 1e-12 * loss.abs() {
                    best_gain = gain;
                    best = Some(b);
                }
            }
            if let Some(b) = best {
                let ca = centroids[a];
                let cb = centroids[b];
                let nb = cnt[b] as f64;
                centroids[a] = GeoPoint::new((ca.x * na - p.x) / (na - 1.0), (ca.y * na - p.y) / (na - 1.0));
                centroids[b] = GeoPoint::new((cb.x * nb + p.x) / (nb + 1.0), (cb.y * nb + p.y) / (nb + 1.0));
                cnt[a] -= 1;
                cnt[b] += 1;
                assignment[i] = b;
                improved = true;
            }
        }
    }
    // Incremental updates drift; finish on exact means.
    recompute(points, assignment, centroids);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize) -> Vec<GeoPoint> {
        (0..n).map(|i| GeoPoint::new(i as f64 * 1000.0, 0.0)).collect()
    }

    #[test]
    fn corners_of_unit_square_are_their_own_centroids() {
        let pts = vec![
            GeoPoint::new(0.0, 0.0),
            GeoPoint::new(1.0, 0.0),
            GeoPoint::new(0.0, 1.0),
            GeoPoint::new(1.0, 1.0),
        ];
        let part = kmeans_partition(&pts, 4, 1, 100).unwrap();
        assert_eq!(part.sse, 0.0);
        let mut cs: Vec<_> = part.centroids.iter().map(|c| (c.x as i64, c.y as i64)).collect();
        cs.sort();
        assert_eq!(cs, vec![(0, 0), (0, 1), (1, 0), (1, 1)]);
    }

    #[test]
    fn too_few_distinct_points() {
        let pts = vec![GeoPoint::new(0.0, 0.0); 5];
        assert!(matches!(kmeans_partition(&pts, 2, 0, 10), Err(Error::InvalidInput(_))));
        assert!(kmeans_partition(&[], 1, 0, 10).is_err());
    }

    #[test]
    fn assign_station_ties_and_exact_hits() {
        let net = StationNetwork::from_centroids(
            vec![
                GeoPoint::new(0.0, 0.0),
                GeoPoint::new(-100.0, 0.0),
                GeoPoint::new(0.0, 500.0),
                GeoPoint::new(700.0, 700.0),
                GeoPoint::new(100.0, 0.0),
            ],
            10.0,
            300.0,
        )
        .unwrap();
        assert_eq!(net.assign_station(&GeoPoint::new(700.0, 700.0)), 3);
        // (0,0) is 100 m from both station 1 and station 4.
        let net2 = StationNetwork::from_centroids(
            vec![
                GeoPoint::new(0.0, 900.0),
                GeoPoint::new(-100.0, 0.0),
                GeoPoint::new(0.0, 500.0),
                GeoPoint::new(700.0, 700.0),
                GeoPoint::new(100.0, 0.0),
            ],
            10.0,
            300.0,
        )
        .unwrap();
        assert_eq!(net2.assign_station(&GeoPoint::new(0.0, 0.0)), 1);
    }

    #[test]
    fn travel_matrices_and_kappa_rounding() {
        let c = vec![GeoPoint::new(0.0, 0.0), GeoPoint::new(3000.0, 0.0)];
        let net = StationNetwork::from_centroids(c.clone(), 10.0, 300.0).unwrap();
        assert_eq!(net.travel_time(0, 1), 300.0);
        assert_eq!(net.kappa(0, 1), 1);
        assert_eq!(net.kappa(1, 1), 0);
        assert_eq!(net.travel_distance(1, 1), 0.0);
        let net = StationNetwork::from_centroids(c.clone(), 10.0, 200.0).unwrap();
        assert_eq!(net.kappa(0, 1), 2);
        // Short hops still take a full step.
        let net = StationNetwork::from_centroids(c.clone(), 10.0, 10_000.0).unwrap();
        assert_eq!(net.kappa(1, 0), 1);
        assert!(StationNetwork::from_centroids(c.clone(), 0.0, 200.0).is_err());
        assert!(StationNetwork::from_centroids(c, -1.0, 200.0).is_err());
    }

    #[test]
    fn coincident_centroids_rejected() {
        let c = vec![GeoPoint::new(1.0, 1.0), GeoPoint::new(1.0, 1.0)];
        assert!(StationNetwork::from_centroids(c, 10.0, 60.0).is_err());
    }

    #[test]
    fn kmeans_clusters_are_nonempty_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<_> = (0..300)
            .map(|_| GeoPoint::new(rng.gen_range(0.0..10_000.0), rng.gen_range(0.0..10_000.0)))
            .collect();
        let a = kmeans_partition(&pts, 10, 42, 100).unwrap();
        let b = kmeans_partition(&pts, 10, 42, 100).unwrap();
        assert_eq!(a, b);
        let mut cnt = [0; 10];
        for &x in &a.assignment {
            cnt[x] += 1;
        }
        assert!(cnt.iter().all(|&c| c > 0));
        let lines = kmeans_partition(&line(10), 10, 9, 50).unwrap();
        assert_eq!(lines.sse, 0.0);
    }

    #[test]
    fn availability_counts_arrivals_by_step() {
        let mut s = FleetState::new(vec![2, 0]);
        s.in_transit.push(InTransit {
            destination: 1,
            arrival_step: 2,
            purpose: Purpose::Rebalance,
        });
        s.in_transit.push(InTransit {
            destination: 0,
            arrival_step: 9,
            purpose: Purpose::Customer,
        });
        let phi = s.availability(3);
        assert_eq!(phi, vec![vec![2, 0], vec![0, 0], vec![0, 1], vec![0, 0]]);
        assert_eq!(s.fleet_size(), 4);
    }

    #[test]
    fn projection_is_locally_metric() {
        let p = Projection { lat0: 37.77, lon0: -122.42 };
        let a = p.project(-122.42, 37.77);
        assert!(a.x.abs() < 1e-9 && a.y.abs() < 1e-9);
        let b = p.project(-122.42, 37.78);
        assert!((b.y - 1111.95).abs() < 0.5);
    }
}
