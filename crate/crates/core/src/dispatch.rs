//! Matching waiting requests to idle vehicles.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::GeoPoint;

/// Rows are requests, columns are vehicles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!("{rows}x{cols} cost matrix needs {} entries, got {}", rows * cols, data.len())));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!("cost entries must be finite and non-negative, got {v}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::invalid("cost matrix rows have different lengths"));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Euclidean distances from each request to each vehicle.
    pub fn euclidean(requests: &[GeoPoint], vehicles: &[GeoPoint]) -> Self {
        let data = requests.iter().flat_map(|r| vehicles.iter().map(move |v| r.dist(v))).collect();
        Self {
            rows: requests.len(),
            cols: vehicles.len(),
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                data.push(self.get(r, c));
            }
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

/// (request, vehicle) pairs sorted by request, and their summed cost.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Assignment {
    pub pairs: Vec<(usize, usize)>,
    pub cost: f64,
}

/// Shortest augmenting path Hungarian method for `rows <= cols`.
///
/// Returns the column of each row plus row and column potentials with
/// `u[i] + v[j] <= c[i][j]` and `v <= 0`.
fn potentials(c: &CostMatrix) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let (n, m) = (c.rows, c.cols);
    debug_assert!(n <= m);
    // 1-based with a virtual column 0, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = c.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_col = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            row_col[p[j] - 1] = j - 1;
        }
    }
    (row_col, u[1..].to_vec(), v[1..].to_vec())
}

/// Minimum-cost matching of size `min(rows, cols)`.
///
/// Among all optimal matchings the one whose (row, col) pair list is
/// lexicographically smallest is returned.
pub fn hungarian(cost: &CostMatrix) -> Assignment {
    let (rows, cols) = (cost.rows, cost.cols);
    if rows == 0 || cols == 0 {
        return Assignment::default();
    }
    let tol = 1e-9 * cost.max().max(1.0);
    // Duals and an initial optimal matching, row -> col.
    let (row_dual, col_dual, initial): (Vec<f64>, Vec<f64>, Vec<Option<usize>>) = if rows <= cols {
        let (rc, u, v) = potentials(cost);
        (u, v, rc.into_iter().map(Some).collect())
    } else {
        let (cr, u, v) = potentials(&cost.transpose());
        let mut rc = vec![None; rows];
        for (c, &r) in cr.iter().enumerate() {
            rc[r] = Some(c);
        }
        (v, u, rc)
    };

    // Square tight-edge graph; padding rows/cols may only take entries whose dual is zero.
    let size = rows.max(cols);
    let must_row: Vec<bool> = row_dual.iter().map(|&u| rows > cols && u < -tol).collect();
    let must_col: Vec<bool> = col_dual.iter().map(|&v| rows <= cols && v < -tol).collect();
    let allowed = |r: usize, c: usize| -> bool {
        match (r < rows, c < cols) {
            (true, true) => (cost.get(r, c) - row_dual[r] - col_dual[c]).abs() <= tol,
            (true, false) => !must_row[r],
            (false, true) => !must_col[c],
            (false, false) => false,
        }
    };

    let mut match_row = vec![usize::MAX; size];
    let mut match_col = vec![usize::MAX; size];
    for (r, c) in initial.iter().enumerate() {
        if let Some(c) = *c {
            match_row[r] = c;
            match_col[c] = r;
        }
    }
    let free: Vec<usize> = (0..size).filter(|&c| match_col[c] == usize::MAX).collect();
    let mut free_cols = free.into_iter();
    for r in 0..size {
        if match_row[r] == usize::MAX {
            let c = free_cols.next().expect("square completion");
            match_row[r] = c;
            match_col[c] = r;
        }
    }

    let mut fixed = vec![false; size];
    let mut parent_col = vec![usize::MAX; size];
    let mut seen = vec![false; size];
    for r in 0..rows {
        for c in 0..size {
            // Padding columns are interchangeable.
            if match_row[r] == c || (c >= cols && match_row[r] >= cols) {
                break;
            }
            if !allowed(r, c) || fixed[match_col[c]] {
                continue;
            }
            // Give c to r; its previous owner must reach r's old column by an alternating path.
            let old = match_row[r];
            let start = match_col[c];
            seen.iter_mut().for_each(|s| *s = false);
            let mut queue = VecDeque::from([start]);
            let mut found = false;
            'bfs: while let Some(x) = queue.pop_front() {
                for j in 0..size {
                    if seen[j] || j == c || !allowed(x, j) {
                        continue;
                    }
                    let owner = match_col[j];
                    if j != old && (fixed[owner] || owner == r) {
                        continue;
                    }
                    seen[j] = true;
                    parent_col[j] = x;
                    if j == old {
                        found = true;
                        break 'bfs;
                    }
                    queue.push_back(owner);
                }
            }
            if !found {
                continue;
            }
            let mut j = old;
            loop {
                let x = parent_col[j];
                let next = match_row[x];
                match_row[x] = j;
                match_col[j] = x;
                if x == start {
                    break;
                }
                j = next;
            }
            match_row[r] = c;
            match_col[c] = r;
            break;
        }
        fixed[r] = true;
    }

    let pairs: Vec<(usize, usize)> = (0..rows).filter(|&r| match_row[r] < cols).map(|r| (r, match_row[r])).collect();
    let total = pairs.iter().map(|&(r, c)| cost.get(r, c)).sum();
    Assignment { pairs, cost: total }
}

/// Match waiting requests to idle vehicles of one station by pickup distance.
pub fn match_in_station(requests: &[GeoPoint], vehicles: &[GeoPoint]) -> Assignment {
    hungarian(&CostMatrix::euclidean(requests, vehicles))
}

/// Global bipartite matching over every waiting request and idle vehicle.
pub fn gbm_dispatch(requests: &[GeoPoint], vehicles: &[GeoPoint]) -> Assignment {
    hungarian(&CostMatrix::euclidean(requests, vehicles))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> CostMatrix {
        CostMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn small_cases() {
        let a = hungarian(&m(&[&[5.0]]));
        assert_eq!(a.pairs, vec![(0, 0)]);
        assert_eq!(a.cost, 5.0);
        let a = hungarian(&m(&[&[1.0, 2.0], &[2.0, 1.0]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        assert_eq!(a.cost, 2.0);
        assert_eq!(hungarian(&CostMatrix::new(0, 3, vec![]).unwrap()), Assignment::default());
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let a = hungarian(&m(&[&[1.0, 1.0], &[1.0, 1.0]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // Row 0 could take column 2 or 0 at equal total; column 0 wins.
        let a = hungarian(&m(&[&[3.0, 9.0, 3.0], &[9.0, 1.0, 9.0]]));
        assert_eq!(a.pairs, vec![(0, 0), (1, 1)]);
        // More requests than vehicles: rows 0 and 1 are interchangeable, so row 0 is served.
        let a = hungarian(&m(&[&[2.0], &[2.0], &[5.0]]));
        assert_eq!(a.pairs, vec![(0, 0)]);
        let a = hungarian(&m(&[&[4.0, 4.0], &[4.0, 4.0], &[1.0, 7.0]]));
        assert_eq!(a.pairs, vec![(0, 1), (2, 0)]);
        assert_eq!(a.cost, 5.0);
    }

    #[test]
    fn rectangular_in_both_orientations() {
        let c = m(&[&[4.0, 1.0, 3.0], &[2.0, 0.0, 5.0]]);
        let a = hungarian(&c);
        assert_eq!(a.cost, 3.0);
        let t = hungarian(&c.transpose());
        assert_eq!(t.cost, 3.0);
        assert_eq!(a.pairs.len(), 2);
        assert_eq!(t.pairs.len(), 2);
    }

    #[test]
    fn nearest_request_or_vehicle_wins() {
        let v = [GeoPoint::new(0.0, 0.0)];
        let r = [GeoPoint::new(50.0, 0.0), GeoPoint::new(10.0, 0.0)];
        assert_eq!(match_in_station(&r, &v).pairs, vec![(1, 0)]);
        let v = [GeoPoint::new(200.0, 0.0), GeoPoint::new(100.0, 0.0)];
        let a = gbm_dispatch(&[GeoPoint::new(0.0, 0.0)], &v);
        assert_eq!(a.pairs, vec![(0, 1)]);
        assert_eq!(a.cost, 100.0);
        assert!(gbm_dispatch(&[GeoPoint::new(0.0, 0.0)], &[]).pairs.is_empty());
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(CostMatrix::new(1, 1, vec![-1.0]).is_err());
        assert!(CostMatrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMatrix::new(1, 2, vec![1.0]).is_err());
    }
}
