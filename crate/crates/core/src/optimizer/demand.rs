use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{gaussian_quantile, ForecastTensor};

/// Integer request counts per (origin, destination, step).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemandTensor {
    pub n: usize,
    pub steps: usize,
    counts: Vec<u32>,
}

impl DemandTensor {
    pub fn zeros(n: usize, steps: usize) -> Self {
        Self {
            n,
            steps,
            counts: vec![0; n * n * steps],
        }
    }

    pub fn from_fn(n: usize, steps: usize, f: impl Fn(usize, usize, usize) -> u32) -> Self {
        let mut t = Self::zeros(n, steps);
        for i in 0..n {
            for j in 0..n {
                for k in 0..steps {
                    t.set(i, j, k, f(i, j, k));
                }
            }
        }
        t
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> u32 {
        self.counts[(i * self.n + j) * self.steps + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, v: u32) {
        self.counts[(i * self.n + j) * self.steps + k] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, k: usize, v: u32) {
        self.counts[(i * self.n + j) * self.steps + k] += v;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// `max(0, ceil(mu + sigma * z_{1-eps}))` per cell; the diagonal is zero.
pub fn quantile_demand(forecast: &ForecastTensor, epsilon: f64) -> Result<DemandTensor> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::invalid(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let (n, _, steps) = forecast.shape();
    let mut out = DemandTensor::zeros(n, steps);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            for k in 0..steps {
                let f = forecast.get(i, j, k);
                if !f.mean.is_finite() || !(f.std >= 0.0) {
                    return Err(Error::Numerical(format!("forecast for ({i}, {j}, {k}) is not usable: {f:?}")));
                }
                let q = gaussian_quantile(1.0 - epsilon, f.mean, f.std)?.ceil().max(0.0);
                out.set(i, j, k, q as u32);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::Forecast;

    #[test]
    fn quantile_rounding_and_clamping() {
        let mut f = ForecastTensor::new(2, 2);
        f.set(0, 1, 0, Forecast { mean: 2.0, std: 0.0 });
        f.set(0, 1, 1, Forecast { mean: -3.0, std: 1.0 });
        f.set(1, 0, 0, Forecast { mean: 2.0, std: 1.0 });
        f.set(1, 1, 0, Forecast { mean: 5.0, std: 1.0 });
        let q = quantile_demand(&f, 0.5).unwrap();
        assert_eq!(q.get(0, 1, 0), 2);
        f.set(0, 1, 0, Forecast { mean: 2.3, std: 0.0 });
        assert_eq!(quantile_demand(&f, 0.9).unwrap().get(0, 1, 0), 3);
        f.set(0, 1, 0, Forecast { mean: 0.0, std: 1.0 });
        assert_eq!(quantile_demand(&f, 0.7).unwrap().get(0, 1, 0), 0);
        assert_eq!(q.get(0, 1, 1), 0);
        assert_eq!(q.get(1, 0, 0), 2);
        assert_eq!(q.get(1, 1, 0), 0);
        // z_{0.9} = 1.2816: 2 + 1.28 -> 4.
        assert_eq!(quantile_demand(&f, 0.1).unwrap().get(1, 0, 0), 4);
        assert!(quantile_demand(&f, 0.0).is_err());
        assert!(quantile_demand(&f, 1.0).is_err());
    }
}
