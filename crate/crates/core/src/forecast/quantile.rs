use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

// Acklam's rational approximation to the probit function.
const A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.024_25;

fn probit_rational(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -probit_rational(1.0 - p)
    }
}

/// Inverse standard normal CDF: rational approximation plus one Newton step.
pub fn probit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let x = probit_rational(p);
    let pdf = normal_pdf(x);
    if pdf > 0.0 {
        Ok(x - (normal_cdf(x) - p) / pdf)
    } else {
        Ok(x)
    }
}

/// `p`-quantile of N(mu, sigma^2).
pub fn gaussian_quantile(p: f64, mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid(format!("standard deviation must be non-negative, got {sigma}")));
    }
    let z = probit(p)?;
    if sigma == 0.0 {
        return Ok(mu);
    }
    Ok(mu + sigma * z)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_is_mean_exactly() {
        assert_eq!(gaussian_quantile(0.5, 3.25, 7.0).unwrap(), 3.25);
        assert_eq!(probit(0.5).unwrap(), 0.0);
    }

    #[test]
    fn zero_sigma_is_degenerate() {
        for p in [0.01, 0.3, 0.5, 0.99] {
            assert_eq!(gaussian_quantile(p, -1.5, 0.0).unwrap(), -1.5);
        }
    }

    #[test]
    fn rejects_out_of_range_probabilities() {
        for p in [0.0, 1.0, -0.2, 1.3, f64::NAN] {
            assert!(gaussian_quantile(p, 0.0, 1.0).is_err());
        }
        assert!(gaussian_quantile(0.4, 0.0, -1.0).is_err());
    }

    #[test]
    fn tails_round_trip_through_cdf() {
        for p in [1e-10, 1e-6, 0.001, 0.02, 0.0243, 0.0244, 0.2, 0.8, 0.97, 0.999, 1.0 - 1e-9] {
            let x = probit(p).unwrap();
            let back = normal_cdf(x);
            assert!((back - p).abs() <= 1e-12 * p.max(1e-3), "p={p}: {back}");
        }
    }
}
