use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Unit-variance covariance function over scalar time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { lengthscale: f64 },
    Periodic { lengthscale: f64, period: f64 },
    Product { left: Box<Kernel>, right: Box<Kernel> },
}

/// A kernel scaled by an output variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kernel: Kernel,
    pub output_scale: f64,
}

impl Kernel {
    pub fn rbf(lengthscale: f64) -> Self {
        Kernel::Rbf { lengthscale }
    }

    pub fn periodic(lengthscale: f64, period: f64) -> Self {
        Kernel::Periodic { lengthscale, period }
    }

    pub fn product(left: Kernel, right: Kernel) -> Self {
        Kernel::Product {
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// RBF times periodic.
    pub fn locally_periodic(rbf_lengthscale: f64, periodic_lengthscale: f64, period: f64) -> Self {
        Self::product(Self::rbf(rbf_lengthscale), Self::periodic(periodic_lengthscale, period))
    }

    pub fn n_params(&self) -> usize {
        match self {
            Kernel::Rbf { .. } => 1,
            Kernel::Periodic { .. } => 2,
            Kernel::Product { left, right } => left.n_params() + right.n_params(),
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Kernel::Rbf { lengthscale } => (-r * r / (2.0 * lengthscale * lengthscale)).exp(),
            Kernel::Periodic { lengthscale, period } => {
                let s = (PI * r / period).sin();
                (-2.0 * s * s / (lengthscale * lengthscale)).exp()
            }
            Kernel::Product { ref left, ref right } => left.eval(r) * right.eval(r),
        }
    }

    /// Value at lag `r` and its derivatives with respect to each log-parameter,
    /// written into `grad[..n_params()]`.
    pub fn eval_with_grad(&self, r: f64, grad: &mut [f64]) -> f64 {
        match *self {
            Kernel::Rbf { lengthscale } => {
                let l2 = lengthscale * lengthscale;
                let k = (-r * r / (2.0 * l2)).exp();
                grad[0] = k * r * r / l2;
                k
            }
            Kernel::Periodic { lengthscale, period } => {
                let l2 = lengthscale * lengthscale;
                let arg = PI * r / period;
                let (s, c) = arg.sin_cos();
                let k = (-2.0 * s * s / l2).exp();
                grad[0] = k * 4.0 * s * s / l2;
                grad[1] = k * 4.0 * s * c * arg / l2;
                k
            }
            Kernel::Product { ref left, ref right } => {
                let nl = left.n_params();
                let (gl, gr) = grad.split_at_mut(nl);
                let kl = left.eval_with_grad(r, gl);
                let kr = right.eval_with_grad(r, gr);
                for g in gl.iter_mut() {
                    *g *= kr;
                }
                for g in gr[..right.n_params()].iter_mut() {
                    *g *= kl;
                }
                kl * kr
            }
        }
    }

    fn push_params(&self, out: &mut Vec<f64>) {
        match self {
            Kernel::Rbf { lengthscale } => out.push(*lengthscale),
            Kernel::Periodic { lengthscale, period } => {
                out.push(*lengthscale);
                out.push(*period);
            }
            Kernel::Product { left, right } => {
                left.push_params(out);
                right.push_params(out);
            }
        }
    }

    fn set_params(&mut self, vals: &mut impl Iterator<Item = f64>) {
        match self {
            Kernel::Rbf { lengthscale } => *lengthscale = vals.next().unwrap_or(*lengthscale),
            Kernel::Periodic { lengthscale, period } => {
                *lengthscale = vals.next().unwrap_or(*lengthscale);
                *period = vals.next().unwrap_or(*period);
            }
            Kernel::Product { left, right } => {
                left.set_params(vals);
                right.set_params(vals);
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        match self {
            Kernel::Rbf { lengthscale } if ok(*lengthscale) => Ok(()),
            Kernel::Periodic { lengthscale, period } if ok(*lengthscale) && ok(*period) => Ok(()),
            Kernel::Product { left, right } => {
                left.validate()?;
                right.validate()
            }
            other => Err(Error::invalid(format!("kernel hyperparameters must be positive: {other}"))),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Rbf { lengthscale } => write!(f, "rbf(l={lengthscale})"),
            Kernel::Periodic { lengthscale, period } => write!(f, "periodic(l={lengthscale}, p={period})"),
            Kernel::Product { left, right } => write!(f, "{left} * {right}"),
        }
    }
}

impl KernelSpec {
    pub fn new(kernel: Kernel, output_scale: f64) -> Self {
        Self { kernel, output_scale }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.output_scale >= 0.0 && self.output_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "output scale must be non-negative, got {}",
                self.output_scale
            )));
        }
        self.kernel.validate()
    }

    /// Covariance between two time points.
    pub fn eval(&self, t: f64, t_prime: f64) -> f64 {
        self.output_scale * self.kernel.eval(t - t_prime)
    }

    /// Output scale followed by the kernel's own parameters.
    pub fn params(&self) -> Vec<f64> {
        let mut out = vec![self.output_scale];
        self.kernel.push_params(&mut out);
        out
    }

    pub fn n_params(&self) -> usize {
        1 + self.kernel.n_params()
    }

    pub fn with_params(&self, vals: &[f64]) -> Self {
        let mut next = self.clone();
        next.output_scale = vals[0];
        next.kernel.set_params(&mut vals[1..].iter().copied());
        next
    }

    /// `grad` receives d k / d log(theta) for every parameter in [`Self::params`] order.
    pub fn eval_with_grad(&self, r: f64, grad: &mut [f64]) -> f64 {
        let base = self.kernel.eval_with_grad(r, &mut grad[1..]);
        for g in grad[1..self.n_params()].iter_mut() {
            *g *= self.output_scale;
        }
        let k = self.output_scale * base;
        grad[0] = k;
        k
    }
}

/// Free-function form of [`KernelSpec::eval`].
pub fn kernel_eval(spec: &KernelSpec, t: f64, t_prime: f64) -> f64 {
    spec.eval(t, t_prime)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rbf_at_zero_lag_is_output_scale() {
        let k = KernelSpec::new(Kernel::rbf(0.37), 1.0);
        assert_eq!(kernel_eval(&k, 4.2, 4.2), 1.0);
        let k = KernelSpec::new(Kernel::rbf(0.37), 2.5);
        assert_eq!(kernel_eval(&k, 1.0, 1.0), 2.5);
    }

    #[test]
    fn periodic_is_perfectly_correlated_one_period_apart() {
        let p = 24.0;
        let k = KernelSpec::new(Kernel::periodic(3.0, p), 1.0);
        assert!((kernel_eval(&k, 5.0, 5.0 + p) - 1.0).abs() < 1e-12);
        assert!((kernel_eval(&k, 5.0, 5.0 + 3.0 * p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn locally_periodic_factorizes() {
        let p = 7.0;
        let spec = KernelSpec::new(Kernel::locally_periodic(2.0 * p, 0.9, p), 1.0);
        let rbf = KernelSpec::new(Kernel::rbf(2.0 * p), 1.0).eval(0.0, p);
        let per = KernelSpec::new(Kernel::periodic(0.9, p), 1.0).eval(0.0, p);
        let want = (-1.0f64 / 8.0).exp();
        assert!((rbf * per - want).abs() < 1e-12);
        assert!((spec.eval(0.0, p) - want).abs() < 1e-12);
    }

    #[test]
    fn param_round_trip_order() {
        let spec = KernelSpec::new(Kernel::locally_periodic(1.0, 2.0, 3.0), 4.0);
        assert_eq!(spec.params(), vec![4.0, 1.0, 2.0, 3.0]);
        let moved = spec.with_params(&[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(moved.params(), vec![5.0, 6.0, 7.0, 8.0]);
    }

    #[test]
    fn kernel_derivatives_match_finite_differences() {
        let spec = KernelSpec::new(Kernel::locally_periodic(1.7, 0.8, 5.3), 1.9);
        let h = 1e-6;
        for &r in &[0.0, 0.4, 1.3, -2.2, 7.5] {
            let mut g = vec![0.0; spec.n_params()];
            spec.eval_with_grad(r, &mut g);
            let logp: Vec<f64> = spec.params().iter().map(|v| v.ln()).collect();
            for i in 0..logp.len() {
                let mut up = logp.clone();
                let mut dn = logp.clone();
                up[i] += h;
                dn[i] -= h;
                let fu = spec.with_params(&up.iter().map(|v| v.exp()).collect::<Vec<_>>()).eval(0.0, r);
                let fd = spec.with_params(&dn.iter().map(|v| v.exp()).collect::<Vec<_>>()).eval(0.0, r);
                let fdiff = (fu - fd) / (2.0 * h);
                assert!((fdiff - g[i]).abs() < 1e-7, "r={r} i={i}: {fdiff} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(KernelSpec::new(Kernel::rbf(0.0), 1.0).validate().is_err());
        assert!(KernelSpec::new(Kernel::periodic(1.0, -2.0), 1.0).validate().is_err());
        assert!(KernelSpec::new(Kernel::rbf(1.0), -1.0).validate().is_err());
        assert!(KernelSpec::new(Kernel::rbf(1.0), 0.0).validate().is_ok());
    }
}
