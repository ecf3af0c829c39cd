//! Exact Gaussian-process regression on scalar time inputs.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::kernel::KernelSpec;
use crate::error::{Error, Result};

const LOG_2PI: f64 = 1.837_877_066_409_345_3;
const JITTER_REL: f64 = 1e-6;
const JITTER_ESCALATIONS: usize = 3;

/// Observed series: strictly increasing times (hours) and real-valued targets.
#[derive(Debug, Clone, PartialEq)]
pub struct GpTrainingSet {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
    pub noise_variance: f64,
}

impl GpTrainingSet {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>, noise_variance: f64) -> Result<Self> {
        let set = Self {
            inputs,
            targets,
            noise_variance,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if self.inputs.len() != self.targets.len() {
            return Err(Error::invalid("inputs and targets differ in length"));
        }
        if self.inputs.iter().chain(&self.targets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("training data must be finite"));
        }
        if self.inputs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("training inputs must be strictly increasing"));
        }
        if !(self.noise_variance > 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::invalid(format!(
                "noise variance must be positive, got {}",
                self.noise_variance
            )));
        }
        Ok(())
    }

    pub fn target_mean(&self) -> f64 {
        self.targets.iter().sum::<f64>() / self.targets.len().max(1) as f64
    }

    pub fn target_variance(&self) -> f64 {
        let m = self.target_mean();
        self.targets.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / self.targets.len().max(1) as f64
    }

    /// Copy with the target mean removed, and that mean.
    pub fn centered(&self) -> (GpTrainingSet, f64) {
        let m = self.target_mean();
        let mut out = self.clone();
        for y in &mut out.targets {
            *y -= m;
        }
        (out, m)
    }
}

/// Noise-free covariance matrix K over the inputs.
pub fn kernel_matrix(spec: &KernelSpec, inputs: &[f64]) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = spec.eval(inputs[i], inputs[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Sigma = K + (noise + jitter) I.
pub fn gram_matrix(spec: &KernelSpec, inputs: &[f64], noise_variance: f64, jitter: f64) -> DMatrix<f64> {
    let mut k = kernel_matrix(spec, inputs);
    for i in 0..inputs.len() {
        k[(i, i)] += noise_variance + jitter;
    }
    k
}

/// Base jitter: a small fraction of the mean prior variance.
pub fn base_jitter(spec: &KernelSpec, inputs: &[f64]) -> f64 {
    let n = inputs.len().max(1) as f64;
    JITTER_REL * inputs.iter().map(|&t| spec.eval(t, t)).sum::<f64>() / n
}

/// Cholesky factor of the training covariance.
pub struct FactoredGram {
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
    /// Number of x10 jitter escalations used.
    pub escalations: usize,
}

/// Factorize Sigma, escalating the jitter x10 up to three times.
pub fn factor_gram(spec: &KernelSpec, data: &GpTrainingSet) -> Result<FactoredGram> {
    let mut jitter = base_jitter(spec, &data.inputs);
    let mut sigma = gram_matrix(spec, &data.inputs, data.noise_variance, jitter);
    for escalations in 0..=JITTER_ESCALATIONS {
        if let Some(chol) = sigma.clone().cholesky() {
            return Ok(FactoredGram {
                chol,
                jitter,
                escalations,
            });
        }
        let bump = jitter * 9.0;
        for i in 0..data.len() {
            sigma[(i, i)] += bump;
        }
        jitter *= 10.0;
    }
    Err(Error::Numerical(format!(
        "covariance not positive definite after {JITTER_ESCALATIONS} jitter escalations"
    )))
}

fn log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// log p(y | t, theta) = -1/2 y' Sigma^-1 y - 1/2 log|Sigma| - n/2 log 2 pi.
pub fn log_marginal_likelihood(data: &GpTrainingSet, spec: &KernelSpec) -> Result<f64> {
    data.validate()?;
    spec.validate()?;
    let f = factor_gram(spec, data)?;
    Ok(lml_from_factor(data, &f))
}

fn lml_from_factor(data: &GpTrainingSet, f: &FactoredGram) -> f64 {
    let y = DVector::from_column_slice(&data.targets);
    let alpha = f.chol.solve(&y);
    let n = data.len() as f64;
    -0.5 * y.dot(&alpha) - 0.5 * log_det(&f.chol) - 0.5 * n * LOG_2PI
}

/// Gradient of the log marginal likelihood with respect to the
/// log-hyperparameters: kernel parameters in [`KernelSpec::params`] order,
/// then the noise variance.
///
/// Each component is 1/2 y' S^-1 dS S^-1 y - 1/2 tr(S^-1 dS), evaluated as
/// 1/2 sum((a a' - S^-1) .* dS) with a = S^-1 y.
pub fn lml_gradient(data: &GpTrainingSet, spec: &KernelSpec) -> Result<Vec<f64>> {
    data.validate()?;
    spec.validate()?;
    let f = factor_gram(spec, data)?;
    Ok(gradient_from_factor(data, spec, &f))
}

fn gradient_from_factor(data: &GpTrainingSet, spec: &KernelSpec, f: &FactoredGram) -> Vec<f64> {
    let n = data.len();
    let p = spec.n_params();
    let y = DVector::from_column_slice(&data.targets);
    let alpha = f.chol.solve(&y);
    let inv = f.chol.inverse();

    // The jitter tracks the mean prior variance, so it moves with the kernel
    // parameters too: d(jitter)/d(theta) = (jitter / mean k(t,t)) * mean dk(t,t).
    let mut diag_grad = vec![0.0; p];
    spec.eval_with_grad(0.0, &mut diag_grad);
    let jitter_ratio = f.jitter / spec.eval(0.0, 0.0).max(f64::MIN_POSITIVE);

    let mut grad = vec![0.0; p + 1];
    let mut dk = vec![0.0; p];
    for i in 0..n {
        for j in 0..i {
            let w = alpha[i] * alpha[j] - inv[(i, j)];
            spec.eval_with_grad(data.inputs[i] - data.inputs[j], &mut dk);
            // Off-diagonal pairs appear twice in the symmetric sum.
            for (g, d) in grad.iter_mut().zip(&dk) {
                *g += w * d;
            }
        }
    }
    let mut diag_w = 0.0;
    for i in 0..n {
        diag_w += alpha[i] * alpha[i] - inv[(i, i)];
    }
    for k in 0..p {
        grad[k] += 0.5 * diag_w * diag_grad[k] * (1.0 + jitter_ratio);
    }
    grad[p] = 0.5 * diag_w * data.noise_variance;
    grad
}

/// Optimizer settings for hyperparameter fitting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iters: usize,
    pub learning_rate: f64,
    /// Stop once the log-space gradient norm drops below this.
    pub tolerance: f64,
    pub optimize_noise: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iters: 60,
            learning_rate: 0.01,
            tolerance: 1e-3,
            optimize_noise: true,
        }
    }
}

/// Posterior predictive at one time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub mean: f64,
    pub std: f64,
}

impl Forecast {
    pub const ZERO: Forecast = Forecast { mean: 0.0, std: 0.0 };
}

/// GP conditioned on its training data with fixed hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainedGp {
    pub kernel: KernelSpec,
    pub noise_variance: f64,
    /// Target mean removed before conditioning; added back by `predict`.
    pub offset: f64,
    pub lml: f64,
    /// Accepted log marginal likelihood values, starting at the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
    chol_l: DMatrix<f64>,
    alpha: DVector<f64>,
}

impl TrainedGp {
    /// Condition on `data` (centered internally) without optimizing.
    pub fn fit(data: &GpTrainingSet, spec: &KernelSpec) -> Result<Self> {
        data.validate()?;
        spec.validate()?;
        let (centered, offset) = data.centered();
        Self::condition(&centered, spec, offset, Vec::new(), 0)
    }

    /// Condition on `data` exactly as given (no centering).
    pub fn fit_uncentered(data: &GpTrainingSet, spec: &KernelSpec) -> Result<Self> {
        data.validate()?;
        spec.validate()?;
        Self::condition(data, spec, 0.0, Vec::new(), 0)
    }

    fn condition(data: &GpTrainingSet, spec: &KernelSpec, offset: f64, trace: Vec<f64>, iterations: usize) -> Result<Self> {
        let f = factor_gram(spec, data)?;
        let lml = lml_from_factor(data, &f);
        let y = DVector::from_column_slice(&data.targets);
        let alpha = f.chol.solve(&y);
        Ok(Self {
            kernel: spec.clone(),
            noise_variance: data.noise_variance,
            offset,
            lml,
            trace,
            iterations,
            inputs: data.inputs.clone(),
            targets: data.targets.iter().map(|y| y + offset).collect(),
            chol_l: f.chol.l(),
            alpha,
        })
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    /// Training targets in their original (uncentered) units.
    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Predictive mean and standard deviation of a new observation at `t_star`.
    pub fn predict(&self, t_star: f64) -> Forecast {
        let n = self.inputs.len();
        let kstar = DVector::from_iterator(n, self.inputs.iter().map(|&t| self.kernel.eval(t_star, t)));
        let mean = self.offset + kstar.dot(&self.alpha);
        let v = self
            .chol_l
            .solve_lower_triangular(&kstar)
            .unwrap_or_else(|| DVector::zeros(n));
        let var = self.kernel.eval(t_star, t_star) + self.noise_variance - v.dot(&v);
        Forecast {
            mean,
            std: var.max(0.0).sqrt(),
        }
    }

    pub fn predict_many(&self, times: &[f64]) -> Vec<Forecast> {
        times.iter().map(|&t| self.predict(t)).collect()
    }
}

/// Free-function form of [`TrainedGp::predict`].
pub fn predict(gp: &TrainedGp, t_star: f64) -> Forecast {
    gp.predict(t_star)
}

fn pack(spec: &KernelSpec, noise: f64) -> Vec<f64> {
    spec.params().iter().chain(std::iter::once(&noise)).map(|v| v.ln()).collect()
}

fn unpack(template: &KernelSpec, logp: &[f64]) -> (KernelSpec, f64) {
    let vals: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
    let (k, noise) = vals.split_at(vals.len() - 1);
    (template.with_params(k), noise[0])
}

/// Maximize the log marginal likelihood by gradient ascent in log-parameter
/// space with step halving. Targets are centered first.
pub fn train(data: &GpTrainingSet, init: &KernelSpec, cfg: &TrainConfig) -> Result<TrainedGp> {
    data.validate()?;
    init.validate()?;
    if init.params().iter().any(|&v| v <= 0.0) {
        return Err(Error::invalid("initial hyperparameters must be strictly positive"));
    }
    let (centered, offset) = data.centered();

    let evaluate = |logp: &[f64]| -> Option<(f64, Vec<f64>)> {
        let (spec, noise) = unpack(init, logp);
        if !spec.params().iter().chain(std::iter::once(&noise)).all(|v| v.is_finite() && *v > 0.0) {
            return None;
        }
        let set = GpTrainingSet {
            noise_variance: noise,
            ..centered.clone()
        };
        let f = factor_gram(&spec, &set).ok()?;
        let lml = lml_from_factor(&set, &f);
        if !lml.is_finite() {
            return None;
        }
        let mut g = gradient_from_factor(&set, &spec, &f);
        if !cfg.optimize_noise {
            *g.last_mut().unwrap() = 0.0;
        }
        Some((lml, g))
    };

    let mut theta = pack(init, data.noise_variance);
    let (mut lml, mut grad) = evaluate(&theta)
        .ok_or_else(|| Error::invalid("log marginal likelihood is not finite at the initial hyperparameters"))?;
    let mut trace = vec![lml];
    let mut lr = cfg.learning_rate;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < cfg.tolerance {
            break;
        }
        iterations += 1;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t + lr * g).collect();
            match evaluate(&cand) {
                Some((l, g)) if l > lml => {
                    theta = cand;
                    lml = l;
                    grad = g;
                    accepted = true;
                    break;
                }
                _ => lr *= 0.5,
            }
        }
        if !accepted {
            break;
        }
        trace.push(lml);
        lr *= 1.5;
    }

    let (spec, noise) = unpack(init, &theta);
    let set = GpTrainingSet {
        noise_variance: noise,
        ..centered
    };
    TrainedGp::condition(&set, &spec, offset, trace, iterations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::kernel::Kernel;

    fn rbf(l: f64) -> KernelSpec {
        KernelSpec::new(Kernel::rbf(l), 1.0)
    }

    #[test]
    fn single_point_gram() {
        let spec = rbf(1.0);
        let g = gram_matrix(&spec, &[3.0], 0.2, 1e-6);
        assert_eq!(g.nrows(), 1);
        assert!((g[(0, 0)] - 1.200001).abs() < 1e-15);
    }

    #[test]
    fn gram_is_exactly_symmetric() {
        let spec = KernelSpec::new(Kernel::locally_periodic(2.0, 1.0, 24.0), 3.0);
        let t = [0.0, 0.7, 1.9, 5.5, 12.25, 30.0];
        let g = gram_matrix(&spec, &t, 0.1, 1e-6);
        assert_eq!(g, g.transpose());
    }

    #[test]
    fn single_zero_target_lml() {
        let spec = rbf(1.0);
        let data = GpTrainingSet::new(vec![0.0], vec![0.0], 0.5).unwrap();
        let v = 1.0 + 0.5 + base_jitter(&spec, &data.inputs);
        let want = -0.5 * v.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let got = log_marginal_likelihood(&data, &spec).unwrap();
        assert!((got - want).abs() < 1e-14);
        // Quadratic term vanishes: the noise gradient is pure trace term.
        let g = lml_gradient(&data, &spec).unwrap();
        assert!((g[2] - (-0.5 / v * 0.5)).abs() < 1e-14);
    }

    #[test]
    fn zero_targets_depend_on_lengthscale_only_through_log_det() {
        let t = vec![0.0, 0.5, 1.5];
        let data = GpTrainingSet::new(t.clone(), vec![0.0; 3], 0.1).unwrap();
        for l in [0.3, 1.0, 4.0] {
            let spec = rbf(l);
            let sigma = gram_matrix(&spec, &t, 0.1, base_jitter(&spec, &t));
            let det = sigma.determinant();
            let want = -0.5 * det.ln() - 1.5 * LOG_2PI;
            assert!((log_marginal_likelihood(&data, &spec).unwrap() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_sets_rejected() {
        assert!(GpTrainingSet::new(vec![], vec![], 1.0).is_err());
        assert!(GpTrainingSet::new(vec![1.0, 1.0], vec![0.0, 0.0], 1.0).is_err());
        assert!(GpTrainingSet::new(vec![1.0], vec![0.0], 0.0).is_err());
        assert!(GpTrainingSet::new(vec![1.0], vec![f64::NAN], 1.0).is_err());
    }

    #[test]
    fn training_from_stationary_point_keeps_it() {
        // Constant targets center to zero; the optimum sends noise down but the
        // returned LML must never fall below the start.
        let data = GpTrainingSet::new(vec![0.0, 1.0, 2.0], vec![1.0, 1.0, 1.0], 0.1).unwrap();
        let init = rbf(1.0);
        let gp = train(&data, &init, &TrainConfig::default()).unwrap();
        assert!(gp.lml >= gp.trace[0]);
        assert!(gp.trace.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn train_stops_immediately_when_gradient_is_small() {
        let data = GpTrainingSet::new(vec![0.0, 1.0], vec![0.3, -0.3], 0.2).unwrap();
        let init = rbf(1.0);
        let cfg = TrainConfig {
            tolerance: 1e9,
            ..TrainConfig::default()
        };
        let gp = train(&data, &init, &cfg).unwrap();
        assert_eq!(gp.iterations, 0);
        assert_eq!(gp.kernel, init);
        assert_eq!(gp.noise_variance, 0.2);
    }
}
