//! Demand forecasting: one Gaussian process per ordered station pair.

mod gp;
mod kernel;
mod persist;
mod quantile;

pub use gp::{
    base_jitter, factor_gram, gram_matrix, kernel_matrix, lml_gradient, log_marginal_likelihood, predict, train,
    FactoredGram, Forecast, GpTrainingSet, TrainConfig, TrainedGp,
};
pub use kernel::{kernel_eval, Kernel, KernelSpec};
pub use persist::{load_models, save_models, SavedFlow, SavedModels};
pub use quantile::{gaussian_quantile, normal_cdf, probit};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Request counts per ordered station pair per time bin.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    n: usize,
    origin_seconds: f64,
    bin_seconds: f64,
    n_bins: usize,
    counts: Vec<u32>,
}

impl DemandSeries {
    pub fn new(n: usize, origin_seconds: f64, bin_seconds: f64, n_bins: usize) -> Result<Self> {
        if !(bin_seconds > 0.0) {
            return Err(Error::invalid("bin width must be positive"));
        }
        Ok(Self {
            n,
            origin_seconds,
            bin_seconds,
            n_bins,
            counts: vec![0; n * n * n_bins],
        })
    }

    /// Bin `(time, origin, destination)` events; events outside the series are ignored.
    pub fn from_events(
        n: usize,
        origin_seconds: f64,
        bin_seconds: f64,
        n_bins: usize,
        events: impl IntoIterator<Item = (f64, usize, usize)>,
    ) -> Result<Self> {
        let mut s = Self::new(n, origin_seconds, bin_seconds, n_bins)?;
        for (t, o, d) in events {
            if let Some(b) = s.bin_of(t) {
                s.counts[(o * n + d) * n_bins + b] += 1;
            }
        }
        Ok(s)
    }

    pub fn n_stations(&self) -> usize {
        self.n
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_seconds(&self) -> f64 {
        self.bin_seconds
    }

    pub fn origin_seconds(&self) -> f64 {
        self.origin_seconds
    }

    pub fn bin_of(&self, t: f64) -> Option<usize> {
        let rel = (t - self.origin_seconds) / self.bin_seconds;
        (rel >= 0.0 && rel < self.n_bins as f64).then(|| rel as usize)
    }

    pub fn flow(&self, i: usize, j: usize) -> &[u32] {
        let start = (i * self.n + j) * self.n_bins;
        &self.counts[start..start + self.n_bins]
    }

    /// Bin midpoint in hours since the series origin.
    pub fn bin_hours(&self, bin: usize) -> f64 {
        (bin as f64 + 0.5) * self.bin_seconds / 3600.0
    }
}

/// Initial hyperparameters for a flow, given its target variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelInit {
    pub rbf_lengthscale_hours: f64,
    pub periodic_lengthscale: f64,
    pub period_hours: f64,
    /// Initial noise variance as a fraction of the target variance.
    pub noise_fraction: f64,
}

impl Default for KernelInit {
    fn default() -> Self {
        Self {
            rbf_lengthscale_hours: 3.0,
            periodic_lengthscale: 3.0,
            period_hours: 24.0,
            noise_fraction: 0.1,
        }
    }
}

impl KernelInit {
    /// Long RBF lengthscale and a sharp periodic factor, so the daily shape
    /// carries over several days.
    pub fn multi_day() -> Self {
        Self {
            rbf_lengthscale_hours: 72.0,
            periodic_lengthscale: 0.7,
            ..Self::default()
        }
    }

    pub fn spec(&self, variance: f64) -> KernelSpec {
        KernelSpec::new(
            Kernel::locally_periodic(self.rbf_lengthscale_hours, self.periodic_lengthscale, self.period_hours),
            variance,
        )
    }
}

/// Per-flow training settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowTrainingConfig {
    /// Most recent bins used for training.
    pub window_bins: usize,
    pub init: KernelInit,
    /// Second starting point; the fit with the higher marginal likelihood is kept.
    pub alt_init: Option<KernelInit>,
    pub train: TrainConfig,
}

impl Default for FlowTrainingConfig {
    fn default() -> Self {
        Self {
            window_bins: 5 * 24,
            init: KernelInit::default(),
            alt_init: Some(KernelInit::multi_day()),
            train: TrainConfig::default(),
        }
    }
}

/// Forecast model for one flow.
#[derive(Debug, Clone)]
pub enum FlowModel {
    /// No demand observed in the window.
    Zero,
    /// Fallback when a GP cannot be fit.
    Constant(Forecast),
    Gp(Box<TrainedGp>),
}

impl FlowModel {
    pub fn predict(&self, t_hours: f64) -> Forecast {
        match self {
            FlowModel::Zero => Forecast::ZERO,
            FlowModel::Constant(f) => *f,
            FlowModel::Gp(gp) => gp.predict(t_hours),
        }
    }
}

/// One model per ordered station pair plus the time base they were fit on.
#[derive(Debug, Clone)]
pub struct FlowModels {
    pub n: usize,
    pub origin_seconds: f64,
    pub bin_seconds: f64,
    pub window_start_bin: usize,
    pub window_bins: usize,
    pub models: Vec<FlowModel>,
}

impl FlowModels {
    pub fn model(&self, i: usize, j: usize) -> &FlowModel {
        &self.models[i * self.n + j]
    }

    fn hours(&self, t_seconds: f64) -> f64 {
        (t_seconds - self.origin_seconds) / 3600.0
    }

    /// Forecast for horizon steps k = 0..=horizon. Step k >= 1 covers
    /// `[now + (k - 1) * step, now + k * step)` and is evaluated at the
    /// interval midpoint, rescaled from the model's bin width to the step
    /// width. Step 0 is left at zero: the current step sees waiting requests only.
    pub fn horizon(&self, now_seconds: f64, step_seconds: f64, horizon: usize) -> ForecastTensor {
        let times: Vec<f64> = (1..=horizon)
            .map(|k| self.hours(now_seconds + (k as f64 - 0.5) * step_seconds))
            .collect();
        let ahead = forecast_demand(self, &times);
        let mut tensor = ForecastTensor::new(self.n, horizon + 1);
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 1..=horizon {
                    tensor.set(i, j, k, ahead.get(i, j, k - 1));
                }
            }
        }
        let ratio = step_seconds / self.bin_seconds;
        if ratio != 1.0 {
            let sr = ratio.sqrt();
            for f in &mut tensor.cells {
                f.mean *= ratio;
                f.std *= sr;
            }
        }
        tensor
    }
}

/// Predictive mean and std per (origin, destination, step).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTensor {
    pub n: usize,
    pub steps: usize,
    cells: Vec<Forecast>,
}

impl ForecastTensor {
    pub fn new(n: usize, steps: usize) -> Self {
        Self {
            n,
            steps,
            cells: vec![Forecast::ZERO; n * n * steps],
        }
    }

    /// Deterministic tensor with zero spread.
    pub fn from_means(n: usize, steps: usize, mean: impl Fn(usize, usize, usize) -> f64) -> Self {
        let mut t = Self::new(n, steps);
        for i in 0..n {
            for j in 0..n {
                for k in 0..steps {
                    t.set(i, j, k, Forecast { mean: mean(i, j, k), std: 0.0 });
                }
            }
        }
        t
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> Forecast {
        self.cells[(i * self.n + j) * self.steps + k]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, f: Forecast) {
        self.cells[(i * self.n + j) * self.steps + k] = f;
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.n, self.n, self.steps)
    }
}

/// Evaluate every flow model at the given times (hours since the model origin).
pub fn forecast_demand(models: &FlowModels, times_hours: &[f64]) -> ForecastTensor {
    let n = models.n;
    let mut out = ForecastTensor::new(n, times_hours.len());
    for i in 0..n {
        for j in 0..n {
            let m = models.model(i, j);
            for (k, &t) in times_hours.iter().enumerate() {
                out.set(i, j, k, m.predict(t));
            }
        }
    }
    out
}

/// Training set for one flow over bins `[end_bin - window, end_bin)`.
pub fn flow_training_set(series: &DemandSeries, i: usize, j: usize, end_bin: usize, window_bins: usize) -> Option<GpTrainingSet> {
    let end = end_bin.min(series.n_bins());
    let start = end.saturating_sub(window_bins);
    if start >= end {
        return None;
    }
    let counts = &series.flow(i, j)[start..end];
    Some(GpTrainingSet {
        inputs: (start..end).map(|b| series.bin_hours(b)).collect(),
        targets: counts.iter().map(|&c| c as f64).collect(),
        noise_variance: 1.0,
    })
}

fn fit_flow(series: &DemandSeries, i: usize, j: usize, end_bin: usize, cfg: &FlowTrainingConfig) -> FlowModel {
    if i == j {
        return FlowModel::Zero;
    }
    let Some(set) = flow_training_set(series, i, j, end_bin, cfg.window_bins) else {
        return FlowModel::Zero;
    };
    if set.targets.iter().all(|&y| y == 0.0) {
        return FlowModel::Zero;
    }
    let mean = set.target_mean();
    let var = set.target_variance();
    if var <= 0.0 {
        return FlowModel::Constant(Forecast { mean, std: 0.0 });
    }
    let fit = |init: &KernelInit| {
        let set = GpTrainingSet {
            noise_variance: init.noise_fraction * var,
            ..set.clone()
        };
        train(&set, &init.spec(var), &cfg.train).ok()
    };
    let best = match (fit(&cfg.init), cfg.alt_init.as_ref().and_then(fit)) {
        (Some(a), Some(b)) => Some(if b.lml > a.lml { b } else { a }),
        (a, b) => a.or(b),
    };
    match best {
        Some(gp) => FlowModel::Gp(Box::new(gp)),
        None => FlowModel::Constant(Forecast { mean, std: var.sqrt() }),
    }
}

/// Fit every off-diagonal flow on the window ending at `end_bin`. Flows are
/// independent and trained in parallel.
pub fn train_flows(series: &DemandSeries, end_bin: usize, cfg: &FlowTrainingConfig) -> FlowModels {
    let n = series.n_stations();
    let models: Vec<FlowModel> = (0..n * n)
        .into_par_iter()
        .map(|f| fit_flow(series, f / n, f % n, end_bin, cfg))
        .collect();
    let end = end_bin.min(series.n_bins());
    FlowModels {
        n,
        origin_seconds: series.origin_seconds(),
        bin_seconds: series.bin_seconds(),
        window_start_bin: end.saturating_sub(cfg.window_bins),
        window_bins: end - end.saturating_sub(cfg.window_bins),
        models,
    }
}
