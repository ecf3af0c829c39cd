//! Text persistence for fitted flow models.
//!
//! The file is TOML. Top-level keys describe the time base and training
//! window; each `[[flow]]` table holds one ordered station pair:
//!
//! ```toml
//! n_stations = 2
//! origin_seconds = 0.0
//! bin_seconds = 3600.0
//! window_start_bin = 0
//! window_bins = 120
//!
//! [[flow]]
//! origin = 0
//! destination = 1
//! model = "gp"            # "zero" | "constant" | "gp"
//! noise_variance = 0.41
//! targets = [0.0, 2.0, 1.0]   # training counts, one per window bin
//!
//! [flow.kernel]
//! output_scale = 1.7
//! [flow.kernel.kernel]
//! kind = "product"
//! left = { kind = "rbf", lengthscale = 3.0 }
//! right = { kind = "periodic", lengthscale = 3.0, period = 24.0 }
//! ```
//!
//! Constant flows carry `mean` and `std` instead of a kernel. Loading
//! re-conditions each GP on its stored targets without re-optimizing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::gp::{Forecast, GpTrainingSet, TrainedGp};
use super::kernel::KernelSpec;
use super::{FlowModel, FlowModels};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedFlow {
    pub origin: usize,
    pub destination: usize,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_variance: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModels {
    pub n_stations: usize,
    pub origin_seconds: f64,
    pub bin_seconds: f64,
    pub window_start_bin: usize,
    pub window_bins: usize,
    #[serde(default, rename = "flow")]
    pub flows: Vec<SavedFlow>,
}

impl SavedModels {
    pub fn from_models(models: &FlowModels) -> Self {
        let n = models.n;
        let mut flows = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let blank = SavedFlow {
                    origin: i,
                    destination: j,
                    model: String::new(),
                    mean: None,
                    std: None,
                    noise_variance: None,
                    targets: Vec::new(),
                    kernel: None,
                };
                let saved = match models.model(i, j) {
                    FlowModel::Zero => continue,
                    FlowModel::Constant(f) => SavedFlow {
                        model: "constant".into(),
                        mean: Some(f.mean),
                        std: Some(f.std),
                        ..blank
                    },
                    FlowModel::Gp(gp) => SavedFlow {
                        model: "gp".into(),
                        noise_variance: Some(gp.noise_variance),
                        targets: gp.targets().to_vec(),
                        kernel: Some(gp.kernel.clone()),
                        ..blank
                    },
                };
                flows.push(saved);
            }
        }
        Self {
            n_stations: n,
            origin_seconds: models.origin_seconds,
            bin_seconds: models.bin_seconds,
            window_start_bin: models.window_start_bin,
            window_bins: models.window_bins,
            flows,
        }
    }

    pub fn into_models(self) -> Result<FlowModels> {
        let n = self.n_stations;
        let mut models = vec![FlowModel::Zero; n * n];
        for f in self.flows {
            if f.origin >= n || f.destination >= n {
                return Err(Error::invalid(format!("flow ({}, {}) outside {n} stations", f.origin, f.destination)));
            }
            let model = match f.model.as_str() {
                "zero" => FlowModel::Zero,
                "constant" => FlowModel::Constant(Forecast {
                    mean: f.mean.ok_or_else(|| Error::invalid("constant flow without mean"))?,
                    std: f.std.unwrap_or(0.0),
                }),
                "gp" => {
                    let kernel = f.kernel.ok_or_else(|| Error::invalid("gp flow without kernel"))?;
                    let noise = f.noise_variance.ok_or_else(|| Error::invalid("gp flow without noise_variance"))?;
                    if f.targets.len() != self.window_bins {
                        return Err(Error::invalid(format!(
                            "flow ({}, {}) has {} targets for a {}-bin window",
                            f.origin,
                            f.destination,
                            f.targets.len(),
                            self.window_bins
                        )));
                    }
                    let inputs = (0..self.window_bins)
                        .map(|b| (self.window_start_bin + b) as f64 * self.bin_seconds / 3600.0 + 0.5 * self.bin_seconds / 3600.0)
                        .collect();
                    let set = GpTrainingSet::new(inputs, f.targets, noise)?;
                    FlowModel::Gp(Box::new(TrainedGp::fit(&set, &kernel)?))
                }
                other => return Err(Error::invalid(format!("unknown flow model kind {other:?}"))),
            };
            models[f.origin * n + f.destination] = model;
        }
        Ok(FlowModels {
            n,
            origin_seconds: self.origin_seconds,
            bin_seconds: self.bin_seconds,
            window_start_bin: self.window_start_bin,
            window_bins: self.window_bins,
            models,
        })
    }
}

pub fn save_models(models: &FlowModels, path: &Path) -> Result<()> {
    let text = toml::to_string(&SavedModels::from_models(models))
        .map_err(|e| Error::invalid(format!("cannot serialize models: {e}")))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_models(path: &Path) -> Result<FlowModels> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let saved: SavedModels = toml::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    saved.into_models()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{train_flows, DemandSeries, FlowTrainingConfig};

    #[test]
    fn saved_models_predict_identically() {
        let events: Vec<(f64, usize, usize)> = (0..200)
            .map(|k| {
                let t = k as f64 * 1234.5 % (72.0 * 3600.0);
                (t, k % 2, 1 - k % 2)
            })
            .chain((0..5).map(|k| (k as f64 * 3600.0, 1, 1)))
            .collect();
        let series = DemandSeries::from_events(2, 0.0, 3600.0, 72, events).unwrap();
        let cfg = FlowTrainingConfig {
            window_bins: 48,
            ..FlowTrainingConfig::default()
        };
        let models = train_flows(&series, 72, &cfg);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("models.toml");
        save_models(&models, &path).unwrap();
        let back = load_models(&path).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for t in [10.0, 71.5, 80.0] {
                    let a = models.model(i, j).predict(t);
                    let b = back.model(i, j).predict(t);
                    assert!((a.mean - b.mean).abs() < 1e-9 && (a.std - b.std).abs() < 1e-9, "{i}{j} {a:?} {b:?}");
                }
            }
        }
    }

    #[test]
    fn malformed_files_are_rejected() {
        let bad = "n_stations = 1\norigin_seconds = 0.0\nbin_seconds = 1.0\nwindow_start_bin = 0\nwindow_bins = 1\n[[flow]]\norigin = 3\ndestination = 0\nmodel = \"zero\"\n";
        let saved: SavedModels = toml::from_str(bad).unwrap();
        assert!(saved.into_models().is_err());
    }
}
