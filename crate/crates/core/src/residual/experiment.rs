/*
Copyright 2026 The tdcr Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
//! End-to-end residual fit against a synthetic plant with a held-out split.

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::train::{backbone_rms_error, generate_dataset, train, TrainingConfig, TrainingReport};
use crate::backbone::{ActuationBounds, SegmentParams};
use crate::error::{Error, Result};
use crate::plant::{Plant, PlantPerturbation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Ground truth; the network never sees its parameters.
    pub plant: Plant,
    pub segment: SegmentParams,
    pub bounds: ActuationBounds,
    pub train_samples: usize,
    pub holdout_samples: usize,
    pub data_seed: u64,
    pub training: TrainingConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            plant: Plant::Perturbed(PlantPerturbation::seeded(1)),
            segment: SegmentParams::default(),
            bounds: ActuationBounds::default(),
            train_samples: 2048,
            holdout_samples: 256,
            data_seed: 11,
            training: TrainingConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.segment.validate()?;
        self.training.validate()?;
        if self.train_samples == 0 || self.holdout_samples == 0 {
            return Err(Error::Config("train and holdout sets must be non-empty".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: Self = toml::from_str(s)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub iterations: usize,
    pub target_iterations: usize,
    pub stopped_by_budget: bool,
    pub elapsed_secs: f64,
    /// Held-out RMS station error of the nominal model alone, meters.
    pub nominal_rms: f64,
    pub hybrid_rms: f64,
    /// `hybrid_rms / nominal_rms`.
    pub ratio: f64,
    pub window: usize,
    /// Largest rise between consecutive moving-average values; zero when
    /// the smoothed history never goes up.
    pub worst_rise: f64,
}

impl ExperimentReport {
    pub fn smoothed_monotone(&self) -> bool {
        self.worst_rise <= 0.0
    }
}

/// Trailing mean over `window` entries, one value per full window.
pub fn moving_average(history: &[f64], window: usize) -> Vec<f64> {
    if window == 0 || history.len() < window {
        return Vec::new();
    }
    let mut sum: f64 = history[..window].iter().sum();
    let mut out = Vec::with_capacity(history.len() - window + 1);
    out.push(sum / window as f64);
    for i in window..history.len() {
        sum += history[i] - history[i - window];
        out.push(sum / window as f64);
    }
    out
}

/// Largest increase between neighbors, or 0 if none.
pub fn worst_rise(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub struct Experiment {
    pub report: ExperimentReport,
    pub training: TrainingReport,
    pub checkpoint: Checkpoint,
}

/// Generates both splits from the plant, trains and scores on the holdout.
pub fn run_experiment(
    config: &ExperimentConfig,
    window: usize,
    on_iteration: impl FnMut(usize, f64),
) -> Result<Experiment> {
    config.validate()?;
    let stations = config.training.stations;
    let seg = &config.segment;
    let data = generate_dataset(
        &config.plant,
        seg,
        &config.bounds,
        config.train_samples,
        stations,
        config.data_seed,
    )?;
    let holdout = generate_dataset(
        &config.plant,
        seg,
        &config.bounds,
        config.holdout_samples,
        stations,
        config.data_seed.wrapping_add(0x9e37_79b9),
    )?;
    let integrator = config.training.integrator;
    let nominal_rms = backbone_rms_error(None, &holdout, seg, integrator)?;
    let training = train(&data, seg, &config.training, on_iteration)?;
    let hybrid_rms = backbone_rms_error(Some(&training.network), &holdout, seg, integrator)?;
    let smoothed = moving_average(&training.loss_history, window);
    let report = ExperimentReport {
        iterations: training.iterations(),
        target_iterations: config.training.iterations,
        stopped_by_budget: training.stopped_by_budget,
        elapsed_secs: training.elapsed.as_secs_f64(),
        nominal_rms,
        hybrid_rms,
        ratio: hybrid_rms / nominal_rms,
        window,
        worst_rise: worst_rise(&smoothed),
    };
    let checkpoint = Checkpoint::new(&training.network, integrator, *seg);
    Ok(Experiment {
        report,
        training,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_by_hand() {
        let ma = moving_average(&[4.0, 2.0, 3.0, 1.0, 5.0], 2);
        assert_eq!(ma, vec![3.0, 2.5, 2.0, 3.0]);
        assert_eq!(worst_rise(&ma), 1.0);
        assert!(moving_average(&[1.0], 2).is_empty());
        assert_eq!(worst_rise(&[3.0, 2.0, 1.0]), 0.0);
    }

    #[test]
    fn short_fit_beats_nominal_on_holdout() {
        let mut config = ExperimentConfig {
            train_samples: 32,
            holdout_samples: 16,
            ..Default::default()
        };
        config.training.architecture.hidden = [32, 32];
        config.training.batch_size = 16;
        config.training.iterations = 80;
        config.training.learning_rate = 3e-3;
        config.training.stations = 8;
        let e = run_experiment(&config, 10, |_, _| {}).unwrap();
        assert_eq!(e.report.iterations, 80);
        assert!(!e.report.stopped_by_budget);
        assert!(e.report.ratio < 0.9, "{:?}", e.report);
        assert_eq!(e.checkpoint.network().unwrap(), e.training.network);
    }
}
