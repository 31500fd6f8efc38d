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
//! Seeded randomized trial batches.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::metrics::Summary;
use super::presets::{self, ShapeParams, TrackShape};
use super::runner::{run_scenario_with_model, ScenarioResult};
use crate::backbone::{ActuationBounds, ActuationVector, NUM_INPUTS};
use crate::error::{Error, Result};
use crate::model::ShapeModel;

/// Share of each bound range used when drawing reaching targets.
pub const TARGET_BOUND_FRACTION: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation; zero for a single value.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }

    fn of_options(values: impl Iterator<Item = Option<f64>>) -> Option<Self> {
        let v: Option<Vec<f64>> = values.collect();
        v.and_then(|v| Self::of(&v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub seed: u64,
    pub params: Option<ShapeParams>,
    pub target_q: Option<ActuationVector>,
    pub summary: Summary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialsReport {
    pub scenario: String,
    pub trials: Vec<TrialRecord>,
    pub rmse: Stat,
    pub mean_error: Stat,
    pub max_error: Stat,
    pub final_tip_error: Stat,
    pub final_shape_error: Option<Stat>,
    pub tip_settling_time: Option<Stat>,
    pub shape_settling_time: Option<Stat>,
    pub min_clearance: Option<Stat>,
    pub elapsed_secs: f64,
}

impl TrialsReport {
    fn new(scenario: String, trials: Vec<TrialRecord>, elapsed_secs: f64) -> Result<Self> {
        let col = |f: fn(&Summary) -> f64| -> Result<Stat> {
            Stat::of(&trials.iter().map(|t| f(&t.summary)).collect::<Vec<_>>()).ok_or(Error::EmptySeries("trials"))
        };
        Ok(Self {
            rmse: col(|s| s.rmse)?,
            mean_error: col(|s| s.mean_error)?,
            max_error: col(|s| s.max_error)?,
            final_tip_error: col(|s| s.final_tip_error)?,
            final_shape_error: Stat::of_options(trials.iter().map(|t| t.summary.final_shape_error)),
            tip_settling_time: Stat::of_options(trials.iter().map(|t| t.summary.tip_settling_time)),
            shape_settling_time: Stat::of_options(trials.iter().map(|t| t.summary.shape_settling_time)),
            min_clearance: Stat::of_options(trials.iter().map(|t| t.summary.min_clearance)),
            scenario,
            trials,
            elapsed_secs,
        })
    }
}

/// Trial ranges: `a, b ∈ [0.02, 0.07]`, `c ∈ [0.01, 0.02]` meters.
pub fn draw_shape_params(rng: &mut impl Rng) -> ShapeParams {
    ShapeParams {
        a: rng.random_range(0.02..=0.07),
        b: rng.random_range(0.02..=0.07),
        c: rng.random_range(0.01..=0.02),
    }
}

pub fn draw_target(rng: &mut impl Rng, bounds: &ActuationBounds) -> ActuationVector {
    let mut q = ActuationVector::zeros();
    for j in 0..NUM_INPUTS {
        let lo = bounds.min[j] * TARGET_BOUND_FRACTION;
        let hi = bounds.max[j] * TARGET_BOUND_FRACTION;
        q[j] = rng.random_range(lo..=hi);
    }
    q
}

/// Runs configs on all available cores; results keep input order.
pub fn run_parallel(configs: &[ScenarioConfig], model: &ShapeModel) -> Result<Vec<ScenarioResult>> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(configs.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ScenarioResult>>>> = Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= configs.len() {
                    break;
                }
                let r = run_scenario_with_model(&configs[i], model);
                slots.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("no poisoned workers")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

fn trial_seed(seed: u64, i: usize) -> u64 {
    seed.wrapping_mul(0x1000_0000_01b3).wrapping_add(i as u64)
}

/// `n` randomized runs of one tracking shape.
pub fn tracking_trials(
    shape: TrackShape,
    n: usize,
    seed: u64,
    model: &ShapeModel,
    customize: impl Fn(&mut ScenarioConfig),
) -> Result<TrialsReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params: Vec<ShapeParams> = (0..n).map(|_| draw_shape_params(&mut rng)).collect();
    let configs: Vec<ScenarioConfig> = params
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut c = presets::tracking(shape, *p);
            c.seed = trial_seed(seed, i);
            customize(&mut c);
            c
        })
        .collect();
    let results = run_parallel(&configs, model)?;
    let trials = results
        .into_iter()
        .zip(params)
        .enumerate()
        .map(|(i, (r, p))| TrialRecord {
            index: i,
            seed: r.seed,
            params: Some(p),
            target_q: None,
            summary: r.summary,
        })
        .collect();
    TrialsReport::new(shape.name().into(), trials, start.elapsed().as_secs_f64())
}

/// `n` shape-constrained reaching runs against random feasible targets.
pub fn reaching_trials(
    n: usize,
    seed: u64,
    model: &ShapeModel,
    customize: impl Fn(&mut ScenarioConfig),
) -> Result<TrialsReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = ActuationBounds::default();
    let targets: Vec<ActuationVector> = (0..n).map(|_| draw_target(&mut rng, &bounds)).collect();
    let configs: Vec<ScenarioConfig> = targets
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut c = presets::shape_reaching(*q);
            c.seed = trial_seed(seed, i);
            customize(&mut c);
            c
        })
        .collect();
    let results = run_parallel(&configs, model)?;
    let trials = results
        .into_iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (r, q))| TrialRecord {
            index: i,
            seed: r.seed,
            params: None,
            target_q: Some(q),
            summary: r.summary,
        })
        .collect();
    TrialsReport::new("reaching".into(), trials, start.elapsed().as_secs_f64())
}

/// Seeded repeats of a fixed config, e.g. the obstacle scenario.
pub fn repeated_trials(base: &ScenarioConfig, n: usize, seed: u64, model: &ShapeModel) -> Result<TrialsReport> {
    let start = Instant::now();
    let configs: Vec<ScenarioConfig> = (0..n)
        .map(|i| ScenarioConfig {
            seed: trial_seed(seed, i),
            ..base.clone()
        })
        .collect();
    let results = run_parallel(&configs, model)?;
    let trials = results
        .into_iter()
        .enumerate()
        .map(|(i, r)| TrialRecord {
            index: i,
            seed: r.seed,
            params: None,
            target_q: None,
            summary: r.summary,
        })
        .collect();
    TrialsReport::new(base.name.clone(), trials, start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stat_of_values() {
        let s = Stat::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.std, 1.0);
        assert_eq!((s.min, s.max), (1.0, 3.0));
        assert_eq!(Stat::of(&[4.0]).unwrap().std, 0.0);
        assert!(Stat::of(&[]).is_none());
    }

    #[test]
    fn drawn_params_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let p = draw_shape_params(&mut rng);
            assert!((0.02..=0.07).contains(&p.a) && (0.02..=0.07).contains(&p.b));
            assert!((0.01..=0.02).contains(&p.c));
        }
        let b = ActuationBounds::default();
        let q = draw_target(&mut rng, &b);
        assert!(b.contains(&q));
    }
}
