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
//! Training of the residual network on measured backbone points.

use std::time::{Duration, Instant};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::loss::{training_loss_with_grad, Station};
use super::network::{Architecture, ResidualNetwork};
use super::solver::BatchSolver;
use crate::backbone::{ActuationBounds, ActuationVector, Integrator, SegmentParams, NUM_INPUTS};
use crate::error::{Error, Result};
use crate::plant::Plant;

/// One supervised example: an actuation and measured backbone stations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub q: ActuationVector,
    pub stations: Vec<Station>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub integrator: Integrator,
    pub seed: u64,
    pub architecture: Architecture,
    pub stations: usize,
    /// Stop early once this much wall time has passed.
    pub time_budget_secs: Option<f64>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 256,
            iterations: 20_000,
            integrator: Integrator::AdamsBashforth4,
            seed: 0,
            architecture: Architecture::default(),
            stations: 16,
            time_budget_secs: None,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.iterations == 0 || self.stations == 0 {
            return Err(Error::Config(format!(
                "learning rate, batch size, iterations and stations must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainingReport {
    pub network: ResidualNetwork,
    /// Mean batch loss, one entry per completed iteration.
    pub loss_history: Vec<f64>,
    pub elapsed: Duration,
    pub stopped_by_budget: bool,
}

impl TrainingReport {
    pub fn iterations(&self) -> usize {
        self.loss_history.len()
    }
}

/// Draws `count` actuations uniformly inside `bounds` and measures `plant`
/// at `stations` equidistant points (excluding the base).
pub fn generate_dataset(
    plant: &Plant,
    params: &SegmentParams,
    bounds: &ActuationBounds,
    count: usize,
    stations: usize,
    seed: u64,
) -> Result<Vec<Sample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut q = ActuationVector::zeros();
            for i in 0..NUM_INPUTS {
                q[i] = rng.random_range(bounds.min[i]..=bounds.max[i]);
            }
            let curve = plant.backbone(&q, params)?;
            let length = curve.length();
            let stations = (1..=stations)
                .map(|k| {
                    let s = length * k as f64 / stations as f64;
                    Ok(Station {
                        s,
                        point: curve.position_at(s)?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Sample { q, stations })
        })
        .collect()
}

/// Mean per-sample loss over `batch` and its gradient with respect to the
/// network parameters, differentiating through the unrolled solver.
pub fn loss_and_gradient(
    network: &ResidualNetwork,
    batch: &[&Sample],
    params: &SegmentParams,
    integrator: Integrator,
) -> Result<(f64, Vec<f64>)> {
    let solver = BatchSolver::new(*params, integrator, Some(network));
    let qs: Vec<ActuationVector> = batch.iter().map(|s| s.q).collect();
    let (solution, tape) = solver.integrate_with_tape(&qs)?;
    let n = batch.len() as f64;
    let mut total = 0.0;
    let mut seeds = Vec::with_capacity(batch.len());
    for (curve, sample) in solution.curves().iter().zip(batch) {
        let (l, g) = training_loss_with_grad(curve, &sample.stations)?;
        total += l;
        seeds.push(g.into_iter().map(|(i, v)| (i, v.map(|x| x / n))).collect());
    }
    let mut grad = vec![0.0; network.param_count()];
    solver.backward(&tape, &seeds, &mut grad);
    Ok((total / n, grad))
}

/// Mean per-sample loss of `network` (or the nominal model) on `data`.
pub fn evaluate_loss(
    network: Option<&ResidualNetwork>,
    data: &[Sample],
    params: &SegmentParams,
    integrator: Integrator,
) -> Result<f64> {
    let solver = BatchSolver::new(*params, integrator, network);
    let mut total = 0.0;
    for chunk in data.chunks(256) {
        let qs: Vec<ActuationVector> = chunk.iter().map(|s| s.q).collect();
        let sol = solver.integrate(&qs)?;
        for (curve, sample) in sol.curves().iter().zip(chunk) {
            total += super::training_loss(curve, &sample.stations)?;
        }
    }
    Ok(total / data.len() as f64)
}

/// RMS point error over every station of every sample.
pub fn backbone_rms_error(
    network: Option<&ResidualNetwork>,
    data: &[Sample],
    params: &SegmentParams,
    integrator: Integrator,
) -> Result<f64> {
    let solver = BatchSolver::new(*params, integrator, network);
    let mut sum = 0.0;
    let mut count = 0usize;
    for chunk in data.chunks(256) {
        let qs: Vec<ActuationVector> = chunk.iter().map(|s| s.q).collect();
        let sol = solver.integrate(&qs)?;
        for (curve, sample) in sol.curves().iter().zip(chunk) {
            for st in &sample.stations {
                sum += (curve.position_at(st.s)? - st.point).norm_squared();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptySeries("dataset"));
    }
    Ok((sum / count as f64).sqrt())
}

/// Adam on minibatches drawn without replacement.
pub fn train(
    dataset: &[Sample],
    params: &SegmentParams,
    config: &TrainingConfig,
    mut on_iteration: impl FnMut(usize, f64),
) -> Result<TrainingReport> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptySeries("training dataset"));
    }
    let mut network = ResidualNetwork::new(config.architecture.clone(), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::new(network.param_count());
    let batch_size = config.batch_size.min(dataset.len());
    let start = Instant::now();
    let mut history = Vec::with_capacity(config.iterations);
    let mut stopped_by_budget = false;
    for it in 0..config.iterations {
        if let Some(budget) = config.time_budget_secs {
            if start.elapsed().as_secs_f64() >= budget {
                stopped_by_budget = true;
                break;
            }
        }
        let picks = index::sample(&mut rng, dataset.len(), batch_size);
        let batch: Vec<&Sample> = picks.iter().map(|i| &dataset[i]).collect();
        let (loss, grad) = loss_and_gradient(&network, &batch, params, config.integrator)?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { iteration: it, loss });
        }
        adam_step(network.params_mut(), &grad, &mut state, &adam);
        history.push(loss);
        on_iteration(it, loss);
    }
    Ok(TrainingReport {
        network,
        loss_history: history,
        elapsed: start.elapsed(),
        stopped_by_budget,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::PlantPerturbation;

    fn small_config(iterations: usize) -> TrainingConfig {
        let mut architecture = Architecture::default();
        architecture.hidden = [32, 32];
        TrainingConfig {
            batch_size: 8,
            iterations,
            architecture,
            learning_rate: 3e-3,
            ..Default::default()
        }
    }

    #[test]
    fn nominal_data_has_tiny_baseline() {
        let params = SegmentParams::default();
        let data = generate_dataset(&Plant::Nominal, &params, &ActuationBounds::default(), 16, 16, 3).unwrap();
        // Only the discretization gap between RK4 data and the AB4 model remains.
        let baseline = evaluate_loss(None, &data, &params, Integrator::AdamsBashforth4).unwrap();
        assert!(baseline < 1e-6, "{baseline}");
    }

    #[test]
    fn training_reduces_loss_on_perturbed_data() {
        let params = SegmentParams::default();
        let plant = Plant::Perturbed(PlantPerturbation::seeded(1));
        let data = generate_dataset(&plant, &params, &ActuationBounds::default(), 16, 16, 3).unwrap();
        let mut config = small_config(60);
        config.batch_size = 16;
        let before = evaluate_loss(None, &data, &params, config.integrator).unwrap();
        let report = train(&data, &params, &config, |_, _| {}).unwrap();
        let after = evaluate_loss(Some(&report.network), &data, &params, config.integrator).unwrap();
        assert_eq!(report.iterations(), 60);
        assert!(after < 0.7 * before, "{after} vs {before}");
    }

    #[test]
    fn seeded_runs_repeat_exactly() {
        let params = SegmentParams::default();
        let plant = Plant::Perturbed(PlantPerturbation::seeded(2));
        let data = generate_dataset(&plant, &params, &ActuationBounds::default(), 12, 8, 5).unwrap();
        let a = train(&data, &params, &small_config(4), |_, _| {}).unwrap();
        let b = train(&data, &params, &small_config(4), |_, _| {}).unwrap();
        assert_eq!(a.loss_history, b.loss_history);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(train(&[], &SegmentParams::default(), &small_config(1), |_, _| {}).is_err());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let params = SegmentParams::default();
        let plant = Plant::Perturbed(PlantPerturbation::seeded(4));
        let data = generate_dataset(&plant, &params, &ActuationBounds::default(), 2, 16, 9).unwrap();
        let mut arch = Architecture::default();
        arch.hidden = [24, 24];
        let net = ResidualNetwork::new_random(arch, 7);
        let batch: Vec<&Sample> = data.iter().collect();
        for integrator in [Integrator::Rk4, Integrator::AdamsBashforth4] {
            let (_, grad) = loss_and_gradient(&net, &batch, &params, integrator).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut checked = 0;
            while checked < 20 {
                let i = rng.random_range(0..net.param_count());
                let h = 1e-5;
                let mut plus = net.clone();
                plus.params_mut()[i] += h;
                let mut minus = net.clone();
                minus.params_mut()[i] -= h;
                let fp = loss_and_gradient(&plus, &batch, &params, integrator).unwrap().0;
                let fm = loss_and_gradient(&minus, &batch, &params, integrator).unwrap().0;
                let fd = (fp - fm) / (2.0 * h);
                let scale = fd.abs().max(grad[i].abs());
                if scale < 1e-7 {
                    continue;
                }
                assert!(
                    (fd - grad[i]).abs() / scale < 1e-4,
                    "param {i}: fd {fd} analytic {}",
                    grad[i]
                );
                checked += 1;
            }
        }
    }
}
