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
//! Model predictive path integral control over the linearized shape model.
//!
//! Candidate sequences are deltas on the actuation command. Each rollout
//! propagates `x_{t+1} = x_t + J·Δq_t` with a Jacobian frozen at the current
//! command, and the first averaged delta is applied.

use nalgebra::{DVector, SMatrix, SVector, SymmetricEigen, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::backbone::{downsample_state, ActuationBounds, ActuationVector, NUM_INPUTS};
use crate::error::{Error, Result};
use crate::jacobian::{central_difference_jacobian, JacobianMatrix, DEFAULT_DELTA};
use crate::model::ShapeModel;
use crate::obstacle::Sphere;

pub type Delta = [f64; NUM_INPUTS];
type Mat7 = SMatrix<f64, NUM_INPUTS, NUM_INPUTS>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MppiConfig {
    pub num_samples: usize,
    pub horizon: usize,
    pub temperature: f64,
    /// Mean of the sampled command rate.
    pub noise_mean: Delta,
    /// Row-major covariance of the sampled command rate.
    pub noise_cov: [[f64; NUM_INPUTS]; NUM_INPUTS],
    /// Control period in seconds. A per-step delta is `rate · control_dt`,
    /// so its covariance is `noise_cov · control_dt²`.
    pub control_dt: f64,
    pub bounds: ActuationBounds,
}

impl Default for MppiConfig {
    fn default() -> Self {
        Self {
            num_samples: 1000,
            horizon: 10,
            temperature: 1e-3,
            noise_mean: [0.0; NUM_INPUTS],
            noise_cov: isotropic(5e-5),
            control_dt: 0.02,
            bounds: ActuationBounds::default(),
        }
    }
}

/// `variance·I` in the layout used by [`MppiConfig::noise_cov`].
pub fn isotropic(variance: f64) -> [[f64; NUM_INPUTS]; NUM_INPUTS] {
    let mut c = [[0.0; NUM_INPUTS]; NUM_INPUTS];
    for (i, row) in c.iter_mut().enumerate() {
        row[i] = variance;
    }
    c
}

impl MppiConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_samples == 0 || self.horizon == 0 {
            return Err(Error::Config("num_samples and horizon must be at least 1".into()));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.control_dt > 0.0) || !self.control_dt.is_finite() {
            return Err(Error::Config(format!(
                "control_dt must be positive, got {}",
                self.control_dt
            )));
        }
        if self.noise_mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise mean"));
        }
        self.bounds.validate()?;
        NoiseSampler::new(self).map(|_| ())
    }
}

/// Draws per-step deltas `dt·(μ + L·z)` with `L·Lᵀ = Σ`, so semidefinite and
/// zero covariances work.
#[derive(Clone, Debug)]
pub struct NoiseSampler {
    mean: SVector<f64, NUM_INPUTS>,
    factor: Mat7,
}

impl NoiseSampler {
    pub fn new(config: &MppiConfig) -> Result<Self> {
        let cov = Mat7::from_fn(|i, j| config.noise_cov[i][j]);
        if cov.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("noise covariance"));
        }
        if (cov - cov.transpose()).amax() > 1e-12 * cov.amax().max(1e-300) {
            return Err(Error::Config("noise covariance is not symmetric".into()));
        }
        let eig = SymmetricEigen::new(cov);
        let tol = 1e-12 * eig.eigenvalues.amax();
        if eig.eigenvalues.iter().any(|&l| l < -tol) {
            return Err(Error::Config("noise covariance is not positive semidefinite".into()));
        }
        let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let dt = config.control_dt;
        Ok(Self {
            mean: SVector::from(config.noise_mean) * dt,
            factor: eig.eigenvectors * Mat7::from_diagonal(&roots) * dt,
        })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Delta {
        let z = SVector::<f64, NUM_INPUTS>::from_fn(|_, _| StandardNormal.sample(rng));
        (self.mean + self.factor * z).into()
    }
}

/// `K × T` perturbation tensor, sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbations {
    pub samples: usize,
    pub horizon: usize,
    pub data: Vec<Delta>,
}

impl Perturbations {
    pub fn sequence(&self, k: usize) -> &[Delta] {
        &self.data[k * self.horizon..(k + 1) * self.horizon]
    }
}

pub fn sample_perturbations(config: &MppiConfig, seed: u64) -> Result<Perturbations> {
    config.validate()?;
    let sampler = NoiseSampler::new(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.num_samples * config.horizon;
    Ok(Perturbations {
        samples: config.num_samples,
        horizon: config.horizon,
        data: (0..n).map(|_| sampler.draw(&mut rng)).collect(),
    })
}

/// Tip error scaled by `factor` along `direction`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TipAxis {
    pub direction: Vector3<f64>,
    pub factor: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub w_tip: f64,
    pub w_shape: f64,
    pub w_u: f64,
    pub w_term: f64,
    pub w_obs: f64,
    pub obs_threshold: f64,
    /// Per-point multipliers on the shape term; `None` means all ones.
    pub point_weights: Option<Vec<f64>>,
    pub tip_axis: Option<TipAxis>,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_tip: 100.0,
            w_shape: 10.0,
            w_u: 10.0,
            w_term: 100.0,
            w_obs: 1e5,
            obs_threshold: 0.02,
            point_weights: None,
            tip_axis: None,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let scalars = [self.w_tip, self.w_shape, self.w_u, self.w_term, self.w_obs];
        if scalars.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!(
                "weights must be finite and non-negative: {scalars:?}"
            )));
        }
        if !(self.obs_threshold > 0.0) {
            return Err(Error::Config("obstacle threshold must be positive".into()));
        }
        if let Some(pw) = &self.point_weights {
            if pw.iter().any(|w| !(*w >= 0.0)) {
                return Err(Error::Config("point weights must be non-negative".into()));
            }
        }
        if let Some(axis) = &self.tip_axis {
            if (axis.direction.norm() - 1.0).abs() > 1e-9 || !(axis.factor > 0.0) {
                return Err(Error::Config(
                    "tip axis needs a unit direction and positive factor".into(),
                ));
            }
        }
        Ok(())
    }

    fn tip_error_sq(&self, e: &Vector3<f64>) -> f64 {
        let base = e.norm_squared();
        match &self.tip_axis {
            Some(a) => {
                let along = a.direction.dot(e);
                base + (a.factor * a.factor - 1.0) * along * along
            }
            None => base,
        }
    }
}

/// Reference for one horizon step. The shape target has the layout of `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonTarget {
    pub tip: Vector3<f64>,
    pub shape: Option<DVector<f64>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub tip: f64,
    pub shape: f64,
    pub control: f64,
    pub obstacle: f64,
    pub terminal: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.tip + self.shape + self.control + self.obstacle + self.terminal
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rollout {
    /// States `x_1 ..= x_T`.
    pub states: Vec<DVector<f64>>,
    /// Clamped commands `q_1 ..= q_T`.
    pub commands: Vec<ActuationVector>,
}

fn advance(q: &ActuationVector, dq: &Delta, bounds: &ActuationBounds) -> (ActuationVector, Delta) {
    let mut next = *q;
    let mut eff = [0.0; NUM_INPUTS];
    for j in 0..NUM_INPUTS {
        next[j] = (q[j] + dq[j]).clamp(bounds.min[j], bounds.max[j]);
        eff[j] = next[j] - q[j];
    }
    (next, eff)
}

/// First-order prediction with the effective (post-clamp) deltas.
pub fn rollout(
    x0: &DVector<f64>,
    q0: &ActuationVector,
    deltas: &[Delta],
    jacobian: &JacobianMatrix,
    bounds: &ActuationBounds,
) -> Result<Rollout> {
    if x0.len() != jacobian.entries.nrows() {
        return Err(Error::Dimension {
            expected: jacobian.entries.nrows(),
            got: x0.len(),
        });
    }
    let mut x = x0.clone();
    let mut q = bounds.clamp(q0);
    let mut out = Rollout {
        states: Vec::with_capacity(deltas.len()),
        commands: Vec::with_capacity(deltas.len()),
    };
    for dq in deltas {
        let (next, eff) = advance(&q, dq, bounds);
        x += &jacobian.entries * DVector::from_row_slice(&eff);
        q = next;
        out.states.push(x.clone());
        out.commands.push(q);
    }
    Ok(out)
}

struct CostInputs<'a> {
    q0: &'a ActuationVector,
    targets: &'a [HorizonTarget],
    weights: &'a ObjectiveWeights,
    obstacles: &'a [Vec<Sphere>],
}

impl CostInputs<'_> {
    /// Stage cost of one step given the flat state `x` and command delta.
    fn stage(&self, t: usize, x: &[f64], dq: &Delta, acc: &mut CostBreakdown) {
        let w = self.weights;
        let target = &self.targets[t];
        let n = x.len();
        let tip = Vector3::new(x[n - 3], x[n - 2], x[n - 1]);
        acc.tip += w.w_tip * w.tip_error_sq(&(tip - target.tip));
        if let (Some(shape), true) = (&target.shape, w.w_shape > 0.0) {
            let mut s = 0.0;
            for i in 0..n / 3 {
                let pw = w
                    .point_weights
                    .as_ref()
                    .map_or(1.0, |p| p.get(i).copied().unwrap_or(1.0));
                if pw == 0.0 {
                    continue;
                }
                let d2 = (0..3).map(|c| (x[3 * i + c] - shape[3 * i + c]).powi(2)).sum::<f64>();
                s += pw * d2;
            }
            acc.shape += w.w_shape * s;
        }
        acc.control += w.w_u * dq.iter().map(|v| v * v).sum::<f64>();
        if let Some(spheres) = self.obstacles.get(t) {
            if !spheres.is_empty() && w.w_obs > 0.0 {
                for i in 0..n / 3 {
                    let p = Vector3::new(x[3 * i], x[3 * i + 1], x[3 * i + 2]);
                    let d = spheres
                        .iter()
                        .map(|s| s.signed_distance(&p))
                        .fold(f64::INFINITY, f64::min);
                    if d < w.obs_threshold {
                        acc.obstacle += w.w_obs;
                    }
                }
            }
        }
    }

    fn terminal(&self, x: &[f64], acc: &mut CostBreakdown) {
        let n = x.len();
        let tip = Vector3::new(x[n - 3], x[n - 2], x[n - 1]);
        let target = &self.targets[self.targets.len() - 1];
        acc.terminal += self.weights.w_term * self.weights.tip_error_sq(&(tip - target.tip));
    }
}

/// Cost of a predicted trajectory. `commands` are `q_1 ..= q_T`, their
/// predecessor is `q0`. Missing obstacle steps count as obstacle-free.
pub fn trajectory_cost(
    states: &[DVector<f64>],
    q0: &ActuationVector,
    commands: &[ActuationVector],
    targets: &[HorizonTarget],
    weights: &ObjectiveWeights,
    obstacles: &[Vec<Sphere>],
) -> Result<CostBreakdown> {
    if states.is_empty() || states.len() != targets.len() || states.len() != commands.len() {
        return Err(Error::Dimension {
            expected: targets.len(),
            got: states.len(),
        });
    }
    let inputs = CostInputs {
        q0,
        targets,
        weights,
        obstacles,
    };
    let mut acc = CostBreakdown::default();
    let mut prev = *inputs.q0;
    for (t, (x, q)) in states.iter().zip(commands).enumerate() {
        let dq: Delta = std::array::from_fn(|j| q[j] - prev[j]);
        inputs.stage(t, x.as_slice(), &dq, &mut acc);
        prev = *q;
    }
    inputs.terminal(states[states.len() - 1].as_slice(), &mut acc);
    Ok(acc)
}

/// `exp(−(S_k − S_min)/λ)` normalized; `None` when no cost is finite.
pub fn softmax_weights(costs: &[f64], temperature: f64) -> Option<Vec<f64>> {
    let min = costs
        .iter()
        .copied()
        .filter(|c| c.is_finite())
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return None;
    }
    let mut w: Vec<f64> = costs
        .iter()
        .map(|&c| {
            if c.is_finite() {
                (-(c - min) / temperature).exp()
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    Some(w)
}

/// Inputs to one optimization step.
#[derive(Clone, Copy, Debug)]
pub struct StepContext<'a> {
    pub x0: &'a DVector<f64>,
    pub q0: &'a ActuationVector,
    /// One target per horizon step.
    pub targets: &'a [HorizonTarget],
    /// Obstacle snapshots per horizon step; may be empty.
    pub obstacles: &'a [Vec<Sphere>],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MppiOutput {
    pub q_next: ActuationVector,
    /// Updated mean delta sequence before the receding-horizon shift.
    pub sequence: Vec<Delta>,
    pub weights: Vec<f64>,
    pub costs: Vec<f64>,
    pub feasible: bool,
}

impl MppiOutput {
    pub fn min_cost(&self) -> f64 {
        self.costs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `1 / Σω²`.
    pub fn effective_samples(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// One MPPI update with a caller-supplied trajectory cost. The closure gets
/// the flat `T × 3m` predicted states and the clamped commands.
pub fn mppi_step_with<F>(
    ctx: &StepContext<'_>,
    jacobian: &JacobianMatrix,
    config: &MppiConfig,
    nominal: &[Delta],
    noise: &Perturbations,
    cost: F,
) -> Result<MppiOutput>
where
    F: FnMut(&[f64], &[ActuationVector]) -> f64,
{
    optimize(ctx, jacobian, config, nominal, noise, 0, cost)
}

/// Rows before `first_row` are not propagated and keep their `x0` values.
fn optimize<F>(
    ctx: &StepContext<'_>,
    jacobian: &JacobianMatrix,
    config: &MppiConfig,
    nominal: &[Delta],
    noise: &Perturbations,
    first_row: usize,
    mut cost: F,
) -> Result<MppiOutput>
where
    F: FnMut(&[f64], &[ActuationVector]) -> f64,
{
    let t_len = config.horizon;
    let n = jacobian.entries.nrows();
    if nominal.len() != t_len || noise.horizon != t_len || ctx.targets.len() != t_len {
        return Err(Error::Dimension {
            expected: t_len,
            got: nominal.len().min(noise.horizon).min(ctx.targets.len()),
        });
    }
    if ctx.x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: ctx.x0.len(),
        });
    }
    let bounds = &config.bounds;
    let q0 = bounds.clamp(ctx.q0);
    // Column-major J as a flat slice for the inner product.
    let jac = jacobian.entries.as_slice();
    let mut states: Vec<f64> = ctx.x0.iter().copied().cycle().take(t_len * n).collect();
    let mut commands = vec![q0; t_len];
    let mut costs = Vec::with_capacity(noise.samples);
    for k in 0..noise.samples {
        let eps = noise.sequence(k);
        let mut q = q0;
        for t in 0..t_len {
            let dq: Delta = std::array::from_fn(|j| nominal[t][j] + eps[t][j]);
            let (next, eff) = advance(&q, &dq, bounds);
            let (done, rest) = states.split_at_mut(t * n);
            let row = &mut rest[first_row..n];
            row.copy_from_slice(if t == 0 {
                &ctx.x0.as_slice()[first_row..]
            } else {
                &done[(t - 1) * n + first_row..]
            });
            for (j, e) in eff.iter().enumerate() {
                if *e != 0.0 {
                    let col = &jac[j * n + first_row..(j + 1) * n];
                    row.iter_mut().zip(col).for_each(|(r, c)| *r += c * e);
                }
            }
            q = next;
            commands[t] = q;
        }
        let c = cost(&states, &commands);
        costs.push(if c.is_nan() { f64::INFINITY } else { c });
    }
    match softmax_weights(&costs, config.temperature) {
        None => Ok(MppiOutput {
            q_next: q0,
            sequence: nominal.to_vec(),
            weights: vec![0.0; noise.samples],
            costs,
            feasible: false,
        }),
        Some(weights) => {
            let mut sequence = nominal.to_vec();
            for (k, w) in weights.iter().enumerate() {
                if *w == 0.0 {
                    continue;
                }
                for (t, eps) in noise.sequence(k).iter().enumerate() {
                    for j in 0..NUM_INPUTS {
                        sequence[t][j] += w * eps[j];
                    }
                }
            }
            let (q_next, _) = advance(&q0, &sequence[0], bounds);
            Ok(MppiOutput {
                q_next,
                sequence,
                weights,
                costs,
                feasible: true,
            })
        }
    }
}

/// One MPPI update with the standard objective.
pub fn mppi_step(
    ctx: &StepContext<'_>,
    jacobian: &JacobianMatrix,
    config: &MppiConfig,
    weights: &ObjectiveWeights,
    nominal: &[Delta],
    seed: u64,
) -> Result<MppiOutput> {
    weights.validate()?;
    let noise = sample_perturbations(config, seed)?;
    let inputs = CostInputs {
        q0: ctx.q0,
        targets: ctx.targets,
        weights,
        obstacles: ctx.obstacles,
    };
    let n = jacobian.entries.nrows();
    let q0 = config.bounds.clamp(ctx.q0);
    let needs_shape = weights.w_shape > 0.0 && ctx.targets.iter().any(|t| t.shape.is_some());
    let needs_points = weights.w_obs > 0.0 && ctx.obstacles.iter().any(|o| !o.is_empty());
    let first_row = if needs_shape || needs_points {
        0
    } else {
        n.saturating_sub(3)
    };
    optimize(ctx, jacobian, config, nominal, &noise, first_row, |x, qs| {
        let mut acc = CostBreakdown::default();
        let mut prev = q0;
        for (t, q) in qs.iter().enumerate() {
            let dq: Delta = std::array::from_fn(|j| q[j] - prev[j]);
            inputs.stage(t, &x[t * n..(t + 1) * n], &dq, &mut acc);
            prev = *q;
        }
        inputs.terminal(&x[(qs.len() - 1) * n..], &mut acc);
        acc.total()
    })
}

/// Result of one closed-loop controller step.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlStep {
    pub q_next: ActuationVector,
    pub feasible: bool,
    /// Cost terms of the averaged sequence under the linear model.
    pub predicted: CostBreakdown,
    pub effective_samples: f64,
}

/// Receding-horizon controller: refreshes the Jacobian, optimizes, applies
/// the first delta and shifts the remaining sequence forward.
#[derive(Clone, Debug)]
pub struct MppiController {
    config: MppiConfig,
    weights: ObjectiveWeights,
    points: usize,
    delta: f64,
    seed: u64,
    steps: u64,
    sequence: Vec<Delta>,
}

impl MppiController {
    pub fn new(config: MppiConfig, weights: ObjectiveWeights, points: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        weights.validate()?;
        if points < 2 {
            return Err(Error::TooFewPoints { min: 2, got: points });
        }
        let sequence = vec![[0.0; NUM_INPUTS]; config.horizon];
        Ok(Self {
            config,
            weights,
            points,
            delta: DEFAULT_DELTA,
            seed,
            steps: 0,
            sequence,
        })
    }

    pub fn config(&self) -> &MppiConfig {
        &self.config
    }

    pub fn weights(&self) -> &ObjectiveWeights {
        &self.weights
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn sequence(&self) -> &[Delta] {
        &self.sequence
    }

    /// Takes effect at the next step.
    pub fn set_weights(&mut self, weights: ObjectiveWeights) -> Result<()> {
        weights.validate()?;
        self.weights = weights;
        Ok(())
    }

    pub fn set_bounds(&mut self, bounds: ActuationBounds) -> Result<()> {
        bounds.validate()?;
        self.config.bounds = bounds;
        Ok(())
    }

    pub fn reset(&mut self) {
        self.sequence = vec![[0.0; NUM_INPUTS]; self.config.horizon];
        self.steps = 0;
    }

    fn step_seed(&self) -> u64 {
        self.seed ^ self.steps.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }

    /// `x0` is the measured state; `None` uses the model prediction at `q0`.
    pub fn step(
        &mut self,
        model: &ShapeModel,
        q0: &ActuationVector,
        x0: Option<&DVector<f64>>,
        targets: &[HorizonTarget],
        obstacles: &[Vec<Sphere>],
    ) -> Result<ControlStep> {
        let q0 = self.config.bounds.clamp(q0);
        let jac = central_difference_jacobian(&q0, self.points, self.delta, model, &self.config.bounds)?;
        let x0 = x0.unwrap_or(&jac.base_x).clone();
        let ctx = StepContext {
            x0: &x0,
            q0: &q0,
            targets,
            obstacles,
        };
        let out = mppi_step(
            &ctx,
            &jac,
            &self.config,
            &self.weights,
            &self.sequence,
            self.step_seed(),
        )?;
        self.steps += 1;
        let predicted = if out.feasible {
            let r = rollout(&x0, &q0, &out.sequence, &jac, &self.config.bounds)?;
            trajectory_cost(&r.states, &q0, &r.commands, targets, &self.weights, obstacles)?
        } else {
            CostBreakdown::default()
        };
        if out.feasible {
            self.sequence = out.sequence[1..].to_vec();
            self.sequence.push([0.0; NUM_INPUTS]);
        }
        Ok(ControlStep {
            q_next: out.q_next,
            feasible: out.feasible,
            predicted,
            effective_samples: if out.feasible { out.effective_samples() } else { 0.0 },
        })
    }
}

/// Downsampled model state at `q`, the usual `x0` for an unperturbed plant.
pub fn model_state(model: &ShapeModel, q: &ActuationVector, points: usize) -> Result<DVector<f64>> {
    downsample_state(&model.backbone(q)?, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::SegmentParams;
    use nalgebra::DMatrix;

    fn literal_config(samples: usize, horizon: usize) -> MppiConfig {
        MppiConfig {
            num_samples: samples,
            horizon,
            control_dt: 1.0,
            ..Default::default()
        }
    }

    fn toy_jacobian(rows: usize) -> JacobianMatrix {
        JacobianMatrix {
            entries: DMatrix::from_fn(rows, NUM_INPUTS, |i, j| ((i * 7 + j) as f64 * 0.37).sin()),
            base_q: ActuationVector::zeros(),
            base_x: DVector::zeros(rows),
            one_sided: [false; NUM_INPUTS],
        }
    }

    fn target(x: &DVector<f64>) -> HorizonTarget {
        let n = x.len();
        HorizonTarget {
            tip: Vector3::new(x[n - 3], x[n - 2], x[n - 1]),
            shape: Some(x.clone()),
        }
    }

    #[test]
    fn zero_covariance_returns_mean() {
        let mut c = literal_config(5, 3);
        c.noise_cov = isotropic(0.0);
        c.noise_mean = [0.001, -0.002, 0.0, 0.0, 0.003, 0.0, 0.0];
        let p = sample_perturbations(&c, 4).unwrap();
        assert!(p.data.iter().all(|d| *d == c.noise_mean));
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let c = literal_config(100_000, 1);
        let p = sample_perturbations(&c, 11).unwrap();
        let sigma = 5e-5f64.sqrt();
        let bound = 3.0 * sigma / (p.data.len() as f64).sqrt();
        for j in 0..NUM_INPUTS {
            let mean = p.data.iter().map(|d| d[j]).sum::<f64>() / p.data.len() as f64;
            assert!(mean.abs() < bound, "channel {j}: {mean} vs {bound}");
        }
    }

    #[test]
    fn correlated_covariance_is_reproduced() {
        let mut c = literal_config(50_000, 1);
        let mut cov = isotropic(1.0);
        cov[0][1] = 0.6;
        cov[1][0] = 0.6;
        cov[2][2] = 0.0;
        c.noise_cov = cov;
        let p = sample_perturbations(&c, 2).unwrap();
        let n = p.data.len() as f64;
        let e = |a: usize, b: usize| p.data.iter().map(|d| d[a] * d[b]).sum::<f64>() / n;
        assert!((e(0, 0) - 1.0).abs() < 0.03);
        assert!((e(0, 1) - 0.6).abs() < 0.03);
        assert_eq!(e(2, 2), 0.0);
    }

    #[test]
    fn step_noise_scales_with_period() {
        let c = MppiConfig {
            num_samples: 20_000,
            horizon: 1,
            ..Default::default()
        };
        let p = sample_perturbations(&c, 3).unwrap();
        let var = p.data.iter().map(|d| d[4] * d[4]).sum::<f64>() / p.data.len() as f64;
        let expected = 5e-5 * c.control_dt * c.control_dt;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
    }

    #[test]
    fn same_seed_same_tensor() {
        let c = literal_config(50, 10);
        assert_eq!(
            sample_perturbations(&c, 9).unwrap(),
            sample_perturbations(&c, 9).unwrap()
        );
        assert_ne!(
            sample_perturbations(&c, 9).unwrap(),
            sample_perturbations(&c, 10).unwrap()
        );
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let mut c = literal_config(1, 1);
        c.noise_cov[0][0] = -1e-6;
        assert!(c.validate().is_err());
        let mut c = literal_config(1, 1);
        c.noise_cov[0][1] = 1e-3;
        assert!(c.validate().is_err());
        assert!(literal_config(0, 1).validate().is_err());
    }

    #[test]
    fn zero_deltas_hold_state() {
        let j = toy_jacobian(12);
        let x0 = DVector::from_fn(12, |i, _| i as f64);
        let r = rollout(
            &x0,
            &ActuationVector::zeros(),
            &[[0.0; NUM_INPUTS]; 5],
            &j,
            &ActuationBounds::default(),
        )
        .unwrap();
        assert!(r.states.iter().all(|x| *x == x0));
    }

    #[test]
    fn frozen_jacobian_telescopes() {
        let j = toy_jacobian(9);
        let x0 = DVector::from_element(9, 0.1);
        let deltas: Vec<Delta> = (0..6)
            .map(|t| std::array::from_fn(|k| 1e-4 * ((t * 3 + k) as f64).cos()))
            .collect();
        let r = rollout(&x0, &ActuationVector::zeros(), &deltas, &j, &ActuationBounds::default()).unwrap();
        let total: Delta = std::array::from_fn(|k| deltas.iter().map(|d| d[k]).sum());
        let expected = &x0 + &j.entries * DVector::from_row_slice(&total);
        assert!((&r.states[5] - expected).amax() < 1e-15);
    }

    #[test]
    fn saturated_channel_stays_put() {
        let j = toy_jacobian(6);
        let bounds = ActuationBounds::default();
        let mut q0 = ActuationVector::zeros();
        q0[2] = bounds.max[2];
        let mut dq = [0.0; NUM_INPUTS];
        dq[2] = 0.004;
        let r = rollout(&DVector::zeros(6), &q0, &[dq; 3], &j, &bounds).unwrap();
        assert!(r.states.iter().all(|x| x.amax() == 0.0));
        assert!(r.commands.iter().all(|q| q[2] == bounds.max[2]));
    }

    #[test]
    fn on_reference_costs_nothing() {
        let x = DVector::from_fn(12, |i, _| 0.01 * i as f64);
        let q = ActuationVector::zeros();
        let c = trajectory_cost(
            &[x.clone(), x.clone()],
            &q,
            &[q, q],
            &[target(&x), target(&x)],
            &ObjectiveWeights::default(),
            &[],
        )
        .unwrap();
        assert_eq!(c.total(), 0.0);
    }

    #[test]
    fn single_tip_error_cost() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.15]);
        let mut t = target(&x);
        t.tip.x += 0.01;
        t.shape = None;
        let w = ObjectiveWeights {
            w_term: 0.0,
            ..Default::default()
        };
        let q = ActuationVector::zeros();
        let c = trajectory_cost(&[x.clone()], &q, &[q], &[t.clone()], &w, &[]).unwrap();
        assert!((c.total() - 0.01).abs() < 1e-15);
        // The default terminal weight repeats the tip term on the last state.
        let c = trajectory_cost(&[x], &q, &[q], &[t], &ObjectiveWeights::default(), &[]).unwrap();
        assert!((c.terminal - 0.01).abs() < 1e-15);
    }

    #[test]
    fn near_obstacle_adds_barrier() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.15]);
        let sphere = Sphere {
            center: Vector3::new(0.029, 0.0, 0.15),
            radius: 0.01,
        };
        let q = ActuationVector::zeros();
        let c = trajectory_cost(
            &[x.clone()],
            &q,
            &[q],
            &[target(&x)],
            &ObjectiveWeights::default(),
            &[vec![sphere]],
        )
        .unwrap();
        assert!((c.obstacle - 1e5).abs() < 1e-9);
        let far = Sphere {
            center: Vector3::new(0.031, 0.0, 0.15),
            ..sphere
        };
        let c = trajectory_cost(
            &[x.clone()],
            &q,
            &[q],
            &[target(&x)],
            &ObjectiveWeights::default(),
            &[vec![far]],
        )
        .unwrap();
        assert_eq!(c.obstacle, 0.0);
    }

    #[test]
    fn point_weights_and_tip_axis() {
        let x = DVector::from_vec(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.15]);
        let mut t = target(&x);
        let mut shape = x.clone();
        shape[0] = 0.01;
        t.shape = Some(shape);
        t.tip.y += 0.01;
        let q = ActuationVector::zeros();
        let mut w = ObjectiveWeights {
            w_term: 0.0,
            ..Default::default()
        };
        let c = trajectory_cost(&[x.clone()], &q, &[q], &[t.clone()], &w, &[]).unwrap();
        assert!((c.shape - 10.0 * 1e-4).abs() < 1e-15);
        w.point_weights = Some(vec![0.0, 1.0]);
        w.tip_axis = Some(TipAxis {
            direction: Vector3::y(),
            factor: 2.0,
        });
        let c = trajectory_cost(&[x], &q, &[q], &[t], &w, &[]).unwrap();
        assert_eq!(c.shape, 0.0);
        assert!((c.tip - 100.0 * 4e-4).abs() < 1e-15);
    }

    #[test]
    fn softmax_examples() {
        let lam = 1e-3;
        let w = softmax_weights(&[3.0; 8], lam).unwrap();
        assert!(w.iter().all(|v| (v - 0.125).abs() < 1e-15));
        let w = softmax_weights(&[0.0, lam * 2f64.ln()], lam).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12 && (w[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(softmax_weights(&[f64::INFINITY; 3], lam).is_none());
    }

    #[test]
    fn softmax_monotone_in_cost() {
        let lam = 1e-3;
        let mut last = 0.0;
        for c in [5e-3, 4e-3, 2e-3, 1e-3, 0.0] {
            let w = softmax_weights(&[c, 1e-3], lam).unwrap()[0];
            assert!(w > last);
            last = w;
        }
    }

    fn toy_context() -> (DVector<f64>, Vec<HorizonTarget>, JacobianMatrix) {
        let j = toy_jacobian(6);
        let x0 = DVector::zeros(6);
        let mut t = target(&x0);
        t.tip += Vector3::new(0.002, -0.001, 0.001);
        (x0, vec![t; 4], j)
    }

    #[test]
    fn weights_sum_to_one_and_shift_invariant() {
        let (x0, targets, j) = toy_context();
        let cfg = literal_config(200, 4);
        let ctx = StepContext {
            x0: &x0,
            q0: &ActuationVector::zeros(),
            targets: &targets,
            obstacles: &[],
        };
        let nominal = vec![[0.0; NUM_INPUTS]; 4];
        let noise = sample_perturbations(&cfg, 5).unwrap();
        let cost = |x: &[f64], _: &[ActuationVector]| x.iter().map(|v| (v - 0.001).powi(2)).sum::<f64>() * 10.0;
        let a = mppi_step_with(&ctx, &j, &cfg, &nominal, &noise, cost).unwrap();
        let b = mppi_step_with(&ctx, &j, &cfg, &nominal, &noise, |x, q| cost(x, q) + 1.0).unwrap();
        assert!((a.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (wa, wb) in a.weights.iter().zip(&b.weights) {
            assert!((wa - wb).abs() < 1e-12);
        }
        for j in 0..NUM_INPUTS {
            assert!((a.q_next[j] - b.q_next[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn infeasible_returns_previous_command() {
        let (x0, targets, j) = toy_context();
        let cfg = literal_config(16, 4);
        let q0 = ActuationVector([0.001; NUM_INPUTS]);
        let ctx = StepContext {
            x0: &x0,
            q0: &q0,
            targets: &targets,
            obstacles: &[],
        };
        let noise = sample_perturbations(&cfg, 1).unwrap();
        let out = mppi_step_with(&ctx, &j, &cfg, &vec![[0.0; NUM_INPUTS]; 4], &noise, |_, _| {
            f64::INFINITY
        })
        .unwrap();
        assert!(!out.feasible);
        assert_eq!(out.q_next, q0);
    }

    #[test]
    fn command_clamped_at_bound() {
        let (x0, targets, j) = toy_context();
        let mut cfg = literal_config(8, 4);
        cfg.noise_cov = isotropic(0.0);
        let bounds = cfg.bounds.clone();
        let mut q0 = ActuationVector::zeros();
        q0[1] = bounds.max[1] - 0.001;
        let mut nominal = vec![[0.0; NUM_INPUTS]; 4];
        nominal[0][1] = 0.01;
        let ctx = StepContext {
            x0: &x0,
            q0: &q0,
            targets: &targets,
            obstacles: &[],
        };
        let out = mppi_step(&ctx, &j, &cfg, &ObjectiveWeights::default(), &nominal, 0).unwrap();
        assert_eq!(out.q_next[1], bounds.max[1]);
        assert!(bounds.contains(&out.q_next));
    }

    #[test]
    fn controller_reaches_nearby_target() {
        let model = ShapeModel::nominal(SegmentParams::default());
        let mut ctl = MppiController::new(MppiConfig::default(), ObjectiveWeights::default(), 6, 3).unwrap();
        let goal = Vector3::new(0.01, -0.005, 0.148);
        let targets = vec![HorizonTarget { tip: goal, shape: None }; 10];
        let mut q = ActuationVector::zeros();
        let start = (model.backbone(&q).unwrap().tip() - goal).norm();
        for _ in 0..150 {
            q = ctl.step(&model, &q, None, &targets, &[]).unwrap().q_next;
        }
        let end = (model.backbone(&q).unwrap().tip() - goal).norm();
        assert!(end < 0.1 * start, "{end} vs {start}");
        assert_eq!(ctl.sequence().len(), 10);
    }
}
