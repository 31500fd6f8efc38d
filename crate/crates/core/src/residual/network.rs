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
//! Fully connected residual vector field with LeakyReLU hidden layers and a
//! gain-scaled Tanh output, evaluated on row-major batches.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{INPUT_DIM, STATE_DIM};
use crate::backbone::NUM_INPUTS;

/// Layer layout and fixed input normalization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input: usize,
    pub hidden: [usize; 2],
    pub output: usize,
    pub leaky_slope: f64,
    pub gain: f64,
    /// Multiplied into the raw input before the first layer.
    pub input_scale: Vec<f64>,
}

impl Default for Architecture {
    fn default() -> Self {
        let mut input_scale = Vec::with_capacity(INPUT_DIM);
        input_scale.extend([10.0; 3]); // position
        input_scale.extend([1.0; 9]); // orientation
        input_scale.extend([1.0 / 40.0; 3]); // curvature
        input_scale.extend([1.0; 6]); // augmentation
        input_scale.push(1.0 / 0.15); // arc length
        input_scale.push(1.0 / 0.03); // insertion
        input_scale.extend([1.0 / 0.015; NUM_INPUTS - 1]);
        Self {
            input: INPUT_DIM,
            hidden: [256, 256],
            output: STATE_DIM,
            leaky_slope: 0.01,
            gain: 5.0,
            input_scale,
        }
    }
}

impl Architecture {
    pub fn param_count(&self) -> usize {
        let [h1, h2] = self.hidden;
        h1 * self.input + h1 + h2 * h1 + h2 + self.output * h2 + self.output
    }

    fn offsets(&self) -> Offsets {
        let [h1, h2] = self.hidden;
        let w1 = 0;
        let b1 = w1 + h1 * self.input;
        let w2 = b1 + h1;
        let b2 = w2 + h2 * h1;
        let w3 = b2 + h2;
        let b3 = w3 + self.output * h2;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + self.output,
        }
    }
}

#[derive(Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

/// Activations kept from a batch forward pass for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct LayerTape {
    pub rows: usize,
    x: Vec<f64>,
    a1: Vec<f64>,
    a2: Vec<f64>,
    t: Vec<f64>,
}

impl LayerTape {
    pub fn memory_floats(&self) -> usize {
        self.x.len() + self.a1.len() + self.a2.len() + self.t.len()
    }
}

/// The learned correction `f_theta(z, s, q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNetwork {
    arch: Architecture,
    params: Vec<f64>,
}

/// `C = alpha * A B + beta * C` over strided row/column layouts.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(a.len() >= (m - 1) * rsa + (k.max(1) - 1) * csa + 1 || k == 0);
    assert!(b.len() >= (k.max(1) - 1) * rsb + (n - 1) * csb + 1 || k == 0);
    assert!(c.len() >= (m - 1) * rsc + n);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

fn broadcast_rows(out: &mut Vec<f64>, rows: usize, bias: &[f64]) {
    out.clear();
    out.reserve(rows * bias.len());
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
}

impl ResidualNetwork {
    /// PyTorch-style uniform init with the output layer zeroed, so a fresh
    /// network contributes exactly nothing.
    pub fn new(arch: Architecture, seed: u64) -> Self {
        let mut net = Self::new_random(arch, seed);
        let o = net.arch.offsets();
        net.params[o.w3..o.end].fill(0.0);
        net
    }

    /// Uniform init on every layer including the output layer.
    pub fn new_random(arch: Architecture, seed: u64) -> Self {
        let o = arch.offsets();
        let [h1, h2] = arch.hidden;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; o.end];
        let mut fill = |range: std::ops::Range<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.random_range(-bound..bound);
            }
        };
        fill(o.w1..o.w2, arch.input);
        fill(o.w2..o.w3, h1);
        fill(o.w3..o.end, h2);
        Self { arch, params }
    }

    pub fn from_parts(arch: Architecture, params: Vec<f64>) -> crate::Result<Self> {
        if params.len() != arch.param_count() {
            return Err(crate::Error::Dimension {
                expected: arch.param_count(),
                got: params.len(),
            });
        }
        if arch.input_scale.len() != arch.input {
            return Err(crate::Error::Dimension {
                expected: arch.input,
                got: arch.input_scale.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn gain(&self) -> f64 {
        self.arch.gain
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Scales raw `[z, s, q]` into the first-layer input, appending to `out`.
    pub fn encode_input(&self, z: &[f64], s: f64, q: &[f64], out: &mut Vec<f64>) {
        let scale = &self.arch.input_scale;
        out.extend(z.iter().zip(scale).map(|(v, k)| v * k));
        out.push(s * scale[STATE_DIM]);
        out.extend(q.iter().zip(&scale[STATE_DIM + 1..]).map(|(v, k)| v * k));
    }

    /// Batch forward on already-encoded inputs `x` (`rows × input`).
    /// Writes `rows × output` residuals to `y` and records a tape if asked.
    pub fn forward_batch(&self, x: &[f64], rows: usize, y: &mut Vec<f64>, tape: Option<&mut LayerTape>) {
        let a = &self.arch;
        let [h1, h2] = a.hidden;
        let o = a.offsets();
        let p = &self.params;
        let slope = a.leaky_slope;

        let mut a1 = Vec::new();
        broadcast_rows(&mut a1, rows, &p[o.b1..o.w2]);
        gemm(
            rows,
            a.input,
            h1,
            1.0,
            x,
            (a.input, 1),
            &p[o.w1..o.b1],
            (1, a.input),
            1.0,
            &mut a1,
            h1,
        );
        let hidden1: Vec<f64> = a1.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();

        let mut a2 = Vec::new();
        broadcast_rows(&mut a2, rows, &p[o.b2..o.w3]);
        gemm(
            rows,
            h1,
            h2,
            1.0,
            &hidden1,
            (h1, 1),
            &p[o.w2..o.b2],
            (1, h1),
            1.0,
            &mut a2,
            h2,
        );
        let hidden2: Vec<f64> = a2.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect();

        let mut a3 = Vec::new();
        broadcast_rows(&mut a3, rows, &p[o.b3..o.end]);
        gemm(
            rows,
            h2,
            a.output,
            1.0,
            &hidden2,
            (h2, 1),
            &p[o.w3..o.b3],
            (1, h2),
            1.0,
            &mut a3,
            a.output,
        );
        for v in &mut a3 {
            *v = v.tanh();
        }
        y.clear();
        y.extend(a3.iter().map(|t| a.gain * t));
        if let Some(tape) = tape {
            tape.rows = rows;
            tape.x = x.to_vec();
            tape.a1 = a1;
            tape.a2 = a2;
            tape.t = a3;
        }
    }

    /// Reverse pass for a recorded batch. `y_bar` is `rows × output`.
    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the raw (unscaled) state part of the input, `rows × STATE_DIM`.
    pub fn backward_batch(&self, tape: &LayerTape, y_bar: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let a = &self.arch;
        let [h1, h2] = a.hidden;
        let o = a.offsets();
        let p = &self.params;
        let rows = tape.rows;
        let slope = a.leaky_slope;
        let lrelu = |v: f64| if v > 0.0 { v } else { slope * v };
        let dlrelu = |v: f64| if v > 0.0 { 1.0 } else { slope };

        let g3: Vec<f64> = y_bar
            .iter()
            .zip(&tape.t)
            .map(|(yb, t)| yb * a.gain * (1.0 - t * t))
            .collect();
        let hidden2: Vec<f64> = tape.a2.iter().map(|&v| lrelu(v)).collect();
        let hidden1: Vec<f64> = tape.a1.iter().map(|&v| lrelu(v)).collect();

        let (head, tail) = grad.split_at_mut(o.w3);
        let (gw3, gb3) = tail.split_at_mut(o.b3 - o.w3);
        gemm(
            a.output,
            rows,
            h2,
            1.0,
            &g3,
            (1, a.output),
            &hidden2,
            (h2, 1),
            1.0,
            gw3,
            h2,
        );
        for r in 0..rows {
            for (gb, g) in gb3.iter_mut().zip(&g3[r * a.output..(r + 1) * a.output]) {
                *gb += g;
            }
        }
        let mut g2 = vec![0.0; rows * h2];
        gemm(
            rows,
            a.output,
            h2,
            1.0,
            &g3,
            (a.output, 1),
            &p[o.w3..o.b3],
            (h2, 1),
            0.0,
            &mut g2,
            h2,
        );
        for (g, &v) in g2.iter_mut().zip(&tape.a2) {
            *g *= dlrelu(v);
        }

        let (head, tail) = head.split_at_mut(o.w2);
        let (gw2, gb2) = tail.split_at_mut(o.b2 - o.w2);
        gemm(h2, rows, h1, 1.0, &g2, (1, h2), &hidden1, (h1, 1), 1.0, gw2, h1);
        for r in 0..rows {
            for (gb, g) in gb2.iter_mut().zip(&g2[r * h2..(r + 1) * h2]) {
                *gb += g;
            }
        }
        let mut g1 = vec![0.0; rows * h1];
        gemm(
            rows,
            h2,
            h1,
            1.0,
            &g2,
            (h2, 1),
            &p[o.w2..o.b2],
            (h1, 1),
            0.0,
            &mut g1,
            h1,
        );
        for (g, &v) in g1.iter_mut().zip(&tape.a1) {
            *g *= dlrelu(v);
        }

        let (gw1, gb1) = head.split_at_mut(o.b1);
        gemm(
            h1,
            rows,
            a.input,
            1.0,
            &g1,
            (1, h1),
            &tape.x,
            (a.input, 1),
            1.0,
            gw1,
            a.input,
        );
        for r in 0..rows {
            for (gb, g) in gb1.iter_mut().zip(&g1[r * h1..(r + 1) * h1]) {
                *gb += g;
            }
        }
        let mut gx = vec![0.0; rows * a.input];
        gemm(
            rows,
            h1,
            a.input,
            1.0,
            &g1,
            (h1, 1),
            &p[o.w1..o.b1],
            (a.input, 1),
            0.0,
            &mut gx,
            a.input,
        );

        let mut out = Vec::with_capacity(rows * STATE_DIM);
        for r in 0..rows {
            let row = &gx[r * a.input..r * a.input + STATE_DIM];
            out.extend(row.iter().zip(&a.input_scale).map(|(g, k)| g * k));
        }
        out
    }

    /// Single-point evaluation of the residual.
    pub fn forward(&self, z: &[f64; STATE_DIM], q: &[f64], s: f64) -> [f64; STATE_DIM] {
        let mut x = Vec::with_capacity(self.arch.input);
        self.encode_input(z, s, q, &mut x);
        let mut y = Vec::new();
        self.forward_batch(&x, 1, &mut y, None);
        let mut out = [0.0; STATE_DIM];
        out.copy_from_slice(&y);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_input(seed: u64) -> ([f64; STATE_DIM], [f64; NUM_INPUTS], f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = [0.0; STATE_DIM];
        for v in &mut z {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut q = [0.0; NUM_INPUTS];
        for v in &mut q {
            *v = rng.random_range(-0.015..0.015);
        }
        (z, q, rng.random_range(0.0..0.15))
    }

    #[test]
    fn parameter_count_matches_layout() {
        let arch = Architecture::default();
        assert_eq!(arch.param_count(), 29 * 256 + 256 + 256 * 256 + 256 + 256 * 21 + 21);
        assert_eq!(ResidualNetwork::new(arch, 0).param_count(), arch_count());
        fn arch_count() -> usize {
            Architecture::default().param_count()
        }
    }

    #[test]
    fn zero_output_layer_gives_zero_residual() {
        let net = ResidualNetwork::new(Architecture::default(), 3);
        for seed in 0..5 {
            let (z, q, s) = sample_input(seed);
            assert_eq!(net.forward(&z, &q, s), [0.0; STATE_DIM]);
        }
    }

    #[test]
    fn output_bounded_by_gain() {
        let mut arch = Architecture::default();
        arch.gain = 2.0;
        let mut net = ResidualNetwork::new_random(arch, 9);
        for p in net.params_mut() {
            *p *= 40.0;
        }
        for seed in 0..20 {
            let (z, q, s) = sample_input(seed);
            for v in net.forward(&z, &q, s) {
                assert!(v.abs() <= 2.0);
            }
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let net = ResidualNetwork::new_random(Architecture::default(), 1);
        let (z, q, s) = sample_input(4);
        assert_eq!(net.forward(&z, &q, s), net.forward(&z, &q, s));
        let again = ResidualNetwork::new_random(Architecture::default(), 1);
        assert_eq!(net, again);
    }

    #[test]
    fn batch_rows_match_single_evaluation() {
        let net = ResidualNetwork::new_random(Architecture::default(), 5);
        let mut x = Vec::new();
        let inputs: Vec<_> = (0..7).map(sample_input).collect();
        for (z, q, s) in &inputs {
            net.encode_input(z, *s, q, &mut x);
        }
        let mut y = Vec::new();
        net.forward_batch(&x, inputs.len(), &mut y, None);
        for (r, (z, q, s)) in inputs.iter().enumerate() {
            let single = net.forward(z, q, *s);
            for c in 0..STATE_DIM {
                assert!((single[c] - y[r * STATE_DIM + c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut arch = Architecture::default();
        arch.hidden = [16, 12];
        let net = ResidualNetwork::new_random(arch, 11);
        let (z, q, s) = sample_input(2);
        let weights: Vec<f64> = (0..STATE_DIM).map(|i| (i as f64 * 0.37).sin()).collect();
        let objective = |net: &ResidualNetwork, z: &[f64; STATE_DIM]| -> f64 {
            net.forward(z, &q, s).iter().zip(&weights).map(|(a, b)| a * b).sum()
        };
        let mut x = Vec::new();
        net.encode_input(&z, s, &q, &mut x);
        let mut y = Vec::new();
        let mut tape = LayerTape::default();
        net.forward_batch(&x, 1, &mut y, Some(&mut tape));
        let mut grad = vec![0.0; net.param_count()];
        let gz = net.backward_batch(&tape, &weights, &mut grad);

        let eps = 1e-6;
        for i in (0..net.param_count()).step_by(37) {
            let mut plus = net.clone();
            plus.params_mut()[i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[i] -= eps;
            let fd = (objective(&plus, &z) - objective(&minus, &z)) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() < 1e-7 * (1.0 + fd.abs()),
                "param {i}: {fd} vs {}",
                grad[i]
            );
        }
        for i in 0..STATE_DIM {
            let mut zp = z;
            zp[i] += eps;
            let mut zm = z;
            zm[i] -= eps;
            let fd = (objective(&net, &zp) - objective(&net, &zm)) / (2.0 * eps);
            assert!(
                (fd - gz[i]).abs() < 1e-7 * (1.0 + fd.abs()),
                "input {i}: {fd} vs {}",
                gz[i]
            );
        }
    }
}
