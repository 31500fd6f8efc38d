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
//! Batch arc-length integration of the nominal-plus-residual vector field.
//!
//! All samples advance in lock-step over a shared step index so that the
//! network is evaluated once per stage for the whole batch. A sample whose
//! backbone is shorter than the batch maximum stops stepping and its last
//! valid state is propagated. The forward pass can record a tape that the
//! reverse pass replays to get exact gradients of the discrete solver.

use nalgebra::Vector3;

use super::network::{LayerTape, ResidualNetwork};
use super::{AugmentedState, P, R, STATE_DIM, U};
use crate::backbone::{
    actuation_to_curvature, reconstruct_backbone_with, step_count, step_size, ActuationVector, BackboneCurve,
    CurveSample, Integrator, SegmentParams, NUM_SEGMENTS,
};
use crate::error::{Error, Result};

type State = [f64; STATE_DIM];

const AB4: [f64; 4] = [55.0 / 24.0, -59.0 / 24.0, 37.0 / 24.0, -9.0 / 24.0];

#[inline]
fn row(z: &State, r: usize) -> [f64; 3] {
    [z[R + 3 * r], z[R + 3 * r + 1], z[R + 3 * r + 2]]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Nominal Cosserat derivative: `p' = R e3`, `R' = R [u]x`, zero elsewhere.
pub fn nominal_rhs(z: &State) -> State {
    let mut out = [0.0; STATE_DIM];
    let u = [z[U], z[U + 1], z[U + 2]];
    for r in 0..3 {
        let rr = row(z, r);
        out[P + r] = rr[2];
        // Row r of R [u]x is (row r of R) x u.
        let d = cross(rr, u);
        out[R + 3 * r..R + 3 * r + 3].copy_from_slice(&d);
    }
    out
}

/// Adds `(d nominal_rhs / dz)^T v` into `out`.
fn nominal_vjp(z: &State, v: &State, out: &mut State) {
    let u = [z[U], z[U + 1], z[U + 2]];
    let mut u_bar = [0.0; 3];
    for r in 0..3 {
        out[R + 3 * r + 2] += v[P + r];
        let g = [v[R + 3 * r], v[R + 3 * r + 1], v[R + 3 * r + 2]];
        let rr = row(z, r);
        let r_bar = cross(u, g);
        let ub = cross(g, rr);
        for c in 0..3 {
            out[R + 3 * r + c] += r_bar[c];
            u_bar[c] += ub[c];
        }
    }
    for c in 0..3 {
        out[U + c] += u_bar[c];
    }
}

fn column(z: &State, c: usize) -> [f64; 3] {
    [z[R + c], z[R + 3 + c], z[R + 6 + c]]
}

fn set_column(z: &mut State, c: usize, v: [f64; 3]) {
    z[R + c] = v[0];
    z[R + 3 + c] = v[1];
    z[R + 6 + c] = v[2];
}

fn normalize(v: [f64; 3]) -> ([f64; 3], f64) {
    let n = dot(v, v).sqrt();
    ([v[0] / n, v[1] / n, v[2] / n], n)
}

/// Tangent-first Gram–Schmidt on the orientation block, in place.
fn orthonormalize(z: &mut State) {
    let (t, _) = normalize(column(z, 2));
    let c0 = column(z, 0);
    let tc = dot(t, c0);
    let (x, _) = normalize([c0[0] - tc * t[0], c0[1] - tc * t[1], c0[2] - tc * t[2]]);
    let y = cross(t, x);
    set_column(z, 0, x);
    set_column(z, 1, y);
    set_column(z, 2, t);
}

/// Reverse of [`orthonormalize`]: maps the adjoint of the output to the
/// adjoint of the input state `pre`.
fn orthonormalize_vjp(pre: &State, g: &State) -> State {
    let mut out = *g;
    let c2 = column(pre, 2);
    let c0 = column(pre, 0);
    let (t, nt) = normalize(c2);
    let tc = dot(t, c0);
    let xp = [c0[0] - tc * t[0], c0[1] - tc * t[1], c0[2] - tc * t[2]];
    let (x, nx) = normalize(xp);

    let x_out = column(g, 0);
    let y_out = column(g, 1);
    let t_out = column(g, 2);
    // y = t x x
    let t_from_y = cross(x, y_out);
    let x_from_y = cross(y_out, t);
    let x_bar = [x_out[0] + x_from_y[0], x_out[1] + x_from_y[1], x_out[2] + x_from_y[2]];
    // x = xp / |xp|
    let xd = dot(x, x_bar);
    let xp_bar = [
        (x_bar[0] - x[0] * xd) / nx,
        (x_bar[1] - x[1] * xd) / nx,
        (x_bar[2] - x[2] * xd) / nx,
    ];
    // xp = c0 - (t.c0) t
    let txp = dot(t, xp_bar);
    let c0_bar = [xp_bar[0] - t[0] * txp, xp_bar[1] - t[1] * txp, xp_bar[2] - t[2] * txp];
    let mut t_bar = [0.0; 3];
    for i in 0..3 {
        t_bar[i] = t_out[i] + t_from_y[i] - (tc * xp_bar[i] + c0[i] * txp);
    }
    // t = c2 / |c2|
    let td = dot(t, t_bar);
    let c2_bar = [
        (t_bar[0] - t[0] * td) / nt,
        (t_bar[1] - t[1] * td) / nt,
        (t_bar[2] - t[2] * td) / nt,
    ];
    set_column(&mut out, 0, c0_bar);
    set_column(&mut out, 1, [0.0; 3]);
    set_column(&mut out, 2, c2_bar);
    out
}

/// Nominal derivative plus the residual at one point.
pub fn augmented_rhs(network: Option<&ResidualNetwork>, z: &AugmentedState, q: &ActuationVector, s: f64) -> State {
    let mut out = nominal_rhs(&z.0);
    if let Some(net) = network {
        let r = net.forward(&z.0, q.as_slice(), s);
        for (o, v) in out.iter_mut().zip(r) {
            *o += v;
        }
    }
    out
}

#[derive(Clone, Debug)]
struct Schedule {
    q: ActuationVector,
    seg_len: f64,
    n: usize,
    seg_start: [f64; NUM_SEGMENTS],
    curvature: [[f64; 3]; NUM_SEGMENTS],
}

#[derive(Clone, Copy, Debug)]
struct StepInfo {
    seg: usize,
    local: usize,
    h: f64,
    s: f64,
    rk4: bool,
}

impl Schedule {
    fn new(q: &ActuationVector, params: &SegmentParams) -> Result<Self> {
        let mut seg_start = [0.0; NUM_SEGMENTS];
        let mut curvature = [[0.0; 3]; NUM_SEGMENTS];
        let mut s0 = 0.0;
        let mut seg_len = 0.0;
        for seg in 0..NUM_SEGMENTS {
            let (l, u) = actuation_to_curvature(q.bend(seg), q.insertion(), params)?;
            seg_start[seg] = s0;
            curvature[seg] = [u.x, u.y, u.z];
            s0 += l;
            seg_len = l;
        }
        Ok(Self {
            q: *q,
            seg_len,
            n: step_count(seg_len, params.step),
            seg_start,
            curvature,
        })
    }

    fn steps(&self) -> usize {
        NUM_SEGMENTS * self.n
    }

    fn length(&self) -> f64 {
        self.seg_start[NUM_SEGMENTS - 1] + self.seg_len
    }

    fn step(&self, j: usize, ds: f64, integrator: Integrator) -> StepInfo {
        let seg = j / self.n;
        let local = j % self.n;
        let h = step_size(local, self.n, self.seg_len, ds);
        let partial = local + 1 == self.n && (h - ds).abs() >= 1e-15;
        StepInfo {
            seg,
            local,
            h,
            s: self.seg_start[seg] + local as f64 * ds,
            rk4: integrator == Integrator::Rk4 || local < 3 || partial,
        }
    }

    fn station(&self, j: usize, ds: f64) -> f64 {
        if j == 0 {
            return 0.0;
        }
        let seg = (j - 1) / self.n;
        let local = j - seg * self.n;
        if local == self.n {
            self.seg_start[seg] + self.seg_len
        } else {
            self.seg_start[seg] + local as f64 * ds
        }
    }
}

#[derive(Clone, Debug, Default)]
struct EvalRecord {
    points: Vec<State>,
    net: Option<LayerTape>,
}

#[derive(Clone, Debug, Default)]
struct StepRecord {
    active: Vec<usize>,
    /// Positions within `active` that took an RK4 step.
    rk4: Vec<usize>,
    pre_gs: Vec<State>,
    evals: Vec<EvalRecord>,
}

/// Everything the reverse pass needs from a forward solve.
#[derive(Clone, Debug, Default)]
pub struct SolveTape {
    schedules: Vec<Schedule>,
    steps: Vec<StepRecord>,
}

impl SolveTape {
    pub fn memory_floats(&self) -> usize {
        self.steps
            .iter()
            .flat_map(|s| s.evals.iter())
            .map(|e| e.points.len() * STATE_DIM + e.net.as_ref().map_or(0, |t| t.memory_floats()))
            .sum()
    }
}

/// Result of a batch solve: one curve per sample integrated to its own
/// length, plus the batch maximum length used for masking.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchSolution {
    curves: Vec<BackboneCurve>,
    max_length: f64,
}

impl BatchSolution {
    pub fn curves(&self) -> &[BackboneCurve] {
        &self.curves
    }

    pub fn into_curves(self) -> Vec<BackboneCurve> {
        self.curves
    }

    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    pub fn max_length(&self) -> f64 {
        self.max_length
    }

    /// Point of sample `i` at `s`; stations between the sample's own length
    /// and the batch maximum return its tip.
    pub fn position_at(&self, i: usize, s: f64) -> Result<Vector3<f64>> {
        let curve = &self.curves[i];
        if s > curve.length() && s <= self.max_length + 1e-12 {
            return Ok(curve.tip());
        }
        if s > self.max_length + 1e-12 {
            return Err(Error::StationOutsideCurve {
                station: s,
                length: self.max_length,
            });
        }
        curve.position_at(s)
    }

    /// Samples of curve `i` extended onto the longest curve's grid, with the
    /// last valid state repeated beyond its own length.
    pub fn padded_samples(&self, i: usize) -> Vec<CurveSample> {
        let own = &self.curves[i];
        let longest = self
            .curves
            .iter()
            .max_by(|a, b| a.length().total_cmp(&b.length()))
            .expect("nonempty batch");
        let mut out = own.samples().to_vec();
        let tip = *own.tip_pose();
        out.extend(
            longest
                .samples()
                .iter()
                .filter(|c| c.s > own.length() + 1e-12)
                .map(|c| CurveSample { s: c.s, pose: tip }),
        );
        out
    }
}

/// Fixed-step solver over a batch of actuation vectors.
#[derive(Clone, Copy, Debug)]
pub struct BatchSolver<'a> {
    pub params: SegmentParams,
    pub integrator: Integrator,
    pub network: Option<&'a ResidualNetwork>,
}

impl<'a> BatchSolver<'a> {
    pub fn new(params: SegmentParams, integrator: Integrator, network: Option<&'a ResidualNetwork>) -> Self {
        Self {
            params,
            integrator,
            network,
        }
    }

    fn eval(&self, rows: &[(State, f64, &ActuationVector)], record: bool) -> (Vec<State>, Option<EvalRecord>) {
        let mut out: Vec<State> = rows.iter().map(|(z, _, _)| nominal_rhs(z)).collect();
        let mut net_tape = None;
        if let Some(net) = self.network {
            let mut x = Vec::with_capacity(rows.len() * net.architecture().input);
            for (z, s, q) in rows {
                net.encode_input(z, *s, q.as_slice(), &mut x);
            }
            let mut y = Vec::new();
            let mut tape = record.then(LayerTape::default);
            net.forward_batch(&x, rows.len(), &mut y, tape.as_mut());
            for (o, r) in out.iter_mut().zip(y.chunks_exact(STATE_DIM)) {
                for (a, b) in o.iter_mut().zip(r) {
                    *a += b;
                }
            }
            net_tape = tape;
        }
        let rec = record.then(|| EvalRecord {
            points: rows.iter().map(|r| r.0).collect(),
            net: net_tape,
        });
        (out, rec)
    }

    /// Integrates every sample; see [`BatchSolution`].
    pub fn integrate(&self, qs: &[ActuationVector]) -> Result<BatchSolution> {
        self.run(qs, false).map(|(s, _)| s)
    }

    /// Integrates and records the tape needed by [`BatchSolver::backward`].
    pub fn integrate_with_tape(&self, qs: &[ActuationVector]) -> Result<(BatchSolution, SolveTape)> {
        self.run(qs, true).map(|(s, t)| (s, t.expect("recorded")))
    }

    fn run(&self, qs: &[ActuationVector], record: bool) -> Result<(BatchSolution, Option<SolveTape>)> {
        if qs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        self.params.validate()?;
        if self.network.is_none() && !record {
            // Without a residual the lockstep machinery buys nothing.
            let curves = qs
                .iter()
                .map(|q| reconstruct_backbone_with(q, &self.params, self.integrator, &|_, _, u| u))
                .collect::<Result<Vec<_>>>()?;
            let max_length = curves.iter().map(BackboneCurve::length).fold(0.0, f64::max);
            return Ok((BatchSolution { curves, max_length }, None));
        }
        let ds = self.params.step;
        let schedules = qs
            .iter()
            .map(|q| Schedule::new(q, &self.params))
            .collect::<Result<Vec<_>>>()?;
        let max_steps = schedules.iter().map(Schedule::steps).max().unwrap_or(0);

        let mut states: Vec<Vec<State>> = schedules
            .iter()
            .map(|sch| {
                let mut z = [0.0; STATE_DIM];
                z[R] = 1.0;
                z[R + 4] = 1.0;
                z[R + 8] = 1.0;
                z[U..U + 3].copy_from_slice(&sch.curvature[0]);
                let mut v = Vec::with_capacity(sch.steps() + 1);
                v.push(z);
                v
            })
            .collect();
        let mut k1_hist: Vec<Vec<State>> = schedules.iter().map(|s| Vec::with_capacity(s.steps())).collect();
        let mut records = Vec::with_capacity(if record { max_steps } else { 0 });

        for j in 0..max_steps {
            let active: Vec<usize> = (0..qs.len()).filter(|&b| j < schedules[b].steps()).collect();
            let info: Vec<StepInfo> = active
                .iter()
                .map(|&b| schedules[b].step(j, ds, self.integrator))
                .collect();
            let y0: Vec<State> = active
                .iter()
                .zip(&info)
                .map(|(&b, st)| {
                    let mut z = states[b][j];
                    if st.local == 0 {
                        z[U..U + 3].copy_from_slice(&schedules[b].curvature[st.seg]);
                    }
                    z
                })
                .collect();

            let rows: Vec<_> = active
                .iter()
                .zip(&info)
                .zip(&y0)
                .map(|((&b, st), z)| (*z, st.s, &schedules[b].q))
                .collect();
            let (k1, rec0) = self.eval(&rows, record);
            let mut evals = Vec::new();
            evals.extend(rec0);

            let rk4: Vec<usize> = (0..active.len()).filter(|&a| info[a].rk4).collect();
            let mut next: Vec<State> = vec![[0.0; STATE_DIM]; active.len()];

            for (a, &b) in active.iter().enumerate() {
                k1_hist[b].push(k1[a]);
                if info[a].rk4 {
                    continue;
                }
                let h = info[a].h;
                let hist = &k1_hist[b];
                let f = [&hist[j], &hist[j - 1], &hist[j - 2], &hist[j - 3]];
                for i in 0..STATE_DIM {
                    let incr = AB4[0] * f[0][i] + AB4[1] * f[1][i] + AB4[2] * f[2][i] + AB4[3] * f[3][i];
                    next[a][i] = y0[a][i] + h * incr;
                }
            }

            if !rk4.is_empty() {
                let stage = |prev: &[State], frac: f64, ds_frac: f64| -> Vec<(State, f64, &ActuationVector)> {
                    rk4.iter()
                        .zip(prev)
                        .map(|(&a, k)| {
                            let st = info[a];
                            let mut z = y0[a];
                            for i in 0..STATE_DIM {
                                z[i] += frac * st.h * k[i];
                            }
                            (z, st.s + ds_frac * st.h, &schedules[active[a]].q)
                        })
                        .collect()
                };
                let k1_sub: Vec<State> = rk4.iter().map(|&a| k1[a]).collect();
                let (k2, rec) = self.eval(&stage(&k1_sub, 0.5, 0.5), record);
                evals.extend(rec);
                let (k3, rec) = self.eval(&stage(&k2, 0.5, 0.5), record);
                evals.extend(rec);
                let (k4, rec) = self.eval(&stage(&k3, 1.0, 1.0), record);
                evals.extend(rec);
                for (i_sub, &a) in rk4.iter().enumerate() {
                    let h = info[a].h;
                    for i in 0..STATE_DIM {
                        next[a][i] = y0[a][i]
                            + h / 6.0 * (k1_sub[i_sub][i] + 2.0 * k2[i_sub][i] + 2.0 * k3[i_sub][i] + k4[i_sub][i]);
                    }
                }
            }

            let pre_gs = if record { next.clone() } else { Vec::new() };
            for (a, &b) in active.iter().enumerate() {
                let mut z = next[a];
                orthonormalize(&mut z);
                states[b].push(z);
            }
            if record {
                records.push(StepRecord {
                    active,
                    rk4,
                    pre_gs,
                    evals,
                });
            }
        }

        let max_length = schedules.iter().map(Schedule::length).fold(0.0, f64::max);
        let curves = schedules
            .iter()
            .zip(&states)
            .map(|(sch, zs)| {
                let samples = zs
                    .iter()
                    .enumerate()
                    .map(|(j, z)| CurveSample {
                        s: sch.station(j, ds),
                        pose: AugmentedState(*z).to_pose(),
                    })
                    .collect();
                BackboneCurve::new(samples, [sch.n, 2 * sch.n, 3 * sch.n])
            })
            .collect();
        let tape = record.then(|| SolveTape {
            schedules,
            steps: records,
        });
        Ok((BatchSolution { curves, max_length }, tape))
    }

    fn eval_vjp(&self, rec: &EvalRecord, v: &[State], grad: &mut [f64]) -> Vec<State> {
        let mut out = vec![[0.0; STATE_DIM]; v.len()];
        for ((o, z), vi) in out.iter_mut().zip(&rec.points).zip(v) {
            nominal_vjp(z, vi, o);
        }
        if let (Some(net), Some(tape)) = (self.network, rec.net.as_ref()) {
            let flat: Vec<f64> = v.iter().flat_map(|r| r.iter().copied()).collect();
            let gz = net.backward_batch(tape, &flat, grad);
            for (o, g) in out.iter_mut().zip(gz.chunks_exact(STATE_DIM)) {
                for (a, b) in o.iter_mut().zip(g) {
                    *a += b;
                }
            }
        }
        out
    }

    /// Reverse pass. `seeds[b]` lists `(state index, dL/dp)` pairs for sample
    /// `b`; parameter gradients are accumulated into `grad`.
    pub fn backward(&self, tape: &SolveTape, seeds: &[Vec<(usize, [f64; 3])>], grad: &mut [f64]) {
        let ds = self.params.step;
        let mut adj: Vec<Vec<State>> = tape
            .schedules
            .iter()
            .map(|s| vec![[0.0; STATE_DIM]; s.steps() + 1])
            .collect();
        for (b, list) in seeds.iter().enumerate() {
            for &(j, g) in list {
                for c in 0..3 {
                    adj[b][j][P + c] += g[c];
                }
            }
        }
        let mut k1_bar: Vec<Vec<State>> = tape
            .schedules
            .iter()
            .map(|s| vec![[0.0; STATE_DIM]; s.steps()])
            .collect();

        for (j, rec) in tape.steps.iter().enumerate().rev() {
            let info: Vec<StepInfo> = rec
                .active
                .iter()
                .map(|&b| tape.schedules[b].step(j, ds, self.integrator))
                .collect();
            let mut y_bar: Vec<State> = Vec::with_capacity(rec.active.len());
            let mut incr_bar: Vec<State> = Vec::with_capacity(rec.active.len());
            for (a, &b) in rec.active.iter().enumerate() {
                let g = orthonormalize_vjp(&rec.pre_gs[a], &adj[b][j + 1]);
                y_bar.push(g);
                incr_bar.push(g);
                if !info[a].rk4 {
                    let h = info[a].h;
                    for (lag, coeff) in AB4.iter().enumerate() {
                        let dst = &mut k1_bar[b][j - lag];
                        for i in 0..STATE_DIM {
                            dst[i] += h * coeff * g[i];
                        }
                    }
                }
            }

            if !rec.rk4.is_empty() {
                let scaled = |w: f64| -> Vec<State> {
                    rec.rk4
                        .iter()
                        .map(|&a| {
                            let mut v = incr_bar[a];
                            for x in &mut v {
                                *x *= w * info[a].h;
                            }
                            v
                        })
                        .collect()
                };
                let k4_bar = scaled(1.0 / 6.0);
                let mut k3_bar = scaled(1.0 / 3.0);
                let mut k2_bar = scaled(1.0 / 3.0);
                for &a in &rec.rk4 {
                    let b = rec.active[a];
                    let h = info[a].h;
                    for i in 0..STATE_DIM {
                        k1_bar[b][j][i] += h / 6.0 * incr_bar[a][i];
                    }
                }
                let v4 = self.eval_vjp(&rec.evals[3], &k4_bar, grad);
                for (i_sub, &a) in rec.rk4.iter().enumerate() {
                    let h = info[a].h;
                    for i in 0..STATE_DIM {
                        y_bar[a][i] += v4[i_sub][i];
                        k3_bar[i_sub][i] += h * v4[i_sub][i];
                    }
                }
                let v3 = self.eval_vjp(&rec.evals[2], &k3_bar, grad);
                for (i_sub, &a) in rec.rk4.iter().enumerate() {
                    let h = info[a].h;
                    for i in 0..STATE_DIM {
                        y_bar[a][i] += v3[i_sub][i];
                        k2_bar[i_sub][i] += 0.5 * h * v3[i_sub][i];
                    }
                }
                let v2 = self.eval_vjp(&rec.evals[1], &k2_bar, grad);
                for (i_sub, &a) in rec.rk4.iter().enumerate() {
                    let b = rec.active[a];
                    let h = info[a].h;
                    for i in 0..STATE_DIM {
                        y_bar[a][i] += v2[i_sub][i];
                        k1_bar[b][j][i] += 0.5 * h * v2[i_sub][i];
                    }
                }
            }

            let k1_rows: Vec<State> = rec.active.iter().map(|&b| k1_bar[b][j]).collect();
            let v1 = self.eval_vjp(&rec.evals[0], &k1_rows, grad);
            for (a, &b) in rec.active.iter().enumerate() {
                let mut g = y_bar[a];
                for i in 0..STATE_DIM {
                    g[i] += v1[a][i];
                }
                if info[a].local == 0 {
                    g[U..U + 3].fill(0.0);
                }
                for i in 0..STATE_DIM {
                    adj[b][j][i] += g[i];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::reconstruct_backbone_with;
    use crate::residual::network::Architecture;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(seed: u64) -> State {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = [0.0; STATE_DIM];
        for v in &mut z {
            *v = rng.random_range(-1.0..1.0);
        }
        z
    }

    #[test]
    fn straight_nominal_rhs_is_unit_tangent() {
        let z = AugmentedState::from_pose(&crate::backbone::PoseState::identity());
        let d = nominal_rhs(&z.0);
        assert_eq!(&d[P..P + 3], &[0.0, 0.0, 1.0]);
        assert!(d[R..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn nominal_rhs_matches_matrix_form() {
        let z = AugmentedState(random_state(1));
        let d = nominal_rhs(&z.0);
        let expected = z.orientation() * crate::backbone::hat(&z.curvature());
        let got = nalgebra::Matrix3::from_row_slice(&d[R..R + 9]);
        assert!((expected - got).abs().max() < 1e-15);
    }

    fn check_vjp(f: impl Fn(&State) -> State, vjp: impl Fn(&State, &State) -> State, z: &State) {
        let v = random_state(77);
        let g = vjp(z, &v);
        let eps = 1e-6;
        for i in 0..STATE_DIM {
            let mut zp = *z;
            zp[i] += eps;
            let mut zm = *z;
            zm[i] -= eps;
            let fp = f(&zp);
            let fm = f(&zm);
            let fd: f64 = (0..STATE_DIM).map(|k| v[k] * (fp[k] - fm[k]) / (2.0 * eps)).sum();
            assert!((fd - g[i]).abs() < 1e-7, "component {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn nominal_vjp_matches_finite_differences() {
        check_vjp(
            nominal_rhs,
            |z, v| {
                let mut out = [0.0; STATE_DIM];
                nominal_vjp(z, v, &mut out);
                out
            },
            &random_state(3),
        );
    }

    #[test]
    fn orthonormalize_vjp_matches_finite_differences() {
        let mut z = random_state(5);
        // Perturbed rotation, as seen right after an integration step.
        let rot = nalgebra::Rotation3::from_euler_angles(0.3, -0.8, 1.1);
        for r in 0..3 {
            for c in 0..3 {
                z[R + 3 * r + c] = rot[(r, c)] + 0.05 * z[R + 3 * r + c];
            }
        }
        check_vjp(
            |z| {
                let mut o = *z;
                orthonormalize(&mut o);
                o
            },
            orthonormalize_vjp,
            &z,
        );
    }

    #[test]
    fn zero_residual_matches_reconstruction() {
        let params = SegmentParams::default();
        let net = ResidualNetwork::new(Architecture::default(), 1);
        let qs = [
            ActuationVector([0.012, 0.01, -0.004, -0.013, 0.007, 0.002, 0.015]),
            ActuationVector([-0.02, -0.015, 0.015, 0.0, -0.01, 0.011, -0.003]),
        ];
        for integrator in [Integrator::Rk4, Integrator::AdamsBashforth4] {
            let sol = BatchSolver::new(params, integrator, Some(&net)).integrate(&qs).unwrap();
            for (q, curve) in qs.iter().zip(sol.curves()) {
                let reference = reconstruct_backbone_with(q, &params, integrator, &|_, _, u| u).unwrap();
                assert_eq!(reference.samples().len(), curve.samples().len());
                assert_eq!(reference.segment_ends(), curve.segment_ends());
                for (a, b) in reference.samples().iter().zip(curve.samples()) {
                    assert!((a.s - b.s).abs() < 1e-15);
                    assert!((a.pose.position - b.pose.position).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn batch_matches_single_sample() {
        let params = SegmentParams::default();
        let net = ResidualNetwork::new_random(Architecture::default(), 4);
        let qs = [
            ActuationVector([0.03, 0.01, -0.004, -0.013, 0.007, 0.002, 0.015]),
            ActuationVector([-0.03, -0.015, 0.015, 0.0, -0.01, 0.011, -0.003]),
            ActuationVector::zeros(),
        ];
        let solver = BatchSolver::new(params, Integrator::AdamsBashforth4, Some(&net));
        let batch = solver.integrate(&qs).unwrap();
        for (i, q) in qs.iter().enumerate() {
            let single = solver.integrate(std::slice::from_ref(q)).unwrap();
            let d = (single.curves()[0].tip() - batch.curves()[i].tip()).norm();
            assert!(d < 1e-12, "sample {i}: {d}");
        }
    }

    #[test]
    fn short_samples_are_masked() {
        let params = SegmentParams::default();
        let long = ActuationVector::zeros();
        let mut short = ActuationVector::zeros();
        short[0] = -0.03;
        let sol = BatchSolver::new(params, Integrator::Rk4, None)
            .integrate(&[long, short])
            .unwrap();
        assert!((sol.max_length() - 0.15).abs() < 1e-12);
        let short_curve = &sol.curves()[1];
        assert!((short_curve.length() - 0.12).abs() < 1e-12);
        let tip = short_curve.tip();
        for s in [0.1201, 0.13, 0.149, 0.15] {
            assert_eq!(sol.position_at(1, s).unwrap(), tip);
        }
        let padded = sol.padded_samples(1);
        assert_eq!(padded.len(), 151);
        for c in padded.iter().filter(|c| c.s > 0.12) {
            assert_eq!(c.pose, *short_curve.tip_pose());
        }
        assert!(sol.position_at(1, 0.16).is_err());
    }

    #[test]
    fn identical_inputs_identical_curves() {
        let q = ActuationVector([0.001, 0.002, 0.003, -0.004, 0.005, -0.006, 0.007]);
        let sol = BatchSolver::new(SegmentParams::default(), Integrator::Rk4, None)
            .integrate(&[q, q, q])
            .unwrap();
        assert_eq!(sol.curves()[0], sol.curves()[1]);
        assert_eq!(sol.curves()[1], sol.curves()[2]);
    }

    #[test]
    fn empty_batch_rejected() {
        let solver = BatchSolver::new(SegmentParams::default(), Integrator::Rk4, None);
        assert!(matches!(solver.integrate(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn augmented_rhs_is_nominal_plus_residual() {
        let z = AugmentedState(random_state(8));
        let q = ActuationVector([0.001, 0.002, 0.003, -0.004, 0.005, -0.006, 0.007]);
        let zero = ResidualNetwork::new(Architecture::default(), 2);
        assert_eq!(augmented_rhs(Some(&zero), &z, &q, 0.07), nominal_rhs(&z.0));
        let net = ResidualNetwork::new_random(Architecture::default(), 2);
        let full = augmented_rhs(Some(&net), &z, &q, 0.07);
        let nominal = nominal_rhs(&z.0);
        let residual = net.forward(&z.0, q.as_slice(), 0.07);
        for i in 0..STATE_DIM {
            assert!((full[i] - nominal[i] - residual[i]).abs() < 1e-14);
        }
    }
}
