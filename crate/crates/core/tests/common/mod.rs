//! Independent reference implementations shared by the integration tests.
//! None of these call into the code they check.

#![allow(dead_code)]

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use lsm_core::delay::DelayBuffer;
use lsm_core::lif::LifParams;
use lsm_core::readout::{FeatureCube, ReadoutModel};
use lsm_core::reservoir::ReservoirTopology;
use lsm_core::spike::SpikeTrain;
use ndarray::{Array1, Array2};

/// Straight transcription of the per-neuron update: integrate unless
/// refracting, fire at `v >= v_th`, then clamp to rest for `tau_ref` steps.
#[derive(Clone, Copy, Debug)]
pub struct RefNeuron {
    pub v: f64,
    pub refractory: u32,
}

impl RefNeuron {
    pub fn rest(p: &LifParams) -> Self {
        Self { v: p.v_rest, refractory: 0 }
    }

    pub fn step(&mut self, p: &LifParams, i: f64) -> bool {
        if self.refractory > 0 {
            self.refractory -= 1;
            self.v = p.v_rest;
            return false;
        }
        let dv = ((-self.v + p.v_rest) + i * p.r_m) / p.tau_m;
        self.v += dv * p.dt;
        if self.v >= p.v_th {
            self.v = p.v_spike;
            self.refractory = p.tau_ref;
            true
        } else {
            false
        }
    }
}

/// Spike raster (`steps × neurons`) of independent reference neurons.
pub fn reference_layer(p: &LifParams, currents: &[Vec<f64>]) -> Vec<Vec<bool>> {
    let n = currents.first().map_or(0, Vec::len);
    let mut neurons = vec![RefNeuron::rest(p); n];
    currents
        .iter()
        .map(|row| neurons.iter_mut().zip(row).map(|(nr, &i)| nr.step(p, i)).collect())
        .collect()
}

/// Liquid simulated with a literal queue of `L × L` signal matrices: every
/// step the output is broadcast into a fresh matrix, the queue shifts, and
/// each connection reads the matrix whose age equals its delay.
pub fn shifting_queue_liquid(topo: &ReservoirTopology, p: &LifParams, input: &SpikeTrain) -> SpikeTrain {
    let n = topo.neurons();
    let w = topo.w_l_dense();
    let w_in = topo.w_li_dense();
    let delay = topo.delay_dense();
    let depth = (topo.t_max() as usize).max(1);
    let mut queue: Vec<Array2<f64>> = vec![Array2::zeros((n, n)); depth];
    let mut neurons = vec![RefNeuron::rest(p); n];
    let mut raster = Array2::zeros((n, input.steps()));
    for t in 0..input.steps() {
        let x: Vec<f64> = input.column(t).iter().map(|&s| s as f64).collect();
        let mut current = vec![0.0; n];
        for i in 0..n {
            let mut recurrent = 0.0;
            for j in 0..n {
                if w[[i, j]] != 0.0 {
                    let d = delay[[i, j]] as usize;
                    recurrent += w[[i, j]] * queue[d - 1][[i, j]];
                }
            }
            let mut external = 0.0;
            for k in 0..x.len() {
                if w_in[[i, k]] != 0.0 {
                    external += w_in[[i, k]] * x[k];
                }
            }
            current[i] = recurrent + external;
        }
        let mut out = vec![0.0; n];
        for i in 0..n {
            if neurons[i].step(p, current[i]) {
                out[i] = p.v_spike;
                raster[[i, t]] = 1u8;
            }
        }
        queue.rotate_right(1);
        queue[0] = Array2::from_shape_fn((n, n), |(_, j)| out[j]);
    }
    SpikeTrain::from_array(raster).unwrap()
}

/// Arrivals predicted by an event list: every spike of `source` at `t`
/// schedules an arrival at `t + delay` on each outgoing connection.
/// Returns `(arrival step, link index)` pairs in time order.
pub fn event_list_arrivals(
    links: &[(usize, usize, usize)],
    raster: &SpikeTrain,
    horizon: usize,
) -> Vec<(usize, usize)> {
    let mut heap = BinaryHeap::new();
    for t in 0..raster.steps() {
        for (k, &(_, source, delay)) in links.iter().enumerate() {
            if raster.get(source, t) {
                heap.push(Reverse((t + delay, k)));
            }
        }
    }
    let mut out = Vec::new();
    while let Some(Reverse((t, k))) = heap.pop() {
        if t < horizon {
            out.push((t, k));
        }
    }
    out
}

/// Replays `raster` through a fresh buffer and collects every nonzero pop.
pub fn buffer_arrivals(buffer: &mut DelayBuffer, raster: &SpikeTrain) -> BTreeSet<(usize, usize)> {
    let n = raster.neurons();
    let mut seen = BTreeSet::new();
    for t in 0..raster.steps() {
        let popped = buffer.pop();
        for (k, row) in popped.outer_iter().enumerate() {
            if row[0] != 0.0 {
                seen.insert((t, k));
            }
        }
        let out = Array2::from_shape_fn((n, 1), |(i, _)| raster.get(i, t) as u8 as f64);
        buffer.push(out.view()).unwrap();
    }
    seen
}

/// Six nested loops, no im2col.
pub fn naive_forward(model: &ReadoutModel, cube: &FeatureCube) -> Array1<f64> {
    let x = cube.data();
    let k = model.kernel();
    let [ox, oy, oz] = model.out_dims();
    let c_out = model.c_out();
    let mut pooled = vec![f64::NEG_INFINITY; c_out];
    for o in 0..c_out {
        for px in 0..ox {
            for py in 0..oy {
                for pz in 0..oz {
                    let mut acc = model.conv_b[o];
                    for c in 0..model.in_channels() {
                        for i in 0..k {
                            for j in 0..k {
                                for l in 0..k {
                                    acc += model.conv_w[[o, c, i, j, l]] * x[[c, px + i, py + j, pz + l]];
                                }
                            }
                        }
                    }
                    pooled[o] = pooled[o].max(acc.max(0.0));
                }
            }
        }
    }
    let mut logits = vec![0.0; model.classes()];
    for (c, logit) in logits.iter_mut().enumerate() {
        *logit = model.dense_b[c] + (0..c_out).map(|o| model.dense_w[[c, o]] * pooled[o]).sum::<f64>();
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = e.iter().sum();
    Array1::from_iter(e.into_iter().map(|v| v / z))
}

/// `-ln p[label]` computed from the forward pass of a model copy.
pub fn model_loss(model: &ReadoutModel, cube: &FeatureCube, label: usize) -> f64 {
    -naive_forward(model, cube)[label].ln()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Visits every trainable scalar of a model by index.
pub fn parameter_count(m: &ReadoutModel) -> usize {
    m.conv_w.len() + m.conv_b.len() + m.dense_w.len() + m.dense_b.len()
}

pub fn parameter_mut(m: &mut ReadoutModel, mut idx: usize) -> &mut f64 {
    if idx < m.conv_w.len() {
        return m.conv_w.iter_mut().nth(idx).unwrap();
    }
    idx -= m.conv_w.len();
    if idx < m.conv_b.len() {
        return &mut m.conv_b[idx];
    }
    idx -= m.conv_b.len();
    if idx < m.dense_w.len() {
        return m.dense_w.iter_mut().nth(idx).unwrap();
    }
    idx -= m.dense_w.len();
    &mut m.dense_b[idx]
}

/// Largest relative error between backprop and central differences over
/// every parameter.
pub fn gradient_check(model: &ReadoutModel, cube: &FeatureCube, label: usize, eps: f64) -> (f64, usize) {
    let (_, grads) = model.loss_and_gradients(cube, label, None).unwrap();
    let analytic: Vec<f64> = grads
        .conv_w
        .iter()
        .chain(&grads.conv_b)
        .chain(&grads.dense_w)
        .chain(&grads.dense_b)
        .copied()
        .collect();
    let mut worst = 0.0f64;
    for (idx, &a) in analytic.iter().enumerate() {
        let mut plus = model.clone();
        *parameter_mut(&mut plus, idx) += eps;
        let mut minus = model.clone();
        *parameter_mut(&mut minus, idx) -= eps;
        let numeric = (model_loss(&plus, cube, label) - model_loss(&minus, cube, label)) / (2.0 * eps);
        worst = worst.max(relative_error(a, numeric));
    }
    (worst, analytic.len())
}

/// One unit-distance bucket of one connection type, pooled over builds.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    pub pair: lsm_core::reservoir::PairType,
    /// Distances in `[bucket, bucket + 1)`.
    pub bucket: usize,
    pub candidates: usize,
    pub observed: usize,
    /// Sum of per-pair probabilities (Poisson-binomial mean).
    pub expected: f64,
    pub sigma: f64,
}

impl Bucket {
    pub fn z(&self) -> f64 {
        if self.sigma == 0.0 {
            if (self.observed as f64 - self.expected).abs() < 1e-9 { 0.0 } else { f64::INFINITY }
        } else {
            (self.observed as f64 - self.expected) / self.sigma
        }
    }
}

/// Compares realized connections with `C·exp(-(d/λ)²)` computed from the
/// table directly, bucketed by `floor(d)` and pooled over `topologies`.
pub fn connectivity_buckets(topologies: &[ReservoirTopology]) -> Vec<Bucket> {
    use lsm_core::reservoir::PairType;
    use std::collections::{BTreeMap, HashSet};
    let mut acc: BTreeMap<(usize, usize), (usize, usize, f64, f64)> = BTreeMap::new();
    for topo in topologies {
        let cfg = topo.config();
        let pos = topo.positions();
        let exc = topo.is_excitatory();
        let edges: HashSet<(u32, u32)> = topo.synapses().iter().map(|s| (s.target, s.source)).collect();
        let n = topo.neurons();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let (dx, dy, dz) = (
                    (pos[i][0] - pos[j][0]) as f64,
                    (pos[i][1] - pos[j][1]) as f64,
                    (pos[i][2] - pos[j][2]) as f64,
                );
                let d = (dx * dx + dy * dy + dz * dz).sqrt();
                // table order EE, EI, II, IE; named source first
                let pair = match (exc[j], exc[i]) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, false) => 2,
                    (false, true) => 3,
                };
                let p = (cfg.c_table[pair] * (-(d / cfg.lambda).powi(2)).exp()).min(1.0);
                let e = acc.entry((pair, d.floor() as usize)).or_default();
                e.0 += 1;
                e.1 += edges.contains(&(i as u32, j as u32)) as usize;
                e.2 += p;
                e.3 += p * (1.0 - p);
            }
        }
    }
    acc.into_iter()
        .map(|((pair, bucket), (candidates, observed, expected, var))| Bucket {
            pair: PairType::ALL[pair],
            bucket,
            candidates,
            observed,
            expected,
            sigma: var.sqrt(),
        })
        .collect()
}
