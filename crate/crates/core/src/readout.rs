//! Spatio-temporal readout.
//!
//! The liquid raster is averaged over non-overlapping windows of `w` steps
//! and every window is reshaped back onto the 3-D neuron grid, giving a
//! `T/w × X × Y × Z` cube whose leading axis is used as input channels.
//! The classifier is a single trainable block:
//!
//! ```text
//! conv3d (k×k×k, valid, stride 1) -> ReLU -> dropout -> global max-pool
//!   -> dense -> softmax
//! ```
//!
//! trained with categorical cross-entropy by mini-batch gradient descent.
//! Gradients are derived by hand; only one spatial position per channel
//! survives the global max, so the backward pass is cheap.
//!
//! # Checkpoint layout
//!
//! Little-endian throughout:
//!
//! ```text
//! 0   4  magic b"LSMR"
//! 4   2  version (1)
//! 6   2  reserved
//! 8   4  in_channels     12  4  dim x     16  4  dim y     20  4  dim z
//! 24  4  kernel          28  4  c_out     32  4  classes
//! 36  8  dropout (f64)
//! 44  .. conv weights (c_out·in_channels·k³ f64, row-major [o][c][i][j][l]),
//!        conv bias (c_out), dense weights (classes·c_out, row-major), dense bias (classes)
//! ```

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array4, Array5, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::SpikeTrain;

const LOG_FLOOR: f64 = 1e-12;

/// Windowed mean spike rates on the neuron grid, `windows × X × Y × Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCube {
    data: Array4<f64>,
    window: usize,
}

impl FeatureCube {
    pub fn new(data: Array4<f64>, window: usize) -> Result<Self> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("feature cube"));
        }
        Ok(Self { data, window })
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channels(&self) -> usize {
        self.data.dim().0
    }

    pub fn spatial(&self) -> [usize; 3] {
        let (_, x, y, z) = self.data.dim();
        [x, y, z]
    }
}

/// Averages an `L × T` raster over windows of `window` steps and reshapes
/// each window onto the `dims` grid. Requires `L = X·Y·Z` and `T % window == 0`.
pub fn windowed_cube(raster: &SpikeTrain, dims: [usize; 3], window: usize) -> Result<FeatureCube> {
    let neurons: usize = dims.iter().product();
    if raster.neurons() != neurons {
        return Err(Error::shape("windowed cube", neurons, raster.neurons()));
    }
    if window == 0 || raster.steps() == 0 || raster.steps() % window != 0 {
        return Err(Error::invalid(format!(
            "raster length {} is not a positive multiple of window {window}",
            raster.steps()
        )));
    }
    let windows = raster.steps() / window;
    let view = raster.view();
    let mut data = Array4::zeros((windows, dims[0], dims[1], dims[2]));
    for c in 0..windows {
        let block = view.slice(ndarray::s![.., c * window..(c + 1) * window]);
        for (n, row) in block.outer_iter().enumerate() {
            let count: u32 = row.iter().map(|&s| s as u32).sum();
            let (x, rest) = (n / (dims[1] * dims[2]), n % (dims[1] * dims[2]));
            data[[c, x, rest / dims[2], rest % dims[2]]] = count as f64 / window as f64;
        }
    }
    FeatureCube::new(data, window)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReadoutConfig {
    pub c_out: usize,
    pub kernel: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        Self {
            c_out: 64,
            kernel: 3,
            dropout: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiply the learning rate by `lr_decay` every `lr_step` epochs.
    pub lr_step: usize,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            batch_size: 16,
            learning_rate: 0.05,
            lr_step: 100,
            lr_decay: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("train.batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("train.learning_rate must be finite and >= 0"));
        }
        if self.lr_step == 0 || !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return Err(Error::invalid("train.lr_step must be >= 1 and train.lr_decay > 0"));
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_step) as i32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReadoutModel {
    in_channels: usize,
    dims: [usize; 3],
    kernel: usize,
    classes: usize,
    dropout: f64,
    /// `c_out × in_channels × k × k × k`
    pub conv_w: Array5<f64>,
    pub conv_b: Array1<f64>,
    /// `classes × c_out`
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    patches: Array2<f64>,
    /// Dropout multiplier at each channel's winning position.
    winner_scale: Vec<f64>,
    winner: Vec<usize>,
    pre_winner: Vec<f64>,
    pooled: Array1<f64>,
    probs: Array1<f64>,
}

impl ForwardCache {
    pub fn probs(&self) -> &Array1<f64> {
        &self.probs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub conv_w: Array5<f64>,
    pub conv_b: Array1<f64>,
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl Gradients {
    fn zeros_like(m: &ReadoutModel) -> Self {
        Self {
            conv_w: Array5::zeros(m.conv_w.raw_dim()),
            conv_b: Array1::zeros(m.conv_b.len()),
            dense_w: Array2::zeros(m.dense_w.raw_dim()),
            dense_b: Array1::zeros(m.dense_b.len()),
        }
    }

    fn add_assign(&mut self, other: &Gradients) {
        self.conv_w += &other.conv_w;
        self.conv_b += &other.conv_b;
        self.dense_w += &other.dense_w;
        self.dense_b += &other.dense_b;
    }
}

impl ReadoutModel {
    /// Randomly initialized model (He-uniform conv, Glorot-uniform dense,
    /// zero biases) for cubes of `in_channels × dims`.
    pub fn new(in_channels: usize, dims: [usize; 3], classes: usize, cfg: &ReadoutConfig) -> Result<Self> {
        let mut model = Self::zeros(in_channels, dims, classes, cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let fan_in = (in_channels * cfg.kernel.pow(3)) as f64;
        let conv_bound = (6.0 / fan_in).sqrt();
        model
            .conv_w
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-conv_bound..conv_bound));
        let dense_bound = (6.0 / (cfg.c_out + classes) as f64).sqrt();
        model
            .dense_w
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-dense_bound..dense_bound));
        Ok(model)
    }

    /// All weights and biases zero.
    pub fn zeros(in_channels: usize, dims: [usize; 3], classes: usize, cfg: &ReadoutConfig) -> Result<Self> {
        if in_channels == 0 || classes == 0 || cfg.c_out == 0 || cfg.kernel == 0 {
            return Err(Error::invalid("readout sizes must be positive"));
        }
        if dims.iter().any(|&d| d < cfg.kernel) {
            return Err(Error::invalid(format!(
                "cube {dims:?} is smaller than the {k}x{k}x{k} kernel",
                k = cfg.kernel
            )));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::invalid("readout.dropout must be in [0, 1)"));
        }
        let k = cfg.kernel;
        Ok(Self {
            in_channels,
            dims,
            kernel: k,
            classes,
            dropout: cfg.dropout,
            conv_w: Array5::zeros((cfg.c_out, in_channels, k, k, k)),
            conv_b: Array1::zeros(cfg.c_out),
            dense_w: Array2::zeros((classes, cfg.c_out)),
            dense_b: Array1::zeros(classes),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn c_out(&self) -> usize {
        self.conv_b.len()
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    /// Conv output extent along each axis.
    pub fn out_dims(&self) -> [usize; 3] {
        self.dims.map(|d| d - self.kernel + 1)
    }

    pub fn positions(&self) -> usize {
        self.out_dims().iter().product()
    }

    pub fn parameter_count(&self) -> usize {
        self.conv_w.len() + self.conv_b.len() + self.dense_w.len() + self.dense_b.len()
    }

    fn check_cube(&self, cube: &FeatureCube) -> Result<()> {
        if cube.channels() != self.in_channels || cube.spatial() != self.dims {
            return Err(Error::shape(
                "readout input",
                format!("{} × {:?}", self.in_channels, self.dims),
                format!("{} × {:?}", cube.channels(), cube.spatial()),
            ));
        }
        Ok(())
    }

    /// `(in_channels·k³) × positions` patch matrix of a cube.
    fn im2col(&self, cube: &FeatureCube) -> Array2<f64> {
        let k = self.kernel;
        let [ox, oy, oz] = self.out_dims();
        let rows = self.in_channels * k * k * k;
        let mut patches = Array2::zeros((rows, ox * oy * oz));
        let data = cube.data();
        let mut r = 0;
        for c in 0..self.in_channels {
            for i in 0..k {
                for j in 0..k {
                    for l in 0..k {
                        let mut row = patches.row_mut(r);
                        let mut p = 0;
                        for x in 0..ox {
                            for y in 0..oy {
                                for z in 0..oz {
                                    row[p] = data[[c, x + i, y + j, z + l]];
                                    p += 1;
                                }
                            }
                        }
                        r += 1;
                    }
                }
            }
        }
        patches
    }

    fn conv_matrix(&self) -> ArrayView2<'_, f64> {
        let rows = self.c_out();
        let cols = self.conv_w.len() / rows;
        self.conv_w
            .view()
            .into_shape_with_order((rows, cols))
            .expect("conv weights are contiguous")
    }

    /// Inference: class probabilities with dropout disabled.
    pub fn forward(&self, cube: &FeatureCube) -> Result<Array1<f64>> {
        self.check_cube(cube)?;
        Ok(self.forward_cached(cube, None).probs)
    }

    pub fn predict(&self, cube: &FeatureCube) -> Result<usize> {
        let p = self.forward(cube)?;
        Ok(crate::semantic::argmax(p.as_slice().expect("contiguous")))
    }

    /// Forward pass with an optional dropout multiplier matrix
    /// (`c_out × positions`, entries 0 or `1 / (1 - dropout)`).
    pub fn forward_cached(&self, cube: &FeatureCube, dropout: Option<&Array2<f64>>) -> ForwardCache {
        let patches = self.im2col(cube);
        let mut activated = self.conv_matrix().dot(&patches);
        for (mut row, &b) in activated.outer_iter_mut().zip(&self.conv_b) {
            row.mapv_inplace(|x| x + b);
        }
        let c_out = self.c_out();
        let mut winner = vec![0; c_out];
        let mut pre_winner = vec![0.0; c_out];
        let mut winner_scale = vec![1.0; c_out];
        let mut pooled = Array1::zeros(c_out);
        for (o, mut row) in activated.outer_iter_mut().enumerate() {
            let pre = row.to_owned();
            row.mapv_inplace(|x| x.max(0.0));
            if let Some(mask) = dropout {
                row *= &mask.row(o);
            }
            let mut best = 0;
            for p in 1..row.len() {
                if row[p] > row[best] {
                    best = p;
                }
            }
            winner[o] = best;
            pre_winner[o] = pre[best];
            winner_scale[o] = dropout.map_or(1.0, |m| m[[o, best]]);
            pooled[o] = row[best];
        }
        let logits = self.dense_w.dot(&pooled) + &self.dense_b;
        let probs = softmax(&logits);
        ForwardCache {
            patches,
            winner_scale,
            winner,
            pre_winner,
            pooled,
            probs,
        }
    }

    /// Gradient of the cross-entropy loss for `label` with respect to every
    /// parameter, given the cache of the matching forward pass.
    pub fn backward(&self, cache: &ForwardCache, label: usize) -> Gradients {
        let mut g = Gradients::zeros_like(self);
        let mut d_logits = cache.probs.clone();
        d_logits[label] -= 1.0;
        for c in 0..self.classes {
            for o in 0..self.c_out() {
                g.dense_w[[c, o]] = d_logits[c] * cache.pooled[o];
            }
            g.dense_b[c] = d_logits[c];
        }
        let d_pooled = self.dense_w.t().dot(&d_logits);
        let cols = self.conv_w.len() / self.c_out();
        let mut conv_flat = g
            .conv_w
            .view_mut()
            .into_shape_with_order((self.c_out(), cols))
            .expect("contiguous");
        for o in 0..self.c_out() {
            if cache.pre_winner[o] <= 0.0 || cache.winner_scale[o] == 0.0 {
                continue;
            }
            let d_pre = d_pooled[o] * cache.winner_scale[o];
            g.conv_b[o] = d_pre;
            let patch = cache.patches.column(cache.winner[o]);
            conv_flat
                .row_mut(o)
                .iter_mut()
                .zip(patch.iter())
                .for_each(|(w, &x)| *w = d_pre * x);
        }
        g
    }

    /// Loss and gradients for one labelled cube.
    pub fn loss_and_gradients(
        &self,
        cube: &FeatureCube,
        label: usize,
        dropout: Option<&Array2<f64>>,
    ) -> Result<(f64, Gradients)> {
        self.check_cube(cube)?;
        self.check_label(label)?;
        let cache = self.forward_cached(cube, dropout);
        let loss = loss_for_label(cache.probs.as_slice().expect("contiguous"), label);
        Ok((loss, self.backward(&cache, label)))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.classes {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                self.classes
            )));
        }
        Ok(())
    }

    fn apply(&mut self, g: &Gradients, scale: f64) {
        self.conv_w.scaled_add(-scale, &g.conv_w);
        self.conv_b.scaled_add(-scale, &g.conv_b);
        self.dense_w.scaled_add(-scale, &g.dense_w);
        self.dense_b.scaled_add(-scale, &g.dense_b);
    }

    fn dropout_mask<R: Rng>(&self, rng: &mut R) -> Array2<f64> {
        let keep = 1.0 / (1.0 - self.dropout);
        Array2::from_shape_fn((self.c_out(), self.positions()), |_| {
            if rng.gen::<f64>() < self.dropout {
                0.0
            } else {
                keep
            }
        })
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&0u16.to_le_bytes())?;
        for v in [
            self.in_channels,
            self.dims[0],
            self.dims[1],
            self.dims[2],
            self.kernel,
            self.c_out(),
            self.classes,
        ] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        w.write_all(&self.dropout.to_le_bytes())?;
        let all = self
            .conv_w
            .iter()
            .chain(&self.conv_b)
            .chain(&self.dense_w)
            .chain(&self.dense_b);
        for x in all {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        if &head[..4] != CHECKPOINT_MAGIC {
            return Err(Error::format("readout checkpoint", "bad magic"));
        }
        let version = u16::from_le_bytes([head[4], head[5]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::format("readout checkpoint", format!("unsupported version {version}")));
        }
        let mut sizes = [0usize; 7];
        for s in sizes.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            *s = u32::from_le_bytes(b) as usize;
        }
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let dropout = f64::from_le_bytes(b);
        let [in_channels, x, y, z, kernel, c_out, classes] = sizes;
        let cfg = ReadoutConfig {
            c_out,
            kernel,
            dropout,
            seed: 0,
        };
        let mut model = Self::zeros(in_channels, [x, y, z], classes, &cfg)
            .map_err(|e| Error::format("readout checkpoint", e.to_string()))?;
        let mut read_into = |dst: &mut dyn Iterator<Item = &mut f64>| -> Result<()> {
            for v in dst {
                r.read_exact(&mut b)?;
                *v = f64::from_le_bytes(b);
            }
            Ok(())
        };
        read_into(&mut model.conv_w.iter_mut())?;
        read_into(&mut model.conv_b.iter_mut())?;
        read_into(&mut model.dense_w.iter_mut())?;
        read_into(&mut model.dense_b.iter_mut())?;
        Ok(model)
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"LSMR";
const CHECKPOINT_VERSION: u16 = 1;

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    let exp = logits.mapv(|x| (x - max).exp());
    let total = exp.sum();
    exp / total
}

/// Categorical cross-entropy `-Σ y_i log p_i`, with `log` floored at
/// `log(1e-12)`.
pub fn loss(probs: &[f64], one_hot: &[f64]) -> Result<f64> {
    if probs.len() != one_hot.len() {
        return Err(Error::shape("cross-entropy", probs.len(), one_hot.len()));
    }
    Ok(-probs
        .iter()
        .zip(one_hot)
        .map(|(&p, &y)| if y == 0.0 { 0.0 } else { y * clamped_log(p).unwrap_or(f64::NAN) })
        .sum::<f64>())
}

pub fn loss_for_label(probs: &[f64], label: usize) -> f64 {
    clamped_log(probs[label]).map_or(f64::NAN, |l| -l)
}

/// `ln(max(p, 1e-12))`, or `None` for NaN (which `f64::max` would hide).
fn clamped_log(p: f64) -> Option<f64> {
    (!p.is_nan()).then(|| p.max(LOG_FLOOR).ln())
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub cube: FeatureCube,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean training loss per epoch.
    pub losses: Vec<f64>,
    pub learning_rates: Vec<f64>,
}

impl TrainReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "epoch,loss,learning_rate")?;
        for (e, (l, lr)) in self.losses.iter().zip(&self.learning_rates).enumerate() {
            writeln!(w, "{},{},{}", e + 1, l, lr)?;
        }
        Ok(())
    }
}

fn sample_rng(seed: u64, epoch: usize, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_d70b);
    rng.set_stream(((epoch as u64) << 32) | index as u64);
    rng
}

/// Mini-batch gradient descent on the readout only. Per-sample gradients
/// may be computed in parallel; they are summed in sample order, so the
/// result does not depend on the thread count.
pub fn train(model: &mut ReadoutModel, data: &[Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    for s in data {
        model.check_cube(&s.cube)?;
        model.check_label(s.label)?;
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = TrainReport {
        losses: Vec::with_capacity(cfg.epochs),
        learning_rates: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<(f64, Gradients)> = batch
                .par_iter()
                .map(|&i| {
                    let mask = (model.dropout > 0.0)
                        .then(|| model.dropout_mask(&mut sample_rng(cfg.seed, epoch, i)));
                    let s = &data[i];
                    let cache = model.forward_cached(&s.cube, mask.as_ref());
                    let l = loss_for_label(cache.probs.as_slice().expect("contiguous"), s.label);
                    (l, model.backward(&cache, s.label))
                })
                .collect();
            let mut total = Gradients::zeros_like(model);
            for (l, g) in &results {
                if !l.is_finite() {
                    return Err(Error::Diverged(format!("non-finite loss at epoch {}", epoch + 1)));
                }
                epoch_loss += l;
                total.add_assign(g);
            }
            model.apply(&total, lr / batch.len() as f64);
        }
        let mean = epoch_loss / data.len() as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss at epoch {}", epoch + 1)));
        }
        report.losses.push(mean);
        report.learning_rates.push(lr);
    }
    Ok(report)
}

/// Fraction of samples whose argmax prediction matches the label.
pub fn accuracy(model: &ReadoutModel, data: &[Sample]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("evaluation set is empty"));
    }
    let correct: Result<Vec<bool>> = data
        .par_iter()
        .map(|s| Ok(model.predict(&s.cube)? == s.label))
        .collect();
    Ok(correct?.iter().filter(|&&c| c).count() as f64 / data.len() as f64)
}

/// Stacks probability rows into a `samples × classes` matrix.
pub fn predict_all(model: &ReadoutModel, cubes: &[&FeatureCube]) -> Result<Array2<f64>> {
    let rows: Result<Vec<Array1<f64>>> = cubes.par_iter().map(|c| model.forward(c)).collect();
    let rows = rows?;
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(Axis(0))).collect();
    if views.is_empty() {
        return Ok(Array2::zeros((0, model.classes())));
    }
    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::invalid(e.to_string()))
}
