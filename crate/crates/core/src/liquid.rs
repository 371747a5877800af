//! Liquid simulation with delayed recurrent synapses.
//!
//! Each step:
//!
//! 1. pop the signals whose delay elapses now from the [`DelayBuffer`];
//! 2. weight them by `W_L` and sum per target (recurrent current);
//! 3. add `W_LI · input` (external current);
//! 4. advance the LIF layer one step;
//! 5. push the layer output into the buffer and append it to the log.
//!
//! Since every delay is at least one step, the recurrent current never
//! contains spikes emitted during the current step.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1};

use crate::delay::DelayBuffer;
use crate::error::{Error, Result};
use crate::lif::{self, LayerState, LifParams};
use crate::reservoir::ReservoirTopology;
use crate::spike::SpikeTrain;

#[derive(Debug, Clone)]
pub struct LiquidState {
    topology: Arc<ReservoirTopology>,
    params: LifParams,
    layer: LayerState,
    buffer: DelayBuffer,
    /// Step-major spike log, `steps × neurons`.
    log: Vec<u8>,
    steps: usize,
    signals: Vec<f64>,
    /// Row offsets into the `(target, source)`-sorted synapse list.
    row_start: Vec<usize>,
    weights: Vec<f64>,
    current: Array2<f64>,
    output: Array2<f64>,
}

impl LiquidState {
    pub fn new(topology: Arc<ReservoirTopology>, params: LifParams) -> Result<Self> {
        params.validate()?;
        let n = topology.neurons();
        let buffer = DelayBuffer::for_topology(&topology, 1)?;
        let mut row_start = vec![0; n + 1];
        for s in topology.synapses() {
            row_start[s.target as usize + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        let weights = topology.synapses().iter().map(|s| s.weight).collect();
        Ok(Self {
            row_start,
            weights,
            params,
            layer: LayerState::new(n, 1, &params),
            signals: vec![0.0; buffer.links().len()],
            buffer,
            log: Vec::new(),
            steps: 0,
            current: Array2::zeros((n, 1)),
            output: Array2::zeros((n, 1)),
            topology,
        })
    }

    pub fn topology(&self) -> &Arc<ReservoirTopology> {
        &self.topology
    }

    pub fn params(&self) -> &LifParams {
        &self.params
    }

    pub fn layer(&self) -> &LayerState {
        &self.layer
    }

    /// Steps executed since construction or the last [`reset`](Self::reset).
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Advances the liquid by one step with the given input-layer vector and
    /// returns the liquid output `N(t)`.
    pub fn step(&mut self, input: ArrayView1<f64>) -> Result<Array1<f64>> {
        if input.len() != self.topology.input_size() {
            return Err(Error::shape("liquid input", self.topology.input_size(), input.len()));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("liquid input"));
        }
        self.advance(input);
        Ok(self.output.column(0).to_owned())
    }

    fn advance(&mut self, input: ArrayView1<f64>) {
        let n = self.topology.neurons();
        self.buffer.pop_into(&mut self.signals);

        // row sums of W_L ⊙ pE, accumulated in ascending source order
        let mut recurrent = vec![0.0; n];
        for (i, r) in recurrent.iter_mut().enumerate() {
            let range = self.row_start[i]..self.row_start[i + 1];
            *r = self.weights[range.clone()]
                .iter()
                .zip(&self.signals[range])
                .fold(0.0, |acc, (w, s)| acc + w * s);
        }
        let mut external = vec![0.0; n];
        for syn in self.topology.input_synapses() {
            external[syn.target as usize] += syn.weight * input[syn.input as usize];
        }
        for ((c, r), e) in self.current.iter_mut().zip(&recurrent).zip(&external) {
            *c = r + e;
        }

        lif::step_unchecked(&mut self.layer, &self.params, self.current.view(), self.output.view_mut());
        self.buffer
            .push(self.output.view())
            .expect("output shape matches buffer");
        self.log.extend(self.output.iter().map(|&x| (x != 0.0) as u8));
        self.steps += 1;
    }

    /// Feeds an `input_size × T` spike raster and returns the `L × T` liquid
    /// raster for these steps. State carries over between calls.
    pub fn run_sequence(&mut self, inputs: &SpikeTrain) -> Result<SpikeTrain> {
        if inputs.steps() == 0 {
            return Err(Error::invalid("input sequence must have at least one step"));
        }
        if inputs.neurons() != self.topology.input_size() {
            return Err(Error::shape("liquid input", self.topology.input_size(), inputs.neurons()));
        }
        let start = self.steps;
        let mut column = Array1::zeros(inputs.neurons());
        for t in 0..inputs.steps() {
            column
                .iter_mut()
                .zip(inputs.column(t))
                .for_each(|(c, &s)| *c = s as f64);
            self.advance(column.view());
        }
        Ok(self.raster_between(start, self.steps))
    }

    /// Everything recorded since the last reset, `L × steps`.
    pub fn activation_log(&self) -> SpikeTrain {
        self.raster_between(0, self.steps)
    }

    fn raster_between(&self, from: usize, to: usize) -> SpikeTrain {
        let n = self.topology.neurons();
        let data = Array2::from_shape_fn((n, to - from), |(i, t)| self.log[(from + t) * n + i]);
        SpikeTrain::from_array(data).expect("log holds 0/1")
    }

    /// Returns membranes to rest, clears counters, buffer and log. The
    /// topology is untouched.
    pub fn reset(&mut self) {
        self.layer.reset(&self.params);
        self.buffer.reset();
        self.log.clear();
        self.steps = 0;
    }
}
