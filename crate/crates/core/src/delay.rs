//! Synaptic delay buffer.
//!
//! Semantically the buffer is a queue of `L × L` signal matrices: every
//! step the layer output `N(t)` is broadcast into a matrix whose column `j`
//! holds `N_j(t)` (the signal from source `j` to every potential target), the
//! queue shifts by one, and a static mask selects, for each connection
//! `(i, j)`, the entry whose age equals `delay[i, j]`.
//!
//! Since every column of a pushed matrix is a copy of one source's output,
//! the ring only stores the `L`-vectors themselves, and the mask is kept as
//! a per-delay list of connections. `pop` gathers
//! `N_j(t - delay[i, j])` for every connection, which is exactly the masked
//! entry of the broadcast matrix. A spike emitted by `j` at step `t` arrives
//! at `i` at step `t + delay[i, j]`.

use ndarray::{Array2, Array3, ArrayView2};

use crate::error::{Error, Result};
use crate::reservoir::ReservoirTopology;

/// One directed connection as seen by the buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Link {
    pub target: u32,
    pub source: u32,
    pub delay: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayBuffer {
    neurons: usize,
    batch: usize,
    depth: usize,
    /// `depth × neurons × batch`, slot `k` holds the output pushed at the
    /// most recent step congruent to `k` modulo `depth`.
    slots: Vec<f64>,
    cursor: usize,
    links: Vec<Link>,
    /// Per delay `d` (index `d - 1`): `(link index, source)` of every link
    /// with that delay.
    by_delay: Vec<Vec<(u32, u32)>>,
}

impl DelayBuffer {
    pub fn new(neurons: usize, batch: usize, links: Vec<Link>) -> Result<Self> {
        if links.len() > u32::MAX as usize {
            return Err(Error::invalid("too many delay links"));
        }
        if batch == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        for l in &links {
            if l.target as usize >= neurons || l.source as usize >= neurons {
                return Err(Error::invalid("delay link endpoint out of range"));
            }
            if l.delay == 0 {
                return Err(Error::invalid("synaptic delays must be at least one step"));
            }
        }
        let depth = links.iter().map(|l| l.delay as usize).max().unwrap_or(0).max(1);
        let mut by_delay = vec![Vec::new(); depth];
        for (k, l) in links.iter().enumerate() {
            by_delay[l.delay as usize - 1].push((k as u32, l.source));
        }
        Ok(Self {
            neurons,
            batch,
            depth,
            slots: vec![0.0; depth * neurons * batch],
            cursor: 0,
            links,
            by_delay,
        })
    }

    /// Buffer whose links follow the topology's synapse order.
    pub fn for_topology(topology: &ReservoirTopology, batch: usize) -> Result<Self> {
        let links = topology
            .synapses()
            .iter()
            .map(|s| Link {
                target: s.target,
                source: s.source,
                delay: s.delay,
            })
            .collect();
        Self::new(topology.neurons(), batch, links)
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    /// `mask[i, j, t] = 1` iff a connection `j -> i` exists with delay `t + 1`.
    pub fn mask(&self) -> Array3<u8> {
        let mut m = Array3::zeros((self.neurons, self.neurons, self.depth));
        for l in &self.links {
            m[[l.target as usize, l.source as usize, l.delay as usize - 1]] = 1;
        }
        m
    }

    /// Stores the layer output of the current step (`neurons × batch`) and
    /// advances time by one step.
    pub fn push(&mut self, output: ArrayView2<f64>) -> Result<()> {
        if output.dim() != (self.neurons, self.batch) {
            return Err(Error::shape(
                "delay buffer push",
                format!("({}, {})", self.neurons, self.batch),
                format!("{:?}", output.dim()),
            ));
        }
        let width = self.neurons * self.batch;
        let slot = &mut self.slots[self.cursor * width..(self.cursor + 1) * width];
        slot.iter_mut().zip(output.iter()).for_each(|(s, &x)| *s = x);
        self.cursor = (self.cursor + 1) % self.depth;
        Ok(())
    }

    /// Signals arriving this step, one row per link (in link order) and one
    /// column per batch entry.
    pub fn pop(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.links.len(), self.batch));
        self.pop_into(out.as_slice_mut().expect("standard layout"));
        out
    }

    /// [`pop`](Self::pop) into a caller-provided `links × batch` buffer.
    pub fn pop_into(&self, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.links.len() * self.batch);
        let width = self.neurons * self.batch;
        for (d_minus_1, group) in self.by_delay.iter().enumerate() {
            let delay = d_minus_1 + 1;
            let slot_index = (self.cursor + self.depth - delay) % self.depth;
            let slot = &self.slots[slot_index * width..(slot_index + 1) * width];
            if self.batch == 1 {
                for &(k, src) in group {
                    out[k as usize] = slot[src as usize];
                }
            } else {
                let b = self.batch;
                for &(k, src) in group {
                    let (k, src) = (k as usize * b, src as usize * b);
                    out[k..k + b].copy_from_slice(&slot[src..src + b]);
                }
            }
        }
    }

    /// Dense `pE(t)`: `neurons × neurons × batch`, zero off the connections.
    pub fn pop_dense(&self) -> Array3<f64> {
        let signals = self.pop();
        let mut dense = Array3::zeros((self.neurons, self.neurons, self.batch));
        for (k, l) in self.links.iter().enumerate() {
            for b in 0..self.batch {
                dense[[l.target as usize, l.source as usize, b]] = signals[[k, b]];
            }
        }
        dense
    }

    pub fn reset(&mut self) {
        self.slots.fill(0.0);
        self.cursor = 0;
    }
}
