//! Monotone label decoding for three-stage sequences.
//!
//! After predicting class `c` the next prediction is restricted to
//! `{c, c + 1}` (class 2 is absorbing). Masked probabilities are not
//! renormalized; the emitted class is the argmax of the masked vector with
//! ties going to the lower index.

use crate::error::{Error, Result};

pub const STAGES: usize = 3;

/// Allowed classes given the previous prediction (`None` at sequence start).
pub fn mask_for(last: Option<usize>) -> Result<[u8; STAGES]> {
    match last {
        None => Ok([1, 1, 1]),
        Some(0) => Ok([1, 1, 0]),
        Some(1) => Ok([0, 1, 1]),
        Some(2) => Ok([0, 0, 1]),
        Some(c) => Err(Error::invalid(format!("class {c} out of range for staged masking"))),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MaskState {
    last: Option<usize>,
}

impl MaskState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_prediction(&self) -> Option<usize> {
        self.last
    }

    /// Masks `probs`, emits the argmax and remembers it.
    pub fn apply(&mut self, probs: &[f64]) -> Result<usize> {
        if probs.len() != STAGES {
            return Err(Error::shape("semantic mask input", STAGES, probs.len()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::invalid("probabilities must be finite and non-negative"));
        }
        let mask = mask_for(self.last)?;
        let mut best = None::<(usize, f64)>;
        for (c, (&p, &m)) in probs.iter().zip(&mask).enumerate() {
            if m == 0 {
                continue;
            }
            if best.map_or(true, |(_, bp)| p > bp) {
                best = Some((c, p));
            }
        }
        let (class, _) = best.expect("mask admits at least one class");
        self.last = Some(class);
        Ok(class)
    }
}

/// Decodes a whole sequence of probability vectors.
pub fn decode_sequence<P: AsRef<[f64]>>(probs: &[P]) -> Result<Vec<usize>> {
    let mut state = MaskState::new();
    probs.iter().map(|p| state.apply(p.as_ref())).collect()
}

/// Plain per-step argmax (lowest index on ties), the unmasked counterpart.
pub fn argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}
