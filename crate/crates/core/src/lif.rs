//! Leaky integrate-and-fire dynamics, implemented twice.
//!
//! [`scalar_step`] is the per-neuron reference: one neuron, one timestep,
//! with ordinary branches for the refractory and threshold logic.
//! [`parallel_step`] is the layer kernel: the same update rewritten as
//! whole-array arithmetic, comparisons and selects, with no data-dependent
//! branching. Both evaluate the membrane update in the same operation order:
//!
//! ```text
//! dV  = ((-V + V_rest) + I * R_m) / tau_m
//! V'  = V + dV * dt
//! R_f = int(bool(R_c))                        refracting flag
//! V~  = (1 - R_f) * V' + R_f * V_rest          refractory clamp
//! S   = int(V~ >= V_th)                       spike flag
//! N   = S * V_spike                           layer output
//! V'' = (1 - S) * V~ + N
//! R_c = S * tau_ref + (R_c - R_f)
//! ```
//!
//! so the two paths agree bit for bit. A membrane exactly at threshold fires
//! in both paths.
//!
//! A neuron that fires keeps `V_spike` as its stored potential for one step;
//! the refractory clamp pulls it back to rest on the next step. With
//! `tau_ref = 0` there is no clamp and integration continues from `V_spike`.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3, ArrayViewMut2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Element count above which the layer kernel splits work across the rayon
/// pool (only when the pool has more than one thread).
const PARALLEL_THRESHOLD: usize = 1 << 13;

/// Scalar neuron constants shared by every neuron of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifParams {
    pub v_th: f64,
    pub v_rest: f64,
    pub v_spike: f64,
    /// Membrane time constant, in timesteps.
    pub tau_m: f64,
    pub r_m: f64,
    /// Refractory duration in whole timesteps.
    pub tau_ref: u32,
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        Self {
            v_th: 0.1,
            v_rest: 0.0,
            v_spike: 1.0,
            tau_m: 5.0,
            r_m: 10.0,
            tau_ref: 1,
            dt: 1.0,
        }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("v_th", self.v_th),
            ("v_rest", self.v_rest),
            ("v_spike", self.v_spike),
            ("tau_m", self.tau_m),
            ("r_m", self.r_m),
            ("dt", self.dt),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, x)| !x.is_finite()) {
            return Err(Error::invalid(format!("lif.{name} must be finite")));
        }
        if self.v_th <= self.v_rest {
            return Err(Error::invalid(format!(
                "lif.v_th ({}) must exceed lif.v_rest ({})",
                self.v_th, self.v_rest
            )));
        }
        if self.v_spike <= 0.0 {
            return Err(Error::invalid("lif.v_spike must be positive"));
        }
        if self.tau_m <= 0.0 || self.r_m <= 0.0 || self.dt <= 0.0 {
            return Err(Error::invalid("lif.tau_m, lif.r_m and lif.dt must be positive"));
        }
        Ok(())
    }
}

/// State of a single neuron for the scalar reference path.
///
/// `counter > 0` means the neuron is refracting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeuronState {
    pub v: f64,
    pub counter: u32,
}

impl NeuronState {
    pub fn at_rest(params: &LifParams) -> Self {
        Self {
            v: params.v_rest,
            counter: 0,
        }
    }

    pub fn is_refracting(&self) -> bool {
        self.counter != 0
    }
}

/// One timestep of one neuron. Returns the new state and the emitted
/// voltage (`v_spike` on a spike step, 0 otherwise).
pub fn scalar_step(
    state: NeuronState,
    params: &LifParams,
    current: f64,
) -> Result<(NeuronState, f64)> {
    if !state.v.is_finite() {
        return Err(Error::NonFinite("neuron membrane potential"));
    }
    if !current.is_finite() {
        return Err(Error::NonFinite("input current"));
    }
    Ok(scalar_update(state, params, current))
}

#[inline]
fn scalar_update(state: NeuronState, params: &LifParams, current: f64) -> (NeuronState, f64) {
    if !state.is_refracting() {
        let v = state.v + ((-state.v + params.v_rest) + params.r_m * current) / params.tau_m * params.dt;
        if v >= params.v_th {
            let next = NeuronState {
                v: params.v_spike,
                counter: params.tau_ref,
            };
            (next, params.v_spike)
        } else {
            (NeuronState { v, counter: 0 }, 0.0)
        }
    } else {
        let next = NeuronState {
            v: params.v_rest,
            counter: state.counter - 1,
        };
        (next, 0.0)
    }
}

/// A layer simulated neuron by neuron with [`scalar_step`].
///
/// Neuron `l` of batch column `b` lives at index `l * batch + b`, the same
/// flat order as [`LayerState`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarLayer {
    neurons: usize,
    batch: usize,
    states: Vec<NeuronState>,
}

impl ScalarLayer {
    pub fn new(neurons: usize, batch: usize, params: &LifParams) -> Self {
        Self {
            neurons,
            batch,
            states: vec![NeuronState::at_rest(params); neurons * batch],
        }
    }

    pub fn states(&self) -> &[NeuronState] {
        &self.states
    }

    pub fn step(&mut self, params: &LifParams, current: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.states.len();
        if current.len() != n || out.len() != n {
            return Err(Error::shape("scalar layer step", n, current.len().max(out.len())));
        }
        for ((state, &i), o) in self.states.iter_mut().zip(current).zip(out.iter_mut()) {
            let (next, emitted) = scalar_step(*state, params, i)?;
            *state = next;
            *o = emitted;
        }
        Ok(())
    }

    /// Runs a `steps × neurons × batch` current sequence.
    pub fn run(&mut self, params: &LifParams, input: ArrayView3<f64>) -> Result<Array3<f64>> {
        check_sequence_shape(input, self.neurons, self.batch)?;
        let mut output = Array3::zeros(input.raw_dim());
        let mut current = vec![0.0; self.states.len()];
        let mut emitted = vec![0.0; self.states.len()];
        for (step_in, mut step_out) in input.outer_iter().zip(output.outer_iter_mut()) {
            current.iter_mut().zip(step_in.iter()).for_each(|(c, &x)| *c = x);
            self.step(params, &current, &mut emitted)?;
            step_out.iter_mut().zip(&emitted).for_each(|(o, &x)| *o = x);
        }
        Ok(output)
    }
}

/// Membrane potentials and refraction counters of a layer, `neurons × batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    v: Array2<f64>,
    counters: Array2<u32>,
}

impl LayerState {
    pub fn new(neurons: usize, batch: usize, params: &LifParams) -> Self {
        Self {
            v: Array2::from_elem((neurons, batch), params.v_rest),
            counters: Array2::zeros((neurons, batch)),
        }
    }

    pub fn from_parts(v: Array2<f64>, counters: Array2<u32>, params: &LifParams) -> Result<Self> {
        if v.dim() != counters.dim() {
            return Err(Error::shape(
                "layer state",
                format!("{:?}", v.dim()),
                format!("{:?}", counters.dim()),
            ));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("layer membrane potentials"));
        }
        if counters.iter().any(|&c| c > params.tau_ref) {
            return Err(Error::invalid("refraction counter exceeds tau_ref"));
        }
        Ok(Self { v, counters })
    }

    pub fn neurons(&self) -> usize {
        self.v.nrows()
    }

    pub fn batch(&self) -> usize {
        self.v.ncols()
    }

    pub fn v(&self) -> ArrayView2<'_, f64> {
        self.v.view()
    }

    pub fn counters(&self) -> ArrayView2<'_, u32> {
        self.counters.view()
    }

    pub fn reset(&mut self, params: &LifParams) {
        self.v.fill(params.v_rest);
        self.counters.fill(0);
    }
}

/// One timestep of the whole layer. `current` must be `neurons × batch`.
pub fn parallel_step(
    state: &mut LayerState,
    params: &LifParams,
    current: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if current.dim() != state.v.dim() {
        return Err(Error::shape(
            "layer current",
            format!("{:?}", state.v.dim()),
            format!("{:?}", current.dim()),
        ));
    }
    if current.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("input current"));
    }
    let mut out = Array2::zeros(current.raw_dim());
    step_unchecked(state, params, current, out.view_mut());
    Ok(out)
}

/// Layer update without boundary checks. Shapes must already agree.
pub(crate) fn step_unchecked(
    state: &mut LayerState,
    params: &LifParams,
    current: ArrayView2<f64>,
    out: ArrayViewMut2<f64>,
) {
    let p = *params;
    let update = move |v: &mut f64, rc: &mut u32, &i: &f64, n: &mut f64| {
        let dv = ((-*v + p.v_rest) + i * p.r_m) / p.tau_m;
        let v_int = *v + dv * p.dt;
        let rf = (*rc != 0) as u32;
        let rf_f = rf as f64;
        let v_bar = (1.0 - rf_f) * v_int + rf_f * p.v_rest;
        let s = (v_bar >= p.v_th) as u32;
        let s_f = s as f64;
        *n = s_f * p.v_spike;
        let rc_bar = *rc - rf;
        *v = (1.0 - s_f) * v_bar + *n;
        *rc = s * p.tau_ref + rc_bar;
    };
    let len = state.v.len();
    let zip = Zip::from(&mut state.v)
        .and(&mut state.counters)
        .and(&current)
        .and(out);
    if len >= PARALLEL_THRESHOLD && rayon::current_num_threads() > 1 {
        zip.par_for_each(update);
    } else {
        zip.for_each(update);
    }
}

fn check_sequence_shape(input: ArrayView3<f64>, neurons: usize, batch: usize) -> Result<()> {
    let (steps, l, b) = input.dim();
    if steps == 0 {
        return Err(Error::invalid("spike train must have at least one timestep"));
    }
    if l != neurons || b != batch {
        return Err(Error::shape(
            "current sequence",
            format!("(T, {neurons}, {batch})"),
            format!("({steps}, {l}, {b})"),
        ));
    }
    Ok(())
}

/// Folds [`parallel_step`] over a `steps × neurons × batch` current sequence
/// and returns the output voltages in the same layout.
pub fn run_spike_train(
    state: &mut LayerState,
    params: &LifParams,
    input: ArrayView3<f64>,
) -> Result<Array3<f64>> {
    check_sequence_shape(input, state.neurons(), state.batch())?;
    if input.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("input current"));
    }
    let mut output = Array3::zeros(input.raw_dim());
    for (step_in, step_out) in input.axis_iter(Axis(0)).zip(output.axis_iter_mut(Axis(0))) {
        step_unchecked(state, params, step_in, step_out);
    }
    Ok(output)
}
