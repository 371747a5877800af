//! Liquid construction: a 3-D grid of neurons, excitatory/inhibitory and
//! primary/auxiliary labels, sparse input wiring and distance-dependent
//! recurrent wiring with integer synaptic delays.
//!
//! Neuron `n` sits at grid position `(x, y, z)` with
//! `n = (x * dims[1] + y) * dims[2] + z`, so a length-L activity vector
//! reshapes row-major into a `dims[0] × dims[1] × dims[2]` cube.
//!
//! Weight matrices use the convention `w[target, source]`: row `i` of `W_L`
//! lists what neuron `i` receives.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::index;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered neuron-type pair, source first: `EI` is excitatory → inhibitory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairType {
    EE,
    EI,
    II,
    IE,
}

impl PairType {
    pub const ALL: [PairType; 4] = [PairType::EE, PairType::EI, PairType::II, PairType::IE];

    pub fn between(source_excitatory: bool, target_excitatory: bool) -> Self {
        match (source_excitatory, target_excitatory) {
            (true, true) => PairType::EE,
            (true, false) => PairType::EI,
            (false, false) => PairType::II,
            (false, true) => PairType::IE,
        }
    }

    /// Position of this pair in the `[EE, EI, II, IE]` tables.
    pub fn index(self) -> usize {
        match self {
            PairType::EE => 0,
            PairType::EI => 1,
            PairType::II => 2,
            PairType::IE => 3,
        }
    }

    pub fn source_excitatory(self) -> bool {
        matches!(self, PairType::EE | PairType::EI)
    }
}

impl fmt::Display for PairType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PairType::EE => "EE",
            PairType::EI => "EI",
            PairType::II => "II",
            PairType::IE => "IE",
        };
        f.write_str(s)
    }
}

impl FromStr for PairType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "EE" => Ok(PairType::EE),
            "EI" => Ok(PairType::EI),
            "II" => Ok(PairType::II),
            "IE" => Ok(PairType::IE),
            _ => Err(Error::invalid(format!("unknown neuron pair type {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BuildConfig {
    pub dims: [usize; 3],
    /// Connection probability ceilings, `[EE, EI, II, IE]`.
    pub c_table: [f64; 4],
    /// Distance falloff of the connection probability.
    pub lambda: f64,
    /// Signed synaptic weights, `[EE, EI, II, IE]`.
    pub w_table: [f64; 4],
    pub w_scale: f64,
    pub input_size: usize,
    /// Fraction of liquid neurons that are excitatory.
    pub ei_ratio: f64,
    /// Fraction of input neurons feeding each primary neuron.
    pub input_density: f64,
    /// Fraction of excitatory neurons that are primary.
    pub primary_ratio: f64,
    pub seed: u64,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            dims: [10, 10, 10],
            c_table: [0.6, 1.0, 0.2, 0.8],
            lambda: 6.0,
            w_table: [3.0, 2.0, -1.0, -4.0],
            w_scale: 0.01,
            input_size: 512,
            ei_ratio: 0.8,
            input_density: 0.1,
            primary_ratio: 0.5,
            seed: 0,
        }
    }
}

impl BuildConfig {
    pub fn neurons(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("reservoir.dims must all be positive"));
        }
        if self.neurons() > u32::MAX as usize {
            return Err(Error::invalid("reservoir too large"));
        }
        let mut probs = vec![
            ("ei_ratio".to_string(), self.ei_ratio),
            ("input_density".to_string(), self.input_density),
            ("primary_ratio".to_string(), self.primary_ratio),
        ];
        for pair in PairType::ALL {
            probs.push((format!("c_table[{pair}]"), self.c_table[pair.index()]));
        }
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("reservoir.{name} = {p} is not in [0, 1]")));
            }
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid("reservoir.lambda must be positive and finite"));
        }
        if !(self.w_scale >= 0.0 && self.w_scale.is_finite()) {
            return Err(Error::invalid("reservoir.w_scale must be finite and >= 0"));
        }
        for pair in PairType::ALL {
            let w = self.w_table[pair.index()];
            let ok = w.is_finite() && if pair.source_excitatory() { w >= 0.0 } else { w <= 0.0 };
            if !ok {
                return Err(Error::invalid(format!(
                    "reservoir.w_table[{pair}] = {w} has the wrong sign for its source type"
                )));
            }
        }
        Ok(())
    }

    /// Number of excitatory neurons.
    pub fn excitatory_count(&self) -> usize {
        (self.ei_ratio * self.neurons() as f64).round() as usize
    }

    pub fn primary_count(&self) -> usize {
        (self.primary_ratio * self.excitatory_count() as f64).round() as usize
    }

    /// Input fan-in of each primary neuron.
    pub fn input_fan_in(&self) -> usize {
        (self.input_density * self.input_size as f64).round() as usize
    }

    pub fn weight(&self, pair: PairType) -> f64 {
        self.w_table[pair.index()] * self.w_scale
    }

    /// Weight of every input synapse: the EE magnitude scaled by `w_scale`.
    pub fn input_weight(&self) -> f64 {
        self.w_table[PairType::EE.index()].abs() * self.w_scale
    }
}

/// `C · exp(-(distance / λ)²)`, clamped to [0, 1].
pub fn connection_probability(pair: PairType, distance: f64, cfg: &BuildConfig) -> Result<f64> {
    if !(distance >= 0.0) {
        return Err(Error::invalid(format!("distance {distance} must be >= 0")));
    }
    let c = cfg.c_table[pair.index()];
    let scaled = distance / cfg.lambda;
    Ok((c * (-(scaled * scaled)).exp()).clamp(0.0, 1.0))
}

/// Grid coordinates of every neuron, in index order.
pub fn grid_positions(dims: [usize; 3]) -> Vec<[i32; 3]> {
    let mut out = Vec::with_capacity(dims.iter().product());
    for x in 0..dims[0] {
        for y in 0..dims[1] {
            for z in 0..dims[2] {
                out.push([x as i32, y as i32, z as i32]);
            }
        }
    }
    out
}

pub fn euclidean(a: [i32; 3], b: [i32; 3]) -> f64 {
    let d2: i64 = a
        .iter()
        .zip(&b)
        .map(|(&p, &q)| {
            let d = (p - q) as i64;
            d * d
        })
        .sum();
    (d2 as f64).sqrt()
}

pub fn distance_matrix(positions: &[[i32; 3]]) -> Array2<f64> {
    let n = positions.len();
    Array2::from_shape_fn((n, n), |(i, j)| euclidean(positions[i], positions[j]))
}

/// Synaptic delay in timesteps for a connection of the given length.
pub fn quantize_delay(distance: f64) -> u32 {
    (distance.round() as u32).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Synapse {
    pub target: u32,
    pub source: u32,
    pub weight: f64,
    pub delay: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputSynapse {
    pub target: u32,
    pub input: u32,
    pub weight: f64,
}

/// An immutable liquid. Synapses are kept sorted by `(target, source)` and
/// input synapses by `(target, input)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirTopology {
    config: BuildConfig,
    positions: Vec<[i32; 3]>,
    is_excitatory: Vec<bool>,
    is_primary: Vec<bool>,
    synapses: Vec<Synapse>,
    inputs: Vec<InputSynapse>,
    t_max: u32,
}

impl ReservoirTopology {
    /// Assembles a topology from explicit parts and checks every structural
    /// invariant. Delays must equal the quantized inter-neuron distance.
    pub fn from_parts(
        config: BuildConfig,
        positions: Vec<[i32; 3]>,
        is_excitatory: Vec<bool>,
        is_primary: Vec<bool>,
        mut synapses: Vec<Synapse>,
        mut inputs: Vec<InputSynapse>,
    ) -> Result<Self> {
        let n = positions.len();
        if is_excitatory.len() != n || is_primary.len() != n {
            return Err(Error::shape(
                "topology labels",
                n,
                format!("{}/{}", is_excitatory.len(), is_primary.len()),
            ));
        }
        if is_primary.iter().zip(&is_excitatory).any(|(&p, &e)| p && !e) {
            return Err(Error::invalid("primary neurons must be excitatory"));
        }
        synapses.sort_by_key(|s| (s.target, s.source));
        inputs.sort_by_key(|s| (s.target, s.input));
        for pair in synapses.windows(2) {
            if (pair[0].target, pair[0].source) == (pair[1].target, pair[1].source) {
                return Err(Error::invalid("duplicate liquid synapse"));
            }
        }
        for s in &synapses {
            let (t, src) = (s.target as usize, s.source as usize);
            if t >= n || src >= n {
                return Err(Error::invalid("liquid synapse endpoint out of range"));
            }
            if t == src {
                return Err(Error::invalid("self-connections are not allowed"));
            }
            if !s.weight.is_finite() || (is_excitatory[src] && s.weight < 0.0) || (!is_excitatory[src] && s.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "synapse {src}->{t} weight {} does not match source type",
                    s.weight
                )));
            }
            let expected = quantize_delay(euclidean(positions[t], positions[src]));
            if s.delay != expected {
                return Err(Error::invalid(format!(
                    "synapse {src}->{t} delay {} differs from quantized distance {expected}",
                    s.delay
                )));
            }
        }
        for pair in inputs.windows(2) {
            if (pair[0].target, pair[0].input) == (pair[1].target, pair[1].input) {
                return Err(Error::invalid("duplicate input synapse"));
            }
        }
        for s in &inputs {
            let t = s.target as usize;
            if t >= n || s.input as usize >= config.input_size {
                return Err(Error::invalid("input synapse endpoint out of range"));
            }
            if !is_primary[t] {
                return Err(Error::invalid("only primary neurons may receive input"));
            }
            if !s.weight.is_finite() {
                return Err(Error::NonFinite("input weight"));
            }
        }
        let t_max = synapses.iter().map(|s| s.delay).max().unwrap_or(0);
        Ok(Self {
            config,
            positions,
            is_excitatory,
            is_primary,
            synapses,
            inputs,
            t_max,
        })
    }

    pub fn config(&self) -> &BuildConfig {
        &self.config
    }

    pub fn neurons(&self) -> usize {
        self.positions.len()
    }

    pub fn input_size(&self) -> usize {
        self.config.input_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.config.dims
    }

    pub fn positions(&self) -> &[[i32; 3]] {
        &self.positions
    }

    pub fn is_excitatory(&self) -> &[bool] {
        &self.is_excitatory
    }

    pub fn is_primary(&self) -> &[bool] {
        &self.is_primary
    }

    pub fn synapses(&self) -> &[Synapse] {
        &self.synapses
    }

    pub fn input_synapses(&self) -> &[InputSynapse] {
        &self.inputs
    }

    /// Largest delay over existing connections (0 with no connections).
    pub fn t_max(&self) -> u32 {
        self.t_max
    }

    pub fn pair_type(&self, s: &Synapse) -> PairType {
        PairType::between(
            self.is_excitatory[s.source as usize],
            self.is_excitatory[s.target as usize],
        )
    }

    pub fn w_l_dense(&self) -> Array2<f64> {
        let n = self.neurons();
        let mut w = Array2::zeros((n, n));
        for s in &self.synapses {
            w[[s.target as usize, s.source as usize]] = s.weight;
        }
        w
    }

    pub fn w_li_dense(&self) -> Array2<f64> {
        let mut w = Array2::zeros((self.neurons(), self.input_size()));
        for s in &self.inputs {
            w[[s.target as usize, s.input as usize]] = s.weight;
        }
        w
    }

    /// Delay matrix with 0 where no connection exists.
    pub fn delay_dense(&self) -> Array2<u32> {
        let n = self.neurons();
        let mut d = Array2::zeros((n, n));
        for s in &self.synapses {
            d[[s.target as usize, s.source as usize]] = s.delay;
        }
        d
    }

    /// Copy of this topology with every recurrent synapse removed.
    pub fn without_recurrence(&self) -> Self {
        Self {
            synapses: Vec::new(),
            t_max: 0,
            ..self.clone()
        }
    }

    pub fn summary(&self) -> TopologySummary {
        let mut per_pair = BTreeMap::new();
        for pair in PairType::ALL {
            per_pair.insert(pair, 0usize);
        }
        let mut delay_histogram = BTreeMap::new();
        for s in &self.synapses {
            *per_pair.get_mut(&self.pair_type(s)).unwrap() += 1;
            *delay_histogram.entry(s.delay).or_insert(0usize) += 1;
        }
        TopologySummary {
            neurons: self.neurons(),
            excitatory: self.is_excitatory.iter().filter(|&&e| e).count(),
            primary: self.is_primary.iter().filter(|&&p| p).count(),
            liquid_connections: self.synapses.len(),
            input_connections: self.inputs.len(),
            per_pair,
            delay_histogram,
            t_max: self.t_max,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = TopologyFile {
            format: TOPOLOGY_FORMAT.to_string(),
            version: TOPOLOGY_VERSION,
            config: self.config.clone(),
            positions: self.positions.clone(),
            is_excitatory: self.is_excitatory.clone(),
            is_primary: self.is_primary.clone(),
            synapses: self.synapses.clone(),
            inputs: self.inputs.clone(),
            t_max: self.t_max,
        };
        serde_json::to_writer(w, &file).map_err(|e| Error::format("topology", e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: TopologyFile =
            serde_json::from_reader(r).map_err(|e| Error::format("topology", e.to_string()))?;
        if file.format != TOPOLOGY_FORMAT || file.version != TOPOLOGY_VERSION {
            return Err(Error::format(
                "topology",
                format!("unsupported format {} v{}", file.format, file.version),
            ));
        }
        let topo = Self::from_parts(
            file.config,
            file.positions,
            file.is_excitatory,
            file.is_primary,
            file.synapses,
            file.inputs,
        )?;
        if topo.t_max != file.t_max {
            return Err(Error::format("topology", "stored t_max disagrees with synapses"));
        }
        Ok(topo)
    }
}

const TOPOLOGY_FORMAT: &str = "lsm-topology";
const TOPOLOGY_VERSION: u32 = 1;

/// On-disk topology (JSON). Carries the full build config, seed included,
/// alongside every derived field.
#[derive(Serialize, Deserialize)]
struct TopologyFile {
    format: String,
    version: u32,
    config: BuildConfig,
    positions: Vec<[i32; 3]>,
    is_excitatory: Vec<bool>,
    is_primary: Vec<bool>,
    synapses: Vec<Synapse>,
    inputs: Vec<InputSynapse>,
    t_max: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologySummary {
    pub neurons: usize,
    pub excitatory: usize,
    pub primary: usize,
    pub liquid_connections: usize,
    pub input_connections: usize,
    pub per_pair: BTreeMap<PairType, usize>,
    pub delay_histogram: BTreeMap<u32, usize>,
    pub t_max: u32,
}

impl fmt::Display for TopologySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "neurons {} (excitatory {}, primary {})",
            self.neurons, self.excitatory, self.primary
        )?;
        writeln!(
            f,
            "liquid connections {}, input connections {}, t_max {}",
            self.liquid_connections, self.input_connections, self.t_max
        )?;
        for (pair, count) in &self.per_pair {
            writeln!(f, "  {pair}: {count}")?;
        }
        write!(f, "delay histogram:")?;
        for (d, count) in &self.delay_histogram {
            write!(f, " {d}:{count}")?;
        }
        Ok(())
    }
}

/// Samples a liquid. Deterministic in `cfg` (including `cfg.seed`).
pub fn build(cfg: &BuildConfig) -> Result<ReservoirTopology> {
    cfg.validate()?;
    if cfg.input_fan_in() > cfg.input_size {
        return Err(Error::invalid("input fan-in exceeds input layer size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.neurons();
    let positions = grid_positions(cfg.dims);

    let mut is_excitatory = vec![false; n];
    let mut excitatory: Vec<usize> = index::sample(&mut rng, n, cfg.excitatory_count()).into_vec();
    excitatory.sort_unstable();
    for &e in &excitatory {
        is_excitatory[e] = true;
    }

    let mut is_primary = vec![false; n];
    for k in index::sample(&mut rng, excitatory.len(), cfg.primary_count()) {
        is_primary[excitatory[k]] = true;
    }

    let mut synapses = Vec::new();
    for target in 0..n {
        for source in 0..n {
            if source == target {
                continue;
            }
            let pair = PairType::between(is_excitatory[source], is_excitatory[target]);
            let distance = euclidean(positions[target], positions[source]);
            let p = connection_probability(pair, distance, cfg)?;
            if rng.gen::<f64>() < p {
                synapses.push(Synapse {
                    target: target as u32,
                    source: source as u32,
                    weight: cfg.weight(pair),
                    delay: quantize_delay(distance),
                });
            }
        }
    }

    let fan_in = cfg.input_fan_in();
    let weight = cfg.input_weight();
    let mut inputs = Vec::new();
    for target in (0..n).filter(|&t| is_primary[t]) {
        let mut chosen = index::sample(&mut rng, cfg.input_size, fan_in).into_vec();
        chosen.sort_unstable();
        inputs.extend(chosen.into_iter().map(|input| InputSynapse {
            target: target as u32,
            input: input as u32,
            weight,
        }));
    }

    ReservoirTopology::from_parts(
        cfg.clone(),
        positions,
        is_excitatory,
        is_primary,
        synapses,
        inputs,
    )
}
