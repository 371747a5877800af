//! Scalar vs vectorized LIF layer timing.
//!
//! Every configuration is first checked for identical output on the same
//! random input; only then is it timed. Reported values are the median and
//! interquartile range of per-run wall time after warmup.
//!
//! CSV schema, after `#`-prefixed metadata lines:
//!
//! ```text
//! impl,L,B,T,median_ns,iqr_ns,reps
//! ```

use std::fmt;
use std::io::Write;
use std::time::Instant;

use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::{run_spike_train, LayerState, LifParams, ScalarLayer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSpec {
    pub neuron_counts: Vec<usize>,
    pub batch_sizes: Vec<usize>,
    pub steps: usize,
    pub repetitions: usize,
    pub warmup: usize,
    pub seed: u64,
    /// Input currents are drawn uniformly from `[0, max_current)`.
    pub max_current: f64,
    pub params: LifParams,
}

impl Default for BenchSpec {
    fn default() -> Self {
        Self {
            neuron_counts: log_spaced(10, 5000, 8),
            batch_sizes: vec![1, 8, 32, 128],
            steps: 100,
            repetitions: 7,
            warmup: 2,
            seed: 0,
            max_current: 0.04,
            params: LifParams::default(),
        }
    }
}

impl BenchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.neuron_counts.is_empty() || self.neuron_counts.contains(&0) {
            return Err(Error::invalid("bench neuron counts must be non-empty and >= 1"));
        }
        if self.batch_sizes.is_empty() || self.batch_sizes.contains(&0) {
            return Err(Error::invalid("bench batch sizes must be non-empty and >= 1"));
        }
        if self.steps == 0 {
            return Err(Error::invalid("bench steps must be >= 1"));
        }
        if self.repetitions < 3 {
            return Err(Error::invalid("bench repetitions must be >= 3"));
        }
        if !(self.max_current.is_finite() && self.max_current > 0.0) {
            return Err(Error::invalid("bench max_current must be finite and > 0"));
        }
        self.params.validate()
    }
}

/// `n` integers from `lo` to `hi` evenly spaced in log scale, deduplicated.
pub fn log_spaced(lo: usize, hi: usize, n: usize) -> Vec<usize> {
    if n <= 1 || lo >= hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..n)
        .map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Impl {
    Scalar,
    Vectorized,
}

impl fmt::Display for Impl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Impl::Scalar => "scalar",
            Impl::Vectorized => "vectorized",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub implementation: Impl,
    pub neurons: usize,
    pub batch: usize,
    pub steps: usize,
    pub median_ns: f64,
    pub iqr_ns: f64,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchMetadata {
    pub hardware: String,
    pub threads: usize,
    pub seed: u64,
    pub build: String,
}

impl BenchMetadata {
    pub fn collect(seed: u64) -> Self {
        let hardware = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split(':').nth(1))
                    .map(|m| m.trim().to_string())
            })
            .unwrap_or_else(|| std::env::consts::ARCH.to_string());
        let profile = if cfg!(debug_assertions) { "debug-assertions" } else { "release" };
        Self {
            hardware,
            threads: rayon::current_num_threads(),
            seed,
            build: format!("{profile} {}-{}", std::env::consts::ARCH, std::env::consts::OS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub metadata: BenchMetadata,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, implementation: Impl, neurons: usize, batch: usize) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.implementation == implementation && r.neurons == neurons && r.batch == batch)
    }

    /// Scalar median over vectorized median.
    pub fn speedup(&self, neurons: usize, batch: usize) -> Option<f64> {
        let s = self.row(Impl::Scalar, neurons, batch)?;
        let v = self.row(Impl::Vectorized, neurons, batch)?;
        Some(s.median_ns / v.median_ns)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let m = &self.metadata;
        writeln!(w, "# hardware: {}", m.hardware)?;
        writeln!(w, "# threads: {}", m.threads)?;
        writeln!(w, "# seed: {}", m.seed)?;
        writeln!(w, "# build: {}", m.build)?;
        writeln!(w, "impl,L,B,T,median_ns,iqr_ns,reps")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{:.0},{:.0},{}",
                r.implementation, r.neurons, r.batch, r.steps, r.median_ns, r.iqr_ns, r.reps
            )?;
        }
        Ok(())
    }
}

/// Uniform random currents, `steps × neurons × batch`.
pub fn random_currents(neurons: usize, batch: usize, steps: usize, max_current: f64, seed: u64) -> Array3<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array3::from_shape_simple_fn((steps, neurons, batch), || rng.gen_range(0.0..max_current))
}

pub fn run_scalar(params: &LifParams, input: &Array3<f64>) -> Result<Array3<f64>> {
    let (_, l, b) = input.dim();
    ScalarLayer::new(l, b, params).run(params, input.view())
}

pub fn run_vectorized(params: &LifParams, input: &Array3<f64>) -> Result<Array3<f64>> {
    let (_, l, b) = input.dim();
    run_spike_train(&mut LayerState::new(l, b, params), params, input.view())
}

/// Compares both implementations on `input`; a mismatch lists the first
/// differing entries.
pub fn check_equivalence(params: &LifParams, input: &Array3<f64>) -> Result<()> {
    let a = run_scalar(params, input)?;
    let b = run_vectorized(params, input)?;
    let diffs: Vec<String> = a
        .indexed_iter()
        .zip(b.iter())
        .filter(|((_, x), y)| x != y)
        .map(|(((t, l, bb), x), y)| format!("t={t} neuron={l} batch={bb}: scalar={x} vectorized={y}"))
        .collect();
    if diffs.is_empty() {
        return Ok(());
    }
    let shown: Vec<&str> = diffs.iter().take(10).map(String::as_str).collect();
    Err(Error::Mismatch(format!(
        "{} of {} outputs differ; first: {}",
        diffs.len(),
        a.len(),
        shown.join("; ")
    )))
}

/// Median and interquartile range (linear interpolation between order
/// statistics).
pub fn median_iqr(samples: &[f64]) -> (f64, f64) {
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    (q(0.5), q(0.75) - q(0.25))
}

fn time_runs(
    implementation: Impl,
    params: &LifParams,
    input: &Array3<f64>,
    warmup: usize,
    reps: usize,
) -> Result<Vec<f64>> {
    let run = |input: &Array3<f64>| match implementation {
        Impl::Scalar => run_scalar(params, input),
        Impl::Vectorized => run_vectorized(params, input),
    };
    for _ in 0..warmup {
        std::hint::black_box(run(input)?);
    }
    let mut times = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        let out = run(std::hint::black_box(input))?;
        times.push(start.elapsed().as_nanos() as f64);
        std::hint::black_box(out);
    }
    Ok(times)
}

/// Times one implementation on one configuration after the correctness gate.
pub fn measure(
    implementation: Impl,
    neurons: usize,
    batch: usize,
    spec: &BenchSpec,
) -> Result<BenchRow> {
    let input = random_currents(neurons, batch, spec.steps, spec.max_current, spec.seed);
    check_equivalence(&spec.params, &input)?;
    let times = time_runs(implementation, &spec.params, &input, spec.warmup, spec.repetitions)?;
    let (median_ns, iqr_ns) = median_iqr(&times);
    Ok(BenchRow {
        implementation,
        neurons,
        batch,
        steps: spec.steps,
        median_ns,
        iqr_ns,
        reps: spec.repetitions,
    })
}

/// Full grid: every neuron count × batch size, scalar then vectorized.
pub fn run_bench(spec: &BenchSpec) -> Result<BenchReport> {
    spec.validate()?;
    let mut rows = Vec::new();
    for &l in &spec.neuron_counts {
        for &b in &spec.batch_sizes {
            let input = random_currents(l, b, spec.steps, spec.max_current, spec.seed);
            check_equivalence(&spec.params, &input)?;
            for implementation in [Impl::Scalar, Impl::Vectorized] {
                let times = time_runs(implementation, &spec.params, &input, spec.warmup, spec.repetitions)?;
                let (median_ns, iqr_ns) = median_iqr(&times);
                rows.push(BenchRow {
                    implementation,
                    neurons: l,
                    batch: b,
                    steps: spec.steps,
                    median_ns,
                    iqr_ns,
                    reps: spec.repetitions,
                });
            }
        }
    }
    Ok(BenchReport {
        metadata: BenchMetadata::collect(spec.seed),
        rows,
    })
}
