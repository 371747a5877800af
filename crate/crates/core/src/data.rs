//! Synthetic sequence-classification tasks.
//!
//! A sequence is an ordered list of feature vectors in `[0, 1]` (one per
//! step) with one label per step. Feature values are per-step firing
//! probabilities for the Poisson encoder.
//!
//! - `patterns`: each class owns a random subset of "active" features driven
//!   at a high rate; every sequence carries one class on all of its steps.
//! - `staged`: three phases (class 0, 1, 2) separated by two random change
//!   points, each phase at least one step long, so labels never decrease.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semantic::STAGES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Patterns,
    Staged,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Patterns => "patterns",
            Task::Staged => "staged",
        })
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patterns" => Ok(Task::Patterns),
            "staged" => Ok(Task::Staged),
            other => Err(Error::invalid(format!(
                "unknown task {other:?} (expected \"patterns\" or \"staged\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSpec {
    pub task: Task,
    pub train_sequences: usize,
    pub test_sequences: usize,
    /// Steps (feature vectors) per sequence.
    pub sequence_length: usize,
    pub classes: usize,
    /// Fraction of features that are active in each class prototype.
    pub active_fraction: f64,
    pub low_rate: f64,
    pub high_rate: f64,
    /// Uniform per-feature jitter added to every step, `±jitter`.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            task: Task::Patterns,
            train_sequences: 200,
            test_sequences: 100,
            sequence_length: 1,
            classes: 3,
            active_fraction: 0.25,
            low_rate: 0.02,
            high_rate: 0.3,
            jitter: 0.02,
            seed: 0,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.train_sequences == 0 || self.test_sequences == 0 {
            return Err(Error::invalid("dataset sequence counts must be >= 1"));
        }
        if self.sequence_length == 0 {
            return Err(Error::invalid("dataset.sequence_length must be >= 1"));
        }
        match self.task {
            Task::Patterns if self.classes < 2 => {
                return Err(Error::invalid("dataset.classes must be >= 2 for the patterns task"))
            }
            Task::Staged if self.classes != STAGES => {
                return Err(Error::invalid(format!("the staged task has exactly {STAGES} classes")))
            }
            Task::Staged if self.sequence_length < STAGES => {
                return Err(Error::invalid(format!(
                    "staged sequences need at least {STAGES} steps"
                )))
            }
            _ => {}
        }
        for (name, x) in [
            ("active_fraction", self.active_fraction),
            ("low_rate", self.low_rate),
            ("high_rate", self.high_rate),
            ("jitter", self.jitter),
        ] {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::invalid(format!("dataset.{name} = {x} is not in [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    /// Unique within a generated train/test pair; selects the encoder stream.
    pub id: u64,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub task: Task,
    pub classes: usize,
    pub feature_size: usize,
    pub sequences: Vec<Sequence>,
}

const DATASET_FORMAT: &str = "lsm-dataset";
const DATASET_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    dataset: Dataset,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        for s in &self.sequences {
            if s.features.is_empty() || s.features.len() != s.labels.len() {
                return Err(Error::invalid(format!(
                    "sequence {} has {} steps but {} labels",
                    s.id,
                    s.features.len(),
                    s.labels.len()
                )));
            }
            if s.features.iter().any(|f| f.len() != self.feature_size) {
                return Err(Error::shape("dataset feature vector", self.feature_size, "other"));
            }
            if s.features.iter().flatten().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::invalid(format!("sequence {} has features outside [0, 1]", s.id)));
            }
            if s.labels.iter().any(|&y| y >= self.classes) {
                return Err(Error::invalid(format!("sequence {} has a label out of range", s.id)));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.sequences.iter().map(|s| s.labels.len()).sum()
    }

    /// Number of steps carrying each label.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for y in self.sequences.iter().flat_map(|s| &s.labels) {
            counts[*y] += 1;
        }
        counts
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = DatasetFile {
            format: DATASET_FORMAT.into(),
            version: DATASET_VERSION,
            dataset: self.clone(),
        };
        serde_json::to_writer(w, &file).map_err(|e| Error::format("dataset", e.to_string()))
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_reader(r).map_err(|e| Error::format("dataset", e.to_string()))?;
        if file.format != DATASET_FORMAT || file.version != DATASET_VERSION {
            return Err(Error::format(
                "dataset",
                format!("expected {DATASET_FORMAT} v{DATASET_VERSION}, got {} v{}", file.format, file.version),
            ));
        }
        file.dataset.validate()?;
        Ok(file.dataset)
    }
}

/// One rate prototype per class: `active_fraction` of the features at
/// `high_rate`, the rest at `low_rate`.
fn prototypes(spec: &DatasetSpec, feature_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let active = ((spec.active_fraction * feature_size as f64).round() as usize).min(feature_size);
    (0..spec.classes)
        .map(|_| {
            let mut proto = vec![spec.low_rate; feature_size];
            for i in rand::seq::index::sample(rng, feature_size, active) {
                proto[i] = spec.high_rate;
            }
            proto
        })
        .collect()
}

fn noisy(proto: &[f64], jitter: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    proto
        .iter()
        .map(|&p| {
            let d = if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
            (p + d).clamp(0.0, 1.0)
        })
        .collect()
}

fn labels_for(spec: &DatasetSpec, class: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = spec.sequence_length;
    match spec.task {
        Task::Patterns => vec![class; n],
        Task::Staged => {
            // change points c1 < c2 in 1..n, so every phase has >= 1 step
            let c1 = rng.gen_range(1..n - 1);
            let c2 = rng.gen_range(c1 + 1..n);
            (0..n).map(|t| (t >= c1) as usize + (t >= c2) as usize).collect()
        }
    }
}

fn split(
    spec: &DatasetSpec,
    protos: &[Vec<f64>],
    count: usize,
    first_id: u64,
    rng: &mut ChaCha8Rng,
) -> Vec<Sequence> {
    let mut classes: Vec<usize> = (0..count).map(|i| i % spec.classes).collect();
    classes.shuffle(rng);
    classes
        .into_iter()
        .enumerate()
        .map(|(i, class)| {
            let labels = labels_for(spec, class, rng);
            let features = labels.iter().map(|&y| noisy(&protos[y], spec.jitter, rng)).collect();
            Sequence {
                id: first_id + i as u64,
                features,
                labels,
            }
        })
        .collect()
}

/// Train and test sets sharing class prototypes. Test ids follow train ids.
pub fn generate(spec: &DatasetSpec, feature_size: usize) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    if feature_size == 0 {
        return Err(Error::invalid("feature size must be >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let protos = prototypes(spec, feature_size, &mut rng);
    let make = |sequences| Dataset {
        task: spec.task,
        classes: spec.classes,
        feature_size,
        sequences,
    };
    let train = split(spec, &protos, spec.train_sequences, 0, &mut rng);
    let test = split(spec, &protos, spec.test_sequences, spec.train_sequences as u64, &mut rng);
    Ok((make(train), make(test)))
}
