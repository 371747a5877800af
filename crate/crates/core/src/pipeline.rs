//! encode → liquid → feature cube → readout, sequence by sequence.
//!
//! Every step of a sequence is one feature vector, Poisson-encoded into one
//! encoding window and streamed through the liquid. The liquid is reset at
//! sequence boundaries only, so later steps see the echo of earlier ones.
//! Each step's window of liquid activity becomes one labelled cube.
//!
//! Sequences are independent and processed in parallel, each worker owning
//! its own [`LiquidState`]. Every sequence draws its input spikes from its
//! own ChaCha stream (selected by the sequence id), so results do not
//! depend on scheduling.

use std::sync::Arc;

use ndarray::Array2;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::LogisticRegression;
use crate::config::ExperimentConfig;
use crate::data::{Dataset, Sequence};
use crate::error::{Error, Result};
use crate::lif::LifParams;
use crate::liquid::LiquidState;
use crate::readout::{self, windowed_cube, FeatureCube, ReadoutModel, Sample, TrainReport};
use crate::reservoir::ReservoirTopology;
use crate::semantic::{argmax, decode_sequence};
use crate::spike::{encode_with_rng, rate_summary, EncoderConfig};

/// Features of one sequence step.
#[derive(Debug, Clone)]
pub struct StepFeatures {
    pub cube: FeatureCube,
    /// Mean rate of every input neuron over the encoding window.
    pub input_rates: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    topology: Arc<ReservoirTopology>,
    lif: LifParams,
    encoder: EncoderConfig,
    window: usize,
}

impl Pipeline {
    pub fn new(
        topology: Arc<ReservoirTopology>,
        lif: LifParams,
        encoder: EncoderConfig,
        temporal_windows: usize,
    ) -> Result<Self> {
        encoder.validate()?;
        lif.validate()?;
        if temporal_windows == 0 || encoder.window % temporal_windows != 0 {
            return Err(Error::invalid(format!(
                "temporal windows {temporal_windows} must divide the encoding window {}",
                encoder.window
            )));
        }
        Ok(Self {
            topology,
            lif,
            encoder,
            window: encoder.window / temporal_windows,
        })
    }

    pub fn from_config(cfg: &ExperimentConfig, topology: Arc<ReservoirTopology>) -> Result<Self> {
        Self::new(topology, cfg.lif, cfg.encoder, cfg.pipeline.temporal_windows)
    }

    pub fn topology(&self) -> &Arc<ReservoirTopology> {
        &self.topology
    }

    pub fn temporal_windows(&self) -> usize {
        self.encoder.window / self.window
    }

    fn check_dataset(&self, ds: &Dataset) -> Result<()> {
        ds.validate()?;
        if ds.feature_size != self.topology.input_size() {
            return Err(Error::shape("dataset feature size", self.topology.input_size(), ds.feature_size));
        }
        Ok(())
    }

    /// Resets `liquid`, then streams every step of `seq` through it.
    pub fn sequence_features(&self, liquid: &mut LiquidState, seq: &Sequence) -> Result<Vec<StepFeatures>> {
        liquid.reset();
        let mut rng = ChaCha8Rng::seed_from_u64(self.encoder.seed);
        rng.set_stream(seq.id);
        seq.features
            .iter()
            .zip(&seq.labels)
            .map(|(f, &label)| {
                let input = encode_with_rng(f, &self.encoder, &mut rng)?;
                let raster = liquid.run_sequence(&input)?;
                Ok(StepFeatures {
                    cube: windowed_cube(&raster, self.topology.dims(), self.window)?,
                    input_rates: rate_summary(&input)?,
                    label,
                })
            })
            .collect()
    }

    /// Features of every sequence, in dataset order.
    pub fn dataset_features(&self, ds: &Dataset) -> Result<Vec<Vec<StepFeatures>>> {
        self.check_dataset(ds)?;
        ds.sequences
            .par_iter()
            .map_init(
                || LiquidState::new(self.topology.clone(), self.lif),
                |liquid, seq| match liquid {
                    Ok(liquid) => self.sequence_features(liquid, seq),
                    Err(e) => Err(Error::invalid(e.to_string())),
                },
            )
            .collect()
    }
}

pub fn samples(features: &[Vec<StepFeatures>]) -> Vec<Sample> {
    features
        .iter()
        .flatten()
        .map(|s| Sample {
            cube: s.cube.clone(),
            label: s.label,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub samples: usize,
    /// `confusion[true][predicted]`
    pub confusion: Vec<Vec<usize>>,
    pub semantic_mask: bool,
    pub sequences: usize,
    /// Sequences whose predicted labels never decrease.
    pub monotone_sequences: usize,
}

/// Per-step predictions, optionally decoded with the monotone stage mask.
pub fn predict_sequences(
    model: &ReadoutModel,
    features: &[Vec<StepFeatures>],
    semantic_mask: bool,
) -> Result<Vec<Vec<usize>>> {
    features
        .par_iter()
        .map(|seq| {
            let probs: Vec<Vec<f64>> = seq
                .iter()
                .map(|s| Ok(model.forward(&s.cube)?.to_vec()))
                .collect::<Result<_>>()?;
            if semantic_mask {
                decode_sequence(&probs)
            } else {
                Ok(probs.iter().map(|p| argmax(p)).collect())
            }
        })
        .collect()
}

pub fn evaluate(model: &ReadoutModel, features: &[Vec<StepFeatures>], semantic_mask: bool) -> Result<EvalReport> {
    let predictions = predict_sequences(model, features, semantic_mask)?;
    let k = model.classes();
    let mut confusion = vec![vec![0; k]; k];
    let mut correct = 0;
    let mut total = 0;
    for (seq, pred) in features.iter().zip(&predictions) {
        for (s, &p) in seq.iter().zip(pred) {
            if s.label >= k {
                return Err(Error::invalid(format!("label {} out of range for {k} classes", s.label)));
            }
            confusion[s.label][p] += 1;
            correct += (s.label == p) as usize;
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::invalid("evaluation set is empty"));
    }
    Ok(EvalReport {
        accuracy: correct as f64 / total as f64,
        samples: total,
        confusion,
        semantic_mask,
        sequences: predictions.len(),
        monotone_sequences: predictions
            .iter()
            .filter(|p| p.windows(2).all(|w| w[0] <= w[1]))
            .count(),
    })
}

fn rate_matrix(features: &[Vec<StepFeatures>]) -> (Array2<f64>, Vec<usize>) {
    let rows: Vec<&StepFeatures> = features.iter().flatten().collect();
    let d = rows.first().map_or(0, |s| s.input_rates.len());
    let x = Array2::from_shape_fn((rows.len(), d), |(i, j)| rows[i].input_rates[j]);
    (x, rows.iter().map(|s| s.label).collect())
}

/// Logistic regression on mean input rates: `(train accuracy, test accuracy)`.
pub fn baseline_accuracy(
    train: &[Vec<StepFeatures>],
    test: &[Vec<StepFeatures>],
    classes: usize,
    epochs: usize,
    learning_rate: f64,
) -> Result<(f64, f64)> {
    let (xtr, ytr) = rate_matrix(train);
    let (xte, yte) = rate_matrix(test);
    let model = LogisticRegression::fit(xtr.view(), &ytr, classes, epochs, learning_rate)?;
    Ok((model.accuracy(xtr.view(), &ytr)?, model.accuracy(xte.view(), &yte)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub task: String,
    pub temporal_windows: usize,
    pub c_out: usize,
    pub epochs: usize,
    pub train_samples: usize,
    pub final_loss: f64,
    pub losses: Vec<f64>,
    pub train_accuracy: f64,
    pub test: EvalReport,
    pub baseline_train_accuracy: f64,
    pub baseline_test_accuracy: f64,
}

pub struct Experiment {
    pub model: ReadoutModel,
    pub training: TrainReport,
    pub report: ExperimentReport,
}

/// Full run on prepared data: features, readout training, evaluation and
/// the baseline.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    topology: Arc<ReservoirTopology>,
    train: &Dataset,
    test: &Dataset,
) -> Result<Experiment> {
    cfg.validate()?;
    if train.classes != test.classes {
        return Err(Error::invalid("train and test sets disagree on the class count"));
    }
    let pipeline = Pipeline::from_config(cfg, topology.clone())?;
    let train_features = pipeline.dataset_features(train)?;
    let test_features = pipeline.dataset_features(test)?;
    let train_samples = samples(&train_features);
    let mut model = ReadoutModel::new(
        pipeline.temporal_windows(),
        topology.dims(),
        train.classes,
        &cfg.readout,
    )?;
    let training = readout::train(&mut model, &train_samples, &cfg.train)?;
    let train_accuracy = readout::accuracy(&model, &train_samples)?;
    let test_report = evaluate(&model, &test_features, cfg.pipeline.semantic_mask)?;
    let (baseline_train, baseline_test) = baseline_accuracy(
        &train_features,
        &test_features,
        train.classes,
        cfg.pipeline.baseline_epochs,
        cfg.pipeline.baseline_learning_rate,
    )?;
    let report = ExperimentReport {
        task: train.task.to_string(),
        temporal_windows: pipeline.temporal_windows(),
        c_out: model.c_out(),
        epochs: cfg.train.epochs,
        train_samples: train_samples.len(),
        final_loss: training.losses.last().copied().unwrap_or(f64::NAN),
        losses: training.losses.clone(),
        train_accuracy,
        test: test_report,
        baseline_train_accuracy: baseline_train,
        baseline_test_accuracy: baseline_test,
    };
    Ok(Experiment {
        model,
        training,
        report,
    })
}
