use std::sync::Arc;

use lsm_core::config::ExperimentConfig;
use lsm_core::data::{generate, Dataset, Task};
use lsm_core::liquid::LiquidState;
use lsm_core::pipeline::{evaluate, run_experiment, Pipeline};
use lsm_core::readout::ReadoutModel;
use lsm_core::reservoir::{build, ReservoirTopology};

fn small_config(task: Task) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.reservoir.dims = [4, 4, 4];
    cfg.reservoir.input_size = 64;
    cfg.reservoir.lambda = 2.0;
    cfg.reservoir.w_scale = 0.003;
    cfg.readout.c_out = 16;
    cfg.train.epochs = 150;
    cfg.dataset.task = task;
    cfg.dataset.train_sequences = 30;
    cfg.dataset.test_sequences = 30;
    if task == Task::Staged {
        cfg.dataset.sequence_length = 6;
        cfg.dataset.train_sequences = 12;
        cfg.dataset.test_sequences = 8;
    }
    cfg
}

fn setup(cfg: &ExperimentConfig) -> (Arc<ReservoirTopology>, Dataset, Dataset) {
    let topo = Arc::new(build(&cfg.reservoir).unwrap());
    let (train, test) = generate(&cfg.dataset, topo.input_size()).unwrap();
    (topo, train, test)
}

#[test]
fn parallel_features_match_one_sequence_at_a_time() {
    let cfg = small_config(Task::Patterns);
    let (topo, train, _) = setup(&cfg);
    let pipeline = Pipeline::from_config(&cfg, topo.clone()).unwrap();
    let batched = pipeline.dataset_features(&train).unwrap();
    let mut liquid = LiquidState::new(topo, cfg.lif).unwrap();
    // reverse order: a leaked liquid state or shared rng would show up here
    for (i, seq) in train.sequences.iter().enumerate().rev() {
        let one = pipeline.sequence_features(&mut liquid, seq).unwrap();
        assert_eq!(one.len(), batched[i].len());
        for (a, b) in one.iter().zip(&batched[i]) {
            assert_eq!(a.cube, b.cube);
            assert_eq!(a.input_rates, b.input_rates);
            assert_eq!(a.label, b.label);
        }
    }
}

#[test]
fn cube_shape_follows_temporal_windows() {
    let mut cfg = small_config(Task::Patterns);
    cfg.pipeline.temporal_windows = 5;
    let (topo, train, _) = setup(&cfg);
    let f = Pipeline::from_config(&cfg, topo).unwrap().dataset_features(&train).unwrap();
    let cube = &f[0][0].cube;
    assert_eq!(cube.channels(), 5);
    assert_eq!(cube.window(), 10);
    assert_eq!(cube.spatial(), [4, 4, 4]);
    assert!(cube.data().iter().all(|&x| (0.0..=1.0).contains(&x)));
    cfg.pipeline.temporal_windows = 7;
    assert!(cfg.validate().is_err());
}

#[test]
fn untrained_readout_is_not_better_than_guessing_the_majority() {
    let cfg = small_config(Task::Patterns);
    let (topo, _, test) = setup(&cfg);
    let pipeline = Pipeline::from_config(&cfg, topo.clone()).unwrap();
    let features = pipeline.dataset_features(&test).unwrap();
    let model = ReadoutModel::new(10, topo.dims(), 3, &cfg.readout).unwrap();
    let report = evaluate(&model, &features, false).unwrap();
    let majority = *test.label_counts().iter().max().unwrap() as f64 / test.steps() as f64;
    assert!(report.accuracy <= majority + 0.15, "{} vs {majority}", report.accuracy);
}

#[test]
fn patterns_are_learned_and_runs_repeat_exactly() {
    let cfg = small_config(Task::Patterns);
    let (topo, train, test) = setup(&cfg);
    let a = run_experiment(&cfg, topo.clone(), &train, &test).unwrap();
    assert!(a.report.test.accuracy >= 0.8, "{:?}", a.report.test);
    assert!(a.report.baseline_test_accuracy >= 0.7);
    let b = run_experiment(&cfg, topo, &train, &test).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(
        serde_json::to_string(&a.report).unwrap(),
        serde_json::to_string(&b.report).unwrap()
    );
}

#[test]
fn masked_staged_predictions_never_go_back() {
    let mut cfg = small_config(Task::Staged);
    cfg.pipeline.semantic_mask = true;
    let (topo, train, test) = setup(&cfg);
    let exp = run_experiment(&cfg, topo, &train, &test).unwrap();
    let t = &exp.report.test;
    assert!(t.semantic_mask);
    assert_eq!(t.monotone_sequences, t.sequences);
    assert_eq!(t.confusion.iter().flatten().sum::<usize>(), test.steps());
}

#[test]
fn artifacts_round_trip() {
    let cfg = small_config(Task::Staged);
    let (topo, train, _) = setup(&cfg);

    let mut bytes = Vec::new();
    topo.write_json(&mut bytes).unwrap();
    assert_eq!(&ReservoirTopology::read_json(bytes.as_slice()).unwrap(), topo.as_ref());

    let mut bytes = Vec::new();
    train.write_json(&mut bytes).unwrap();
    assert_eq!(Dataset::read_json(bytes.as_slice()).unwrap(), train);

    let model = ReadoutModel::new(10, topo.dims(), 3, &cfg.readout).unwrap();
    let mut bytes = Vec::new();
    model.write_checkpoint(&mut bytes).unwrap();
    assert_eq!(ReadoutModel::read_checkpoint(bytes.as_slice()).unwrap(), model);
    bytes.truncate(bytes.len() - 1);
    assert!(ReadoutModel::read_checkpoint(bytes.as_slice()).is_err());

    let text = cfg.to_toml_string().unwrap();
    assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
}

#[test]
fn mismatched_feature_size_is_a_shape_error() {
    let cfg = small_config(Task::Patterns);
    let (topo, mut train, _) = setup(&cfg);
    for seq in &mut train.sequences {
        for f in &mut seq.features {
            f.pop();
        }
    }
    train.feature_size -= 1;
    let err = Pipeline::from_config(&cfg, topo).unwrap().dataset_features(&train).unwrap_err();
    assert_eq!(err.category(), lsm_core::ErrorCategory::Validation, "{err}");
}
