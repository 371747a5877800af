use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use lsm_core::bench::{run_bench, BenchSpec};
use lsm_core::config::ExperimentConfig;
use lsm_core::data::{generate, Dataset, Task};
use lsm_core::pipeline::{evaluate, run_experiment, Pipeline};
use lsm_core::readout::ReadoutModel;
use lsm_core::reservoir::{build as build_topology, ReservoirTopology};
use serde_json::{json, Value};

use crate::{Common, ReadoutFlags, Switch, TaskArg};

const MANIFEST: &str = "manifest.json";

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.reservoir.seed = seed;
        cfg.encoder.seed = seed;
        cfg.readout.seed = seed;
        cfg.train.seed = seed;
        cfg.dataset.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn apply_readout_flags(cfg: &mut ExperimentConfig, flags: &ReadoutFlags) -> Result<()> {
    if let Some(m) = flags.mask {
        cfg.pipeline.semantic_mask = m == Switch::On;
    }
    if let Some(tw) = flags.temporal_windows {
        cfg.pipeline.temporal_windows = tw;
    }
    if let Some(c) = flags.c_out {
        cfg.readout.c_out = c;
    }
    if let Some(e) = flags.epochs {
        cfg.train.epochs = e;
    }
    cfg.validate()?;
    Ok(())
}

/// Run directory with a manifest that accumulates one entry per command.
struct RunDir {
    path: PathBuf,
    files: Vec<String>,
}

impl RunDir {
    fn create(path: &Path) -> Result<Self> {
        fs::create_dir_all(path).with_context(|| format!("creating run directory {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<PathBuf> {
        let path = self.path.join(name);
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        f(&mut w)?;
        w.flush()?;
        self.files.push(name.to_string());
        Ok(path)
    }

    fn finish(self, command: &str, details: Value) -> Result<()> {
        let manifest_path = self.path.join(MANIFEST);
        let mut manifest: Value = match fs::read_to_string(&manifest_path) {
            Ok(text) => serde_json::from_str(&text).unwrap_or_else(|_| json!({})),
            Err(_) => json!({}),
        };
        let artifacts: Vec<Value> = self
            .files
            .iter()
            .map(|name| {
                let bytes = fs::metadata(self.path.join(name)).map(|m| m.len()).unwrap_or(0);
                json!({ "file": name, "bytes": bytes })
            })
            .collect();
        manifest["tool"] = json!(format!("lsm {}", env!("CARGO_PKG_VERSION")));
        manifest["commands"][command] = json!({ "artifacts": artifacts, "details": details });
        fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    }
}

fn save_config(run: &mut RunDir, cfg: &ExperimentConfig) -> Result<()> {
    let text = cfg.to_toml_string()?;
    run.write("config.toml", |w| Ok(w.write_all(text.as_bytes())?))?;
    Ok(())
}

fn read_topology(path: &Path) -> Result<ReservoirTopology> {
    let f = File::open(path).with_context(|| format!("opening topology {}", path.display()))?;
    Ok(ReservoirTopology::read_json(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?)
}

fn read_dataset(path: &Path) -> Result<Dataset> {
    let f = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    Ok(Dataset::read_json(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))?)
}

pub fn build(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    let topology = build_topology(&cfg.reservoir)?;
    let summary = topology.summary();
    let mut run = RunDir::create(&cfg.output_dir)?;
    save_config(&mut run, &cfg)?;
    let path = run.write("topology.json", |w| Ok(topology.write_json(w)?))?;
    println!("{}", summary.to_string().trim_end());
    println!("wrote {}", path.display());
    run.finish(
        "build",
        json!({
            "neurons": topology.neurons(),
            "synapses": topology.synapses().len(),
            "input_synapses": topology.input_synapses().len(),
            "t_max": topology.t_max(),
        }),
    )
}

pub fn gen_data(common: &Common, task: Option<TaskArg>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(t) = task {
        cfg.dataset.task = match t {
            TaskArg::Patterns => Task::Patterns,
            TaskArg::Staged => Task::Staged,
        };
        if cfg.dataset.task == Task::Staged && cfg.dataset.sequence_length < 3 {
            cfg.dataset.sequence_length = 8;
        }
    }
    cfg.validate()?;
    let (train, test) = generate(&cfg.dataset, cfg.reservoir.input_size)?;
    let mut run = RunDir::create(&cfg.output_dir)?;
    save_config(&mut run, &cfg)?;
    run.write("train.json", |w| Ok(train.write_json(w)?))?;
    run.write("test.json", |w| Ok(test.write_json(w)?))?;
    println!(
        "task {}: {} train / {} test sequences, {} / {} steps, label counts {:?} / {:?}",
        cfg.dataset.task,
        train.sequences.len(),
        test.sequences.len(),
        train.steps(),
        test.steps(),
        train.label_counts(),
        test.label_counts()
    );
    run.finish(
        "gen-data",
        json!({ "task": cfg.dataset.task.to_string(), "train_steps": train.steps(), "test_steps": test.steps() }),
    )
}

pub fn train(
    common: &Common,
    flags: &ReadoutFlags,
    topology: Option<PathBuf>,
    train: Option<PathBuf>,
    test: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(common)?;
    let topology = match &topology {
        Some(path) => Some(read_topology(path)?),
        None => None,
    };
    let loaded = match (train, test) {
        (Some(a), Some(b)) => {
            let (a, b) = (read_dataset(&a)?, read_dataset(&b)?);
            // the data files decide the task, not the config
            cfg.dataset.task = a.task;
            cfg.dataset.classes = a.classes;
            if a.task == Task::Staged {
                cfg.dataset.sequence_length = cfg.dataset.sequence_length.max(3);
            }
            Some((a, b))
        }
        (None, None) => None,
        _ => anyhow::bail!(lsm_core::Error::InvalidParameter(
            "--train and --test must be given together".into()
        )),
    };
    apply_readout_flags(&mut cfg, flags)?;
    let mut run = RunDir::create(&cfg.output_dir)?;
    save_config(&mut run, &cfg)?;
    let topology = match topology {
        Some(t) => t,
        None => {
            let t = build_topology(&cfg.reservoir)?;
            run.write("topology.json", |w| Ok(t.write_json(w)?))?;
            t
        }
    };
    let (train_set, test_set) = match loaded {
        Some(pair) => pair,
        None => generate(&cfg.dataset, topology.input_size())?,
    };
    let experiment = run_experiment(&cfg, Arc::new(topology), &train_set, &test_set)?;
    run.write("model.bin", |w| Ok(experiment.model.write_checkpoint(w)?))?;
    run.write("loss.csv", |w| Ok(experiment.training.write_csv(w)?))?;
    let report = &experiment.report;
    run.write("report.json", |w| {
        serde_json::to_writer_pretty(&mut *w, report)?;
        Ok(writeln!(w)?)
    })?;
    println!(
        "train accuracy {:.4}, test accuracy {:.4} (mask {}), baseline test accuracy {:.4}, final loss {:.5}",
        report.train_accuracy,
        report.test.accuracy,
        if report.test.semantic_mask { "on" } else { "off" },
        report.baseline_test_accuracy,
        report.final_loss
    );
    println!("confusion (rows true, columns predicted): {:?}", report.test.confusion);
    run.finish(
        "train",
        json!({ "test_accuracy": report.test.accuracy, "train_accuracy": report.train_accuracy }),
    )
}

pub fn eval(common: &Common, flags: &ReadoutFlags, model: &Path, topology: &Path, data: &Path) -> Result<()> {
    let mut cfg = load_config(common)?;
    let readout = {
        let f = File::open(model).with_context(|| format!("opening model {}", model.display()))?;
        ReadoutModel::read_checkpoint(BufReader::new(f)).with_context(|| format!("reading {}", model.display()))?
    };
    cfg.pipeline.temporal_windows = readout.in_channels();
    cfg.dataset.classes = readout.classes();
    let dataset = read_dataset(data)?;
    cfg.dataset.task = dataset.task;
    if cfg.dataset.task == Task::Staged {
        cfg.dataset.sequence_length = cfg.dataset.sequence_length.max(3);
    }
    apply_readout_flags(&mut cfg, flags)?;
    let topology = Arc::new(read_topology(topology)?);
    if readout.dims() != topology.dims() {
        anyhow::bail!(lsm_core::Error::ShapeMismatch {
            context: "model grid",
            expected: format!("{:?}", topology.dims()),
            actual: format!("{:?}", readout.dims()),
        });
    }
    let pipeline = Pipeline::from_config(&cfg, topology)?;
    let features = pipeline.dataset_features(&dataset)?;
    let report = evaluate(&readout, &features, cfg.pipeline.semantic_mask)?;
    let mut run = RunDir::create(&cfg.output_dir)?;
    run.write("eval.json", |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })?;
    println!(
        "accuracy {:.4} over {} steps (mask {}), monotone sequences {}/{}",
        report.accuracy,
        report.samples,
        if report.semantic_mask { "on" } else { "off" },
        report.monotone_sequences,
        report.sequences
    );
    println!("confusion (rows true, columns predicted): {:?}", report.confusion);
    run.finish(
        "eval",
        json!({ "accuracy": report.accuracy, "semantic_mask": report.semantic_mask, "data": data.display().to_string() }),
    )
}

pub fn bench(
    common: &Common,
    neurons: Option<Vec<usize>>,
    batches: Option<Vec<usize>>,
    steps: Option<usize>,
    reps: Option<usize>,
    warmup: Option<usize>,
) -> Result<()> {
    let cfg = load_config(common)?;
    let mut spec = BenchSpec {
        params: cfg.lif,
        seed: common.seed.unwrap_or(0),
        ..Default::default()
    };
    if let Some(n) = neurons {
        spec.neuron_counts = n;
    }
    if let Some(b) = batches {
        spec.batch_sizes = b;
    }
    if let Some(t) = steps {
        spec.steps = t;
    }
    if let Some(r) = reps {
        spec.repetitions = r;
    }
    if let Some(w) = warmup {
        spec.warmup = w;
    }
    let report = run_bench(&spec)?;
    let mut run = RunDir::create(&cfg.output_dir)?;
    let path = run.write("bench.csv", |w| Ok(report.write_csv(w)?))?;
    for &l in &spec.neuron_counts {
        for &b in &spec.batch_sizes {
            if let Some(s) = report.speedup(l, b) {
                println!("L={l:5} B={b:4} speedup {s:8.2}x");
            }
        }
    }
    println!("wrote {}", path.display());
    run.finish(
        "bench",
        json!({ "threads": report.metadata.threads, "rows": report.rows.len(), "seed": spec.seed }),
    )
}
