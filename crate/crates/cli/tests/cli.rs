use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
schema_version = 1

[reservoir]
dims = [4, 4, 4]
input_size = 64
lambda = 2.0
w_scale = 0.003

[readout]
c_out = 8

[train]
epochs = 20

[dataset]
train_sequences = 20
test_sequences = 10
"#;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lsm-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn lsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsm")).args(args).output().unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, format!("{SMALL}{extra}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn build_is_byte_identical_for_a_fixed_seed() {
    let dir = scratch("rebuild");
    let cfg = small_config(&dir, "");
    let (a, b) = (dir.join("a"), dir.join("b"));
    ok(&lsm(&["build", "-c", &cfg, "--seed", "5", "-o", s(&a)]));
    ok(&lsm(&["build", "-c", &cfg, "--seed", "5", "-o", s(&b)]));
    assert_eq!(fs::read(a.join("topology.json")).unwrap(), fs::read(b.join("topology.json")).unwrap());
    let c = dir.join("c");
    ok(&lsm(&["build", "-c", &cfg, "--seed", "6", "-o", s(&c)]));
    assert_ne!(fs::read(a.join("topology.json")).unwrap(), fs::read(c.join("topology.json")).unwrap());

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    let artifacts = manifest["commands"]["build"]["artifacts"].as_array().unwrap();
    assert!(artifacts.iter().any(|a| a["file"] == "topology.json" && a["bytes"].as_u64().unwrap() > 0));
}

#[test]
fn vanishing_lambda_builds_an_unconnected_liquid() {
    let dir = scratch("lambda");
    let cfg = small_config(&dir, "").replace("small.toml", "tiny.toml");
    fs::write(&cfg, SMALL.replace("lambda = 2.0", "lambda = 1e-9")).unwrap();
    ok(&lsm(&["build", "-c", &cfg, "-o", s(&dir)]));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["commands"]["build"]["details"]["synapses"], 0);
}

#[test]
fn generate_train_and_evaluate() {
    let dir = scratch("flow");
    let cfg = small_config(&dir, "");
    ok(&lsm(&["build", "-c", &cfg, "-o", s(&dir)]));
    let out = lsm(&["gen-data", "-c", &cfg, "-o", s(&dir), "--task", "staged"]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("task staged"));
    let topo = dir.join("topology.json");
    let (train, test) = (dir.join("train.json"), dir.join("test.json"));
    ok(&lsm(&[
        "train", "-c", &cfg, "-o", s(&dir), "--topology", s(&topo), "--train", s(&train), "--test", s(&test),
        "--temporal-windows", "5", "--mask", "on",
    ]));
    for f in ["model.bin", "loss.csv", "report.json", "config.toml"] {
        assert!(dir.join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.join("loss.csv")).unwrap();
    assert!(csv.starts_with("epoch,loss,learning_rate"));
    assert_eq!(csv.lines().count(), 21);

    let model = dir.join("model.bin");
    ok(&lsm(&[
        "eval", "-c", &cfg, "-o", s(&dir), "--model", s(&model), "--topology", s(&topo), "--data", s(&test),
        "--mask", "on",
    ]));
    let eval: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("eval.json")).unwrap()).unwrap();
    assert_eq!(eval["monotone_sequences"], eval["sequences"]);

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    for cmd in ["build", "gen-data", "train", "eval"] {
        assert!(manifest["commands"][cmd].is_object(), "{cmd}");
    }
}

#[test]
fn bench_writes_csv_with_metadata() {
    let dir = scratch("bench");
    ok(&lsm(&[
        "bench", "-o", s(&dir), "--neurons", "10,50", "--batches", "1,2", "--steps", "5", "--reps", "3", "--warmup", "0",
    ]));
    let csv = fs::read_to_string(dir.join("bench.csv")).unwrap();
    let body: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "impl,L,B,T,median_ns,iqr_ns,reps");
    assert_eq!(body.len(), 1 + 2 * 2 * 2);
    assert!(csv.lines().any(|l| l.starts_with("# threads")));
}

#[test]
fn exit_codes_follow_error_category() {
    let dir = scratch("codes");

    let bad_toml = dir.join("bad.toml");
    fs::write(&bad_toml, "schema_version = 1\n[reservoir\n").unwrap();
    let out = lsm(&["build", "-c", s(&bad_toml), "-o", s(&dir)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.toml"));

    let unknown = dir.join("unknown.toml");
    fs::write(&unknown, "schema_version = 1\n[reservoir]\nlambada = 2.0\n").unwrap();
    assert_eq!(lsm(&["build", "-c", s(&unknown), "-o", s(&dir)]).status.code(), Some(2));

    let negative = dir.join("negative.toml");
    fs::write(&negative, "schema_version = 1\n[reservoir]\nlambda = -1.0\n").unwrap();
    assert_eq!(lsm(&["build", "-c", s(&negative), "-o", s(&dir)]).status.code(), Some(2));

    assert_eq!(lsm(&["build", "--no-such-flag"]).status.code(), Some(2));

    let missing = dir.join("missing.json");
    let out = lsm(&[
        "eval", "-o", s(&dir), "--model", s(&missing), "--topology", s(&missing), "--data", s(&missing),
    ]);
    assert_eq!(out.status.code(), Some(4));

    // a model trained on one grid evaluated against another
    let cfg = small_config(&dir, "");
    ok(&lsm(&["build", "-c", &cfg, "-o", s(&dir)]));
    ok(&lsm(&["gen-data", "-c", &cfg, "-o", s(&dir)]));
    ok(&lsm(&["train", "-c", &cfg, "-o", s(&dir), "--epochs", "1"]));
    let other = dir.join("other");
    let big = dir.join("big.toml");
    fs::write(&big, SMALL.replace("dims = [4, 4, 4]", "dims = [5, 4, 4]")).unwrap();
    ok(&lsm(&["build", "-c", s(&big), "-o", s(&other)]));
    let out = lsm(&[
        "eval", "-c", &cfg, "-o", s(&dir), "--model", s(&dir.join("model.bin")), "--topology",
        s(&other.join("topology.json")), "--data", s(&dir.join("test.json")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
