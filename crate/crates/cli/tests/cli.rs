use std::path::Path;
use std::process::{Command, Output};

fn scatrec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scatrec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tiny_config() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/tiny.toml").to_string()
}

fn run_in(out: &Path, cmd: &str) -> Output {
    let out = out.display().to_string();
    scatrec(&[cmd, "--config", &tiny_config(), "--output", &out, "--single-thread"])
}

#[test]
fn full_run_writes_the_expected_layout() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), "run");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let root = dir.path();
    for f in [
        "realizations/train_000.img",
        "realizations/test_001.pgm",
        "realizations/provenance.toml",
        "models/estimator_00.bin",
        "models/estimator_01.bin",
        "models/training_trace.csv",
        "reconstructions/test_000/original.img",
        "reconstructions/test_000/projection.pgm",
        "reconstructions/test_000/iter1.img",
        "reconstructions/test_001/final.img",
        "reconstructions/test_001/trace.csv",
        "baselines/l1/test_000.img",
        "baselines/tv/test_001_objective.csv",
        "evaluation/metrics.csv",
        "evaluation/cokurtosis_final.pgm",
        "report/table.csv",
        "report/montage.pgm",
        "report/cokurtosis.pgm",
        "report/provenance.toml",
    ] {
        assert!(root.join(f).is_file(), "missing {f}");
    }
    assert!(!root.join("models/estimator_02.bin").exists());
    let table = std::fs::read_to_string(root.join("report/table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("experiment,mse,excess_kurtosis"));
    let sets: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(
        sets,
        [
            "tiny/original",
            "tiny/projection",
            "tiny/iter1",
            "tiny/final",
            "tiny/l1",
            "tiny/tv"
        ]
    );
    let prov = std::fs::read_to_string(root.join("models/provenance.toml")).unwrap();
    assert!(prov.contains("[config.solver]") && prov.contains("outer_iterations = 2"));
}

#[test]
fn generate_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(run_in(a.path(), "generate").status.success());
    assert!(run_in(b.path(), "generate").status.success());
    for f in ["realizations/train_003.img", "realizations/test_000.img"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap()
        );
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().display().to_string();
    let cfg = tiny_config();

    let o = scatrec(&["report", "--config", &cfg, "--output", &out]);
    assert_eq!(o.status.code(), Some(3), "report on an empty directory");
    let o = scatrec(&["train", "--config", &cfg, "--output", &out]);
    assert_eq!(o.status.code(), Some(3), "train without realizations");
    let o = scatrec(&["generate", "--config", &cfg, "--output", &out, "--n-train", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scatrec(&["generate", "--config", &cfg, "--set", "process.kind=potts"]);
    assert_eq!(o.status.code(), Some(2));
    let o = scatrec(&["generate", "--config", "/nonexistent.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reconstruct_without_models_is_a_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_in(dir.path(), "generate").status.success());
    assert_eq!(run_in(dir.path(), "reconstruct").status.code(), Some(3));
}
