use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rewire(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rewire"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

const SMALL: &[&str] = &[
    "--dataset",
    "sbm",
    "--set",
    "sbm.block_size=30",
    "--set",
    "sbm.p_in=0.15",
    "--set",
    "sbm.p_out=0.02",
    "--epochs",
    "20",
    "--set",
    "explainer.epochs=5",
    "--jobs",
    "1",
];

fn with_small<'a>(head: &[&'a str]) -> Vec<&'a str> {
    head.iter().copied().chain(SMALL.iter().copied()).collect()
}

fn manifest_hash(run: &Path, file: &str) -> String {
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    m["files"][file].as_str().unwrap().to_string()
}

#[test]
fn usage_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(rewire(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(rewire(dir.path(), &["train", "--set", "colour=red"]).status.code(), Some(1));
    assert_eq!(rewire(dir.path(), &["train", "--seed", "abc"]).status.code(), Some(1));
    assert_eq!(rewire(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_dataset_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = rewire(dir.path(), &["train", "--dataset", "cora", "--data-dir", "no/such/dir"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("no/such/dir"), "{err}");
}

#[test]
fn training_is_reproducible_from_flags_and_effective_config() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = ok(&rewire(p, &with_small(&["train", "--seed", "1", "--run-dir", "a"])));
    assert!(out.contains("clean MCR"), "{out}");
    ok(&rewire(p, &with_small(&["train", "--seed", "1", "--run-dir", "b"])));
    let h = manifest_hash(&p.join("a"), "model.ckpt");
    assert_eq!(h, manifest_hash(&p.join("b"), "model.ckpt"));
    ok(&rewire(p, &["train", "--config", "a/config.txt", "--run-dir", "c"]));
    assert_eq!(h, manifest_hash(&p.join("c"), "model.ckpt"));
    assert_eq!(
        fs::read_to_string(p.join("a/config.txt")).unwrap(),
        fs::read_to_string(p.join("c/config.txt")).unwrap()
    );
    ok(&rewire(p, &with_small(&["train", "--seed", "2", "--run-dir", "d"])));
    assert_ne!(h, manifest_hash(&p.join("d"), "model.ckpt"));
}

#[test]
fn identity_attack_keeps_clean_mcr() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&rewire(p, &with_small(&["train", "--run-dir", "t"])));
    ok(&rewire(
        p,
        &with_small(&["attack", "--checkpoint", "t/model.ckpt", "--gamma", "1", "--total", "0", "--run-dir", "a"]),
    ));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("a/report.json")).unwrap()).unwrap();
    assert_eq!(r["mcr_attacked"], r["mcr_clean"]);
    assert_eq!(r["n_ins"], 0);
    assert_eq!(fs::read_to_string(p.join("a/plan.txt")).unwrap().lines().filter(|l| !l.starts_with('#')).count(), 0);

    ok(&rewire(
        p,
        &with_small(&["attack", "--checkpoint", "t/model.ckpt", "--gamma", "3", "--edr", "0.1", "--run-dir", "b"]),
    ));
    let r: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("b/report.json")).unwrap()).unwrap();
    assert!(r["n_ins"].as_u64().unwrap() > r["n_del"].as_u64().unwrap());
    for f in ["plan.txt", "rewired.bin", "mask.txt", "degree_clean.csv", "projection_attacked.csv"] {
        assert!(p.join("b").join(f).is_file(), "{f}");
    }
    // The written mask can be reused.
    ok(&rewire(
        p,
        &with_small(&["attack", "--checkpoint", "t/model.ckpt", "--mask", "b/mask.txt", "--gamma", "3", "--edr", "0.1", "--run-dir", "c"]),
    ));
    assert_eq!(
        fs::read_to_string(p.join("b/plan.txt")).unwrap(),
        fs::read_to_string(p.join("c/plan.txt")).unwrap()
    );
}

#[test]
fn attack_without_checkpoint_fails_at_runtime() {
    let dir = tempfile::tempdir().unwrap();
    let out = rewire(dir.path(), &with_small(&["attack", "--run-dir", "x"]));
    assert_eq!(out.status.code(), Some(2));
    let m = fs::read_to_string(dir.path().join("x/manifest.json")).unwrap();
    assert!(m.contains("failed"));
    let out = rewire(dir.path(), &with_small(&["explain", "--checkpoint", "missing.ckpt"]));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_rows_and_rerun_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let args = |run: &'static str| {
        with_small(&["sweep", "--gammas", "1,2,3", "--seeds", "0,1", "--budget", "total:12", "--run-dir", run])
    };
    ok(&rewire(p, &args("s1")));
    ok(&rewire(p, &args("s2")));
    let a = fs::read_to_string(p.join("s1/sweep.csv")).unwrap();
    assert_eq!(a.lines().count(), 1 + 3 * 2 * 2);
    assert_eq!(a, fs::read_to_string(p.join("s2/sweep.csv")).unwrap());
    let out = ok(&rewire(p, &["report", "s1", "--run-dir", "r"]));
    assert!(out.contains("slope vs gamma"), "{out}");
    assert!(p.join("r/summary.csv").is_file());
}

#[test]
fn failed_cells_still_produce_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let mut args = with_small(&["sweep", "--gammas", "2", "--seeds", "0", "--budget", "total:6", "--run-dir", "s"]);
    args.extend(["--set", "sbm.blocks=1"]);
    ok(&rewire(p, &args));
    let csv = fs::read_to_string(p.join("s/sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().skip(1).all(|l| l.contains("failed: empty candidate pool")), "{csv}");
}

#[test]
fn generated_graph_can_be_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let a = ok(&rewire(p, &with_small(&["gen-sbm", "--run-dir", "g"])));
    let b = ok(&rewire(p, &["ingest", "--dataset", "container:g/graph.bin", "--run-dir", "i"]));
    let c = ok(&rewire(p, &["ingest", "--dataset", "plain:g/plain", "--run-dir", "j"]));
    let stats = |s: &str| s.lines().next().unwrap().split_once(": ").unwrap().1.to_string();
    assert_eq!(stats(&a), stats(&b));
    assert_eq!(stats(&a), stats(&c));
    assert_eq!(manifest_hash(&p.join("g"), "graph.bin"), manifest_hash(&p.join("i"), "graph.bin"));
}
