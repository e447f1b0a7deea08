use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

fn feddist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feddist"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tiny_config() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.toml")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn tiny_run_finishes_quickly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let started = Instant::now();
    let o = feddist(&["run", "--config", path(&tiny_config()), "--out", path(&out)]);
    let elapsed = started.elapsed();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    assert!(stdout(&o).starts_with("feddist round 3:"), "{}", stdout(&o));
    for f in [
        "manifest.json",
        "rounds.csv",
        "rounds.jsonl",
        "final_model.fdw",
        "final_shape.txt",
    ] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
}

#[test]
fn manifest_rerun_reproduces_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = feddist(&[
        "run",
        "--config",
        path(&tiny_config()),
        "--out",
        path(&a),
        "--seed",
        "7",
    ]);
    assert!(first.status.success());
    let second = feddist(&[
        "--threads",
        "1",
        "run",
        "--manifest",
        path(&a),
        "--out",
        path(&b),
    ]);
    assert!(
        second.status.success(),
        "{}",
        String::from_utf8_lossy(&second.stderr)
    );
    assert_eq!(
        fs::read(a.join("rounds.csv")).unwrap(),
        fs::read(b.join("rounds.csv")).unwrap()
    );
}

#[test]
fn compare_shape_and_ablation() {
    let tmp = tempfile::tempdir().unwrap();
    let (grown, ablation) = (tmp.path().join("grown"), tmp.path().join("ablation"));
    assert!(feddist(&[
        "run",
        "--config",
        path(&tiny_config()),
        "--out",
        path(&grown)
    ])
    .status
    .success());
    let o = feddist(&[
        "run",
        "--config",
        path(&tiny_config()),
        "--out",
        path(&ablation),
        "--final-shape-from",
        path(&grown),
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("fedavg"), "{}", stdout(&o));

    let table = feddist(&["compare", path(&grown), path(&ablation)]);
    assert!(table.status.success());
    let text = stdout(&table);
    assert!(
        text.contains("feddist") && text.contains("fedavg"),
        "{text}"
    );

    let shape = feddist(&["shape", path(&grown.join("final_model.fdw"))]);
    assert!(shape.status.success());
    assert_eq!(
        stdout(&shape),
        fs::read_to_string(grown.join("final_shape.txt")).unwrap()
    );

    assert!(!feddist(&["compare", path(&grown)]).status.success());
}

#[test]
fn validate_reports_ok_and_errors() {
    let o = feddist(&["validate", "--config", path(&tiny_config())]);
    assert!(o.status.success());
    assert!(
        stdout(&o).starts_with("ok: feddist over 2 clients, 3 rounds"),
        "{}",
        stdout(&o)
    );

    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    fs::write(
        &bad,
        "algorithm = \"fedavg\"\nfoo = 1\n[data.synthetic]\nclients = 2\n",
    )
    .unwrap();
    let o = feddist(&["validate", "--config", path(&bad)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("foo"), "{err}");

    let o = feddist(&["run", "--out", path(tmp.path())]);
    assert!(!o.status.success());
}
