use std::path::Path;
use std::process::{Command, Output};

fn fdimit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdimit"))
        .arg("--workdir")
        .arg(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn body(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn same_seed_writes_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = fdimit(d.path(), &["gen-data", "--seed", "7", "--samples", "1500"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["data/train.csv", "data/test.csv", "config.toml"] {
        let (x, y) = (std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
        assert_eq!(x, y, "{f} differs");
    }
    let o = fdimit(a.path(), &["gen-data", "--seed", "8", "--samples", "1500"]);
    assert!(o.status.success());
    assert_ne!(body(&a.path().join("data/train.csv")), body(&b.path().join("data/train.csv")));
}

#[test]
fn samples_split_evenly_across_partitions() {
    let d = tempfile::tempdir().unwrap();
    let o = fdimit(d.path(), &["gen-data", "--samples", "300"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(d.path().join("data/train.csv")).unwrap();
    assert!(text.starts_with("# fs="));
    assert!(text.contains("# config_hash=") && text.contains("# seed="));
    let mut counts = [0usize; 3];
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let label: usize = line.rsplit(',').next().unwrap().parse().unwrap();
        counts[label - 1] += 1;
    }
    assert_eq!(counts, [100, 100, 100]);
    let summary = std::fs::read_to_string(d.path().join("reports/summary.txt")).unwrap();
    assert!(summary.contains("gen_data.partition_sizes=100/100/100"));
}

#[test]
fn missing_upstream_names_the_prior_step() {
    let d = tempfile::tempdir().unwrap();
    let o = fdimit(d.path(), &["label"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("fdimit gen-data"), "{}", stderr(&o));

    let o = fdimit(d.path(), &["mitigate", "--scenario", "1"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("fdimit gen-data"), "{}", stderr(&o));

    assert!(fdimit(d.path(), &["gen-data", "--samples", "300"]).status.success());
    let o = fdimit(d.path(), &["compare"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("fdimit label"), "{}", stderr(&o));
    let o = fdimit(d.path(), &["assign"]);
    assert!(stderr(&o).contains("fdimit label"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(fdimit(d.path(), &["--preset", "huge", "gen-data"]).status.code(), Some(2));
    assert_eq!(fdimit(d.path(), &["--config", "absent.toml", "gen-data"]).status.code(), Some(2));
    std::fs::write(d.path().join("bad.toml"), "seed = \"x\"\n").unwrap();
    assert_eq!(fdimit(d.path(), &["--config", "bad.toml", "gen-data"]).status.code(), Some(2));
    assert_eq!(fdimit(d.path(), &["gen-data", "--samples", "301"]).status.code(), Some(2));
    assert_eq!(fdimit(d.path(), &["--jobs", "0", "gen-data"]).status.code(), Some(2));
}

#[test]
fn stale_artifacts_are_a_config_error() {
    let d = tempfile::tempdir().unwrap();
    assert!(fdimit(d.path(), &["gen-data", "--samples", "300"]).status.success());
    let o = fdimit(d.path(), &["--preset", "desk", "label"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("rerun `fdimit gen-data`"), "{}", stderr(&o));
}

#[test]
fn saved_config_round_trips() {
    let d = tempfile::tempdir().unwrap();
    assert!(fdimit(d.path(), &["--preset", "paper", "gen-data", "--samples", "600"]).status.success());
    let o = fdimit(d.path(), &["show-config"]);
    assert!(o.status.success());
    let shown = String::from_utf8(o.stdout).unwrap();
    assert!(shown.contains("preset = \"paper\""));
    assert!(shown.contains("total_samples = 600"));
}
