use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sngd(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sngd"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, optimizer: &str) -> String {
    let text = format!(
        "dataset = synthetic:linear_teacher\nsynthetic.n = 200\nsynthetic.test_n = 50\n\
         synthetic.dim = 3\nmodel.hidden = 8\noptimizer = {optimizer}\nepochs = 2\n\
         sngd.fisher_interval = 2\noutput = out/{name}.csv\nrun_id = {name}\n"
    );
    let file = format!("{name}.cfg");
    fs::write(dir.join(&file), text).unwrap();
    file
}

#[test]
fn train_without_timing_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "run", "sngd");
    let first = sngd(&["train", "--config", &cfg, "--no-timing"], dir.path());
    assert!(
        first.status.success(),
        "{}",
        String::from_utf8_lossy(&first.stderr)
    );
    let a = fs::read(dir.path().join("out/run.csv")).unwrap();
    let second = sngd(
        &[
            "train",
            "--config",
            &cfg,
            "--no-timing",
            "--out",
            "again.csv",
        ],
        dir.path(),
    );
    assert!(second.status.success());
    assert_eq!(a, fs::read(dir.path().join("again.csv")).unwrap());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("run_id,optimizer,epoch,step,train_loss,test_loss,"));
    assert!(String::from_utf8_lossy(&first.stdout).contains("final train loss"));
}

#[test]
fn compare_prints_one_row_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "base", "sgd");
    let b = write_config(dir.path(), "natural", "sngd");
    let out = sngd(&["compare", &a, &b, "--out", "all.csv"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let table = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3, "{table}");
    assert!(lines[0].contains("overhead"));
    assert!(lines[1].starts_with("base") && lines[1].ends_with("1.00"));
    assert!(lines[2].starts_with("natural"));
    let csv = fs::read_to_string(dir.path().join("all.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn compare_rejects_a_single_config() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "only", "sgd");
    let out = sngd(&["compare", &a], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("at least two"));
}

#[test]
fn bad_config_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.cfg"),
        "dataset = synthetic:spiral\nlr = banana\n",
    )
    .unwrap();
    let out = sngd(&["train", "--config", "bad.cfg"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("banana"), "{err}");
}

#[test]
fn sqrt_bench_lists_every_solver() {
    let dir = tempfile::tempdir().unwrap();
    let out = sngd(
        &[
            "sqrt-bench",
            "--order",
            "16",
            "--cond",
            "1000",
            "--seed",
            "4",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for method in ["eigen_oracle", "denman_beavers", "newton_schulz"] {
        assert!(text.contains(method), "{text}");
    }
}
