use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = "\
data.train_per_class = 4
data.test_per_class = 2
data.points = 128
model.widths = 8,16,16
model.centers = 16,4
model.group_sizes = 8,4
model.head = 16
train.batch_size = 8
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shufflepoint"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn setup() -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("tiny.cfg"), TINY).unwrap();
    dir
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn train_writes_metrics_checkpoint_and_echo() {
    let dir = setup();
    let o = run(dir.path(), &["--config", "tiny.cfg", "--seed", "7", "--out", "run", "train", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.path().join("run");
    let metrics = fs::read_to_string(out.join("metrics.csv")).unwrap();
    let lines: Vec<_> = metrics.lines().collect();
    assert_eq!(lines[0], "epoch,train_loss,cross_entropy,lmir,lr,test_oa,test_macc");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("1,"));
    assert!(fs::read(out.join("model.psn")).unwrap().starts_with(b"PSN1"));
    let echo = fs::read_to_string(out.join("config.resolved")).unwrap();
    assert!(echo.contains("seed = 7\n"));
    assert!(echo.contains("train.epochs = 1\n"));
    assert!(echo.contains("model.centers = 16,4\n"));
    let confusion = fs::read_to_string(out.join("confusion.csv")).unwrap();
    assert!(confusion.starts_with("true_class,sphere,cube,torus,cylinder\n"));
}

#[test]
fn rerun_from_echoed_config_is_identical() {
    let dir = setup();
    let a = run(dir.path(), &["--config", "tiny.cfg", "--seed", "3", "--out", "a", "train", "--epochs", "2"]);
    assert_eq!(code(&a), 0);
    let b = run(dir.path(), &["--config", "a/config.resolved", "--out", "b", "train"]);
    assert_eq!(code(&b), 0);
    for f in ["metrics.csv", "model.psn", "config.resolved", "confusion.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f} differs"
        );
    }
}

#[test]
fn eval_on_reduced_budget() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["--config", "tiny.cfg", "--out", "t", "train", "--epochs", "1"])), 0);
    let o = run(
        dir.path(),
        &["--config", "tiny.cfg", "--out", "e", "eval", "--checkpoint", "t/model.psn", "--points", "64"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = fs::read_to_string(dir.path().join("e/eval.csv")).unwrap();
    let mut lines = eval.lines();
    assert_eq!(lines.next(), Some("points,eval_seed,test_oa,test_macc"));
    let row: Vec<_> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "64");
    let oa: f64 = row[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&oa));
}

#[test]
fn eval_against_wrong_architecture_is_a_data_error() {
    let dir = setup();
    assert_eq!(code(&run(dir.path(), &["--config", "tiny.cfg", "--out", "t", "train", "--epochs", "1"])), 0);
    let o = run(dir.path(), &["--out", "e", "eval", "--checkpoint", "t/model.psn"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = setup();
    fs::write(dir.path().join("bad.cfg"), "train.epochs = 1\nmodel.depth = 9\n").unwrap();
    let o = run(dir.path(), &["--config", "bad.cfg", "train"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(err.contains("model.depth"), "{err}");
}

#[test]
fn invalid_value_and_missing_config_exit_2() {
    let dir = setup();
    fs::write(dir.path().join("bad.cfg"), "train.lr = fast\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["--config", "bad.cfg", "train"])), 2);
    assert_eq!(code(&run(dir.path(), &["--config", "nowhere.cfg", "train"])), 2);
    assert_eq!(code(&run(dir.path(), &["sample", "--input", "p.xyz", "--method", "grid"])), 2);
}

#[test]
fn malformed_or_missing_data_exits_3() {
    let dir = setup();
    fs::write(dir.path().join("short.xyz"), "0 0 0\n1 2\n").unwrap();
    let o = run(dir.path(), &["--out", "s", "sample", "--input", "short.xyz"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    fs::write(dir.path().join("cut.bin"), b"SPC1\x04\x00\x00\x00\x03\x00\x00\x00").unwrap();
    assert_eq!(code(&run(dir.path(), &["--out", "s", "sample", "--input", "cut.bin"])), 3);

    let o = run(dir.path(), &["--out", "d", "train", "--data", "no_such_dir"]);
    assert_eq!(code(&o), 3);
}

#[test]
fn sample_writes_indices_and_points() {
    let dir = setup();
    let mut text = String::new();
    for i in 0..50 {
        let t = i as f64 * 0.1;
        text.push_str(&format!("{} {} {}\n", t.cos(), t.sin(), t));
    }
    fs::write(dir.path().join("helix.xyz"), text).unwrap();
    for method in ["fps", "cluster_fps"] {
        let out = format!("s_{method}");
        let o = run(
            dir.path(),
            &["--out", &out, "sample", "--input", "helix.xyz", "--count", "10", "--method", method, "--clusters", "2"],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let idx = fs::read_to_string(dir.path().join(&out).join("indices.csv")).unwrap();
        assert_eq!(idx.lines().count(), 11);
        assert_eq!(idx.lines().next(), Some("order,index"));
        let pts = fs::read_to_string(dir.path().join(&out).join("sampled.xyz")).unwrap();
        assert_eq!(pts.lines().count(), 10);
    }
}

#[test]
fn bench_metrics_reproduce_across_runs_and_thread_counts() {
    let dir = setup();
    let args = |out: &'static str, threads: &'static str| {
        [
            "--out", out, "--threads", threads, "--seed", "5", "bench-sampling", "--sizes", "3000:200,5:9",
            "--repetitions", "2", "--clusters", "4",
        ]
    };
    assert_eq!(code(&run(dir.path(), &args("b1", "1"))), 0);
    assert_eq!(code(&run(dir.path(), &args("b2", "1"))), 0);
    assert_eq!(code(&run(dir.path(), &args("b3", "3"))), 0);
    let read = |d: &str| fs::read_to_string(dir.path().join(d).join("bench_metrics.csv")).unwrap();
    assert_eq!(read("b1"), read("b2"));
    let strip_threads = |s: String| -> Vec<String> {
        s.lines()
            .map(|l| {
                let mut f: Vec<&str> = l.split(',').collect();
                f.remove(4);
                f.join(",")
            })
            .collect()
    };
    assert_eq!(strip_threads(read("b1")), strip_threads(read("b3")));
    let timing = fs::read_to_string(dir.path().join("b1/bench.csv")).unwrap();
    assert!(timing.lines().any(|l| l.starts_with("skipped,5,9,")));
    assert_eq!(timing.lines().count(), 4);
}

#[test]
fn ablate_tabulates_every_arm() {
    let dir = setup();
    let o = run(
        dir.path(),
        &["--config", "tiny.cfg", "--out", "ab", "ablate", "--seeds", "1", "--epochs", "1", "--arms", "no_nefl,her_lmir"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = fs::read_to_string(dir.path().join("ab/ablation.csv")).unwrap();
    assert_eq!(rows.lines().count(), 3);
    let summary = fs::read_to_string(dir.path().join("ab/ablation_summary.csv")).unwrap();
    let lines: Vec<_> = summary.lines().collect();
    assert!(lines[1].starts_with("no_nefl,1,"));
    assert!(lines[2].starts_with("her_lmir,1,"));
    assert_eq!(code(&run(dir.path(), &["ablate", "--arms", "everything"])), 2);
}

#[test]
fn directory_dataset_trains() {
    let dir = setup();
    for (split, n) in [("train", 3), ("test", 1)] {
        for (class, scale) in [("small", 0.5), ("large", 2.0)] {
            let d = dir.path().join("ds").join(split).join(class);
            fs::create_dir_all(&d).unwrap();
            for k in 0..n {
                let mut text = String::new();
                for i in 0..40 {
                    let t = (i + k) as f64 * 0.37;
                    text.push_str(&format!("{} {} {}\n", scale * t.cos(), scale * t.sin(), scale * (t * 0.5).sin()));
                }
                fs::write(d.join(format!("{k}.xyz")), text).unwrap();
            }
        }
    }
    let o = run(dir.path(), &["--config", "tiny.cfg", "--out", "d", "train", "--data", "ds", "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let confusion = fs::read_to_string(dir.path().join("d/confusion.csv")).unwrap();
    assert!(confusion.starts_with("true_class,large,small\n"));
}
