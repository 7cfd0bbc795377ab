use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ladderq_core::domain::validate_ladder;
use ladderq_core::ladder::LadderDocument;
use ladderq_core::ConfigSpace;

const TINY: &str = r#"
seed = 3
segments = 6
seeds = [1, 2]
noise = [0.1, 0.2]
[dqn]
episodes = 4
batch_size = 16
hidden_layers = [32, 16]
[predictors.forest]
n_trees = 10
max_depth = 6
"#;

fn ladderq(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ladderq"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ladderq(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    ladderq(dir, args).status.code().expect("exit code")
}

fn tiny_dir() -> tempfile::TempDir {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("tiny.toml"), TINY).unwrap();
    d
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect()
}

fn pipeline(dir: &Path, out: &str) {
    let base = ["--config", "tiny.toml", "--out", out];
    for cmd in [
        "synth",
        "train-predictors",
        "train-agent",
        "build",
        "evaluate",
        "robustness",
    ] {
        let mut args = base.to_vec();
        args.push(cmd);
        ok(dir, &args);
    }
}

#[test]
fn synth_is_deterministic_with_full_grid() {
    let d = tempfile::tempdir().unwrap();
    ok(d.path(), &["synth", "--segments", "20", "--seed", "7", "--out", "a"]);
    ok(d.path(), &["synth", "--segments", "20", "--seed", "7", "--out", "b"]);
    for f in ["features.csv", "measurements.csv"] {
        let a = fs::read(d.path().join("a").join(f)).unwrap();
        let b = fs::read(d.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs");
    }
    let text = fs::read_to_string(d.path().join("a/measurements.csv")).unwrap();
    assert_eq!(text.lines().count(), 20 * 246 + 1);
}

#[test]
fn synth_into_a_file_fails_without_output() {
    let d = tempfile::tempdir().unwrap();
    fs::write(d.path().join("blocker"), "x").unwrap();
    let c = code(d.path(), &["synth", "--segments", "2", "--out", "blocker/sub"]);
    assert_ne!(c, 0);
    let entries: Vec<PathBuf> = fs::read_dir(d.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(entries, [d.path().join("blocker")]);
}

#[test]
fn full_pipeline_outputs_and_determinism() {
    let d = tiny_dir();
    let dir = d.path();
    pipeline(dir, "r1");
    pipeline(dir, "r2");

    let metrics = csv_rows(&dir.join("r1/predictor_metrics.csv"));
    let targets: Vec<&str> = metrics.iter().map(|r| &r[0]).collect();
    assert_eq!(targets, ["dec_time", "quality_xpsnr", "bitrate"]);

    assert_eq!(csv_rows(&dir.join("r1/trace.csv")).len(), 4);

    let space = ConfigSpace::default();
    let ladders = dir.join("r1/ladders");
    let mut n = 0;
    for e in fs::read_dir(&ladders).unwrap() {
        let doc: LadderDocument = serde_json::from_slice(&fs::read(e.unwrap().path()).unwrap()).unwrap();
        let ladder = doc.ladder();
        assert_eq!(ladder.rungs.len(), 12);
        if ladder.flagged_rungs() == 0 {
            assert!(validate_ladder(&ladder, &space).is_empty());
        }
        n += 1;
    }
    assert_eq!(n, 6);

    let eval = csv_rows(&dir.join("r1/evaluation.csv"));
    let methods: Vec<&str> = eval.iter().map(|r| &r[0]).collect();
    for m in ["agent", "hls", "cdbl", "rqtpf", "vexus"] {
        assert!(methods.contains(&m), "{m} missing");
    }
    let hls = eval.iter().find(|r| &r[0] == "hls").unwrap();
    assert_eq!((&hls[1], &hls[2], &hls[3], &hls[4]), ("0.0", "0.0", "0.0", "0.0"));
    assert!(
        eval.iter().all(|r| r[5].parse::<f64>().is_ok()),
        "switch scores present"
    );

    // methods × noise levels (0 included) × seeds
    let rob = csv_rows(&dir.join("r1/robustness.csv"));
    assert_eq!(rob.len(), 2 * 3 * 2);
    assert_eq!(csv_rows(&dir.join("r1/robustness_summary.csv")).len(), 2 * 3);
    for r in rob.iter().filter(|r| &r[1] == "0.0") {
        let e = eval.iter().find(|e| e[0] == r[0]).unwrap();
        assert_eq!((&r[3], &r[4]), (&e[1], &e[2]));
    }

    for f in [
        "agent.json",
        "predictors.json",
        "trace.csv",
        "predictor_metrics.csv",
        "evaluation.csv",
        "evaluation_agent.csv",
        "robustness.csv",
        "robustness_summary.csv",
        "ladders/seg000.json",
    ] {
        assert_eq!(
            fs::read(dir.join("r1").join(f)).unwrap(),
            fs::read(dir.join("r2").join(f)).unwrap(),
            "{f} differs between runs"
        );
    }
}

#[test]
fn vmaf_metric_selects_vmaf_column_and_mismatch_is_config_error() {
    let d = tiny_dir();
    let dir = d.path();
    let base = ["--config", "tiny.toml", "--out", "o"];
    ok(dir, &[&base[..], &["synth"]].concat());
    ok(dir, &[&base[..], &["train-agent"]].concat());
    ok(dir, &[&base[..], &["--metric", "vmaf", "train-predictors"]].concat());
    let metrics = csv_rows(&dir.join("o/predictor_metrics.csv"));
    assert_eq!(&metrics[1][0], "quality_vmaf");
    assert_eq!(code(dir, &[&base[..], &["build"]].concat()), 2);
}

#[test]
fn exit_codes() {
    let d = tiny_dir();
    let dir = d.path();
    fs::write(dir.join("bad.toml"), "episodes = 3\n").unwrap();
    assert_eq!(code(dir, &["--config", "bad.toml", "synth"]), 2);
    assert_eq!(code(dir, &["--weights", "1,2", "synth"]), 2);
    assert_eq!(
        code(dir, &["--config", "tiny.toml", "--out", "empty", "train-agent"]),
        3
    );
    fs::create_dir(dir.join("junk")).unwrap();
    fs::write(dir.join("junk/features.csv"), "segment_id,e_y,h,l_y\na,1,1,1\n").unwrap();
    fs::write(dir.join("junk/measurements.csv"), "nonsense\n").unwrap();
    assert_eq!(code(dir, &["--config", "tiny.toml", "--out", "junk", "train-agent"]), 3);
}

#[test]
fn ingest_converts_units() {
    let d = tiny_dir();
    let dir = d.path();
    ok(dir, &["--config", "tiny.toml", "--out", "src", "synth"]);
    let mut r = csv::Reader::from_path(dir.join("src/measurements.csv")).unwrap();
    let headers = r.headers().unwrap().clone();
    let mut w = csv::Writer::from_path(dir.join("raw.csv")).unwrap();
    w.write_record(&headers).unwrap();
    for rec in r.records() {
        let rec = rec.unwrap();
        let mut out: Vec<String> = rec.iter().map(String::from).collect();
        out[3] = (rec[3].parse::<f64>().unwrap() * 1000.0).to_string();
        for i in [6, 7] {
            out[i] = (rec[i].parse::<f64>().unwrap() * 1000.0).to_string();
        }
        w.write_record(&out).unwrap();
    }
    w.flush().unwrap();
    ok(
        dir,
        &[
            "--out",
            "canon",
            "ingest",
            "--features",
            "src/features.csv",
            "--measurements",
            "raw.csv",
            "--bitrate-unit",
            "bps",
            "--time-unit",
            "ms",
        ],
    );
    let a = csv_rows(&dir.join("src/measurements.csv"));
    let b = csv_rows(&dir.join("canon/measurements.csv"));
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        for i in 3..8 {
            let (u, v): (f64, f64) = (x[i].parse().unwrap(), y[i].parse().unwrap());
            assert!((u - v).abs() <= 1e-9 * u.abs().max(1.0));
        }
    }
    let c = code(
        dir,
        &[
            "--out",
            "src",
            "ingest",
            "--features",
            "src/features.csv",
            "--measurements",
            "raw.csv",
        ],
    );
    assert_eq!(c, 2);
}

#[test]
fn bd_subcommand() {
    let d = tempfile::tempdir().unwrap();
    let rates = [200.0, 500.0, 1200.0, 3000.0, 7000.0];
    let curve = |scale: f64| {
        let mut s = String::from("rate_kbps,value\n");
        for r in rates {
            s += &format!("{},{}\n", r * scale, 20.0 + 6.0 * f64::log10(r));
        }
        s
    };
    fs::write(d.path().join("a.csv"), curve(1.0)).unwrap();
    fs::write(d.path().join("b.csv"), curve(1.1)).unwrap();
    let out = ok(d.path(), &["bd", "--reference", "a.csv", "--test", "b.csv"]);
    let line = out.lines().nth(1).unwrap();
    let rate: f64 = line.split(',').next().unwrap().parse().unwrap();
    assert!((rate - 10.0).abs() < 0.01, "{rate}");
    let out = ok(
        d.path(),
        &["bd", "--reference", "a.csv", "--test", "a.csv", "--axis", "time"],
    );
    assert_eq!(out, "bd_time\n0\n");
}
