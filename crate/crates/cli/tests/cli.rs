use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use stinr::data::{load_grid_csv, GridLayout};
use stinr::linalg::svd;

fn stinr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stinr"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = stinr(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str], cwd: &Path) -> i32 {
    stinr(args, cwd).status.code().expect("exit code")
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn wave_run(dir: &Path, steps: usize) -> PathBuf {
    ok(
        &[
            "synth", "wave", "--nx", "16", "--nt", "24", "--seed", "3", "--out", "w",
        ],
        dir,
    );
    let cfg = dir.join("w/run.toml");
    fs::write(
        &cfg,
        format!(
            "output_dir = \"run\"\n[data]\npath = \"field.csv\"\nrate = 0.3\n\
             [seeds]\nmodel = 5\ndata = 6\n[model]\nhidden = 16\nscales = [0.5, 1.0]\n\
             rows_per_map = 4\n[train]\nsteps = {steps}\nbatch_size = 64\n"
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn train_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wave_run(d, 40);
    ok(&["train", "--config", "w/run.toml"], d);
    let files = ["model.stinr", "loss.csv", "metrics.json", "predictions.csv"];
    let first: Vec<Vec<u8>> = files
        .iter()
        .map(|f| fs::read(d.join("w/run").join(f)).unwrap())
        .collect();
    let mut manifest = json(d.join("w/run/manifest.json"));
    ok(&["train", "--config", "w/run.toml"], d);
    for (f, bytes) in files.iter().zip(&first) {
        assert_eq!(&fs::read(d.join("w/run").join(f)).unwrap(), bytes, "{f}");
    }
    let mut again = json(d.join("w/run/manifest.json"));
    manifest
        .as_object_mut()
        .unwrap()
        .remove("created_unix_secs");
    again.as_object_mut().unwrap().remove("created_unix_secs");
    assert_eq!(manifest, again);
    assert_eq!(manifest["seeds"]["model"], 5);
    assert_eq!(manifest["seeds"]["data"], 6);
    assert_eq!(manifest["config"]["train"]["seed"], 6);

    let metrics = json(d.join("w/run/metrics.json"));
    assert!(metrics["heldout"]["wmape"].as_f64().unwrap().is_finite());
    let loss = fs::read_to_string(d.join("w/run/loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 41);
}

#[test]
fn zero_step_run_emits_initialized_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wave_run(d, 0);
    ok(&["train", "--config", "w/run.toml"], d);
    assert!(d.join("w/run/model.stinr").exists());
    let p = load_grid_csv(d.join("w/run/predictions.csv"), GridLayout::Matrix).unwrap();
    assert_eq!(p.dims(), &[16, 24]);
    assert!(p.values().as_slice().iter().all(|v| v.is_finite()));
}

#[test]
fn infer_and_upsample_agree_with_training_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wave_run(d, 30);
    ok(
        &["train", "--config", "w/run.toml", "--set", "train.steps=30"],
        d,
    );
    let pred = load_grid_csv(d.join("w/run/predictions.csv"), GridLayout::Matrix).unwrap();

    fs::write(d.join("q.csv"), "i1,i2\n0,0\n7,11\n15,23\n2.5,3.5\n").unwrap();
    ok(
        &[
            "infer",
            "--model",
            "w/run/model.stinr",
            "--coords",
            "q.csv",
            "--out",
            "inf",
        ],
        d,
    );
    let values: Vec<f64> = fs::read_to_string(d.join("inf/values.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    for (k, (i, j)) in [(0, 0), (7, 11), (15, 23)].into_iter().enumerate() {
        assert_eq!(values[k], pred.cell_values(pred.cell_offset(&[i, j]))[0]);
    }
    // Off-grid query stays within the trained value range, give or take three deviations.
    let all = pred.values().as_slice();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (lo, hi) = all
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(values[3] >= lo - 3.0 * std && values[3] <= hi + 3.0 * std);

    ok(
        &[
            "upsample",
            "--model",
            "w/run/model.stinr",
            "--factor",
            "1",
            "--out",
            "u1",
        ],
        d,
    );
    assert_eq!(
        fs::read(d.join("u1/upsampled.csv")).unwrap(),
        fs::read(d.join("w/run/predictions.csv")).unwrap()
    );
    ok(
        &[
            "upsample",
            "--model",
            "w/run/model.stinr",
            "--factor",
            "2",
            "--out",
            "u2",
        ],
        d,
    );
    let up = load_grid_csv(d.join("u2/upsampled.csv"), GridLayout::Matrix).unwrap();
    assert_eq!(up.dims(), &[32, 48]);
    for i in 0..16 {
        for j in 0..24 {
            assert_eq!(
                up.cell_values(up.cell_offset(&[2 * i, 2 * j])),
                pred.cell_values(pred.cell_offset(&[i, j]))
            );
        }
    }
    assert_eq!(
        code(
            &[
                "upsample",
                "--model",
                "w/run/model.stinr",
                "--factor",
                "0",
                "--out",
                "u0"
            ],
            d
        ),
        2
    );

    fs::write(d.join("bad.csv"), "i1,i2\n1,x\n").unwrap();
    assert_eq!(
        code(
            &[
                "infer",
                "--model",
                "w/run/model.stinr",
                "--coords",
                "bad.csv",
                "--out",
                "b"
            ],
            d
        ),
        3
    );
    fs::write(d.join("short.csv"), "1\n").unwrap();
    assert_eq!(
        code(
            &[
                "infer",
                "--model",
                "w/run/model.stinr",
                "--coords",
                "short.csv",
                "--out",
                "b"
            ],
            d
        ),
        3
    );
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    wave_run(d, 5);
    for set in [
        "model.width=3",
        "data.rate=1.0",
        "train.steps=-1",
        "train.seed=9",
    ] {
        assert_eq!(
            code(&["train", "--config", "w/run.toml", "--set", set], d),
            2,
            "{set}"
        );
    }
    assert!(
        !d.join("w/run").exists(),
        "validation must precede any output"
    );
    assert_eq!(code(&["train", "--config", "missing.toml"], d), 3);
    assert_eq!(code(&["frobnicate"], d), 2);
}

#[test]
fn synth_lowrank_has_requested_rank() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth", "lowrank", "--rows", "100", "--cols", "120", "--rank", "5", "--out", "l",
        ],
        d,
    );
    let m = load_grid_csv(d.join("l/field.csv"), GridLayout::Matrix)
        .unwrap()
        .as_matrix()
        .unwrap();
    assert_eq!(m.shape(), (100, 120));
    let s = svd(&m).unwrap();
    assert_eq!(s.numerical_rank(1e-8 * s.singular_values[0]), 5);
    assert_eq!(
        json(d.join("l/manifest.json"))["config"]["params"]["rank"],
        5
    );
}

fn graph_run(d: &Path, extra: &str) {
    ok(
        &[
            "synth",
            "graph",
            "--nodes",
            "24",
            "--steps",
            "20",
            "--bandwidth",
            "4",
            "--seed",
            "1",
            "--out",
            "g",
        ],
        d,
    );
    fs::write(
        d.join("g/run.toml"),
        format!(
            "output_dir = \"run\"\n{extra}\n[graph]\npath = \"adjacency.csv\"\n\
             [model]\nhidden = 16\nscales = []\nhead_scale = 0.1\nembedding_dim = 8\n[train]\nsteps = 40\n"
        ),
    )
    .unwrap();
}

#[test]
fn krige_reports_hidden_nodes_and_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    graph_run(d, "[data]\npath = \"field.csv\"\nrate = 0.5");
    let adjacency = fs::read_to_string(d.join("g/adjacency.csv")).unwrap();
    assert!(adjacency.starts_with("src,dst,weight\n"));
    assert_eq!(adjacency.lines().count(), 1 + 2 * 24);
    ok(&["krige", "--config", "g/run.toml"], d);
    let m = json(d.join("g/run/metrics.json"));
    assert_eq!(m["hidden_nodes"].as_array().unwrap().len(), 12);
    assert_eq!(m["heldout_cells"], 12 * 20);
    assert!(m["column_mean_heldout"]["wmape"].as_f64().is_some());
    let model = fs::read(d.join("g/run/model.stinr")).unwrap();
    ok(&["krige", "--config", "g/run.toml"], d);
    assert_eq!(fs::read(d.join("g/run/model.stinr")).unwrap(), model);
}

#[test]
fn krige_hidden_file_and_disconnected_warning() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    graph_run(
        d,
        "[data]\npath = \"field.csv\"\nhidden_nodes = \"hidden.txt\"",
    );
    fs::write(d.join("g/hidden.txt"), "").unwrap();
    assert_eq!(
        code(&["krige", "--config", "g/run.toml"], d),
        3,
        "no hidden nodes is degenerate"
    );

    // Cut node 5 out of the ring and hide it.
    let cut: String = fs::read_to_string(d.join("g/adjacency.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.split(',').take(2).any(|c| c == "5"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(d.join("g/adjacency.csv"), cut).unwrap();
    fs::write(d.join("g/hidden.txt"), "5\n6\n").unwrap();
    let out = ok(&["krige", "--config", "g/run.toml"], d);
    assert!(String::from_utf8_lossy(&out.stderr).contains("[5]"));
    assert_eq!(
        json(d.join("g/run/metrics.json"))["hidden_nodes"],
        serde_json::json!([5, 6])
    );
    assert!(d.join("g/run/predictions.csv").exists());

    fs::write(
        d.join("g/run.toml"),
        "output_dir = \"run\"\n[data]\npath = \"field.csv\"\n",
    )
    .unwrap();
    assert_eq!(
        code(&["krige", "--config", "g/run.toml"], d),
        2,
        "krige needs a graph"
    );
}

#[test]
fn baselines_write_completed_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(
        &[
            "synth", "lowrank", "--rows", "30", "--cols", "40", "--rank", "3", "--out", "l",
        ],
        d,
    );
    ok(
        &[
            "baseline",
            "mf",
            "--data",
            "l/field.csv",
            "--rate",
            "0.5",
            "--rank",
            "3",
            "--out",
            "mf",
        ],
        d,
    );
    let m = json(d.join("mf/metrics.json"));
    assert!(m["heldout"]["wmape"].as_f64().unwrap() < 1.0);
    let c = load_grid_csv(d.join("mf/completed.csv"), GridLayout::Matrix).unwrap();
    assert_eq!(c.dims(), &[30, 40]);

    ok(
        &[
            "baseline",
            "svt",
            "--data",
            "l/field.csv",
            "--rate",
            "0.5",
            "--tau",
            "0.5",
            "--out",
            "svt",
        ],
        d,
    );
    assert!(
        json(d.join("svt/metrics.json"))["heldout"]["count"]
            .as_u64()
            .unwrap()
            > 0
    );
    let args = [
        "baseline",
        "svt",
        "--data",
        "l/field.csv",
        "--rate",
        "0.5",
        "--max-iterations",
        "2",
        "--out",
        "s2",
    ];
    assert_eq!(code(&args, d), 0);
    assert_eq!(json(d.join("s2/metrics.json"))["converged"], false);
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(code(&strict, d), 4);
    assert_eq!(
        code(
            &[
                "baseline",
                "mf",
                "--data",
                "l/field.csv",
                "--rate",
                "0",
                "--out",
                "x"
            ],
            d
        ),
        2
    );
}

#[test]
fn diagnose_dispatches_to_each_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    // Row 1 carries 3 + 2·cos(2π·5t/64): bins 0 and 5 hold 3 and 2.
    let mut text = String::new();
    for i in 0..2 {
        let row: Vec<String> = (0..64)
            .map(|t| {
                let v = if i == 1 {
                    3.0 + 2.0 * (2.0 * std::f64::consts::PI * 5.0 * t as f64 / 64.0).cos()
                } else {
                    1.0
                };
                format!("{v}")
            })
            .collect();
        text.push_str(&row.join(","));
        text.push('\n');
    }
    fs::write(d.join("s.csv"), text).unwrap();
    ok(
        &[
            "diagnose", "spectrum", "--data", "s.csv", "--index", "1", "--out", "sp",
        ],
        d,
    );
    let mags: Vec<f64> = fs::read_to_string(d.join("sp/spectrum.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(mags.len(), 33);
    assert!((mags[0] - 3.0).abs() < 1e-12 && (mags[5] - 2.0).abs() < 1e-12);
    assert!(mags
        .iter()
        .enumerate()
        .all(|(k, m)| k == 0 || k == 5 || m.abs() < 1e-12));

    ok(
        &[
            "synth", "lowrank", "--rows", "20", "--cols", "30", "--rank", "2", "--out", "l",
        ],
        d,
    );
    ok(
        &[
            "diagnose",
            "lowrank",
            "--data",
            "l/field.csv",
            "--out",
            "lr",
        ],
        d,
    );
    let lines: Vec<String> = fs::read_to_string(d.join("lr/lowrank.csv"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    let nuclear: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let m = load_grid_csv(d.join("l/field.csv"), GridLayout::Matrix)
        .unwrap()
        .as_matrix()
        .unwrap();
    let s: f64 = svd(&m).unwrap().singular_values.iter().sum();
    assert!((nuclear - s).abs() <= 1e-12 * s);

    ok(
        &[
            "diagnose", "kernel", "--scales", "1,4", "--rows", "8", "--dim", "2", "--points",
            "200", "--out", "k",
        ],
        d,
    );
    let k = json(d.join("k/summary.json"));
    assert!(k["max_shift_error"].as_f64().unwrap() <= 1e-9);
    assert!(k["max_closed_form_error"].as_f64().unwrap() <= 1e-9);

    wave_run(d, 10);
    ok(&["train", "--config", "w/run.toml"], d);
    ok(
        &[
            "diagnose",
            "lipschitz",
            "--model",
            "w/run/model.stinr",
            "--pairs",
            "200",
            "--out",
            "lip",
        ],
        d,
    );
    assert_eq!(json(d.join("lip/summary.json"))["violations"], 0);

    assert_eq!(code(&["diagnose", "curvature", "--out", "x"], d), 2);
    assert_eq!(code(&["diagnose", "lowrank", "--out", "x"], d), 2);
    fs::write(d.join("empty.csv"), "").unwrap();
    assert_eq!(
        code(
            &["diagnose", "spectrum", "--data", "empty.csv", "--out", "x"],
            d
        ),
        3
    );
    assert_eq!(
        code(&["diagnose", "kernel", "--points", "0", "--out", "x"], d),
        2
    );
}
