use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use retarget_core::io::{parse_bvh, parse_obj, parse_weights, write_bvh};
use retarget_core::skeleton::character_height;
use retarget_core::Vec3;
use serde_json::Value;
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_retarget"))
        .args(args)
        .env_remove("RETARGET_THREADS")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, scene: &str, params: &str) -> PathBuf {
    let out = dir.join(scene);
    let params_path = dir.join(format!("{scene}_params.json"));
    fs::write(&params_path, params).unwrap();
    let o = run(&[
        "synth",
        "--scene",
        scene,
        "--params",
        p(&params_path),
        "--out-dir",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out
}

fn retarget_args<'a>(scene: &'a Path, config: &'a Path, out: &'a Path, report: &'a Path) -> Vec<String> {
    let f = |n: &str| scene.join(n).to_str().unwrap().to_string();
    vec![
        "retarget".into(),
        "--source-bvh".into(),
        f("source.bvh"),
        "--source-obj".into(),
        f("source.obj"),
        "--source-weights".into(),
        f("source_weights.json"),
        "--target-obj".into(),
        f("target.obj"),
        "--target-weights".into(),
        f("target_weights.json"),
        "--config".into(),
        config.to_str().unwrap().into(),
        "--out-bvh".into(),
        out.to_str().unwrap().into(),
        "--report".into(),
        report.to_str().unwrap().into(),
    ]
}

fn quick_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(
        &path,
        format!(r#"{{"optimizer": {{"iterations": 25, "samples": {{"query": 60, "reference": 600}}{extra}}}}}"#),
    )
    .unwrap();
    path
}

#[test]
fn synth_writes_parseable_deterministic_files() {
    let dir = TempDir::new().unwrap();
    let a = synth(dir.path(), "arm_sweep", "{}");
    let b = dir.path().join("again");
    let o = run(&["synth", "--scene", "arm_sweep", "--out-dir", p(&b)]);
    assert_eq!(code(&o), 0);
    let names = [
        "source.bvh",
        "source.obj",
        "source_weights.json",
        "target.obj",
        "target_weights.json",
    ];
    for name in names {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
    let (skeleton, motion) = parse_bvh(&fs::read_to_string(a.join("source.bvh")).unwrap()).unwrap();
    assert_eq!(motion.frames(), 60);
    let mesh = parse_obj(&fs::read_to_string(a.join("target.obj")).unwrap()).unwrap();
    let weights = parse_weights(&fs::read_to_string(a.join("target_weights.json")).unwrap()).unwrap();
    assert_eq!(weights.influences(&skeleton).unwrap().len(), mesh.vertices.len());
    assert!(weights.limb_config().is_some());
}

#[test]
fn synth_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&run(&["synth", "--scene", "nope", "--out-dir", p(dir.path())])), 1);
    let params = dir.path().join("bad.json");
    fs::write(&params, r#"{"torso_radius": 5}"#).unwrap();
    assert_eq!(
        code(&run(&[
            "synth",
            "--scene",
            "arm_sweep",
            "--params",
            p(&params),
            "--out-dir",
            p(dir.path())
        ])),
        1
    );
    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = run(&["synth", "--scene", "arm_sweep", "--out-dir", p(&blocker.join("sub"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn self_retarget_recovers_the_source() {
    let dir = TempDir::new().unwrap();
    let scene = synth(
        dir.path(),
        "arm_sweep",
        r#"{"frames": 12, "sweep_min_deg": 0, "sweep_max_deg": 60}"#,
    );
    let config = quick_config(dir.path(), "");
    let (out, report) = (dir.path().join("out.bvh"), dir.path().join("report.json"));
    let o = run(&retarget_args(&scene, &config, &out, &report)
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["self_retarget"], true);
    let h = r["target_height"].as_f64().unwrap();
    assert!(r["metrics_after"]["mse_local"].as_f64().unwrap() <= 1e-4 * h);
    assert!(parse_bvh(&fs::read_to_string(&out).unwrap()).is_ok());
}

#[test]
fn slim_to_fat_reduces_penetration_deterministically() {
    let dir = TempDir::new().unwrap();
    let scene = synth(dir.path(), "slim_to_fat", r#"{"frames": 10}"#);
    let config = quick_config(dir.path(), "");
    let mut outputs = Vec::new();
    for threads in ["1", "3"] {
        let (out, report) = (
            dir.path().join(format!("out{threads}.bvh")),
            dir.path().join(format!("r{threads}.json")),
        );
        let mut args = retarget_args(&scene, &config, &out, &report);
        args.extend(["--threads".into(), threads.into(), "--preset".into(), "final".into()]);
        let o = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        assert!(String::from_utf8_lossy(&o.stdout).contains("pen_rate"));
        let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
        assert_eq!(r["self_retarget"], false);
        let before = r["metrics_before"]["pen_rate"].as_f64().unwrap();
        let after = r["metrics_after"]["pen_rate"].as_f64().unwrap();
        assert!(after < before, "{after} vs {before}");
        assert_eq!(r["trace"].as_array().unwrap().len(), 25);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn divergence_exits_with_runtime_code() {
    let dir = TempDir::new().unwrap();
    let scene = synth(dir.path(), "slim_to_fat", r#"{"frames": 6}"#);
    let config = quick_config(dir.path(), r#", "step_size": 5.0"#);
    let (out, report) = (dir.path().join("out.bvh"), dir.path().join("report.json"));
    let o = run(&retarget_args(&scene, &config, &out, &report)
        .iter()
        .map(String::as_str)
        .collect::<Vec<_>>());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("diverged"));
}

#[test]
fn retarget_input_errors() {
    let dir = TempDir::new().unwrap();
    let scene = synth(dir.path(), "arm_sweep", r#"{"frames": 4}"#);
    let config = quick_config(dir.path(), "");
    let (out, report) = (dir.path().join("out.bvh"), dir.path().join("report.json"));
    let mut args = retarget_args(&scene, &config, &out, &report);
    let missing = dir.path().join("missing.obj");
    args[6] = missing.to_str().unwrap().into();
    let o = run(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("missing.obj"));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"optimizer": {"iterations": 0}}"#).unwrap();
    let args = retarget_args(&scene, &bad, &out, &report);
    assert_eq!(code(&run(&args.iter().map(String::as_str).collect::<Vec<_>>())), 1);

    assert_eq!(code(&run(&["retarget", "--no-such-flag"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    let help = String::from_utf8_lossy(&run(&["retarget", "--help"]).stdout).into_owned();
    for flag in [
        "--source-bvh",
        "--target-weights",
        "--preset",
        "--out-bvh",
        "--report",
        "--threads",
    ] {
        assert!(help.contains(flag), "{flag}");
    }
}

#[test]
fn evaluate_closed_forms_and_mismatch() {
    let dir = TempDir::new().unwrap();
    let scene = synth(dir.path(), "arm_sweep", r#"{"frames": 8}"#);
    let gt = scene.join("source.bvh");
    let obj = scene.join("source.obj");
    let weights = scene.join("source_weights.json");
    let report = dir.path().join("eval.json");
    let o = run(&[
        "evaluate",
        "--pred-bvh",
        p(&gt),
        "--gt-bvh",
        p(&gt),
        "--obj",
        p(&obj),
        "--weights",
        p(&weights),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let same: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(same["mse"], 0.0);
    assert_eq!(same["mse_local"], 0.0);
    assert!(same["pen_rate"].as_f64().unwrap() > 0.0);
    let csv = fs::read_to_string(report.with_extension("csv")).unwrap();
    assert!(csv.starts_with("sequence_id,mse,mse_local,pen_rate,curvature,wall_ms\nsource,0,0,"));

    let (skeleton, motion) = parse_bvh(&fs::read_to_string(&gt).unwrap()).unwrap();
    let delta = Vec3::new(0.02, 0.0, -0.01);
    let global = (0..motion.frames())
        .map(|t| {
            let q = motion.translation(t) + delta;
            [q.x, q.y, q.z, 0.0]
        })
        .collect();
    let shifted = dir.path().join("shifted.bvh");
    fs::write(
        &shifted,
        write_bvh(&skeleton, &motion.with_global(global).unwrap()).unwrap(),
    )
    .unwrap();
    let o = run(&[
        "evaluate",
        "--pred-bvh",
        p(&shifted),
        "--gt-bvh",
        p(&gt),
        "--obj",
        p(&obj),
        "--weights",
        p(&weights),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let off: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let expect = delta.norm_squared() / character_height(&skeleton).unwrap();
    assert!((off["mse"].as_f64().unwrap() - expect).abs() < 1e-6 * expect);
    assert!(off["mse_local"].as_f64().unwrap() < 1e-12);

    let short = dir.path().join("short.bvh");
    fs::write(&short, write_bvh(&skeleton, &motion.slice(0, 5).unwrap()).unwrap()).unwrap();
    let o = run(&[
        "evaluate",
        "--pred-bvh",
        p(&short),
        "--gt-bvh",
        p(&gt),
        "--obj",
        p(&obj),
        "--weights",
        p(&weights),
        "--report",
        p(&report),
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_reports_identical_losses() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("bench.csv");
    let o = run(&[
        "bench",
        "--scene",
        "arm_sweep",
        "--sizes",
        "20x200,40x400",
        "--repeats",
        "1",
        "--report",
        p(&report),
        "--threads",
        "2",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(&report).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,queries,references,mean_seconds,speedup,loss"
    );
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        assert_eq!((pair[0][0], pair[1][0]), ("brute_force", "tree"));
        assert_eq!(pair[0][5], pair[1][5]);
    }
    assert_eq!(code(&run(&["bench", "--repeats", "0", "--report", p(&report)])), 1);
    assert_eq!(code(&run(&["bench", "--sizes", "10by20", "--report", p(&report)])), 1);
}
