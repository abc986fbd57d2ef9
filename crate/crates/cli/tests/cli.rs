use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rsrp_cli::{estimate_dataset, synthetic_dataset, EstimateOptions, ExportOptions, PairDataset};
use rsrp_core::experiment::{Protocol, CSV_HEADER};
use rsrp_core::geometry::ShutterModel;
use rsrp_core::pipeline::estimate;
use rsrp_core::synth::{generate_scene, SceneConfig};
use serde_json::Value;

fn rsrp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rsrp")).args(args).output().expect("binary runs")
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/example_pair.json")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn estimate_example_against_ground_truth() {
    let out = rsrp(&["estimate", example().to_str().unwrap(), "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["method"], "G-RSRP+");
    assert!(v["ground_truth_error"]["rotation_deg"].as_f64().unwrap() < 0.1);
    assert!(v["ground_truth_error"]["translation_deg"].as_f64().unwrap() < 0.5);
    let q: Vec<f64> = v["rotation"]["quaternion_wxyz"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((q.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(v["timings_s"]["rolling_shutter_s"].as_f64().unwrap() > 0.0);
}

#[test]
fn no_refine_flag_changes_method() {
    let out = rsrp(&["estimate", example().to_str().unwrap(), "--no-refine"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["method"], "G-RSRP");
    assert_eq!(v["timings_s"]["refine_s"].as_f64().unwrap(), 0.0);
}

#[test]
fn estimate_is_deterministic() {
    let a = stdout_json(&rsrp(&["estimate", example().to_str().unwrap(), "--seed", "9"]));
    let b = stdout_json(&rsrp(&["estimate", example().to_str().unwrap(), "--seed", "9"]));
    assert_eq!(a["rotation"], b["rotation"]);
    assert_eq!(a["translation"], b["translation"]);
}

#[test]
fn missing_file_exits_with_io_code() {
    let out = rsrp(&["estimate", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    let v = stderr_json(&out);
    assert_eq!(v["error"]["kind"], "io");
    assert_eq!(v["error"]["exit_code"], 2);
}

#[test]
fn invalid_dataset_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = PairDataset::load(&example()).unwrap();
    ds.correspondences.truncate(4);
    let path = dir.path().join("four.json");
    std::fs::write(&path, serde_json::to_string(&ds).unwrap()).unwrap();
    let out = rsrp(&["estimate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "validation");

    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{\n  \"intrinsics\": \n}").unwrap();
    let out = rsrp(&["estimate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = stderr_json(&out);
    assert_eq!(v["error"]["kind"], "parse");
    assert!(v["error"]["message"].as_str().unwrap().contains("line 3"));
}

#[test]
fn degenerate_dataset_exits_with_estimation_code() {
    let dir = tempfile::tempdir().unwrap();
    let mut ds = PairDataset::load(&example()).unwrap();
    ds.ground_truth = None;
    let first = ds.correspondences[0];
    ds.correspondences = vec![first; 8];
    let path = dir.path().join("same.json");
    ds.save(&path).unwrap();
    let out = rsrp(&["estimate", path.to_str().unwrap(), "--iterations", "10"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stderr_json(&out)["error"]["kind"], "estimation");
}

#[test]
fn exported_scene_round_trips_to_same_estimate() {
    let opts = ExportOptions { protocol: Protocol::Angular, level: 2, seed: 21, noisy: false };
    let ds = synthetic_dataset(&opts).unwrap();
    let reloaded = PairDataset::from_json(&ds.to_json()).unwrap();
    assert_eq!(reloaded, ds);

    let level = opts.protocol.level(opts.level);
    let scene = generate_scene(&SceneConfig { seed: 21, structure: level.structure, ..Default::default() }, &level.motion, ShutterModel::Exact)
        .unwrap();
    let est = EstimateOptions { seed: 4, ..Default::default() };
    let in_memory = estimate(&scene.correspondences().unwrap(), &est.pipeline()).unwrap().pose();
    let from_file = estimate_dataset(&reloaded, &est).unwrap().0.pose();
    assert!((in_memory.rotation.matrix() - from_file.rotation.matrix()).amax() < 1e-12);
    assert!((in_memory.translation - from_file.translation).amax() < 1e-12);
}

#[test]
fn export_command_writes_loadable_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pair.json");
    let out = rsrp(&["export-synthetic", "--protocol", "angular-linear", "--level", "3", "--seed", "5", "--noisy", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = PairDataset::load(&path).unwrap();
    assert!(ds.correspondences.len() >= 20);
    assert!(ds.ground_truth().is_some());
}

#[test]
fn bench_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = rsrp(&["bench", "--protocol", "angular", "--trials", "5", "--seed", "1", "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(out_dir.join("angular.csv")).unwrap()
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    // 5 levels x 3 methods x 2 metrics.
    assert_eq!(text.lines().count(), 1 + 30);
}

#[test]
fn planar_protocol_routes() {
    let dir = tempfile::tempdir().unwrap();
    let out = rsrp(&["bench", "--protocol", "planar", "--trials", "1", "--iterations", "20", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("planar.csv").exists());
    assert!(String::from_utf8_lossy(&out.stdout).contains("planar"));
}

#[test]
fn unwritable_bench_directory_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let target = blocker.join("sub");
    let out = rsrp(&["bench", "--protocol", "angular", "--trials", "1", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");
}

#[test]
fn unknown_protocol_is_a_usage_error() {
    let out = rsrp(&["bench", "--protocol", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "usage");
}
