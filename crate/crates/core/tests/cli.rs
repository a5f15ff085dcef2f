mod common;

use common::tree;
use std::path::{Path, PathBuf};
use std::process::Command;

use condition_aware::bake::load_export;
use condition_aware::cli::{run, PipelineConfig, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE};
use condition_aware::imageio::read_labels;
use condition_aware::synth::{ImageSize, SceneSpec};

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn cli(args: &[&str]) -> i32 {
    let mut v = vec!["condition-aware"];
    v.extend_from_slice(args);
    run(v)
}

fn small_spec(dir: &Path, cameras: u32, side: u32) -> PathBuf {
    let mut spec = SceneSpec::demo();
    spec.cameras.count = cameras;
    spec.image = ImageSize { width: side, height: side };
    spec.atlas = 256;
    let path = dir.join("scene.json");
    std::fs::write(&path, serde_json::to_string_pretty(&spec).unwrap()).unwrap();
    path
}

fn config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body).unwrap()).unwrap();
    path
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_condition-aware");
    let code = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code().unwrap();
    assert_eq!(code(&["--help"]), EXIT_OK);
    for sub in ["synth", "train", "infer", "bake", "eval"] {
        assert_eq!(code(&[sub, "--help"]), EXIT_OK);
    }
    assert_eq!(code(&["--version"]), EXIT_OK);
    assert_eq!(code(&["--frobnicate"]), EXIT_USAGE);
    assert_eq!(code(&["synth", "--threads", "many"]), EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let mut spec = SceneSpec::demo();
    spec.cameras.radius = 3.0;
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = Command::new(bin).args(["synth", &s(&bad), "--out", &s(&dir.path().join("o"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(String::from_utf8_lossy(&out.stderr).contains("half-diagonal"));
}

#[test]
fn synth_writes_a_reproducible_bundle() {
    let dir = tempfile::tempdir().unwrap();
    let spec = small_spec(dir.path(), 5, 48);
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&a), "--threads", "1"]), EXIT_OK);
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&b), "--threads", "8"]), EXIT_OK);
    assert_eq!(tree(&a), tree(&b));
    assert_eq!(std::fs::read_dir(a.join("images")).unwrap().count(), 5);
    for f in ["mesh.obj", "cameras.json", "labels_sb", "labels_dp", "labels_dt", "labels_fused"] {
        assert!(a.join(f).exists(), "{f} missing");
    }
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&c), "--seed", "99"]), EXIT_OK);
    assert_ne!(tree(&a).get(Path::new("mesh.obj")), tree(&c).get(Path::new("mesh.obj")));
}

#[test]
fn default_demo_bundle_has_twelve_views() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo");
    assert_eq!(cli(&["synth", "--out", &s(&out)]), EXIT_OK);
    assert_eq!(std::fs::read_dir(out.join("images")).unwrap().count(), 12);
}

#[test]
fn default_schedule_is_echoed_in_the_config() {
    let cfg = serde_json::to_value(PipelineConfig::default()).unwrap();
    let phases: Vec<(u64, f64)> = cfg["train"]["phases"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| (p["iterations"].as_u64().unwrap(), p["learning_rate"].as_f64().unwrap()))
        .collect();
    assert_eq!(phases, vec![(1500, 1e-3), (750, 1e-4), (500, 1e-5), (250, 1e-6)]);
}

/// synth → train ×3 → infer → bake → eval on a ten-view 64×64 bundle, every
/// stage run twice with different thread counts.
#[test]
fn full_pipeline_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 10, 64);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    let cfg = config(
        d,
        serde_json::json!({
            "network": "tiny",
            "atlas_resolution": 256,
            "seed": 3,
            "train": {"phases": [{"iterations": 30, "learning_rate": 1e-3}, {"iterations": 20, "learning_rate": 1e-4}]},
            "paths": {"dataset": "bundle", "mesh": "bundle/mesh.obj", "cameras": "bundle/cameras.json"}
        }),
    );
    let mut outputs = Vec::new();
    for threads in ["1", "8"] {
        let run_dir = d.join(format!("run{threads}"));
        let ck = run_dir.join("ckpt");
        for net in ["sb", "dp", "dt"] {
            assert_eq!(cli(&["--config", &s(&cfg), "--threads", threads, "train", "--network", net, "--out", &s(&ck)]), EXIT_OK);
        }
        let csv = std::fs::read_to_string(ck.join("sb_loss.csv")).unwrap();
        assert_eq!(csv.lines().count(), 51);
        let report: serde_json::Value = serde_json::from_slice(&std::fs::read(ck.join("sb_report.json")).unwrap()).unwrap();
        assert_eq!(report["train_images"].as_array().unwrap().len(), 8);
        assert_eq!(report["validation_images"].as_array().unwrap().len(), 2);
        assert!(report["validation"]["accuracies"]["pixel_accuracy"].is_number());

        let inf = run_dir.join("infer");
        let images = s(&bundle.join("images"));
        assert_eq!(
            cli(&["--config", &s(&cfg), "--threads", threads, "infer", "--images", &images, "--checkpoints", &s(&ck), "--probabilities", "--out", &s(&inf)]),
            EXIT_OK
        );
        assert_eq!(std::fs::read_dir(inf.join("fused")).unwrap().count(), 10);
        assert_eq!(std::fs::read_dir(inf.join("probabilities")).unwrap().count(), 30);

        let hard = run_dir.join("bake_hard");
        let labels = s(&inf.join("fused"));
        assert_eq!(cli(&["--config", &s(&cfg), "--threads", threads, "bake", "--labels", &labels, "--out", &s(&hard)]), EXIT_OK);
        let soft = run_dir.join("bake_soft");
        let probs = s(&inf.join("probabilities"));
        assert_eq!(
            cli(&["--config", &s(&cfg), "--threads", threads, "bake", "--soft", "--probabilities", &probs, "--out", &s(&soft)]),
            EXIT_OK
        );
        let ev = run_dir.join("eval");
        let gt = s(&bundle.join("labels_fused"));
        assert_eq!(cli(&["--threads", threads, "eval", "--pred", &labels, "--gt", &gt, "--out", &s(&ev)]), EXIT_OK);
        let text = std::fs::read_to_string(ev.join("report.txt")).unwrap();
        assert!(text.contains("average accuracy of") && text.contains("overall pixel accuracy of"));
        outputs.push(tree(&run_dir));
    }
    assert_eq!(outputs[0].len(), outputs[1].len());
    for (k, v) in &outputs[0] {
        assert!(outputs[1][k] == *v, "{} differs between thread counts", k.display());
    }
}

#[test]
fn ground_truth_labels_bake_back_to_the_ground_truth_atlas() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bundle = d.join("demo");
    assert_eq!(cli(&["synth", "--out", &s(&bundle)]), EXIT_OK);
    let cfg = config(d, serde_json::json!({"atlas_resolution": 512}));
    let model = d.join("model");
    let args = ["--config", &s(&cfg), "bake", "--mesh", &s(&bundle.join("mesh.obj")), "--cameras", &s(&bundle.join("cameras.json"))];
    let labels = s(&bundle.join("labels_fused"));
    let model_s = s(&model);
    let mut full: Vec<&str> = args.to_vec();
    full.extend(["--labels", &labels, "--out", &model_s]);
    assert_eq!(cli(&full), EXIT_OK);
    let exported = load_export(&model).unwrap();
    let gt_ctx = read_labels(&bundle.join("atlas_context.png")).unwrap();
    let gt_dmg = read_labels(&bundle.join("atlas_damage.png")).unwrap();
    let (mut agree, mut seen) = (0, 0);
    for t in 0..exported.support.len() {
        if exported.support[t] > 0 {
            seen += 1;
            if exported.context[t] == Some(gt_ctx.data()[t]) && exported.damage[t] == Some(gt_dmg.data()[t]) {
                agree += 1;
            }
        }
    }
    assert!(seen > 10_000);
    assert!(agree as f64 >= 0.995 * seen as f64, "{agree} of {seen}");
    assert_eq!(exported.report.view_count, 12);
    assert_eq!(exported.report.config["atlas_resolution"], 512);
}

#[test]
fn invalid_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 3, 32);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    let cfg = config(d, serde_json::json!({"atlas_resolution": 256}));
    let mesh = s(&bundle.join("mesh.obj"));
    let cams = s(&bundle.join("cameras.json"));
    let out = s(&d.join("out"));

    // One label map fewer than cameras.
    let partial = d.join("partial");
    std::fs::create_dir(&partial).unwrap();
    for name in ["view_000.png", "view_001.png"] {
        std::fs::copy(bundle.join("labels_fused").join(name), partial.join(name)).unwrap();
    }
    assert_eq!(cli(&["--config", &s(&cfg), "bake", "--mesh", &mesh, "--cameras", &cams, "--labels", &s(&partial), "--out", &out]), EXIT_INPUT);
    // Unmatched stems in eval.
    assert_eq!(cli(&["eval", "--pred", &s(&partial), "--gt", &s(&bundle.join("labels_fused")), "--out", &out]), EXIT_INPUT);
    // Malformed dataset: label maps without images.
    let empty = d.join("empty");
    std::fs::create_dir_all(empty.join("images")).unwrap();
    assert_eq!(cli(&["--config", &s(&cfg), "train", "--network", "sb", "--dataset", &s(&empty), "--out", &out]), EXIT_INPUT);
    // Config naming a missing path, and a bad atlas size.
    let missing = config(d, serde_json::json!({"paths": {"mesh": "nowhere.obj"}}));
    assert_eq!(cli(&["--config", &s(&missing), "synth", "--out", &out]), EXIT_INPUT);
    let odd = config(d, serde_json::json!({"atlas_resolution": 300}));
    assert_eq!(cli(&["--config", &s(&odd), "synth", "--out", &out]), EXIT_INPUT);
    // Checkpoints of another architecture.
    let tiny = config(d, serde_json::json!({"network": "tiny", "train": {"phases": []}}));
    let ck = d.join("ck");
    for net in ["sb", "dp", "dt"] {
        assert_eq!(cli(&["--config", &s(&tiny), "train", "--network", net, "--dataset", &s(&bundle), "--out", &s(&ck)]), EXIT_OK);
    }
    let full = config(d, serde_json::json!({"network": "full"}));
    assert_eq!(cli(&["--config", &s(&full), "infer", "--images", &s(&bundle.join("images")), "--checkpoints", &s(&ck), "--out", &out]), EXIT_INPUT);
}

#[test]
fn diverging_training_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 2, 32);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    let cfg = config(d, serde_json::json!({"network": "tiny", "train": {"phases": [{"iterations": 20, "learning_rate": 1e30}]}}));
    assert_eq!(cli(&["--config", &s(&cfg), "train", "--network", "sb", "--dataset", &s(&bundle), "--out", &s(&d.join("o"))]), EXIT_NUMERIC);
}

#[test]
fn zero_views_bake_to_an_empty_model() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 1, 16);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    std::fs::write(d.join("none.json"), "[]").unwrap();
    std::fs::create_dir(d.join("nolabels")).unwrap();
    let cfg = config(d, serde_json::json!({"atlas_resolution": 256}));
    let out = d.join("model");
    let code = cli(&[
        "--config", &s(&cfg), "bake", "--mesh", &s(&bundle.join("mesh.obj")), "--cameras", &s(&d.join("none.json")),
        "--labels", &s(&d.join("nolabels")), "--out", &s(&out),
    ]);
    assert_eq!(code, EXIT_OK);
    let m = load_export(&out).unwrap();
    assert!(m.support.iter().all(|&v| v == 0));
    assert_eq!(m.report.observed_texels, 0);
}

#[test]
fn eval_of_identical_maps_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 2, 32);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    let sb = s(&bundle.join("labels_sb"));
    let out = d.join("eval");
    assert_eq!(cli(&["eval", "--task", "sb", "--pred", &sb, "--gt", &sb, "--out", &s(&out)]), EXIT_OK);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(m["accuracies"]["pixel_accuracy"], 1.0);
    assert_eq!(m["accuracies"]["macro_average"], 1.0);
}

#[test]
fn full_network_accepts_native_resolution_images() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = small_spec(d, 1, 288);
    let bundle = d.join("bundle");
    assert_eq!(cli(&["synth", &s(&spec), "--out", &s(&bundle)]), EXIT_OK);
    let cfg = config(d, serde_json::json!({"network": "full", "train": {"phases": []}}));
    let ck = d.join("ck");
    for net in ["sb", "dp", "dt"] {
        assert_eq!(cli(&["--config", &s(&cfg), "train", "--network", net, "--dataset", &s(&bundle), "--out", &s(&ck)]), EXIT_OK);
    }
    let out = d.join("infer");
    assert_eq!(cli(&["--config", &s(&cfg), "infer", "--images", &s(&bundle.join("images")), "--checkpoints", &s(&ck), "--out", &s(&out)]), EXIT_OK);
    let fused = read_labels(&out.join("fused").join("view_000.png")).unwrap();
    assert_eq!((fused.width(), fused.height()), (288, 288));
}
