//! End-to-end runs of the binary: generate, train, evaluate, infer, sample,
//! and the contract that failures exit with their documented codes.

use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_layoutgraph"))
}

/// Runs the command and returns (exit code, stdout, stderr).
fn run(cmd: &mut Command) -> (i32, String, String) {
    let out = cmd.output().expect("spawn binary");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_RUN: &str = r#"
init_seed = 3

[model]
hidden_dim = 16
image_provider = "null"
graph_refresh = ["static", "union:4"]

[model.edge_features]
rope_dim = 8

[train]
epochs = 4
batch_size = 3

[train.adam]
lr = 0.002

[synth]
seed = 5
pages = 6
jitter_px = 1.0
body_blocks = [2, 3]
paragraph_lines = [2, 3]
words_per_line = [3, 5]
"#;

#[test]
fn synth_train_eval_infer_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(&cfg, SMALL_RUN).unwrap();
    let data = tmp.path().join("data");
    let ckpt = tmp.path().join("model.ckpt");

    let (code, stdout, stderr) = run(bin()
        .args(["synth", "--out", s(&data), "--config", s(&cfg)]));
    assert_eq!(code, 0, "synth failed: {stderr}");
    assert!(stdout.contains("wrote 6 pages"));
    assert!(stderr.contains("# resolved configuration"));
    assert!(stderr.contains("pages = 6"));
    assert_eq!(fs::read_dir(&data).unwrap().count(), 6);

    let log = tmp.path().join("log.jsonl");
    let (code, stdout, stderr) = run(bin().args([
        "train",
        "--data",
        s(&data),
        "--out",
        s(&ckpt),
        "--config",
        s(&cfg),
        "--log",
        s(&log),
    ]));
    assert_eq!(code, 0, "train failed: {stderr}");
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 4, "one metric line per epoch: {stdout}");
    for line in &lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["mean_loss"].as_f64().unwrap().is_finite());
    }
    assert_eq!(fs::read_to_string(&log).unwrap().lines().count(), 4);
    assert!(ckpt.exists());

    let dets = tmp.path().join("detections.json");
    let (code, stdout, stderr) = run(bin().args([
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--detections",
        s(&dets),
    ]));
    assert_eq!(code, 0, "eval failed: {stderr}");
    let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(report["pages"], 6);
    assert!(report["node_f1"]["micro"]["f1"].as_f64().unwrap() >= 0.0);
    assert!(report["edge_f1"]["f1"].as_f64().is_some());
    assert!(report["instance_map"]["map"].as_f64().is_some());
    let export: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&dets).unwrap()).unwrap();
    assert!(!export["detections"].as_array().unwrap().is_empty());

    let page = data.join("synth-0000.json");
    let svg = tmp.path().join("page.svg");
    let (code, first, stderr) = run(bin().args([
        "infer",
        s(&page),
        "--checkpoint",
        s(&ckpt),
        "--svg",
        s(&svg),
    ]));
    assert_eq!(code, 0, "infer failed: {stderr}");
    let report: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(report["page_id"], "synth-0000");
    assert!(!report["instances"].as_array().unwrap().is_empty());
    let rendered = fs::read_to_string(&svg).unwrap();
    assert!(rendered.starts_with("<svg "));
    assert!(rendered.contains("stroke-dasharray") || !rendered.contains("#d62728"));

    // Same checkpoint, same page: bitwise identical report and rendering.
    let svg2 = tmp.path().join("page2.svg");
    let (code, second, _) = run(bin().args([
        "infer",
        s(&page),
        "--checkpoint",
        s(&ckpt),
        "--svg",
        s(&svg2),
    ]));
    assert_eq!(code, 0);
    assert_eq!(first, second);
    assert_eq!(rendered, fs::read_to_string(&svg2).unwrap());

    // A config whose model section disagrees with the checkpoint is refused.
    let other = tmp.path().join("other.toml");
    fs::write(&other, "[model]\nhidden_dim = 24\n").unwrap();
    let (code, _, stderr) = run(bin().args([
        "eval",
        "--checkpoint",
        s(&ckpt),
        "--data",
        s(&data),
        "--config",
        s(&other),
    ]));
    assert_eq!(code, 2, "config mismatch must exit 2: {stderr}");
    assert!(stderr.contains("hidden_dim"));
}

#[test]
fn sample_covers_every_strategy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let (code, _, stderr) = run(bin().args([
        "synth", "--out", s(&data), "--pages", "1", "--seed", "11",
    ]));
    assert_eq!(code, 0, "synth failed: {stderr}");
    let page = data.join("synth-0000.json");

    for strategy in ["directional", "knn", "beta"] {
        let svg = tmp.path().join(format!("{strategy}.svg"));
        let (code, stdout, stderr) = run(bin().args([
            "sample",
            s(&page),
            "--strategy",
            strategy,
            "--svg",
            s(&svg),
        ]));
        assert_eq!(code, 0, "{strategy} failed: {stderr}");
        let report: serde_json::Value = serde_json::from_str(&stdout).unwrap();
        assert_eq!(report["strategy"], strategy);
        assert!(report["n_edges"].as_u64().unwrap() > 0);
        assert!(fs::read_to_string(&svg).unwrap().contains("<line "));
    }

    let (code, _, stderr) = run(bin().args([
        "sample", s(&page), "--strategy", "beta", "--beta", "1.5",
    ]));
    assert_eq!(code, 2, "beta outside (0, 1] is a config error: {stderr}");
}

#[test]
fn config_problems_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "learning_rate = 0.1\n").unwrap();
    let (code, _, stderr) = run(bin().args([
        "synth", "--out", s(&tmp.path().join("x")), "--config", s(&cfg),
    ]));
    assert_eq!(code, 2, "unknown key must exit 2: {stderr}");

    let unsupported = tmp.path().join("arch.toml");
    fs::write(&unsupported, "[model]\ngnn_arch = \"gravnet\"\n").unwrap();
    let (code, _, stderr) = run(bin().args([
        "train",
        "--data",
        s(&tmp.path().join("nowhere")),
        "--out",
        s(&tmp.path().join("m.ckpt")),
        "--config",
        s(&unsupported),
    ]));
    assert_eq!(code, 2, "unsupported arch must exit 2: {stderr}");
}

#[test]
fn data_problems_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let (code, _, stderr) = run(bin().args([
        "train",
        "--data",
        s(&empty),
        "--out",
        s(&tmp.path().join("m.ckpt")),
    ]));
    assert_eq!(code, 3, "empty data dir must exit 3: {stderr}");

    let (code, _, stderr) = run(bin().args([
        "eval",
        "--checkpoint",
        s(&tmp.path().join("missing.ckpt")),
        "--data",
        s(&empty),
    ]));
    assert_eq!(code, 3, "missing checkpoint must exit 3: {stderr}");

    let corrupt = tmp.path().join("corrupt");
    fs::create_dir(&corrupt).unwrap();
    fs::write(corrupt.join("page.json"), "{ not json").unwrap();
    let (code, _, stderr) = run(bin().args([
        "sample", s(&corrupt.join("page.json")),
    ]));
    assert_eq!(code, 3, "corrupt page must exit 3: {stderr}");
}

#[test]
fn unlabeled_pages_cannot_train() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    fs::create_dir(&data).unwrap();
    let doc = serde_json::json!({
        "schema_version": 1,
        "page_id": "plain",
        "width_px": 100,
        "height_px": 100,
        "boxes": [
            {"id": 0, "bbox_px": [10.0, 10.0, 40.0, 20.0], "text": null},
            {"id": 1, "bbox_px": [50.0, 10.0, 90.0, 20.0], "text": null},
        ],
    });
    fs::write(data.join("plain.json"), doc.to_string()).unwrap();
    let (code, _, stderr) = run(bin().args([
        "train",
        "--data",
        s(&data),
        "--out",
        s(&tmp.path().join("m.ckpt")),
    ]));
    assert_eq!(code, 3, "unlabeled pages must exit 3: {stderr}");
    assert!(stderr.contains("labels"), "should name the problem: {stderr}");
}

#[test]
fn import_converts_funsd_annotations() {
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("funsd");
    fs::create_dir(&src).unwrap();
    let form = serde_json::json!({"form": [
        {"id": 0, "label": "question", "box": [20, 30, 120, 55],
         "words": [
            {"text": "Name", "box": [20, 30, 64, 55]},
            {"text": "of",   "box": [70, 30, 88, 55]},
         ],
         "linking": [[0, 1]]},
        {"id": 1, "label": "stamp", "box": [130, 30, 260, 55],
         "words": [{"text": "Acme", "box": [130, 30, 260, 55]}],
         "linking": [[0, 1]]},
    ]});
    fs::write(src.join("form01.json"), form.to_string()).unwrap();
    let out = tmp.path().join("pages");
    let (code, stdout, stderr) = run(bin().args([
        "import", "--in", s(&src), "--out", s(&out), "--level", "word",
    ]));
    assert_eq!(code, 0, "import failed: {stderr}");
    assert!(stdout.contains("imported 1 pages"));
    assert!(stdout.contains("question"), "category names listed: {stdout}");
    assert!(stderr.contains("stamp"), "unknown label warned: {stderr}");
    let page: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("form01.json")).unwrap()).unwrap();
    assert_eq!(page["boxes"].as_array().unwrap().len(), 3);
    assert_eq!(page["labels"]["groups"][0], serde_json::json!([0, 1]));
    // "question" is category 1; the unknown label falls back to "other".
    assert_eq!(page["labels"]["node_category"], serde_json::json!([1, 1, 3]));
}

#[test]
fn gradcheck_passes_and_honors_tolerance() {
    let (code, stdout, stderr) = run(bin().arg("gradcheck"));
    assert_eq!(code, 0, "gradcheck failed: {stderr}");
    assert!(stdout.contains("worst_rel_err="), "{stdout}");

    let (code, _, stderr) = run(bin().args(["gradcheck", "--tol", "1e-15"]));
    assert_eq!(code, 4, "unreachable tolerance must exit 4: {stderr}");
}
