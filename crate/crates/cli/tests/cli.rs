use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn gazetrack(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazetrack"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = gazetrack(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    gazetrack(args).status.code().expect("exit code")
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_count_writes_images_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let stdout = ok(&["synth", "--count", "5", "--out", s(&out)]);
    assert!(stdout.contains("wrote 5 images"), "{stdout}");
    let m = manifest(&out);
    assert_eq!(m["images"].as_array().unwrap().len(), 5);
    for i in 0..5 {
        assert!(out.join(format!("img_{i:04}.pgm")).is_file());
    }
}

#[test]
fn synth_sweep_targets_follow_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--sweep", "3x3", "--dwell", "2", "--out", s(dir.path())]);
    let m = manifest(dir.path());
    let targets: Vec<(f64, f64)> = m["images"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|e| e["role"] == "target")
        .map(|e| {
            (
                e["target_screen"]["x"].as_f64().unwrap(),
                e["target_screen"]["y"].as_f64().unwrap(),
            )
        })
        .collect();
    assert_eq!(targets.len(), 9);
    // 80% of a 1920x1080 screen, centered: 10%, 50%, 90% of each side
    let mut k = 0;
    for y in [108.0, 540.0, 972.0] {
        for x in [192.0, 960.0, 1728.0] {
            let (tx, ty) = targets[k];
            assert!((tx - x).abs() < 1e-9 && (ty - y).abs() < 1e-9, "{k}: {:?}", targets[k]);
            k += 1;
        }
    }
    let crosses = &m["crosses"];
    assert_eq!(crosses[0]["x"].as_f64().unwrap(), 96.0);
    assert_eq!(crosses[0]["y"].as_f64().unwrap(), 1026.0);
}

#[test]
fn synth_flags_heavy_occlusion() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--eyelid", "0.7", "--count", "3", "--out", s(dir.path())]);
    let m = manifest(dir.path());
    assert!(m["images"]
        .as_array()
        .unwrap()
        .iter()
        .all(|e| e["expect_failure"] == true));
}

#[test]
fn synth_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["synth", "--eyelid", "1.5", "--out", s(dir.path())]), 2);
    assert_eq!(code(&["synth", "--sweep", "0x3", "--out", s(dir.path())]), 2);
    assert_eq!(code(&["synth", "--count", "0", "--out", s(dir.path())]), 2);
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    assert_eq!(code(&["synth", "--count", "1", "--out", s(&blocker.join("sub"))]), 3);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&["synth", "--count", "3", "--seed", "9", "--format", "png", "--out", s(d)]);
    }
    for name in ["img_0000.png", "img_0002.png", "manifest.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
    }
}

/// Pixels of `color` in an RGB PNG.
fn colored_pixels(path: &Path, color: [u8; 3]) -> Vec<(f64, f64)> {
    let img = image::open(path).unwrap().to_rgb8();
    img.enumerate_pixels()
        .filter(|(_, _, p)| p.0 == color)
        .map(|(x, y, _)| (x as f64, y as f64))
        .collect()
}

#[test]
fn detect_overlay_circle_matches_truth() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--count", "3", "--out", s(dir.path())]);
    let m = manifest(dir.path());
    for (i, entry) in m["images"].as_array().unwrap().iter().enumerate() {
        let img = dir.path().join(entry["file"].as_str().unwrap());
        let overlay = dir.path().join(format!("overlay_{i}.png"));
        let json: Value = serde_json::from_str(&ok(&["detect", s(&img), "--json", "--overlay", s(&overlay)])).unwrap();
        let truth = &entry["iris"];
        let (cx, cy, r) = (
            truth["cx"].as_f64().unwrap(),
            truth["cy"].as_f64().unwrap(),
            truth["r"].as_f64().unwrap(),
        );
        for (k, t) in [("cx", cx), ("cy", cy), ("r", r)] {
            assert!((json["iris"][k].as_f64().unwrap() - t).abs() <= 1.0, "{k}: {json}");
        }
        // the drawn final circle: magenta pixels not covered by samples
        let ring = colored_pixels(&overlay, [255, 0, 255]);
        assert!(ring.len() > 50, "{} ring pixels", ring.len());
        let mean = ring
            .iter()
            .map(|(x, y)| ((x - cx).hypot(y - cy) - r).abs())
            .sum::<f64>()
            / ring.len() as f64;
        assert!(mean <= 1.0, "mean ring distance {mean}");
        assert!(!colored_pixels(&overlay, [0, 200, 0]).is_empty(), "eye box drawn");
        assert!(!colored_pixels(&overlay, [0, 255, 255]).is_empty(), "corner drawn");
    }
}

#[test]
fn detect_failure_is_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--eyelid", "0.8", "--count", "1", "--out", s(dir.path())]);
    let img = dir.path().join("img_0000.pgm");
    let json: Value = serde_json::from_str(&ok(&["detect", s(&img), "--json"])).unwrap();
    assert_eq!(json["status"], "IrisOcclusion");
    assert!(json["iris"].is_null());
    let v = jsonschema::validator_for(&schema("frame_result.schema.json")).unwrap();
    assert!(v.is_valid(&json));
}

#[test]
fn detect_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&["detect", s(&dir.path().join("missing.png"))]), 2);
    let junk = dir.path().join("junk.png");
    fs::write(&junk, b"not an image").unwrap();
    assert_eq!(code(&["detect", s(&junk)]), 2);
    assert_eq!(code(&["detect"]), 2);
}

fn check_report(report: &Value) {
    let v = jsonschema::validator_for(&schema("eval_report.schema.json")).unwrap();
    let errors: Vec<String> = v.iter_errors(report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    let d = report["distance_mm"].as_f64().unwrap();
    let deg = |mm: &Value| (mm.as_f64().unwrap() / d).atan().to_degrees();
    for axis in ["x", "y"] {
        for stat in ["mean", "max"] {
            let mm = &report[format!("{stat}_err_{axis}_mm")];
            let got = report[format!("{stat}_err_{axis}_deg")].as_f64().unwrap();
            assert!((got - deg(mm)).abs() < 1e-12, "{stat} {axis}");
        }
        for t in report["per_target"].as_array().unwrap() {
            let mm = &t[format!("err_{axis}_mm")];
            if !mm.is_null() {
                assert!((t[format!("err_{axis}_deg")].as_f64().unwrap() - deg(mm)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn eval_clean_sweep() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--sweep", "5x5", "--dwell", "5", "--out", s(dir.path())]);
    let text = ok(&["eval", s(dir.path()), "--json"]);
    let report: Value = serde_json::from_str(&text).unwrap();
    check_report(&report);
    assert_eq!(report["targets"], 25);
    assert!(report["mean_err_x_deg"].as_f64().unwrap() <= 2.50);
    assert!(report["mean_err_y_deg"].as_f64().unwrap() <= 3.07);
    // same inputs, same report
    assert_eq!(text, ok(&["eval", s(dir.path()), "--json"]));
    let table = ok(&["eval", s(dir.path())]);
    assert!(table.contains("horizontal") && table.contains("vertical"), "{table}");
}

#[test]
fn eval_reference_gaze_copies() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--sweep", "1x1", "--dwell", "5", "--out", s(dir.path())]);
    let path = dir.path().join("manifest.json");
    let mut m: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    let images = m["images"].as_array_mut().unwrap();
    let target = images.last().unwrap().clone();
    assert_eq!(target["target_screen"]["x"], 960.0);
    for _ in 0..4 {
        images.push(target.clone());
    }
    fs::write(&path, serde_json::to_string_pretty(&m).unwrap()).unwrap();
    let report: Value = serde_json::from_str(&ok(&["eval", s(dir.path()), "--json"])).unwrap();
    check_report(&report);
    assert_eq!(report["targets"], 5);
    assert!(report["mean_err_x_deg"].as_f64().unwrap() <= 0.1, "{report}");
    assert!(report["mean_err_y_deg"].as_f64().unwrap() <= 0.1, "{report}");
}

#[test]
fn eval_needs_knots_and_targets() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--count", "2", "--out", s(dir.path())]);
    assert_eq!(code(&["eval", s(dir.path())]), 2);
    assert_eq!(code(&["eval", s(&dir.path().join("absent"))]), 2);
}

#[test]
fn bench_reports_throughput() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--sweep", "2x2", "--dwell", "3", "--out", s(dir.path())]);
    let r: Value = serde_json::from_str(&ok(&["bench", "--dataset", s(dir.path()), "--repetitions", "1"])).unwrap();
    assert!(r["processings"].as_u64().unwrap() >= 1000);
    assert!(r["fps"].as_f64().unwrap() > 0.0);
    assert!(r["median_us"].as_f64().unwrap() > 0.0);
    // the checksum covers results only, so it is stable across runs
    let again: Value = serde_json::from_str(&ok(&["bench", "--dataset", s(dir.path()), "--repetitions", "1"])).unwrap();
    assert_eq!(r["checksum"], again["checksum"]);
}

#[test]
fn schema_command_prints_published_schemas() {
    for (name, file) in [
        ("eval-report", "eval_report.schema.json"),
        ("frame-result", "frame_result.schema.json"),
        ("ws-protocol", "ws_protocol.schema.json"),
    ] {
        let printed: Value = serde_json::from_str(&ok(&["schema", name])).unwrap();
        assert_eq!(printed, schema(file));
    }
}

#[test]
fn example_config_is_the_default() {
    let example = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../gazetrack.example.toml");
    let parsed = gazetrack::PipelineConfig::from_toml(&fs::read_to_string(&example).unwrap()).unwrap();
    assert_eq!(parsed, gazetrack::PipelineConfig::default());
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "colour = 3\n").unwrap();
    ok(&["synth", "--count", "1", "--out", s(dir.path())]);
    let img = dir.path().join("img_0000.pgm");
    assert_eq!(code(&["detect", s(&img), "--config", s(&bad)]), 2);
    ok(&["detect", s(&img), "--config", s(&example)]);
}
