//! CLI surface tests: subcommands, exit codes, atomic output behavior and
//! report schemas, driven through the built binary.

use std::path::Path;
use std::process::{Command, Output};

fn anfc(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anfc"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(
        &path,
        r#"{
  "scale": {"microns_per_pixel": 1.5, "fps": 20.0},
  "scale_area_gates": false,
  "min_clear": 1
}"#,
    )
    .unwrap();
    path
}

fn synth_image_spec(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("spec.json");
    std::fs::write(
        &path,
        r#"{"image": {"canvas": [150, 160], "loops": [{
            "arterial_width": 8.0, "venous_width": 11.0, "apex_width": 12.0,
            "noise_sigma": 0.02, "seed": 5
        }]}}"#,
    )
    .unwrap();
    path
}

#[test]
fn synth_is_deterministic_and_emits_truth() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth_image_spec(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    assert!(anfc(&["synth", spec.to_str().unwrap(), "--out", out_a.to_str().unwrap()], dir.path())
        .status
        .success());
    assert!(anfc(&["synth", spec.to_str().unwrap(), "--out", out_b.to_str().unwrap()], dir.path())
        .status
        .success());
    for name in ["phantom.png", "mask.png", "truth.json"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} must be bit-identical across runs");
    }
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth[0]["class"], "Normal");
}

#[test]
fn analyze_image_end_to_end_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth_image_spec(dir.path());
    let phantom_dir = dir.path().join("phantom");
    assert!(anfc(
        &["synth", spec.to_str().unwrap(), "--out", phantom_dir.to_str().unwrap()],
        dir.path()
    )
    .status
    .success());
    let config = write_config(dir.path());

    let run = |out: &Path| {
        let output = anfc(
            &[
                "analyze-image",
                phantom_dir.join("phantom.png").to_str().unwrap(),
                "--mask",
                phantom_dir.join("mask.png").to_str().unwrap(),
                "--config",
                config.to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--seed",
                "7",
            ],
            dir.path(),
        );
        assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    };
    let out_a = dir.path().join("report_a.json");
    let out_b = dir.path().join("report_b.json");
    run(&out_a);
    run(&out_b);
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_a).unwrap()).unwrap();
    assert_eq!(report["schema"], "anfc-image/1");
    assert_eq!(report["seed"], 7);
    assert!(report["features"]["n_kept"].as_u64().unwrap() >= 1);
    assert!(report["flags"]["venous_um"]["flag"].is_string());
}

#[test]
fn analyze_image_missing_file_exits_2_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let output = anfc(
        &["analyze-image", "nonexistent.png", "--out", out.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    assert!(!out.exists(), "no output may be written on failure");
}

#[test]
fn unknown_config_key_exits_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth_image_spec(dir.path());
    let phantom_dir = dir.path().join("phantom");
    anfc(&["synth", spec.to_str().unwrap(), "--out", phantom_dir.to_str().unwrap()], dir.path());
    let config = dir.path().join("bad.json");
    std::fs::write(&config, r#"{"tau_tortuousity": 1.8}"#).unwrap();
    let out = dir.path().join("report.json");
    let output = anfc(
        &[
            "analyze-image",
            phantom_dir.join("phantom.png").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("tau_tortuousity"), "stderr must name the key: {stderr}");
    assert!(!out.exists());
}

#[test]
fn analyze_image_with_ingested_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth_image_spec(dir.path());
    let phantom_dir = dir.path().join("phantom");
    anfc(&["synth", spec.to_str().unwrap(), "--out", phantom_dir.to_str().unwrap()], dir.path());
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(phantom_dir.join("truth.json")).unwrap())
            .unwrap();
    let apex = &truth[0]["apex"];
    let arterial = &truth[0]["arterial_point"];
    let venous = &truth[0]["venous_point"];
    let kp_path = dir.path().join("keypoints.json");
    // One out-of-bounds entry (dropped with a warning) plus the real one.
    std::fs::write(
        &kp_path,
        format!(
            r#"[{{"apex": [-1, 5], "arterial": [30, 5], "venous": [30, 15]}},
                {{"apex": [{}, {}], "arterial": [{}, {}], "venous": [{}, {}],
                  "scores": {{"normal": 0.8, "crossing": 0.1, "tortuous": 0.1}}}}]"#,
            apex["row"].as_f64().unwrap().round() as i64,
            apex["col"].as_f64().unwrap().round() as i64,
            arterial["row"].as_f64().unwrap().round() as i64,
            arterial["col"].as_f64().unwrap().round() as i64,
            venous["row"].as_f64().unwrap().round() as i64,
            venous["col"].as_f64().unwrap().round() as i64,
        ),
    )
    .unwrap();
    let config = write_config(dir.path());
    let out = dir.path().join("report.json");
    let output = anfc(
        &[
            "analyze-image",
            phantom_dir.join("phantom.png").to_str().unwrap(),
            "--mask",
            phantom_dir.join("mask.png").to_str().unwrap(),
            "--keypoints",
            kp_path.to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("out of bounds"), "warning expected: {stderr}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert!(report["features"]["n_kept"].as_u64().unwrap() >= 1);
    let kept = report["capillaries"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["measurement"].is_object())
        .unwrap();
    assert_eq!(kept["measurement"]["keypoints"]["source"], "Ingested");
    assert_eq!(kept["measurement"]["morph"], "Normal");
}

#[test]
fn analyze_video_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("video_spec.json");
    std::fs::write(
        &spec_path,
        r#"{"video": {
            "loop_spec": {"apex_center": [18.0, 45.0], "limb_length": 50.0,
                          "venous_limb_length": 8.0, "limb_spacing": 16.0,
                          "arterial_width": 9.0, "venous_width": 9.0, "apex_width": 10.0,
                          "noise_sigma": 0.03, "seed": 3},
            "canvas": [90, 84],
            "transits": [{"speed_px_per_frame": 2.0, "start_frame": 20,
                          "blob_sigma": 2.5, "blob_amplitude": 0.35, "direction": "Forward"}],
            "n_frames": 120, "fps": 20.0
        }}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("video");
    assert!(anfc(&["synth", spec_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], dir.path())
        .status
        .success());
    let config = write_config(dir.path());
    let report_path = dir.path().join("video_report.json");
    let output = anfc(
        &[
            "analyze-video",
            out_dir.join("frames").to_str().unwrap(),
            "--mask",
            out_dir.join("mask.png").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            report_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["schema"], "anfc-video/1");
    assert_eq!(report["wbc_count"], 1);
    assert_eq!(report["fps"], 20.0);
    let speed = report["events"][0]["speed_px_per_frame"].as_f64().unwrap();
    assert!((speed.abs() - 2.0).abs() <= 0.1, "speed {speed}");
}

#[test]
fn synth_video_with_unreachable_transit_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("bad_video.json");
    std::fs::write(
        &spec_path,
        r#"{"video": {
            "loop_spec": {"seed": 1},
            "canvas": [150, 160],
            "transits": [{"speed_px_per_frame": 0.5, "start_frame": 90,
                          "blob_sigma": 2.0, "blob_amplitude": 0.3, "direction": "Forward"}],
            "n_frames": 100, "fps": 20.0
        }}"#,
    )
    .unwrap();
    let output = anfc(
        &["synth", spec_path.to_str().unwrap(), "--out", dir.path().join("x").to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_modes() {
    let dir = tempfile::tempdir().unwrap();

    // Regression: pred == truth -> zero error; nulls excluded pairwise.
    std::fs::write(dir.path().join("pred.json"), "[1.0, 2.0, null, 4.0]").unwrap();
    std::fs::write(dir.path().join("truth.json"), "[1.0, 2.0, 3.0, 4.0]").unwrap();
    let out = dir.path().join("metrics.json");
    let output = anfc(
        &[
            "eval", "--mode", "regression",
            "--pred", dir.path().join("pred.json").to_str().unwrap(),
            "--truth", dir.path().join("truth.json").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(metrics["mae"], 0.0);
    assert_eq!(metrics["rmse"], 0.0);

    // Classification.
    std::fs::write(dir.path().join("cp.json"), r#"["a","a","b","b"]"#).unwrap();
    std::fs::write(dir.path().join("ct.json"), r#"["a","b","a","b"]"#).unwrap();
    let output = anfc(
        &[
            "eval", "--mode", "classification",
            "--pred", dir.path().join("cp.json").to_str().unwrap(),
            "--truth", dir.path().join("ct.json").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(metrics["accuracy"], 0.5);

    // Detection.
    std::fs::write(dir.path().join("dp.json"), "[[10, 10], [52, 48]]").unwrap();
    std::fs::write(dir.path().join("dt.json"), "[[10, 10], [50, 50], [90, 90]]").unwrap();
    let output = anfc(
        &[
            "eval", "--mode", "detection",
            "--pred", dir.path().join("dp.json").to_str().unwrap(),
            "--truth", dir.path().join("dt.json").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let s = metrics["sensitivity"].as_f64().unwrap();
    assert!((s - 2.0 / 3.0).abs() < 1e-9);

    // Mismatched lengths -> exit 2.
    std::fs::write(dir.path().join("short.json"), "[1.0]").unwrap();
    let output = anfc(
        &[
            "eval", "--mode", "regression",
            "--pred", dir.path().join("short.json").to_str().unwrap(),
            "--truth", dir.path().join("truth.json").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn eval_segmentation_mode() {
    let dir = tempfile::tempdir().unwrap();
    let spec = synth_image_spec(dir.path());
    let phantom_dir = dir.path().join("phantom");
    anfc(&["synth", spec.to_str().unwrap(), "--out", phantom_dir.to_str().unwrap()], dir.path());
    let out = dir.path().join("seg.json");
    let output = anfc(
        &[
            "eval", "--mode", "segmentation",
            "--pred", phantom_dir.join("mask.png").to_str().unwrap(),
            "--truth", phantom_dir.join("mask.png").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(metrics["sensitivity"], 1.0);
}

#[test]
fn batch_writes_reports_and_subject_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path());
    // Two phantom images with sibling mask files.
    for (i, seed) in [(1, 11u64), (2, 12u64)] {
        let spec_path = dir.path().join(format!("spec{i}.json"));
        std::fs::write(
            &spec_path,
            format!(
                r#"{{"image": {{"canvas": [150, 160], "loops": [{{
                    "arterial_width": 8.0, "venous_width": 11.0, "apex_width": 12.0,
                    "noise_sigma": 0.02, "seed": {seed}
                }}]}}}}"#
            ),
        )
        .unwrap();
        let pdir = dir.path().join(format!("p{i}"));
        anfc(&["synth", spec_path.to_str().unwrap(), "--out", pdir.to_str().unwrap()], dir.path());
        std::fs::copy(pdir.join("phantom.png"), dir.path().join(format!("img{i}.png"))).unwrap();
        std::fs::copy(pdir.join("mask.png"), dir.path().join(format!("img{i}.mask.png"))).unwrap();
    }
    let out_dir = dir.path().join("batch_out");
    let output = anfc(
        &[
            "batch",
            dir.path().join("img1.png").to_str().unwrap(),
            dir.path().join("img2.png").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--subject",
            "s01",
        ],
        dir.path(),
    );
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    assert!(out_dir.join("img1.report.json").exists());
    assert!(out_dir.join("img2.report.json").exists());
    let subject: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("subject.json")).unwrap())
            .unwrap();
    assert_eq!(subject["schema"], "anfc-report/1");
    assert_eq!(subject["subject"], "s01");
    assert_eq!(subject["images"].as_array().unwrap().len(), 2);
    assert!(subject["features"]["mean_venous_um"]["value"].is_number());
}

#[test]
fn frames_without_fps_metadata_default_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    // Build a video, then strip its metadata file.
    let spec_path = dir.path().join("video_spec.json");
    std::fs::write(
        &spec_path,
        r#"{"video": {
            "loop_spec": {"apex_center": [18.0, 45.0], "limb_length": 50.0,
                          "venous_limb_length": 8.0, "limb_spacing": 16.0,
                          "arterial_width": 9.0, "venous_width": 9.0, "apex_width": 10.0, "seed": 4},
            "canvas": [90, 84],
            "transits": [],
            "n_frames": 12, "fps": 20.0
        }}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("video");
    anfc(&["synth", spec_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()], dir.path());
    std::fs::remove_file(out_dir.join("frames").join("video.json")).unwrap();
    let report_path = dir.path().join("report.json");
    let config = write_config(dir.path());
    let output = anfc(
        &[
            "analyze-video",
            out_dir.join("frames").to_str().unwrap(),
            "--mask",
            out_dir.join("mask.png").to_str().unwrap(),
            "--config",
            config.to_str().unwrap(),
            "--out",
            report_path.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("defaulting fps to 20") || stderr.contains("defaulting to 20"), "{stderr}");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["fps"], 20.0);
}
