//! Command-line surface tests: subcommands, exit codes and artifact
//! determinism, driven through the same entry point the binary uses.

use std::path::{Path, PathBuf};

use typology::cli::run_from;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["typology".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_from(argv)
}

fn write_spec(dir: &Path, n: usize, views: usize, seed: u64) -> PathBuf {
    let path = dir.join("spec.json");
    let spec = format!(
        r#"{{
  "n_instances": {n},
  "views_per_instance": {views},
  "image_size": 128,
  "families": [],
  "seed": {seed}
}}"#
    );
    std::fs::write(&path, spec).unwrap();
    path
}

#[test]
fn generate_then_eval_single_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), 3, 3, 5);
    let out = dir.path().join("ds");
    assert_eq!(
        run(&["generate", spec.to_str().unwrap(), out.to_str().unwrap()]),
        0
    );
    assert!(out.join("part00").join("v000.pgm").exists());

    // Refuses to overwrite without --force.
    assert_eq!(
        run(&["generate", spec.to_str().unwrap(), out.to_str().unwrap()]),
        2
    );
    assert_eq!(
        run(&[
            "generate",
            spec.to_str().unwrap(),
            out.to_str().unwrap(),
            "--force"
        ]),
        0
    );

    assert_eq!(
        run(&[
            "eval",
            out.to_str().unwrap(),
            "--pipeline",
            "P3",
            "--format",
            "csv"
        ]),
        0
    );
    // Unknown pipeline id is a usage error.
    assert_eq!(
        run(&["eval", out.to_str().unwrap(), "--pipeline", "nope"]),
        1
    );
}

#[test]
fn malformed_config_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let out = dir.path().join("ds");
    assert_eq!(
        run(&["generate", bad.to_str().unwrap(), out.to_str().unwrap()]),
        2
    );

    let unknown_field = dir.path().join("unknown.json");
    std::fs::write(&unknown_field, r#"{"n_instancez": 3}"#).unwrap();
    assert_eq!(
        run(&[
            "generate",
            unknown_field.to_str().unwrap(),
            out.to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn missing_dataset_is_a_data_error() {
    assert_eq!(run(&["eval", "/nonexistent/dataset"]), 2);
    assert_eq!(
        run(&["recognize", "/nonexistent/model", "/nonexistent/img.pgm"]),
        2
    );
}

#[test]
fn train_then_recognize() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), 2, 3, 11);
    let ds = dir.path().join("ds");
    assert_eq!(
        run(&["generate", spec.to_str().unwrap(), ds.to_str().unwrap()]),
        0
    );

    let model = dir.path().join("model");
    assert_eq!(
        run(&[
            "--seed",
            "11",
            "train",
            ds.to_str().unwrap(),
            model.to_str().unwrap(),
            "--k",
            "1"
        ]),
        0
    );
    let manifest = std::fs::read_to_string(model.join("manifest.json")).unwrap();
    assert!(manifest.contains("best_average"));
    assert!(model.join("stage1.tplg").exists());
    assert!(model.join("stage2_T0.tplg").exists());

    let probe = ds.join("part00").join("v000.pgm");
    assert_eq!(
        run(&[
            "recognize",
            model.to_str().unwrap(),
            probe.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(
        run(&[
            "recognize",
            model.to_str().unwrap(),
            probe.to_str().unwrap(),
            "--format",
            "json"
        ]),
        0
    );

    // K larger than the instance count is a usage error.
    let model2 = dir.path().join("model2");
    assert_eq!(
        run(&[
            "train",
            ds.to_str().unwrap(),
            model2.to_str().unwrap(),
            "--k",
            "5"
        ]),
        1
    );
}

#[test]
fn benchmark_artifacts_and_report_rerender() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), 3, 6, 17);
    let ds = dir.path().join("ds");
    assert_eq!(
        run(&["generate", spec.to_str().unwrap(), ds.to_str().unwrap()]),
        0
    );

    let bench = |out: &Path| {
        run(&[
            "--seed",
            "17",
            "benchmark",
            ds.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--p-range",
            "2..3",
            "--t-range",
            "4..6:2",
            "--k",
            "1",
        ])
    };
    let out1 = dir.path().join("b1");
    let out2 = dir.path().join("b2");
    assert_eq!(bench(&out1), 0);
    assert_eq!(bench(&out2), 0);

    for name in ["report.json", "report.csv", "report.md"] {
        assert!(out1.join(name).exists(), "{name} missing");
    }
    // CSV and JSON artifacts are byte-identical across reruns; Markdown
    // may differ in its timing numbers only.
    let csv1 = std::fs::read(out1.join("report.csv")).unwrap();
    let csv2 = std::fs::read(out2.join("report.csv")).unwrap();
    assert_eq!(csv1, csv2);
    let json1 = std::fs::read(out1.join("report.json")).unwrap();
    let json2 = std::fs::read(out2.join("report.json")).unwrap();
    assert_eq!(json1, json2);

    // report re-renders CSV byte-identically from the JSON.
    let rendered = dir.path().join("rerendered.csv");
    assert_eq!(
        run(&[
            "report",
            out1.join("report.json").to_str().unwrap(),
            "--format",
            "csv",
            "--out",
            rendered.to_str().unwrap()
        ]),
        0
    );
    assert_eq!(std::fs::read(&rendered).unwrap(), csv1);

    // Bad ranges are usage errors.
    assert_eq!(
        run(&[
            "benchmark",
            ds.to_str().unwrap(),
            "--out",
            dir.path().join("b3").to_str().unwrap(),
            "--p-range",
            "9..9"
        ]),
        1
    );
}

#[test]
fn registry_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), 2, 2, 3);
    let ds = dir.path().join("ds");
    assert_eq!(
        run(&["generate", spec.to_str().unwrap(), ds.to_str().unwrap()]),
        0
    );

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"max_keypoints": 50, "ratio_threshold": 0.7}"#).unwrap();
    assert_eq!(
        run(&[
            "--config",
            cfg.to_str().unwrap(),
            "eval",
            ds.to_str().unwrap(),
            "--pipeline",
            "P2",
            "--format",
            "csv"
        ]),
        0
    );

    let bad_cfg = dir.path().join("bad_cfg.json");
    std::fs::write(&bad_cfg, r#"{"max_keypoint": 50}"#).unwrap();
    assert_eq!(
        run(&[
            "--config",
            bad_cfg.to_str().unwrap(),
            "eval",
            ds.to_str().unwrap()
        ]),
        2
    );
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["benchmark", "--help"]), 0);
}
