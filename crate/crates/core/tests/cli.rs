//! Exit-code and artifact checks for the command-line front end.

mod common;

use std::path::Path;

use cueforge_core::cli::run;
use cueforge_core::manifest::load_dataset;

fn argv(parts: &[&str]) -> Vec<String> {
    std::iter::once("cueforge")
        .chain(parts.iter().copied())
        .map(String::from)
        .collect()
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn texture_decomposition_succeeds_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 3, 2, 40);
    let out = dir.path().join("texture");
    let code = run(argv(&[
        "decompose",
        "texture",
        "--seeds",
        "5",
        "--out-size",
        "40x40",
        "--seed",
        "11",
        "--out",
        &s(&out),
        &s(&dir.path().join("manifest.json")),
    ]));
    assert_eq!(code, 0);
    let manifest = load_dataset(&out.join("manifest.json")).unwrap();
    assert_eq!(manifest.items.len(), 3);
    // Provenance reconstructs the command line verbatim.
    assert!(manifest.provenance.starts_with("cueforge decompose texture"));
    assert!(manifest.provenance.contains("--seed 11"));
}

#[test]
fn missing_manifest_exits_2_naming_the_path() {
    let code = run(argv(&[
        "decompose",
        "texture",
        "--seed",
        "1",
        "--out",
        "/tmp/nowhere",
        "/definitely/not/here.json",
    ]));
    assert_eq!(code, 2);
}

#[test]
fn invalid_alpha_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 1, 2, 16);
    let code = run(argv(&[
        "decompose",
        "eed",
        "--alpha",
        "0.9",
        "--steps",
        "1",
        "--out",
        &s(&dir.path().join("eed")),
        &s(&dir.path().join("manifest.json")),
    ]));
    assert_eq!(code, 1);
}

#[test]
fn unstable_tau_is_rejected_unless_forced() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 1, 2, 16);
    let base = [
        "decompose",
        "eed",
        "--tau",
        "0.4",
        "--steps",
        "1",
        "--out",
    ];
    let out = s(&dir.path().join("eed"));
    let manifest = s(&dir.path().join("manifest.json"));
    let mut rejected = base.to_vec();
    rejected.push(&out);
    rejected.push(&manifest);
    assert_eq!(run(argv(&rejected)), 1);

    let mut forced = vec!["decompose", "eed", "--tau", "0.4", "--steps", "1", "--force-tau", "--out"];
    forced.push(&out);
    forced.push(&manifest);
    assert_eq!(run(argv(&forced)), 0);
}

#[test]
fn color_projection_emits_gray_dataset() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 2, 2, 24);
    let out = dir.path().join("v_only");
    let code = run(argv(&[
        "decompose",
        "color",
        "--keep",
        "v",
        "--gray",
        "mean",
        "--out",
        &s(&out),
        &s(&dir.path().join("manifest.json")),
    ]));
    assert_eq!(code, 0);
    let manifest = load_dataset(&out.join("manifest.json")).unwrap();
    assert!(!manifest.cue_set.hs && manifest.cue_set.v);
    let (img, _) = manifest.load_item(0).unwrap();
    assert_eq!(img.channels(), 1);
}

#[test]
fn validate_reports_on_good_and_bad_masks() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 2, 3, 24);
    assert_eq!(
        run(argv(&["validate", &s(&dir.path().join("manifest.json"))])),
        0
    );
    assert_eq!(run(argv(&["validate", "/no/such/manifest.json"])), 2);
}

#[test]
fn help_exits_zero() {
    assert_eq!(run(argv(&["--help"])), 0);
    assert_eq!(run(argv(&["decompose", "--help"])), 0);
}

#[test]
fn unknown_subcommand_exits_one() {
    assert_eq!(run(argv(&["frobnicate"])), 1);
}

#[test]
fn eed_snapshots_are_written_when_requested() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 1, 2, 16);
    let out = dir.path().join("eed");
    let code = run(argv(&[
        "decompose",
        "eed",
        "--steps",
        "8",
        "--snapshot-every",
        "4",
        "--out",
        &s(&out),
        &s(&dir.path().join("manifest.json")),
    ]));
    assert_eq!(code, 0);
    assert!(out.join("00000_step000004.pfm").exists());
    assert!(out.join("00000_step000008.pfm").exists());
}

#[test]
fn full_fusion_path_produces_heatmaps() {
    let dir = tempfile::tempdir().unwrap();
    common::synthetic_base(dir.path(), 2, 2, 24);
    let manifest = s(&dir.path().join("manifest.json"));
    let expert_a = dir.path().join("expert_a");
    let expert_b = dir.path().join("expert_b");
    for (out, keep, seed) in [(&expert_a, "vhs", "3"), (&expert_b, "v", "4")] {
        let code = run(argv(&[
            "train-color",
            "--keep",
            keep,
            "--spec",
            if keep == "v" { "1,8,K" } else { "3,8,K" },
            "--epochs",
            "3",
            "--samples-per-image",
            "128",
            "--seed",
            seed,
            "--out",
            &s(out),
            &manifest,
        ]));
        assert_eq!(code, 0);
    }
    let fused = dir.path().join("fused");
    let code = run(argv(&[
        "fuse",
        "--expert-a",
        &s(&expert_a),
        "--expert-b",
        &s(&expert_b),
        "--gt",
        &manifest,
        "--epochs",
        "2",
        "--seed",
        "9",
        "--out",
        &s(&fused),
    ]));
    assert_eq!(code, 0);
    assert!(fused.join("gate.json").exists());
    assert!(fused.join("base_000_weight.png").exists());
    assert!(fused.join("base_000_weight.csv").exists());
    assert!(fused.join("base_000_fused.png").exists());

    // Evaluate the fused predictions? The fused masks use a _fused suffix;
    // evaluate consumes _pred files from expert dirs instead.
    let eval = dir.path().join("eval.json");
    let code = run(argv(&[
        "evaluate",
        "--pred",
        &s(&expert_a),
        "--manifest",
        &manifest,
        "--report",
        &s(&eval),
    ]));
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    assert!(report["miou"].is_f64());
    assert!(dir.path().join("eval.coverage.csv").exists());

    let bundle = dir.path().join("report");
    let code = run(argv(&[
        "report",
        "--evaluation",
        &s(&eval),
        "--heatmap",
        &s(&fused.join("base_000_weight.png")),
        "--out",
        &s(&bundle),
    ]));
    assert_eq!(code, 0);
    assert!(bundle.join("per_class_iou.csv").exists());
    assert!(bundle.join("accuracy.csv").exists());
    assert!(bundle.join("index.json").exists());
    assert!(bundle.join("base_000_weight.png").exists());
}

#[test]
fn report_over_two_runs_has_both_columns() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synthetic_base(dir.path(), 1, 2, 24);
    // Two prediction sets: perfect and constant-zero.
    for (name, flip) in [("good", false), ("zero", true)] {
        let pred_dir = dir.path().join(name);
        std::fs::create_dir_all(&pred_dir).unwrap();
        let (_, mask) = manifest.load_item(0).unwrap();
        let mut pred = mask.clone();
        if flip {
            pred.labels_mut().fill(0);
        }
        let stem = manifest.items[0].image.file_stem().unwrap().to_string_lossy();
        cueforge_core::io::save_mask(&pred, &pred_dir.join(format!("{stem}_pred.png"))).unwrap();
        let code = run(argv(&[
            "evaluate",
            "--pred",
            &s(&pred_dir),
            "--manifest",
            &s(&dir.path().join("manifest.json")),
            "--report",
            &s(&dir.path().join(format!("{name}.json"))),
        ]));
        assert_eq!(code, 0);
    }
    let bundle = dir.path().join("bundle");
    let code = run(argv(&[
        "report",
        "--evaluation",
        &s(&dir.path().join("good.json")),
        "--evaluation",
        &s(&dir.path().join("zero.json")),
        "--out",
        &s(&bundle),
    ]));
    assert_eq!(code, 0);
    let csv = std::fs::read_to_string(bundle.join("per_class_iou.csv")).unwrap();
    assert!(csv.lines().next().unwrap().contains("good"));
    assert!(csv.lines().next().unwrap().contains("zero"));
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 3);
    // Coverage CSVs from both runs land in the bundle.
    assert!(bundle.join("coverage_good.csv").exists());
    assert!(bundle.join("coverage_zero.csv").exists());
}

#[test]
fn evaluate_of_perfect_prediction_reports_miou_one() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = common::synthetic_base(dir.path(), 2, 3, 24);
    // Copy the ground truth masks as predictions.
    let pred_dir = dir.path().join("pred");
    std::fs::create_dir_all(&pred_dir).unwrap();
    for i in 0..manifest.items.len() {
        let (_, mask) = manifest.load_item(i).unwrap();
        let stem = manifest.items[i].image.file_stem().unwrap().to_string_lossy();
        cueforge_core::io::save_mask(&mask, &pred_dir.join(format!("{stem}_pred.png"))).unwrap();
    }
    let eval = dir.path().join("eval.json");
    let code = run(argv(&[
        "evaluate",
        "--pred",
        &s(&pred_dir),
        "--manifest",
        &s(&dir.path().join("manifest.json")),
        "--report",
        &s(&eval),
    ]));
    assert_eq!(code, 0);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval).unwrap()).unwrap();
    assert_eq!(report["miou"].as_f64(), Some(1.0));
    assert_eq!(report["accuracy"]["overall"].as_f64(), Some(1.0));
}
