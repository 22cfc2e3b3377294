use std::path::Path;

use occsym_core::cli::run_cli;
use occsym_core::evaluation::EvalReport;
use occsym_core::io::read_json;

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["occsym"];
    argv.extend_from_slice(args);
    run_cli(argv)
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const TWO_BLOBS: &str = r#"{"scenes": [
    {"kind": "mirrored_blob", "dimensions": [0.08, 0.06, 0.05], "sample_count": 1500,
     "pose": {"rotation": [0.2, 0.4, -0.3], "translation": [0.1, 0.2, 0.05]}},
    {"kind": "mirrored_blob", "dimensions": [0.07, 0.09, 0.06], "sample_count": 1500,
     "pose": {"rotation": [-0.6, 0.1, 0.5], "translation": [0.25, -0.1, 0.1]}}
]}"#;

#[test]
fn zero_noise_pipeline_recovers_every_plane() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "spec.json", TWO_BLOBS);
    write(
        d,
        "noise.json",
        r#"{"normal_sigma_deg": 0.0, "confidence_noise": 0.0, "false_positive_rate": 0.0}"#,
    );
    assert_eq!(
        run(&[
            "--seed",
            "3",
            "generate",
            "--spec",
            &path(d, "spec.json"),
            "--out",
            &path(d, "scenes")
        ]),
        0
    );
    for k in 0..2 {
        let scene = path(d, &format!("scenes/scene_{k:03}.ply"));
        let pred = path(d, &format!("pred_{k}.csv"));
        assert_eq!(
            run(&[
                "predict-oracle",
                "--in",
                &scene,
                "--noise",
                &path(d, "noise.json"),
                "--out",
                &pred
            ]),
            0
        );
        assert_eq!(
            run(&[
                "detect",
                "--scene",
                &scene,
                "--pred",
                &pred,
                "--out",
                &path(d, &format!("det_{k}.json"))
            ]),
            0
        );
    }
    let code = run(&[
        "eval",
        "--detections",
        &path(d, "det_0.json"),
        &path(d, "det_1.json"),
        "--scenes",
        &path(d, "scenes/scene_000.ply"),
        &path(d, "scenes/scene_001.ply"),
        "--out",
        &path(d, "eval.json"),
    ]);
    assert_eq!(code, 0);
    let report: EvalReport = read_json(&d.join("eval.json")).unwrap();
    let best = report.best_operating_point().unwrap();
    assert_eq!(best.recall, 1.0);
    assert_eq!(best.fp, 0);
}

#[test]
fn detect_rejects_predictions_for_another_scene() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "spec.json", TWO_BLOBS);
    write(d, "noise.json", "{}");
    assert_eq!(
        run(&[
            "generate",
            "--spec",
            &path(d, "spec.json"),
            "--out",
            &path(d, "scenes")
        ]),
        0
    );
    let scene0 = path(d, "scenes/scene_000.ply");
    let scene1 = path(d, "scenes/scene_001.ply");
    assert_eq!(
        run(&[
            "predict-oracle",
            "--in",
            &scene0,
            "--noise",
            &path(d, "noise.json"),
            "--out",
            &path(d, "p.csv")
        ]),
        0
    );
    assert_eq!(
        run(&[
            "detect",
            "--scene",
            &scene1,
            "--pred",
            &path(d, "p.csv"),
            "--out",
            &path(d, "det.json")
        ]),
        3
    );
    assert!(!d.join("det.json").exists());
}

#[test]
fn pr_curve_csv_recall_never_rises_with_the_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "spec.json", TWO_BLOBS);
    write(
        d,
        "occ.json",
        r#"{"mode": "halfspace", "normal": [1.0, 0.3, 0.2], "remove_fraction": 0.4}"#,
    );
    write(
        d,
        "noise.json",
        r#"{"normal_sigma_deg": 8.0, "confidence_noise": 0.2, "false_positive_rate": 0.15}"#,
    );
    assert_eq!(
        run(&[
            "--seed",
            "9",
            "generate",
            "--spec",
            &path(d, "spec.json"),
            "--out",
            &path(d, "scenes")
        ]),
        0
    );
    let mut dets = Vec::new();
    let mut scenes = Vec::new();
    for k in 0..2 {
        let occluded = path(d, &format!("occ_{k}.ply"));
        let pred = path(d, &format!("pred_{k}.csv"));
        let det = path(d, &format!("det_{k}.json"));
        let scene = path(d, &format!("scenes/scene_{k:03}.ply"));
        assert_eq!(
            run(&[
                "occlude",
                "--in",
                &scene,
                "--spec",
                &path(d, "occ.json"),
                "--out",
                &occluded
            ]),
            0
        );
        assert_eq!(
            run(&[
                "predict-oracle",
                "--in",
                &occluded,
                "--noise",
                &path(d, "noise.json"),
                "--out",
                &pred
            ]),
            0
        );
        assert_eq!(
            run(&["detect", "--scene", &occluded, "--pred", &pred, "--out", &det]),
            0
        );
        dets.push(det);
        scenes.push(occluded);
    }
    let mut args = vec!["eval", "--detections"];
    args.extend(dets.iter().map(String::as_str));
    args.push("--scenes");
    args.extend(scenes.iter().map(String::as_str));
    let out = path(d, "eval.json");
    args.extend(["--out", out.as_str()]);
    assert_eq!(run(&args), 0);
    assert_eq!(
        run(&[
            "pr-curve",
            "--eval-inputs",
            &out,
            "--out",
            &path(d, "pr.csv")
        ]),
        0
    );

    let csv = std::fs::read_to_string(d.join("pr.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,precision,recall"));
    let rows: Vec<[f64; 3]> = lines
        .map(|l| {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            [v[0], v[1], v[2]]
        })
        .collect();
    assert!(rows.len() >= 2);
    for w in rows.windows(2) {
        assert!(w[0][0] < w[1][0]);
        assert!(w[1][2] <= w[0][2]);
    }
    assert_eq!(rows.last().unwrap()[2], 0.0);
}
