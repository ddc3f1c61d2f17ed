use std::path::Path;
use std::process::{Command, Output};

use roadsense::format::{read_labels, read_response};
use roadsense_core::eval::Label;

fn roadsense(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadsense"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write(dir: &Path, name: &str, contents: &str) {
    std::fs::write(dir.join(name), contents).unwrap();
}

const BUMP_CONFIG: &str = r#"
seed = 4
[scene]
duration = 120
[[sequence]]
id = "bump"
distance = 10.0
background_frames = [20]
[[sequence.bump]]
kind = "vehicle_displacement"
apex_frame = 60
duration = 10.8
amplitude = 0.06
"#;

#[test]
fn minimal_config_gives_flat_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "synth.toml", "[scene]\nduration = 40\n");
    let out = roadsense(&["synth", "--config", "synth.toml", "--output", "data"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "sequence,frames,anomalies\nseq_000,40,0\n");
    let labels = read_labels(&dir.path().join("data/labels.csv")).unwrap();
    assert!(labels.is_empty());
    for f in ["correspondences.csv", "track.csv", "pitch_true.csv"] {
        assert!(dir.path().join("data/seq_000").join(f).is_file(), "{f}");
    }
}

#[test]
fn distance_suite_has_one_positive_per_distance() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "synth.toml",
        "[scene]\nduration = 60\n[suite]\nkind = \"distance\"\ndistances = [5, 10, 15, 20, 30, 40]\ndelta = 0.06\n",
    );
    let out = roadsense(&["synth", "--config", "synth.toml", "--output", "data"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let labels = read_labels(&dir.path().join("data/labels.csv")).unwrap();
    assert_eq!(labels.len(), 6);
    assert!(labels.iter().all(|l| l.label == Label::Anomaly));
    let sequences: std::collections::BTreeSet<_> = labels.iter().map(|l| l.sequence.clone()).collect();
    assert_eq!(sequences.len(), 6);
}

#[test]
fn seed_flag_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "synth.toml", "[scene]\nduration = 30\n");
    assert!(roadsense(
        &["synth", "--config", "synth.toml", "--output", "a", "--seed", "1"],
        dir.path()
    )
    .status
    .success());
    assert!(roadsense(
        &["synth", "--config", "synth.toml", "--output", "b", "--seed", "2"],
        dir.path()
    )
    .status
    .success());
    let read = |p: &str| std::fs::read(dir.path().join(p).join("seq_000/track.csv")).unwrap();
    assert_ne!(read("a"), read("b"));
}

#[test]
fn detect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(root, "synth.toml", BUMP_CONFIG);
    assert!(
        roadsense(&["synth", "--config", "synth.toml", "--output", "data"], root)
            .status
            .success()
    );

    let comp = roadsense(&["detect", "--input", "data", "--output", "comp"], root);
    assert!(comp.status.success(), "{}", stderr(&comp));
    assert!(!stderr(&comp).contains("warning"), "{}", stderr(&comp));
    let rows: Vec<String> = stdout(&comp).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 1, "{rows:?}");
    let frame: usize = rows[0].split(',').nth(1).unwrap().parse().unwrap();
    assert!(frame.abs_diff(60) <= 30, "{frame}");

    let raw = roadsense(
        &["detect", "--input", "data", "--output", "raw", "--no-compensation"],
        root,
    );
    assert!(raw.status.success());
    let a = std::fs::read_to_string(root.join("comp/bump/response.csv")).unwrap();
    let b = std::fs::read_to_string(root.join("raw/bump/response.csv")).unwrap();
    let mut changed = std::collections::BTreeSet::new();
    for (la, lb) in a.lines().zip(b.lines()).skip(2) {
        for (i, (x, y)) in la.split(',').zip(lb.split(',')).enumerate() {
            if x != y {
                changed.insert(i);
            }
        }
    }
    // y_comp and s
    assert_eq!(changed, [2, 5].into_iter().collect());

    let table = read_response(&root.join("comp/bump/response.csv")).unwrap();
    assert_eq!(table.s.len(), 120);
    assert!(table.s[..29].iter().all(Option::is_none));
}

#[test]
fn zero_detections_still_succeed() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "synth.toml",
        "[scene]\nduration = 40\nnoise_sigma = 0.0\noutlier_fraction = 0.0\n",
    );
    assert!(
        roadsense(&["synth", "--config", "synth.toml", "--output", "data"], dir.path())
            .status
            .success()
    );
    let out = roadsense(
        &[
            "detect",
            "--input",
            "data",
            "--output",
            "run",
            "--threshold",
            "0.5",
            "--window",
            "10",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out), "sequence,frame,response\n");
    let det = std::fs::read_to_string(dir.path().join("run/seq_000/detections.csv")).unwrap();
    assert_eq!(det, "# roadsense detections v1\nframe,response,start,end\n");
}

#[test]
fn missing_calibration_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "synth.toml", "[scene]\nduration = 30\n");
    assert!(
        roadsense(&["synth", "--config", "synth.toml", "--output", "data"], dir.path())
            .status
            .success()
    );
    std::fs::remove_file(dir.path().join("data/calibration.txt")).unwrap();
    let out = roadsense(&["detect", "--input", "data", "--output", "run"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("data/calibration.txt"), "{}", stderr(&out));
}

#[test]
fn misaligned_inputs_exit_4() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "synth.toml", "[scene]\nduration = 30\n");
    assert!(
        roadsense(&["synth", "--config", "synth.toml", "--output", "data"], dir.path())
            .status
            .success()
    );
    let path = dir.path().join("data/seq_000/correspondences.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("29,0,100.0,100.0,101.0,101.0,1\n");
    std::fs::write(&path, text).unwrap();
    let out = roadsense(&["detect", "--input", "data", "--output", "run"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "bad.toml", "[scene\nduration = 30\n");
    let out = roadsense(&["synth", "--config", "bad.toml", "--output", "data"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("bad.toml"));
    write(dir.path(), "run.toml", "[pipeline]\nwindow = 1\n");
    let out = roadsense(
        &["detect", "--config", "run.toml", "--input", ".", "--output", "x"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports_and_label_errors() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(
        root,
        "synth.toml",
        "seed = 8\n[scene]\nduration = 90\n[suite]\nkind = \"easy\"\npositives = 5\nnegatives = 5\n",
    );
    assert!(
        roadsense(&["synth", "--config", "synth.toml", "--output", "data"], root)
            .status
            .success()
    );
    assert!(roadsense(&["detect", "--input", "data", "--output", "run"], root)
        .status
        .success());

    let out = roadsense(
        &[
            "eval",
            "--labels",
            "data/labels.csv",
            "--run",
            "comp=run",
            "--output",
            "eval",
        ],
        root,
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let line = stdout(&out).lines().nth(1).unwrap().to_string();
    assert!(line.starts_with("comp,1.000000,1.000000,0.000000"), "{line}");
    for f in ["metrics.toml", "roc.csv", "fpr_intensity.csv", "scores.csv"] {
        assert!(root.join("eval/comp").join(f).is_file(), "{f}");
    }
    let metrics = std::fs::read_to_string(root.join("eval/comp/metrics.toml")).unwrap();
    assert!(metrics.contains("stratified = true"));

    write(
        root,
        "unknown.csv",
        "# roadsense labels v1\nsequence,apex_frame,label\nnope,10,anomaly\n",
    );
    let out = roadsense(
        &[
            "eval",
            "--labels",
            "unknown.csv",
            "--run",
            "comp=run",
            "--output",
            "eval2",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(5));
    assert!(stderr(&out).contains("nope"));

    let single: String = std::fs::read_to_string(root.join("data/labels.csv"))
        .unwrap()
        .lines()
        .filter(|l| !l.ends_with(",background"))
        .map(|l| format!("{l}\n"))
        .collect();
    write(root, "single.csv", &single);
    let out = roadsense(
        &[
            "eval",
            "--labels",
            "single.csv",
            "--run",
            "comp=run",
            "--output",
            "eval3",
        ],
        root,
    );
    assert_eq!(out.status.code(), Some(5), "{}", stderr(&out));
}

#[test]
fn fit_model_exact_and_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "d.csv",
        "# roadsense distance_response v1\ndistance,response\n10,8.396\n20,5.198\n",
    );
    let out = roadsense(
        &[
            "fit-model",
            "--input",
            "d.csv",
            "--focal",
            "1066",
            "--delta",
            "0.06",
            "--output",
            "fit.toml",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: toml::Table = toml::from_str(&std::fs::read_to_string(dir.path().join("fit.toml")).unwrap()).unwrap();
    assert!((doc["alpha"].as_float().unwrap() - 1.0).abs() < 1e-9);
    assert!((doc["beta"].as_float().unwrap() - 2.0).abs() < 1e-9);

    write(
        dir.path(),
        "same.csv",
        "# roadsense distance_response v1\ndistance,response\n10,1\n10,2\n",
    );
    let out = roadsense(
        &["fit-model", "--input", "same.csv", "--focal", "1066", "--delta", "0.06"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(6));
}
