use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

use rand::Rng;

use behavior_irl::birl::Trajectory;
use behavior_irl::cli::artifacts::{
    read_class_probs, read_json, read_jsonl, read_mode_thetas, read_timelines, read_user_thetas, read_zeta,
    ModeRecord,
};
use behavior_irl::cli::Manifest;
use behavior_irl::eval::{permutation_matched_accuracy, Report};
use behavior_irl::mooc::EventRecord;
use behavior_irl::rng::rng_from_seed;
use behavior_irl::synth::GroundTruth;

const FAST: &str = "n_samples = 200\nburn_in = 50\nn_sweeps = 10\ndbc_burn_in = 2\n";

fn raw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_behavior-irl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = raw(dir, args);
    assert!(
        out.status.success(),
        "{} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Runs a failing command; returns the error kind from the stderr JSON line.
fn fails(dir: &Path, args: &[&str]) -> String {
    let out = raw(dir, args);
    assert_eq!(out.status.code(), Some(1), "{}", args.join(" "));
    let stderr = String::from_utf8(out.stderr).unwrap();
    let line = stderr.lines().last().expect("an error line");
    let v: serde_json::Value = serde_json::from_str(line).expect("error line is JSON");
    assert!(v["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
    v["error"]["kind"].as_str().unwrap().to_string()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

#[test]
fn simulate_and_build_give_expected_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--preset", "three_modes", "--users", "50", "--steps", "100", "--out", "sim"]);
    let events: Vec<EventRecord> = read_jsonl(&d.join("sim/events.jsonl")).unwrap();
    assert_eq!(events.len(), 5000);
    let truth = GroundTruth::read_path(&d.join("sim/truth.json")).unwrap();
    assert!(truth.is_switched());
    assert_eq!(truth.users.len(), 50);
    assert!(truth.users.iter().all(|u| u.steps == 100 && u.modes.as_ref().unwrap().len() == 100));
    assert!(!d.join("sim/labels.csv").exists());

    ok(d, &["build-mdp", "--log", "sim/events.jsonl", "--features", "sim/features.json", "--out", "mdp"]);
    let trajs: Vec<Trajectory> = read_jsonl(&d.join("mdp/trajectories.jsonl")).unwrap();
    assert_eq!(trajs.len(), 50);
    assert!(trajs.iter().all(|t| t.len() == 100));
    let manifest = Manifest::read_path(&d.join("mdp/manifest.json")).unwrap();
    assert_eq!(manifest.inputs.len(), 2);
    assert_eq!(manifest.outputs.len(), 3);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(d, &["--seed", "5", "simulate", "--preset", "seven_classes", "--users", "14", "--steps", "30", "--out", out]);
    }
    ok(d, &["--seed", "6", "simulate", "--preset", "seven_classes", "--users", "14", "--steps", "30", "--out", "c"]);
    let a = files(&d.join("a"));
    assert_eq!(a, files(&d.join("b")));
    assert_ne!(a["events.jsonl"], files(&d.join("c"))["events.jsonl"]);
    assert!(a.contains_key("labels.csv"));
}

#[test]
fn one_mode_dbc_gives_flat_timelines() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "one.toml", &format!("{FAST}num_modes = 1\n"));
    ok(d, &["simulate", "--preset", "single_mode", "--users", "4", "--steps", "40", "--out", "sim"]);
    ok(d, &["--config", "one.toml", "dbc", "--log", "sim/events.jsonl", "--features", "sim/features.json", "--out", "run"]);

    let rows = read_timelines(&d.join("run/timelines.csv")).unwrap();
    let modes: Vec<ModeRecord> = read_jsonl(&d.join("run/modes.jsonl")).unwrap();
    assert_eq!(modes.len(), 4);
    for m in &modes {
        let mine: Vec<_> = rows.iter().filter(|r| r.user_id == m.user_id).collect();
        assert_eq!(mine.len(), 40);
        assert!(mine.iter().enumerate().all(|(t, r)| r.step == t && r.mode == 0 && (r.max_marginal - 1.0).abs() < 1e-12));
    }
    assert_eq!(read_zeta(&d.join("run/zeta.csv")).unwrap(), vec![vec![1.0]]);
    let (names, thetas) = read_mode_thetas(&d.join("run/thetas.csv")).unwrap();
    assert_eq!(names.len(), 3);
    assert_eq!(thetas.len(), 1);
    let svg = std::fs::read_to_string(d.join("run/timelines.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    let report = ok(d, &["eval", "--run", "run", "--truth", "sim/truth.json"]);
    let Report::Switched(r) = serde_json::from_str(&report).unwrap() else {
        panic!("expected a switched report")
    };
    assert_eq!(r.mode_accuracy, 1.0);
}

#[test]
fn fully_labeled_sbc_keeps_the_labels() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write(d, "fast.toml", FAST);
    ok(d, &["simulate", "--preset", "two_classes", "--users", "6", "--steps", "50", "--out", "sim"]);
    let truth = GroundTruth::read_path(&d.join("sim/truth.json")).unwrap();
    let mut labels = String::from("user_id,class\n");
    for u in &truth.users {
        labels.push_str(&format!("{},{}\n", u.user_id, u.class.as_ref().unwrap()));
    }
    write(d, "all.csv", &labels);
    ok(d, &[
        "--config", "fast.toml", "sbc", "--log", "sim/events.jsonl", "--features", "sim/features.json",
        "--labels", "all.csv", "--out", "run",
    ]);
    let (classes, rows) = read_class_probs(&d.join("run/class_probs.csv")).unwrap();
    assert_eq!(rows.len(), 6);
    for (r, u) in rows.iter().zip(&truth.users) {
        assert_eq!(r.user_id, u.user_id);
        assert_eq!(&r.label, u.class.as_ref().unwrap());
        assert!(r.labeled);
        let k = classes.iter().position(|c| *c == r.label).unwrap();
        assert_eq!(r.probs[k], 1.0);
    }
    let (features, thetas) = read_user_thetas(&d.join("run/thetas.csv")).unwrap();
    assert_eq!(features, truth.feature_names);
    assert!(thetas.iter().all(|t| t.theta.0.len() == features.len()));

    let out = ok(d, &["eval", "--run", "run", "--truth", "sim/truth.json", "--out", "ev"]);
    let Report::Static(r) = serde_json::from_str(&out).unwrap() else {
        panic!("expected a static report")
    };
    assert_eq!(r.accuracy, 1.0);
    assert_eq!(r.unlabeled_accuracy, None);
    let saved: Report = read_json(&d.join("ev/report.json")).unwrap();
    assert_eq!(saved, Report::Static(r));
}

#[test]
fn random_predictions_score_near_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--preset", "three_modes", "--users", "100", "--steps", "100", "--out", "sim"]);
    let truth = GroundTruth::read_path(&d.join("sim/truth.json")).unwrap();
    let planted: Vec<Vec<usize>> = truth.users.iter().map(|u| u.modes.clone().unwrap()).collect();
    let mut rng = rng_from_seed(1);
    let guesses: Vec<Vec<usize>> = planted
        .iter()
        .map(|z| z.iter().map(|_| rng.random_range(0..3)).collect())
        .collect();
    let (acc, _) = permutation_matched_accuracy(&guesses, &planted).unwrap();
    assert!((acc - 1.0 / 3.0).abs() < 0.03, "{acc}");
}

#[test]
fn manifest_reruns_and_detects_changed_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["simulate", "--preset", "single_mode", "--users", "3", "--steps", "30", "--out", "sim"]);
    ok(d, &["build-mdp", "--log", "sim/events.jsonl", "--out", "mdp"]);
    let first = files(&d.join("mdp"));
    ok(d, &["--manifest", "mdp/manifest.json", "--out", "again"]);
    assert_eq!(first, files(&d.join("again")));

    let mut events = std::fs::read_to_string(d.join("sim/events.jsonl")).unwrap();
    events.push('\n');
    write(d, "sim/events.jsonl", &events);
    assert_eq!(fails(d, &["--manifest", "mdp/manifest.json", "--out", "third"]), "mismatch");
}

#[test]
fn errors_are_json_lines_with_exit_code_one() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    assert_eq!(fails(d, &["simulate", "--preset", "nope", "--out", "x"]), "invalid_input");
    assert!(!d.join("x").exists());

    write(d, "zero.toml", "num_modes = 0\n");
    assert_eq!(fails(d, &["--config", "zero.toml", "simulate", "--preset", "single_mode"]), "config");
    write(d, "typo.toml", "num_mode = 2\n");
    assert_eq!(fails(d, &["--config", "typo.toml", "simulate", "--preset", "single_mode"]), "config");
    assert_eq!(fails(d, &["build-mdp", "--log", "missing.jsonl"]), "io");

    ok(d, &["simulate", "--preset", "single_mode", "--users", "3", "--steps", "20", "--out", "small"]);
    ok(d, &["simulate", "--preset", "single_mode", "--users", "4", "--steps", "20", "--out", "big"]);
    write(d, "one.toml", &format!("{FAST}num_modes = 1\n"));
    ok(d, &["--config", "one.toml", "dbc", "--log", "small/events.jsonl", "--features", "small/features.json", "--out", "run"]);
    assert_eq!(fails(d, &["eval", "--run", "run", "--truth", "big/truth.json"]), "mismatch");
}
