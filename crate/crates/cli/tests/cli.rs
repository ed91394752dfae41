use std::path::Path;
use std::process::{Command, Output};

fn tacsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tacsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

/// Every file except the manifest, by name and contents.
fn outputs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn scenario_outputs_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    assert_eq!(code(&tacsim(&["scenario", "--out", s(&out)])), 2);
    assert_eq!(code(&tacsim(&["scenario", "--seed", "1", "--rows", "3", "--out", s(&out)])), 4);

    let o = tacsim(&["scenario", "--seed", "11", "--units", "6", "--cities", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["command"], "scenario");
    assert_eq!(m["seeds"], serde_json::json!([11]));
    let state: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("scenario.json")).unwrap()).unwrap();
    assert!(state.is_object());
    assert!(!std::fs::read_to_string(out.join("scenario.txt")).unwrap().is_empty());

    // same seed, same scenario
    let again = tmp.path().join("s2");
    tacsim(&["scenario", "--seed", "11", "--units", "6", "--cities", "2", "--out", s(&again)]);
    assert_eq!(outputs(&out), outputs(&again));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "seed = 4\n[scenario]\nmax_phases = 9\n").unwrap();
    let out = tmp.path().join("o");
    let o = tacsim(&["scenario", "--config", s(&cfg), "--max-phases", "12", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let m = manifest(&out);
    assert_eq!(m["config"]["seed"], 4);
    assert_eq!(m["config"]["scenario"]["max_phases"], 12);
    assert_eq!(code(&tacsim(&["scenario", "--config", s(&tmp.path().join("missing.toml")), "--out", s(&out)])), 3);
}

#[test]
fn eval_rerun_is_byte_identical_and_worker_independent() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let o = tacsim(&[
        "eval", "--matchup", "scripted:scripted", "--seeds", "1..2", "--games", "30", "--workers", "1", "--out", s(&a),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["summary.csv", "table.csv", "table.txt", "boxplot.csv", "games_scripted-vs-scripted_seed2.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    let summary = std::fs::read_to_string(a.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);

    let b = tmp.path().join("b");
    let o = tacsim(&["rerun", "--manifest", s(&a.join("manifest.json")), "--out", s(&b)]);
    assert_eq!(code(&o), 0);
    assert_eq!(outputs(&a), outputs(&b));

    let c = tmp.path().join("c");
    tacsim(&[
        "eval", "--matchup", "scripted:scripted", "--seeds", "1,2", "--games", "30", "--workers", "3", "--out", s(&c),
    ]);
    assert_eq!(outputs(&a), outputs(&c));
}

#[test]
fn missing_model_is_a_load_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = tacsim(&[
        "eval", "--matchup", "hybrid:scripted", "--hybrid-model", "/nonexistent/{seed}.bin", "--out", s(tmp.path()),
    ]);
    assert_eq!(code(&o), 3);
    let o = tacsim(&["eval", "--matchup", "hybrid:scripted", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 2);
}

#[test]
fn train_then_evaluate_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let t = tmp.path().join("t");
    let o = tacsim(&[
        "train", "--steps", "120", "--eval-interval", "60", "--eval-games", "1", "--seed", "3", "--out", s(&t),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&t)["status"], "complete");
    let trace = std::fs::read_to_string(t.join("trace.csv")).unwrap();
    let steps: Vec<&str> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(steps, ["60", "120"]);
    assert!(t.join("checkpoint.bin").exists());

    // hyperparams.toml is a complete config: training from it reproduces the model
    let t2 = tmp.path().join("t2");
    let o = tacsim(&["train", "--config", s(&t.join("hyperparams.toml")), "--out", s(&t2)]);
    assert_eq!(code(&o), 0);
    assert_eq!(outputs(&t), outputs(&t2));

    let template = s(&tmp.path().join("t{seed}")).to_string() + "/model.bin";
    std::fs::create_dir_all(tmp.path().join("t1")).unwrap();
    std::fs::copy(t.join("model.bin"), tmp.path().join("t1/model.bin")).unwrap();
    let e = tmp.path().join("e");
    let o = tacsim(&[
        "eval", "--matchup", "hybrid:scripted", "--matchup", "scripted:scripted", "--seeds", "1", "--games", "8",
        "--hybrid-model", &template, "--out", s(&e),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let tt = std::fs::read_to_string(e.join("ttests.csv")).unwrap();
    assert!(tt.lines().nth(1).unwrap().starts_with("hybrid|scripted,1,"));

    let o = tacsim(&[
        "stats", s(&e.join("games_hybrid-vs-scripted_seed1.csv")), "--against",
        s(&e.join("games_scripted-vs-scripted_seed1.csv")),
    ]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("n=8") && text.contains("df=7"), "{text}");

    let r = tmp.path().join("r");
    let o = tacsim(&[
        "replay", "--matchup", "hybrid:scripted", "--hybrid-model", &template, "--seed", "1", "--game", "2",
        "--out", s(&r),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = r.join("replay.jsonl");
    assert_eq!(code(&tacsim(&["replay", "--verify", s(&file)])), 0);

    let text = std::fs::read_to_string(&file).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let idx = lines.iter().position(|l| l.contains("\"record\":\"phase_end\"")).unwrap();
    lines[idx] = lines[idx].replace("\"digest\":\"", "\"digest\":\"f");
    std::fs::write(&file, lines.join("\n")).unwrap();
    let o = tacsim(&["replay", "--verify", s(&file)]);
    assert_eq!(code(&o), 5);
    assert!(String::from_utf8_lossy(&o.stderr).contains(&format!("record {idx}")));
}
