use std::path::Path;
use std::process::{Command, Output};

fn cage(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cage"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn cage")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_manifest(dir: &Path) {
    let lines = [
        r#"{"id":"cell","subject":"biology","grade_band":"6-8","topic":"cell","labels":["nucleus","membrane","cytoplasm"],"prompt_text":"Draw a cell."}"#,
        r#"{"id":"salt","subject":"chemistry","grade_band":"9-12","topic":"salt","labels":["Na","Cl"],"prompt_text":"Draw a salt lattice."}"#,
        r#"{"id":"lens","subject":"physics","grade_band":"9-12","topic":"optics","labels":["focus","axis","lens"],"prompt_text":"Draw a lens."}"#,
    ];
    std::fs::write(dir.join("manifest.jsonl"), lines.join("\n") + "\n").unwrap();
}

#[test]
fn pipeline_eval_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_manifest(d);

    let o = cage(&["bench", "validate", "manifest.jsonl"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let o = cage(&["pipeline", "run", "manifest.jsonl", "--out", "run"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("3/3 prompts succeeded"));

    let o = cage(&["eval", "run", "--model", "mock"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let first = std::fs::read(d.join("run/metrics.json")).unwrap();
    assert!(d.join("run/report.md").exists());
    assert!(stdout(&o).contains("| 100.0 | 0.0 |"), "{}", stdout(&o));

    let o = cage(&["eval", "run", "--model", "mock"], d);
    assert!(o.status.success());
    assert_eq!(std::fs::read(d.join("run/metrics.json")).unwrap(), first);

    let o = cage(&["report", "run/metrics.json", "--out", "table.md"], d);
    assert!(o.status.success());
    let table = std::fs::read_to_string(d.join("table.md")).unwrap();
    assert!(table.contains("| Ours | mock |"), "{table}");

    let o = cage(&["pairs", "verify", "run"], d);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for id in ["cell", "salt", "lens"] {
        assert_eq!(v[id]["labels_preserved"], true, "{id}: {}", v[id]);
    }

    // refusing to overwrite a run is a run failure, not a config error
    let o = cage(&["pipeline", "run", "manifest.jsonl", "--out", "run"], d);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    std::fs::write(d.join("bad.toml"), "this is = = not toml").unwrap();
    std::fs::write(d.join("empty.jsonl"), "").unwrap();

    assert_eq!(cage(&["--config", "bad.toml", "cost", "--per-image", "0.04"], d).status.code(), Some(0));
    assert_eq!(cage(&["--config", "bad.toml", "pipeline", "run", "empty.jsonl", "--out", "r"], d).status.code(), Some(2));
    assert_eq!(cage(&["bench", "validate", "missing.jsonl"], d).status.code(), Some(2));
    assert_eq!(cage(&["cost", "--per-image", "0.04", "--regen", "1.5"], d).status.code(), Some(2));
    assert_eq!(cage(&["eval", "no-such-run"], d).status.code(), Some(1));

    // duplicate ids make the manifest unloadable
    let line = r#"{"id":"x","subject":"physics","grade_band":"K-5","topic":"t","labels":["a","b"],"prompt_text":"p"}"#;
    std::fs::write(d.join("dup.jsonl"), format!("{line}\n{line}\n")).unwrap();
    assert_eq!(cage(&["bench", "validate", "dup.jsonl"], d).status.code(), Some(2));

    // a repeated label loads but fails validation
    let line = r#"{"id":"x","subject":"physics","grade_band":"K-5","topic":"t","labels":["a","a"],"prompt_text":"p"}"#;
    std::fs::write(d.join("rep.jsonl"), format!("{line}\n")).unwrap();
    let o = cage(&["bench", "validate", "rep.jsonl"], d);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("\"pass\": false"));
}

#[test]
fn cost_table_and_json() {
    let tmp = tempfile::tempdir().unwrap();
    let o = cage(&["cost", "--per-image", "0.08", "--name", "GPT-4o"], tmp.path());
    let out = stdout(&o);
    assert!(out.contains("| Scenario | GPT-4o |"), "{out}");
    assert!(out.contains("| Per deck ($) | 0.96 |"));
    assert!(out.contains("| School/yr ($) | 1,920 |"));

    let o = cage(&["cost", "--per-image", "0.04", "--json"], tmp.path());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["per_school_year"], "960.00");
}

#[test]
fn agreement_on_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = "item,annotator,rating\n1,a,1\n1,b,1\n2,a,2\n2,b,2\n3,a,3\n3,b,3\n4,a,4\n4,b,5\n";
    std::fs::write(tmp.path().join("r.csv"), csv).unwrap();
    let o = cage(&["agreement", "r.csv", "--metric", "interval"], tmp.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("alpha (overall) = 0.9369"), "{}", stdout(&o));
}

#[test]
fn review_enqueue_and_stats() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_manifest(d);
    assert!(cage(&["pipeline", "run", "manifest.jsonl", "--out", "run"], d).status.success());

    let o = cage(&["review", "enqueue", "run", "--strengths", "0.4,0.7", "--store", "store"], d);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("enqueued 6 candidates"));

    let o = cage(&["review", "stats", "--store", "store"], d);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["pending"], 6);
    assert_eq!(v["first_attempt_pass_rate"], serde_json::Value::Null);

    let o = cage(&["review", "regenerate", "--store", "store"], d);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "");
}
