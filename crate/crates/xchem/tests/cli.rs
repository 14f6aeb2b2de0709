mod support;

use std::fs;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde_json::Value;
use support::{project, stderr, stdout, xchem, TINY};

fn lines(path: &std::path::Path) -> Vec<String> {
    fs::read_to_string(path).unwrap_or_default().lines().map(str::to_string).collect()
}

#[test]
fn ingest_reports_counts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path(), 10, 3, TINY);
    let meta = dir.path().join("data/metadata.jsonl");
    let mut rows: Vec<serde_json::Map<String, Value>> =
        lines(&meta).iter().map(|l| serde_json::from_str(l).unwrap()).collect();
    rows[1].remove("XLogP");
    rows[4].insert("MolecularWeight".into(), Value::from("unknown"));
    rows[7].remove("Synonyms");
    let text: String = rows.iter().map(|r| format!("{}\n", Value::Object(r.clone()))).collect();
    fs::write(&meta, text).unwrap();

    let out = xchem(dir.path(), &["ingest"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out).trim(), "retained 7, dropped 3");
    let first = fs::read(dir.path().join("work/dataset.jsonl")).unwrap();
    assert!(xchem(dir.path(), &["ingest"]).status.success());
    assert_eq!(fs::read(dir.path().join("work/dataset.jsonl")).unwrap(), first);
}

#[test]
fn ingest_of_empty_directory_fails_naming_it() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir_all(dir.path().join("data/xyz")).unwrap();
    fs::write(dir.path().join("data/metadata.jsonl"), "").unwrap();
    fs::write(dir.path().join("xchem.toml"), TINY).unwrap();
    let out = xchem(dir.path(), &["ingest"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("data/xyz"), "{}", stderr(&out));
}

#[test]
fn select_is_bounded_resumable_and_forceable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TINY}\n[backends]\nstub_validator = \"reject-then-accept\"\n");
    project(dir.path(), 5, 1, &cfg);
    assert!(xchem(dir.path(), &["ingest"]).status.success());
    let selections = dir.path().join("work/cache/selections.jsonl");
    let transcripts = dir.path().join("work/transcripts.jsonl");

    let out = xchem(dir.path(), &["select", "--targets", "homo,mu"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("dialogues: 10 new, 0 cached"), "{}", stdout(&out));
    assert_eq!(lines(&selections).len(), 10);
    let rounds = lines(&transcripts).len();
    assert!(rounds <= 30, "{rounds}");
    assert_eq!(rounds, 20);

    let out = xchem(dir.path(), &["select", "--targets", "homo,mu"]);
    assert!(stdout(&out).starts_with("dialogues: 0 new, 10 cached"), "{}", stdout(&out));
    assert_eq!(lines(&transcripts).len(), rounds);

    let before = fs::read(&selections).unwrap();
    let out = xchem(dir.path(), &["select", "--targets", "homo,mu", "--force"]);
    assert!(stdout(&out).starts_with("dialogues: 10 new, 0 cached"), "{}", stdout(&out));
    assert_eq!(fs::read(&selections).unwrap(), before);
    assert_eq!(lines(&transcripts).len(), rounds);
}

#[test]
fn backend_outage_keeps_partial_progress() {
    let reply = r#"{"message": {"content": "{\"features\": [\"Formula\", \"XLogP\", \"MolecularWeight\"], \"weights\": [0.4, 0.3, 0.3], \"reasoning\": \"composition\", \"validated\": true, \"critique\": \"fine\"}"}}"#;
    let served = Arc::new(AtomicUsize::new(0));
    let s = Arc::clone(&served);
    // Two requests per accepted dialogue: three dialogues succeed.
    let server = support::http::serve(move |_| {
        if s.fetch_add(1, Ordering::SeqCst) < 6 {
            (200, reply.to_string())
        } else {
            (500, "down".into())
        }
    });
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{TINY}\n[backends]\nretries = 0\n");
    project(dir.path(), 5, 2, &cfg);
    assert!(xchem(dir.path(), &["ingest"]).status.success());

    let out = xchem(dir.path(), &["select", "--jobs", "1", "--backend-url", &server.url]);
    assert!(!out.status.success());
    assert_eq!(stderr(&out).matches("failed: gdb_").count(), 2, "{}", stderr(&out));
    assert_eq!(lines(&dir.path().join("work/cache/selections.jsonl")).len(), 3);

    let healthy = support::http::serve(move |_| (200, reply.to_string()));
    let out = xchem(dir.path(), &["select", "--jobs", "1", "--backend-url", &healthy.url]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).starts_with("dialogues: 2 new, 3 cached"), "{}", stdout(&out));
}

#[test]
fn report_requires_metrics_and_tolerates_bad_transcript_lines() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path(), 12, 5, TINY);
    for phase in ["ingest", "embed", "select"] {
        assert!(xchem(dir.path(), &[phase]).status.success());
    }
    let out = xchem(dir.path(), &["report"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("`train`"), "{}", stderr(&out));

    let out = xchem(dir.path(), &["train"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let transcripts = dir.path().join("work/transcripts.jsonl");
    let mut t = fs::read_to_string(&transcripts).unwrap();
    t.push_str("{\"molecule_id\": \"gdb_1\", truncated\n");
    fs::write(&transcripts, t).unwrap();
    let out = xchem(dir.path(), &["report"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("skipped 1 malformed transcript line(s)"), "{}", stdout(&out));
    for f in ["table2.csv", "report.json", "selection_stats.csv", "percent_change.svg"] {
        assert!(dir.path().join("reports").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("reports/table2.csv")).unwrap();
    assert!(csv.starts_with("target,unit,SchNet base,SchNet fused\nhomo,eV,"), "{csv}");
}

#[test]
fn evaluate_matches_training_and_refuses_foreign_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    project(dir.path(), 12, 6, TINY);
    for phase in ["ingest", "train"] {
        let out = xchem(dir.path(), &[phase, "--variant", "base"]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let metrics: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("reports/metrics.json")).unwrap()).unwrap();
    let trained = metrics["results"]["homo"]["base"]["mean_mae"].as_f64().unwrap();
    let out = xchem(dir.path(), &["evaluate", "--variant", "base"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains(&format!("mean MAE {trained:.6}")), "{} vs {trained}", stdout(&out));

    let changed = TINY.replace("hidden = 8", "hidden = 12");
    fs::write(dir.path().join("xchem.toml"), changed).unwrap();
    let out = xchem(dir.path(), &["evaluate", "--variant", "base"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("checkpoint was written for configuration"), "{}", stderr(&out));
}

#[test]
fn environment_overrides_endpoint_only() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("xchem.toml"), TINY).unwrap();
    let out = support::bin()
        .current_dir(dir.path())
        .env("XCHEM_CHAT_URL", "http://127.0.0.1:9/")
        .args(["config", "--seed", "11"])
        .output()
        .unwrap();
    let cfg: toml::Value = toml::from_str(&stdout(&out)).unwrap();
    assert_eq!(cfg["backends"]["chat_url"].as_str(), Some("http://127.0.0.1:9/"));
    assert_eq!(cfg["backends"]["chat"].as_str(), Some("stub"));
    assert_eq!(cfg["seed"].as_integer(), Some(11));
}
