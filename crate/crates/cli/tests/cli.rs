use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn walkeval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_walkeval"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr_json(o: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&o.stderr);
    let line = text.lines().last().expect("an error line on stderr");
    serde_json::from_str(line).expect("stderr ends with a JSON error object")
}

/// Two images on two streets, a mock backend with a generated script.
fn fixture(dir: &Path, levels: &[u8]) -> PathBuf {
    std::fs::create_dir_all(dir.join("img")).unwrap();
    for i in 0..2u8 {
        let mut bytes = b"\xff\xd8\xff\xe0".to_vec();
        bytes.extend(std::iter::repeat_n(i + 1, 64));
        std::fs::write(dir.join(format!("img/{i}.jpg")), bytes).unwrap();
    }
    let manifest = serde_json::json!({
        "images": [
            {"id": "a", "path": "img/0.jpg", "street": "North Road"},
            {"id": "b", "path": "img/1.jpg", "street": "South Road"},
        ],
        "levels": levels,
        "backend": {"kind": "mock", "script": "mock.json", "max_retries": 0},
        "output_dir": "out",
    });
    let path = dir.join("manifest.json");
    std::fs::write(&path, manifest.to_string()).unwrap();
    path
}

fn generate_script(manifest: &Path) {
    let o = walkeval(&["mock-script", "--manifest", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn level_one_prompt_states_the_direct_scale() {
    let o = walkeval(&["prompts", "--level", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("1 (lowest) to 105 (highest)"), "{text}");
    assert!(!text.contains("PresenceOfCrossingAids"));
}

#[test]
fn level_four_prompt_lists_quantified_metrics() {
    let o = walkeval(&["prompts", "--level", "4", "--criteria", "Safety"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("PresenceOfCrossingAids"));
    assert!(!text.contains("PresenceOfGreenArea"));
}

#[test]
fn out_of_range_level_is_a_usage_error() {
    assert_eq!(walkeval(&["prompts", "--level", "5"]).status.code(), Some(2));
}

#[test]
fn validate_reports_the_shipped_registry() {
    let o = walkeval(&["validate"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("Safety: 21 metrics"));
    assert!(text.contains("Attractiveness: 21 metrics"));
}

#[test]
fn mock_run_then_resume_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path(), &[1, 2, 3, 4]);
    let m = manifest.to_str().unwrap();
    generate_script(&manifest);

    let o = walkeval(&["run", "--manifest", m]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["entries"], 8);
    assert_eq!(summary["fetched"], 8);
    assert_eq!(summary["records"], 8);
    let ledger = std::fs::read_to_string(dir.path().join("out/ledger.jsonl")).unwrap();
    assert_eq!(ledger.lines().count(), 8);
    for l in 1..=4 {
        assert!(dir.path().join(format!("out/prompts/level{l}.txt")).exists());
    }

    // with the script gone, any new request would fail
    std::fs::write(dir.path().join("mock.json"), "{}").unwrap();
    let o = walkeval(&["resume", "--manifest", m]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(summary["fetched"], 0);
    assert_eq!(summary["cached"], 8);

    let report = dir.path().join("out/report");
    let read_all = || {
        let mut files: Vec<_> = std::fs::read_dir(&report)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        files.sort();
        files
            .into_iter()
            .map(|p| (p.clone(), std::fs::read(p).unwrap()))
            .collect::<Vec<_>>()
    };
    let o = walkeval(&["analyze", "--manifest", m]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let first = read_all();
    assert_eq!(first.len(), 8);
    let o = walkeval(&["analyze", "--manifest", m]);
    assert!(o.status.success());
    assert_eq!(read_all(), first);
}

#[test]
fn missing_script_entries_exit_with_backend_code() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path(), &[2]);
    std::fs::write(dir.path().join("mock.json"), "{}").unwrap();
    let o = walkeval(&["run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert_eq!(stderr_json(&o)["error"], "CampaignIncomplete");
}

#[test]
fn analyze_on_empty_records_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path(), &[1, 2]);
    let records = dir.path().join("empty.jsonl");
    std::fs::write(&records, "").unwrap();
    let o = walkeval(&[
        "analyze",
        "--manifest",
        manifest.to_str().unwrap(),
        "--records",
        records.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stderr_json(&o)["error"], "EmptyInput");
}

#[test]
fn unsorted_levels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = fixture(dir.path(), &[3, 1]);
    let o = walkeval(&["run", "--manifest", manifest.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr_json(&o);
    assert!(err["message"].as_str().unwrap().contains('3'), "{err}");
    assert!(!dir.path().join("out/ledger.jsonl").exists());
}

#[test]
fn stats_subcommand_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let groups = dir.path().join("groups.json");
    std::fs::write(&groups, r#"{"A": [1, 2, 3, 4, 5], "B": [10, 20, 30, 40, 50]}"#).unwrap();
    let o = walkeval(&["stats", "--test", "kruskal-wallis", "--groups", groups.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let h = v["statistic"].as_f64().unwrap();
    assert!((h - 6.818181818181813).abs() < 1e-9, "{v}");
}
