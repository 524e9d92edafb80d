//! Command-level behavior: exit codes, resume, and artifact shapes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rhino_bin() -> &'static str {
    env!("CARGO_BIN_EXE_rhino")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(rhino_bin())
        .args(args)
        .output()
        .expect("spawn rhino")
}

fn assert_ok(output: &Output) {
    assert!(
        output.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

fn write_config(dir: &Path, strategy: &str, cache_name: &str) -> PathBuf {
    let config = format!(
        r#"
seed = 42
strategy = "{strategy}"

[input]
format = "zeek"

[backend]
kind = "mock"
fixtures_dir = "{fixtures}"
model = "mock-model"
max_in_flight = 2
cache_dir = "{cache}"
"#,
        fixtures = fixture("mock").display(),
        cache = dir.join(cache_name).display(),
    );
    let path = dir.join(format!("run-{strategy}-{cache_name}.toml"));
    std::fs::write(&path, config).unwrap();
    path
}

fn compress(dir: &Path, config: &Path) -> PathBuf {
    let summaries = dir.join("summaries.jsonl");
    let output = run(&[
        "compress",
        "--config",
        config.to_str().unwrap(),
        "--out",
        summaries.to_str().unwrap(),
        fixture("conn.log").to_str().unwrap(),
    ]);
    assert_ok(&output);
    summaries
}

#[test]
fn compress_reports_stats_and_is_seed_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-a");
    let summaries = compress(dir.path(), &config);
    let first = std::fs::read(&summaries).unwrap();
    assert_eq!(first.iter().filter(|b| **b == b'\n').count(), 20);
    // Second run with the same seed produces identical bytes.
    let summaries2 = compress(dir.path(), &config);
    assert_eq!(first, std::fs::read(&summaries2).unwrap());

    let output = run(&[
        "compress",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("s3.jsonl").to_str().unwrap(),
        fixture("conn.log").to_str().unwrap(),
    ]);
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("records: 60"));
    assert!(stdout.contains("reduction"));
}

#[test]
fn compress_flood_prints_99_percent_reduction() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-flood");
    // Single-key SYN flood, 20k rows.
    let mut lines = vec![
        "#fields\tts\tuid\tid.orig_h\tid.orig_p\tid.resp_h\tid.resp_p\tproto\tservice\tduration\torig_bytes\tresp_bytes\tconn_state\thistory\torig_pkts\tresp_pkts".to_string(),
    ];
    for i in 0..20_000u32 {
        lines.push(format!(
            "{:.3}\tC{i}\t10.0.0.9\t{}\t192.168.10.50\t80\ttcp\thttp\t0.01\t60\t0\tS0\tS\t1\t0",
            1000.0 + f64::from(i) * 0.001,
            10000 + (i % 50000) as u16,
        ));
    }
    let flood = dir.path().join("flood.log");
    std::fs::write(&flood, lines.join("\n")).unwrap();
    let out = dir.path().join("summaries.jsonl");
    let output = run(&[
        "compress",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        flood.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let stdout = String::from_utf8_lossy(&output.stdout);
    let reduction_line = stdout
        .lines()
        .find(|l| l.contains("reduction"))
        .expect("reduction line");
    let pct: f64 = reduction_line
        .split("reduction ")
        .nth(1)
        .and_then(|s| s.strip_suffix("%)"))
        .expect("reduction value")
        .parse()
        .unwrap();
    assert!(pct >= 99.0, "reduction {pct}% below 99%: {reduction_line}");
    // The text rendering sits next to the JSONL.
    let text = std::fs::read_to_string(out.with_extension("txt")).unwrap();
    assert!(text.contains("records=20000"));
}

#[test]
fn compress_empty_input_reports_na() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-b");
    let empty = dir.path().join("empty.log");
    std::fs::write(&empty, "").unwrap();
    let out = dir.path().join("summaries.jsonl");
    let output = run(&[
        "compress",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        empty.to_str().unwrap(),
    ]);
    assert_ok(&output);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), "");
    assert!(String::from_utf8_lossy(&output.stdout).contains("n/a"));
}

#[test]
fn compress_exits_2_on_parse_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-c");
    let bad = dir.path().join("headerless.log");
    std::fs::write(&bad, "1.0\t10.0.0.1\t1\t10.0.0.2\t2\ttcp\n").unwrap();
    let output = run(&[
        "compress",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("out.jsonl").to_str().unwrap(),
        bad.to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("#fields"));
}

#[test]
fn map_tags_strategy_and_resumes_without_rework() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "vanilla", "cache-first");
    let summaries = compress(dir.path(), &config);
    let results = dir.path().join("results.jsonl");
    let output = run(&[
        "map",
        "--config",
        config.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        summaries.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let full: Vec<String> = std::fs::read_to_string(&results)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(full.len(), 20);
    for line in &full {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["strategy"], "vanilla");
    }
    // Vanilla issues one call per summary; the fresh cache has 20 entries.
    let cache_first = dir.path().join("cache-first");
    assert_eq!(cache_entries(&cache_first), 20);

    // Simulate an interrupted run: 12 complete lines plus one torn by the
    // kill. The torn line must be dropped and its group re-mapped.
    let torn = &full[12][..full[12].len() / 2];
    std::fs::write(&results, format!("{}\n{torn}", full[..12].join("\n"))).unwrap();
    let resume_config = write_config(dir.path(), "vanilla", "cache-resume");
    let output = run(&[
        "map",
        "--config",
        resume_config.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        summaries.to_str().unwrap(),
    ]);
    assert_ok(&output);
    assert!(String::from_utf8_lossy(&output.stdout).contains("12 skipped"));
    let resumed: Vec<String> = std::fs::read_to_string(&results)
        .unwrap()
        .lines()
        .map(str::to_string)
        .collect();
    assert_eq!(resumed.len(), 20);
    // Preserved prefix is untouched.
    assert_eq!(&resumed[..12], &full[..12]);
    // Only the 8 missing summaries hit the backend on resume.
    assert_eq!(cache_entries(&dir.path().join("cache-resume")), 8);
}

fn cache_entries(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .map(|entries| {
            entries
                .filter_map(Result::ok)
                .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                .count()
        })
        .unwrap_or(0)
}

#[test]
fn eval_exits_4_on_zero_overlap() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-d");
    let summaries = compress(dir.path(), &config);
    let results = dir.path().join("results.jsonl");
    assert_ok(&run(&[
        "map",
        "--config",
        config.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        summaries.to_str().unwrap(),
    ]));
    let no_overlap = dir.path().join("truth.json");
    std::fs::write(
        &no_overlap,
        r#"{"entries":[{"scenario":"other","selector":{"dst_port":9999},"techniques":["T1046"]}]}"#,
    )
    .unwrap();
    let output = run(&[
        "eval",
        "--results",
        results.to_str().unwrap(),
        "--truth",
        no_overlap.to_str().unwrap(),
        "--out",
        dir.path().join("report").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(4));
}

#[test]
fn eval_emits_requested_k_columns_and_partition() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "rhino", "cache-e");
    let summaries = compress(dir.path(), &config);
    let results = dir.path().join("results.jsonl");
    assert_ok(&run(&[
        "map",
        "--config",
        config.to_str().unwrap(),
        "--out",
        results.to_str().unwrap(),
        summaries.to_str().unwrap(),
    ]));
    let report = dir.path().join("report");
    assert_ok(&run(&[
        "eval",
        "--results",
        results.to_str().unwrap(),
        "--truth",
        fixture("truth.json").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]));
    let md = std::fs::read_to_string(report.with_extension("md")).unwrap();
    for column in ["Top-1", "Top-3", "Top-5"] {
        assert!(md.contains(column), "missing column {column}");
    }
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report.with_extension("json")).unwrap())
            .unwrap();
    assert_eq!(json["ks"], serde_json::json!([1, 3, 5]));
    // The mapping run's partition is carried into the report.
    assert_eq!(json["partition"].as_array().unwrap().len(), 5);
    // 8 of 20 groups sit behind ports 21/22 whose truth is T1110.
    let top1 = json["strategies"]["rhino"]["weighted"]["technique"]["1"]
        .as_f64()
        .unwrap();
    assert!((top1 - 0.4).abs() < 1e-12);
}

#[test]
fn map_exits_3_on_auth_failure() {
    let dir = tempfile::tempdir().unwrap();
    let compress_config = write_config(dir.path(), "rhino", "cache-f");
    let summaries = compress(dir.path(), &compress_config);
    // An http backend with no RHINO_API_KEY in the environment fails auth
    // before any request leaves the machine.
    let config = dir.path().join("http.toml");
    std::fs::write(
        &config,
        "seed = 42\nstrategy = \"vanilla\"\n[backend]\nkind = \"http\"\nbase_url = \"http://127.0.0.1:9\"\nretry_base_ms = 1\n",
    )
    .unwrap();
    let output = Command::new(rhino_bin())
        .args([
            "map",
            "--config",
            config.to_str().unwrap(),
            "--out",
            dir.path().join("results.jsonl").to_str().unwrap(),
            summaries.to_str().unwrap(),
        ])
        .env_remove("RHINO_API_KEY")
        .output()
        .expect("spawn rhino");
    assert_eq!(output.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&output.stderr).contains("RHINO_API_KEY"));
}

#[test]
fn kb_update_writes_snapshot_from_stix() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = serde_json::json!({
        "type": "bundle",
        "id": "bundle--1",
        "objects": [
            {"type": "x-mitre-collection", "x_mitre_version": "17.1"},
            {
                "type": "attack-pattern",
                "id": "attack-pattern--1",
                "name": "Brute Force",
                "description": "Systematic credential guessing.",
                "external_references": [{"source_name": "mitre-attack", "external_id": "T1110"}],
                "kill_chain_phases": [{"kill_chain_name": "mitre-attack", "phase_name": "credential-access"}]
            },
            {
                "type": "attack-pattern",
                "id": "attack-pattern--2",
                "name": "Windows Admin Shares",
                "revoked": true,
                "external_references": [{"source_name": "mitre-attack", "external_id": "T1077"}],
                "kill_chain_phases": [{"kill_chain_name": "mitre-attack", "phase_name": "lateral-movement"}]
            }
        ]
    });
    let stix = dir.path().join("bundle.json");
    std::fs::write(&stix, serde_json::to_string(&bundle).unwrap()).unwrap();
    let out = dir.path().join("snapshot.csv");
    let output = run(&[
        "kb",
        "update",
        "--stix",
        stix.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_ok(&output);
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("id,name,tactics,revoked"));
    assert!(csv.contains("T1110,Brute Force,credential-access,false"));
    assert!(csv.contains("T1077,Windows Admin Shares,lateral-movement,true"));
    assert!(String::from_utf8_lossy(&output.stdout).contains("17.1"));
}
