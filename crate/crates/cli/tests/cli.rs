use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn vidnav(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vidnav"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = vidnav(args);
    assert!(
        out.status.success(),
        "vidnav {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// A small synthetic world on disk.
fn world(dir: &Path) -> PathBuf {
    let out = dir.join("world");
    ok(&["synth", "--out-dir", p(&out), "--videos", "120", "--captions-per-video", "1"]);
    out
}

#[test]
fn builds_and_searches_a_two_video_index() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let corpus = dir.path().join("toy.jsonl");
    std::fs::write(
        &corpus,
        concat!(
            r#"{"id":"a","embed_text":"color=val0 mood=val1","caption":"a red dog","frame_captions":["dog"]}"#,
            "\n",
            r#"{"id":"b","embed_text":"color=val3 mood=val2","caption":"a blue cat","frame_captions":["cat"]}"#,
            "\n"
        ),
    )
    .unwrap();
    let index = dir.path().join("toy.mrln");
    let backend = w.join("backend.json");

    let refused = vidnav(&["index", "build", "--input", p(&corpus), "--out", p(&index), "--encode"]);
    assert!(!refused.status.success());

    ok(&[
        "index", "build", "--input", p(&corpus), "--out", p(&index), "--encode", "--backend", p(&backend),
    ]);
    let hits: Value = serde_json::from_str(&ok(&[
        "--json", "search", "--index", p(&index), "--backend", p(&backend), "--query", "color=val3", "-k", "2",
    ]))
    .unwrap();
    let ids: Vec<&str> = hits.as_array().unwrap().iter().map(|h| h["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["b", "a"]);
    assert_eq!(hits[0]["caption"], "a blue cat");
    assert!(hits[0]["score"].as_f64().unwrap() > hits[1]["score"].as_f64().unwrap());
}

#[test]
fn auto_output_is_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let run = |threads: &str| {
        ok(&[
            "auto",
            "--index", p(&w.join("index.mrln")),
            "--backend", p(&w.join("backend.json")),
            "--dataset", p(&w.join("dataset.jsonl")),
            "--rounds", "3",
            "--seed", "7",
            "--parallelism", threads,
        ])
    };
    let one = run("1");
    assert_eq!(one.lines().count(), 120);
    assert_eq!(one, run("4"));
    let first: Value = serde_json::from_str(one.lines().next().unwrap()).unwrap();
    assert_eq!(first["ranks"].as_array().unwrap().len(), 4);
}

#[test]
fn bench_check_passes_on_the_synthetic_world() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    std::fs::write(
        &config,
        r#"{"sessions": 60, "corpus": {"kind": "synthetic", "world": {"n_videos": 300}}}"#,
    )
    .unwrap();
    let report = dir.path().join("report.json");
    let table = ok(&["bench", "--config", p(&config), "--check", "--out", p(&report)]);
    assert!(table.starts_with("Round"));
    assert!(table.contains("sessions: 60 completed, 0 failed"));
    assert!(!table.contains("FAIL"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(report["per_round"].as_array().unwrap().len(), 6);

    let ablation: Value = serde_json::from_str(&ok(&[
        "--json", "bench", "--config", p(&config), "--ablation", "0.2,0.8", "--noise", "0.3",
    ]))
    .unwrap();
    assert_eq!(ablation["arms"].as_array().unwrap().len(), 2);
}

#[test]
fn bench_accepts_a_dataset_config_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    world(dir.path());
    let config = dir.path().join("bench.json");
    std::fs::write(
        &config,
        r#"{"rounds": 2, "corpus": {"kind": "dataset", "dataset": "world/dataset.jsonl",
            "index": "world/index.mrln", "backend": "world/backend.json"}}"#,
    )
    .unwrap();
    let table = ok(&["bench", "--config", p(&config)]);
    assert!(table.contains("sessions: 120 completed, 0 failed"));
}

#[test]
fn navigate_export_replays_and_tampering_is_caught() {
    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let index = w.join("index.mrln");
    let backend = w.join("backend.json");
    let export = dir.path().join("session.json");
    ok(&[
        "navigate",
        "--index", p(&index),
        "--backend", p(&backend),
        "--query", "a video with color=val1",
        "--target", "vid00005",
        "--rounds", "3",
        "--export", p(&export),
    ]);
    let replayed = ok(&["replay", "--session", p(&export), "--index", p(&index), "--backend", p(&backend)]);
    assert!(replayed.contains("over 3 rounds"));

    let mut session: Value = serde_json::from_str(&std::fs::read_to_string(&export).unwrap()).unwrap();
    session["rounds"][1]["aggregated_answer"] = Value::from("No.");
    std::fs::write(&export, session.to_string()).unwrap();
    let out = vidnav(&[
        "--json", "replay", "--session", p(&export), "--index", p(&index), "--backend", p(&backend),
    ]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "conflict");
    assert_eq!(err["round"], 2);
}

#[test]
fn errors_are_json_with_the_flag() {
    let out = vidnav(&["--json", "search", "--index", "/no/such.mrln", "--backend", "/no/b.json", "--query", "x"]);
    assert!(!out.status.success());
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["code"], "bad_request");
    assert!(err["message"].as_str().unwrap().contains("/no/"));
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["backend.synthetic.json", "backend.remote.json"] {
        vidnav_core::agents::config::BackendConfig::load(root.join(name))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let bench: vidnav_core::eval::BenchmarkConfig =
        serde_json::from_str(&std::fs::read_to_string(root.join("bench.synthetic.json")).unwrap()).unwrap();
    bench.validate().unwrap();
}

#[test]
fn terminal_and_http_sessions_export_identically() {
    use std::io::Write;
    use std::process::Stdio;

    let dir = tempfile::tempdir().unwrap();
    let w = world(dir.path());
    let (index, backend) = (w.join("index.mrln"), w.join("backend.json"));
    let query = "a video with color=val2";
    let answers = ["it shows mood=val1", "the weather=val3", "camera=val0 I think"];

    let export = dir.path().join("terminal.json");
    let mut child = Command::new(env!("CARGO_BIN_EXE_vidnav"))
        .args([
            "navigate", "--index", p(&index), "--backend", p(&backend), "--query", query,
            "--interactive", "--rounds", "3", "--session-id", "same", "--export", p(&export),
        ])
        .stdin(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(answers.join("\n").as_bytes()).unwrap();
    assert!(child.wait().unwrap().success());
    let terminal: Value = serde_json::from_str(&std::fs::read_to_string(&export).unwrap()).unwrap();

    let state = vidnav_cli::server::AppState::new(
        std::sync::Arc::new(vidnav_cli::commands::load_index(&index).unwrap()),
        std::sync::Arc::new(vidnav_cli::commands::load_backend(&backend).unwrap()),
        vidnav_core::SessionConfig {
            max_rounds: 3,
            ..Default::default()
        },
    );
    let router = vidnav_cli::server::router(state, &Default::default()).unwrap();
    let srv = vidnav_cli::server::spawn("127.0.0.1:0".parse().unwrap(), router).unwrap();
    let c = reqwest::blocking::Client::new();
    let created: Value = c
        .post(srv.url("/v1/sessions"))
        .json(&serde_json::json!({ "query": query }))
        .send()
        .unwrap()
        .json()
        .unwrap();
    let id = created["session_id"].as_str().unwrap();
    for text in answers {
        c.post(srv.url(&format!("/v1/sessions/{id}/question"))).send().unwrap();
        let resp = c
            .post(srv.url(&format!("/v1/sessions/{id}/answer")))
            .json(&serde_json::json!({ "text": text }))
            .send()
            .unwrap();
        assert!(resp.status().is_success());
    }
    let mut http: Value = c.get(srv.url(&format!("/v1/sessions/{id}"))).send().unwrap().json().unwrap();
    http["session_id"] = Value::from("same");
    assert_eq!(http, terminal);
}
