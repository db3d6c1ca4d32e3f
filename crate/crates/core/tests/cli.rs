//! The `stagewise` binary end to end.

mod support;

use std::io::Write;
use std::process::{Command, Output, Stdio};

use support::asset;

fn stagewise(args: &[&str], stdin: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_stagewise"))
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .env_remove("RUST_LOG")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn replay_prints_the_final_stage() {
    let log = asset("golden/case3.events.jsonl");
    let out = stagewise(&["replay", log.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("Let's start small."));
    assert!(text.trim_end().ends_with("final stage: action"), "{text}");

    let quiet = stagewise(&["replay", "--quiet", log.to_str().unwrap()], "");
    assert_eq!(stdout(&quiet).trim(), "final stage: action");
}

#[test]
fn replay_of_a_torn_log_warns_and_succeeds() {
    let raw = std::fs::read_to_string(asset("golden/case2.events.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("torn.jsonl");
    std::fs::write(&path, &raw[..raw.len() - 40]).unwrap();
    let out = stagewise(&["replay", "--quiet", path.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("partial final record"));
}

#[test]
fn replay_of_a_missing_file_is_a_usage_error() {
    let out = stagewise(&["replay", "/nonexistent/log.jsonl"], "");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(stagewise(&["dance"], "").status.code(), Some(1));
    assert_eq!(stagewise(&["eval"], "").status.code(), Some(1));
    assert_eq!(
        stagewise(&["eval", "--personas", "assets/personas", "--ablate", "colour"], "")
            .status
            .code(),
        Some(1)
    );
    assert_eq!(stagewise(&["--help"], "").status.code(), Some(0));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[detector]\navoidance_threshold = 0\n").unwrap();
    let out = stagewise(&["chat", "--config", path.to_str().unwrap()], "");
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_reports_and_writes_transcripts() {
    let dir = tempfile::tempdir().unwrap();
    let out = stagewise(
        &[
            "eval",
            "--personas",
            "assets/personas",
            "--ablate",
            "thinking",
            "--json",
            "--transcripts",
            dir.path().to_str().unwrap(),
        ],
        "",
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["comparable"], true);
    assert_eq!(report["variant"]["aggregate"]["root_cause_identified"], 0.0);
    let written = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(written, 6, "baseline and variant log per persona");

    let table = stagewise(&["eval", "--personas", "assets/personas"], "");
    assert_eq!(table.status.code(), Some(0));
    assert!(stdout(&table).contains("case3"));
}

#[test]
fn scripted_chat_is_deterministic() {
    let input = "I've been exhausted and on edge for weeks.\nMy workload is huge.\n/state\n/quit\n";
    let run = || {
        let out = stagewise(&["chat", "--config", "config/demo.toml", "--show-thinking"], input);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        // The banner carries a fresh session id.
        stdout(&out)
            .lines()
            .skip(1)
            .map(str::to_string)
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first = run();
    assert!(first.contains("[Exploration] That sounds draining."), "{first}");
    assert!(first.contains("    | Current stage: Exploration; Focus: Source of exhaustion"));
    assert!(first.contains("\"avoidance_counter\""));
    let strip_ids = |s: &str| {
        s.lines()
            .filter(|l| !l.contains("\"session_id\"") && !l.contains("\"id\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_ids(&first), strip_ids(&run()));
}

#[test]
fn chat_with_an_exhausted_script_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("one.jsonl");
    std::fs::write(
        &script,
        "{\"match\": {\"turn\": 1}, \"response_text\": \"Tell me more.\"}\n",
    )
    .unwrap();
    let config = dir.path().join("c.toml");
    std::fs::write(
        &config,
        format!(
            "[backend]\nkind = \"scripted\"\nscript_path = {:?}\n",
            script.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = stagewise(
        &["chat", "--config", config.to_str().unwrap()],
        "Hello.\nWork is hard.\n",
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(stdout(&out).contains("Tell me more."));
}
