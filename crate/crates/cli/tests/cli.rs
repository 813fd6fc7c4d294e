use std::path::Path;
use std::process::{Command, Output};

use gazetype::filter::{distinct_runs, filter_stream, simulate_sequence, NoiseScript};
use gazetype::t9::{typing_segments, write_replay_csv, Layout};
use gazetype::EyeState;

fn gazetype(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gazetype"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_default_sweep_has_ten_states_in_order() {
    let out = gazetype(&["simulate", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("frame,raw,filtered"));
    let filtered: Vec<Option<EyeState>> = lines
        .map(|l| l.split(',').nth(2).unwrap().parse::<i64>().ok().map(|c| EyeState::new(c).unwrap()))
        .collect();
    let expected: Vec<EyeState> = (1..=9).chain([0]).map(|c| EyeState::new(c).unwrap()).collect();
    assert_eq!(distinct_runs(&filtered), expected);
}

#[test]
fn simulate_is_reproducible() {
    let a = gazetype(&["simulate", "--seed", "9"]);
    let b = gazetype(&["simulate", "--seed", "9"]);
    assert_eq!(a.stdout, b.stdout);
}

fn hello_replay(dir: &Path) -> std::path::PathBuf {
    let layout = Layout::default();
    let script = NoiseScript {
        segments: typing_segments(&layout, "hello", 35, 14).unwrap(),
        ..NoiseScript::default()
    };
    let raw: Vec<_> = simulate_sequence(&script, 5).unwrap().into_iter().map(Some).collect();
    let filtered = filter_stream(16, &raw).unwrap();
    let path = dir.join("hello.csv");
    write_replay_csv(std::fs::File::create(&path).unwrap(), &filtered).unwrap();
    path
}

#[test]
fn type_hello_replay() {
    let dir = tempfile::tempdir().unwrap();
    let replay = hello_replay(dir.path());
    let events = dir.path().join("events.jsonl");
    let out = gazetype(&["type", "--script", p(&replay), "--reference", "hello", "--events", p(&events)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.starts_with("text: hello\n"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&text["text: hello\n".len()..]).unwrap();
    assert_eq!(json["error_rate"], 0.0);
    assert_eq!(json["letters"], 5);
    let log = std::fs::read_to_string(events).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("selection_click")).count(), 10);
}

#[test]
fn gen_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let weights = dir.path().join("model.bin");
    let out = gazetype(&[
        "gen-data", "--dataset", p(&data), "--train", "2", "--val", "1", "--test-known", "1", "--test-unknown", "1",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("wrote 50 images"));

    let out = gazetype(&[
        "train", "--dataset", p(&data), "--weights", p(&weights), "--epochs", "40", "--no-augment",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let history = std::fs::read_to_string(dir.path().join("model.history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,val_top1\n"));

    let report = dir.path().join("report.json");
    let out = gazetype(&[
        "eval", "--dataset", p(&data), "--weights", p(&weights), "--split", "train", "--report", p(&report),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("Top1 Acc."), "{text}");
    assert!(text.contains("100.00%"), "{text}");
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(json["train"]["top1"], 100.0);
}

#[test]
fn failures_have_category_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = gazetype(&["eval", "--dataset", p(&missing), "--weights", p(&missing)]);
    assert_eq!(out.status.code(), Some(3));

    let bogus = dir.path().join("bogus.bin");
    std::fs::write(&bogus, b"not weights").unwrap();
    let data = dir.path().join("data");
    assert!(gazetype(&["gen-data", "--dataset", p(&data), "--train", "1", "--val", "1", "--test-known", "1", "--test-unknown", "1"])
        .status
        .success());
    let out = gazetype(&["eval", "--dataset", p(&data), "--weights", p(&bogus)]);
    assert_eq!(out.status.code(), Some(4));

    let out = gazetype(&["simulate", "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}
