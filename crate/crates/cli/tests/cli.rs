#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::{fixtures, systems_dir, FakeDocker};

fn sysrank() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sysrank"));
    cmd.env_remove("SYSRANK_DOCKER").env("RUST_LOG", "warn");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn demo() -> PathBuf {
    fixtures().join("demo_results.json")
}

fn mt10(name: &str) -> PathBuf {
    fixtures().join("mt10").join(name)
}

/// Three bare hypothesis files derived from the fixture.
fn bare_hypotheses(dir: &Path) -> PathBuf {
    let hyps = dir.join("hyps");
    fs::create_dir_all(&hyps).unwrap();
    fs::copy(mt10("hyp.txt"), hyps.join("good.txt")).unwrap();
    fs::copy(mt10("ref.txt"), hyps.join("oracle.txt")).unwrap();
    fs::copy(mt10("src.txt"), hyps.join("copy.txt")).unwrap();
    hyps
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

#[test]
fn export_csv_to_stdout() {
    let o = run(sysrank().args(["export", "--format", "csv"]).arg(demo()));
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("System,BLEU,TER,chrF,Time (s)\nSeed-x7b,38.84,51.00,65.45,236.28\n"));
    assert_eq!(out.lines().count(), 9);
}

#[test]
fn export_latex_contains_table_values() {
    let o = run(sysrank().args(["export", "--format", "latex"]).arg(demo()));
    assert!(o.status.success());
    assert!(stdout(&o).contains("236.28"));
    assert!(stdout(&o).contains("Seed-x7b & 38.84 & 51.00 & 65.45 & 236.28"));
}

#[test]
fn export_to_file_and_column_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let o = run(sysrank().args(["export", "--format", "CSV", "--metrics", "chrf,bleu", "--output"]).arg(&out).arg(demo()));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(fs::read_to_string(out).unwrap().starts_with("System,chrF,BLEU,Time (s)\n"));
}

#[test]
fn user_errors_exit_with_one() {
    let o = run(sysrank().args(["export", "--format", "pdf"]).arg(demo()));
    assert_eq!(o.status.code(), Some(1));
    let o = run(sysrank().args(["export", "--format", "csv", "/nonexistent/results.json"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(sysrank().args(["frobnicate"]));
    assert_eq!(o.status.code(), Some(1));
    let o = run(sysrank().arg("--help"));
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn eval_bare_files_without_times() {
    let dir = tempfile::tempdir().unwrap();
    let hyps = bare_hypotheses(dir.path());
    let out = dir.path().join("results.json");
    let o = run(sysrank()
        .args(["eval", "--task", "mt", "--refs"])
        .arg(mt10("ref.txt"))
        .arg("--predictions")
        .arg(&hyps)
        .args(["--metrics", "bleu,ter,chrf", "--main", "bleu", "--trials", "500", "--baselines", "copy", "--out"])
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    let systems = v["systems"].as_array().unwrap();
    assert_eq!(systems.len(), 3);
    assert!(systems.iter().all(|s| s["wall_time_seconds"].is_null()));
    for m in ["BLEU", "TER", "CHRF"] {
        assert!(v["rankings"][m]["clusters"].is_array(), "{m}");
    }
    let copy = systems.iter().find(|s| s["name"] == "copy").unwrap();
    assert_eq!(copy["is_baseline"], true);
    assert_eq!(v["rankings"]["BLEU"]["clusters"][0][0], "oracle");
    let bleu = systems.iter().find(|s| s["name"] == "good").unwrap()["corpus_scores"]["BLEU"].as_f64().unwrap();
    assert!((bleu - 58.98977).abs() < 1e-4);

    let csv = run(sysrank().args(["export", "--format", "csv"]).arg(&out));
    assert!(stdout(&csv).contains("\ngood,58.99,"), "{}", stdout(&csv));
    assert!(stdout(&csv).contains(",-\n"));
}

#[test]
fn eval_defaults_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = run(sysrank()
        .args(["eval", "--task", "MT", "--refs"])
        .arg(mt10("ref.txt"))
        .arg("--hyp")
        .arg(format!("sys={}", mt10("hyp.txt").display()))
        .args(["--no-segment-scores", "--out"])
        .arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    assert_eq!(v["metrics"], serde_json::json!(["BLEU", "TER", "CHRF"]));
    assert_eq!(v["main_metric"], "BLEU");
    assert!(v["systems"][0].get("segment_scores").is_none());

    let o = run(sysrank()
        .args(["eval", "--task", "mt", "--metrics", "beer", "--refs"])
        .arg(mt10("ref.txt"))
        .arg("--hyp")
        .arg(mt10("hyp.txt"))
        .arg("--out")
        .arg(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("supported: bleu, ter, chrf, wer, bwer"), "{}", stderr(&o));

    let short = dir.path().join("short.txt");
    fs::write(&short, "only one line\n").unwrap();
    let o = run(sysrank().args(["eval", "--task", "mt", "--refs"]).arg(mt10("ref.txt")).arg("--hyp").arg(&short).arg("--out").arg(&out));
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("short"), "{}", stderr(&o));
}

#[test]
fn eval_ocr_defaults_to_word_error_rates() {
    let dir = tempfile::tempdir().unwrap();
    let refs = dir.path().join("refs");
    let sys = dir.path().join("preds/reader");
    fs::create_dir_all(&refs).unwrap();
    fs::create_dir_all(&sys).unwrap();
    for (id, r, h) in [("p1", "the quick brown fox", "the quick brown fox"), ("p2", "jumps over the dog", "over jumps the dog")] {
        fs::write(refs.join(format!("{id}.txt")), r).unwrap();
        fs::write(sys.join(format!("{id}.txt")), h).unwrap();
    }
    let out = dir.path().join("r.json");
    let o = run(sysrank().args(["eval", "--task", "ocr", "--refs"]).arg(&refs).arg("--predictions").arg(dir.path().join("preds")).arg("--out").arg(&out));
    assert!(o.status.success(), "{}", stderr(&o));
    let v = read_json(&out);
    assert_eq!(v["metrics"], serde_json::json!(["WER", "BWER"]));
    assert_eq!(v["systems"][0]["corpus_scores"]["WER"].as_f64().unwrap(), 25.0);
    assert_eq!(v["systems"][0]["corpus_scores"]["BWER"].as_f64().unwrap(), 0.0);
}

#[test]
fn run_then_eval_matches_eval_on_copied_predictions() {
    let docker = FakeDocker::new();
    let systems = systems_dir(&["echo", "sleeper"]);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(sysrank()
        .env("SYSRANK_DOCKER", &docker.bin)
        .arg("run")
        .arg("--systems")
        .arg(systems.path())
        .args(["--task", "mt", "--source"])
        .arg(mt10("src.txt"))
        .arg("--out")
        .arg(&out)
        .args(["--baselines", "echo"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("echo\tok"));
    let manifest = read_json(&out.join("times.json"));
    assert_eq!(manifest["systems"]["echo"]["is_baseline"], true);
    assert!(manifest["systems"]["sleeper"]["wall_time_seconds"].as_f64().unwrap() >= 2.0);

    let from_run = dir.path().join("a.json");
    let o = run(sysrank().args(["eval", "--task", "mt", "--trials", "200", "--refs"]).arg(mt10("ref.txt")).arg("--predictions").arg(&out).arg("--out").arg(&from_run));
    assert!(o.status.success(), "{}", stderr(&o));
    let copied = dir.path().join("b.json");
    let o = run(sysrank()
        .args(["eval", "--task", "mt", "--trials", "200", "--refs"])
        .arg(mt10("ref.txt"))
        .arg("--hyp")
        .arg(format!("echo={}", out.join("predictions/echo/predictions").display()))
        .arg("--hyp")
        .arg(format!("sleeper={}", out.join("predictions/sleeper/predictions").display()))
        .arg("--out")
        .arg(&copied));
    assert!(o.status.success(), "{}", stderr(&o));

    let (a, b) = (read_json(&from_run), read_json(&copied));
    for i in 0..2 {
        assert_eq!(a["systems"][i]["corpus_scores"], b["systems"][i]["corpus_scores"]);
    }
    assert_eq!(a["rankings"], b["rankings"]);
    assert_eq!(a["systems"][0]["is_baseline"], true);
    assert!(a["systems"][1]["wall_time_seconds"].as_f64().unwrap() >= 2.0);
    assert!(b["systems"][1]["wall_time_seconds"].is_null());
}

#[test]
fn run_reports_failures_and_environment_errors() {
    let docker = FakeDocker::new();
    let systems = systems_dir(&["echo", "failing"]);
    let dir = tempfile::tempdir().unwrap();
    let base = |cmd: &mut Command, systems: &Path| {
        cmd.env("SYSRANK_DOCKER", &docker.bin)
            .arg("run")
            .arg("--systems")
            .arg(systems)
            .args(["--task", "mt", "--source"])
            .arg(mt10("src.txt"))
            .arg("--out")
            .arg(dir.path().join("out"));
    };
    let mut cmd = sysrank();
    base(&mut cmd, systems.path());
    let o = run(&mut cmd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("echo\tok"));
    assert!(stdout(&o).contains("failing\tfailed"));
    assert!(dir.path().join("out/predictions/echo/predictions").is_file());

    let empty = tempfile::tempdir().unwrap();
    let mut cmd = sysrank();
    base(&mut cmd, empty.path());
    let o = run(&mut cmd);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no dockerized systems found"));

    docker.stop_daemon();
    let mut cmd = sysrank();
    base(&mut cmd, systems.path());
    let o = run(&mut cmd);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn serve_prints_the_bound_port() {
    let mut child = sysrank()
        .args(["serve", "--port", "0"])
        .arg(demo())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let addr = line.trim().strip_prefix("listening on http://").expect(&line).to_string();
    assert!(!addr.ends_with(":0"));

    let mut s = TcpStream::connect(&addr).unwrap();
    s.write_all(b"GET /api/export?format=latex HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").unwrap();
    let mut response = Vec::new();
    s.read_to_end(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();

    let response = String::from_utf8(response).unwrap();
    let body = response.split("\r\n\r\n").nth(1).unwrap();
    let cli = run(sysrank().args(["export", "--format", "latex"]).arg(demo()));
    assert_eq!(body.as_bytes(), cli.stdout.as_slice());
}

#[test]
fn serve_rejects_invalid_results_and_busy_ports() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"schema_version\": \"1\"").unwrap();
    let o = run(sysrank().args(["serve", "--port", "0"]).arg(&bad));
    assert_eq!(o.status.code(), Some(1));

    let busy = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = busy.local_addr().unwrap().port().to_string();
    let o = run(sysrank().args(["serve", "--port", &port]).arg(demo()));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}
