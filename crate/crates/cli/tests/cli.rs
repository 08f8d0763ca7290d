use std::io::{Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::{Duration, Instant};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").canonicalize().unwrap()
}

/// The fixture config with absolute inputs and `work` as the work dir.
fn config_in(work: &Path) -> PathBuf {
    let f = fixtures();
    let text = std::fs::read_to_string(f.join("webextractor.toml"))
        .unwrap()
        .replace("\"../target/fixture-work\"", &format!("{:?}", work.join("work")))
        .replace("\"kg.jsonl\"", &format!("{:?}", f.join("kg.jsonl")))
        .replace("\"pages\"", &format!("{:?}", f.join("pages")))
        .replace("\"stats.csv\"", &format!("{:?}", f.join("stats.csv")));
    let path = work.join("webextractor.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(config: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_webextractor"))
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(config: &Path, args: &[&str]) -> String {
    let out = run(config, args);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(
        out.status.success(),
        "{args:?} failed: {}\n{stdout}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout
}

fn http_get(addr: &str, path: &str) -> Option<String> {
    let mut s = TcpStream::connect(addr).ok()?;
    s.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").ok()?;
    let mut buf = String::new();
    s.read_to_string(&mut buf).ok()?;
    Some(buf)
}

#[test]
fn full_pipeline_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    for cmd in ["select", "crawl", "build-dataset", "extract", "train-linker", "link"] {
        ok(&cfg, &[cmd]);
    }
    let work = tmp.path().join("work");
    for cmd in ["select", "crawl", "build-dataset", "extract", "train-linker", "link"] {
        let report: serde_json::Value =
            serde_json::from_slice(&std::fs::read(work.join("reports").join(format!("{cmd}.json"))).unwrap()).unwrap();
        assert_eq!(report["command"], cmd);
        for key in ["started_at", "finished_at", "config", "summary"] {
            assert!(report.get(key).is_some(), "{cmd} report lacks {key}");
        }
    }
    let link: serde_json::Value = serde_json::from_slice(&std::fs::read(work.join("reports/link.json")).unwrap()).unwrap();
    assert_eq!(link["summary"]["submit"]["accepted"], 3);

    let ranked = ok(&cfg, &["link", "--text", "Oxford", "--property", "P69"]);
    assert!(ranked.lines().next().unwrap().starts_with("Q34433\t"), "{ranked}");

    let exp = ok(&cfg, &["experiment", "--budgets", "0,8"]);
    assert!(exp.contains("budget    0: mean F1"), "{exp}");
    assert!(exp.contains("budget    8: mean F1"), "{exp}");
}

#[test]
fn estimate_prints_grouped_totals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let out = ok(&cfg, &["estimate"]);
    assert!(out.contains("P434     P21            11,866"), "{out}");
    assert!(tmp.path().join("work/estimate/totals.csv").exists());

    let out = run(&cfg, &["estimate", "--stats", "/nonexistent/stats.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&tmp.path().join("missing.toml"), &["select"]);
    assert_eq!(out.status.code(), Some(2));

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "work_dir = 3").unwrap();
    assert_eq!(run(&bad, &["select"]).status.code(), Some(2));

    let cfg = config_in(tmp.path());
    let out = run(&cfg, &["extract"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("select"));
    ok(&cfg, &["select"]);
    assert_eq!(run(&cfg, &["extract"]).status.code(), Some(3));
    assert_eq!(run(&cfg, &["experiment", "--budgets", "0,7"]).status.code(), Some(3));
}

#[test]
fn serve_answers_health() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config_in(tmp.path());
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let addr = format!("127.0.0.1:{port}");
    let mut child = Command::new(env!("CARGO_BIN_EXE_webextractor"))
        .arg("--config")
        .arg(&cfg)
        .args(["serve", "--bind", &addr])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let mut reply = None;
    while Instant::now() < deadline {
        if let Some(r) = http_get(&addr, "/health") {
            reply = Some(r);
            break;
        }
        std::thread::sleep(Duration::from_millis(100));
    }
    let proposals = http_get(&addr, "/proposals?status=pending");
    child.kill().unwrap();
    child.wait().unwrap();
    let reply = reply.expect("server came up");
    assert!(reply.starts_with("HTTP/1.1 200"), "{reply}");
    assert!(reply.contains("\"status\":\"ok\""), "{reply}");
    assert!(proposals.unwrap().contains("\"data\":[]"));
}
