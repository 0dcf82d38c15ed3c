use std::collections::BTreeSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ahakit_core::puzzlegen::{solve_kk, PuzzleRecord};
use ahakit_core::report::format_g6;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ahakit"));
    c.env("SOURCE_DATE_EPOCH", "0").env("RUST_LOG", "error");
    c
}

fn ahakit(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_lines(p: &Path) -> Vec<String> {
    BufReader::new(std::fs::File::open(p).unwrap()).lines().map(Result::unwrap).collect()
}

#[test]
fn gen_kk_writes_unique_puzzles_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("kk3.jsonl");
    let o = ahakit(&["gen-kk", "--n", "3", "--count", "100", "--seed", "7", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = read_lines(&out);
    assert_eq!(lines.len(), 100);
    for line in &lines {
        let rec: PuzzleRecord = serde_json::from_str(line).unwrap();
        assert_eq!(rec.n, 3);
        let sols = solve_kk(rec.statements.as_ref().unwrap(), 3).unwrap();
        assert_eq!(sols, vec![rec.assignment.clone().unwrap()]);
        let v: Value = serde_json::from_str(line).unwrap();
        for key in ["task", "n", "seed", "prompt", "solution"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("kk3.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "gen-kk");
    assert_eq!(m["outputs"][0], s(&out));
    assert_eq!(m["timestamp"], 0);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn config_hash_is_stable_and_sensitive() {
    let dir = tempfile::tempdir().unwrap();
    let hash = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        assert!(ahakit(&["gen-countdown", "--n", "3", "--count", "2", "--seed", seed, "--out", s(&out)]).status.success());
        let m: Value =
            serde_json::from_slice(&std::fs::read(dir.path().join(format!("{name}.manifest.json"))).unwrap()).unwrap();
        m["config_sha256"].as_str().unwrap().to_string()
    };
    assert_eq!(hash("a.jsonl", "1"), hash("b.jsonl", "1"));
    assert_ne!(hash("a.jsonl", "1"), hash("c.jsonl", "2"));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["bogus"],
        vec!["gen-kk", "--out", "x", "--frobnicate"],
        vec!["gen-kk"],
        vec!["rasm", "--in", "/definitely/missing.jsonl", "--out", "/tmp/never.csv"],
        vec!["gen-kk", "--n", "1", "--count", "1", "--out", "/tmp/never.jsonl"],
        vec!["gen-countdown", "--n", "3..x", "--out", "/tmp/never.jsonl"],
    ] {
        let o = ahakit(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
    let o = ahakit(&["bogus"]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(ahakit(&["--help"]).status.code(), Some(0));
    assert_eq!(ahakit(&["rasm", "--help"]).status.code(), Some(0));
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "[collapse.mixing]\nthreshold = 7\n").unwrap();
    let out = dir.path().join("k.jsonl");
    let o = ahakit(&["--config", s(&cfg), "gen-kk", "--n", "3", "--count", "1", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rasm_writes_one_density_block_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("rasm.csv");
    let fx = fixtures();
    let o = ahakit(&[
        "rasm",
        "--in",
        s(&fx.join("transcripts.jsonl")),
        "--sets",
        s(&fx.join("sets.json")),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = read_lines(&out);
    assert_eq!(rdr.remove(0), "model,role,task,difficulty,x,density");
    let mut blocks: Vec<(String, String)> = Vec::new();
    for l in &rdr {
        let f: Vec<&str> = l.split(',').collect();
        let key = (f[0].to_string(), format!("{}/{}", f[2], f[3]));
        if blocks.last() != Some(&key) {
            assert!(!blocks.contains(&key), "block {key:?} is split");
            blocks.push(key);
        }
    }
    // Two models, two tasks, five difficulties.
    assert_eq!(blocks.len(), 2 * 2 * 5);
    let stats = read_lines(&dir.path().join("rasm_stats.csv"));
    assert_eq!(stats.len(), 1 + 20);
}

#[test]
fn csv_and_json_carry_the_same_values() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let input = fx.join("transcripts.jsonl");
    let csv = dir.path().join("u.csv");
    let json = dir.path().join("u.json");
    assert!(ahakit(&["uncertainty", "--in", s(&input), "--out", s(&csv)]).status.success());
    assert!(ahakit(&["uncertainty", "--in", s(&input), "--out", s(&json), "--format", "json"]).status.success());
    let rows: Vec<Value> = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    let lines = read_lines(&csv);
    assert_eq!(lines.len(), rows.len() + 1);
    for (line, row) in lines[1..].iter().zip(&rows) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0], row["model"]);
        assert_eq!(f[2], row["difficulty"].to_string());
        assert_eq!(f[3], format_g6(row["mean_sentence_prob"].as_f64().unwrap()));
        assert_eq!(f[4], row["n_sentences"].to_string());
    }
}

#[test]
fn empty_corpus_gives_header_only_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.jsonl");
    std::fs::write(&input, "").unwrap();
    let out = dir.path().join("c.csv");
    assert!(ahakit(&["collapse", "--in", s(&input), "--out", s(&out)]).status.success());
    assert_eq!(
        std::fs::read_to_string(&out).unwrap(),
        "model,task,difficulty,rate_mixing,rate_token_rep,rate_path_rep,n\n"
    );
}

#[test]
fn malformed_lines_are_skipped_and_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("t.jsonl");
    let good = read_lines(&fixtures().join("transcripts.jsonl")).remove(0);
    std::fs::write(&input, format!("{good}\n{{\"id\": 1}}\n")).unwrap();
    let out = dir.path().join("u.csv");
    assert!(ahakit(&["uncertainty", "--in", s(&input), "--out", s(&out)]).status.success());
    let m: Value = serde_json::from_slice(&std::fs::read(dir.path().join("u.csv.manifest.json")).unwrap()).unwrap();
    let w = m["warnings"].as_array().unwrap();
    assert_eq!(w.len(), 1);
    assert!(w[0].as_str().unwrap().contains(":2:"));
    assert_eq!(read_lines(&out).len(), 2);
}

#[test]
fn committed_fixtures_match_a_rebuild() {
    let dir = tempfile::tempdir().unwrap();
    let written = ahakit_core::fixtures::build_fixtures(7, dir.path()).unwrap();
    assert!(!written.is_empty());
    for p in written {
        let rel = p.strip_prefix(dir.path()).unwrap();
        let committed = std::fs::read(fixtures().join(rel)).unwrap_or_default();
        assert!(std::fs::read(&p).unwrap() == committed, "{} differs from the committed copy", rel.display());
    }
}

#[test]
fn committed_expected_report_is_reproduced() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures();
    let o = ahakit(&[
        "report",
        "--in",
        s(&fx.join("transcripts.jsonl")),
        "--sets",
        s(&fx.join("sets.json")),
        "--latent",
        s(&fx.join("latent/increasing")),
        "--latent",
        s(&fx.join("latent/decreasing")),
        "--out-dir",
        s(dir.path()),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = fx.join("expected_report");
    let mut names = BTreeSet::new();
    for entry in std::fs::read_dir(&expected).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.json" {
            continue;
        }
        let want = std::fs::read(expected.join(&name)).unwrap();
        let got = std::fs::read(dir.path().join(&name)).unwrap();
        assert!(want == got, "{name:?} differs");
        names.insert(name);
    }
    assert!(names.len() >= 12);
}

#[test]
fn latent_accepts_explicit_layer_files() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixtures().join("latent/increasing");
    let out = dir.path().join("s.csv");
    let o = ahakit(&[
        "latent",
        "--layers",
        s(&fx.join("layer_00.bin")),
        s(&fx.join("layer_05.bin")),
        "--labels",
        s(&fx.join("labels.json")),
        "--joint",
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let lines = read_lines(&out);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("joint,0,"));
    assert!(lines[2].starts_with("joint,5,"));
}

fn serve_completions(responses: usize) -> (String, std::thread::JoinHandle<Vec<String>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut auth = Vec::new();
        for _ in 0..responses {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let l = line.trim_end().to_ascii_lowercase();
                if l.is_empty() {
                    break;
                }
                if let Some(v) = l.strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if l.starts_with("authorization:") {
                    auth.push(line.trim_end().to_string());
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let reply = r#"{"choices":[{"text":"Okay. Hmm.","logprobs":{"tokens":["Okay","."," Hmm","."],"token_logprobs":[-0.1,-0.01,-2.9,-0.2],"top_logprobs":[{"Okay":-0.1,"So":-2.5},{".":-0.01},{" Hmm":-2.9," Wait":-0.5},{".":-0.2}]}}]}"#;
            write!(
                stream,
                "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            )
            .unwrap();
        }
        auth
    });
    (url, handle)
}

#[test]
fn collect_against_a_local_server() {
    let dir = tempfile::tempdir().unwrap();
    let (url, handle) = serve_completions(2);
    let out = dir.path().join("t.jsonl");
    let o = bin()
        .env("AHAKIT_TEST_API_KEY", "k-123")
        .args([
            "collect",
            "--task",
            "kk",
            "--n",
            "3",
            "--count",
            "2",
            "--family",
            "deepseek",
            "--endpoint",
            &url,
            "--topk",
            "5",
            "--parallelism",
            "1",
            "--api-key-env",
            "AHAKIT_TEST_API_KEY",
            "--out",
            s(&out),
        ])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let auth = handle.join().unwrap();
    assert_eq!(auth.len(), 2);
    assert!(auth.iter().all(|a| a.ends_with("Bearer k-123")), "{auth:?}");
    let lines = read_lines(&out);
    assert_eq!(lines.len(), 2);
    let t: Value = serde_json::from_str(&lines[0]).unwrap();
    assert_eq!(t["role"], "aha");
    assert_eq!(t["difficulty"], 3);
    assert_eq!(t["text"], "Okay. Hmm.");
    let manifest = std::fs::read_to_string(dir.path().join("t.jsonl.manifest.json")).unwrap();
    assert!(!manifest.contains("k-123"));
    assert!(manifest.contains("AHAKIT_TEST_API_KEY"));
}
