use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};

const T1: &str = include_str!("../../core/tests/fixtures/t1.json");

struct Sandbox {
    dir: tempfile::TempDir,
}

impl Sandbox {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("t1.json"), T1).unwrap();
        Sandbox { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_osdnp"))
            .current_dir(self.dir.path())
            .args(args)
            .output()
            .unwrap()
    }

    /// Solves T1 at p_elim 0.6 into `sol.json`.
    fn solved(&self) -> PathBuf {
        let out = self.run(&["solve", "t1.json", "--p-elim", "0.6", "--out", "sol.json"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        self.path("sol.json")
    }
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_t1() {
    let sb = Sandbox::new();
    let out = sb.run(&["solve", "t1.json", "--p-elim", "0.6"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sol = stdout_json(&out);
    assert_eq!(sol["twt"], json!(100));
    assert_eq!(sol["kept"], json!(["v2"]));
    assert_eq!(sol["feasible"], json!(true));
    assert!(stderr(&out).contains("optimal"));

    let out = sb.run(&["solve", "t1.json", "--p-elim", "3/5", "--out", "s.json", "--report", "r.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(read_json(&sb.path("s.json"))["twt"], json!(100));
    let report = read_json(&sb.path("r.json"));
    assert_eq!(report["proof"], "optimal");
    assert_eq!(report["twt_lower_bound"], json!(100));
}

#[test]
fn empty_budget_exits_3() {
    let sb = Sandbox::new();
    let out = sb.run(&["solve", "t1.json", "--p-elim", "0.9"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
}

#[test]
fn per_zone_k_from_file() {
    let sb = Sandbox::new();
    sb.write("k.json", r#"{"u1": 2, "u2": 0.5}"#);
    let out = sb.run(&["solve", "t1.json", "--k", "@k.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("u2"), "{}", stderr(&out));

    sb.write("k2.json", r#"{"u1": 2, "u2": 2}"#);
    let out = sb.run(&["solve", "t1.json", "--k", "@k2.json", "--pairs", "od", "--alpha", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["params_echo"]["constraint3_pairs"], "od-positive-only");
}

#[test]
fn check_reports_violations() {
    let sb = Sandbox::new();
    let out = sb.run(&["check", "t1.json", "--kept", "v1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sol = stdout_json(&out);
    assert_eq!(sol["feasible"], json!(false));
    let access: Vec<&Value> = sol["violations"].as_array().unwrap().iter().filter(|v| v["kind"] == "access").collect();
    assert_eq!(access.len(), 1);
    assert_eq!(access[0]["subject"], json!({"zone": "u2"}));

    sb.write("kept.txt", "v1\nv3\n");
    let out = sb.run(&["check", "t1.json", "--kept", "@kept.txt"]);
    assert_eq!(stdout_json(&out)["twt"], json!(80));
    let sol = sb.solved();
    let out = sb.run(&["check", "t1.json", "--p-elim", "0.6", "--kept", &format!("@{}", sol.display())]);
    assert_eq!(stdout_json(&out)["feasible"], json!(true));

    let out = sb.run(&["check", "t1.json", "--kept", "v9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oracle_matches_and_guards_size() {
    let sb = Sandbox::new();
    let out = sb.run(&["oracle", "t1.json", "--p-elim", "0.6"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["twt"], json!(100));

    let stops: Vec<Value> = (0..21).map(|i| json!({"id": format!("s{i}")})).collect();
    let edges: Vec<Value> = (1..21).map(|i| json!({"a": format!("s{}", i - 1), "b": format!("s{i}"), "cost": 1})).collect();
    let big = json!({
        "stops": stops,
        "zones": [{"id": "z"}],
        "edges": edges,
        "access": {"matrix": [vec![1; 21]], "zone_order": ["z"], "stop_order": (0..21).map(|i| format!("s{i}")).collect::<Vec<_>>()},
        "params": {"p_elim": 0.5, "alpha": 2, "k": 2},
    });
    sb.write("big.json", &big.to_string());
    let out = sb.run(&["oracle", "big.json"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn usage_and_validation_codes() {
    let sb = Sandbox::new();
    assert_eq!(sb.run(&[]).status.code(), Some(1));
    assert_eq!(sb.run(&["solve"]).status.code(), Some(1));
    assert_eq!(sb.run(&["solve", "t1.json", "--bogus"]).status.code(), Some(1));
    assert_eq!(sb.run(&["solve", "t1.json", "--p-elim", "abc"]).status.code(), Some(1));
    assert_eq!(sb.run(&["solve", "t1.json", "--pairs", "some"]).status.code(), Some(1));
    assert_eq!(sb.run(&["solve", "t1.json", "--time-limit", "-1"]).status.code(), Some(1));
    assert_eq!(sb.run(&["--help"]).status.code(), Some(0));
    assert_eq!(sb.run(&["solve", "missing.json"]).status.code(), Some(2));
    assert_eq!(sb.run(&["solve", "t1.json", "--alpha", "0.5"]).status.code(), Some(2));
    sb.write("broken.json", "{");
    assert_eq!(sb.run(&["solve", "broken.json"]).status.code(), Some(2));
}

#[test]
fn export_and_decode() {
    let sb = Sandbox::new();
    let out = sb.run(&["export-lp", "t1.json", "--out", "t1.lp"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let lp = std::fs::read_to_string(sb.path("t1.lp")).unwrap();
    assert!(lp.contains(" card: x_v1 + x_v2 + x_v3 <= 2"), "{lp}");
    assert!(!lp.contains("pair_u1_u2"));
    let names = read_json(&sb.path("t1.names.json"));
    assert_eq!(names["x_v1"], json!({"stop": "v1"}));

    let out = sb.run(&["export-lp", "t1.json", "--out", "all.lp", "--all-pair-rows", "--names", "n.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(std::fs::read_to_string(sb.path("all.lp")).unwrap().contains(" pair_u1_u2: dacc_u1 + dacc_u2 <= 10"));
    assert!(sb.path("n.json").exists());

    sb.write("values.txt", "x_v2 1\ny_u1_v2 1\ny_u2_v2 1\ndacc_u1 2\n");
    let out = sb.run(&["decode", "t1.json", "--p-elim", "0.6", "--values", "values.txt"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let sol = stdout_json(&out);
    assert_eq!(sol["kept"], json!(["v2"]));
    assert_eq!(sol["twt"], json!(100));

    sb.write("values.json", r#"{"x_v1": 1, "x_v3": 1, "y_u1_v1": 1, "y_u2_v3": 1}"#);
    let out = sb.run(&["decode", "t1.json", "--values", "values.json"]);
    assert_eq!(stdout_json(&out)["twt"], json!(80));

    sb.write("frac.txt", "x_v2 0.5\n");
    let out = sb.run(&["decode", "t1.json", "--values", "frac.txt"]);
    assert_eq!(out.status.code(), Some(2));

    sb.write("k.json", r#"{"u1": 2, "u2": 0.5}"#);
    let out = sb.run(&["export-lp", "t1.json", "--k", "@k.json", "--out", "x.lp"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn scenario_and_sweep() {
    let sb = Sandbox::new();
    let sol = sb.solved();
    let sol = sol.to_str().unwrap();
    let out = sb.run(&["scenario", "t1.json", sol, "--t", "0", "--min-line-size", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let s0 = stdout_json(&out);
    assert_eq!(s0["deleted_lines"], json!([]));
    assert_eq!(s0["violated"], json!([]));

    let out = sb.run(&[
        "scenario", "t1.json", sol, "--t", "0.6", "--min-line-size", "1", "--uf-csv", "uf.csv", "--p-ros-csv", "p.csv",
    ]);
    let s6 = stdout_json(&out);
    assert_eq!(s6["deleted_lines"], json!(["l1", "l2"]));
    assert_eq!(s6["violated"], json!(["u1", "u2"]));
    let uf = std::fs::read_to_string(sb.path("uf.csv")).unwrap();
    assert_eq!(uf, "zone_id,uf,violated\nu1,neg_inf,1\nu2,neg_inf,1\n");
    let p = std::fs::read_to_string(sb.path("p.csv")).unwrap();
    assert!(p.starts_with("line_id,open,size,p_ros,status\nl1,1,2,"), "{p}");

    sb.write("lines.json", r#"{"lines": [{"id": "only", "stops": ["v1", "v2", "v3"]}]}"#);
    let out = sb.run(&["scenario", "t1.json", sol, "--t", "0.5", "--min-line-size", "1", "--lines", "lines.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout_json(&out)["deleted_lines"], json!(["only"]));

    let out = sb.run(&["sweep", "t1.json", sol, "--t", "0,0.4,0.6", "--min-line-size", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let csv = String::from_utf8(out.stdout).unwrap();
    let counts: Vec<(String, String)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    let expect: Vec<(String, String)> = [("0", "0"), ("0", "0"), ("2", "2")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    assert_eq!(counts, expect);

    assert_eq!(sb.run(&["sweep", "t1.json", sol, "--t", "0.6,0.1"]).status.code(), Some(2));
    assert_eq!(sb.run(&["scenario", "t1.json", sol, "--t", "1.5"]).status.code(), Some(2));
}

#[test]
fn report_outputs() {
    let sb = Sandbox::new();
    let sol = sb.solved();
    let sol = sol.to_str().unwrap();
    let out = sb.run(&["report", "t1.json", sol, "--t", "0.6", "--min-line-size", "1", "--out", "map.geojson", "--csv", "stops.csv"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let map = read_json(&sb.path("map.geojson"));
    assert_eq!(map["type"], "FeatureCollection");
    assert_eq!(map["features"].as_array().unwrap().len(), 5);
    let csv = std::fs::read_to_string(sb.path("stops.csv")).unwrap();
    assert_eq!(csv, "stop_id,status\nv1,deleted\nv2,scenario_removed\nv3,deleted\n");

    let out = sb.run(&["report", "t1.json", sol]);
    let map = stdout_json(&out);
    let statuses: Vec<&str> = map["features"].as_array().unwrap().iter().map(|f| f["properties"]["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, vec!["deleted", "kept", "deleted", "ok", "ok"]);
}

fn http(port: u16, method: &str, path: &str, body: &str) -> (u16, String) {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).unwrap();
    write!(
        stream,
        "{method} {path} HTTP/1.1\r\nHost: localhost\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    )
    .unwrap();
    let mut text = String::new();
    stream.read_to_string(&mut text).unwrap();
    let status = text.split_whitespace().nth(1).unwrap().parse().unwrap();
    let body = text.split_once("\r\n\r\n").map(|(_, b)| b.to_string()).unwrap_or_default();
    (status, body)
}

#[test]
fn serve_uses_env_configuration() {
    let sb = Sandbox::new();
    let data = sb.path("store");
    let mut child = Command::new(env!("CARGO_BIN_EXE_osdnp"))
        .arg("serve")
        .env("OSDNP_DATA_DIR", &data)
        .env("OSDNP_PORT", "0")
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap()).read_line(&mut line).unwrap();
    let port: u16 = line.trim().rsplit(':').next().unwrap().parse().unwrap_or_else(|_| panic!("{line}"));

    let (status, body) = http(port, "GET", "/api/health", "");
    assert_eq!(status, 200, "{body}");
    let (status, body) = http(port, "POST", "/api/instances", T1);
    assert_eq!(status, 201, "{body}");
    let (status, _) = http(port, "GET", "/api/solutions/unknown", "");
    assert_eq!(status, 404);
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(data.join("index.json").exists());
}
