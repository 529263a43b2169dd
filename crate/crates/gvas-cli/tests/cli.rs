use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use gvas_core::fixtures;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tempfile::TempDir;

fn gvas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvas")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).expect("valid json")
}

struct Files {
    dir: TempDir,
}

impl Files {
    fn new() -> Files {
        let dir = TempDir::new().unwrap();
        for (name, text) in [
            ("g1", fixtures::G1),
            ("g2", fixtures::G2),
            ("g4", fixtures::G4),
            ("g6", fixtures::G6),
            ("trivial", fixtures::TRIVIAL),
        ] {
            fs::write(dir.path().join(format!("{name}.gvas")), text).unwrap();
        }
        fs::write(dir.path().join("bad.gvas"), "start S\nS -> ->\n").unwrap();
        Files { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn g(&self, name: &str) -> String {
        self.path(&format!("{name}.gvas")).display().to_string()
    }
}

#[test]
fn reach_exit_codes() {
    let f = Files::new();
    assert_eq!(code(&gvas(&["reach", &f.g("g2"), "--from", "0", "--to", "2"])), 0);
    assert_eq!(code(&gvas(&["reach", &f.g("g2"), "--from", "0", "--to", "3"])), 1);
    assert_eq!(code(&gvas(&["reach", &f.g("trivial"), "--from", "5", "--to", "5"])), 0);
}

#[test]
fn unknown_is_exit_two() {
    let f = Files::new();
    let o = gvas(&["reach", &f.g("g1"), "--from", "4", "--to", "16", "--max-counter", "4", "--max-steps", "100"]);
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).starts_with("unknown"));
}

#[test]
fn usage_and_parse_errors_are_exit_three() {
    let f = Files::new();
    assert_eq!(code(&gvas(&["reach", &f.g("g2"), "--from", "0"])), 3);
    assert_eq!(code(&gvas(&["reach", &f.g("bad"), "--from", "0", "--to", "1"])), 3);
    assert_eq!(code(&gvas(&["analyze", &f.g("missing")])), 3);
    assert_eq!(code(&gvas(&["supertree", &f.g("g1"), "--a", "0"])), 3);
    assert_eq!(code(&gvas(&["analyze", "corpus:99"])), 3);
}

/// The documented verdict schema.
#[derive(Serialize, Deserialize)]
struct VerdictSchema {
    verdict: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    output: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    witness: Option<TreeSchema>,
    diagnostics: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TreeSchema {
    Terminal { t: i64 },
    Node { nt: String, children: Vec<TreeSchema> },
}

#[test]
fn reach_json_round_trips() {
    let f = Files::new();
    let o = gvas(&["--json", "reach", &f.g("g2"), "--from", "0", "--to", "2"]);
    let v = json(&o);
    assert_eq!(v["verdict"], "yes");
    assert_eq!(v["output"], 2);
    assert!(v["witness"].is_object());
    assert_eq!(v["diagnostics"].as_array().unwrap().len(), 0);
    let typed: VerdictSchema = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(serde_json::to_string_pretty(&typed).unwrap() + "\n", stdout(&o));

    let v = json(&gvas(&["reach", &f.g("g2"), "--from", "0", "--to", "3", "--json"]));
    assert_eq!(v["verdict"], "no");
    assert!(v.get("witness").is_none());
    assert_eq!(v["diagnostics"].as_array().unwrap().len(), 1);
}

/// Sums the terminals of a JSON witness left to right, checking the counter.
fn run_witness(v: &Value, counter: &mut i64) {
    if let Some(t) = v.get("t") {
        *counter += t.as_i64().unwrap();
        assert!(*counter >= 0);
    } else {
        for c in v["children"].as_array().unwrap() {
            run_witness(c, counter);
        }
    }
}

#[test]
fn cover_witness_is_valid_and_in_range() {
    let f = Files::new();
    let v = json(&gvas(&["cover", &f.g("g6"), "--from", "0", "--target", "7", "--json"]));
    assert_eq!(v["verdict"], "yes");
    let mut c = 0;
    run_witness(&v["witness"], &mut c);
    assert_eq!(c, v["output"].as_i64().unwrap());
    assert!(c >= 7);
    let o = gvas(&["cover", &f.g("g1"), "--from", "2", "--target", "5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn witness_dot_export() {
    let f = Files::new();
    let dot = f.path("w.dot");
    let o = gvas(&["reach", &f.g("g6"), "--from", "0", "--to", "2", "--dot", dot.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = fs::read_to_string(&dot).unwrap();
    assert!(text.starts_with("digraph derivation {"));
    assert!(text.contains("0->2"));
}

#[test]
fn analyze_lists_thin_components() {
    let f = Files::new();
    let o = gvas(&["analyze", &f.g("g1")]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("{X} thin"), "{s}");
    assert!(s.contains("{Y} thin"), "{s}");
    let v = json(&gvas(&["analyze", &f.g("g2"), "--json"]));
    assert_eq!(v["residuum"]["d"], 2);
    assert_eq!(v["residuum"]["r"]["X"], 0);
    assert_eq!(v["residuum"]["r"]["Y"], 1);
    assert_eq!(v["top_branching"], true);
}

#[test]
fn thinify_writes_a_thin_grammar() {
    let f = Files::new();
    let out = f.path("h.gvas");
    let o = gvas(&["thinify", &f.g("g6"), "-o", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let h = gvas_core::grammar::parse_gvas(&fs::read_to_string(&out).unwrap()).unwrap();
    assert!(gvas_core::grammar::is_thin(&h));
    let v = json(&gvas(&["analyze", out.to_str().unwrap(), "--json"]));
    assert_eq!(v["thin"], true);
    assert_eq!(code(&gvas(&["reach", out.to_str().unwrap(), "--from", "0", "--to", "3"])), 0);
    assert_eq!(code(&gvas(&["reach", out.to_str().unwrap(), "--from", "3", "--to", "3"])), 1);
}

#[test]
fn oracle_window_matches_the_power_law() {
    let f = Files::new();
    let v = json(&gvas(&["oracle", &f.g("g1"), "--window", "4", "--json"]));
    let pairs: Vec<(i64, i64)> =
        v["pairs"].as_array().unwrap().iter().map(|p| (p[0].as_i64().unwrap(), p[1].as_i64().unwrap())).collect();
    for a in 0..=2 {
        for b in 0..=4 {
            assert_eq!(pairs.contains(&(a, b)), 1 <= b && b <= 1 << a);
        }
    }
}

#[test]
fn lines_and_region_reports() {
    let f = Files::new();
    let v = json(&gvas(&["lines", &f.g("g6"), "--a", "0", "--json"]));
    assert_eq!(v["thin"], true);
    assert!(v["t"].as_i64().unwrap() >= 1);
    let v = json(&gvas(&["region", &f.g("g6"), "--json"]));
    assert!(v["b"].as_i64().unwrap() >= 0);
    assert!(!v["rep"].as_array().unwrap().is_empty());
    assert_eq!(code(&gvas(&["lines", &f.g("g1"), "--a", "0"])), 3);
}

fn supertree_files(f: &Files, file: &str, extra: &[&str]) -> (String, String) {
    let dot = f.path("st.dot");
    let dump = f.path("st.json");
    let mut args = vec!["supertree", file, "--a", "1", "--dot", dot.to_str().unwrap(), "--dump", dump.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = gvas(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (fs::read_to_string(&dot).unwrap(), fs::read_to_string(&dump).unwrap())
}

#[test]
fn supertree_exports_are_byte_stable() {
    let f = Files::new();
    let g2 = f.g("g2");
    let first = supertree_files(&f, &g2, &[]);
    let second = supertree_files(&f, &g2, &[]);
    assert_eq!(first, second);
    let dump: Value = serde_json::from_str(&first.1).unwrap();
    assert_eq!(dump["a"], 1);
    assert_eq!(dump["supernodes"][0]["genesis"], "root");
}

#[test]
fn prune_drops_failed_supernodes() {
    let f = Files::new();
    let g = "start S\nS -> S S\nS -> -2 3\nS -> -1 0\n";
    fs::write(f.path("steep.gvas"), g).unwrap();
    let steep = f.g("steep");
    let (_, full) = supertree_files(&f, &steep, &[]);
    let (dot, pruned) = supertree_files(&f, &steep, &["--prune"]);
    let full: Value = serde_json::from_str(&full).unwrap();
    let pruned: Value = serde_json::from_str(&pruned).unwrap();
    let failed = |v: &Value| v["supernodes"].as_array().unwrap().iter().filter(|s| s["status"] == "failed").count();
    assert!(failed(&full) > 0);
    assert_eq!(failed(&pruned), 0);
    assert!(!dot.contains("color=red"));
}

#[test]
fn output_is_deterministic() {
    for args in [
        vec!["analyze", "corpus:3", "--json"],
        vec!["reach", "corpus:0", "--from", "1", "--to", "2", "--json"],
        vec!["oracle", "corpus:5", "--window", "6"],
    ] {
        let a = gvas(&args);
        let b = gvas(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}
