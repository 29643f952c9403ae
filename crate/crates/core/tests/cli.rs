use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

impl Run {
    fn json(&self) -> Value {
        serde_json::from_str(&self.stdout).unwrap_or_else(|e| panic!("{e}: {}", self.stdout))
    }
}

fn run(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_orientcorr")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn graphs() -> (TempDir, PathBuf, PathBuf, PathBuf) {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "path.g", "u v\nv w\n");
    let tri = write(&dir, "triangle.g", "s a\na b\nb s\n");
    let k4 = write(&dir, "k4-ab.g", "vertices: a b s c\na s\na c\nb s\nb c\ns c\n");
    (dir, path, tri, k4)
}

#[test]
fn lemma1_on_path() {
    let (_d, path, _, _) = graphs();
    let r = run(&["verify", "lemma1", "--graph", s(&path), "--u", "u", "--p", "1/2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["subcommand"], "verify lemma1");
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 6);
    for e in entries {
        assert_eq!(e["holds"], true);
        assert!(e["diff"]["entries"].as_array().unwrap().is_empty());
    }
    assert_eq!(v["summary"]["violated"], 0);
}

#[test]
fn corollaries_on_k4_minus_ab() {
    let (_d, _, _, k4) = graphs();
    let r = run(&["verify", "corollaries", "--graph", s(&k4), "--s", "s", "--a", "a", "--b", "b", "--t", "c"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    let entries = v["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 3);
    assert!(entries.iter().all(|e| e["holds"] == true));
}

#[test]
fn corollaries_with_t_equal_s_is_an_input_error() {
    let (_d, _, _, k4) = graphs();
    let r = run(&["verify", "corollaries", "--graph", s(&k4), "--s", "s", "--a", "a", "--b", "b", "--t", "s"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("probability zero"));
}

#[test]
fn monte_carlo_on_triangle() {
    let (_d, _, tri, _) = graphs();
    let args = ["mc", "--model", "o", "--graph", s(&tri), "--event", "reach:s->a", "--samples", "100000", "--seed", "42"];
    let r = run(&args);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    let est: f64 = v["entries"][0]["estimate"].as_str().unwrap().parse().unwrap();
    let se: f64 = v["entries"][0]["standard_error"].as_str().unwrap().parse().unwrap();
    assert!((est - 0.625).abs() <= 3.0 * se);
    assert_eq!(run(&args).json()["entries"], v["entries"]);
}

#[test]
fn reports_are_reproducible_apart_from_wall_time() {
    let (_d, _, tri, _) = graphs();
    let args = ["verify", "oriented-vdbhk", "--graph", s(&tri), "--s", "s", "--a", "a", "--b", "b", "--x", "b"];
    let strip = |mut v: Value| {
        v.as_object_mut().unwrap().remove("wall_time_seconds");
        v
    };
    let (a, b) = (run(&args), run(&args));
    assert_eq!(a.code, 0, "{}", a.stderr);
    assert_eq!(strip(a.json()), strip(b.json()));
}

#[test]
fn oriented_harris_with_events() {
    let (_d, _, tri, _) = graphs();
    let r = run(&[
        "verify", "oriented-harris", "--graph", s(&tri), "--s", "s", "--event", "reach:s->a|b", "--event", "reach:s->b",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["entries"][0]["holds"], true);
}

#[test]
fn harris_with_edge_events_in_text() {
    let (_d, path, _, _) = graphs();
    let r = run(&[
        "verify", "harris", "--graph", s(&path), "--p", "1/3", "--event", "edges:0", "--event", "edges:0,1", "--format", "text",
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(r.stdout.contains("HOLDS harris"));
    assert!(r.stdout.contains("lhs=1/27 rhs=1/9"));
}

#[test]
fn bunkbed_single_edge() {
    let dir = TempDir::new().unwrap();
    let edge = write(&dir, "edge.g", "x y\n");
    let r = run(&["bunkbed", "--graph", s(&edge), "--u", "x", "--v", "y", "--p", "1/2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v = r.json();
    assert_eq!(v["entries"][0]["lhs"], "9/16");
    assert_eq!(v["entries"][0]["rhs"], "7/16");
}

#[test]
fn dist_and_lemma2() {
    let (_d, path, _, _) = graphs();
    let r = run(&["dist", "--graph", s(&path), "--model", "o", "--u", "u"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let law = &r.json()["entries"][0]["law"];
    assert_eq!(law["law"][0]["probability"], "1/2");
    let r = run(&["verify", "lemma2", "--graph", s(&path), "--u", "u", "--v", "w", "--p", "1/3"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["summary"]["violated"], 0);
}

#[test]
fn search_and_sweeps() {
    let r = run(&["search", "signs", "--n", "3", "--mode", "a-in-in-cluster-t"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(!r.json()["entries"].as_array().unwrap().is_empty());
    let r = run(&["verify", "mixed", "--sweep", "3", "--pp", "1/3", "--p", "1/3", "--threads", "2"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(r.json()["summary"]["violated"], 0);
}

#[test]
fn usage_errors_exit_one() {
    let (_d, path, _, _) = graphs();
    assert_eq!(run(&["frobnicate"]).code, 1);
    assert_eq!(run(&["verify", "lemma1", "--graph", "/nonexistent/g", "--u", "u"]).code, 1);
    assert_eq!(run(&["verify", "lemma1", "--graph", s(&path), "--u", "u", "--p", "3/2"]).code, 1);
    assert_eq!(run(&["verify", "lemma1", "--graph", s(&path), "--u", "u", "--p", "0.5"]).code, 1);
    assert_eq!(run(&["verify", "lemma1", "--graph", s(&path), "--u", "zz"]).code, 1);
    assert_eq!(run(&["mc", "--graph", s(&path), "--model", "o", "--event", "true", "--samples", "0"]).code, 1);
    let dir = TempDir::new().unwrap();
    let bad = write(&dir, "loop.g", "a a\n");
    assert_eq!(run(&["dist", "--graph", s(&bad), "--model", "o", "--u", "a"]).code, 1);
    assert_eq!(run(&["--help"]).code, 0);
}
