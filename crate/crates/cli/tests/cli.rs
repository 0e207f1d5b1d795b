// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn empc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_empc")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Largest set of pairwise unreachable vertices, by trying every subset.
fn max_antichain(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut reach = vec![vec![false; n]; n];
    for &(u, v) in edges {
        reach[u][v] = true;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if reach[i][k] && reach[k][j] {
                    reach[i][j] = true;
                }
            }
        }
    }
    (0u32..1 << n)
        .filter(|&s| (0..n).all(|i| (0..n).all(|j| s >> i & 1 == 0 || s >> j & 1 == 0 || !reach[i][j])))
        .map(|s| s.count_ones() as usize)
        .max()
        .unwrap()
}

#[test]
fn mpc_compute_matches_the_antichain_bound() {
    let dir = tempfile::tempdir().unwrap();
    let graphs: [(usize, &[(usize, usize)]); 3] = [
        (4, &[(0, 1), (0, 2), (1, 3), (2, 3)]),
        (6, &[(0, 1), (1, 2), (3, 4), (4, 5), (0, 4), (3, 1)]),
        (5, &[(0, 4), (1, 4), (2, 4), (3, 4)]),
    ];
    for (i, (n, edges)) in graphs.iter().enumerate() {
        let path = dir.path().join(format!("g{i}.json"));
        let es: Vec<[usize; 2]> = edges.iter().map(|&(u, v)| [u, v]).collect();
        fs::write(&path, serde_json::json!({"vertices": n, "edges": es}).to_string()).unwrap();
        let v = json(&empc(&["mpc", "compute", "--graph", p(&path), "--seed", "3"]));
        let want = max_antichain(*n, edges);
        assert_eq!(v["size"], want, "graph {i}");
        let paths = v["paths"].as_array().unwrap();
        assert_eq!(paths.len(), want);
        let mut seen = vec![false; *n];
        for path in paths {
            for x in path.as_array().unwrap() {
                seen[x.as_u64().unwrap() as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s), "graph {i} not covered");

        let set = json(&empc(&["mpc", "enumerate", "--graph", p(&path), "--cap", "2"]));
        let covers = set["covers"].as_array().unwrap();
        assert!(!covers.is_empty() && covers.len() <= 2);
        assert!(covers.iter().all(|c| c["size"] == want));
    }
}

#[test]
fn fig1_experiment_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    let out = empc(&["corpus", "generate", "--shape", "fig1", "--count", "1", "--out", p(&corpus)]);
    assert!(out.status.success());
    let prog = corpus.join("fig1-000.mir");
    let report = json(&empc(&["experiment", "run", "--program", p(&prog), "--strategies", "empc,bfs"]));
    let cells = report["cells"].as_array().unwrap();
    assert_eq!(cells.len(), 2);
    assert_eq!(cells[0]["strategy"], "empc");
    assert_eq!(cells[0]["completed_paths"]["mean"], 3.0);
    assert_eq!(cells[1]["strategy"], "bfs");
    assert_eq!(cells[1]["completed_paths"]["mean"], 6.0);
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = walk(dir).into_iter().map(|f| (f.strip_prefix(dir).unwrap().display().to_string(), fs::read(&f).unwrap())).collect();
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}

#[test]
fn experiments_replay_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(empc(&["corpus", "generate", "--shape", "mixed", "--count", "3", "--seed", "9", "--out", p(&corpus)]).status.success());
    let progs: Vec<String> = (0..3).map(|i| p(&corpus.join(format!("mixed-{i:03}.mir"))).to_string()).collect();
    let run = |name: &str, workers: &str| {
        let out = dir.path().join(name);
        let mut args = vec!["experiment", "run", "--strategies", "empc,bfs,random-path", "--repeats", "5", "--seed", "17"];
        args.extend(["--workers", workers, "--out", p(&out)]);
        for prog in &progs {
            args.extend(["--program", prog.as_str()]);
        }
        assert!(empc(&args).status.success());
        files(&out)
    };
    let a = run("a", "1");
    assert_eq!(a.len(), 1 + 3 * 3 * 5 * 2);
    assert_eq!(a, run("b", "1"));
    assert_eq!(a, run("c", "4"));
}

#[test]
fn sym_run_writes_metrics_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(empc(&["corpus", "generate", "--shape", "chain", "--branches", "0", "--count", "1", "--out", p(&corpus)]).status.success());
    let prog = corpus.join("chain-000.mir");
    let text = fs::read_to_string(&prog).unwrap();
    assert!(!text.contains(" br "), "{text}");
    let out = dir.path().join("m.json");
    let res = empc(&["sym", "run", "--program", p(&prog), "--strategy", "dfs", "--seed", "7", "--out", p(&out)]);
    assert!(res.status.success());
    let m: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(m["completed_paths"], 1);
    assert_eq!(m["seed"], 7);
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "step,covered_blocks,live_states");
    let series = m["covered_series"].as_array().unwrap();
    assert_eq!(rows.len() - 1, series.len());
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[1], series.last().unwrap().to_string());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(empc(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(empc(&["mpc", "compute"]).status.code(), Some(1));
    assert_eq!(empc(&["--help"]).status.code(), Some(0));

    let cyc = dir.path().join("cyc.json");
    fs::write(&cyc, r#"{"vertices": 2, "edges": [[0, 1], [1, 0]]}"#).unwrap();
    assert_eq!(empc(&["mpc", "compute", "--graph", p(&cyc)]).status.code(), Some(2));
    let missing = dir.path().join("nope.mir");
    assert_eq!(empc(&["sym", "run", "--program", p(&missing)]).status.code(), Some(2));

    let prog = dir.path().join("p.mir");
    fs::write(&prog, "input a in [0, 1];\nfn main() {\n  e: return a;\n}\n").unwrap();
    assert_eq!(empc(&["sym", "run", "--program", p(&prog), "--strategy", "best-first"]).status.code(), Some(2));
    assert_eq!(empc(&["experiment", "run", "--program", p(&prog)]).status.code(), Some(2));
    assert_eq!(empc(&["experiment", "run", "--program", p(&prog), "--strategies", "bfs", "--repeats", "0"]).status.code(), Some(2));
    let blocked = prog.join("m.json");
    assert_eq!(empc(&["sym", "run", "--program", p(&prog), "--out", p(&blocked)]).status.code(), Some(3));
    fs::write(&prog, "fn main() {\n  e: goto nowhere;\n}\n").unwrap();
    assert_eq!(empc(&["dep", "analyze", "--program", p(&prog)]).status.code(), Some(2));
}

#[test]
fn icfg_transform_accepts_json_or_program() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("loop.mir");
    fs::write(&prog, "input n in [0, 3];\nfn main() {\n  e: i := 0; goto h;\n  h: br i < n ? b : x;\n  b: i := i + 1; goto h;\n  x: return i;\n}\n").unwrap();
    let icfg = dir.path().join("icfg.json");
    assert!(empc(&["icfg", "build", "--program", p(&prog), "--out", p(&icfg)]).status.success());
    let from_json = json(&empc(&["icfg", "transform", "--in", p(&icfg)]));
    let from_prog = json(&empc(&["icfg", "transform", "--program", p(&prog)]));
    assert_eq!(from_json, from_prog);
    let kinds: Vec<&Value> = from_json["regions"].as_array().unwrap().iter().map(|r| &r["kind"]).collect();
    assert!(kinds.iter().any(|k| k.to_string().contains("loop")), "{kinds:?}");
}
