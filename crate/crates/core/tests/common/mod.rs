// SPDX-License-Identifier: Apache-2.0

// Independent oracles shared by the integration tests. Nothing here calls
// into the algorithms it is used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use empc_core::graph::Graph;
use empc_core::mpc::{BipartiteGraph, Matching};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random DAG: orient each pair along a hidden random order, keep with
/// probability `density`, then expose vertices under shuffled ids.
pub fn random_dag<R: Rng>(rng: &mut R, n: usize, density: f64) -> Graph {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                edges.push((perm[i], perm[j]));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

/// Random digraph that may contain cycles.
pub fn random_digraph<R: Rng>(rng: &mut R, n: usize, density: f64) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.gen_bool(density) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_bipartite<R: Rng>(rng: &mut R, nl: usize, nr: usize, density: f64) -> BipartiteGraph {
    let mut edges = Vec::new();
    for l in 0..nl {
        for r in 0..nr {
            if rng.gen_bool(density) {
                edges.push((l, r));
            }
        }
    }
    BipartiteGraph::from_edges(nl, nr, &edges)
}

/// Nonempty path i -> j by plain DFS.
pub fn dfs_reaches(g: &Graph, i: usize, j: usize) -> bool {
    let mut seen = vec![false; g.vertex_count()];
    let mut stack: Vec<usize> = g.successors(i).to_vec();
    while let Some(u) = stack.pop() {
        if u == j {
            return true;
        }
        if !std::mem::replace(&mut seen[u], true) {
            stack.extend_from_slice(g.successors(u));
        }
    }
    false
}

/// Acyclicity by repeatedly stripping zero-in-degree vertices.
pub fn kahn_acyclic(g: &Graph) -> bool {
    let n = g.vertex_count();
    let mut indeg: Vec<usize> = (0..n).map(|v| g.predecessors(v).len()).collect();
    let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut removed = 0;
    while let Some(u) = ready.pop() {
        removed += 1;
        for &v in g.successors(u) {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                ready.push(v);
            }
        }
    }
    removed == n
}

/// Every matching of `b`, found by assigning each left vertex to nothing or
/// to a free neighbour.
pub fn all_matchings(b: &BipartiteGraph) -> Vec<BTreeSet<(usize, usize)>> {
    fn go(b: &BipartiteGraph, l: usize, used: &mut Vec<bool>, cur: &mut Vec<(usize, usize)>, out: &mut Vec<BTreeSet<(usize, usize)>>) {
        if l == b.left_count() {
            out.push(cur.iter().copied().collect());
            return;
        }
        go(b, l + 1, used, cur, out);
        for &r in b.neighbors(l) {
            if !used[r] {
                used[r] = true;
                cur.push((l, r));
                go(b, l + 1, used, cur, out);
                cur.pop();
                used[r] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(b, 0, &mut vec![false; b.right_count()], &mut Vec::new(), &mut out);
    out
}

pub fn max_matching_size(b: &BipartiteGraph) -> usize {
    all_matchings(b).iter().map(BTreeSet::len).max().unwrap_or(0)
}

pub fn all_max_matchings(b: &BipartiteGraph) -> BTreeSet<BTreeSet<(usize, usize)>> {
    let all = all_matchings(b);
    let best = all.iter().map(BTreeSet::len).max().unwrap_or(0);
    all.into_iter().filter(|m| m.len() == best).collect()
}

pub fn as_set(m: &Matching) -> BTreeSet<(usize, usize)> {
    m.pairs().clone()
}

/// Checks the matching constraint against `b`.
pub fn is_matching_of(m: &Matching, b: &BipartiteGraph) -> bool {
    let mut l = BTreeSet::new();
    let mut r = BTreeSet::new();
    m.pairs().iter().all(|&(x, y)| b.has_edge(x, y) && l.insert(x) && r.insert(y))
}

/// All maximal paths (from a zero-in-degree vertex to a zero-out-degree one).
pub fn maximal_paths(g: &Graph) -> Vec<Vec<usize>> {
    fn go(g: &Graph, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let last = *cur.last().unwrap();
        if g.successors(last).is_empty() {
            out.push(cur.clone());
            return;
        }
        for &w in g.successors(last) {
            cur.push(w);
            go(g, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for s in (0..g.vertex_count()).filter(|&v| g.predecessors(v).is_empty()) {
        go(g, &mut vec![s], &mut out);
    }
    out
}

/// Width of the reachability order by trying every vertex subset. By
/// Dilworth this is the minimum number of (possibly overlapping) paths.
pub fn max_antichain(g: &Graph) -> usize {
    let n = g.vertex_count();
    assert!(n <= 16);
    let reach: Vec<Vec<bool>> = (0..n).map(|i| (0..n).map(|j| dfs_reaches(g, i, j)).collect()).collect();
    let mut best = 0;
    for mask in 0u32..1 << n {
        let vs: Vec<usize> = (0..n).filter(|v| mask & (1 << v) != 0).collect();
        if vs.len() <= best {
            continue;
        }
        if vs.iter().all(|&a| vs.iter().all(|&b| !reach[a][b])) {
            best = vs.len();
        }
    }
    best
}

/// Every nonempty path of a DAG.
pub fn all_paths(g: &Graph) -> Vec<Vec<usize>> {
    fn go(g: &Graph, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        let last = *cur.last().unwrap();
        for &w in g.successors(last) {
            cur.push(w);
            go(g, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    for v in 0..g.vertex_count() {
        go(g, &mut vec![v], &mut out);
    }
    out
}

/// Largest number of `hit` paths in any cover by `max_antichain(g)` paths,
/// trying every combination of paths. Small graphs only.
pub fn max_hits_exhaustive(g: &Graph, hit: &dyn Fn(&[usize]) -> bool) -> usize {
    let k = max_antichain(g);
    let paths = all_paths(g);
    let full: u64 = (1u64 << g.vertex_count()) - 1;
    let masks: Vec<(u64, bool)> =
        paths.iter().map(|p| (p.iter().fold(0, |m, &v| m | 1 << v), hit(p))).collect();
    fn go(masks: &[(u64, bool)], start: usize, left: usize, covered: u64, full: u64, score: usize, best: &mut Option<usize>) {
        if left == 0 {
            if covered == full {
                *best = Some(best.map_or(score, |b| b.max(score)));
            }
            return;
        }
        for i in start..masks.len() {
            go(masks, i + 1, left - 1, covered | masks[i].0, full, score + masks[i].1 as usize, best);
        }
    }
    let mut best = None;
    go(&masks, 0, k, 0, full, 0, &mut best);
    best.expect("a cover of minimum size exists")
}

/// Relabels `g` under a random permutation; returns the graph and old→new.
pub fn shuffle_ids<R: Rng>(rng: &mut R, n: usize, edges: &[(usize, usize)]) -> (Graph, Vec<usize>) {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let e: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
    (Graph::from_edges(n, &e).unwrap(), perm)
}

pub struct RegionInstance {
    pub g: Graph,
    pub entry: usize,
    /// Exit for one-entry-one-exit instances.
    pub exit: usize,
    /// Region vertices (body for loop instances).
    pub region: BTreeSet<usize>,
}

// Layout along a hidden order: `before` outer vertices, the region, then
// `after` outer vertices. Outer edges only go forward.
fn outer_edges<R: Rng>(rng: &mut R, before: &[usize], after: &[usize], d: f64, edges: &mut Vec<(usize, usize)>) {
    let outer: Vec<usize> = before.iter().chain(after).copied().collect();
    for i in 0..outer.len() {
        for j in i + 1..outer.len() {
            if rng.gen_bool(d) {
                edges.push((outer[i], outer[j]));
            }
        }
    }
}

/// A DAG of `n` vertices with an embedded one-entry-one-exit region whose
/// interior vertices all lie between entry and exit.
pub fn one_entry_one_exit_instance<R: Rng>(rng: &mut R, n: usize) -> RegionInstance {
    assert!(n >= 2);
    let interior = rng.gen_range(0..=(n - 2).min(5));
    let rest = n - 2 - interior;
    let nb = rng.gen_range(0..=rest);
    let before: Vec<usize> = (0..nb).collect();
    let s = nb;
    let inner: Vec<usize> = (nb + 1..nb + 1 + interior).collect();
    let t = nb + 1 + interior;
    let after: Vec<usize> = (t + 1..n).collect();
    let d = rng.gen_range(0.1..0.5);
    let mut edges = Vec::new();
    for i in 0..inner.len() {
        for j in i + 1..inner.len() {
            if rng.gen_bool(d) {
                edges.push((inner[i], inner[j]));
            }
        }
    }
    for &v in &inner {
        let has_pred = edges.iter().any(|e| e.1 == v);
        let has_succ = edges.iter().any(|e| e.0 == v);
        if !has_pred || rng.gen_bool(0.2) {
            edges.push((s, v));
        }
        if !has_succ || rng.gen_bool(0.2) {
            edges.push((v, t));
        }
    }
    if inner.is_empty() || rng.gen_bool(0.2) {
        edges.push((s, t));
    }
    for &u in &before {
        if rng.gen_bool(0.4) {
            edges.push((u, s));
        }
    }
    for &w in &after {
        if rng.gen_bool(0.4) {
            edges.push((t, w));
        }
    }
    outer_edges(rng, &before, &after, d, &mut edges);
    edges.sort();
    edges.dedup();
    let (g, perm) = shuffle_ids(rng, n, &edges);
    let region = std::iter::once(s).chain(inner).chain([t]).map(|v| perm[v]).collect();
    RegionInstance { g, entry: perm[s], exit: perm[t], region }
}

/// A DAG of `n` vertices with a loop body entered only at its header.
/// Body vertices may leave to any later outer vertex. With `sinks_are_exits`
/// every body vertex gets at least one outside successor, so the exit
/// copies are the only sinks of the loop subgraph.
pub fn loop_instance<R: Rng>(rng: &mut R, n: usize, sinks_are_exits: bool) -> RegionInstance {
    assert!(n >= 3);
    let body_n = rng.gen_range(1..=(n - 2).min(6));
    let rest = n - body_n;
    let nb = rng.gen_range(0..rest);
    let before: Vec<usize> = (0..nb).collect();
    let h = nb;
    let body: Vec<usize> = (nb..nb + body_n).collect();
    let after: Vec<usize> = (nb + body_n..n).collect();
    let d = rng.gen_range(0.1..0.5);
    let mut edges = Vec::new();
    for i in 0..body.len() {
        for j in i + 1..body.len() {
            if rng.gen_bool(d) {
                edges.push((body[i], body[j]));
            }
        }
    }
    for &v in &body[1..] {
        if !edges.iter().any(|e| e.1 == v) {
            edges.push((h, v));
        }
    }
    for &v in &body {
        let mut out = false;
        for &w in &after {
            if rng.gen_bool(0.25) {
                edges.push((v, w));
                out = true;
            }
        }
        if sinks_are_exits && !out && !edges.iter().any(|e| e.0 == v) {
            edges.push((v, after[rng.gen_range(0..after.len())]));
        }
    }
    for &u in &before {
        if rng.gen_bool(0.5) {
            edges.push((u, h));
        }
    }
    outer_edges(rng, &before, &after, d, &mut edges);
    edges.sort();
    edges.dedup();
    let (g, perm) = shuffle_ids(rng, n, &edges);
    let region = body.iter().map(|&v| perm[v]).collect();
    RegionInstance { g, entry: perm[h], exit: usize::MAX, region }
}

pub type Site = (usize, usize);

/// Intraprocedural successors with back edges taken out; a back edge is
/// one whose target dominates its source, dominance decided by deleting
/// the target and testing reachability from the entry.
pub fn back_edge_free_successors(f: &empc_core::ir::Function) -> Vec<Vec<usize>> {
    let n = f.blocks.len();
    let reach_without = |skip: usize, to: usize| {
        if skip == 0 {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            if u == to {
                return true;
            }
            for w in f.successors(u) {
                if w != skip && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        false
    };
    (0..n)
        .map(|u| f.successors(u).into_iter().filter(|&w| w != u && (w == 0 || reach_without(w, u))).collect())
        .collect()
}

/// Every simple path of `succ` from `from` to `to` (a single vertex when
/// they coincide).
pub fn paths_between(succ: &[Vec<usize>], from: usize, to: usize) -> Vec<Vec<usize>> {
    fn go(succ: &[Vec<usize>], to: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let u = *cur.last().unwrap();
        if u == to {
            out.push(cur.clone());
            return;
        }
        for &w in &succ[u] {
            if !cur.contains(&w) {
                cur.push(w);
                go(succ, to, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(succ, to, &mut vec![from], &mut out);
    out
}

fn defines(p: &empc_core::ir::MiniProgram, (f, b): Site, var: &str) -> bool {
    p.functions[f].blocks[b].stmts.iter().any(|s| s.defined() == Some(var))
}

fn branch_vars(p: &empc_core::ir::MiniProgram) -> Vec<(Site, BTreeSet<String>)> {
    let mut out = Vec::new();
    for (f, func) in p.functions.iter().enumerate() {
        for (b, block) in func.blocks.iter().enumerate() {
            if let empc_core::ir::Terminator::Branch { cond, .. } = &block.term {
                out.push(((f, b), cond.vars()));
            }
        }
    }
    out
}

/// Data dependence by enumerating paths into each branch.
pub fn data_dependence_oracle(p: &empc_core::ir::MiniProgram) -> std::collections::BTreeMap<Site, BTreeSet<Site>> {
    let mut out = std::collections::BTreeMap::new();
    for ((f, br), vars) in branch_vars(p) {
        let func = &p.functions[f];
        let succ = back_edge_free_successors(func);
        let mut deps = BTreeSet::new();
        for var in &vars {
            for j in 0..func.blocks.len() {
                if !defines(p, (f, j), var) {
                    continue;
                }
                let ok = paths_between(&succ, j, br).iter().any(|path| path[1..].iter().all(|&k| !defines(p, (f, k), var)));
                if ok {
                    deps.insert((f, j));
                }
            }
            if func.params.contains(var) {
                let clear = paths_between(&succ, 0, br).iter().any(|path| path.iter().all(|&k| !defines(p, (f, k), var)));
                if clear {
                    for (g, caller) in p.functions.iter().enumerate() {
                        for (b, block) in caller.blocks.iter().enumerate() {
                            if block.call().is_some_and(|(callee, _)| callee == f) {
                                deps.insert((g, b));
                            }
                        }
                    }
                }
            }
        }
        if !deps.is_empty() {
            out.insert((f, br), deps);
        }
    }
    out
}

/// Potential dependence by the two-path condition over enumerated paths.
pub fn potential_dependence_oracle(p: &empc_core::ir::MiniProgram) -> std::collections::BTreeMap<Site, BTreeSet<Site>> {
    let branches = branch_vars(p);
    let mut out = std::collections::BTreeMap::new();
    for ((f, bi), vars) in &branches {
        let succ = back_edge_free_successors(&p.functions[*f]);
        let mut deps = BTreeSet::new();
        for ((g, bj), _) in &branches {
            if g != f || bj == bi {
                continue;
            }
            let paths = paths_between(&succ, *bj, *bi);
            for var in vars {
                let def_on = |path: &Vec<usize>| path[1..].iter().any(|&k| defines(p, (*f, k), var));
                if paths.iter().any(|q| !def_on(q)) && paths.iter().any(def_on) {
                    deps.insert((*f, *bj));
                }
            }
        }
        if !deps.is_empty() {
            out.insert((*f, *bi), deps);
        }
    }
    out
}
