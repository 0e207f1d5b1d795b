// SPDX-License-Identifier: Apache-2.0

//! Dominators, natural loops and multi-entry cycle detection over
//! intraprocedural control flow.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::ICfg;
use crate::graph::{Graph, VertexId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopInfo {
    pub header: VertexId,
    pub body: BTreeSet<VertexId>,
    pub back_edges: BTreeSet<(VertexId, VertexId)>,
    pub exiting_edges: BTreeSet<(VertexId, VertexId)>,
    pub exit_nodes: BTreeSet<VertexId>,
}

/// Vertices reachable from `entry` in reverse postorder.
fn reverse_postorder(entry: VertexId, succ: &dyn Fn(VertexId) -> Vec<VertexId>) -> Vec<VertexId> {
    let mut seen = BTreeSet::from([entry]);
    let mut post = Vec::new();
    let mut stack = vec![(entry, succ(entry), 0usize)];
    while let Some(top) = stack.last_mut() {
        if top.2 < top.1.len() {
            let w = top.1[top.2];
            top.2 += 1;
            if seen.insert(w) {
                let s = succ(w);
                stack.push((w, s, 0));
            }
        } else {
            post.push(top.0);
            stack.pop();
        }
    }
    post.reverse();
    post
}

/// Immediate dominators of the vertices reachable from `entry` (the entry
/// maps to itself), by the iterative Cooper–Harvey–Kennedy scheme.
pub fn dominators(entry: VertexId, succ: &dyn Fn(VertexId) -> Vec<VertexId>) -> BTreeMap<VertexId, VertexId> {
    let rpo = reverse_postorder(entry, succ);
    let index: BTreeMap<VertexId, usize> = rpo.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut preds: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for &u in &rpo {
        for w in succ(u) {
            preds.entry(w).or_default().push(u);
        }
    }
    let mut idom: Vec<Option<usize>> = vec![None; rpo.len()];
    idom[0] = Some(0);
    let intersect = |idom: &[Option<usize>], mut a: usize, mut b: usize| {
        while a != b {
            while a > b {
                a = idom[a].unwrap();
            }
            while b > a {
                b = idom[b].unwrap();
            }
        }
        a
    };
    let mut changed = true;
    while changed {
        changed = false;
        for i in 1..rpo.len() {
            let mut new = None;
            for p in preds.get(&rpo[i]).into_iter().flatten() {
                let pi = index[p];
                if idom[pi].is_some() {
                    new = Some(match new {
                        None => pi,
                        Some(cur) => intersect(&idom, pi, cur),
                    });
                }
            }
            if new != idom[i] {
                idom[i] = new;
                changed = true;
            }
        }
    }
    rpo.iter().enumerate().map(|(i, &v)| (v, rpo[idom[i].unwrap()])).collect()
}

fn dominates(idom: &BTreeMap<VertexId, VertexId>, a: VertexId, mut b: VertexId) -> bool {
    loop {
        if a == b {
            return true;
        }
        let up = idom[&b];
        if up == b {
            return false;
        }
        b = up;
    }
}

/// Natural loops of the flow graph rooted at `entry`. Back edges sharing a
/// header form one loop. Innermost (smallest) loops come first.
pub fn natural_loops(entry: VertexId, succ: &dyn Fn(VertexId) -> Vec<VertexId>) -> Vec<LoopInfo> {
    let idom = dominators(entry, succ);
    let mut preds: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    let mut by_header: BTreeMap<VertexId, BTreeSet<(VertexId, VertexId)>> = BTreeMap::new();
    for &u in idom.keys() {
        for w in succ(u) {
            preds.entry(w).or_default().push(u);
            if dominates(&idom, w, u) {
                by_header.entry(w).or_default().insert((u, w));
            }
        }
    }
    let mut loops: Vec<LoopInfo> = by_header
        .into_iter()
        .map(|(h, back_edges)| {
            let mut body = BTreeSet::from([h]);
            let mut stack: Vec<VertexId> = back_edges.iter().map(|e| e.0).filter(|&t| t != h).collect();
            while let Some(v) = stack.pop() {
                if body.insert(v) {
                    stack.extend(preds.get(&v).into_iter().flatten().copied());
                }
            }
            let mut exiting_edges = BTreeSet::new();
            for &u in &body {
                for w in succ(u) {
                    if !body.contains(&w) {
                        exiting_edges.insert((u, w));
                    }
                }
            }
            let exit_nodes = exiting_edges.iter().map(|e| e.1).collect();
            LoopInfo { header: h, body, back_edges, exiting_edges, exit_nodes }
        })
        .collect();
    loops.sort_by_key(|l| (l.body.len(), l.header));
    loops
}

/// Natural loops of a plain graph.
pub fn natural_loops_in_graph(g: &Graph, entry: VertexId) -> Vec<LoopInfo> {
    natural_loops(entry, &|v| g.successors(v).to_vec())
}

/// Natural loops of every function, on the intraprocedural view.
pub fn find_loops(icfg: &ICfg) -> Vec<LoopInfo> {
    let mut out = Vec::new();
    for f in &icfg.functions {
        out.extend(natural_loops(f.entry, &|v| icfg.intra_successors(v)));
    }
    out.sort_by_key(|l| (l.body.len(), l.header));
    out
}

/// Strongly connected components (with at least one cycle) of the subgraph
/// induced by `within`.
fn cyclic_sccs(within: &BTreeSet<VertexId>, succ: &dyn Fn(VertexId) -> Vec<VertexId>) -> Vec<BTreeSet<VertexId>> {
    // Tarjan, iterative
    let mut index: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut low: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut on_stack = BTreeSet::new();
    let mut stack = Vec::new();
    let mut out = Vec::new();
    let mut counter = 0;
    let inner = |v: VertexId| -> Vec<VertexId> { succ(v).into_iter().filter(|w| within.contains(w)).collect() };
    for &root in within {
        if index.contains_key(&root) {
            continue;
        }
        let mut work = vec![(root, inner(root), 0usize)];
        index.insert(root, counter);
        low.insert(root, counter);
        counter += 1;
        stack.push(root);
        on_stack.insert(root);
        while let Some(top) = work.last_mut() {
            let v = top.0;
            if top.2 < top.1.len() {
                let w = top.1[top.2];
                top.2 += 1;
                if !index.contains_key(&w) {
                    index.insert(w, counter);
                    low.insert(w, counter);
                    counter += 1;
                    stack.push(w);
                    on_stack.insert(w);
                    let s = inner(w);
                    work.push((w, s, 0));
                } else if on_stack.contains(&w) {
                    let m = low[&v].min(index[&w]);
                    low.insert(v, m);
                }
            } else {
                work.pop();
                if let Some(parent) = work.last() {
                    let m = low[&parent.0].min(low[&v]);
                    low.insert(parent.0, m);
                }
                if low[&v] == index[&v] {
                    let mut comp = BTreeSet::new();
                    loop {
                        let w = stack.pop().unwrap();
                        on_stack.remove(&w);
                        comp.insert(w);
                        if w == v {
                            break;
                        }
                    }
                    let cyclic = comp.len() > 1 || succ(v).contains(&v);
                    if cyclic {
                        out.push(comp);
                    }
                }
            }
        }
    }
    out
}

/// Cyclic regions entered at two or more distinct vertices. A component with
/// a single entry is a natural loop; its header is peeled off and the rest
/// is searched again for nested multi-entry cycles.
pub fn multi_entry_regions(
    vertices: &BTreeSet<VertexId>,
    entry: VertexId,
    succ: &dyn Fn(VertexId) -> Vec<VertexId>,
) -> Vec<BTreeSet<VertexId>> {
    let mut preds: BTreeMap<VertexId, Vec<VertexId>> = BTreeMap::new();
    for &u in vertices {
        for w in succ(u) {
            preds.entry(w).or_default().push(u);
        }
    }
    let mut out = Vec::new();
    let mut work = vec![vertices.clone()];
    while let Some(scope) = work.pop() {
        for comp in cyclic_sccs(&scope, succ) {
            let entries: BTreeSet<VertexId> = comp
                .iter()
                .copied()
                .filter(|v| *v == entry || preds.get(v).into_iter().flatten().any(|p| !comp.contains(p)))
                .collect();
            if entries.len() >= 2 {
                out.push(comp);
            } else if let Some(&h) = entries.iter().next() {
                let mut rest = comp.clone();
                rest.remove(&h);
                work.push(rest);
            }
        }
    }
    out.sort();
    out
}

/// Multi-entry cycles of every function. These are left untransformed.
pub fn detect_extraordinary_loops(icfg: &ICfg) -> Vec<BTreeSet<VertexId>> {
    let mut out = Vec::new();
    for (fid, f) in icfg.functions.iter().enumerate() {
        let vs: BTreeSet<VertexId> = icfg.reachable_blocks(fid).into_iter().collect();
        out.extend(multi_entry_regions(&vs, f.entry, &|v| icfg.intra_successors(v)));
    }
    out
}

/// Edges closing a cycle in a depth-first walk from `entry`, restricted to
/// edges with both ends in `region`.
pub fn retreating_edges(
    entry: VertexId,
    region: &BTreeSet<VertexId>,
    succ: &dyn Fn(VertexId) -> Vec<VertexId>,
) -> BTreeSet<(VertexId, VertexId)> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::from([entry]);
    let mut on_path = BTreeSet::from([entry]);
    let mut stack = vec![(entry, succ(entry), 0usize)];
    while let Some(top) = stack.last_mut() {
        let v = top.0;
        if top.2 < top.1.len() {
            let w = top.1[top.2];
            top.2 += 1;
            if on_path.contains(&w) {
                if region.contains(&v) && region.contains(&w) {
                    out.insert((v, w));
                }
            } else if seen.insert(w) {
                on_path.insert(w);
                let s = succ(w);
                stack.push((w, s, 0));
            }
        } else {
            on_path.remove(&v);
            stack.pop();
        }
    }
    out
}

/// Intraprocedural edges that close a cycle: natural-loop back edges
/// (self-loops included) and depth-first retreating edges inside
/// multi-entry cycles.
pub fn cycle_edges(icfg: &ICfg) -> BTreeSet<(VertexId, VertexId)> {
    let mut out: BTreeSet<(VertexId, VertexId)> = find_loops(icfg).into_iter().flat_map(|l| l.back_edges).collect();
    for (fid, f) in icfg.functions.iter().enumerate() {
        let vs: BTreeSet<VertexId> = icfg.reachable_blocks(fid).into_iter().collect();
        let succ = |v: VertexId| icfg.intra_successors(v);
        for region in multi_entry_regions(&vs, f.entry, &succ) {
            out.extend(retreating_edges(f.entry, &region, &succ));
        }
    }
    out
}

/// All blocks with their intraprocedural edges minus `cycle_edges`.
pub fn acyclic_intra_graph(icfg: &ICfg) -> Graph {
    let cut = cycle_edges(icfg);
    let mut g = Graph::new(icfg.graph.vertex_count());
    for v in 0..g.vertex_count() {
        for w in icfg.intra_successors(v) {
            if v != w && !cut.contains(&(v, w)) {
                g.ensure_edge(v, w).expect("ids in range");
            }
        }
    }
    for (&v, l) in icfg.graph.labels() {
        g.set_label(v, l.clone());
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn acyclic_has_no_loops() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert!(natural_loops_in_graph(&g, 0).is_empty());
    }

    #[test]
    fn loop_with_two_exits() {
        // 0 -> 1(header) -> 2 -> 3 -> 1 ; 1 -> 4 ; 2 -> 5
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 1), (1, 4), (2, 5)]).unwrap();
        let loops = natural_loops_in_graph(&g, 0);
        assert_eq!(loops.len(), 1);
        let l = &loops[0];
        assert_eq!(l.header, 1);
        assert_eq!(l.body, BTreeSet::from([1, 2, 3]));
        assert_eq!(l.exit_nodes, BTreeSet::from([4, 5]));
        assert_eq!(l.back_edges, BTreeSet::from([(3, 1)]));
    }

    #[test]
    fn nested_loops_inner_first() {
        // outer header 1, inner header 2
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (2, 3), (3, 2), (3, 4), (4, 1), (1, 5)]).unwrap();
        let loops = natural_loops_in_graph(&g, 0);
        assert_eq!(loops.len(), 2);
        assert_eq!(loops[0].header, 2);
        assert!(loops[0].body.is_subset(&loops[1].body));
    }

    #[test]
    fn two_entry_cycle_is_flagged() {
        // 0 -> 1, 0 -> 2, 1 <-> 2
        let g = Graph::from_edges(4, &[(0, 1), (0, 2), (1, 2), (2, 1), (2, 3)]).unwrap();
        let all: BTreeSet<VertexId> = (0..4).collect();
        let regions = multi_entry_regions(&all, 0, &|v| g.successors(v).to_vec());
        assert_eq!(regions, vec![BTreeSet::from([1, 2])]);
        let natural = Graph::from_edges(3, &[(0, 1), (1, 2), (2, 1)]).unwrap();
        let all: BTreeSet<VertexId> = (0..3).collect();
        assert!(multi_entry_regions(&all, 0, &|v| natural.successors(v).to_vec()).is_empty());
    }
}
