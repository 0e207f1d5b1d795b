// SPDX-License-Identifier: Apache-2.0

//! Region extraction on acyclic graphs: one-entry-one-exit splits, loop
//! splits, the two region definitions as checkers, and the brute-force
//! arithmetic that relates cover sizes before and after a split.

use std::collections::{BTreeMap, BTreeSet};

use super::{LoopInfo, TransformError};
use crate::graph::{Graph, VertexId};
use crate::mpc::compute_mpc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitResult {
    pub subgraph: Graph,
    pub remainder: Graph,
    /// Id of the merged vertex in `remainder`.
    pub merged_vertex: VertexId,
    /// Entry of `subgraph`.
    pub entry: VertexId,
    /// Exit vertices of `subgraph`. For loops these are the virtual copies.
    pub exits: Vec<VertexId>,
    /// Original vertex each exit stands for, aligned with `exits`.
    pub exit_targets: Vec<VertexId>,
    /// Original id → subgraph id (exit copies are not listed).
    pub sub_map: BTreeMap<VertexId, VertexId>,
    /// Original id → remainder id. Vertices folded into the merged vertex
    /// map to it.
    pub rem_map: BTreeMap<VertexId, VertexId>,
}

fn definition_error(vertex: VertexId, reason: impl Into<String>) -> TransformError {
    TransformError::Definition { vertex, reason: reason.into() }
}

fn check_members(g: &Graph, vs: &BTreeSet<VertexId>, named: &[VertexId]) -> Result<(), TransformError> {
    for &v in vs.iter().chain(named) {
        if v >= g.vertex_count() {
            return Err(crate::graph::GraphError::UnknownVertex { vertex: v, count: g.vertex_count() }.into());
        }
    }
    for &v in named {
        if !vs.contains(&v) {
            return Err(definition_error(v, "not in the vertex set"));
        }
    }
    Ok(())
}

/// Checks that the subgraph induced by `vs` is a one-entry-one-exit region
/// of `g` with the given entry and exit: the entry has no predecessor and
/// the exit no successor inside, every other vertex keeps all of its
/// successors (resp. predecessors) inside, and no other vertex is a source
/// or sink of the induced graph.
pub fn check_definition1(
    g: &Graph,
    vs: &BTreeSet<VertexId>,
    entry: VertexId,
    exit: VertexId,
) -> Result<(), TransformError> {
    check_members(g, vs, &[entry, exit])?;
    if entry == exit {
        return Err(definition_error(entry, "entry and exit coincide"));
    }
    if g.predecessors(entry).iter().any(|p| vs.contains(p)) {
        return Err(definition_error(entry, "entry has a predecessor inside"));
    }
    if g.successors(exit).iter().any(|s| vs.contains(s)) {
        return Err(definition_error(exit, "exit has a successor inside"));
    }
    for &v in vs {
        if v != exit {
            if let Some(s) = g.successors(v).iter().find(|s| !vs.contains(s)) {
                return Err(definition_error(v, format!("successor {s} outside the region")));
            }
            if g.successors(v).is_empty() {
                return Err(definition_error(v, "second sink"));
            }
        }
        if v != entry {
            if let Some(p) = g.predecessors(v).iter().find(|p| !vs.contains(p)) {
                return Err(definition_error(v, format!("predecessor {p} outside the region")));
            }
            if g.predecessors(v).is_empty() {
                return Err(definition_error(v, "second source"));
            }
        }
    }
    Ok(())
}

/// Checks the loop-region conditions: one entry with no predecessor inside,
/// exits with no successor inside, successors of non-exits and predecessors
/// of non-entries inside. Sinks other than the exits are allowed (latches
/// whose back edges were removed).
pub fn check_definition2(
    g: &Graph,
    vs: &BTreeSet<VertexId>,
    entry: VertexId,
    exits: &BTreeSet<VertexId>,
) -> Result<(), TransformError> {
    let named: Vec<VertexId> = std::iter::once(entry).chain(exits.iter().copied()).collect();
    check_members(g, vs, &named)?;
    if exits.contains(&entry) {
        return Err(definition_error(entry, "entry is also an exit"));
    }
    if g.predecessors(entry).iter().any(|p| vs.contains(p)) {
        return Err(definition_error(entry, "entry has a predecessor inside"));
    }
    for &x in exits {
        if g.successors(x).iter().any(|s| vs.contains(s)) {
            return Err(definition_error(x, "exit has a successor inside"));
        }
    }
    for &v in vs {
        if !exits.contains(&v) {
            if let Some(s) = g.successors(v).iter().find(|s| !vs.contains(s)) {
                return Err(definition_error(v, format!("successor {s} outside the region")));
            }
        }
        if v != entry {
            if let Some(p) = g.predecessors(v).iter().find(|p| !vs.contains(p)) {
                return Err(definition_error(v, format!("predecessor {p} outside the region")));
            }
            if g.predecessors(v).is_empty() {
                return Err(definition_error(v, "second source"));
            }
        }
    }
    Ok(())
}

/// Rebuilds `g` on the vertices of `keep` (increasing old order), sending
/// every edge endpoint through `alias` first. Edges touching a dropped
/// vertex are skipped, as are edges that become self-loops.
fn contract(
    g: &Graph,
    keep: &BTreeSet<VertexId>,
    alias: &BTreeMap<VertexId, VertexId>,
    skip: &dyn Fn(VertexId, VertexId) -> bool,
) -> (Graph, BTreeMap<VertexId, VertexId>) {
    let mut map: BTreeMap<VertexId, VertexId> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut out = Graph::new(keep.len());
    for (u, w) in g.edges() {
        if skip(u, w) {
            continue;
        }
        let a = alias.get(&u).copied().unwrap_or(u);
        let b = alias.get(&w).copied().unwrap_or(w);
        if let (Some(&na), Some(&nb)) = (map.get(&a), map.get(&b)) {
            if na != nb {
                out.ensure_edge(na, nb).expect("ids in range");
            }
        }
    }
    for (&v, l) in g.labels() {
        if !alias.contains_key(&v) {
            if let Some(&nv) = map.get(&v) {
                out.set_label(nv, l.clone());
            }
        }
    }
    for (&from, to) in alias {
        let t = map[to];
        map.insert(from, t);
    }
    (out, map)
}

/// Splits the region between `entry` and `exit` out of the acyclic graph
/// `g`. The remainder keeps every other vertex; entry and exit collapse into
/// one merged vertex that takes the entry's place in the numbering.
pub fn split_one_entry_one_exit(g: &Graph, entry: VertexId, exit: VertexId) -> Result<SplitResult, TransformError> {
    if entry >= g.vertex_count() || exit >= g.vertex_count() {
        let vertex = entry.max(exit);
        return Err(crate::graph::GraphError::UnknownVertex { vertex, count: g.vertex_count() }.into());
    }
    if !g.is_dag() {
        return Err(TransformError::Cyclic);
    }
    let from_entry = g.reachable_from(entry);
    let mut region = BTreeSet::from([entry, exit]);
    for v in 0..g.vertex_count() {
        if from_entry[v] && g.reachable_from(v)[exit] {
            region.insert(v);
        }
    }
    check_definition1(g, &region, entry, exit)?;

    let members: Vec<VertexId> = region.iter().copied().collect();
    let (subgraph, sub_map) = g.induced_subgraph(&members)?;
    let keep: BTreeSet<VertexId> = (0..g.vertex_count()).filter(|v| *v == entry || !region.contains(v)).collect();
    let alias = BTreeMap::from([(exit, entry)]);
    let (mut remainder, rem_map) = contract(g, &keep, &alias, &|u, w| region.contains(&u) && region.contains(&w));
    let merged_vertex = rem_map[&entry];
    remainder.clear_label(merged_vertex);
    Ok(SplitResult {
        entry: sub_map[&entry],
        exits: vec![sub_map[&exit]],
        exit_targets: vec![exit],
        merged_vertex,
        subgraph,
        remainder,
        sub_map,
        rem_map: rem_map.into_iter().filter(|(v, _)| keep.contains(v) || *v == exit).collect(),
    })
}

/// Splits a natural loop out of `g` (its back edges already removed). The
/// subgraph is the body plus one virtual copy per exit vertex; in the
/// remainder the body becomes a single vertex wired to every exit.
/// Exiting edges are read off `g`, not `li`.
pub fn transform_loop(g: &Graph, li: &LoopInfo) -> Result<SplitResult, TransformError> {
    let h = li.header;
    check_members(g, &li.body, &[h])?;
    for &(t, hh) in &li.back_edges {
        if t < g.vertex_count() && g.has_edge(t, hh) {
            return Err(TransformError::Malformed(format!("back edge {t} -> {hh} still present")));
        }
    }
    for &v in &li.body {
        if v != h && g.predecessors(v).iter().any(|p| !li.body.contains(p)) {
            return Err(TransformError::Extraordinary(h));
        }
    }
    let mut exit_targets = BTreeSet::new();
    for &u in &li.body {
        for &w in g.successors(u) {
            if !li.body.contains(&w) {
                exit_targets.insert(w);
            }
        }
    }

    let members: Vec<VertexId> = li.body.iter().copied().collect();
    let (mut subgraph, sub_map) = g.induced_subgraph(&members)?;
    let mut exits = Vec::new();
    let mut copy_of = BTreeMap::new();
    for &x in &exit_targets {
        let c = subgraph.add_vertex();
        if let Some(l) = g.label(x) {
            subgraph.set_label(c, format!("{l}'"));
        }
        copy_of.insert(x, c);
        exits.push(c);
    }
    for &u in &li.body {
        for &w in g.successors(u) {
            if let Some(&c) = copy_of.get(&w) {
                subgraph.add_edge(sub_map[&u], c)?;
            }
        }
    }

    let keep: BTreeSet<VertexId> = (0..g.vertex_count()).filter(|v| *v == h || !li.body.contains(v)).collect();
    let alias: BTreeMap<VertexId, VertexId> = li.body.iter().filter(|v| **v != h).map(|&v| (v, h)).collect();
    let (mut remainder, rem_map) = contract(g, &keep, &alias, &|u, w| li.body.contains(&u) && li.body.contains(&w));
    let merged_vertex = rem_map[&h];
    remainder.clear_label(merged_vertex);
    Ok(SplitResult {
        subgraph,
        remainder,
        merged_vertex,
        entry: sub_map[&h],
        exits,
        exit_targets: exit_targets.into_iter().collect(),
        sub_map,
        rem_map,
    })
}

/// `|P'| - k + max(|P_sub|, k)`.
pub fn combined_mpc_size(size_remainder: usize, k: usize, size_sub: usize) -> usize {
    debug_assert!(k <= size_remainder);
    size_remainder - k + size_sub.max(k)
}

/// Largest number of paths through `merged` over all minimum path covers of
/// `remainder`, by exhaustive search.
pub fn max_k_through(remainder: &Graph, merged: VertexId, limit: usize) -> Result<usize, TransformError> {
    max_hits(remainder, limit, &|p| p.contains(&merged))
}

/// Loop variant: paths using one of the edges `(merged, x)` with `x` in
/// `exits`.
pub fn max_k_through_edges(
    remainder: &Graph,
    merged: VertexId,
    exits: &[VertexId],
    limit: usize,
) -> Result<usize, TransformError> {
    max_hits(remainder, limit, &|p| p.windows(2).any(|w| w[0] == merged && exits.contains(&w[1])))
}

/// Source-to-sink paths of a DAG.
fn maximal_paths(g: &Graph) -> Vec<Vec<VertexId>> {
    let mut out = Vec::new();
    let mut path = Vec::new();
    fn walk(g: &Graph, v: VertexId, path: &mut Vec<VertexId>, out: &mut Vec<Vec<VertexId>>) {
        path.push(v);
        if g.successors(v).is_empty() {
            out.push(path.clone());
        }
        for &w in g.successors(v) {
            walk(g, w, path, out);
        }
        path.pop();
    }
    for s in g.sources() {
        walk(g, s, &mut path, &mut out);
    }
    out
}

// Every minimum cover can be stretched into one made of source-to-sink
// paths of the same size (stretched paths stay distinct, else the cover
// would not be minimum), and stretching never loses a hit. So searching
// covers built from maximal paths is enough.
fn max_hits(g: &Graph, limit: usize, hits: &dyn Fn(&[VertexId]) -> bool) -> Result<usize, TransformError> {
    let n = g.vertex_count();
    if n > limit || n > 64 {
        return Err(TransformError::TooLarge { size: n, limit: limit.min(64) });
    }
    let topo = g.topological_order().ok_or(TransformError::Cyclic)?;
    if n == 0 {
        return Ok(0);
    }
    let k_min = compute_mpc(g, 0).expect("acyclic").size();
    let paths: Vec<(u64, bool)> =
        maximal_paths(g).iter().map(|p| (p.iter().fold(0u64, |m, &v| m | 1 << v), hits(p))).collect();
    let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };

    struct Search<'a> {
        paths: &'a [(u64, bool)],
        topo: &'a [VertexId],
        full: u64,
        k_min: usize,
        best: Option<usize>,
    }
    impl Search<'_> {
        fn go(&mut self, covered: u64, picked: usize, score: usize) {
            if covered == self.full {
                self.best = Some(self.best.map_or(score, |b| b.max(score)));
                return;
            }
            if picked == self.k_min {
                return;
            }
            if let Some(b) = self.best {
                if score + (self.k_min - picked) <= b {
                    return;
                }
            }
            let v = *self.topo.iter().find(|&&v| covered & (1 << v) == 0).unwrap();
            for i in 0..self.paths.len() {
                let (mask, hit) = self.paths[i];
                if mask & (1 << v) != 0 {
                    self.go(covered | mask, picked + 1, score + hit as usize);
                }
            }
        }
    }
    let mut s = Search { paths: &paths, topo: &topo, full, k_min, best: None };
    s.go(0, 0, 0);
    Ok(s.best.expect("a minimum cover of maximal paths exists"))
}
