// SPDX-License-Identifier: Apache-2.0

//! Whole-program decomposition into acyclic regions: one per function
//! (split at its kept call site), one per natural loop, and the main
//! remainder. Every region vertex remembers where it came from.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::loops::{multi_entry_regions, retreating_edges};
use super::{find_loops, split_one_entry_one_exit, transform_loop, CallSite, ICfg, LoopInfo, SplitResult, TransformError};
use crate::enumerate::enumerate_mpcs;
use crate::graph::{Graph, GraphJson, VertexId};
use crate::ir::FuncId;
use crate::mpc::MpcError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegionKind {
    Main,
    Function { function: FuncId },
    Loop { function: FuncId, header: VertexId },
}

/// Where a vertex of the working graph or of a region comes from.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// An iCFG block.
    Block(VertexId),
    /// The common successor added after a function's return blocks.
    VirtualReturn(FuncId),
    /// The vertex standing in for a split-off region.
    Merged(usize),
    /// Virtual copy of a loop exit target.
    ExitCopy(Box<Origin>),
}

impl Origin {
    pub fn is_virtual(&self) -> bool {
        !matches!(self, Origin::Block(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub id: usize,
    pub kind: RegionKind,
    pub graph: Graph,
    pub entry: VertexId,
    pub exits: Vec<VertexId>,
    pub origins: Vec<Origin>,
    /// Region holding this region's merged vertex.
    pub parent: Option<usize>,
}

/// Normalized covers of one region.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RegionCovers {
    pub covers: Vec<Vec<Vec<VertexId>>>,
    pub capped: bool,
}

impl Region {
    pub fn vertex_of(&self, o: &Origin) -> Option<VertexId> {
        self.origins.iter().position(|x| x == o)
    }

    pub fn block_vertex(&self, block: VertexId) -> Option<VertexId> {
        self.vertex_of(&Origin::Block(block))
    }

    /// Stretches a cover path so that it starts at the entry and ends at a
    /// sink: shortest prefix from the entry, then shortest suffix to the
    /// nearest sink (smallest id on ties).
    pub fn normalize_path(&self, path: &[VertexId]) -> Vec<VertexId> {
        let g = &self.graph;
        let mut out = g.shortest_path(self.entry, path[0]).expect("region vertices are reachable from the entry");
        out.pop();
        out.extend_from_slice(path);
        let last = *out.last().unwrap();
        if let Some(sink) = nearest_sink(g, last) {
            out.extend_from_slice(&g.shortest_path(last, sink).unwrap()[1..]);
        }
        out
    }

    /// Enumerated minimum covers with every path normalized. Covers that
    /// coincide after normalization are kept once.
    pub fn covers(&self, cap: Option<usize>, seed: u64) -> Result<RegionCovers, MpcError> {
        let set = enumerate_mpcs(&self.graph, cap, seed)?;
        let mut seen = BTreeSet::new();
        let mut covers = Vec::new();
        for c in &set.covers {
            let mut paths: Vec<Vec<VertexId>> = Vec::new();
            for p in &c.paths {
                let n = self.normalize_path(p);
                if !paths.contains(&n) {
                    paths.push(n);
                }
            }
            let mut key = paths.clone();
            key.sort();
            if seen.insert(key) {
                covers.push(paths);
            }
        }
        Ok(RegionCovers { covers, capped: set.capped })
    }

    pub fn to_json(&self) -> RegionJson {
        RegionJson {
            id: self.id,
            kind: self.kind,
            graph: self.graph.to_json(),
            entry: self.entry,
            exits: self.exits.clone(),
            origins: self.origins.clone(),
            parent: self.parent,
        }
    }
}

fn nearest_sink(g: &Graph, from: VertexId) -> Option<VertexId> {
    if g.out_degree(from) == 0 {
        return None;
    }
    let mut dist = BTreeMap::from([(from, 0usize)]);
    let mut queue = VecDeque::from([from]);
    let mut best: Option<(usize, VertexId)> = None;
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if best.is_some_and(|(bd, _)| d > bd) {
            break;
        }
        if g.out_degree(v) == 0 {
            best = Some(best.map_or((d, v), |(bd, bv)| (bd, bv.min(v))));
            continue;
        }
        for &w in g.successors(v) {
            if !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    best.map(|b| b.1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionJson {
    pub id: usize,
    pub kind: RegionKind,
    pub graph: GraphJson,
    pub entry: VertexId,
    pub exits: Vec<VertexId>,
    pub origins: Vec<Origin>,
    pub parent: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Skipped {
    pub what: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub regions: Vec<Region>,
    pub main: usize,
    pub function_region: BTreeMap<FuncId, usize>,
    /// Loop regions by header block.
    pub loop_region: BTreeMap<VertexId, usize>,
    /// The call site whose edges were kept, per function.
    pub kept_sites: BTreeMap<FuncId, CallSite>,
    /// Call sites whose call and return edges were dropped.
    pub dropped_sites: Vec<CallSite>,
    /// Call block → continuation edges standing in for dropped calls.
    pub summary_edges: BTreeSet<(VertexId, VertexId)>,
    /// Cycle edges taken out (back edges and retreating edges of
    /// multi-entry cycles), as intraprocedural pairs.
    pub removed_edges: BTreeSet<(VertexId, VertexId)>,
    pub extraordinary: Vec<BTreeSet<VertexId>>,
    pub skipped: Vec<Skipped>,
    pub region_of_block: BTreeMap<VertexId, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecompositionJson {
    pub regions: Vec<RegionJson>,
    pub main: usize,
    pub kept_sites: Vec<CallSite>,
    pub dropped_sites: Vec<CallSite>,
    pub summary_edges: Vec<[VertexId; 2]>,
    pub removed_edges: Vec<[VertexId; 2]>,
    pub extraordinary: Vec<Vec<VertexId>>,
    pub skipped: Vec<Skipped>,
}

impl Decomposition {
    pub fn region(&self, id: usize) -> &Region {
        &self.regions[id]
    }

    pub fn is_ancestor(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.regions[b].parent {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    pub fn to_json(&self) -> DecompositionJson {
        DecompositionJson {
            regions: self.regions.iter().map(Region::to_json).collect(),
            main: self.main,
            kept_sites: self.kept_sites.values().copied().collect(),
            dropped_sites: self.dropped_sites.clone(),
            summary_edges: self.summary_edges.iter().map(|&(a, b)| [a, b]).collect(),
            removed_edges: self.removed_edges.iter().map(|&(a, b)| [a, b]).collect(),
            extraordinary: self.extraordinary.iter().map(|s| s.iter().copied().collect()).collect(),
            skipped: self.skipped.clone(),
        }
    }
}

/// Working state: the iCFG being cut down, with vertex origins.
struct Work<'a> {
    icfg: &'a ICfg,
    g: Graph,
    origins: Vec<Origin>,
    reachable: BTreeSet<VertexId>,
    /// Call block → continuation pairs that close a cycle.
    blocked: BTreeSet<(VertexId, VertexId)>,
    removed: BTreeSet<(VertexId, VertexId)>,
    summary: BTreeSet<(VertexId, VertexId)>,
    extraordinary: Vec<BTreeSet<VertexId>>,
    skipped: Vec<Skipped>,
    regions: Vec<Region>,
    /// Block a region's merged vertex hangs off: loop header or call block.
    anchors: Vec<VertexId>,
    kept: BTreeMap<FuncId, CallSite>,
    dropped: Vec<CallSite>,
    /// Functions reachable from the entry function, callees first.
    order: Vec<FuncId>,
    recursive_sites: BTreeSet<VertexId>,
}

impl<'a> Work<'a> {
    fn new(icfg: &'a ICfg) -> Self {
        let nf = icfg.functions.len();
        let mut callees: Vec<Vec<FuncId>> = vec![Vec::new(); nf];
        let reachable_in: Vec<BTreeSet<VertexId>> =
            (0..nf).map(|f| icfg.reachable_blocks(f).into_iter().collect()).collect();
        for cs in &icfg.call_sites {
            let f = icfg.function_of[cs.block].unwrap();
            if reachable_in[f].contains(&cs.block) && !callees[f].contains(&cs.callee) {
                callees[f].push(cs.callee);
            }
        }
        // post-order from the entry function
        let mut order = Vec::new();
        let mut seen = vec![false; nf];
        let mut stack = vec![(icfg.entry_function, 0usize)];
        seen[icfg.entry_function] = true;
        while let Some(top) = stack.last_mut() {
            let f = top.0;
            if top.1 < callees[f].len() {
                let c = callees[f][top.1];
                top.1 += 1;
                if !seen[c] {
                    seen[c] = true;
                    stack.push((c, 0));
                }
            } else {
                order.push(f);
                stack.pop();
            }
        }
        let reaches = |from: FuncId, to: FuncId| {
            let mut seen = BTreeSet::from([from]);
            let mut stack = vec![from];
            while let Some(f) = stack.pop() {
                for &c in &callees[f] {
                    if c == to {
                        return true;
                    }
                    if seen.insert(c) {
                        stack.push(c);
                    }
                }
            }
            false
        };
        let reachable: BTreeSet<VertexId> = order.iter().flat_map(|&f| reachable_in[f].iter().copied()).collect();
        let recursive_sites = icfg
            .call_sites
            .iter()
            .filter(|cs| reachable.contains(&cs.block))
            .filter(|cs| reaches(cs.callee, icfg.function_of[cs.block].unwrap()))
            .map(|cs| cs.block)
            .collect();

        let mut g = icfg.graph.clone();
        let all: Vec<(VertexId, VertexId)> = g.edges().collect();
        for (u, w) in all {
            if !reachable.contains(&u) || !reachable.contains(&w) {
                g.remove_edge(u, w);
            }
        }
        Work {
            icfg,
            origins: (0..g.vertex_count()).map(Origin::Block).collect(),
            g,
            reachable,
            blocked: BTreeSet::new(),
            removed: BTreeSet::new(),
            summary: BTreeSet::new(),
            extraordinary: Vec::new(),
            skipped: Vec::new(),
            regions: Vec::new(),
            anchors: Vec::new(),
            kept: BTreeMap::new(),
            dropped: Vec::new(),
            order,
            recursive_sites,
        }
    }

    fn index_of(&self, o: &Origin) -> Option<VertexId> {
        self.origins.iter().position(|x| x == o)
    }

    fn block(&self, v: VertexId) -> VertexId {
        self.index_of(&Origin::Block(v)).expect("block still in the working graph")
    }

    /// Removes the intraprocedural edge `t -> h`. When `t` is a call block
    /// the edge is realized by the callee's return edges into `h`; those go
    /// instead, and the pair is remembered so nothing reconnects it.
    fn remove_cycle_edge(&mut self, t: VertexId, h: VertexId) {
        self.removed.insert((t, h));
        if let Some(cs) = self.icfg.call_site_at(t).copied() {
            self.blocked.insert((t, h));
            for &r in &self.icfg.functions[cs.callee].returns {
                self.g.remove_edge(r, h);
            }
        } else {
            self.g.remove_edge(t, h);
        }
    }

    fn remove_cycle_edges(&mut self) -> Vec<LoopInfo> {
        let icfg = self.icfg;
        let loops = find_loops(icfg);
        for li in &loops {
            if !self.reachable.contains(&li.header) {
                continue;
            }
            for &(t, h) in &li.back_edges {
                if t != h {
                    self.remove_cycle_edge(t, h);
                } else {
                    self.removed.insert((t, h));
                }
            }
        }
        for &f in &self.order.clone() {
            let entry = icfg.functions[f].entry;
            let vs: BTreeSet<VertexId> = icfg.reachable_blocks(f).into_iter().collect();
            let succ = |v: VertexId| icfg.intra_successors(v);
            for region in multi_entry_regions(&vs, entry, &succ) {
                for (t, h) in retreating_edges(entry, &region, &succ) {
                    if t != h {
                        self.remove_cycle_edge(t, h);
                    }
                }
                self.extraordinary.push(region);
            }
        }
        self.extraordinary.sort();
        let mut kept = Vec::new();
        for li in loops.into_iter().filter(|li| self.reachable.contains(&li.header)) {
            if self.extraordinary.iter().any(|r| !r.is_disjoint(&li.body)) {
                self.skipped.push(Skipped {
                    what: format!("loop at {}", self.label(li.header)),
                    reason: "overlaps a multi-entry cycle".into(),
                });
            } else {
                kept.push(li);
            }
        }
        kept
    }

    fn label(&self, v: VertexId) -> String {
        self.icfg.graph.label(v).map_or_else(|| v.to_string(), str::to_string)
    }

    /// Picks the connecting call site of `f` and drops the others.
    fn connect_callers(&mut self, f: FuncId) -> Option<CallSite> {
        let icfg = self.icfg;
        let sites: Vec<CallSite> =
            icfg.call_sites.iter().filter(|c| c.callee == f && self.reachable.contains(&c.block)).copied().collect();
        let kept = sites.iter().find(|c| !self.recursive_sites.contains(&c.block)).copied();
        let entry = icfg.functions[f].entry;
        for cs in sites {
            if Some(cs) == kept {
                continue;
            }
            self.g.remove_edge(cs.block, entry);
            if kept.map(|k| k.cont) != Some(cs.cont) {
                for &r in &icfg.functions[f].returns {
                    self.g.remove_edge(r, cs.cont);
                }
            }
            if !self.blocked.contains(&(cs.block, cs.cont)) {
                let (b, t) = (self.block(cs.block), self.block(cs.cont));
                self.g.ensure_edge(b, t).expect("summary edge");
                self.summary.insert((cs.block, cs.cont));
            }
            self.dropped.push(cs);
        }
        kept
    }

    /// Adds the virtual return of `f` behind its return blocks and routes
    /// the kept site's return edges through it.
    fn add_virtual_return(&mut self, f: FuncId, kept: Option<CallSite>) -> VertexId {
        let rf = self.g.add_vertex();
        self.origins.push(Origin::VirtualReturn(f));
        for &r in &self.icfg.functions[f].returns {
            if !self.reachable.contains(&r) {
                continue;
            }
            let ri = self.block(r);
            if let Some(k) = kept {
                let t = self.block(k.cont);
                self.g.remove_edge(ri, t);
            }
            self.g.add_edge(ri, rf).expect("fresh vertex");
        }
        if let Some(k) = kept {
            if !self.blocked.contains(&(k.block, k.cont)) {
                let t = self.block(k.cont);
                self.g.add_edge(rf, t).expect("fresh vertex");
            }
        }
        rf
    }

    /// Drops every cycle-closing call and adds the virtual returns, before
    /// anything is split, so the working graph is acyclic from here on.
    /// Returns the non-entry functions callee-first with their kept site.
    fn prepare_calls(&mut self) -> Vec<(FuncId, Option<CallSite>)> {
        let entry = self.icfg.entry_function;
        let callees: Vec<FuncId> = self.order.iter().copied().filter(|&f| f != entry).collect();
        let calls: Vec<(FuncId, Option<CallSite>)> = callees.iter().map(|&f| (f, self.connect_callers(f))).collect();
        for &(f, k) in &calls {
            self.add_virtual_return(f, k);
            if let Some(k) = k {
                self.kept.insert(f, k);
            }
        }
        calls
    }

    fn install(&mut self, s: SplitResult, kind: RegionKind, anchor: VertexId) -> usize {
        let id = self.regions.len();
        let mut sub_origins = vec![Origin::Block(usize::MAX); s.subgraph.vertex_count()];
        for (&old, &new) in &s.sub_map {
            sub_origins[new] = self.origins[old].clone();
        }
        if matches!(kind, RegionKind::Loop { .. }) {
            for (&c, &x) in s.exits.iter().zip(&s.exit_targets) {
                sub_origins[c] = Origin::ExitCopy(Box::new(self.origins[x].clone()));
            }
        }
        let mut rem_origins = vec![Origin::Block(usize::MAX); s.remainder.vertex_count()];
        for (&old, &new) in &s.rem_map {
            if new != s.merged_vertex {
                rem_origins[new] = self.origins[old].clone();
            }
        }
        rem_origins[s.merged_vertex] = Origin::Merged(id);
        self.g = s.remainder;
        self.origins = rem_origins;
        self.regions.push(Region {
            id,
            kind,
            graph: s.subgraph,
            entry: s.entry,
            exits: s.exits,
            origins: sub_origins,
            parent: None,
        });
        self.anchors.push(anchor);
        id
    }

    fn transform_loops(&mut self, f: FuncId, loops: &[LoopInfo]) {
        for li in loops.iter().filter(|li| self.icfg.function_of[li.header] == Some(f)) {
            let body: BTreeSet<VertexId> = (0..self.g.vertex_count())
                .filter(|&v| match &self.origins[v] {
                    Origin::Block(b) => li.body.contains(b),
                    Origin::Merged(r) => li.body.contains(&self.anchors[*r]),
                    _ => false,
                })
                .collect();
            let header = self.block(li.header);
            let local = LoopInfo {
                header,
                body,
                back_edges: BTreeSet::new(),
                exiting_edges: BTreeSet::new(),
                exit_nodes: BTreeSet::new(),
            };
            match transform_loop(&self.g, &local) {
                Ok(s) => {
                    self.install(s, RegionKind::Loop { function: f, header: li.header }, li.header);
                }
                Err(e) => self.skipped.push(Skipped { what: format!("loop at {}", self.label(li.header)), reason: e.to_string() }),
            }
        }
    }

    fn split_function(&mut self, f: FuncId, kept: Option<CallSite>) -> Result<usize, TransformError> {
        let entry = self.block(self.icfg.functions[f].entry);
        let rf = self.index_of(&Origin::VirtualReturn(f)).expect("virtual return added");
        let s = split_one_entry_one_exit(&self.g, entry, rf)?;
        let anchor = kept.map_or(usize::MAX, |k| k.block);
        Ok(self.install(s, RegionKind::Function { function: f }, anchor))
    }
}

/// Full pipeline: cycle edges out, then every function callee-first (loops
/// innermost-first, then the function split at its kept call site), then
/// the loops of the entry function. What is left reachable from the
/// program entry is the main region.
pub fn decompose(icfg: &ICfg) -> Decomposition {
    let mut w = Work::new(icfg);
    let loops = w.remove_cycle_edges();
    let mut function_region = BTreeMap::new();
    let calls = w.prepare_calls();
    for &(f, kept) in &calls {
        w.transform_loops(f, &loops);
        match w.split_function(f, kept) {
            Ok(id) => {
                function_region.insert(f, id);
            }
            Err(e) => {
                w.skipped.push(Skipped { what: format!("function {}", icfg.functions[f].name), reason: e.to_string() })
            }
        }
    }
    w.transform_loops(icfg.entry_function, &loops);

    let entry = w.block(icfg.functions[icfg.entry_function].entry);
    let from = w.g.reachable_from(entry);
    let members: Vec<VertexId> = (0..w.g.vertex_count()).filter(|&v| v == entry || from[v]).collect();
    let (graph, map) = w.g.induced_subgraph(&members).expect("ids in range");
    let mut origins = vec![Origin::Block(usize::MAX); graph.vertex_count()];
    for (&old, &new) in &map {
        origins[new] = w.origins[old].clone();
    }
    let main = w.regions.len();
    w.regions.push(Region {
        id: main,
        kind: RegionKind::Main,
        graph,
        entry: map[&entry],
        exits: Vec::new(),
        origins,
        parent: None,
    });

    let mut parent_of = BTreeMap::new();
    let mut region_of_block = BTreeMap::new();
    for r in &w.regions {
        for o in &r.origins {
            match o {
                Origin::Merged(c) => {
                    parent_of.insert(*c, r.id);
                }
                Origin::Block(b) => {
                    region_of_block.insert(*b, r.id);
                }
                _ => {}
            }
        }
    }
    for r in &mut w.regions {
        r.parent = parent_of.get(&r.id).copied();
    }
    let loop_region = w
        .regions
        .iter()
        .filter_map(|r| match r.kind {
            RegionKind::Loop { header, .. } => Some((header, r.id)),
            _ => None,
        })
        .collect();
    Decomposition {
        regions: w.regions,
        main,
        function_region,
        loop_region,
        kept_sites: w.kept,
        dropped_sites: w.dropped,
        summary_edges: w.summary,
        removed_edges: w.removed,
        extraordinary: w.extraordinary,
        skipped: w.skipped,
        region_of_block,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallerCalleeResult {
    pub remainder: Graph,
    pub origins: Vec<Origin>,
    pub subgraphs: Vec<(FuncId, SplitResult)>,
    pub dropped_sites: Vec<CallSite>,
    pub kept_sites: BTreeMap<FuncId, CallSite>,
    pub skipped: Vec<Skipped>,
}

/// Caller-callee step on its own: cycle edges out, then every function
/// with a return block gets a virtual return and is split off. Functions
/// whose body does not form a one-entry-one-exit region (for instance one
/// holding a loop, or with no return block) stay in the remainder and are
/// reported.
pub fn transform_caller_callee(icfg: &ICfg) -> CallerCalleeResult {
    let mut w = Work::new(icfg);
    w.remove_cycle_edges();
    let mut subgraphs = Vec::new();
    for (f, kept) in w.prepare_calls() {
        let rf = w.index_of(&Origin::VirtualReturn(f)).expect("virtual return added");
        let entry = w.block(icfg.functions[f].entry);
        match split_one_entry_one_exit(&w.g, entry, rf) {
            Ok(s) => {
                let anchor = kept.map_or(usize::MAX, |k| k.block);
                w.install(s.clone(), RegionKind::Function { function: f }, anchor);
                subgraphs.push((f, s));
            }
            Err(e) => {
                w.skipped.push(Skipped { what: format!("function {}", icfg.functions[f].name), reason: e.to_string() })
            }
        }
    }
    CallerCalleeResult {
        remainder: w.g,
        origins: w.origins,
        subgraphs,
        dropped_sites: w.dropped,
        kept_sites: w.kept,
        skipped: w.skipped,
    }
}
