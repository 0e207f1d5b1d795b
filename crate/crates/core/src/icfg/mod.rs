// SPDX-License-Identifier: Apache-2.0

//! Interprocedural CFG: one vertex per basic block, call edges from a call
//! block to the callee entry and return edges from every callee return block
//! to the call's continuation. There is no direct edge from a call block to
//! its continuation in the iCFG; intraprocedural views add it back.

mod decompose;
mod loops;
mod transform;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, GraphJson, VertexId};
use crate::ir::{BlockId, FuncId, MiniProgram};

pub use decompose::{
    decompose, transform_caller_callee, CallerCalleeResult, Decomposition, DecompositionJson, Origin, Region, RegionCovers,
    RegionJson, RegionKind, Skipped,
};
pub use loops::{
    acyclic_intra_graph, cycle_edges, detect_extraordinary_loops, dominators, find_loops, multi_entry_regions, natural_loops, natural_loops_in_graph,
    retreating_edges, LoopInfo,
};
pub use transform::{
    check_definition1, check_definition2, combined_mpc_size, max_k_through, max_k_through_edges, split_one_entry_one_exit,
    transform_loop, SplitResult,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TransformError {
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("vertex {vertex} violates the region definition: {reason}")]
    Definition { vertex: VertexId, reason: String },
    #[error("loop with header {0} has an entry other than its header")]
    Extraordinary(VertexId),
    #[error("graph has {size} vertices, exhaustive search is limited to {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error("malformed iCFG: {0}")]
    Malformed(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Entry,
    Exit,
    Call,
    ReturnSite,
    Branch,
    Plain,
    Virtual,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    pub entry: VertexId,
    pub returns: Vec<VertexId>,
    /// Vertex of every block, indexed by block id.
    pub blocks: Vec<VertexId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CallSite {
    pub block: VertexId,
    pub callee: FuncId,
    pub cont: VertexId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ICfg {
    pub graph: Graph,
    pub kinds: Vec<NodeKind>,
    pub call_edges: BTreeSet<(VertexId, VertexId)>,
    pub return_edges: BTreeSet<(VertexId, VertexId)>,
    /// Intraprocedural back edges present in `graph`.
    pub back_edges: BTreeSet<(VertexId, VertexId)>,
    /// Blocks that jump to themselves; such edges are kept out of `graph`.
    pub self_loops: BTreeSet<VertexId>,
    pub function_of: Vec<Option<FuncId>>,
    pub functions: Vec<FunctionInfo>,
    /// Call sites in program order.
    pub call_sites: Vec<CallSite>,
    pub entry_function: FuncId,
}

impl ICfg {
    pub fn vertex_of(&self, f: FuncId, b: BlockId) -> VertexId {
        self.functions[f].blocks[b]
    }

    pub fn block_of(&self, v: VertexId) -> Option<(FuncId, BlockId)> {
        let f = self.function_of[v]?;
        Some((f, v - self.functions[f].blocks[0]))
    }

    pub fn entry(&self) -> VertexId {
        self.functions[self.entry_function].entry
    }

    pub fn call_site_at(&self, block: VertexId) -> Option<&CallSite> {
        self.call_sites.iter().find(|c| c.block == block)
    }

    /// Intraprocedural successors of a block: the iCFG successors, except
    /// that a call block flows to its continuation.
    pub fn intra_successors(&self, v: VertexId) -> Vec<VertexId> {
        if let Some(cs) = self.call_site_at(v) {
            return vec![cs.cont];
        }
        let mut out: Vec<VertexId> = self
            .graph
            .successors(v)
            .iter()
            .copied()
            .filter(|w| !self.return_edges.contains(&(v, *w)))
            .collect();
        if self.self_loops.contains(&v) {
            out.push(v);
            out.sort_unstable();
        }
        out
    }

    /// Blocks of `f` reachable from its entry, in increasing vertex order.
    pub fn reachable_blocks(&self, f: FuncId) -> Vec<VertexId> {
        let entry = self.functions[f].entry;
        let mut seen = BTreeSet::from([entry]);
        let mut stack = vec![entry];
        while let Some(u) = stack.pop() {
            for w in self.intra_successors(u) {
                if seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen.into_iter().collect()
    }

    pub fn to_json(&self) -> IcfgJson {
        IcfgJson {
            graph: self.graph.to_json(),
            kinds: self.kinds.clone(),
            call_edges: self.call_edges.iter().map(|&(a, b)| [a, b]).collect(),
            return_edges: self.return_edges.iter().map(|&(a, b)| [a, b]).collect(),
            back_edges: self.back_edges.iter().map(|&(a, b)| [a, b]).collect(),
            self_loops: self.self_loops.iter().copied().collect(),
            function_of: self.function_of.clone(),
            functions: self.functions.clone(),
            call_sites: self.call_sites.clone(),
            entry_function: self.entry_function,
        }
    }

    pub fn from_json(j: &IcfgJson) -> Result<Self, TransformError> {
        let graph = Graph::from_json(&j.graph)?;
        let n = graph.vertex_count();
        if j.kinds.len() != n || j.function_of.len() != n {
            return Err(TransformError::Malformed("kinds/function_of length differs from vertex count".into()));
        }
        let edge_set = |edges: &[[VertexId; 2]], what: &str| -> Result<BTreeSet<(VertexId, VertexId)>, TransformError> {
            edges
                .iter()
                .map(|&[a, b]| {
                    if graph.has_edge(a, b) {
                        Ok((a, b))
                    } else {
                        Err(TransformError::Malformed(format!("{what} edge {a} -> {b} not in graph")))
                    }
                })
                .collect()
        };
        let icfg = ICfg {
            call_edges: edge_set(&j.call_edges, "call")?,
            return_edges: edge_set(&j.return_edges, "return")?,
            back_edges: edge_set(&j.back_edges, "back")?,
            self_loops: j.self_loops.iter().copied().collect(),
            kinds: j.kinds.clone(),
            function_of: j.function_of.clone(),
            functions: j.functions.clone(),
            call_sites: j.call_sites.clone(),
            entry_function: j.entry_function,
            graph,
        };
        if icfg.entry_function >= icfg.functions.len() {
            return Err(TransformError::Malformed("entry function out of range".into()));
        }
        Ok(icfg)
    }
}

/// JSON form: the graph format plus kinds, edge classes and function tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcfgJson {
    #[serde(flatten)]
    pub graph: GraphJson,
    pub kinds: Vec<NodeKind>,
    pub call_edges: Vec<[VertexId; 2]>,
    pub return_edges: Vec<[VertexId; 2]>,
    #[serde(default)]
    pub back_edges: Vec<[VertexId; 2]>,
    #[serde(default)]
    pub self_loops: Vec<VertexId>,
    pub function_of: Vec<Option<FuncId>>,
    pub functions: Vec<FunctionInfo>,
    #[serde(default)]
    pub call_sites: Vec<CallSite>,
    #[serde(default)]
    pub entry_function: FuncId,
}

/// Lowers a program to its iCFG. Vertices are numbered function by
/// function, blocks in declaration order.
pub fn build_icfg(p: &MiniProgram) -> ICfg {
    let mut offsets = Vec::with_capacity(p.functions.len());
    let mut n = 0;
    for f in &p.functions {
        offsets.push(n);
        n += f.blocks.len();
    }
    let mut graph = Graph::new(n);
    let mut kinds = vec![NodeKind::Plain; n];
    let mut function_of = vec![None; n];
    let mut call_edges = BTreeSet::new();
    let mut return_edges = BTreeSet::new();
    let mut self_loops = BTreeSet::new();
    let mut call_sites = Vec::new();
    let mut functions = Vec::new();

    for (fid, f) in p.functions.iter().enumerate() {
        let base = offsets[fid];
        functions.push(FunctionInfo {
            name: f.name.clone(),
            entry: base,
            returns: f.return_blocks().into_iter().map(|b| base + b).collect(),
            blocks: (0..f.blocks.len()).map(|b| base + b).collect(),
        });
        for (bid, b) in f.blocks.iter().enumerate() {
            let v = base + bid;
            function_of[v] = Some(fid);
            graph.set_label(v, format!("{}::{}", f.name, b.label));
            if let Some((callee, cont)) = b.call() {
                call_sites.push(CallSite { block: v, callee, cont: base + cont });
                continue;
            }
            for t in b.term.successors() {
                if t == bid {
                    self_loops.insert(v);
                } else {
                    graph.ensure_edge(v, base + t).expect("block ids are in range");
                }
            }
        }
    }
    for cs in &call_sites {
        let callee = &functions[cs.callee];
        graph.ensure_edge(cs.block, callee.entry).expect("call edge");
        call_edges.insert((cs.block, callee.entry));
        for &r in &callee.returns {
            // a recursive call can continue at a return block of the callee
            // itself; that return edge would be a self-loop and is left out
            if r == cs.cont {
                continue;
            }
            graph.ensure_edge(r, cs.cont).expect("return edge");
            return_edges.insert((r, cs.cont));
        }
    }
    for (fid, f) in p.functions.iter().enumerate() {
        let base = offsets[fid];
        let returns: BTreeSet<usize> = f.return_blocks().into_iter().collect();
        let conts: BTreeSet<VertexId> = call_sites.iter().map(|c| c.cont).collect();
        for (bid, b) in f.blocks.iter().enumerate() {
            let v = base + bid;
            kinds[v] = if bid == 0 {
                NodeKind::Entry
            } else if b.call().is_some() {
                NodeKind::Call
            } else if returns.contains(&bid) {
                NodeKind::Exit
            } else if b.is_branch() {
                NodeKind::Branch
            } else if conts.contains(&v) {
                NodeKind::ReturnSite
            } else {
                NodeKind::Plain
            };
        }
    }

    let mut icfg = ICfg {
        graph,
        kinds,
        call_edges,
        return_edges,
        back_edges: BTreeSet::new(),
        self_loops,
        function_of,
        functions,
        call_sites,
        entry_function: p.entry_function,
    };
    let mut back = BTreeSet::new();
    for li in find_loops(&icfg) {
        for &(t, h) in &li.back_edges {
            if icfg.graph.has_edge(t, h) && !icfg.return_edges.contains(&(t, h)) {
                back.insert((t, h));
            }
        }
    }
    icfg.back_edges = back;
    icfg
}

/// Per-function map of block label to vertex, handy for tests and reports.
pub fn label_index(icfg: &ICfg) -> BTreeMap<String, VertexId> {
    icfg.graph.labels().iter().map(|(v, l)| (l.clone(), *v)).collect()
}
