// SPDX-License-Identifier: Apache-2.0

//! Data and potential dependence of branch conditions.
//!
//! Paths are taken in the intraprocedural graph with cycle edges removed, so
//! every path is acyclic. A block's statements run before its terminator,
//! so a branch that defines a variable itself is the only definition its
//! condition can see for that variable. Parameters are bound at the callee
//! entry by every call site, so a call block counts as the defining block
//! for the parameters of its callee.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::graph::{Graph, VertexId};
use crate::icfg::{acyclic_intra_graph, build_icfg, ICfg};
use crate::ir::{MiniProgram, Terminator};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DependenceMap {
    pub data_dep: BTreeMap<VertexId, BTreeSet<VertexId>>,
    pub potential_dep: BTreeMap<VertexId, BTreeSet<VertexId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependenceJson {
    pub data_dep: BTreeMap<String, Vec<String>>,
    pub potential_dep: BTreeMap<String, Vec<String>>,
}

impl DependenceMap {
    /// Blocks the branch `br` depends on, by either relation.
    pub fn dependencies(&self, br: VertexId) -> BTreeSet<VertexId> {
        let mut out = self.data_dep.get(&br).cloned().unwrap_or_default();
        out.extend(self.potential_dep.get(&br).into_iter().flatten());
        out
    }

    pub fn is_empty(&self) -> bool {
        self.data_dep.is_empty() && self.potential_dep.is_empty()
    }

    pub fn to_json(&self, icfg: &ICfg) -> DependenceJson {
        let name = |v: &VertexId| icfg.graph.label(*v).map(str::to_string).unwrap_or_else(|| v.to_string());
        let conv = |m: &BTreeMap<VertexId, BTreeSet<VertexId>>| {
            m.iter().map(|(k, vs)| (name(k), vs.iter().map(name).collect())).collect()
        };
        DependenceJson { data_dep: conv(&self.data_dep), potential_dep: conv(&self.potential_dep) }
    }
}

struct Ctx<'a> {
    p: &'a MiniProgram,
    icfg: ICfg,
    dag: Graph,
    preds: Vec<Vec<VertexId>>,
}

impl<'a> Ctx<'a> {
    fn new(p: &'a MiniProgram) -> Self {
        let icfg = build_icfg(p);
        let dag = acyclic_intra_graph(&icfg);
        let mut preds = vec![Vec::new(); dag.vertex_count()];
        for (u, w) in dag.edges() {
            preds[w].push(u);
        }
        Ctx { p, icfg, dag, preds }
    }

    fn defines(&self, v: VertexId, var: &str) -> bool {
        let (f, b) = self.icfg.block_of(v).expect("block vertex");
        self.p.functions[f].blocks[b].defs().contains(var)
    }

    /// Branch blocks with their condition variables.
    fn branches(&self) -> Vec<(VertexId, BTreeSet<String>)> {
        let mut out = Vec::new();
        for (fid, f) in self.p.functions.iter().enumerate() {
            for (bid, b) in f.blocks.iter().enumerate() {
                if let Terminator::Branch { cond, .. } = &b.term {
                    out.push((self.icfg.vertex_of(fid, bid), cond.vars()));
                }
            }
        }
        out
    }

    fn reaching(&self, br: VertexId, var: &str) -> BTreeSet<VertexId> {
        if self.defines(br, var) {
            return BTreeSet::from([br]);
        }
        let (f, _) = self.icfg.block_of(br).unwrap();
        let entry = self.icfg.functions[f].entry;
        let mut out = BTreeSet::new();
        let mut seen = BTreeSet::from([br]);
        let mut stack = vec![br];
        let mut clear_from_entry = br == entry;
        while let Some(u) = stack.pop() {
            for &w in &self.preds[u] {
                if !seen.insert(w) {
                    continue;
                }
                if self.defines(w, var) {
                    out.insert(w);
                } else {
                    if w == entry {
                        clear_from_entry = true;
                    }
                    stack.push(w);
                }
            }
        }
        if clear_from_entry && self.p.functions[f].params.iter().any(|q| q == var) {
            out.extend(self.icfg.call_sites.iter().filter(|c| c.callee == f).map(|c| c.block));
        }
        out
    }

    fn forward(&self, from: VertexId, through: &dyn Fn(VertexId) -> bool) -> BTreeSet<VertexId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(u) = stack.pop() {
            for &w in self.dag.successors(u) {
                if through(w) && seen.insert(w) {
                    stack.push(w);
                }
            }
        }
        seen
    }

    fn potential(&self, bri: VertexId, vars: &BTreeSet<String>, branches: &[VertexId]) -> BTreeSet<VertexId> {
        let f = self.icfg.function_of[bri];
        let mut out = BTreeSet::new();
        for &brj in branches {
            if brj == bri || self.icfg.function_of[brj] != f {
                continue;
            }
            let reach = self.forward(brj, &|_| true);
            if !reach.contains(&bri) {
                continue;
            }
            for var in vars {
                let clear = self.forward(brj, &|w| !self.defines(w, var));
                let defined = reach
                    .iter()
                    .any(|&d| self.defines(d, var) && (d == bri || self.forward(d, &|_| true).contains(&bri)));
                if clear.contains(&bri) && defined {
                    out.insert(brj);
                    break;
                }
            }
        }
        out
    }
}

/// For each branch, the blocks holding a definition of one of its condition
/// variables that reaches the branch along a definition-clear path.
pub fn data_dependence(p: &MiniProgram) -> BTreeMap<VertexId, BTreeSet<VertexId>> {
    let ctx = Ctx::new(p);
    data_with(&ctx)
}

fn data_with(ctx: &Ctx) -> BTreeMap<VertexId, BTreeSet<VertexId>> {
    let mut out = BTreeMap::new();
    for (br, vars) in ctx.branches() {
        let deps: BTreeSet<VertexId> = vars.iter().flat_map(|v| ctx.reaching(br, v)).collect();
        if !deps.is_empty() {
            out.insert(br, deps);
        }
    }
    out
}

/// For each branch `br_i`, the branches `br_j` of the same function from
/// which one path reaches `br_i` without defining a condition variable and
/// another path defines it.
pub fn potential_dependence(p: &MiniProgram) -> BTreeMap<VertexId, BTreeSet<VertexId>> {
    let ctx = Ctx::new(p);
    potential_with(&ctx)
}

fn potential_with(ctx: &Ctx) -> BTreeMap<VertexId, BTreeSet<VertexId>> {
    let branches = ctx.branches();
    let ids: Vec<VertexId> = branches.iter().map(|b| b.0).collect();
    let mut out = BTreeMap::new();
    for (br, vars) in &branches {
        let deps = ctx.potential(*br, vars, &ids);
        if !deps.is_empty() {
            out.insert(*br, deps);
        }
    }
    out
}

pub fn analyze(p: &MiniProgram) -> DependenceMap {
    let ctx = Ctx::new(p);
    DependenceMap { data_dep: data_with(&ctx), potential_dep: potential_with(&ctx) }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::icfg::label_index;
    use crate::ir::parse_program;

    fn labels(p: &MiniProgram) -> BTreeMap<String, VertexId> {
        label_index(&build_icfg(p))
    }

    const SINGLE_DEF: &str = "
input n in [0, 3];
fn main() {
  bb0: x := 1; goto bb1;
  bb1: br x < 2 ? bb2 : bb3;
  bb2: return 0;
  bb3: return 1;
}";

    #[test]
    fn single_definition() {
        let p = parse_program(SINGLE_DEF).unwrap();
        let l = labels(&p);
        let d = data_dependence(&p);
        assert_eq!(d[&l["main::bb1"]], BTreeSet::from([l["main::bb0"]]));
    }

    #[test]
    fn killed_definition() {
        let p = parse_program(
            "
input n in [0, 3];
fn main() {
  bb0: x := 1; goto bb1;
  bb1: x := 5; goto bb2;
  bb2: br x < 2 ? bb3 : bb4;
  bb3: return 0;
  bb4: return 1;
}",
        )
        .unwrap();
        let l = labels(&p);
        assert_eq!(data_dependence(&p)[&l["main::bb2"]], BTreeSet::from([l["main::bb1"]]));
    }

    #[test]
    fn straight_line_has_no_potential_dependence() {
        let p = parse_program(SINGLE_DEF).unwrap();
        assert!(potential_dependence(&p).is_empty());
    }
}
