// SPDX-License-Identifier: Apache-2.0

//! Symbolic-execution engine over the mini-IR with pluggable state
//! selection. A state is a path prefix plus the set of input assignments
//! whose concrete trace starts with it, so forking splits that set and a
//! child is feasible exactly when its share is non-empty.

mod empc;
mod tree;

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dependence::{analyze, DependenceMap};
use crate::graph::VertexId;
use crate::icfg::{build_icfg, decompose, Decomposition, ICfg, RegionKind};
use crate::ir::{PathPrefix, RunError, TraceTable, DEFAULT_FEASIBILITY_BUDGET};
use crate::ir::{MiniProgram, Stmt, Terminator};

pub use empc::MpcGroup;
use empc::{Ctx, Decision, Tracker, Transition};
pub use tree::ForkTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Empc,
    Bfs,
    Dfs,
    RandomState,
    RandomPath,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [Strategy::Empc, Strategy::Bfs, Strategy::Dfs, Strategy::RandomState, Strategy::RandomPath];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Empc => "empc",
            Strategy::Bfs => "bfs",
            Strategy::Dfs => "dfs",
            Strategy::RandomState => "random-state",
            Strategy::RandomPath => "random-path",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = EngineError;

    fn from_str(s: &str) -> Result<Self, EngineError> {
        Strategy::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| EngineError::InvalidStrategy(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Active,
    Ignored,
    Completed,
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct SymState {
    pub id: usize,
    pub prefix: PathPrefix,
    pub status: Status,
    pub fork_parent: Option<usize>,
    /// Block executed next.
    pub pc: VertexId,
    // continuation blocks of the open calls
    frames: Vec<VertexId>,
    seq: u64,
    traces: Vec<u32>,
    pending: Option<Transition>,
    ctxs: Vec<Ctx>,
    decided: Option<Decision>,
}

impl SymState {
    fn passes(&self, icfg: &ICfg, v: VertexId) -> bool {
        let site = icfg.block_of(v).unwrap();
        self.pc == v || self.prefix.blocks.contains(&site)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EngineConfig {
    pub strategy: Strategy,
    /// Blocks executed, summed over all states.
    pub budget: usize,
    pub seed: u64,
    /// Infeasible-path handling for `empc`; off is the ablation.
    pub handler: bool,
    pub cover_cap: Option<usize>,
    pub oracle_budget: u128,
}

impl EngineConfig {
    pub fn new(strategy: Strategy) -> Self {
        EngineConfig {
            strategy,
            budget: 100_000,
            seed: 0,
            handler: true,
            cover_cap: Some(crate::enumerate::DEFAULT_CAP),
            oracle_budget: DEFAULT_FEASIBILITY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerStats {
    pub invocations: usize,
    pub redirects: usize,
    pub fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub strategy: Strategy,
    pub seed: u64,
    pub budget: usize,
    pub steps: usize,
    /// Distinct blocks covered after each step.
    pub covered_series: Vec<usize>,
    /// Active plus ignored states after each step.
    pub live_series: Vec<usize>,
    pub covered_blocks: Vec<String>,
    /// Blocks on at least one concrete trace.
    pub reachable_blocks: usize,
    pub completed_paths: usize,
    pub completed: Vec<Vec<String>>,
    pub solver_calls: usize,
    pub infeasible_children: usize,
    pub states_created: usize,
    pub peak_live_states: usize,
    pub infeasible_paths: usize,
    pub handler: HandlerStats,
    pub floor_hits: usize,
    pub warnings: Vec<String>,
}

impl RunMetrics {
    pub fn coverage(&self) -> f64 {
        if self.reachable_blocks == 0 {
            return 1.0;
        }
        self.covered_blocks.len() as f64 / self.reachable_blocks as f64
    }

    pub fn full_coverage(&self) -> bool {
        self.covered_blocks.len() == self.reachable_blocks
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,covered_blocks,live_states\n");
        for (i, (c, l)) in self.covered_series.iter().zip(&self.live_series).enumerate() {
            out.push_str(&format!("{},{c},{l}\n", i + 1));
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown strategy `{0}` (expected empc, bfs, dfs, random-state or random-path)")]
    InvalidStrategy(String),
    #[error("feasibility oracle: {0}")]
    Oracle(#[from] RunError),
}

struct Failure {
    // infeasible children the paths wanted
    targets: BTreeSet<VertexId>,
    br: VertexId,
    siblings: BTreeSet<usize>,
    tried: BTreeSet<usize>,
}

struct EmpcState<'d> {
    tracker: Tracker<'d>,
    dep: DependenceMap,
    failures: Vec<Failure>,
    pending: Option<usize>,
    /// Blocks seen as an infeasible branch target.
    refuted: BTreeSet<VertexId>,
}

pub struct Engine<'p> {
    p: &'p MiniProgram,
    icfg: ICfg,
    cfg: EngineConfig,
    table: TraceTable,
    rng: ChaCha8Rng,
    pub states: Vec<SymState>,
    tree: ForkTree,
    active: BTreeSet<(u64, usize)>,
    ignored: usize,
    seq: u64,
    covered: BTreeSet<VertexId>,
    m: RunMetrics,
    /// State chosen at each step.
    pub selections: Vec<usize>,
}

fn labels(icfg: &ICfg, vs: impl IntoIterator<Item = VertexId>) -> Vec<String> {
    vs.into_iter().map(|v| icfg.graph.label(v).unwrap_or_default().to_string()).collect()
}

impl<'p> Engine<'p> {
    pub fn new(p: &'p MiniProgram, cfg: EngineConfig) -> Result<Self, EngineError> {
        let icfg = build_icfg(p);
        let table = TraceTable::build(p, cfg.oracle_budget)?;
        let mut reachable = BTreeSet::new();
        for t in &table.traces {
            for &(f, b) in &t.blocks {
                reachable.insert(icfg.vertex_of(f, b));
            }
        }
        let mut m = RunMetrics {
            strategy: cfg.strategy,
            seed: cfg.seed,
            budget: cfg.budget,
            steps: 0,
            covered_series: Vec::new(),
            live_series: Vec::new(),
            covered_blocks: Vec::new(),
            reachable_blocks: reachable.len(),
            completed_paths: 0,
            completed: Vec::new(),
            solver_calls: 0,
            infeasible_children: 0,
            states_created: 1,
            peak_live_states: 1,
            infeasible_paths: 0,
            handler: HandlerStats::default(),
            floor_hits: 0,
            warnings: Vec::new(),
        };
        if table.complete.iter().any(|c| !c) {
            m.warnings.push("some concrete runs hit an execution limit; feasibility past their end is unknown".into());
        }
        Ok(Self::assemble(p, icfg, cfg, table, m))
    }

    fn assemble(p: &'p MiniProgram, icfg: ICfg, cfg: EngineConfig, table: TraceTable, m: RunMetrics) -> Self {
        let root = SymState {
            id: 0,
            prefix: PathPrefix::default(),
            status: Status::Active,
            fork_parent: None,
            pc: icfg.entry(),
            frames: Vec::new(),
            seq: 0,
            traces: (0..table.len() as u32).collect(),
            pending: None,
            ctxs: Vec::new(),
            decided: None,
        };
        let mut tree = ForkTree::new(0);
        tree.set_active(0, true);
        Engine {
            p,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            icfg,
            cfg,
            table,
            states: vec![root],
            tree,
            active: BTreeSet::from([(0, 0)]),
            ignored: 0,
            seq: 1,
            covered: BTreeSet::new(),
            m,
            selections: Vec::new(),
        }
    }

    pub fn icfg(&self) -> &ICfg {
        &self.icfg
    }

    fn set_status(&mut self, sid: usize, status: Status) {
        let old = self.states[sid].status;
        if old == status {
            return;
        }
        let seq = self.states[sid].seq;
        if old == Status::Active {
            self.active.remove(&(seq, sid));
            self.tree.set_active(sid, false);
        }
        if old == Status::Ignored {
            self.ignored -= 1;
        }
        match status {
            Status::Active => {
                self.active.insert((seq, sid));
                self.tree.set_active(sid, true);
            }
            Status::Ignored => self.ignored += 1,
            _ => {}
        }
        self.states[sid].status = status;
    }

    fn reseq(&mut self, sid: usize) {
        let was_active = self.states[sid].status == Status::Active;
        if was_active {
            self.active.remove(&(self.states[sid].seq, sid));
        }
        self.states[sid].seq = self.seq;
        self.seq += 1;
        if was_active {
            self.active.insert((self.states[sid].seq, sid));
        }
    }

    fn select_baseline(&mut self) -> Option<usize> {
        match self.cfg.strategy {
            Strategy::Bfs => self.active.first().map(|x| x.1),
            Strategy::Dfs | Strategy::Empc => self.active.last().map(|x| x.1),
            Strategy::RandomState => {
                if self.active.is_empty() {
                    return None;
                }
                let mut ids: Vec<usize> = self.active.iter().map(|x| x.1).collect();
                ids.sort_unstable();
                Some(ids[self.rng.gen_range(0..ids.len())])
            }
            Strategy::RandomPath => self.tree.select(&mut self.rng),
        }
    }

    /// Executes the block at the state's `pc`. Returns the states that
    /// leave the block (one, or two after a fork) with their targets, and
    /// the infeasible targets of a branch.
    fn execute(&mut self, sid: usize) -> (Vec<(usize, VertexId)>, Vec<VertexId>) {
        let v = self.states[sid].pc;
        let (f, b) = self.icfg.block_of(v).unwrap();
        self.covered.insert(v);
        self.states[sid].prefix.blocks.push((f, b));
        let block = &self.p.functions[f].blocks[b];
        let base = self.icfg.functions[f].entry;
        match &block.term {
            Terminator::Branch { then_to, else_to, .. } => {
                let k = self.states[sid].prefix.branch_decisions.len();
                let (mut yes, mut no) = (Vec::new(), Vec::new());
                let mut unknown = false;
                for &t in &self.states[sid].traces {
                    match self.table.traces[t as usize].branch_decisions.get(k) {
                        Some(true) => yes.push(t),
                        Some(false) => no.push(t),
                        None => {
                            unknown = true;
                            yes.push(t);
                            no.push(t);
                        }
                    }
                }
                if unknown {
                    self.m.warnings.push(format!("feasibility unknown past step {} of state {sid}", self.m.steps));
                }
                self.m.solver_calls += 2;
                let mut out = Vec::new();
                let mut infeasible = Vec::new();
                for (d, to, tr) in [(true, *then_to, yes), (false, *else_to, no)] {
                    let x = base + to;
                    if tr.is_empty() {
                        self.m.infeasible_children += 1;
                        infeasible.push(x);
                        continue;
                    }
                    let id = if out.is_empty() {
                        sid
                    } else {
                        let mut child = self.states[sid].clone();
                        child.id = self.states.len();
                        child.fork_parent = Some(sid);
                        child.status = Status::Ignored;
                        self.ignored += 1;
                        self.states.push(child);
                        self.m.states_created += 1;
                        self.states.len() - 1
                    };
                    let st = &mut self.states[id];
                    st.prefix.branch_decisions.truncate(k);
                    st.prefix.branch_decisions.push(d);
                    st.traces = tr;
                    st.pc = x;
                    st.pending = Some(Transition::Intra(x));
                    out.push((id, x));
                }
                if out.len() == 2 {
                    let ids: Vec<usize> = out.iter().map(|o| o.0).collect();
                    self.tree.fork(sid, &ids);
                    // the parent's activity moved to the new leaf
                    if self.states[sid].status == Status::Active {
                        self.tree.set_active(sid, true);
                    }
                    for &id in &ids {
                        self.reseq(id);
                    }
                    let other = ids[1];
                    self.set_status(other, Status::Active);
                }
                (out, infeasible)
            }
            Terminator::Goto(t) => {
                let to = base + t;
                if let Some(Stmt::Call { callee, .. }) = block.stmts.last() {
                    let entry = self.icfg.functions[*callee].entry;
                    let st = &mut self.states[sid];
                    st.frames.push(to);
                    st.pc = entry;
                    st.pending = Some(Transition::Call { callee: *callee, entry });
                    return (vec![(sid, entry)], Vec::new());
                }
                let st = &mut self.states[sid];
                st.pc = to;
                st.pending = Some(Transition::Intra(to));
                (vec![(sid, to)], Vec::new())
            }
            Terminator::Return(_) => {
                let st = &mut self.states[sid];
                match st.frames.pop() {
                    Some(cont) => {
                        st.pc = cont;
                        st.pending = Some(Transition::Return { from: f, to: cont });
                        (vec![(sid, cont)], Vec::new())
                    }
                    None => {
                        self.m.completed_paths += 1;
                        let blocks: Vec<VertexId> = st.prefix.blocks.iter().map(|&(f, b)| self.icfg.vertex_of(f, b)).collect();
                        self.m.completed.push(labels(&self.icfg, blocks));
                        self.set_status(sid, Status::Completed);
                        (Vec::new(), Vec::new())
                    }
                }
            }
        }
    }

    fn record(&mut self) {
        self.m.steps += 1;
        self.m.covered_series.push(self.covered.len());
        let live = self.active.len() + self.ignored;
        self.m.live_series.push(live);
        self.m.peak_live_states = self.m.peak_live_states.max(live);
    }

    fn finish(mut self) -> RunMetrics {
        self.m.covered_blocks = labels(&self.icfg, self.covered.iter().copied());
        self.m
    }

    /// One baseline step; false once no state is active or the budget is
    /// spent.
    pub fn step(&mut self) -> bool {
        if self.m.steps >= self.cfg.budget {
            return false;
        }
        let Some(sid) = self.select_baseline() else { return false };
        self.selections.push(sid);
        self.execute(sid);
        self.record();
        true
    }

    fn run_baseline(mut self) -> RunMetrics {
        while self.step() {}
        self.finish()
    }

    pub fn run(self) -> RunMetrics {
        match self.cfg.strategy {
            Strategy::Empc => self.run_empc(),
            _ => self.run_baseline(),
        }
    }
}

impl<'p> Engine<'p> {
    fn run_empc(mut self) -> RunMetrics {
        let dec = decompose(&self.icfg);
        for s in &dec.skipped {
            self.m.warnings.push(format!("{} left untracked: {}", s.what, s.reason));
        }
        let mut groups = Vec::new();
        for r in &dec.regions {
            match r.covers(self.cfg.cover_cap, self.cfg.seed) {
                Ok(c) => groups.push(Some(MpcGroup::new(&dec, r, &c.covers))),
                Err(e) => {
                    self.m.warnings.push(format!("region {}: {e}", r.id));
                    groups.push(None);
                }
            }
        }
        let mut es = EmpcState { tracker: Tracker { dec: &dec, groups }, dep: analyze(self.p), failures: Vec::new(), pending: None, refuted: BTreeSet::new() };
        let main_fn = self.icfg.entry_function;
        let root = es.tracker.enter(Some(dec.main), main_fn, true);
        self.states[0].ctxs = vec![root];

        while self.m.steps < self.cfg.budget {
            let sid = match self.active.iter().map(|x| x.1).min() {
                Some(s) => s,
                None => match self.replenish(&mut es) {
                    Some(s) => {
                        self.set_status(s, Status::Active);
                        s
                    }
                    None => break,
                },
            };
            self.selections.push(sid);
            if let Some(t) = self.states[sid].pending.take() {
                es.tracker.apply(&mut self.states[sid].ctxs, t);
            }
            let v = self.states[sid].pc;
            let (f, b) = self.icfg.block_of(v).unwrap();
            let is_branch = self.p.functions[f].blocks[b].is_branch();
            let (children, infeasible) = self.execute(sid);
            if is_branch {
                self.decide(&mut es, v, &children, &infeasible);
            } else if children.is_empty() && self.states[sid].status == Status::Completed {
                let mut ctxs = std::mem::take(&mut self.states[sid].ctxs);
                es.tracker.complete_all(&mut ctxs);
            }
            self.record();
        }
        self.m.floor_hits = es.tracker.groups.iter().flatten().map(|g| g.floor_hits).sum();
        self.m.infeasible_paths = es.failures.len();
        self.finish()
    }

    /// Fork policy: at most one child stays active.
    fn decide(&mut self, es: &mut EmpcState, br: VertexId, children: &[(usize, VertexId)], infeasible: &[VertexId]) {
        if children.is_empty() {
            return;
        }
        es.refuted.extend(infeasible.iter().copied());
        let ctxs = self.states[children[0].0].ctxs.clone();
        let depth = ctxs.len() - 1;
        let top = &ctxs[depth];
        let previews: Vec<Option<Decision>> = children.iter().map(|&(_, x)| es.tracker.preview(&ctxs, x)).collect();
        let region = top.region.filter(|_| top.tracked());
        let group = region.and_then(|r| es.tracker.groups[r].as_ref());

        // infeasible children that a cover path still wanted
        let mut failed_here = false;
        if let (Some(r), Some(g)) = (region, group) {
            let pool: BTreeSet<usize> = (0..g.paths.len()).filter(|&i| g.is_candidate(i, &self.covered)).collect();
            let mut hit = Vec::new();
            let mut targets = BTreeSet::new();
            for &x in infeasible {
                let Some(d) = es.tracker.preview(&ctxs, x) else { continue };
                let m = g.matching_paths(&d.ext, &pool);
                if !m.is_empty() {
                    targets.insert(x);
                    hit.extend(m);
                }
            }
            if !hit.is_empty() {
                es.tracker.groups[r].as_mut().unwrap().failed.extend(hit);
                es.failures.push(Failure {
                    targets,
                    br,
                    siblings: children.iter().map(|c| c.0).collect(),
                    tried: BTreeSet::new(),
                });
                failed_here = true;
            }
        }
        let group = region.and_then(|r| es.tracker.groups[r].as_ref());
        let key = |d: &Option<Decision>| -> Option<(u8, usize)> { group.and_then(|g| g.best_match(&d.as_ref()?.ext, &self.covered)) };
        let best = previews.iter().zip(children).filter_map(|(d, c)| key(d).map(|k| (k, c.0))).min();

        let mut chosen: Option<usize> = None;
        let mut unfree = false;
        if let Some((_, id)) = best {
            chosen = Some(id);
            unfree = top.free;
            let i = children.iter().position(|c| c.0 == id).unwrap();
            let ext = previews[i].as_ref().unwrap().ext.clone();
            es.tracker.groups[region.unwrap()].as_mut().unwrap().prune(&ext);
        } else if top.free || group.is_none() {
            let g = group;
            let on_failed = |d: &Option<Decision>| match (g, d) {
                (Some(g), Some(d)) => !g.matching_paths(&d.ext, &g.failed).is_empty(),
                _ => false,
            };
            let pick = children
                .iter()
                .zip(&previews)
                .find(|(_, d)| on_failed(d))
                .or_else(|| children.iter().zip(&previews).find(|(c, _)| !self.covered.contains(&c.1)))
                .map(|(c, _)| c.0);
            chosen = Some(pick.unwrap_or(children[0].0));
        } else if failed_here {
            if self.cfg.handler {
                es.pending = Some(es.failures.len() - 1);
            }
        } else {
            let r = region.unwrap();
            let is_loop = matches!(es.tracker.dec.regions[r].kind, RegionKind::Loop { .. });
            let exit = children.iter().zip(&previews).find(|(_, d)| is_loop && d.as_ref().is_some_and(|d| d.leaves_loop));
            chosen = Some(exit.map(|(c, _)| c.0).unwrap_or(children[0].0));
        }

        for ((id, _), d) in children.iter().zip(previews) {
            self.states[*id].decided = d;
            if Some(*id) == chosen {
                if unfree {
                    self.states[*id].ctxs[depth].free = false;
                }
                self.set_status(*id, Status::Active);
            } else {
                self.set_status(*id, Status::Ignored);
                for f in &mut es.failures {
                    f.tried.remove(id);
                }
            }
        }
    }

    /// Picks a state when none is active: the handler for a fresh failure,
    /// then ignored states whose decision matches a live cover path, then
    /// failures whose paths still hold uncovered blocks, then a sweep.
    fn replenish(&mut self, es: &mut EmpcState) -> Option<usize> {
        if let Some(f) = es.pending.take() {
            if let Some(s) = self.handle(es, f, false) {
                return Some(s);
            }
        }
        let mut best: Option<((u8, usize), usize)> = None;
        for st in &self.states {
            if st.status != Status::Ignored {
                continue;
            }
            let Some(d) = &st.decided else { continue };
            let Some(r) = st.ctxs[d.depth].region.filter(|_| st.ctxs[d.depth].tracked() && !st.ctxs[d.depth].free) else {
                continue;
            };
            let Some(g) = es.tracker.groups[r].as_ref() else { continue };
            if let Some(k) = g.best_match(&d.ext, &self.covered) {
                if best.is_none_or(|b| (k, st.id) < b) {
                    best = Some((k, st.id));
                }
            }
        }
        if let Some((_, s)) = best {
            return Some(s);
        }
        if !self.cfg.handler {
            return None;
        }
        for f in 0..es.failures.len() {
            let fail = &es.failures[f];
            let open = fail.targets.iter().any(|t| !self.covered.contains(t));
            if open {
                if let Some(s) = self.handle(es, f, true) {
                    return Some(s);
                }
            }
        }
        self.sweep(es)
    }

    /// Ignored state that can still add coverage, uncovered pc first.
    fn sweep(&mut self, es: &EmpcState) -> Option<usize> {
        let states = &self.states;
        let covered = &self.covered;
        let icfg = &self.icfg;
        let ignored = |s: usize| states[s].status == Status::Ignored;
        let s = self.tree.select_where(&mut self.rng, &|s| ignored(s) && !covered.contains(&states[s].pc)).or_else(|| {
            let useful = |s: usize| {
                ignored(s) && {
                    let r = icfg.graph.reachable_from(states[s].pc);
                    (0..r.len()).any(|b| r[b] && !covered.contains(&b) && !es.refuted.contains(&b))
                }
            };
            self.tree.select_where(&mut self.rng, &useful)
        })?;
        self.m.handler.fallbacks += 1;
        self.free(s);
        Some(s)
    }

    /// Backward search from the failing branch for the nearest block it
    /// depends on, then a random state that went through that block.
    fn handle(&mut self, es: &mut EmpcState, f: usize, retry: bool) -> Option<usize> {
        self.m.handler.invocations += 1;
        let br = es.failures[f].br;
        let deps = es.dep.dependencies(br);
        let mut seen = BTreeSet::from([br]);
        let mut queue: VecDeque<VertexId> = VecDeque::from([br]);
        let mut order = Vec::new();
        while let Some(u) = queue.pop_front() {
            let mut preds: Vec<VertexId> = self.icfg.graph.predecessors(u).to_vec();
            preds.sort_unstable();
            for w in preds {
                if seen.insert(w) {
                    order.push(w);
                    queue.push_back(w);
                }
            }
        }
        let open: BTreeSet<VertexId> = es.failures[f].targets.iter().copied().filter(|b| !self.covered.contains(b)).collect();
        let icfg = &self.icfg;
        let reaches_open = |pc: VertexId| {
            let r = icfg.graph.reachable_from(pc);
            open.iter().any(|&b| r[b])
        };
        for a in order {
            if !deps.contains(&a) {
                continue;
            }
            let fail = &es.failures[f];
            let cands: Vec<usize> = self
                .states
                .iter()
                .filter(|s| {
                    s.status == Status::Ignored
                        && !fail.tried.contains(&s.id)
                        && !fail.siblings.contains(&s.id)
                        && s.passes(&self.icfg, a)
                        && (!retry || reaches_open(s.pc))
                })
                .map(|s| s.id)
                .collect();
            if cands.is_empty() {
                continue;
            }
            let s = cands[self.rng.gen_range(0..cands.len())];
            es.failures[f].tried.insert(s);
            self.m.handler.redirects += 1;
            self.free(s);
            return Some(s);
        }
        let states = &self.states;
        let covered = &self.covered;
        let tried = &es.failures[f].tried;
        let open = |s: usize| states[s].status == Status::Ignored && !tried.contains(&s);
        let s = self
            .tree
            .select_where(&mut self.rng, &|s| open(s) && !covered.contains(&states[s].pc))
            .or_else(|| {
                let eligible = |s: usize| open(s) && (!retry || reaches_open(states[s].pc));
                self.tree.select_where(&mut self.rng, &eligible)
            })?;
        es.failures[f].tried.insert(s);
        self.m.handler.fallbacks += 1;
        self.free(s);
        Some(s)
    }

    fn free(&mut self, s: usize) {
        let st = &mut self.states[s];
        let depth = st.decided.as_ref().map_or(st.ctxs.len() - 1, |d| d.depth);
        if let Some(c) = st.ctxs.get_mut(depth) {
            c.free = true;
        }
    }
}

/// One run of `strategy` on `p`.
pub fn engine_run(p: &MiniProgram, cfg: EngineConfig) -> Result<RunMetrics, EngineError> {
    Ok(Engine::new(p, cfg)?.run())
}

/// Regions and live covers the strategy would start from.
pub fn initial_groups(p: &MiniProgram, cap: Option<usize>, seed: u64) -> (Decomposition, BTreeMap<usize, MpcGroup>) {
    let icfg = build_icfg(p);
    let dec = decompose(&icfg);
    let groups = dec
        .regions
        .iter()
        .filter_map(|r| r.covers(cap, seed).ok().map(|c| (r.id, MpcGroup::new(&dec, r, &c.covers))))
        .collect();
    (dec, groups)
}
