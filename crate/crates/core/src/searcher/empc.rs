// SPDX-License-Identifier: Apache-2.0

//! MPC groups and the per-state region contexts the strategy matches
//! against them.

use std::collections::{BTreeSet, HashMap};

use crate::graph::VertexId;
use crate::icfg::{Decomposition, Origin, Region, RegionKind};
use crate::ir::FuncId;

/// Live covers of one region. Paths of all covers are pooled and deduped;
/// a path index is its position in that pool.
#[derive(Debug, Clone)]
pub struct MpcGroup {
    pub region: usize,
    pub paths: Vec<Vec<VertexId>>,
    pub covers: Vec<Vec<usize>>,
    pub live: Vec<bool>,
    pub consumed: BTreeSet<usize>,
    pub failed: BTreeSet<usize>,
    /// Times pruning was skipped to keep one cover alive.
    pub floor_hits: usize,
    /// Blocks each path reaches, counting those of merged regions.
    pub blocks: Vec<BTreeSet<VertexId>>,
    exit_rank: Vec<u8>,
    index: HashMap<Vec<VertexId>, usize>,
}

impl MpcGroup {
    pub fn new(dec: &Decomposition, region: &Region, covers: &[Vec<Vec<VertexId>>]) -> Self {
        let is_loop = matches!(region.kind, RegionKind::Loop { .. });
        let mut g = MpcGroup {
            region: region.id,
            paths: Vec::new(),
            covers: Vec::new(),
            live: Vec::new(),
            consumed: BTreeSet::new(),
            failed: BTreeSet::new(),
            floor_hits: 0,
            blocks: Vec::new(),
            exit_rank: Vec::new(),
            index: HashMap::new(),
        };
        for c in covers {
            let mut ids = Vec::new();
            for p in c {
                let id = match g.index.get(p) {
                    Some(&id) => id,
                    None => {
                        let id = g.paths.len();
                        g.index.insert(p.clone(), id);
                        g.paths.push(p.clone());
                        let mut bs = BTreeSet::new();
                        for &v in p {
                            origin_blocks(dec, &region.origins[v], &mut bs);
                        }
                        g.blocks.push(bs);
                        let last = &region.origins[*p.last().unwrap()];
                        g.exit_rank.push(u8::from(is_loop && matches!(last, Origin::ExitCopy(_))));
                        id
                    }
                };
                ids.push(id);
            }
            g.covers.push(ids);
            g.live.push(true);
        }
        g
    }

    fn in_live_cover(&self, i: usize) -> bool {
        self.covers.iter().zip(&self.live).any(|(c, &l)| l && c.contains(&i))
    }

    /// Not yet followed or failed, in a live cover, and still reaching an
    /// uncovered block.
    pub fn is_candidate(&self, i: usize, covered: &BTreeSet<VertexId>) -> bool {
        !self.consumed.contains(&i)
            && !self.failed.contains(&i)
            && self.blocks[i].iter().any(|b| !covered.contains(b))
            && self.in_live_cover(i)
    }

    /// Best candidate path extending `ext`: loop iterations before loop
    /// exits, then the lowest index.
    pub fn best_match(&self, ext: &[VertexId], covered: &BTreeSet<VertexId>) -> Option<(u8, usize)> {
        (0..self.paths.len())
            .filter(|&i| self.is_candidate(i, covered) && self.paths[i].starts_with(ext))
            .map(|i| (self.exit_rank[i], i))
            .min()
    }

    pub fn matching_paths(&self, ext: &[VertexId], pool: &BTreeSet<usize>) -> Vec<usize> {
        pool.iter().copied().filter(|&i| self.paths[i].starts_with(ext)).collect()
    }

    /// Drops covers without a path extending `ext`, unless none would remain.
    pub fn prune(&mut self, ext: &[VertexId]) {
        let keep: Vec<bool> = self
            .covers
            .iter()
            .zip(&self.live)
            .map(|(c, &l)| l && c.iter().any(|&i| self.paths[i].starts_with(ext)))
            .collect();
        if keep.iter().any(|&k| k) {
            self.live = keep;
        } else {
            self.floor_hits += 1;
        }
    }

    pub fn complete(&mut self, path: &[VertexId]) {
        if let Some(&i) = self.index.get(path) {
            self.consumed.insert(i);
            self.failed.remove(&i);
        }
    }

    pub fn live_count(&self) -> usize {
        self.live.iter().filter(|&&l| l).count()
    }
}

fn origin_blocks(dec: &Decomposition, o: &Origin, out: &mut BTreeSet<VertexId>) {
    match o {
        Origin::Block(b) => {
            out.insert(*b);
        }
        Origin::Merged(r) => {
            for o in &dec.regions[*r].origins {
                origin_blocks(dec, o, out);
            }
        }
        Origin::ExitCopy(inner) => origin_blocks(dec, inner, out),
        Origin::VirtualReturn(_) => {}
    }
}

/// Position of a state inside one region instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Ctx {
    pub region: Option<usize>,
    pub func: FuncId,
    pub is_func: bool,
    pub path: Vec<VertexId>,
    pub lost: bool,
    pub free: bool,
}

impl Ctx {
    pub fn tracked(&self) -> bool {
        self.region.is_some() && !self.lost
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Transition {
    Intra(VertexId),
    Call { callee: FuncId, entry: VertexId },
    Return { from: FuncId, to: VertexId },
}

/// Where a fork child would extend its region path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Decision {
    pub depth: usize,
    pub ext: Vec<VertexId>,
    pub leaves_loop: bool,
}

pub(crate) struct Tracker<'d> {
    pub dec: &'d Decomposition,
    pub groups: Vec<Option<MpcGroup>>,
}

impl Tracker<'_> {
    fn represents(&self, o: &Origin, x: VertexId) -> bool {
        match o {
            Origin::Block(b) => *b == x,
            Origin::Merged(r) => {
                let reg = &self.dec.regions[*r];
                self.represents(&reg.origins[reg.entry], x)
            }
            Origin::ExitCopy(inner) => self.represents(inner, x),
            Origin::VirtualReturn(_) => false,
        }
    }

    fn successor_for(&self, r: usize, cur: VertexId, x: VertexId) -> Option<VertexId> {
        let reg = &self.dec.regions[r];
        reg.graph.successors(cur).iter().copied().find(|&s| self.represents(&reg.origins[s], x))
    }

    fn is_own_header(&self, r: usize, x: VertexId) -> bool {
        let reg = &self.dec.regions[r];
        matches!(reg.kind, RegionKind::Loop { header, .. } if header == x)
    }

    pub fn enter(&self, r: Option<usize>, func: FuncId, is_func: bool) -> Ctx {
        let path = r.map(|r| vec![self.dec.regions[r].entry]).unwrap_or_default();
        Ctx { region: r, func, is_func, path, lost: false, free: false }
    }

    fn finish(&mut self, ctx: &Ctx) {
        if let (Some(r), false) = (ctx.region, ctx.lost) {
            if let Some(g) = self.groups[r].as_mut() {
                g.complete(&ctx.path);
            }
        }
    }

    pub fn preview(&self, ctxs: &[Ctx], x: VertexId) -> Option<Decision> {
        let depth = ctxs.len() - 1;
        let top = &ctxs[depth];
        let r = top.region.filter(|_| !top.lost)?;
        let cur = *top.path.last()?;
        if let Some(s) = self.successor_for(r, cur, x) {
            let mut ext = top.path.clone();
            ext.push(s);
            let leaves_loop = matches!(self.dec.regions[r].origins[s], Origin::ExitCopy(_));
            return Some(Decision { depth, ext, leaves_loop });
        }
        if self.is_own_header(r, x) {
            return Some(Decision { depth, ext: top.path.clone(), leaves_loop: false });
        }
        None
    }

    fn step_to(&mut self, ctxs: &mut Vec<Ctx>, x: VertexId) {
        loop {
            let Some(top) = ctxs.last_mut() else { return };
            let Some(r) = top.region.filter(|_| !top.lost) else { return };
            let Some(&cur) = top.path.last() else { return };
            if let Some(s) = self.successor_for(r, cur, x) {
                top.path.push(s);
                match &self.dec.regions[r].origins[s] {
                    Origin::Merged(inner) => {
                        let func = top.func;
                        let inner = *inner;
                        ctxs.push(self.enter(Some(inner), func, false));
                        return;
                    }
                    Origin::ExitCopy(_) => {
                        let done = ctxs.pop().unwrap();
                        self.finish(&done);
                        continue;
                    }
                    _ => return,
                }
            }
            if self.is_own_header(r, x) {
                let done = top.clone();
                let entry = self.dec.regions[r].entry;
                top.path = vec![entry];
                top.free = false;
                self.finish(&done);
                return;
            }
            top.lost = true;
            return;
        }
    }

    pub fn apply(&mut self, ctxs: &mut Vec<Ctx>, t: Transition) {
        match t {
            Transition::Intra(x) => self.step_to(ctxs, x),
            Transition::Call { callee, entry } => {
                if let Some(top) = ctxs.last_mut() {
                    if let (Some(r), false) = (top.region, top.lost) {
                        let cur = *top.path.last().unwrap();
                        if let Some(s) = self.successor_for(r, cur, entry) {
                            top.path.push(s);
                        }
                    }
                }
                let r = self.dec.function_region.get(&callee).copied();
                ctxs.push(self.enter(r, callee, true));
            }
            Transition::Return { from, to } => {
                while let Some(mut top) = ctxs.pop() {
                    if top.is_func && top.func == from {
                        if let (Some(r), false) = (top.region, top.lost) {
                            let cur = *top.path.last().unwrap();
                            let reg = &self.dec.regions[r];
                            if let Some(&s) =
                                reg.graph.successors(cur).iter().find(|&&s| matches!(reg.origins[s], Origin::VirtualReturn(_)))
                            {
                                top.path.push(s);
                            }
                        }
                        self.finish(&top);
                        break;
                    }
                }
                self.step_to(ctxs, to);
            }
        }
    }

    /// Closes every open region instance of a finished run.
    pub fn complete_all(&mut self, ctxs: &mut Vec<Ctx>) {
        while let Some(c) = ctxs.pop() {
            self.finish(&c);
        }
    }
}
