// SPDX-License-Identifier: Apache-2.0

//! Enumeration of all maximum matchings and the covers they induce.
//!
//! Binary partition in the style of Uno: given a maximum matching `M` of the
//! current graph, look for a second one `M'` that differs by an alternating
//! cycle or by an even alternating path from an exposed vertex. If none
//! exists `M` is the only one. Otherwise pick an edge `e` of `M \ M'` and
//! recurse on "matchings containing `e`" (drop both endpoints, keep `M`) and
//! "matchings avoiding `e`" (drop the edge, keep `M'`). Every recursive call
//! either reports a new matching or is a leaf, so the work stays linear in
//! the number of reported matchings.

use std::collections::{BTreeSet, HashSet};
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::graph::Graph;
use crate::mpc::{hopcroft_karp, matching_to_mpc, to_bipartite, BipartiteGraph, Matching, MpcError, PathCover};

/// Default number of distinct covers kept per subgraph.
pub const DEFAULT_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchingSet {
    pub matchings: Vec<Matching>,
    pub capped: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MpcSet {
    pub covers: Vec<PathCover>,
    pub capped: bool,
}

/// All maximum matchings of `b` in depth-first order, at most `cap` of them
/// (`None` disables the cap). The first one is Hopcroft–Karp's with seed 0.
pub fn enumerate_max_matchings(b: &BipartiteGraph, cap: Option<usize>) -> MatchingSet {
    enumerate_max_matchings_seeded(b, cap, 0)
}

pub fn enumerate_max_matchings_seeded(b: &BipartiteGraph, cap: Option<usize>, seed: u64) -> MatchingSet {
    let mut matchings = Vec::new();
    let mut capped = false;
    for_each_max_matching(b, seed, |m| {
        if cap.is_some_and(|c| matchings.len() >= c) {
            capped = true;
            return ControlFlow::Break(());
        }
        matchings.push(m.clone());
        ControlFlow::Continue(())
    });
    MatchingSet { matchings, capped }
}

/// Streams every maximum matching to `visit` until it breaks.
pub fn for_each_max_matching(b: &BipartiteGraph, seed: u64, mut visit: impl FnMut(&Matching) -> ControlFlow<()>) {
    let m = hopcroft_karp(b, seed);
    let mut state = Enumerator {
        b,
        left_alive: vec![true; b.left_count()],
        right_alive: vec![true; b.right_count()],
        removed: HashSet::new(),
        forced: Vec::new(),
        visit: &mut visit,
    };
    if state.emit(&m).is_continue() {
        let _ = state.recurse(m);
    }
}

struct Enumerator<'a, F> {
    b: &'a BipartiteGraph,
    left_alive: Vec<bool>,
    right_alive: Vec<bool>,
    removed: HashSet<(usize, usize)>,
    forced: Vec<(usize, usize)>,
    visit: &'a mut F,
}

impl<F: FnMut(&Matching) -> ControlFlow<()>> Enumerator<'_, F> {
    fn emit(&mut self, m: &Matching) -> ControlFlow<()> {
        let mut full = m.clone();
        for &p in &self.forced {
            full.insert(p);
        }
        (self.visit)(&full)
    }

    fn live_neighbors(&self, l: usize) -> impl Iterator<Item = usize> + '_ {
        self.b
            .neighbors(l)
            .iter()
            .copied()
            .filter(move |&r| self.right_alive[r] && !self.removed.contains(&(l, r)))
    }

    /// `m` is a maximum matching of the current graph and has been reported.
    fn recurse(&mut self, m: Matching) -> ControlFlow<()> {
        let Some(other) = self.another_matching(&m) else {
            return ControlFlow::Continue(());
        };
        self.emit(&other)?;
        let e = *m.pairs().difference(other.pairs()).next().expect("matchings differ");

        // matchings through e
        self.left_alive[e.0] = false;
        self.right_alive[e.1] = false;
        self.forced.push(e);
        let mut rest = m.clone();
        rest.pairs_mut().remove(&e);
        let flow = self.recurse(rest);
        self.forced.pop();
        self.left_alive[e.0] = true;
        self.right_alive[e.1] = true;
        flow?;

        // matchings avoiding e
        self.removed.insert(e);
        let flow = self.recurse(other);
        self.removed.remove(&e);
        flow
    }

    /// A different maximum matching of the current graph, if one exists.
    fn another_matching(&self, m: &Matching) -> Option<Matching> {
        let nl = self.b.left_count();
        let nr = self.b.right_count();
        let mut mate_l = vec![usize::MAX; nl];
        let mut mate_r = vec![usize::MAX; nr];
        for &(l, r) in m.pairs() {
            mate_l[l] = r;
            mate_r[r] = l;
        }

        // even alternating path of length two from an exposed vertex
        for u in (0..nl).filter(|&u| self.left_alive[u] && mate_l[u] == usize::MAX) {
            if let Some(r) = self.live_neighbors(u).find(|&r| mate_r[r] != usize::MAX) {
                let mut out = m.clone();
                out.pairs_mut().remove(&(mate_r[r], r));
                out.insert((u, r));
                return Some(out);
            }
        }
        for r in (0..nr).filter(|&r| self.right_alive[r] && mate_r[r] == usize::MAX) {
            // left vertices adjacent to an exposed right vertex
            for w in (0..nl).filter(|&w| self.left_alive[w] && mate_l[w] != usize::MAX) {
                if self.b.has_edge(w, r) && !self.removed.contains(&(w, r)) {
                    let mut out = m.clone();
                    out.pairs_mut().remove(&(w, mate_l[w]));
                    out.insert((w, r));
                    return Some(out);
                }
            }
        }

        // alternating cycle: u -> mate_r[r] for every non-matching edge (u, r)
        let cycle = self.find_cycle(&mate_l, &mate_r)?;
        let mut out = m.clone();
        for &u in &cycle {
            out.pairs_mut().remove(&(u, mate_l[u]));
        }
        for (i, &u) in cycle.iter().enumerate() {
            out.insert((u, mate_l[cycle[(i + 1) % cycle.len()]]));
        }
        Some(out)
    }

    /// A directed cycle among matched left vertices, as a vertex sequence.
    fn find_cycle(&self, mate_l: &[usize], mate_r: &[usize]) -> Option<Vec<usize>> {
        let nl = self.b.left_count();
        let succ = |u: usize| -> Vec<usize> {
            self.live_neighbors(u)
                .filter(|&r| r != mate_l[u] && mate_r[r] != usize::MAX)
                .map(|r| mate_r[r])
                .collect()
        };
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut color = vec![0u8; nl];
        for root in (0..nl).filter(|&u| self.left_alive[u] && mate_l[u] != usize::MAX) {
            if color[root] != 0 {
                continue;
            }
            let mut stack: Vec<(usize, Vec<usize>, usize)> = vec![(root, succ(root), 0)];
            color[root] = 1;
            while let Some(top) = stack.last_mut() {
                if top.2 < top.1.len() {
                    let v = top.1[top.2];
                    top.2 += 1;
                    match color[v] {
                        0 => {
                            color[v] = 1;
                            let s = succ(v);
                            stack.push((v, s, 0));
                        }
                        1 => {
                            let start = stack.iter().position(|f| f.0 == v).unwrap();
                            return Some(stack[start..].iter().map(|f| f.0).collect());
                        }
                        _ => {}
                    }
                } else {
                    color[top.0] = 2;
                    stack.pop();
                }
            }
        }
        None
    }
}

/// Distinct minimum covers of `g`, one per maximum matching up to cover
/// equality, stopping after `cap` distinct covers.
pub fn enumerate_mpcs(g: &Graph, cap: Option<usize>, seed: u64) -> Result<MpcSet, MpcError> {
    let b = to_bipartite(g)?;
    let mut seen: BTreeSet<Vec<Vec<usize>>> = BTreeSet::new();
    let mut covers = Vec::new();
    let mut capped = false;
    let mut error = None;
    for_each_max_matching(&b, seed, |m| {
        let cover = match matching_to_mpc(m, g) {
            Ok(c) => c,
            Err(e) => {
                error = Some(e);
                return ControlFlow::Break(());
            }
        };
        if seen.contains(&cover.canonical()) {
            return ControlFlow::Continue(());
        }
        if cap.is_some_and(|c| covers.len() >= c) {
            capped = true;
            return ControlFlow::Break(());
        }
        seen.insert(cover.canonical());
        covers.push(cover);
        ControlFlow::Continue(())
    });
    match error {
        Some(e) => Err(e),
        None => Ok(MpcSet { covers, capped }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k22_has_two() {
        let b = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let set = enumerate_max_matchings(&b, None);
        assert_eq!(set.matchings.len(), 2);
        assert!(!set.capped);
    }

    #[test]
    fn edgeless_has_only_empty() {
        let set = enumerate_max_matchings(&BipartiteGraph::new(3, 2), None);
        assert_eq!(set.matchings, vec![Matching::new()]);
    }

    #[test]
    fn cap_sets_flag() {
        let b = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        let one = enumerate_max_matchings(&b, Some(1));
        assert_eq!(one.matchings.len(), 1);
        assert!(one.capped);
        assert!(!enumerate_max_matchings(&b, Some(2)).capped);
    }

    #[test]
    fn exposed_vertex_exchange() {
        // left 0 and 1 both only see right 0
        let b = BipartiteGraph::from_edges(2, 1, &[(0, 0), (1, 0)]);
        assert_eq!(enumerate_max_matchings(&b, None).matchings.len(), 2);
    }

    #[test]
    fn chain_and_diamond_covers() {
        let chain = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(enumerate_mpcs(&chain, None, 0).unwrap().covers.len(), 1);
        let diamond = Graph::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap();
        let set = enumerate_mpcs(&diamond, None, 0).unwrap();
        assert!(set.covers.len() >= 2);
        assert!(set.covers.iter().all(|c| c.size() == 2 && c.is_valid_expanded(&diamond)));
    }
}
