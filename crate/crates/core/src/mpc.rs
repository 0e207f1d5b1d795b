// SPDX-License-Identifier: Apache-2.0

//! Minimum path covers of DAGs via maximum bipartite matching.
//!
//! The bipartite graph has a left copy `x_i` and a right copy `y_j` of every
//! vertex and an edge `(x_i, y_j)` whenever `i` reaches `j`. A maximum
//! matching chains vertices into `|V| - |M|` reachability paths, which are
//! then expanded into concrete paths of the DAG.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Graph, GraphError, ReachabilityMatrix, VertexId};

/// Default vertex limit for the exhaustive oracles.
pub const BRUTE_FORCE_LIMIT: usize = 12;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MpcError {
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("pair ({0}, {1}) is not an edge of the bipartite graph")]
    NotAnEdge(usize, usize),
    #[error("vertex {0} is matched twice on the {1} side")]
    DoubleMatched(usize, &'static str),
    #[error("graph has {size} vertices, exhaustive search is limited to {limit}")]
    TooLarge { size: usize, limit: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    left_count: usize,
    right_count: usize,
    adj: Vec<Vec<usize>>,
}

impl BipartiteGraph {
    pub fn new(left_count: usize, right_count: usize) -> Self {
        BipartiteGraph { left_count, right_count, adj: vec![Vec::new(); left_count] }
    }

    /// Builds from an edge list; duplicate edges are collapsed.
    pub fn from_edges(left_count: usize, right_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut b = BipartiteGraph::new(left_count, right_count);
        for &(l, r) in edges {
            assert!(l < left_count && r < right_count, "edge ({l}, {r}) out of range");
            if let Err(pos) = b.adj[l].binary_search(&r) {
                b.adj[l].insert(pos, r);
            }
        }
        b
    }

    pub fn left_count(&self) -> usize {
        self.left_count
    }

    pub fn right_count(&self) -> usize {
        self.right_count
    }

    pub fn neighbors(&self, left: usize) -> &[usize] {
        &self.adj[left]
    }

    pub fn has_edge(&self, left: usize, right: usize) -> bool {
        left < self.left_count && self.adj[left].binary_search(&right).is_ok()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(l, rs)| rs.iter().map(move |&r| (l, r)))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum()
    }
}

/// A set of (left, right) pairs, kept sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Matching {
    pairs: BTreeSet<(usize, usize)>,
}

impl Matching {
    pub fn new() -> Self {
        Matching::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        Matching { pairs: pairs.into_iter().collect() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn contains(&self, pair: (usize, usize)) -> bool {
        self.pairs.contains(&pair)
    }

    pub fn insert(&mut self, pair: (usize, usize)) -> bool {
        self.pairs.insert(pair)
    }

    pub(crate) fn pairs_mut(&mut self) -> &mut BTreeSet<(usize, usize)> {
        &mut self.pairs
    }

    /// Checks the matching constraint and that every pair is an edge of `b`.
    pub fn validate(&self, b: &BipartiteGraph) -> Result<(), MpcError> {
        let mut left = vec![false; b.left_count()];
        let mut right = vec![false; b.right_count()];
        for &(l, r) in &self.pairs {
            if !b.has_edge(l, r) {
                return Err(MpcError::NotAnEdge(l, r));
            }
            if std::mem::replace(&mut left[l], true) {
                return Err(MpcError::DoubleMatched(l, "left"));
            }
            if std::mem::replace(&mut right[r], true) {
                return Err(MpcError::DoubleMatched(r, "right"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PathCover {
    pub paths: Vec<Vec<VertexId>>,
}

impl PathCover {
    pub fn new(paths: Vec<Vec<VertexId>>) -> Self {
        PathCover { paths }
    }

    pub fn size(&self) -> usize {
        self.paths.len()
    }

    /// Paths sorted lexicographically; used as the identity of a cover.
    pub fn canonical(&self) -> Vec<Vec<VertexId>> {
        let mut p = self.paths.clone();
        p.sort();
        p
    }

    /// Every vertex is on some path and paths are nonempty.
    pub fn covers(&self, g: &Graph) -> bool {
        let mut seen = vec![false; g.vertex_count()];
        for p in &self.paths {
            if p.is_empty() {
                return false;
            }
            for &v in p {
                if v >= seen.len() {
                    return false;
                }
                seen[v] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Covers `g` and every consecutive pair is an edge of `g`.
    pub fn is_valid_expanded(&self, g: &Graph) -> bool {
        self.covers(g) && self.paths.iter().all(|p| p.windows(2).all(|w| g.has_edge(w[0], w[1])))
    }

    /// Covers `g` and every consecutive pair is a reachability pair.
    pub fn is_valid_reachability(&self, g: &Graph, reach: &ReachabilityMatrix) -> bool {
        self.covers(g) && self.paths.iter().all(|p| p.windows(2).all(|w| reach.reaches(w[0], w[1])))
    }

    pub fn to_json(&self) -> PathCoverJson {
        PathCoverJson { paths: self.paths.clone(), size: self.size() }
    }
}

/// On-disk cover format: `{"paths": [[v0, v1, ...], ...], "size": k}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathCoverJson {
    pub paths: Vec<Vec<VertexId>>,
    pub size: usize,
}

fn require_dag(g: &Graph) -> Result<(), MpcError> {
    if g.is_dag() {
        Ok(())
    } else {
        Err(MpcError::Cyclic)
    }
}

pub fn to_bipartite(g: &Graph) -> Result<BipartiteGraph, MpcError> {
    require_dag(g)?;
    Ok(bipartite_from_reachability(&g.reachability()))
}

fn bipartite_from_reachability(reach: &ReachabilityMatrix) -> BipartiteGraph {
    let n = reach.size();
    BipartiteGraph::from_edges(n, n, &reach.pairs())
}

const NIL: usize = usize::MAX;

/// Hopcroft–Karp. The seed shuffles the order in which left vertices start
/// augmenting searches, so different seeds can land on different maximum
/// matchings of the same size.
pub fn hopcroft_karp(b: &BipartiteGraph, seed: u64) -> Matching {
    let nl = b.left_count();
    let mut order: Vec<usize> = (0..nl).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut mate_l = vec![NIL; nl];
    let mut mate_r = vec![NIL; b.right_count()];
    let mut dist = vec![0usize; nl];

    loop {
        // BFS layering from free left vertices
        let mut queue = VecDeque::new();
        for &u in &order {
            if mate_l[u] == NIL {
                dist[u] = 0;
                queue.push_back(u);
            } else {
                dist[u] = usize::MAX;
            }
        }
        let mut found = false;
        while let Some(u) = queue.pop_front() {
            for &r in b.neighbors(u) {
                let w = mate_r[r];
                if w == NIL {
                    found = true;
                } else if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    queue.push_back(w);
                }
            }
        }
        if !found {
            break;
        }
        for &u in &order {
            if mate_l[u] == NIL {
                augment(b, u, &mut mate_l, &mut mate_r, &mut dist);
            }
        }
    }

    Matching::from_pairs((0..nl).filter(|&u| mate_l[u] != NIL).map(|u| (u, mate_l[u])))
}

fn augment(b: &BipartiteGraph, u: usize, mate_l: &mut [usize], mate_r: &mut [usize], dist: &mut [usize]) -> bool {
    for &r in b.neighbors(u) {
        let w = mate_r[r];
        let ok = if w == NIL {
            true
        } else if dist[w] == dist[u].wrapping_add(1) {
            augment(b, w, mate_l, mate_r, dist)
        } else {
            false
        };
        if ok {
            mate_l[u] = r;
            mate_r[r] = u;
            return true;
        }
    }
    dist[u] = usize::MAX;
    false
}

/// Turns a matching of `to_bipartite(g)` into a cover of `|V| - |M|` concrete
/// paths. Matched pairs chain vertices together; a pair that is not a direct
/// edge is bridged by the shortest connecting path. Paths are ordered by
/// their first vertex.
pub fn matching_to_mpc(m: &Matching, g: &Graph) -> Result<PathCover, MpcError> {
    require_dag(g)?;
    let n = g.vertex_count();
    let reach = g.reachability();
    m.validate(&bipartite_from_reachability(&reach))?;

    let mut next = vec![NIL; n];
    let mut has_prev = vec![false; n];
    for &(i, j) in m.pairs() {
        next[i] = j;
        has_prev[j] = true;
    }
    let mut paths = Vec::with_capacity(n - m.len());
    for start in (0..n).filter(|&v| !has_prev[v]) {
        let mut path = vec![start];
        let mut cur = start;
        while next[cur] != NIL {
            let to = next[cur];
            let bridge = g.shortest_path(cur, to).expect("matched pair must be reachable");
            path.extend_from_slice(&bridge[1..]);
            cur = to;
        }
        paths.push(path);
    }
    Ok(PathCover::new(paths))
}

pub fn compute_mpc(g: &Graph, seed: u64) -> Result<PathCover, MpcError> {
    let b = to_bipartite(g)?;
    let m = hopcroft_karp(&b, seed);
    matching_to_mpc(&m, g)
}

/// Keeps the first occurrence of each vertex across the cover's paths and
/// maps consecutive survivors to bipartite pairs.
pub fn mpc_to_matching(p: &PathCover, g: &Graph) -> Matching {
    let mut seen = vec![false; g.vertex_count()];
    let mut m = Matching::new();
    for path in &p.paths {
        let kept: Vec<VertexId> = path
            .iter()
            .copied()
            .filter(|&v| v < seen.len() && !std::mem::replace(&mut seen[v], true))
            .collect();
        for w in kept.windows(2) {
            m.insert((w[0], w[1]));
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BruteForceMpc {
    pub min_size: usize,
    /// Every minimum partition of the vertices into reachability chains.
    pub all_covers: Vec<PathCover>,
}

/// Exhaustive oracle. Minimum covers correspond one-to-one with partitions
/// of the vertex set into reachability chains, so the search assigns
/// vertices in topological order to an existing chain or a new one.
pub fn brute_force_mpc(g: &Graph, limit: usize) -> Result<BruteForceMpc, MpcError> {
    if g.vertex_count() > limit {
        return Err(MpcError::TooLarge { size: g.vertex_count(), limit });
    }
    let order = g.topological_order().ok_or(MpcError::Cyclic)?;
    let mut search = ChainSearch {
        order,
        reach: g.reachability(),
        chains: Vec::new(),
        max_chains: g.vertex_count() + 1,
        collect: false,
        found: Vec::new(),
    };
    search.run(0);
    search.collect = true;
    search.run(0);
    let mut all = search.found;
    all.sort();
    Ok(BruteForceMpc { min_size: search.max_chains, all_covers: all })
}

struct ChainSearch {
    order: Vec<VertexId>,
    reach: ReachabilityMatrix,
    chains: Vec<Vec<VertexId>>,
    max_chains: usize,
    collect: bool,
    found: Vec<PathCover>,
}

impl ChainSearch {
    fn run(&mut self, idx: usize) {
        if idx == self.order.len() {
            if self.collect {
                let mut paths = self.chains.clone();
                paths.sort();
                self.found.push(PathCover::new(paths));
            } else {
                self.max_chains = self.max_chains.min(self.chains.len());
            }
            return;
        }
        let v = self.order[idx];
        for c in 0..self.chains.len() {
            if self.reach.reaches(*self.chains[c].last().unwrap(), v) {
                self.chains[c].push(v);
                self.run(idx + 1);
                self.chains[c].pop();
            }
        }
        // a new chain must leave room to beat (or, when collecting, tie) the best size
        let room = if self.collect { self.chains.len() < self.max_chains } else { self.chains.len() + 1 < self.max_chains };
        if room {
            self.chains.push(vec![v]);
            self.run(idx + 1);
            self.chains.pop();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Graph {
        Graph::from_edges(4, &[(0, 1), (0, 2), (1, 3), (2, 3)]).unwrap()
    }

    #[test]
    fn bipartite_of_chain() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(to_bipartite(&g).unwrap().edges(), vec![(0, 1), (0, 2), (1, 2)]);
        let cyc = Graph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert_eq!(to_bipartite(&cyc), Err(MpcError::Cyclic));
    }

    #[test]
    fn small_matchings() {
        let k22 = BipartiteGraph::from_edges(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(hopcroft_karp(&k22, 3).len(), 2);
        assert!(hopcroft_karp(&BipartiteGraph::new(3, 3), 0).is_empty());
    }

    #[test]
    fn single_vertex_cover() {
        let g = Graph::new(1);
        let cover = matching_to_mpc(&Matching::new(), &g).unwrap();
        assert_eq!(cover.paths, vec![vec![0]]);
    }

    #[test]
    fn non_edge_pair_is_expanded() {
        // 0 -> 1 -> 2 plus isolated 3; matching (0,2) skips over 1
        let g = Graph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        let m = Matching::from_pairs([(0, 2)]);
        let cover = matching_to_mpc(&m, &g).unwrap();
        assert_eq!(cover.paths, vec![vec![0, 1, 2], vec![1], vec![3]]);
        assert!(cover.is_valid_expanded(&g));
    }

    #[test]
    fn rejects_bad_matching() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        assert_eq!(matching_to_mpc(&Matching::from_pairs([(2, 0)]), &g), Err(MpcError::NotAnEdge(2, 0)));
        assert!(matches!(
            matching_to_mpc(&Matching::from_pairs([(0, 1), (0, 2)]), &g),
            Err(MpcError::DoubleMatched(0, "left"))
        ));
    }

    #[test]
    fn chain_needs_one_path() {
        let edges: Vec<_> = (1..6).map(|i| (i - 1, i)).collect();
        let g = Graph::from_edges(6, &edges).unwrap();
        assert_eq!(compute_mpc(&g, 0).unwrap().paths, vec![vec![0, 1, 2, 3, 4, 5]]);
    }

    #[test]
    fn brute_force_small_cases() {
        let chain = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let bf = brute_force_mpc(&chain, 12).unwrap();
        assert_eq!((bf.min_size, bf.all_covers.len()), (1, 1));
        assert_eq!(brute_force_mpc(&Graph::new(2), 12).unwrap().min_size, 2);
        let d = brute_force_mpc(&diamond(), 12).unwrap();
        assert_eq!(d.min_size, 2);
        assert!(matches!(brute_force_mpc(&Graph::new(13), 12), Err(MpcError::TooLarge { .. })));
    }

    #[test]
    fn cover_back_to_matching() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let m = mpc_to_matching(&PathCover::new(vec![vec![0, 1, 2]]), &g);
        assert_eq!(m, Matching::from_pairs([(0, 1), (1, 2)]));
        let singles = PathCover::new(vec![vec![0], vec![1], vec![2]]);
        assert!(mpc_to_matching(&singles, &g).is_empty());
    }
}
