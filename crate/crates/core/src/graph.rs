// SPDX-License-Identifier: Apache-2.0

//! Directed graphs with dense vertex ids.
//!
//! Vertices are `0..vertex_count`. Edges are kept in sorted adjacency lists so
//! every traversal in this crate visits neighbours in increasing id order,
//! which keeps path expansion and enumeration reproducible.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense vertex index.
pub type VertexId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {vertex} out of range (graph has {count} vertices)")]
    UnknownVertex { vertex: VertexId, count: usize },
    #[error("self-loop on vertex {0}")]
    SelfLoop(VertexId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("graph contains a directed cycle")]
    Cyclic,
    #[error("malformed graph input: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Graph {
    succ: Vec<Vec<VertexId>>,
    pred: Vec<Vec<VertexId>>,
    edge_count: usize,
    labels: BTreeMap<VertexId, String>,
}

impl Graph {
    pub fn new(vertex_count: usize) -> Self {
        Graph {
            succ: vec![Vec::new(); vertex_count],
            pred: vec![Vec::new(); vertex_count],
            edge_count: 0,
            labels: BTreeMap::new(),
        }
    }

    /// Builds a graph from an edge list, rejecting self-loops, duplicates and
    /// out-of-range endpoints.
    pub fn from_edges(vertex_count: usize, edges: &[(VertexId, VertexId)]) -> Result<Self, GraphError> {
        let mut g = Graph::new(vertex_count);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn vertex_count(&self) -> usize {
        self.succ.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn add_vertex(&mut self) -> VertexId {
        self.succ.push(Vec::new());
        self.pred.push(Vec::new());
        self.succ.len() - 1
    }

    pub fn add_edge(&mut self, u: VertexId, v: VertexId) -> Result<(), GraphError> {
        self.check_vertex(u)?;
        self.check_vertex(v)?;
        if u == v {
            return Err(GraphError::SelfLoop(u));
        }
        match self.succ[u].binary_search(&v) {
            Ok(_) => Err(GraphError::DuplicateEdge(u, v)),
            Err(pos) => {
                self.succ[u].insert(pos, v);
                let ppos = self.pred[v].binary_search(&u).unwrap_err();
                self.pred[v].insert(ppos, u);
                self.edge_count += 1;
                Ok(())
            }
        }
    }

    /// Adds the edge unless it is already present. Self-loops are still rejected.
    pub fn ensure_edge(&mut self, u: VertexId, v: VertexId) -> Result<bool, GraphError> {
        match self.add_edge(u, v) {
            Ok(()) => Ok(true),
            Err(GraphError::DuplicateEdge(..)) => Ok(false),
            Err(e) => Err(e),
        }
    }

    pub fn remove_edge(&mut self, u: VertexId, v: VertexId) -> bool {
        if u >= self.vertex_count() || v >= self.vertex_count() {
            return false;
        }
        match self.succ[u].binary_search(&v) {
            Ok(pos) => {
                self.succ[u].remove(pos);
                let ppos = self.pred[v].binary_search(&u).expect("pred list out of sync");
                self.pred[v].remove(ppos);
                self.edge_count -= 1;
                true
            }
            Err(_) => false,
        }
    }

    pub fn has_edge(&self, u: VertexId, v: VertexId) -> bool {
        u < self.vertex_count() && self.succ[u].binary_search(&v).is_ok()
    }

    pub fn successors(&self, v: VertexId) -> &[VertexId] {
        &self.succ[v]
    }

    pub fn predecessors(&self, v: VertexId) -> &[VertexId] {
        &self.pred[v]
    }

    pub fn in_degree(&self, v: VertexId) -> usize {
        self.pred[v].len()
    }

    pub fn out_degree(&self, v: VertexId) -> usize {
        self.succ[v].len()
    }

    /// All edges in (source, target) lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.succ
            .iter()
            .enumerate()
            .flat_map(|(u, vs)| vs.iter().map(move |&v| (u, v)))
    }

    pub fn label(&self, v: VertexId) -> Option<&str> {
        self.labels.get(&v).map(String::as_str)
    }

    pub fn set_label(&mut self, v: VertexId, label: impl Into<String>) {
        self.labels.insert(v, label.into());
    }

    pub fn clear_label(&mut self, v: VertexId) {
        self.labels.remove(&v);
    }

    pub fn labels(&self) -> &BTreeMap<VertexId, String> {
        &self.labels
    }

    fn check_vertex(&self, v: VertexId) -> Result<(), GraphError> {
        if v < self.vertex_count() {
            Ok(())
        } else {
            Err(GraphError::UnknownVertex { vertex: v, count: self.vertex_count() })
        }
    }

    /// Vertices reachable from `start` through nonempty paths.
    pub fn reachable_from(&self, start: VertexId) -> Vec<bool> {
        let mut seen = vec![false; self.vertex_count()];
        let mut queue: VecDeque<VertexId> = self.succ[start].iter().copied().collect();
        for &v in &self.succ[start] {
            seen[v] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &self.succ[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen
    }

    /// Per-source BFS transitive closure.
    pub fn reachability(&self) -> ReachabilityMatrix {
        let n = self.vertex_count();
        let rows = (0..n).map(|s| self.reachable_from(s)).collect();
        ReachabilityMatrix { n, rows }
    }

    /// Kahn's algorithm; ties resolved by smallest id. `None` when cyclic.
    pub fn topological_order(&self) -> Option<Vec<VertexId>> {
        let n = self.vertex_count();
        let mut indeg: Vec<usize> = (0..n).map(|v| self.in_degree(v)).collect();
        let mut ready: std::collections::BinaryHeap<std::cmp::Reverse<VertexId>> =
            (0..n).filter(|&v| indeg[v] == 0).map(std::cmp::Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(std::cmp::Reverse(u)) = ready.pop() {
            order.push(u);
            for &v in &self.succ[u] {
                indeg[v] -= 1;
                if indeg[v] == 0 {
                    ready.push(std::cmp::Reverse(v));
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// True iff the graph has no directed cycle (iterative three-colour DFS).
    pub fn is_dag(&self) -> bool {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let n = self.vertex_count();
        let mut mark = vec![Mark::White; n];
        for root in 0..n {
            if mark[root] != Mark::White {
                continue;
            }
            let mut stack = vec![(root, 0usize)];
            mark[root] = Mark::Grey;
            while let Some(&mut (u, ref mut idx)) = stack.last_mut() {
                if *idx < self.succ[u].len() {
                    let v = self.succ[u][*idx];
                    *idx += 1;
                    match mark[v] {
                        Mark::Grey => return false,
                        Mark::White => {
                            mark[v] = Mark::Grey;
                            stack.push((v, 0));
                        }
                        Mark::Black => {}
                    }
                } else {
                    mark[u] = Mark::Black;
                    stack.pop();
                }
            }
        }
        true
    }

    /// Induced subgraph on `vs`. Returns the subgraph and the old→new id map;
    /// new ids follow increasing old id order. Labels are carried over.
    pub fn induced_subgraph(&self, vs: &[VertexId]) -> Result<(Graph, BTreeMap<VertexId, VertexId>), GraphError> {
        let mut keep: Vec<VertexId> = vs.to_vec();
        for &v in &keep {
            self.check_vertex(v)?;
        }
        keep.sort_unstable();
        keep.dedup();
        let map: BTreeMap<VertexId, VertexId> = keep.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let mut sub = Graph::new(keep.len());
        for &u in &keep {
            for &v in &self.succ[u] {
                if let Some(&nv) = map.get(&v) {
                    sub.add_edge(map[&u], nv)?;
                }
            }
            if let Some(l) = self.labels.get(&u) {
                sub.set_label(map[&u], l.clone());
            }
        }
        Ok((sub, map))
    }

    /// Shortest path `from` → `to` (inclusive). Among equal-length paths the
    /// lexicographically smallest vertex sequence is returned.
    pub fn shortest_path(&self, from: VertexId, to: VertexId) -> Option<Vec<VertexId>> {
        if from == to {
            return Some(vec![from]);
        }
        // distances to `to` on the reversed graph, then greedy smallest-id walk
        let n = self.vertex_count();
        let mut dist = vec![usize::MAX; n];
        dist[to] = 0;
        let mut queue = VecDeque::from([to]);
        while let Some(v) = queue.pop_front() {
            for &u in &self.pred[v] {
                if dist[u] == usize::MAX {
                    dist[u] = dist[v] + 1;
                    queue.push_back(u);
                }
            }
        }
        if dist[from] == usize::MAX {
            return None;
        }
        let mut path = vec![from];
        let mut cur = from;
        while cur != to {
            cur = *self.succ[cur]
                .iter()
                .find(|&&w| dist[w] != usize::MAX && dist[w] + 1 == dist[cur])
                .expect("BFS layering broken");
            path.push(cur);
        }
        Some(path)
    }

    /// Vertices with in-degree zero.
    pub fn sources(&self) -> Vec<VertexId> {
        (0..self.vertex_count()).filter(|&v| self.in_degree(v) == 0).collect()
    }

    /// Vertices with out-degree zero.
    pub fn sinks(&self) -> Vec<VertexId> {
        (0..self.vertex_count()).filter(|&v| self.out_degree(v) == 0).collect()
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            vertices: self.vertex_count(),
            edges: self.edges().map(|(u, v)| [u, v]).collect(),
            labels: self.labels.iter().map(|(k, v)| (k.to_string(), v.clone())).collect(),
        }
    }

    pub fn from_json(json: &GraphJson) -> Result<Self, GraphError> {
        let mut g = Graph::new(json.vertices);
        for &[u, v] in &json.edges {
            g.add_edge(u, v)?;
        }
        for (k, l) in &json.labels {
            let v: VertexId = k
                .parse()
                .map_err(|_| GraphError::Parse(format!("label key {k:?} is not a vertex id")))?;
            g.check_vertex(v)?;
            g.set_label(v, l.clone());
        }
        Ok(g)
    }

    /// Parses either the JSON graph format or the small DOT subset
    /// (`digraph { 0 -> 1; 1 -> 2; 3; }`), sniffing on the first character.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        if text.trim_start().starts_with('{') {
            let json: GraphJson = serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))?;
            Graph::from_json(&json)
        } else {
            parse_dot(text)
        }
    }
}

/// On-disk graph format: `{"vertices": N, "edges": [[u,v],...], "labels": {"0": "entry"}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub vertices: usize,
    pub edges: Vec<[VertexId; 2]>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub labels: BTreeMap<String, String>,
}

fn parse_dot(text: &str) -> Result<Graph, GraphError> {
    let body = text.trim();
    let rest = body
        .strip_prefix("digraph")
        .ok_or_else(|| GraphError::Parse("expected `digraph`".into()))?;
    let open = rest.find('{').ok_or_else(|| GraphError::Parse("expected `{`".into()))?;
    let close = rest.rfind('}').ok_or_else(|| GraphError::Parse("expected `}`".into()))?;
    if !rest[..open].trim().chars().all(|c| c.is_alphanumeric() || c == '_') {
        return Err(GraphError::Parse("bad graph name".into()));
    }
    let mut edges = Vec::new();
    let mut max_id: Option<VertexId> = None;
    let parse_id = |s: &str| -> Result<VertexId, GraphError> {
        s.trim()
            .parse()
            .map_err(|_| GraphError::Parse(format!("node id {:?} is not a non-negative integer", s.trim())))
    };
    for stmt in rest[open + 1..close].split(|c| c == ';' || c == '\n') {
        let stmt = stmt.trim();
        if stmt.is_empty() {
            continue;
        }
        let ids = stmt.split("->").map(parse_id).collect::<Result<Vec<_>, _>>()?;
        for &id in &ids {
            max_id = Some(max_id.map_or(id, |m| m.max(id)));
        }
        edges.extend(ids.windows(2).map(|w| (w[0], w[1])));
    }
    Graph::from_edges(max_id.map_or(0, |m| m + 1), &edges)
}

/// Dense boolean transitive closure: `reaches(i, j)` iff a nonempty path
/// `i → j` exists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachabilityMatrix {
    n: usize,
    rows: Vec<Vec<bool>>,
}

impl ReachabilityMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn reaches(&self, i: VertexId, j: VertexId) -> bool {
        self.rows[i][j]
    }

    pub fn row(&self, i: VertexId) -> &[bool] {
        &self.rows[i]
    }

    /// All `(i, j)` with `reaches(i, j)`, row-major.
    pub fn pairs(&self) -> Vec<(VertexId, VertexId)> {
        (0..self.n)
            .flat_map(|i| (0..self.n).filter(move |&j| self.rows[i][j]).map(move |j| (i, j)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn chain_reachability() {
        let r = chain(3).reachability();
        assert!(r.reaches(0, 2));
        assert!(!r.reaches(2, 0));
        assert!(!r.reaches(1, 1));
    }

    #[test]
    fn edgeless_reachability_is_empty() {
        let r = Graph::new(4).reachability();
        assert!(r.pairs().is_empty());
    }

    #[test]
    fn dag_checks() {
        assert!(chain(3).is_dag());
        let cyc = Graph::from_edges(2, &[(0, 1), (1, 0)]).unwrap();
        assert!(!cyc.is_dag());
        assert!(cyc.topological_order().is_none());
    }

    #[test]
    fn construction_errors() {
        let mut g = Graph::new(2);
        assert_eq!(g.add_edge(0, 0), Err(GraphError::SelfLoop(0)));
        g.add_edge(0, 1).unwrap();
        assert_eq!(g.add_edge(0, 1), Err(GraphError::DuplicateEdge(0, 1)));
        assert!(matches!(g.add_edge(0, 5), Err(GraphError::UnknownVertex { .. })));
        assert!(matches!(g.induced_subgraph(&[7]), Err(GraphError::UnknownVertex { .. })));
    }

    #[test]
    fn induced_identity_and_singleton() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (0, 3), (3, 2)]).unwrap();
        let (all, map) = g.induced_subgraph(&[0, 1, 2, 3]).unwrap();
        assert_eq!(all, g);
        assert!(map.iter().all(|(a, b)| a == b));
        let (one, _) = g.induced_subgraph(&[2]).unwrap();
        assert_eq!(one.vertex_count(), 1);
        assert_eq!(one.edge_count(), 0);
    }

    #[test]
    fn shortest_path_prefers_small_ids() {
        // 0 -> {2, 1} -> 3 ; both length 2, expect via 1
        let g = Graph::from_edges(4, &[(0, 2), (0, 1), (1, 3), (2, 3)]).unwrap();
        assert_eq!(g.shortest_path(0, 3), Some(vec![0, 1, 3]));
        assert_eq!(g.shortest_path(3, 0), None);
    }

    #[test]
    fn json_and_dot_parse() {
        let g = Graph::parse(r#"{"vertices": 3, "edges": [[0,1],[1,2]], "labels": {"0": "entry"}}"#).unwrap();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.label(0), Some("entry"));
        let back = Graph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);

        let d = Graph::parse("digraph G { 0 -> 1 -> 2; 3; }").unwrap();
        assert_eq!(d.vertex_count(), 4);
        assert!(d.has_edge(0, 1) && d.has_edge(1, 2));
        assert!(Graph::parse("graph { 0 -- 1 }").is_err());
        assert!(Graph::parse("digraph { a -> b }").is_err());
    }
}
