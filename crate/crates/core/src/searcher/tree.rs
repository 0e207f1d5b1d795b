// SPDX-License-Identifier: Apache-2.0

use rand::Rng;

#[derive(Debug, Clone)]
struct Node {
    parent: Option<usize>,
    children: Vec<usize>,
    state: Option<usize>,
    // active leaves below (or at) this node
    active: usize,
}

/// Process tree of forks. Leaves carry states; `select` walks from the root
/// picking a child uniformly among those with an active leaf below it.
#[derive(Debug, Clone)]
pub struct ForkTree {
    nodes: Vec<Node>,
    leaf: Vec<Option<usize>>,
}

impl ForkTree {
    pub fn new(root_state: usize) -> Self {
        let mut t = ForkTree { nodes: vec![Node { parent: None, children: Vec::new(), state: Some(root_state), active: 0 }], leaf: Vec::new() };
        t.bind(root_state, 0);
        t
    }

    fn bind(&mut self, state: usize, node: usize) {
        if self.leaf.len() <= state {
            self.leaf.resize(state + 1, None);
        }
        self.leaf[state] = Some(node);
    }

    fn bump(&mut self, mut node: usize, up: bool) {
        loop {
            let n = &mut self.nodes[node];
            if up {
                n.active += 1;
            } else {
                n.active -= 1;
            }
            match n.parent {
                Some(p) => node = p,
                None => return,
            }
        }
    }

    /// Turns the leaf of `state` into an inner node with one new leaf per
    /// child state (which may include `state` itself). Children start
    /// inactive.
    pub fn fork(&mut self, state: usize, children: &[usize]) {
        let node = self.leaf[state].expect("state is in the tree");
        if self.nodes[node].active > 0 {
            self.bump(node, false);
        }
        self.nodes[node].state = None;
        for &c in children {
            let id = self.nodes.len();
            self.nodes.push(Node { parent: Some(node), children: Vec::new(), state: Some(c), active: 0 });
            self.nodes[node].children.push(id);
            self.bind(c, id);
        }
    }

    pub fn set_active(&mut self, state: usize, active: bool) {
        let node = self.leaf[state].expect("state is in the tree");
        let now = self.nodes[node].active > 0;
        if now != active {
            self.bump(node, active);
        }
    }

    pub fn active_count(&self) -> usize {
        self.nodes[0].active
    }

    pub fn select<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        if self.nodes[0].active == 0 {
            return None;
        }
        let mut node = 0;
        loop {
            let n = &self.nodes[node];
            if let Some(s) = n.state {
                return Some(s);
            }
            let live: Vec<usize> = n.children.iter().copied().filter(|&c| self.nodes[c].active > 0).collect();
            node = live[rng.gen_range(0..live.len())];
        }
    }

    /// Same walk over the leaves satisfying `eligible`, counted on the fly.
    pub fn select_where<R: Rng>(&self, rng: &mut R, eligible: &dyn Fn(usize) -> bool) -> Option<usize> {
        let mut count = vec![0usize; self.nodes.len()];
        for i in (0..self.nodes.len()).rev() {
            if let Some(s) = self.nodes[i].state {
                count[i] = usize::from(eligible(s));
            }
            if let Some(p) = self.nodes[i].parent {
                count[p] += count[i];
            }
        }
        if count[0] == 0 {
            return None;
        }
        let mut node = 0;
        loop {
            let n = &self.nodes[node];
            if let Some(s) = n.state {
                return Some(s);
            }
            let live: Vec<usize> = n.children.iter().copied().filter(|&c| count[c] > 0).collect();
            node = live[rng.gen_range(0..live.len())];
        }
    }
}
