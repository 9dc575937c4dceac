//! The DAG of merged search states.
//!
//! Each node is one surviving hypothesis (or a finished one); each arc is a
//! token with the combined score it received in the context of its source
//! node. A recombination redirects the incoming arc of every removed
//! hypothesis into the survivor's node, so the paths into that node are all
//! histories the survivor stands for. Arc scores always stay those of the
//! context that produced the arc; redirected arcs are flagged and carry the
//! distance between the removed and the surviving next-token distribution.

mod stats;
mod text;

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

pub use stats::{assemble_stats, big_log10, LatticeStats, STATS_CSV_HEADER};
pub use text::{deserialize, serialize, FORMAT_HEADER};

use crate::error::{Error, Result};
use crate::logmath::log_add_raw;
use crate::sequence::TokenSequence;

pub type NodeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeNode {
    pub id: NodeId,
    /// Prefix length of the hypothesis this node represents.
    pub step: usize,
    /// Last `k` tokens of the representative prefix (all tokens for `k = inf`).
    pub suffix: Vec<usize>,
    /// Log mass the search assigned to this node.
    pub mass: f64,
    pub is_final: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeArc {
    pub from: NodeId,
    pub to: NodeId,
    pub token: usize,
    pub score: f64,
    /// Redirected into a recombination survivor.
    pub merged: bool,
    /// Distance between the displaced and the surviving context's next-token distribution.
    pub displaced: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    nodes: Vec<LatticeNode>,
    arcs: Vec<LatticeArc>,
    root: NodeId,
}

impl Lattice {
    /// A lattice holding only the root node.
    pub fn with_root() -> Self {
        Lattice {
            nodes: vec![LatticeNode { id: 0, step: 0, suffix: Vec::new(), mass: 0.0, is_final: false }],
            arcs: Vec::new(),
            root: 0,
        }
    }

    /// Builds and validates a lattice from raw parts.
    pub fn from_parts(nodes: Vec<LatticeNode>, arcs: Vec<LatticeArc>, root: NodeId) -> Result<Self> {
        let l = Lattice { nodes, arcs, root };
        l.validate()?;
        Ok(l)
    }

    pub fn push_node(&mut self, step: usize, suffix: Vec<usize>, mass: f64, is_final: bool) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(LatticeNode { id, step, suffix, mass, is_final });
        id
    }

    pub fn push_arc(
        &mut self,
        from: NodeId,
        to: NodeId,
        token: usize,
        score: f64,
        merged: bool,
        displaced: Option<f64>,
    ) {
        self.arcs.push(LatticeArc { from, to, token, score, merged, displaced });
    }

    pub(crate) fn set_final(&mut self, node: NodeId, is_final: bool) {
        self.nodes[node].is_final = is_final;
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn nodes(&self) -> &[LatticeNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[LatticeArc] {
        &self.arcs
    }

    pub fn final_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(|n| n.is_final).map(|n| n.id)
    }

    /// Outgoing arc indices per node.
    pub fn out_arcs(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (i, a) in self.arcs.iter().enumerate() {
            out[a.from].push(i);
        }
        out
    }

    /// Checks the structural invariants: dense ids, arcs between existing
    /// nodes advancing the step by one, no arcs leaving final nodes, every
    /// node reachable from the root, and no cycles.
    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::InvalidLattice("no nodes".into()));
        }
        if self.root >= self.nodes.len() {
            return Err(Error::InvalidLattice(format!("root {} does not exist", self.root)));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(Error::InvalidLattice(format!("node at position {i} has id {}", n.id)));
            }
        }
        for (i, a) in self.arcs.iter().enumerate() {
            if a.from >= self.nodes.len() || a.to >= self.nodes.len() {
                return Err(Error::InvalidLattice(format!("arc {i} references a missing node")));
            }
            if self.nodes[a.from].is_final {
                return Err(Error::InvalidLattice(format!("arc {i} leaves final node {}", a.from)));
            }
            if self.nodes[a.from].step + 1 != self.nodes[a.to].step {
                return Err(Error::InvalidLattice(format!("arc {i} does not advance the step by one")));
            }
            if a.score.is_nan() {
                return Err(Error::InvalidLattice(format!("arc {i} has a NaN score")));
            }
        }
        self.topological_order()?;
        let out = self.out_arcs();
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        seen[self.root] = true;
        while let Some(u) = stack.pop() {
            for &a in &out[u] {
                let v = self.arcs[a].to;
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        if let Some(u) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidLattice(format!("node {u} is unreachable from the root")));
        }
        Ok(())
    }

    /// Kahn's algorithm; fails on a cycle.
    pub fn topological_order(&self) -> Result<Vec<NodeId>> {
        let mut indegree = vec![0usize; self.nodes.len()];
        for a in &self.arcs {
            indegree[a.to] += 1;
        }
        let out = self.out_arcs();
        let mut queue: Vec<NodeId> = (0..self.nodes.len()).filter(|&n| indegree[n] == 0).collect();
        queue.reverse();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(u) = queue.pop() {
            order.push(u);
            for &a in &out[u] {
                let v = self.arcs[a].to;
                indegree[v] -= 1;
                if indegree[v] == 0 {
                    queue.push(v);
                }
            }
        }
        if order.len() != self.nodes.len() {
            return Err(Error::Cycle);
        }
        Ok(order)
    }

    /// Exact number of distinct root-to-final paths.
    pub fn count_paths(&self) -> Result<BigUint> {
        let order = self.topological_order()?;
        let out = self.out_arcs();
        let mut count = vec![BigUint::zero(); self.nodes.len()];
        count[self.root] = BigUint::one();
        for &u in &order {
            if count[u].is_zero() {
                continue;
            }
            let c = count[u].clone();
            for &a in &out[u] {
                count[self.arcs[a].to] += &c;
            }
        }
        Ok(self.final_nodes().fold(BigUint::zero(), |acc, f| acc + &count[f]))
    }

    /// Every root-to-final path with its summed arc score, ordered by token sequence.
    pub fn enumerate_paths(&self, limit: usize) -> Result<Vec<(TokenSequence, f64)>> {
        let count = self.count_paths()?;
        if count > BigUint::from(limit) {
            return Err(Error::EnumerationLimit { count: count.to_string(), limit });
        }
        let out = self.out_arcs();
        let mut paths = Vec::new();
        let mut stack: Vec<(NodeId, Vec<usize>, f64)> = vec![(self.root, Vec::new(), 0.0)];
        while let Some((u, tokens, score)) = stack.pop() {
            if self.nodes[u].is_final {
                paths.push((TokenSequence(tokens.clone()), score));
            }
            for &a in &out[u] {
                let arc = &self.arcs[a];
                let mut t = tokens.clone();
                t.push(arc.token);
                stack.push((arc.to, t, score + arc.score));
            }
        }
        paths.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(paths)
    }

    /// Log-semiring forward scores: total log mass of paths from the root into each node.
    pub fn forward(&self) -> Result<Vec<f64>> {
        let order = self.topological_order()?;
        let out = self.out_arcs();
        let mut alpha = vec![f64::NEG_INFINITY; self.nodes.len()];
        alpha[self.root] = 0.0;
        for &u in &order {
            if alpha[u] == f64::NEG_INFINITY {
                continue;
            }
            for &a in &out[u] {
                let arc = &self.arcs[a];
                alpha[arc.to] = log_add_raw(alpha[arc.to], alpha[u] + arc.score);
            }
        }
        Ok(alpha)
    }

    /// Log-semiring backward scores: total log mass from each node into any final node.
    pub fn backward(&self) -> Result<Vec<f64>> {
        let order = self.topological_order()?;
        let out = self.out_arcs();
        let mut beta = vec![f64::NEG_INFINITY; self.nodes.len()];
        for &u in order.iter().rev() {
            let mut b = if self.nodes[u].is_final { 0.0 } else { f64::NEG_INFINITY };
            for &a in &out[u] {
                let arc = &self.arcs[a];
                b = log_add_raw(b, arc.score + beta[arc.to]);
            }
            beta[u] = b;
        }
        Ok(beta)
    }

    /// Log-sum of all root-to-final path scores.
    pub fn total_mass(&self) -> Result<f64> {
        Ok(self.backward()?[self.root])
    }

    /// Arc indices of the path spelling `tokens`, if the lattice contains it.
    ///
    /// Out-arcs of a node carry distinct tokens, so the walk is deterministic.
    pub fn find_path(&self, tokens: &[usize]) -> Option<Vec<usize>> {
        let out = self.out_arcs();
        let mut u = self.root;
        let mut path = Vec::with_capacity(tokens.len());
        for &t in tokens {
            let a = *out[u].iter().find(|&&a| self.arcs[a].token == t)?;
            path.push(a);
            u = self.arcs[a].to;
        }
        self.nodes[u].is_final.then_some(path)
    }

    /// Token history whose model state a node uses: follow the un-merged incoming arcs.
    pub fn representative_prefix(&self, node: NodeId) -> Vec<usize> {
        let mut primary = vec![None; self.nodes.len()];
        for (i, a) in self.arcs.iter().enumerate() {
            if !a.merged {
                primary[a.to] = Some(i);
            }
        }
        let mut tokens = Vec::new();
        let mut u = node;
        while let Some(a) = primary[u] {
            tokens.push(self.arcs[a].token);
            u = self.arcs[a].from;
        }
        tokens.reverse();
        tokens
    }

    /// Representative prefixes of all nodes at once.
    pub fn representative_prefixes(&self) -> Result<Vec<Vec<usize>>> {
        let mut primary = vec![None; self.nodes.len()];
        for a in &self.arcs {
            if !a.merged {
                primary[a.to] = Some((a.from, a.token));
            }
        }
        let mut prefixes: Vec<Option<Vec<usize>>> = vec![None; self.nodes.len()];
        for u in self.topological_order()? {
            let p = match primary[u] {
                Some((from, token)) => {
                    let mut p = prefixes[from].clone().unwrap_or_default();
                    p.push(token);
                    p
                }
                None => Vec::new(),
            };
            prefixes[u] = Some(p);
        }
        Ok(prefixes.into_iter().map(Option::unwrap_or_default).collect())
    }
}

#[cfg(test)]
mod tests;
