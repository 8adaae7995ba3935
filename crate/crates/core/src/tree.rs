//! Arena-backed belief/action tree with UCT selection.
//!
//! Belief nodes own their outgoing action edges; each edge owns the belief
//! nodes reached through it, keyed by observation. Visit bookkeeping: a node's
//! count is bumped once when it is expanded and once per backup through it,
//! so an expanded internal node satisfies `N(b) = sum_a N(b, a) + 1`.

use std::fmt::Write as _;

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::grid::Cell;
use crate::pomdp::{Action, Observation, SimState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub const ROOT: NodeId = NodeId(0);

    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionEdge {
    pub action: Action,
    pub visits: u32,
    /// Running mean of the returns backed up through this edge.
    pub q: f64,
    pub children: Vec<(Observation, NodeId)>,
}

impl ActionEdge {
    fn new(action: Action) -> Self {
        ActionEdge { action, visits: 0, q: 0.0, children: Vec::new() }
    }

    /// Child with the most visits; the earliest created wins ties.
    pub fn most_visited_child(&self, tree: &BeliefTree) -> Option<NodeId> {
        let mut best: Option<(u32, NodeId)> = None;
        for &(_, id) in &self.children {
            let v = tree.node(id).visits;
            if best.is_none_or(|(bv, _)| v > bv) {
                best = Some((v, id));
            }
        }
        best.map(|(_, id)| id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefNode {
    pub visits: u32,
    pub edges: Vec<ActionEdge>,
    pub expanded: bool,
    /// State sample that created the node.
    pub rep_state: SimState,
    /// Root-belief probability of `cell`.
    pub p_here: f64,
    pub cell: Cell,
    pub depth: u32,
}

impl BeliefNode {
    pub fn is_leaf(&self) -> bool {
        !self.expanded
    }

    pub fn edge(&self, action: Action) -> Option<&ActionEdge> {
        self.edges.iter().find(|e| e.action == action)
    }

    /// Index of the visited edge with the highest Q (fixed action order on ties).
    pub fn best_edge(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, e) in self.edges.iter().enumerate() {
            if e.visits == 0 {
                continue;
            }
            if best.is_none_or(|b| e.q > self.edges[b].q) {
                best = Some(k);
            }
        }
        best
    }
}

/// UCT choice at `node`: the first unvisited edge if any, otherwise
/// `argmax Q + c sqrt(ln N(b) / N(b, a))`.
pub fn uct_select(node: &BeliefNode, c: f64) -> Result<Action> {
    uct_index(node, c).map(|k| node.edges[k].action)
}

fn uct_index(node: &BeliefNode, c: f64) -> Result<usize> {
    if node.edges.is_empty() {
        return Err(Error::domain("UCT selection on a node without action edges"));
    }
    if let Some(k) = node.edges.iter().position(|e| e.visits == 0) {
        return Ok(k);
    }
    let log_n = (node.visits.max(1) as f64).ln();
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (k, e) in node.edges.iter().enumerate() {
        let score = e.q + c * (log_n / e.visits as f64).sqrt();
        if score > best_score {
            best = k;
            best_score = score;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefTree {
    nodes: Vec<BeliefNode>,
}

impl BeliefTree {
    pub fn new(root_state: SimState, root_belief: &BeliefMap) -> Self {
        let cell = root_state.agent_cell;
        let root = BeliefNode {
            visits: 0,
            edges: Vec::new(),
            expanded: false,
            p_here: root_belief.prob(cell),
            rep_state: root_state,
            cell,
            depth: 0,
        };
        BeliefTree { nodes: vec![root] }
    }

    pub fn root(&self) -> &BeliefNode {
        &self.nodes[0]
    }

    pub fn node(&self, id: NodeId) -> &BeliefNode {
        &self.nodes[id.idx()]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut BeliefNode {
        &mut self.nodes[id.idx()]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn uct_select(&self, id: NodeId, c: f64) -> Result<usize> {
        uct_index(self.node(id), c)
    }

    /// Adds one zeroed edge per legal action. Counts as a visit of the node.
    pub fn expand(&mut self, id: NodeId, legal: impl IntoIterator<Item = Action>) -> Result<()> {
        let node = self.node_mut(id);
        if node.expanded {
            return Err(Error::domain("expanding a node that already has action edges"));
        }
        node.edges = legal.into_iter().map(ActionEdge::new).collect();
        node.expanded = true;
        node.visits += 1;
        Ok(())
    }

    /// Child of edge `edge` keyed by `obs`, created from `next` on first sight.
    pub fn child_for(
        &mut self,
        parent: NodeId,
        edge: usize,
        obs: Observation,
        next: &SimState,
        root_belief: &BeliefMap,
    ) -> NodeId {
        if let Some(&(_, id)) = self.node(parent).edges[edge].children.iter().find(|(o, _)| *o == obs) {
            return id;
        }
        let id = NodeId(self.nodes.len() as u32);
        let depth = self.node(parent).depth + 1;
        self.nodes.push(BeliefNode {
            visits: 0,
            edges: Vec::new(),
            expanded: false,
            rep_state: next.clone(),
            p_here: root_belief.prob(next.agent_cell),
            cell: next.agent_cell,
            depth,
        });
        self.node_mut(parent).edges[edge].children.push((obs, id));
        id
    }

    /// Backs up one return per `(node, edge)` on the path.
    pub fn update_stats(&mut self, path: &[(NodeId, usize)], returns: &[f64]) {
        debug_assert_eq!(path.len(), returns.len());
        for (&(id, k), &q) in path.iter().zip(returns) {
            let node = self.node_mut(id);
            node.visits += 1;
            let e = &mut node.edges[k];
            e.visits += 1;
            e.q += (q - e.q) / e.visits as f64;
        }
    }

    /// Text dump, one belief node per line indented by depth, preceded by the
    /// action edge that leads to it.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        self.dump_node(NodeId::ROOT, 0, &mut out);
        out
    }

    fn dump_node(&self, id: NodeId, indent: usize, out: &mut String) {
        let n = self.node(id);
        let _ = writeln!(
            out,
            "{:width$}b#{} N={} P={:.6} cell={}",
            "",
            id.0,
            n.visits,
            n.p_here,
            n.cell,
            width = indent * 2
        );
        for e in &n.edges {
            let _ = writeln!(
                out,
                "{:width$}a {} N={} Q={:.9}",
                "",
                e.action,
                e.visits,
                e.q,
                width = indent * 2 + 2
            );
            for &(obs, child) in &e.children {
                let _ = writeln!(
                    out,
                    "{:width$}o cell={} captured={}",
                    "",
                    obs.cell,
                    obs.captured,
                    width = indent * 2 + 4
                );
                self.dump_node(child, indent + 3, out);
            }
        }
    }
}
