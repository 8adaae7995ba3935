//! Shrinking POMCP: grow a belief tree under an iteration/time budget, then
//! read off a whole action sequence that runs until the agent would enter a
//! non-sparse cell.

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::grid::FinePosition;
use crate::pomdp::{Action, SimState, World};
use crate::rollout::{rollout_value, RolloutConfig};
use crate::tree::{BeliefNode, BeliefTree, NodeId};

/// Relative slack on the default sparsity threshold so cells sitting exactly
/// at the uniform level stay sparse despite renormalization round-off.
const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub max_iterations: usize,
    /// Wall-clock budget per invocation; `None` runs on iterations alone.
    pub max_time_ms: Option<u64>,
    /// Cap on the length of the extracted action sequence.
    pub max_level: usize,
    /// Sparsity threshold `P_eps`; `None` uses [`default_sparsity_threshold`].
    pub p_epsilon: Option<f64>,
    pub gamma: f64,
    pub c_uct: f64,
    /// Depth beyond which a simulation returns zero.
    pub max_depth: usize,
    pub alpha: f64,
    pub rollout: RolloutConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            max_iterations: 3000,
            max_time_ms: None,
            max_level: 5,
            p_epsilon: None,
            gamma: 0.995,
            c_uct: std::f64::consts::SQRT_2,
            max_depth: 50,
            alpha: 0.0,
            rollout: RolloutConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::config("max_iterations must be >= 1"));
        }
        if self.max_level == 0 {
            return Err(Error::config("max_level must be >= 1"));
        }
        if let Some(p) = self.p_epsilon {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("p_epsilon must lie in [0, 1], got {p}")));
            }
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.c_uct.is_finite() && self.c_uct >= 0.0) {
            return Err(Error::config(format!("c_uct must be >= 0, got {}", self.c_uct)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        self.rollout.validate()
    }

    pub fn threshold_for(&self, belief: &BeliefMap) -> f64 {
        self.p_epsilon.unwrap_or_else(|| default_sparsity_threshold(belief))
    }
}

/// The probability each cell would carry if the belief's mass were spread
/// uniformly over its current support. For a fresh uniform belief this is
/// `1 / N^2`; a uniform belief stays everywhere-sparse after visited cells
/// are zeroed and the rest renormalized.
pub fn default_sparsity_threshold(belief: &BeliefMap) -> f64 {
    let support = belief.support_size().max(1);
    (1.0 / support as f64) * (1.0 + THRESHOLD_SLACK)
}

/// A cell is non-sparse when its probability strictly exceeds `p_epsilon`.
pub fn is_non_sparse(node: &BeliefNode, p_epsilon: f64) -> bool {
    node.p_here > p_epsilon
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeSummary {
    pub action: Action,
    pub visits: u32,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStats {
    pub iterations: usize,
    pub elapsed: Duration,
    pub root_visits: u32,
    pub root_edges: Vec<EdgeSummary>,
    pub tree_nodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub actions: Vec<Action>,
    pub stats: PlanStats,
}

/// One `UpdateStats` call: the return `q` backed up into `(node, action)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Backup {
    pub node: NodeId,
    pub action: Action,
    pub q: f64,
}

/// Every backup performed during tree construction, one entry per simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationLog {
    pub simulations: Vec<Vec<Backup>>,
}

/// Where the real agent stands when the planner is triggered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootInfo {
    pub agent_pos: FinePosition,
    pub targets_remaining: usize,
}

/// Grows the belief tree. Shared by the shrinking planner and the vanilla
/// single-action baseline.
pub struct TreeSearch<'a> {
    world: &'a World,
    cfg: &'a PlannerConfig,
}

impl<'a> TreeSearch<'a> {
    pub fn new(world: &'a World, cfg: &'a PlannerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(TreeSearch { world, cfg })
    }

    fn root_state(&self, root: &RootInfo) -> Result<SimState> {
        SimState::new(self.world.geometry(), root.agent_pos, Vec::new())
    }

    /// Runs simulations from fresh root samples until a budget trips.
    pub fn build<R: Rng + ?Sized>(
        &self,
        root: &RootInfo,
        rng: &mut R,
        mut log: Option<&mut SimulationLog>,
    ) -> Result<(BeliefTree, PlanStats)> {
        let base = self.root_state(root)?;
        let cell = base.agent_cell;
        if self.world.legal_actions(cell).next().is_none() {
            return Err(Error::BoxedIn(cell));
        }
        let mut tree = BeliefTree::new(base.clone(), self.world.belief());
        let start = Instant::now();
        let deadline = self.cfg.max_time_ms.map(Duration::from_millis);
        let mut iterations = 0;
        while iterations < self.cfg.max_iterations {
            if let Some(limit) = deadline {
                if start.elapsed() >= limit {
                    break;
                }
            }
            let mut s = base.clone();
            for _ in 0..root.targets_remaining {
                if let Some(t) = self.world.sample_target(rng) {
                    s.target_cells.push(t);
                    s.found.push(false);
                }
            }
            let backups = self.simulate(&mut tree, s, rng)?;
            if let Some(log) = log.as_deref_mut() {
                log.simulations.push(backups);
            }
            iterations += 1;
        }
        let r = tree.root();
        let stats = PlanStats {
            iterations,
            elapsed: start.elapsed(),
            root_visits: r.visits,
            root_edges: r.edges.iter().map(|e| EdgeSummary { action: e.action, visits: e.visits, q: e.q }).collect(),
            tree_nodes: tree.len(),
        };
        Ok((tree, stats))
    }

    /// One pass of selection, expansion, rollout and backup from the root.
    /// Returns the backups it performed, root first.
    pub fn simulate<R: Rng + ?Sized>(&self, tree: &mut BeliefTree, mut s: SimState, rng: &mut R) -> Result<Vec<Backup>> {
        let world = self.world;
        let mut path: Vec<(NodeId, usize)> = Vec::new();
        let mut rewards: Vec<f64> = Vec::new();
        let mut node = NodeId::ROOT;
        let mut depth = 0usize;

        let leaf_value = loop {
            if s.is_terminal() || depth > self.cfg.max_depth {
                break 0.0;
            }
            if tree.node(node).is_leaf() {
                let cell = tree.node(node).cell;
                tree.expand(node, world.legal_actions(cell))?;
                break rollout_value(&s, world, &self.cfg.rollout, self.cfg.gamma, rng);
            }
            if tree.node(node).edges.is_empty() {
                tree.node_mut(node).visits += 1;
                break 0.0;
            }
            let k = tree.uct_select(node, self.cfg.c_uct)?;
            let action = tree.node(node).edges[k].action;
            let (obs, r) = world.step_mut(&mut s, action)?;
            let child = tree.child_for(node, k, obs, &s, world.belief());
            path.push((node, k));
            rewards.push(r);
            node = child;
            depth += 1;
        };

        let mut returns = vec![0.0; path.len()];
        let mut q = leaf_value;
        for d in (0..path.len()).rev() {
            q = rewards[d] + self.cfg.gamma * q;
            returns[d] = q;
        }
        tree.update_stats(&path, &returns);
        Ok(path
            .iter()
            .zip(&returns)
            .map(|(&(id, k), &q)| Backup { node: id, action: tree.node(id).edges[k].action, q })
            .collect())
    }
}

/// Greedy descent from the root by best Q, following the most visited
/// observation child, until the next node is non-sparse, `max_level` actions
/// are collected, or the current node has no visited edge. At least one
/// action is always returned.
pub fn get_action_sequence(tree: &BeliefTree, max_level: usize, p_epsilon: f64) -> Result<Vec<Action>> {
    let mut actions = Vec::new();
    let mut id = NodeId::ROOT;
    while actions.len() < max_level.max(1) {
        let node = tree.node(id);
        let Some(k) = node.best_edge() else { break };
        let edge = &node.edges[k];
        actions.push(edge.action);
        let Some(child) = edge.most_visited_child(tree) else { break };
        if is_non_sparse(tree.node(child), p_epsilon) {
            break;
        }
        id = child;
    }
    if actions.is_empty() {
        return Err(Error::domain("root has no visited action edge"));
    }
    Ok(actions)
}

/// Builds a tree for the current decision epoch and extracts its action
/// sequence.
pub fn plan<R: Rng + ?Sized>(world: &World, root: &RootInfo, cfg: &PlannerConfig, rng: &mut R) -> Result<PlanResult> {
    let (tree, stats) = TreeSearch::new(world, cfg)?.build(root, rng, None)?;
    let actions = match get_action_sequence(&tree, cfg.max_level, cfg.threshold_for(world.belief())) {
        Ok(actions) => actions,
        // budget too small to back anything up: fall back to the first legal move
        Err(_) => vec![fallback_action(world, &tree)?],
    };
    Ok(PlanResult { actions, stats })
}

pub(crate) fn fallback_action(world: &World, tree: &BeliefTree) -> Result<Action> {
    let cell = tree.root().cell;
    world.legal_actions(cell).next().ok_or(Error::BoxedIn(cell))
}
