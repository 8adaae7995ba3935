//! States, actions, observations and rewards of the search POMDP, and the
//! generative model the tree search samples from.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::grid::{valid_count, Airspace, Cell, FinePosition, MapGeometry, NoFlyZone, ObstacleMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    West,
    South,
    East,
    North,
}

impl Action {
    /// Fixed order used for every tie-break.
    pub const ALL: [Action; 4] = [Action::West, Action::South, Action::East, Action::North];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::West => (-1, 0),
            Action::South => (0, -1),
            Action::East => (1, 0),
            Action::North => (0, 1),
        }
    }

    pub fn apply(self, geom: &MapGeometry, cell: Cell) -> Option<Cell> {
        let (di, dj) = self.delta();
        geom.offset(cell, di, dj)
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> char {
        match self {
            Action::West => 'W',
            Action::South => 'S',
            Action::East => 'E',
            Action::North => 'N',
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Action::West => "West",
            Action::South => "South",
            Action::East => "East",
            Action::North => "North",
        };
        f.write_str(name)
    }
}

/// What the generative model reports after one move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Observation {
    pub cell: Cell,
    pub captured: u32,
}

/// Fixed-size bitset over grid cells.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellSet {
    n: usize,
    words: Vec<u64>,
}

impl CellSet {
    pub fn new(geom: &MapGeometry) -> Self {
        CellSet { n: geom.grid_n(), words: vec![0; geom.cell_count().div_ceil(64)] }
    }

    fn bit(&self, cell: Cell) -> (usize, u64) {
        let k = cell.j * self.n + cell.i;
        (k / 64, 1u64 << (k % 64))
    }

    pub fn contains(&self, cell: Cell) -> bool {
        let (w, m) = self.bit(cell);
        self.words[w] & m != 0
    }

    /// Returns `true` if the cell was not yet present.
    pub fn insert(&mut self, cell: Cell) -> bool {
        let (w, m) = self.bit(cell);
        let fresh = self.words[w] & m == 0;
        self.words[w] |= m;
        fresh
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &CellSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }
}

/// World state as seen inside the search tree.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub agent_cell: Cell,
    pub agent_pos: FinePosition,
    pub target_cells: Vec<Cell>,
    pub found: Vec<bool>,
    pub visited: CellSet,
}

impl SimState {
    pub fn new(geom: &MapGeometry, agent_pos: FinePosition, target_cells: Vec<Cell>) -> Result<Self> {
        let agent_cell = geom.cell_of(agent_pos)?;
        let mut visited = CellSet::new(geom);
        visited.insert(agent_cell);
        let found = vec![false; target_cells.len()];
        Ok(SimState { agent_cell, agent_pos, target_cells, found, visited })
    }

    pub fn is_terminal(&self) -> bool {
        self.found.iter().all(|&f| f)
    }

    pub fn found_count(&self) -> usize {
        self.found.iter().filter(|&&f| f).count()
    }

    /// Flags every unfound target in `cell` as found, returning how many.
    fn capture_at(&mut self, cell: Cell) -> u32 {
        let mut captured = 0;
        for (t, f) in self.target_cells.iter().zip(self.found.iter_mut()) {
            if !*f && *t == cell {
                *f = true;
                captured += 1;
            }
        }
        captured
    }
}

/// `R = R_target + alpha * R_token`, where the target term is binary no matter
/// how many targets were captured and the token term pays the cell's
/// normalized probability on first visit only.
pub fn reward_components(captured: u32, first_visit: bool, p_norm: f64, alpha: f64) -> f64 {
    let target = captured.min(1) as f64;
    let token = if first_visit { p_norm } else { 0.0 };
    target + alpha * token
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardParams {
    pub alpha: f64,
    /// Snapshot read for token values; frozen for one planner invocation.
    pub belief: BeliefMap,
}

impl RewardParams {
    pub fn new(alpha: f64, belief: BeliefMap) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::config(format!("reward alpha must be >= 0, got {alpha}")));
        }
        Ok(RewardParams { alpha, belief })
    }
}

/// Actions whose destination is on the grid and has at least one valid point
/// at altitude `h`.
pub fn legal_actions(
    s: &SimState,
    geom: &MapGeometry,
    omap: &ObstacleMap,
    zones: &[NoFlyZone],
    h: f64,
) -> Vec<Action> {
    Action::ALL
        .into_iter()
        .filter(|a| a.apply(geom, s.agent_cell).is_some_and(|d| valid_count(d, h, omap, zones, geom) > 0))
        .collect()
}

/// Everything the planner needs about the world during one invocation:
/// the flyable mask at the current altitude, the frozen reward snapshot and
/// derived lookup tables.
#[derive(Debug, Clone)]
pub struct World {
    airspace: Airspace,
    reward: RewardParams,
    cumulative: Vec<f64>,
    rollout_dest: Vec<Cell>,
}

impl World {
    pub fn new(airspace: Airspace, reward: RewardParams) -> Result<Self> {
        let geom = *airspace.geometry();
        if reward.belief.grid_n() != geom.grid_n() {
            return Err(Error::config("belief grid does not match map geometry"));
        }
        let mut acc = 0.0;
        let cumulative = reward
            .belief
            .probs()
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let rollout_dest = rollout_destinations(&geom, &reward.belief);
        Ok(World { airspace, reward, cumulative, rollout_dest })
    }

    /// Convenience constructor straight from map inputs.
    pub fn from_map(
        geom: &MapGeometry,
        omap: &ObstacleMap,
        zones: &[NoFlyZone],
        altitude: f64,
        reward: RewardParams,
    ) -> Result<Self> {
        Self::new(Airspace::new(geom, omap, zones, altitude), reward)
    }

    pub fn airspace(&self) -> &Airspace {
        &self.airspace
    }

    pub fn geometry(&self) -> &MapGeometry {
        self.airspace.geometry()
    }

    pub fn belief(&self) -> &BeliefMap {
        &self.reward.belief
    }

    pub fn alpha(&self) -> f64 {
        self.reward.alpha
    }

    pub fn is_enterable(&self, cell: Cell) -> bool {
        self.airspace.valid_count(cell) > 0
    }

    pub fn legal_actions(&self, cell: Cell) -> impl Iterator<Item = Action> + '_ {
        Action::ALL
            .into_iter()
            .filter(move |a| a.apply(self.geometry(), cell).is_some_and(|d| self.is_enterable(d)))
    }

    /// Rollout destination for an agent in `cell`: the highest-belief cell,
    /// ties resolved by Manhattan distance from `cell`, then row-major index.
    pub fn rollout_destination(&self, cell: Cell) -> Cell {
        self.rollout_dest[self.geometry().index(cell)]
    }

    /// Highest-belief cell the simulated agent has not visited yet, nearest
    /// first on ties. `None` once every cell with mass has been visited.
    pub fn unvisited_destination(&self, s: &SimState) -> Option<Cell> {
        let d = self.rollout_destination(s.agent_cell);
        if !s.visited.contains(d) && self.reward.belief.prob(d) > 0.0 {
            return Some(d);
        }
        let geom = self.geometry();
        let mut best: Option<(f64, usize, usize)> = None;
        for (k, &p) in self.reward.belief.probs().iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            let c = geom.cell_at(k);
            if s.visited.contains(c) {
                continue;
            }
            let dist = c.manhattan(s.agent_cell);
            let better = match best {
                None => true,
                Some((bp, bd, _)) => p > bp || (p == bp && dist < bd),
            };
            if better {
                best = Some((p, dist, k));
            }
        }
        best.map(|(_, _, k)| geom.cell_at(k))
    }

    /// Draws one target cell from the belief snapshot.
    pub fn sample_target<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<Cell> {
        let total = *self.cumulative.last()?;
        if total <= 0.0 {
            return None;
        }
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        // skip zero-mass cells that share a cumulative value with their predecessor
        let k = (k..self.cumulative.len()).find(|&k| self.reward.belief.probs()[k] > 0.0).unwrap_or(k);
        Some(self.geometry().cell_at(k))
    }

    /// Generative step in place. Movement is deterministic; blocked moves are
    /// rejected rather than penalized.
    pub fn step_mut(&self, s: &mut SimState, a: Action) -> Result<(Observation, f64)> {
        let dest = a
            .apply(self.geometry(), s.agent_cell)
            .filter(|&d| self.is_enterable(d))
            .ok_or_else(|| Error::domain(format!("action {a} is illegal from cell {}", s.agent_cell)))?;
        let captured = s.capture_at(dest);
        let first_visit = s.visited.insert(dest);
        let reward = reward_components(captured, first_visit, self.reward.belief.prob(dest), self.reward.alpha);
        s.agent_cell = dest;
        s.agent_pos = self.airspace.anchor(dest).expect("enterable cell has a valid point");
        Ok((Observation { cell: dest, captured }, reward))
    }

    /// `(s', o, r) ~ G(s, a)`.
    pub fn step(&self, s: &SimState, a: Action) -> Result<(SimState, Observation, f64)> {
        let mut next = s.clone();
        let (obs, r) = self.step_mut(&mut next, a)?;
        Ok((next, obs, r))
    }
}

/// Free-function form of [`World::step`].
pub fn step_generative(world: &World, s: &SimState, a: Action) -> Result<(SimState, Observation, f64)> {
    world.step(s, a)
}

fn rollout_destinations(geom: &MapGeometry, belief: &BeliefMap) -> Vec<Cell> {
    let max = belief.probs().iter().copied().fold(0.0, f64::max);
    let ties: Vec<Cell> = geom.cells().filter(|&c| belief.prob(c) == max).collect();
    geom.cells()
        .map(|from| {
            ties.iter()
                .copied()
                .min_by_key(|t| (t.manhattan(from), geom.index(*t)))
                .unwrap_or(from)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Rect;

    fn setup(alpha: f64, belief: BeliefMap) -> (MapGeometry, World) {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        let world = World::from_map(&geom, &omap, &[], 10.0, RewardParams::new(alpha, belief).unwrap()).unwrap();
        (geom, world)
    }

    fn state_at(geom: &MapGeometry, cell: Cell, targets: Vec<Cell>) -> SimState {
        SimState::new(geom, geom.center(cell), targets).unwrap()
    }

    #[test]
    fn legal_actions_respect_boundary_and_no_fly() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        let corner = state_at(&geom, Cell::new(0, 0), vec![]);
        assert_eq!(legal_actions(&corner, &geom, &omap, &[], 10.0), vec![Action::East, Action::North]);

        let inner = state_at(&geom, Cell::new(5, 5), vec![]);
        assert_eq!(legal_actions(&inner, &geom, &omap, &[], 10.0), Action::ALL.to_vec());

        let zone = NoFlyZone::new(Rect::of_cell(&geom, Cell::new(6, 5)), &geom).unwrap();
        assert_eq!(
            legal_actions(&inner, &geom, &omap, &[zone], 10.0),
            vec![Action::West, Action::South, Action::North]
        );
    }

    #[test]
    fn east_moves_one_column() {
        let (geom, world) = setup(0.0, BeliefMap::uniform(&MapGeometry::new(400.0, 20).unwrap()));
        let s = state_at(&geom, Cell::new(3, 4), vec![Cell::new(10, 10)]);
        let (next, obs, _) = world.step(&s, Action::East).unwrap();
        assert_eq!(next.agent_cell, Cell::new(4, 4));
        assert_eq!(obs, Observation { cell: Cell::new(4, 4), captured: 0 });
        assert_eq!(geom.cell_of(next.agent_pos).unwrap(), next.agent_cell);
    }

    #[test]
    fn first_visit_pays_alpha_times_token() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let mut w = vec![0.0; 400];
        w[geom.index(Cell::new(4, 4))] = 0.1;
        w[0] = 0.9;
        let (geom, world) = setup(10.0, BeliefMap::from_weights(&geom, w).unwrap());
        let s = state_at(&geom, Cell::new(3, 4), vec![Cell::new(10, 10)]);
        let (_, _, r) = world.step(&s, Action::East).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn capture_and_token_add_up() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let mut w = vec![0.0; 400];
        w[geom.index(Cell::new(4, 4))] = 0.05;
        w[0] = 0.95;
        let (geom, world) = setup(1.0, BeliefMap::from_weights(&geom, w).unwrap());
        let s = state_at(&geom, Cell::new(3, 4), vec![Cell::new(4, 4)]);
        let (next, obs, r) = world.step(&s, Action::East).unwrap();
        assert!((r - 1.05).abs() < 1e-12);
        assert_eq!(obs.captured, 1);
        assert!(next.found[0]);
        assert!(next.is_terminal());
    }

    #[test]
    fn revisit_pays_nothing() {
        let geom0 = MapGeometry::new(400.0, 20).unwrap();
        let (geom, world) = setup(10.0, BeliefMap::uniform(&geom0));
        let s = state_at(&geom, Cell::new(3, 4), vec![Cell::new(10, 10)]);
        let (s1, _, r1) = world.step(&s, Action::East).unwrap();
        assert!(r1 > 0.0);
        let (s2, _, _) = world.step(&s1, Action::West).unwrap();
        assert_eq!(s2.agent_cell, Cell::new(3, 4));
        let (_, _, r3) = world.step(&s2, Action::East).unwrap();
        assert_eq!(r3, 0.0);
    }

    #[test]
    fn illegal_step_is_domain_error() {
        let geom0 = MapGeometry::new(400.0, 20).unwrap();
        let (geom, world) = setup(0.0, BeliefMap::uniform(&geom0));
        let s = state_at(&geom, Cell::new(0, 0), vec![]);
        assert!(matches!(world.step(&s, Action::West), Err(Error::Domain(_))));
    }

    #[test]
    fn reward_component_examples() {
        assert_eq!(reward_components(0, false, 0.3, 10.0), 0.0);
        assert_eq!(reward_components(1, true, 0.0, 10.0), 1.0);
        assert!((reward_components(2, true, 0.2, 1.0) - 1.2).abs() < 1e-12);
    }

    #[test]
    fn multi_capture_flags_every_target() {
        let geom0 = MapGeometry::new(400.0, 20).unwrap();
        let (geom, world) = setup(0.0, BeliefMap::uniform(&geom0));
        let s = state_at(&geom, Cell::new(3, 4), vec![Cell::new(4, 4), Cell::new(4, 4), Cell::new(9, 9)]);
        let (next, obs, r) = world.step(&s, Action::East).unwrap();
        assert_eq!(obs.captured, 2);
        assert_eq!(r, 1.0);
        assert_eq!(next.found, vec![true, true, false]);
    }

    #[test]
    fn target_sampling_follows_support() {
        use rand::SeedableRng;
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let mut w = vec![0.0; 400];
        w[geom.index(Cell::new(2, 3))] = 1.0;
        w[geom.index(Cell::new(17, 11))] = 3.0;
        let (_, world) = setup(0.0, BeliefMap::from_weights(&geom, w).unwrap());
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut hits = [0usize; 2];
        for _ in 0..4000 {
            match world.sample_target(&mut rng).unwrap() {
                c if c == Cell::new(2, 3) => hits[0] += 1,
                c if c == Cell::new(17, 11) => hits[1] += 1,
                c => panic!("sampled zero-mass cell {c}"),
            }
        }
        let frac = hits[1] as f64 / 4000.0;
        assert!((frac - 0.75).abs() < 0.03, "{frac}");
    }

    #[test]
    fn rollout_destination_breaks_ties_by_distance() {
        let geom0 = MapGeometry::new(400.0, 20).unwrap();
        let (_, world) = setup(0.0, BeliefMap::uniform(&geom0));
        assert_eq!(world.rollout_destination(Cell::new(7, 7)), Cell::new(7, 7));

        // the occupied cell counts as visited, so the nearest fresh tie wins:
        // (7, 6) is first in row-major order among the four neighbours
        let s = SimState::new(world.geometry(), world.geometry().center(Cell::new(7, 7)), vec![]).unwrap();
        assert_eq!(world.unvisited_destination(&s), Some(Cell::new(7, 6)));
    }
}
