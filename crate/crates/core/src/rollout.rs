//! Leaf evaluation: pick a destination cell, sample a concrete point in it,
//! measure the A* distance there on the fine raster and discount the payoff by
//! that distance.

use std::cell::RefCell;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Airspace, Cell, FinePosition, MapGeometry, NoFlyZone, ObstacleMap};
use crate::pomdp::{SimState, World};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RolloutConfig {
    /// Candidate points drawn per destination cell.
    pub samples: usize,
    /// Metres per discount step; `None` uses the grid cell size.
    pub step_scale_m: Option<f64>,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig { samples: 16, step_scale_m: None }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::config("rollout needs at least one sample per cell"));
        }
        if let Some(s) = self.step_scale_m {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::config(format!("rollout step scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

/// A* on a 4-connected unit-cost raster with the Manhattan heuristic.
///
/// With unit steps and a consistent heuristic, every successor has
/// `f' = f` or `f' = f + 2`, so the open list is just two stacks. Popping the
/// current stack LIFO favours the most recently reached (deepest) node among
/// equal `f`, which keeps the search tight on open ground. Scratch arrays are
/// stamped with a generation counter instead of being cleared per query.
#[derive(Debug, Default)]
pub struct AStar {
    generation: u32,
    seen: Vec<u32>,
    closed: Vec<u32>,
    g: Vec<u32>,
    parent: Vec<u32>,
    current: Vec<u32>,
    next: Vec<u32>,
}

impl AStar {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, cells: usize) {
        if self.seen.len() < cells {
            self.seen = vec![0; cells];
            self.closed = vec![0; cells];
            self.g = vec![0; cells];
            self.parent = vec![0; cells];
            self.generation = 0;
        }
        if self.generation == u32::MAX {
            self.seen.fill(0);
            self.closed.fill(0);
            self.generation = 0;
        }
        self.generation += 1;
        self.current.clear();
        self.next.clear();
    }

    /// Shortest path length in raster steps between raster indices, or `None`
    /// if the goal is unreachable or either endpoint is blocked.
    pub fn steps(&mut self, free: &[bool], width: usize, start: usize, goal: usize) -> Option<u32> {
        self.search(free, width, start, goal).map(|_| self.g[goal])
    }

    /// Shortest path as raster indices from `start` to `goal` inclusive.
    pub fn path(&mut self, free: &[bool], width: usize, start: usize, goal: usize) -> Option<Vec<usize>> {
        self.search(free, width, start, goal)?;
        let mut out = vec![goal];
        let mut k = goal;
        while k != start {
            k = self.parent[k] as usize;
            out.push(k);
        }
        out.reverse();
        Some(out)
    }

    fn search(&mut self, free: &[bool], width: usize, start: usize, goal: usize) -> Option<()> {
        let cells = free.len();
        if start >= cells || goal >= cells || !free[start] || !free[goal] {
            return None;
        }
        self.prepare(cells);
        let gen = self.generation;
        let (gx, gy) = (goal % width, goal / width);

        self.seen[start] = gen;
        self.g[start] = 0;
        self.current.push(start as u32);
        let height = cells / width;

        loop {
            let k = match self.current.pop() {
                Some(k) => k as usize,
                None => {
                    if self.next.is_empty() {
                        return None;
                    }
                    std::mem::swap(&mut self.current, &mut self.next);
                    continue;
                }
            };
            if self.closed[k] == gen {
                continue;
            }
            self.closed[k] = gen;
            if k == goal {
                return Some(());
            }
            let ng = self.g[k] + 1;
            let (x, y) = (k % width, k / width);
            // a step towards the goal keeps f, any other step raises it by 2
            let mut relax = |nb: usize, towards: bool| {
                if !free[nb] || self.closed[nb] == gen {
                    return;
                }
                if self.seen[nb] != gen || ng < self.g[nb] {
                    self.seen[nb] = gen;
                    self.g[nb] = ng;
                    self.parent[nb] = k as u32;
                    if towards {
                        self.current.push(nb as u32);
                    } else {
                        self.next.push(nb as u32);
                    }
                }
            };
            if x > 0 {
                relax(k - 1, x > gx);
            }
            if x + 1 < width {
                relax(k + 1, x < gx);
            }
            if y > 0 {
                relax(k - width, y > gy);
            }
            if y + 1 < height {
                relax(k + width, y < gy);
            }
        }
    }
}

thread_local! {
    static SCRATCH: RefCell<AStar> = RefCell::new(AStar::new());
}

/// Runs `f` with this thread's reusable A* scratch space.
pub fn with_astar<T>(f: impl FnOnce(&mut AStar) -> T) -> T {
    SCRATCH.with(|s| f(&mut s.borrow_mut()))
}

fn endpoint_index(air: &Airspace, pos: FinePosition, which: &str) -> Result<usize> {
    air.raster_index(pos)
        .filter(|&k| air.free_mask()[k])
        .ok_or_else(|| Error::domain(format!("{which} ({}, {}) is not a valid position", pos.x, pos.y)))
}

/// Shortest 4-connected path length in metres through the flyable mask.
/// `Ok(None)` when the endpoints are disconnected.
pub fn path_length_m(air: &Airspace, start: FinePosition, goal: FinePosition) -> Result<Option<f64>> {
    let s = endpoint_index(air, start, "start")?;
    let g = endpoint_index(air, goal, "goal")?;
    let steps = with_astar(|a| a.steps(air.free_mask(), air.width(), s, g));
    Ok(steps.map(|n| n as f64 * air.raster_m()))
}

/// Like [`path_length_m`] but starting from the map inputs directly.
pub fn astar_path_length(
    start: FinePosition,
    goal: FinePosition,
    omap: &ObstacleMap,
    zones: &[NoFlyZone],
    h: f64,
    geom: &MapGeometry,
) -> Result<Option<f64>> {
    path_length_m(&Airspace::new(geom, omap, zones, h), start, goal)
}

/// The raster path itself, both endpoints included.
pub fn shortest_path(air: &Airspace, start: FinePosition, goal: FinePosition) -> Result<Option<Vec<FinePosition>>> {
    let s = endpoint_index(air, start, "start")?;
    let g = endpoint_index(air, goal, "goal")?;
    let path = with_astar(|a| a.path(air.free_mask(), air.width(), s, g));
    Ok(path.map(|p| p.into_iter().map(|k| air.position_of(k)).collect()))
}

/// Draws `cfg.samples` raster points uniformly in `target`, keeps the valid
/// ones and returns the one closest to `current` (first drawn on ties).
pub fn sample_next_position<R: Rng + ?Sized>(
    current: FinePosition,
    target: Cell,
    cfg: &RolloutConfig,
    air: &Airspace,
    rng: &mut R,
) -> Option<FinePosition> {
    if !air.geometry().in_grid(target) || air.valid_count(target) == 0 {
        return None;
    }
    let span = air.cell_span();
    let (x0, y0) = (target.i * span, target.j * span);
    let mut best: Option<(f64, FinePosition)> = None;
    for _ in 0..cfg.samples {
        let rx = x0 + rng.random_range(0..span);
        let ry = y0 + rng.random_range(0..span);
        if !air.is_free(rx, ry) {
            continue;
        }
        let p = air.position_of(ry * air.width() + rx);
        let d = p.planar_distance(&current);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, p));
        }
    }
    best.map(|(_, p)| p)
}

/// `f(L) = gamma^(L / scale) * payoff`, decreasing in the path length `L`.
pub fn discounted_value(gamma: f64, length_m: f64, scale_m: f64, payoff: f64) -> f64 {
    gamma.powf(length_m / scale_m) * payoff
}

/// Rollout towards a given destination cell. The payoff is one if an unfound
/// target sits there plus `alpha` times its belief; it is discounted by the
/// A* length to a sampled point in the cell. Zero when no valid point is drawn
/// or the point cannot be reached.
pub fn rollout_value_to<R: Rng + ?Sized>(
    s: &SimState,
    dest: Cell,
    world: &World,
    cfg: &RolloutConfig,
    gamma: f64,
    rng: &mut R,
) -> f64 {
    let air = world.airspace();
    let target_here = s.target_cells.iter().zip(&s.found).any(|(&t, &f)| !f && t == dest);
    let payoff = target_here as u8 as f64 + world.alpha() * world.belief().prob(dest);
    if payoff == 0.0 {
        return 0.0;
    }
    let Some(goal) = sample_next_position(s.agent_pos, dest, cfg, air, rng) else {
        return 0.0;
    };
    let Ok(Some(length)) = path_length_m(air, s.agent_pos, goal) else {
        return 0.0;
    };
    let scale = cfg.step_scale_m.unwrap_or_else(|| air.geometry().cell_size_m());
    discounted_value(gamma, length, scale, payoff)
}

/// Leaf value estimate: rollout towards the most promising cell the simulated
/// agent has not yet visited.
pub fn rollout_value<R: Rng + ?Sized>(s: &SimState, world: &World, cfg: &RolloutConfig, gamma: f64, rng: &mut R) -> f64 {
    match world.unvisited_destination(s) {
        Some(dest) => rollout_value_to(s, dest, world, cfg, gamma, rng),
        None => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::BeliefMap;
    use crate::grid::{Obstacle, Rect};
    use crate::pomdp::RewardParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn bfs(free: &[bool], width: usize, start: usize, goal: usize) -> Option<u32> {
        use std::collections::VecDeque;
        if !free[start] || !free[goal] {
            return None;
        }
        let mut dist = vec![u32::MAX; free.len()];
        dist[start] = 0;
        let mut q = VecDeque::from([start]);
        while let Some(k) = q.pop_front() {
            if k == goal {
                return Some(dist[k]);
            }
            let (x, y) = (k % width, k / width);
            let mut nbs = Vec::with_capacity(4);
            if x > 0 {
                nbs.push(k - 1);
            }
            if x + 1 < width {
                nbs.push(k + 1);
            }
            if y > 0 {
                nbs.push(k - width);
            }
            if y + 1 < free.len() / width {
                nbs.push(k + width);
            }
            for nb in nbs {
                if free[nb] && dist[nb] == u32::MAX {
                    dist[nb] = dist[k] + 1;
                    q.push_back(nb);
                }
            }
        }
        None
    }

    #[test]
    fn open_3x3_corner_to_corner() {
        let free = vec![true; 9];
        assert_eq!(AStar::new().steps(&free, 3, 0, 8), Some(4));
        assert_eq!(bfs(&free, 3, 0, 8), Some(4));
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut free = vec![true; 25];
        for k in [7, 11, 13, 17] {
            free[k] = false;
        }
        assert_eq!(AStar::new().steps(&free, 5, 0, 12), None);
    }

    #[test]
    fn path_is_contiguous_and_matches_length() {
        let width = 12;
        let mut free = vec![true; width * width];
        for y in 0..10 {
            free[y * width + 6] = false;
        }
        let mut a = AStar::new();
        let path = a.path(&free, width, 0, 11).unwrap();
        assert_eq!(path.len() as u32 - 1, a.steps(&free, width, 0, 11).unwrap());
        assert_eq!(path.len() as u32 - 1, bfs(&free, width, 0, 11).unwrap());
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let d = (a % width).abs_diff(b % width) + (a / width).abs_diff(b / width);
            assert_eq!(d, 1);
            assert!(free[b]);
        }
    }

    #[test]
    fn random_maps_agree_with_bfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut astar = AStar::new();
        for _ in 0..200 {
            let width = 16;
            let free: Vec<bool> = (0..width * width).map(|_| rng.random::<f64>() > 0.3).collect();
            let s = rng.random_range(0..free.len());
            let g = rng.random_range(0..free.len());
            assert_eq!(astar.steps(&free, width, s, g), bfs(&free, width, s, g));
        }
    }

    fn open_world(alpha: f64, belief: BeliefMap) -> World {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        World::from_map(&geom, &omap, &[], 10.0, RewardParams::new(alpha, belief).unwrap()).unwrap()
    }

    #[test]
    fn zero_length_rollout_pays_full_token() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let mut w = vec![0.0; 400];
        w[geom.index(Cell::new(5, 5))] = 0.3;
        w[0] = 0.7;
        let world = open_world(10.0, BeliefMap::from_weights(&geom, w).unwrap());
        let s = SimState::new(&geom, world.airspace().anchor(Cell::new(5, 5)).unwrap(), vec![Cell::new(9, 9)]).unwrap();
        let cfg = RolloutConfig { samples: 400_000, step_scale_m: None };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // with enough samples the anchor point itself is drawn, so L = 0
        let v = rollout_value_to(&s, Cell::new(5, 5), &world, &cfg, 0.9, &mut rng);
        assert!((v - 3.0).abs() < 1e-12, "{v}");
    }

    #[test]
    fn two_cell_rollout_discounts_target() {
        // gamma^(40 m / 20 m) * 1
        assert!((discounted_value(0.9, 40.0, 20.0, 1.0) - 0.81).abs() < 1e-12);
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let mut w = vec![1.0; 400];
        w[geom.index(Cell::new(7, 5))] = 0.0;
        let world = open_world(10.0, BeliefMap::from_weights(&geom, w).unwrap());
        // start at the west edge of (5, 5), goal sampled in (7, 5)
        let start = FinePosition::new(100.5, 110.5, 10.0);
        let s = SimState::new(&geom, start, vec![Cell::new(7, 5)]).unwrap();
        let cfg = RolloutConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = rollout_value_to(&s, Cell::new(7, 5), &world, &cfg, 0.9, &mut rng);
        let goal = sample_next_position(start, Cell::new(7, 5), &cfg, world.airspace(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let l = (goal.x - start.x).abs() + (goal.y - start.y).abs();
        assert!((v - 0.9f64.powf(l / 20.0)).abs() < 1e-12);
    }

    #[test]
    fn disconnected_destination_is_worth_nothing() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        // ring of tall buildings around the inside of cell (10, 10)
        let ring = [
            Rect::new(200.0, 200.0, 220.0, 201.0).unwrap(),
            Rect::new(200.0, 219.0, 220.0, 220.0).unwrap(),
            Rect::new(200.0, 200.0, 201.0, 220.0).unwrap(),
            Rect::new(219.0, 200.0, 220.0, 220.0).unwrap(),
        ];
        let obstacles: Vec<Obstacle> = ring.iter().map(|&rect| Obstacle { rect, height_m: 50.0 }).collect();
        let omap = ObstacleMap::from_obstacles(&geom, 1.0, &obstacles).unwrap();
        let mut w = vec![0.0; 400];
        w[geom.index(Cell::new(10, 10))] = 1.0;
        let belief = BeliefMap::from_weights(&geom, w).unwrap();
        let world = World::from_map(&geom, &omap, &[], 10.0, RewardParams::new(10.0, belief).unwrap()).unwrap();
        let s = SimState::new(&geom, FinePosition::new(50.5, 50.5, 10.0), vec![Cell::new(10, 10)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(rollout_value(&s, &world, &RolloutConfig::default(), 0.95, &mut rng), 0.0);
    }

    #[test]
    fn blocked_cell_samples_nothing() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        let zone = NoFlyZone::covering_cell(&geom, Cell::new(3, 3));
        let air = Airspace::new(&geom, &omap, &[zone], 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cur = FinePosition::new(10.0, 10.0, 10.0);
        assert_eq!(sample_next_position(cur, Cell::new(3, 3), &RolloutConfig::default(), &air, &mut rng), None);
    }

    #[test]
    fn sampled_point_is_closest_of_draws_and_reproducible() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        let air = Airspace::new(&geom, &omap, &[], 10.0);
        let cfg = RolloutConfig { samples: 16, step_scale_m: None };
        let cur = FinePosition::new(80.5, 90.5, 10.0);
        let target = Cell::new(4, 4);

        let a = sample_next_position(cur, target, &cfg, &air, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        let b = sample_next_position(cur, target, &cfg, &air, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
        assert_eq!(a.x.to_bits(), b.x.to_bits());
        assert_eq!(a.y.to_bits(), b.y.to_bits());

        // replay the draws independently
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draws: Vec<FinePosition> = (0..16)
            .map(|_| {
                let rx = 80 + rng.random_range(0..20usize);
                let ry = 80 + rng.random_range(0..20usize);
                FinePosition::new(rx as f64 + 0.5, ry as f64 + 0.5, 10.0)
            })
            .collect();
        let best = draws.iter().map(|p| p.planar_distance(&cur)).fold(f64::INFINITY, f64::min);
        assert_eq!(a.planar_distance(&cur), best);
        assert!(draws.contains(&a));
    }

    #[test]
    fn invalid_endpoint_is_domain_error() {
        let geom = MapGeometry::new(400.0, 20).unwrap();
        let omap = ObstacleMap::empty(&geom, 1.0).unwrap();
        let zone = NoFlyZone::covering_cell(&geom, Cell::new(0, 0));
        let r = astar_path_length(
            FinePosition::new(5.5, 5.5, 10.0),
            FinePosition::new(100.5, 5.5, 10.0),
            &omap,
            &[zone],
            10.0,
            &geom,
        );
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
