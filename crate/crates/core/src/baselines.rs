//! Comparison planners: lawnmower sweep, greedy hill-climb on the belief, and
//! single-action POMCP.

use rand::Rng;

use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::grid::{Cell, MapGeometry};
use crate::planner::{fallback_action, PlanStats, PlannerConfig, RootInfo, TreeSearch};
use crate::pomdp::{Action, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawnmowerPhase {
    Transit,
    Sweeping,
}

/// Progress through a boustrophedon sweep of the non-zero belief region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LawnmowerState {
    pub phase: LawnmowerPhase,
    pub sweep: Vec<Cell>,
    pub cursor: usize,
}

impl Default for LawnmowerState {
    fn default() -> Self {
        Self::new()
    }
}

impl LawnmowerState {
    pub fn new() -> Self {
        LawnmowerState { phase: LawnmowerPhase::Transit, sweep: Vec::new(), cursor: 0 }
    }
}

/// Bounding box `(i_min, j_min, i_max, j_max)` of the non-zero cells.
fn support_bounds(belief: &BeliefMap) -> Option<(usize, usize, usize, usize)> {
    let n = belief.grid_n();
    let mut bounds: Option<(usize, usize, usize, usize)> = None;
    for (k, &p) in belief.probs().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let (i, j) = (k % n, k / n);
        bounds = Some(match bounds {
            None => (i, j, i, j),
            Some((a, b, c, d)) => (a.min(i), b.min(j), c.max(i), d.max(j)),
        });
    }
    bounds
}

/// Boustrophedon order over a rectangle: rows run along `x`, starting at the
/// corner closest to `from` and stepping row by row towards the far side.
pub fn boustrophedon(bounds: (usize, usize, usize, usize), from: Cell) -> Vec<Cell> {
    let (i0, j0, i1, j1) = bounds;
    let corners = [(i0, j0), (i1, j0), (i0, j1), (i1, j1)];
    let d2 = |(i, j): (usize, usize)| {
        let di = i as f64 - from.i as f64;
        let dj = j as f64 - from.j as f64;
        di * di + dj * dj
    };
    let (ci, cj) = corners.into_iter().fold(corners[0], |best, c| if d2(c) < d2(best) { c } else { best });

    let rows: Vec<usize> = if cj == j0 { (j0..=j1).collect() } else { (j0..=j1).rev().collect() };
    let mut eastward = ci == i0;
    let mut out = Vec::with_capacity((i1 - i0 + 1) * (j1 - j0 + 1));
    for j in rows {
        if eastward {
            out.extend((i0..=i1).map(|i| Cell::new(i, j)));
        } else {
            out.extend((i0..=i1).rev().map(|i| Cell::new(i, j)));
        }
        eastward = !eastward;
    }
    out
}

fn nearest_nonzero(belief: &BeliefMap, geom: &MapGeometry, from: Cell, enterable: &impl Fn(Cell) -> bool) -> Option<Cell> {
    let mut best: Option<(f64, Cell)> = None;
    for c in geom.cells() {
        if belief.prob(c) <= 0.0 || c == from || !enterable(c) {
            continue;
        }
        let d = (c.i as f64 - from.i as f64).hypot(c.j as f64 - from.j as f64);
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    best.map(|(_, c)| c)
}

/// Next lawnmower waypoint cell.
///
/// In transit the agent heads for the nearest non-zero cell (skipped if it
/// already stands on one); then it sweeps the bounding rectangle of the
/// non-zero region, skipping cells it cannot enter. When the sweep runs out
/// a new one is planned from the current belief.
pub fn lawnmower_next(
    state: &mut LawnmowerState,
    agent: Cell,
    belief: &BeliefMap,
    geom: &MapGeometry,
    enterable: impl Fn(Cell) -> bool,
) -> Result<Cell> {
    let bounds = support_bounds(belief).ok_or_else(|| Error::domain("belief has no non-zero cell to sweep"))?;
    for _ in 0..2 {
        if state.phase == LawnmowerPhase::Transit {
            state.phase = LawnmowerPhase::Sweeping;
            state.cursor = 0;
            if belief.prob(agent) > 0.0 {
                state.sweep = boustrophedon(bounds, agent);
            } else {
                let target = nearest_nonzero(belief, geom, agent, &enterable)
                    .ok_or_else(|| Error::domain("no enterable non-zero belief cell"))?;
                state.sweep = boustrophedon(bounds, target);
                return Ok(target);
            }
        }
        while state.cursor < state.sweep.len() {
            let c = state.sweep[state.cursor];
            state.cursor += 1;
            if c != agent && enterable(c) {
                return Ok(c);
            }
        }
        state.phase = LawnmowerPhase::Transit;
    }
    Err(Error::domain("lawnmower sweep has no enterable cell"))
}

/// Enterable neighbour with the highest belief; ties go to the first in
/// West, South, East, North order.
pub fn greedy_next(agent: Cell, belief: &BeliefMap, geom: &MapGeometry, enterable: impl Fn(Cell) -> bool) -> Result<Cell> {
    let mut best: Option<(f64, Cell)> = None;
    for a in Action::ALL {
        let Some(c) = a.apply(geom, agent).filter(|&c| enterable(c)) else { continue };
        let p = belief.prob(c);
        if best.is_none_or(|(bp, _)| p > bp) {
            best = Some((p, c));
        }
    }
    best.map(|(_, c)| c).ok_or(Error::BoxedIn(agent))
}

/// POMCP without shrinking: the same tree as the shrinking planner, but only
/// the root's best action is returned.
pub fn vanilla_pomcp_plan<R: Rng + ?Sized>(
    world: &World,
    root: &RootInfo,
    cfg: &PlannerConfig,
    rng: &mut R,
) -> Result<(Action, PlanStats)> {
    let (tree, stats) = TreeSearch::new(world, cfg)?.build(root, rng, None)?;
    let action = match tree.root().best_edge() {
        Some(k) => tree.root().edges[k].action,
        None => fallback_action(world, &tree)?,
    };
    Ok((action, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ObstacleMap;
    use crate::planner::plan;
    use crate::pomdp::RewardParams;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom(n: usize) -> MapGeometry {
        MapGeometry::new(20.0 * n as f64, n).unwrap()
    }

    fn block_belief(g: &MapGeometry, cells: &[Cell]) -> BeliefMap {
        let mut w = vec![0.0; g.cell_count()];
        for &c in cells {
            w[g.index(c)] = 1.0;
        }
        BeliefMap::from_weights(g, w).unwrap()
    }

    fn step_dir(a: Cell, b: Cell) -> char {
        match (b.i as i64 - a.i as i64, b.j as i64 - a.j as i64) {
            (1, 0) => 'E',
            (-1, 0) => 'W',
            (0, 1) => 'N',
            (0, -1) => 'S',
            d => panic!("not a unit step: {d:?}"),
        }
    }

    #[test]
    fn lawnmower_transits_to_nearest_nonzero() {
        let g = geom(10);
        let b = block_belief(&g, &[Cell::new(7, 7), Cell::new(3, 6), Cell::new(9, 0)]);
        let mut st = LawnmowerState::new();
        let c = lawnmower_next(&mut st, Cell::new(1, 1), &b, &g, |_| true).unwrap();
        assert_eq!(c, Cell::new(3, 6));
        assert_eq!(st.phase, LawnmowerPhase::Sweeping);
    }

    #[test]
    fn lawnmower_sweeps_block_from_nw_corner() {
        let g = geom(10);
        let block: Vec<Cell> = (2..5).flat_map(|i| (6..8).map(move |j| Cell::new(i, j))).collect();
        let b = block_belief(&g, &block);
        let mut st = LawnmowerState::new();
        // agent north-west of the block, transit lands on the NW corner (2, 7)
        let mut cur = lawnmower_next(&mut st, Cell::new(0, 9), &b, &g, |_| true).unwrap();
        assert_eq!(cur, Cell::new(2, 7));
        let mut dirs = String::new();
        for _ in 0..5 {
            let next = lawnmower_next(&mut st, cur, &b, &g, |_| true).unwrap();
            dirs.push(step_dir(cur, next));
            cur = next;
        }
        assert_eq!(dirs, "EESWW");
    }

    #[test]
    fn lawnmower_covers_uniform_map_once() {
        let g = geom(6);
        let b = BeliefMap::uniform(&g);
        let mut st = LawnmowerState::new();
        let mut cur = Cell::new(0, 0);
        let mut seen = vec![cur];
        for _ in 0..g.cell_count() - 1 {
            cur = lawnmower_next(&mut st, cur, &b, &g, |_| true).unwrap();
            seen.push(cur);
        }
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), g.cell_count());
        for w in seen.windows(2) {
            assert_eq!(w[0].manhattan(w[1]), 1);
        }
    }

    #[test]
    fn lawnmower_skips_blocked_cells() {
        let g = geom(4);
        let b = BeliefMap::uniform(&g);
        let blocked = Cell::new(1, 0);
        let mut st = LawnmowerState::new();
        let mut cur = Cell::new(0, 0);
        for _ in 0..g.cell_count() - 2 {
            cur = lawnmower_next(&mut st, cur, &b, &g, |c| c != blocked).unwrap();
            assert_ne!(cur, blocked);
        }
    }

    #[test]
    fn lawnmower_needs_mass() {
        let g = geom(4);
        let b = BeliefMap::uniform(&g).restricted(|_| false);
        assert!(lawnmower_next(&mut LawnmowerState::new(), Cell::new(0, 0), &b, &g, |_| true).is_err());
    }

    #[test]
    fn greedy_picks_best_neighbor() {
        let g = geom(5);
        let mut w = vec![0.0; 25];
        w[g.index(Cell::new(1, 2))] = 0.1; // W
        w[g.index(Cell::new(2, 1))] = 0.3; // S
        w[g.index(Cell::new(3, 2))] = 0.2; // E
        w[g.index(Cell::new(0, 0))] = 0.4;
        let b = BeliefMap::from_weights(&g, w).unwrap();
        assert_eq!(greedy_next(Cell::new(2, 2), &b, &g, |_| true).unwrap(), Cell::new(2, 1));
    }

    #[test]
    fn greedy_ties_go_west() {
        let g = geom(5);
        let b = block_belief(&g, &[Cell::new(4, 4)]);
        assert_eq!(greedy_next(Cell::new(2, 2), &b, &g, |_| true).unwrap(), Cell::new(1, 2));
    }

    #[test]
    fn greedy_climbs_towards_peak() {
        let g = geom(10);
        let peak = crate::belief::Peak { center: Cell::new(6, 3), spread: 2.0, weight: 1.0 };
        let b = crate::belief::make_peaks(&[peak], &g).unwrap();
        let mut cur = Cell::new(2, 3);
        for expected in 3..=6 {
            cur = greedy_next(cur, &b, &g, |_| true).unwrap();
            assert_eq!(cur, Cell::new(expected, 3));
        }
    }

    #[test]
    fn greedy_boxed_in() {
        let g = geom(3);
        let b = BeliefMap::uniform(&g);
        assert!(matches!(greedy_next(Cell::new(1, 1), &b, &g, |_| false), Err(Error::BoxedIn(_))));
    }

    #[test]
    fn vanilla_matches_first_shrinking_action() {
        let g = geom(20);
        let omap = ObstacleMap::empty(&g, 1.0).unwrap();
        let peak = crate::belief::Peak { center: Cell::new(14, 12), spread: 2.0, weight: 1.0 };
        let belief = crate::belief::make_peaks(&[peak], &g).unwrap();
        let world = World::from_map(&g, &omap, &[], 10.0, RewardParams::new(10.0, belief).unwrap()).unwrap();
        let root = RootInfo { agent_pos: g.center(Cell::new(3, 4)), targets_remaining: 1 };
        let cfg = PlannerConfig::default();
        let (a, vstats) = vanilla_pomcp_plan(&world, &root, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let shrink = plan(&world, &root, &cfg, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, shrink.actions[0]);
        assert_eq!(vstats.root_edges, shrink.stats.root_edges);
        assert_eq!(vstats.root_visits, 3000);
    }
}
