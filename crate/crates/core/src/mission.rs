//! Episode loop for the 2D simulator: decision epochs, waypoint conversion,
//! navigation, capture and belief updates.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{greedy_next, lawnmower_next, vanilla_pomcp_plan, LawnmowerState};
use crate::belief::BeliefMap;
use crate::error::{Error, Result};
use crate::grid::{Airspace, Cell, FinePosition, MapGeometry, NoFlyZone, ObstacleMap};
use crate::height::{adjust_height, HeightConfig, HeightDecision};
use crate::planner::{plan, PlannerConfig, RootInfo};
use crate::pomdp::{RewardParams, World};
use crate::rollout::with_astar;
use crate::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Shrinking,
    Vanilla,
    Lawnmower,
    Greedy,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [PlannerKind::Shrinking, PlannerKind::Vanilla, PlannerKind::Lawnmower, PlannerKind::Greedy];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Shrinking => "shrinking",
            PlannerKind::Vanilla => "vanilla",
            PlannerKind::Lawnmower => "lawnmower",
            PlannerKind::Greedy => "greedy",
        }
    }
}

impl fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlannerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown planner `{s}` (expected shrinking, vanilla, lawnmower or greedy)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_epochs: usize,
    pub planner: PlannerKind,
    pub seed: u64,
    pub cfg: PlannerConfig,
    pub hc: HeightConfig,
    /// Cruise speed used to turn path length into simulated travel time.
    pub speed_mps: f64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_epochs: 100,
            planner: PlannerKind::Shrinking,
            seed: 0,
            cfg: PlannerConfig::default(),
            hc: HeightConfig::default(),
            speed_mps: 5.0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be >= 1"));
        }
        if !(self.speed_mps.is_finite() && self.speed_mps > 0.0) {
            return Err(Error::config(format!("speed must be positive, got {}", self.speed_mps)));
        }
        self.cfg.validate()?;
        self.hc.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    AllFound,
    EpochCap,
    BoxedIn,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Termination::AllFound => "all_found",
            Termination::EpochCap => "epoch_cap",
            Termination::BoxedIn => "boxed_in",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortReason {
    /// Height adjustment found no altitude with enough clearance.
    NoFly,
    /// The navigator found no path, or the cell has no valid point.
    Unreachable,
}

/// What happened in one decision epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochEvent {
    pub epoch: usize,
    /// Cells the planner asked for, in order.
    pub plan: Vec<Cell>,
    pub waypoints: Vec<FinePosition>,
    pub arrivals: Vec<Cell>,
    /// Indices of targets captured this epoch.
    pub captures: Vec<usize>,
    /// Cells where height adjustment asked for a climb.
    pub raise_requests: Vec<(Cell, f64)>,
    pub aborted: Option<(Cell, AbortReason)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub epochs_used: usize,
    pub targets_found: usize,
    pub targets_total: usize,
    pub target_cells: Vec<Cell>,
    pub trajectory: Vec<FinePosition>,
    pub path_length_m: f64,
    pub travel_time_s: f64,
    pub wall_ms_per_epoch: Vec<f64>,
    pub terminated_by: Termination,
    pub events: Vec<EpochEvent>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NavOutcome {
    /// Raster path from the current position to the waypoint, both included.
    Arrived(Vec<FinePosition>),
    Unreachable,
}

/// Shortest 4-connected raster path at altitude `h`.
pub fn navigate(
    current: FinePosition,
    waypoint: FinePosition,
    omap: &ObstacleMap,
    zones: &[NoFlyZone],
    h: f64,
    geom: &MapGeometry,
) -> NavOutcome {
    navigate_in(&Airspace::new(geom, omap, zones, h), current, waypoint)
}

/// [`navigate`] against a prebuilt airspace.
pub fn navigate_in(air: &Airspace, current: FinePosition, waypoint: FinePosition) -> NavOutcome {
    let (Some(s), Some(g)) = (air.raster_index(current), air.raster_index(waypoint)) else {
        return NavOutcome::Unreachable;
    };
    if !air.free_mask()[s] || !air.free_mask()[g] {
        return NavOutcome::Unreachable;
    }
    match with_astar(|a| a.path(air.free_mask(), air.width(), s, g)) {
        Some(ks) => NavOutcome::Arrived(ks.into_iter().map(|k| air.position_of(k)).collect()),
        None => NavOutcome::Unreachable,
    }
}

/// Indices of unfound targets sitting in `agent`'s cell.
pub fn capture_check(agent: Cell, targets: &[Cell], found: &[bool]) -> Vec<usize> {
    targets.iter().zip(found).enumerate().filter(|(_, (&t, &f))| t == agent && !f).map(|(k, _)| k).collect()
}

struct Episode<'a> {
    sc_geom: MapGeometry,
    omap: &'a ObstacleMap,
    zones: Vec<NoFlyZone>,
    air: Airspace,
    belief: BeliefMap,
    targets: Vec<Cell>,
    found: Vec<bool>,
    pos: FinePosition,
    trajectory: Vec<FinePosition>,
    steps: usize,
}

impl Episode<'_> {
    fn remaining(&self) -> usize {
        self.found.iter().filter(|f| !**f).count()
    }

    fn cell(&self) -> Cell {
        self.sc_geom.cell_of(self.pos).expect("agent stays on the map")
    }

    fn arrive(&mut self, cell: Cell) -> Vec<usize> {
        let newly = capture_check(cell, &self.targets, &self.found);
        for &k in &newly {
            self.found[k] = true;
        }
        self.belief = self.belief.after_visit(cell, self.remaining() > 0);
        newly
    }

    fn forbid(&mut self, cell: Cell) {
        self.zones.push(NoFlyZone::covering_cell(&self.sc_geom, cell));
        self.air = Airspace::new(&self.sc_geom, self.omap, &self.zones, self.air.altitude());
        self.belief = self.belief.after_visit(cell, self.remaining() > 0);
    }
}

/// Runs one episode to completion.
///
/// Epoch 0 is the capture check at the start cell; every later epoch is one
/// planner invocation followed by flying its waypoints in order.
pub fn run_episode(sc: &Scenario, ec: &EpisodeConfig) -> Result<EpisodeResult> {
    ec.validate()?;
    let terrain = sc.build(ec.hc.h_init)?;
    let targets = sc.resolve_targets(&terrain, ec.seed)?;
    let geom = terrain.geom;
    let mut rng = ChaCha8Rng::seed_from_u64(ec.seed);

    let mut ep = Episode {
        sc_geom: geom,
        omap: &terrain.omap,
        air: Airspace::new(&geom, &terrain.omap, &terrain.zones, ec.hc.h_init),
        zones: terrain.zones.clone(),
        belief: terrain.belief.clone(),
        found: vec![false; targets.len()],
        targets,
        pos: terrain.start,
        trajectory: vec![terrain.start],
        steps: 0,
    };
    let start_cell = ep.cell();
    let captured = ep.arrive(start_cell);
    let mut events = vec![EpochEvent {
        epoch: 0,
        plan: vec![],
        waypoints: vec![],
        arrivals: vec![start_cell],
        captures: captured,
        raise_requests: vec![],
        aborted: None,
    }];
    let mut lawn = LawnmowerState::new();
    let mut wall = Vec::new();
    let mut epochs_used = 0;
    let mut terminated_by = Termination::EpochCap;

    while ep.remaining() > 0 {
        if epochs_used == ec.max_epochs {
            break;
        }
        let here = ep.cell();
        let world = World::new(ep.air.clone(), RewardParams::new(ec.cfg.alpha, ep.belief.clone())?)?;
        if world.legal_actions(here).next().is_none() {
            terminated_by = Termination::BoxedIn;
            break;
        }
        epochs_used += 1;
        let t0 = Instant::now();
        // with nothing left to search the agent holds position for the epoch
        let plan_cells: Vec<Cell> = if ep.belief.is_empty() {
            Vec::new()
        } else {
            let root = RootInfo { agent_pos: ep.pos, targets_remaining: ep.remaining() };
            let enterable = |c: Cell| world.is_enterable(c);
            match ec.planner {
                PlannerKind::Shrinking => {
                    let actions = plan(&world, &root, &ec.cfg, &mut rng)?.actions;
                    let mut cur = here;
                    actions
                        .iter()
                        .map(|a| {
                            cur = a.apply(&geom, cur).expect("planned actions stay on the grid");
                            cur
                        })
                        .collect()
                }
                PlannerKind::Vanilla => {
                    let (a, _) = vanilla_pomcp_plan(&world, &root, &ec.cfg, &mut rng)?;
                    vec![a.apply(&geom, here).expect("planned actions stay on the grid")]
                }
                PlannerKind::Greedy => vec![greedy_next(here, &ep.belief, &geom, enterable)?],
                PlannerKind::Lawnmower => vec![lawnmower_next(&mut lawn, here, &ep.belief, &geom, enterable)?],
            }
        };
        wall.push(t0.elapsed().as_secs_f64() * 1e3);

        let mut ev = EpochEvent {
            epoch: epochs_used,
            plan: plan_cells.clone(),
            waypoints: vec![],
            arrivals: vec![],
            captures: vec![],
            raise_requests: vec![],
            aborted: None,
        };
        for cell in plan_cells {
            let h = ep.air.altitude();
            match adjust_height(cell, h, &ec.hc, &terrain.omap, &ep.zones, &geom).decision {
                HeightDecision::Keep(_) => {}
                HeightDecision::Raise(to) => ev.raise_requests.push((cell, to)),
                HeightDecision::NoFlyReplan => {
                    ep.forbid(cell);
                    ev.aborted = Some((cell, AbortReason::NoFly));
                    break;
                }
            }
            let path = ep.air.nearest_valid(cell, ep.pos).map(|wp| (wp, navigate_in(&ep.air, ep.pos, wp)));
            let Some((wp, NavOutcome::Arrived(path))) = path else {
                ep.forbid(cell);
                ev.aborted = Some((cell, AbortReason::Unreachable));
                break;
            };
            ev.waypoints.push(wp);
            ep.steps += path.len() - 1;
            ep.trajectory.extend_from_slice(&path[1..]);
            ep.pos = wp;
            ev.arrivals.push(cell);
            ev.captures.extend(ep.arrive(cell));
            if ep.remaining() == 0 {
                break;
            }
        }
        events.push(ev);
    }
    if ep.remaining() == 0 {
        terminated_by = Termination::AllFound;
    }

    let path_length_m = ep.steps as f64 * terrain.omap.raster_m();
    Ok(EpisodeResult {
        epochs_used,
        targets_found: ep.found.iter().filter(|f| **f).count(),
        targets_total: ep.targets.len(),
        target_cells: ep.targets,
        trajectory: ep.trajectory,
        path_length_m,
        travel_time_s: path_length_m / ec.speed_mps,
        wall_ms_per_epoch: wall,
        terminated_by,
        events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::{BeliefSpec, Peak};
    use crate::grid::{Obstacle, Rect};
    use crate::scenario::TargetSpec;

    fn small(targets: Vec<[f64; 2]>, belief: BeliefSpec) -> Scenario {
        Scenario {
            name: "small".into(),
            side_length_m: 100.0,
            grid_n: 5,
            raster_m: 1.0,
            start: [10.0, 10.0],
            targets: TargetSpec::Fixed { positions: targets },
            belief,
            obstacles: vec![],
            no_fly: vec![],
        }
    }

    fn quick(planner: PlannerKind) -> EpisodeConfig {
        let mut ec = EpisodeConfig { planner, seed: 3, ..EpisodeConfig::default() };
        ec.cfg.max_iterations = 300;
        ec.hc.tau = 1;
        ec
    }

    #[test]
    fn capture_check_examples() {
        let t = [Cell::new(1, 1), Cell::new(2, 2), Cell::new(2, 2)];
        assert!(capture_check(Cell::new(0, 0), &t, &[false; 3]).is_empty());
        assert_eq!(capture_check(Cell::new(1, 1), &t, &[false; 3]), vec![0]);
        assert_eq!(capture_check(Cell::new(2, 2), &t, &[false; 3]), vec![1, 2]);
        assert!(capture_check(Cell::new(2, 2), &t, &[false, true, true]).is_empty());
    }

    #[test]
    fn open_map_navigation_is_manhattan() {
        let g = MapGeometry::new(100.0, 5).unwrap();
        let omap = ObstacleMap::empty(&g, 1.0).unwrap();
        let a = FinePosition { x: 3.5, y: 7.5, z: 10.0 };
        let b = FinePosition { x: 60.5, y: 41.5, z: 10.0 };
        let NavOutcome::Arrived(path) = navigate(a, b, &omap, &[], 10.0, &g) else { panic!() };
        assert_eq!(path.len() - 1, 57 + 34);
        assert_eq!((path[0], *path.last().unwrap()), (a, b));
    }

    #[test]
    fn waypoint_on_roof_is_unreachable() {
        let g = MapGeometry::new(100.0, 5).unwrap();
        let house = Obstacle { rect: Rect::new(40.0, 40.0, 60.0, 60.0).unwrap(), height_m: 15.0 };
        let omap = ObstacleMap::from_obstacles(&g, 1.0, &[house]).unwrap();
        let a = FinePosition { x: 3.5, y: 3.5, z: 10.0 };
        let b = FinePosition { x: 50.5, y: 50.5, z: 10.0 };
        assert_eq!(navigate(a, b, &omap, &[], 10.0, &g), NavOutcome::Unreachable);
    }

    #[test]
    fn start_cell_capture_is_epoch_zero() {
        let sc = small(vec![[5.0, 5.0]], BeliefSpec::Uniform);
        let r = run_episode(&sc, &quick(PlannerKind::Shrinking)).unwrap();
        assert_eq!(r.epochs_used, 0);
        assert_eq!(r.terminated_by, Termination::AllFound);
        assert_eq!(r.events[0].captures, vec![0]);
    }

    #[test]
    fn greedy_walks_manhattan_distance_to_peak() {
        let peak = Peak { center: Cell::new(3, 4), spread: 1.5, weight: 1.0 };
        let sc = small(vec![[70.0, 90.0]], BeliefSpec::Peaks { peaks: vec![peak] });
        let r = run_episode(&sc, &quick(PlannerKind::Greedy)).unwrap();
        assert_eq!(r.terminated_by, Termination::AllFound);
        assert_eq!(r.epochs_used, Cell::new(0, 0).manhattan(Cell::new(3, 4)));
    }

    #[test]
    fn walled_off_target_hits_epoch_cap() {
        // 40 m towers ring cell (3, 3) on a 5x5 map
        let ring = [(2, 2), (3, 2), (4, 2), (2, 3), (4, 3), (2, 4), (3, 4), (4, 4)];
        let obstacles = ring
            .iter()
            .map(|&(i, j)| Obstacle {
                rect: Rect::new(i as f64 * 20.0, j as f64 * 20.0, (i + 1) as f64 * 20.0, (j + 1) as f64 * 20.0).unwrap(),
                height_m: 40.0,
            })
            .collect();
        let sc = Scenario { obstacles, ..small(vec![[70.0, 70.0]], BeliefSpec::Uniform) };
        let r = run_episode(&sc, &quick(PlannerKind::Greedy)).unwrap();
        assert_eq!(r.terminated_by, Termination::EpochCap);
        assert_eq!(r.epochs_used, 100);
        assert_eq!(r.targets_found, 0);
    }

    #[test]
    fn shrinking_finds_target_and_keeps_invariants() {
        let peak = Peak { center: Cell::new(4, 3), spread: 1.0, weight: 1.0 };
        let nofly = Rect::new(40.0, 0.0, 60.0, 40.0).unwrap();
        let sc = Scenario { no_fly: vec![nofly], ..small(vec![[90.0, 70.0]], BeliefSpec::Peaks { peaks: vec![peak] }) };
        let ec = EpisodeConfig { cfg: PlannerConfig::default(), ..quick(PlannerKind::Shrinking) };
        let r = run_episode(&sc, &ec).unwrap();
        assert_eq!(r.terminated_by, Termination::AllFound);
        assert!(r.epochs_used <= 3, "epochs {}", r.epochs_used);
        for w in r.trajectory.windows(2) {
            assert_eq!((w[0].x - w[1].x).abs() + (w[0].y - w[1].y).abs(), 1.0);
        }
        assert!(r.trajectory.iter().all(|p| !nofly.contains(p.x, p.y)));
        assert_eq!(r.path_length_m, (r.trajectory.len() - 1) as f64);
        assert_eq!(r.travel_time_s, r.path_length_m / 5.0);
        assert_eq!(r.wall_ms_per_epoch.len(), r.epochs_used);
        let again = run_episode(&sc, &ec).unwrap();
        assert_eq!(again.trajectory, r.trajectory);
        assert_eq!(again.events, r.events);
    }

    #[test]
    fn every_planner_finishes_small_uniform_map() {
        let sc = small(vec![[90.0, 10.0], [10.0, 90.0]], BeliefSpec::Uniform);
        for kind in PlannerKind::ALL {
            let r = run_episode(&sc, &quick(kind)).unwrap();
            assert_eq!(r.targets_found, 2, "{kind}");
            assert!(r.epochs_used <= 100);
        }
    }

    #[test]
    fn planner_kind_parses() {
        for k in PlannerKind::ALL {
            assert_eq!(k.name().parse::<PlannerKind>().unwrap(), k);
        }
        assert!("astar".parse::<PlannerKind>().is_err());
    }

    #[test]
    fn rejects_bad_config() {
        let sc = small(vec![[90.0, 10.0]], BeliefSpec::Uniform);
        let ec = EpisodeConfig { max_epochs: 0, ..EpisodeConfig::default() };
        assert!(matches!(run_episode(&sc, &ec), Err(Error::Config(_))));
    }
}
