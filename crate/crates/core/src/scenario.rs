//! Scenario files: map, obstacles, no-fly zones, prior belief, start and
//! targets.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{BeliefMap, BeliefSpec};
use crate::error::{Error, Result};
use crate::grid::{valid_count, Cell, FinePosition, MapGeometry, NoFlyZone, Obstacle, ObstacleMap, Rect};

/// ChaCha stream used for target placement; planners draw from stream 0.
pub const TARGET_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TargetSpec {
    /// `count` targets drawn i.i.d. from the masked prior with the episode seed.
    Sampled { count: usize },
    /// Exact positions in metres.
    Fixed { positions: Vec<[f64; 2]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub side_length_m: f64,
    pub grid_n: usize,
    /// Fine raster resolution; must divide the cell size.
    pub raster_m: f64,
    /// Start position in metres; snapped to its raster point.
    pub start: [f64; 2],
    pub targets: TargetSpec,
    pub belief: BeliefSpec,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default)]
    pub no_fly: Vec<Rect>,
}

/// A scenario turned into the structures the simulator works on.
#[derive(Debug, Clone)]
pub struct Terrain {
    pub geom: MapGeometry,
    pub omap: ObstacleMap,
    pub zones: Vec<NoFlyZone>,
    /// Prior restricted to cells that are flyable at the start altitude.
    pub belief: BeliefMap,
    pub start: FinePosition,
}

impl Terrain {
    /// Cells with at least one valid point at `h` under `zones`.
    pub fn flyable(&self, h: f64, zones: &[NoFlyZone]) -> Vec<bool> {
        self.geom.cells().map(|c| valid_count(c, h, &self.omap, zones, &self.geom) > 0).collect()
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    /// Validates the scenario and rasterizes it for flight at `h_init`, with
    /// the prior masked to cells that have a valid point at that altitude.
    pub fn build(&self, h_init: f64) -> Result<Terrain> {
        let geom = MapGeometry::new(self.side_length_m, self.grid_n)?;
        for o in &self.obstacles {
            Rect::new(o.rect.x_min, o.rect.y_min, o.rect.x_max, o.rect.y_max)?;
            if !(o.height_m.is_finite() && o.height_m >= 0.0) {
                return Err(Error::config(format!("obstacle height must be >= 0, got {}", o.height_m)));
            }
        }
        let omap = ObstacleMap::from_obstacles(&geom, self.raster_m, &self.obstacles)?;
        let zones = self
            .no_fly
            .iter()
            .map(|r| NoFlyZone::new(Rect::new(r.x_min, r.y_min, r.x_max, r.y_max)?, &geom))
            .collect::<Result<Vec<_>>>()?;

        let [sx, sy] = self.start;
        let (rx, ry) = omap
            .raster_of(sx, sy)
            .ok_or_else(|| Error::config(format!("start ({sx}, {sy}) lies outside the map")))?;
        let (px, py) = omap.point(rx, ry);
        if omap.height_at(rx, ry) >= h_init || zones.iter().any(|z| z.contains(px, py)) {
            return Err(Error::config(format!("start ({sx}, {sy}) is not a valid position at {h_init} m")));
        }
        let start = FinePosition { x: px, y: py, z: h_init };

        let prior = BeliefMap::from_spec(&self.belief, &geom)?;
        let mut terrain = Terrain { geom, omap, zones, belief: prior, start };
        let flyable = terrain.flyable(h_init, &terrain.zones);
        let mut masked = terrain.belief.restricted(|c| flyable[geom.index(c)]);
        if masked.is_empty() {
            return Err(Error::config("prior belief has no mass on any flyable cell"));
        }
        // unflyable cells never take part in the uniform reset
        for c in geom.cells().filter(|&c| !flyable[geom.index(c)]) {
            masked.mark_searched(c);
        }
        terrain.belief = masked;
        Ok(terrain)
    }

    /// Target cells for one episode. Sampled targets use [`TARGET_STREAM`] of
    /// the episode seed so every planner sees the same draw.
    pub fn resolve_targets(&self, terrain: &Terrain, seed: u64) -> Result<Vec<Cell>> {
        match &self.targets {
            TargetSpec::Fixed { positions } => positions
                .iter()
                .map(|&[x, y]| {
                    if terrain.zones.iter().any(|z| z.contains(x, y)) {
                        return Err(Error::config(format!("target ({x}, {y}) lies inside a no-fly zone")));
                    }
                    terrain.geom.cell_of(FinePosition { x, y, z: 0.0 })
                })
                .collect(),
            TargetSpec::Sampled { count } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(TARGET_STREAM);
                let dist = WeightedIndex::new(terrain.belief.probs())
                    .map_err(|e| Error::config(format!("cannot sample targets: {e}")))?;
                Ok((0..*count).map(|_| terrain.geom.cell_at(dist.sample(&mut rng))).collect())
            }
        }
    }
}
