//! Altitude adjustment for a waypoint cell.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{valid_count, Cell, MapGeometry, NoFlyZone, ObstacleMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeightConfig {
    /// Minimum number of valid raster points a cell needs at the flight altitude.
    pub tau: usize,
    pub delta_h: f64,
    pub h_max: f64,
    pub h_init: f64,
}

impl Default for HeightConfig {
    fn default() -> Self {
        HeightConfig { tau: 40, delta_h: 3.0, h_max: 30.0, h_init: 10.0 }
    }
}

impl HeightConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau == 0 {
            return Err(Error::config("obstacle tolerance tau must be >= 1"));
        }
        if !(self.delta_h.is_finite() && self.delta_h > 0.0) {
            return Err(Error::config(format!("delta_h must be positive, got {}", self.delta_h)));
        }
        if !(self.h_init.is_finite() && self.h_init >= 0.0 && self.h_init <= self.h_max) {
            return Err(Error::config(format!(
                "need 0 <= h_init <= h_max, got h_init {} and h_max {}",
                self.h_init, self.h_max
            )));
        }
        Ok(())
    }

    /// Upper bound on the number of `N_v` evaluations [`adjust_height`] makes
    /// starting from `h`.
    pub fn max_checks(&self, h: f64) -> usize {
        ((self.h_max - h).max(0.0) / self.delta_h).ceil() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HeightDecision {
    Keep(f64),
    Raise(f64),
    /// Too cluttered even at `h_max`; treat the cell as no-fly and replan.
    NoFlyReplan,
}

/// Outcome plus the number of `N_v` checks it took.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeightOutcome {
    pub decision: HeightDecision,
    pub checks: usize,
}

/// Keeps `h` if the cell has at least `tau` valid points there; otherwise
/// climbs by `delta_h` (capped at `h_max`) until it does, or gives up at the
/// ceiling.
pub fn adjust_height(
    cell: Cell,
    h: f64,
    hc: &HeightConfig,
    omap: &ObstacleMap,
    zones: &[NoFlyZone],
    geom: &MapGeometry,
) -> HeightOutcome {
    adjust_height_with(h, hc, |alt| valid_count(cell, alt, omap, zones, geom))
}

/// [`adjust_height`] against an arbitrary `N_v` oracle.
pub fn adjust_height_with(h: f64, hc: &HeightConfig, mut n_valid: impl FnMut(f64) -> usize) -> HeightOutcome {
    let mut checks = 1;
    if n_valid(h) >= hc.tau {
        return HeightOutcome { decision: HeightDecision::Keep(h), checks };
    }
    let mut alt = h;
    while alt < hc.h_max {
        alt = (alt + hc.delta_h).min(hc.h_max);
        checks += 1;
        if n_valid(alt) >= hc.tau {
            return HeightOutcome { decision: HeightDecision::Raise(alt), checks };
        }
    }
    HeightOutcome { decision: HeightDecision::NoFlyReplan, checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Obstacle, Rect};

    fn geom() -> MapGeometry {
        MapGeometry::new(400.0, 20).unwrap()
    }

    #[test]
    fn open_cell_keeps_altitude() {
        let g = geom();
        let omap = ObstacleMap::empty(&g, 1.0).unwrap();
        let hc = HeightConfig { tau: 1, ..HeightConfig::default() };
        let out = adjust_height(Cell::new(3, 3), 10.0, &hc, &omap, &[], &g);
        assert_eq!(out.decision, HeightDecision::Keep(10.0));
    }

    #[test]
    fn climbs_in_steps_until_clear() {
        let g = geom();
        let tau = 40;
        // cell (5, 5) = [100, 120)^2; 14 m roofs everywhere except tau - 1 points
        let mut omap = ObstacleMap::empty(&g, 1.0).unwrap();
        let mut left_open = 0;
        for ry in 100..120 {
            for rx in 100..120 {
                if left_open < tau - 1 {
                    left_open += 1;
                } else {
                    omap.set_height(rx, ry, 14.0);
                }
            }
        }
        let hc = HeightConfig { tau, delta_h: 3.0, h_max: 30.0, h_init: 10.0 };
        let mut seen = Vec::new();
        let out = adjust_height_with(10.0, &hc, |h| {
            let n = valid_count(Cell::new(5, 5), h, &omap, &[], &g);
            seen.push((h, n));
            n
        });
        assert_eq!(seen, vec![(10.0, 39), (13.0, 39), (16.0, 400)]);
        assert_eq!(out.decision, HeightDecision::Raise(16.0));
        assert_eq!(adjust_height(Cell::new(5, 5), 10.0, &hc, &omap, &[], &g), out);
    }

    #[test]
    fn tall_clutter_forces_replan() {
        let g = geom();
        let tower = Obstacle { rect: Rect::new(100.0, 100.0, 120.0, 120.0).unwrap(), height_m: 35.0 };
        let omap = ObstacleMap::from_obstacles(&g, 1.0, &[tower]).unwrap();
        let hc = HeightConfig::default();
        let out = adjust_height(Cell::new(5, 5), 10.0, &hc, &omap, &[], &g);
        assert_eq!(out.decision, HeightDecision::NoFlyReplan);
        // 10, 13, 16, 19, 22, 25, 28, 30
        assert_eq!(out.checks, hc.max_checks(10.0));
        assert_eq!(out.checks, 8);
    }

    #[test]
    fn ceiling_is_never_exceeded() {
        let hc = HeightConfig { tau: 5, delta_h: 7.0, h_max: 30.0, h_init: 10.0 };
        let mut alts = Vec::new();
        let out = adjust_height_with(10.0, &hc, |h| {
            alts.push(h);
            if h >= 30.0 { 5 } else { 0 }
        });
        assert_eq!(alts, vec![10.0, 17.0, 24.0, 30.0]);
        assert_eq!(out.decision, HeightDecision::Raise(30.0));
    }
}
