//! Random 400 m scenarios with buildings, no-fly zones and a chosen prior.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use shrinking_pomcp::belief::{BeliefSpec, Peak};
use shrinking_pomcp::grid::{Cell, Obstacle, Rect};
use shrinking_pomcp::scenario::{Scenario, TargetSpec};

pub const SIDE_M: f64 = 400.0;
pub const GRID_N: usize = 20;
const CELL_M: f64 = SIDE_M / GRID_N as f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefKind {
    Uniform,
    OnePeak,
    ThreePeaks,
}

impl BeliefKind {
    pub const ALL: [BeliefKind; 3] = [BeliefKind::Uniform, BeliefKind::OnePeak, BeliefKind::ThreePeaks];

    pub fn name(self) -> &'static str {
        match self {
            BeliefKind::Uniform => "uniform",
            BeliefKind::OnePeak => "one_peak",
            BeliefKind::ThreePeaks => "three_peaks",
        }
    }
}

impl fmt::Display for BeliefKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BeliefKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match BeliefKind::ALL.into_iter().find(|k| k.name() == s) {
            Some(k) => Ok(k),
            None => bail!("unknown belief kind `{s}` (expected uniform, one_peak or three_peaks)"),
        }
    }
}

/// Knobs that replace the randomized choices of [`gen_scenario`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenOverrides {
    /// Number of sampled targets (default 4).
    pub targets: Option<usize>,
    /// Exact target positions; replaces sampling.
    pub fixed_targets: Option<Vec<[f64; 2]>>,
    pub start: Option<[f64; 2]>,
    pub no_fly_zones: Option<usize>,
    pub buildings: Option<usize>,
}

fn cell_rect(i0: usize, j0: usize, w: usize, h: usize) -> Rect {
    Rect {
        x_min: i0 as f64 * CELL_M,
        y_min: j0 as f64 * CELL_M,
        x_max: (i0 + w) as f64 * CELL_M,
        y_max: (j0 + h) as f64 * CELL_M,
    }
}

fn overlaps(a: &Rect, b: &Rect) -> bool {
    a.x_min < b.x_max && b.x_min < a.x_max && a.y_min < b.y_max && b.y_min < a.y_max
}

/// A 400 m, 20 x 20 scenario fully determined by `kind` and `seed`.
///
/// Buildings are axis-aligned blocks of 8 to 36 m with roofs between 4 and
/// 25 m; no-fly zones cover one to three cells per side; the start is a
/// clear cell centre outside every zone and footprint.
pub fn gen_scenario(kind: BeliefKind, seed: u64, ov: &GenOverrides) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_zones = ov.no_fly_zones.unwrap_or_else(|| rng.random_range(0..=3));
    let mut no_fly = Vec::with_capacity(n_zones);
    for _ in 0..n_zones {
        let (w, h) = (rng.random_range(1..=3), rng.random_range(1..=3));
        no_fly.push(cell_rect(rng.random_range(0..=GRID_N - w), rng.random_range(0..=GRID_N - h), w, h));
    }

    let n_buildings = ov.buildings.unwrap_or_else(|| rng.random_range(8..=16));
    let mut obstacles = Vec::with_capacity(n_buildings);
    for _ in 0..n_buildings {
        let (w, h) = (rng.random_range(8..=36) as f64, rng.random_range(8..=36) as f64);
        let (x, y) = (rng.random_range(0..=(SIDE_M - w) as usize) as f64, rng.random_range(0..=(SIDE_M - h) as usize) as f64);
        let height_m = rng.random_range(4..=25) as f64;
        obstacles.push(Obstacle { rect: Rect { x_min: x, y_min: y, x_max: x + w, y_max: y + h }, height_m });
    }

    let start = match ov.start {
        Some(s) => s,
        None => loop {
            let (i, j) = (rng.random_range(0..GRID_N), rng.random_range(0..GRID_N));
            let cell = cell_rect(i, j, 1, 1);
            let blocked = no_fly.iter().any(|z| overlaps(z, &cell)) || obstacles.iter().any(|o| overlaps(&o.rect, &cell));
            if !blocked {
                break [(i as f64 + 0.5) * CELL_M, (j as f64 + 0.5) * CELL_M];
            }
        },
    };

    let mut peak = |spread_lo: f64, spread_hi: f64| Peak {
        center: Cell::new(rng.random_range(0..GRID_N), rng.random_range(0..GRID_N)),
        spread: rng.random_range(spread_lo..spread_hi),
        weight: rng.random_range(0.5..1.0),
    };
    let belief = match kind {
        BeliefKind::Uniform => BeliefSpec::Uniform,
        BeliefKind::OnePeak => BeliefSpec::Peaks { peaks: vec![Peak { weight: 1.0, ..peak(2.0, 3.0) }] },
        BeliefKind::ThreePeaks => BeliefSpec::Peaks { peaks: (0..3).map(|_| peak(1.5, 2.5)).collect() },
    };

    let targets = match &ov.fixed_targets {
        Some(p) => TargetSpec::Fixed { positions: p.clone() },
        None => TargetSpec::Sampled { count: ov.targets.unwrap_or(4) },
    };

    let sc = Scenario {
        name: format!("{}-{seed}", kind.name()),
        side_length_m: SIDE_M,
        grid_n: GRID_N,
        raster_m: 1.0,
        start,
        targets,
        belief,
        obstacles,
        no_fly,
    };
    let terrain = sc.build(shrinking_pomcp::height::HeightConfig::default().h_init).context("generated scenario is inconsistent")?;
    sc.resolve_targets(&terrain, seed).context("generated scenario is inconsistent")?;
    Ok(sc)
}
