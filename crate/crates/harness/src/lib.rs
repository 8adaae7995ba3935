//! Experiment harness: scenario generation, sweeps, planner comparisons and
//! trajectory rendering.

pub mod gen;
pub mod experiment;
pub mod render;

use serde::{Deserialize, Serialize};
use shrinking_pomcp::mission::{EpisodeConfig, EpisodeResult};
use shrinking_pomcp::scenario::Scenario;

/// What `sarplan run` writes: the inputs next to the outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub scenario: String,
    pub config: EpisodeConfig,
    pub result: EpisodeResult,
}

impl RunRecord {
    /// Wall-clock timings are dropped unless `timing` is set, which keeps the
    /// record identical across runs with the same seed.
    pub fn new(sc: &Scenario, ec: &EpisodeConfig, result: &EpisodeResult, timing: bool) -> Self {
        let mut result = result.clone();
        if !timing {
            result.wall_ms_per_epoch.clear();
        }
        RunRecord { scenario: sc.name.clone(), config: ec.clone(), result }
    }
}
