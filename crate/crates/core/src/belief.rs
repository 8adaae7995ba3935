//! Normalized target-location beliefs over the planning grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Cell, MapGeometry};

/// Bumps are cut to zero beyond this many spreads from their centre.
pub const PEAK_CUTOFF_SPREADS: f64 = 3.0;

const NORM_TOL: f64 = 1e-9;

/// One isotropic Gaussian bump, `weight * exp(-d^2 / (2 spread^2))` with `d`
/// the distance between cell centres in cell units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub center: Cell,
    pub spread: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BeliefSpec {
    Uniform,
    Peaks { peaks: Vec<Peak> },
}

/// Probability of a target being in each grid cell.
///
/// Besides the probabilities the map remembers which cells have already been
/// searched, which is what the reset rule in [`BeliefMap::after_visit`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefMap {
    n: usize,
    probs: Vec<f64>,
    searched: Vec<bool>,
}

impl BeliefMap {
    pub fn uniform(geom: &MapGeometry) -> Self {
        let count = geom.cell_count();
        BeliefMap { n: geom.grid_n(), probs: vec![1.0 / count as f64; count], searched: vec![false; count] }
    }

    /// Normalizes raw non-negative weights (row-major, `j * N + i`).
    pub fn from_weights(geom: &MapGeometry, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != geom.cell_count() {
            return Err(Error::domain(format!(
                "belief needs {} entries, got {}",
                geom.cell_count(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::domain("belief weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::domain("belief has zero total mass"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(BeliefMap { n: geom.grid_n(), probs, searched: vec![false; geom.cell_count()] })
    }

    pub fn from_spec(spec: &BeliefSpec, geom: &MapGeometry) -> Result<Self> {
        match spec {
            BeliefSpec::Uniform => Ok(Self::uniform(geom)),
            BeliefSpec::Peaks { peaks } => make_peaks(peaks, geom),
        }
    }

    pub fn grid_n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, cell: Cell) -> f64 {
        if cell.i >= self.n || cell.j >= self.n {
            return 0.0;
        }
        self.probs[cell.j * self.n + cell.i]
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0)
    }

    pub fn is_searched(&self, cell: Cell) -> bool {
        self.searched[cell.j * self.n + cell.i]
    }

    /// Number of cells with non-zero probability.
    pub fn support_size(&self) -> usize {
        self.probs.iter().filter(|&&p| p > 0.0).count()
    }

    /// Highest-probability cell; the lowest row-major index wins ties.
    pub fn argmax(&self) -> Cell {
        let mut best = 0;
        for (k, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = k;
            }
        }
        Cell::new(best % self.n, best / self.n)
    }

    pub fn is_normalized(&self) -> bool {
        (self.total() - 1.0).abs() <= NORM_TOL
    }

    /// Surrogate world-model update after the agent searched `cell`.
    ///
    /// The searched cell is zeroed and the remaining mass renormalized. If no
    /// mass is left while `targets_remaining`, the belief resets to uniform over
    /// cells that were never searched; with none of those left the result is
    /// the all-zero map.
    pub fn after_visit(&self, cell: Cell, targets_remaining: bool) -> BeliefMap {
        let mut next = self.clone();
        let k = cell.j * self.n + cell.i;
        next.searched[k] = true;
        if self.probs[k] == 0.0 {
            return next;
        }
        next.probs[k] = 0.0;
        let total: f64 = next.probs.iter().sum();
        if total > 0.0 {
            next.probs.iter_mut().for_each(|p| *p /= total);
        } else if targets_remaining {
            next.reset_to_unsearched();
        }
        next
    }

    fn reset_to_unsearched(&mut self) {
        let fresh = self.searched.iter().filter(|s| !**s).count();
        for (p, &s) in self.probs.iter_mut().zip(&self.searched) {
            *p = if !s && fresh > 0 { 1.0 / fresh as f64 } else { 0.0 };
        }
    }

    /// Zeroes every cell rejected by `keep` and renormalizes. Returns the
    /// all-zero map when nothing survives.
    pub fn restricted(&self, keep: impl Fn(Cell) -> bool) -> BeliefMap {
        let mut next = self.clone();
        for (k, p) in next.probs.iter_mut().enumerate() {
            if !keep(Cell::new(k % self.n, k / self.n)) {
                *p = 0.0;
            }
        }
        let total: f64 = next.probs.iter().sum();
        if total > 0.0 {
            next.probs.iter_mut().for_each(|p| *p /= total);
        }
        next
    }

    /// Marks a cell as searched without touching probabilities.
    pub fn mark_searched(&mut self, cell: Cell) {
        self.searched[cell.j * self.n + cell.i] = true;
    }
}

/// Sum of truncated Gaussian bumps evaluated at cell centres, normalized.
pub fn make_peaks(peaks: &[Peak], geom: &MapGeometry) -> Result<BeliefMap> {
    if peaks.is_empty() {
        return Err(Error::domain("peaked belief needs at least one peak"));
    }
    for p in peaks {
        if !(p.spread.is_finite() && p.spread > 0.0) {
            return Err(Error::domain(format!("peak spread must be positive, got {}", p.spread)));
        }
        if !(p.weight.is_finite() && p.weight >= 0.0) {
            return Err(Error::domain(format!("peak weight must be non-negative, got {}", p.weight)));
        }
        if !geom.in_grid(p.center) {
            return Err(Error::domain(format!("peak centre {} is off the grid", p.center)));
        }
    }
    let weights = geom
        .cells()
        .map(|c| {
            peaks
                .iter()
                .map(|p| {
                    let di = c.i as f64 - p.center.i as f64;
                    let dj = c.j as f64 - p.center.j as f64;
                    let d2 = di * di + dj * dj;
                    let cutoff = PEAK_CUTOFF_SPREADS * p.spread;
                    if d2 > cutoff * cutoff {
                        0.0
                    } else {
                        p.weight * (-d2 / (2.0 * p.spread * p.spread)).exp()
                    }
                })
                .sum()
        })
        .collect();
    BeliefMap::from_weights(geom, weights)
}
