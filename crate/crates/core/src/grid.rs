//! Map geometry, the obstacle raster, no-fly zones and the per-altitude
//! airspace mask built from them.
//!
//! Positions live at two granularities. The planner reasons over an `N × N`
//! grid of [`Cell`]s; navigation and rollouts work on a fine raster whose
//! points sit at the centres of `raster_m`-sized squares. Cell `(i, j)` has
//! `i` growing east along `x` and `j` growing north along `y`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRID_EPS: f64 = 1e-9;

/// Square map of side `L` metres partitioned into `N × N` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapGeometry {
    side_length_m: f64,
    grid_n: usize,
}

impl MapGeometry {
    pub fn new(side_length_m: f64, grid_n: usize) -> Result<Self> {
        if !(side_length_m.is_finite() && side_length_m > 0.0) {
            return Err(Error::config(format!("side length must be positive, got {side_length_m}")));
        }
        if grid_n == 0 {
            return Err(Error::config("grid must have at least one cell per side"));
        }
        Ok(MapGeometry { side_length_m, grid_n })
    }

    pub fn side_length_m(&self) -> f64 {
        self.side_length_m
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn cell_size_m(&self) -> f64 {
        self.side_length_m / self.grid_n as f64
    }

    pub fn cell_count(&self) -> usize {
        self.grid_n * self.grid_n
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..self.side_length_m).contains(&x) && (0.0..self.side_length_m).contains(&y)
    }

    /// Grid cell containing a fine position.
    pub fn cell_of(&self, pos: FinePosition) -> Result<Cell> {
        if !self.contains(pos.x, pos.y) {
            return Err(Error::OutOfBounds { x: pos.x, y: pos.y, side: self.side_length_m });
        }
        let cs = self.cell_size_m();
        let last = self.grid_n - 1;
        let i = ((pos.x / cs).floor() as usize).min(last);
        let j = ((pos.y / cs).floor() as usize).min(last);
        Ok(Cell::new(i, j))
    }

    /// Geometric centre of a cell at ground level.
    pub fn center(&self, cell: Cell) -> FinePosition {
        let cs = self.cell_size_m();
        FinePosition::new((cell.i as f64 + 0.5) * cs, (cell.j as f64 + 0.5) * cs, 0.0)
    }

    pub fn in_grid(&self, cell: Cell) -> bool {
        cell.i < self.grid_n && cell.j < self.grid_n
    }

    /// Row-major index, `j * N + i`.
    pub fn index(&self, cell: Cell) -> usize {
        cell.j * self.grid_n + cell.i
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(index % self.grid_n, index / self.grid_n)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(|k| self.cell_at(k))
    }

    /// Cell reached by moving `(di, dj)` from `cell`, if it stays on the grid.
    pub fn offset(&self, cell: Cell, di: i64, dj: i64) -> Option<Cell> {
        let i = cell.i as i64 + di;
        let j = cell.j as i64 + dj;
        let n = self.grid_n as i64;
        ((0..n).contains(&i) && (0..n).contains(&j)).then(|| Cell::new(i as usize, j as usize))
    }
}

/// A point in the map, metres. `z` is altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinePosition {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl FinePosition {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        FinePosition { x, y, z }
    }

    pub fn planar_distance(&self, other: &FinePosition) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub i: usize,
    pub j: usize,
}

impl Cell {
    pub const fn new(i: usize, j: usize) -> Self {
        Cell { i, j }
    }

    pub fn manhattan(&self, other: Cell) -> usize {
        self.i.abs_diff(other.i) + self.j.abs_diff(other.j)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.i, self.j)
    }
}

/// Axis-aligned rectangle in metres, closed on all sides.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min >= x_max || y_min >= y_max {
            return Err(Error::config(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Rect { x_min, y_min, x_max, y_max })
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Footprint of a grid cell.
    pub fn of_cell(geom: &MapGeometry, cell: Cell) -> Self {
        let cs = geom.cell_size_m();
        Rect {
            x_min: cell.i as f64 * cs,
            y_min: cell.j as f64 * cs,
            x_max: (cell.i + 1) as f64 * cs,
            y_max: (cell.j + 1) as f64 * cs,
        }
    }

    fn clipped(&self, side: f64) -> Option<Rect> {
        let r = Rect {
            x_min: self.x_min.max(0.0),
            y_min: self.y_min.max(0.0),
            x_max: self.x_max.min(side),
            y_max: self.y_max.min(side),
        };
        (r.x_min < r.x_max && r.y_min < r.y_max).then_some(r)
    }
}

/// Static keep-out rectangle. Any raster point inside it is invalid at every
/// altitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoFlyZone {
    pub rect: Rect,
}

impl NoFlyZone {
    /// Builds a zone clipped to the map; a rectangle entirely off the map is
    /// rejected.
    pub fn new(rect: Rect, geom: &MapGeometry) -> Result<Self> {
        let rect = rect
            .clipped(geom.side_length_m())
            .ok_or_else(|| Error::config("no-fly zone lies entirely outside the map"))?;
        Ok(NoFlyZone { rect })
    }

    pub fn covering_cell(geom: &MapGeometry, cell: Cell) -> Self {
        NoFlyZone { rect: Rect::of_cell(geom, cell) }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.rect.contains(x, y)
    }
}

/// Rectangular building footprint with a roof height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub rect: Rect,
    pub height_m: f64,
}

/// Obstacle-top heights sampled on the fine raster.
#[derive(Debug, Clone, PartialEq)]
pub struct ObstacleMap {
    raster_m: f64,
    width: usize,
    cell_span: usize,
    heights: Vec<f64>,
}

impl ObstacleMap {
    /// Empty heightmap. `raster_m` must divide the cell size exactly.
    pub fn empty(geom: &MapGeometry, raster_m: f64) -> Result<Self> {
        if !(raster_m.is_finite() && raster_m > 0.0) {
            return Err(Error::config(format!("raster resolution must be positive, got {raster_m}")));
        }
        let span = geom.cell_size_m() / raster_m;
        if (span - span.round()).abs() > GRID_EPS || span.round() < 1.0 {
            return Err(Error::config(format!(
                "raster resolution {raster_m} m does not divide the {} m cell",
                geom.cell_size_m()
            )));
        }
        let cell_span = span.round() as usize;
        let width = cell_span * geom.grid_n();
        Ok(ObstacleMap { raster_m, width, cell_span, heights: vec![0.0; width * width] })
    }

    /// Rasterises building footprints; overlapping buildings keep the taller roof.
    pub fn from_obstacles(geom: &MapGeometry, raster_m: f64, obstacles: &[Obstacle]) -> Result<Self> {
        let mut map = Self::empty(geom, raster_m)?;
        for ob in obstacles {
            if !(ob.height_m.is_finite() && ob.height_m >= 0.0) {
                return Err(Error::config(format!("obstacle height must be >= 0, got {}", ob.height_m)));
            }
            let Some((xs, ys)) = map.raster_span(&ob.rect) else { continue };
            for ry in ys {
                for rx in xs.clone() {
                    let h = &mut map.heights[ry * map.width + rx];
                    *h = h.max(ob.height_m);
                }
            }
        }
        Ok(map)
    }

    /// Heightmap from explicit raster values, row-major with `y` as the row.
    pub fn from_heights(geom: &MapGeometry, raster_m: f64, heights: Vec<f64>) -> Result<Self> {
        let mut map = Self::empty(geom, raster_m)?;
        if heights.len() != map.heights.len() {
            return Err(Error::config(format!(
                "heightmap has {} samples, raster needs {}",
                heights.len(),
                map.heights.len()
            )));
        }
        if heights.iter().any(|h| !(h.is_finite() && *h >= 0.0)) {
            return Err(Error::config("heightmap values must be finite and >= 0"));
        }
        map.heights = heights;
        Ok(map)
    }

    pub fn raster_m(&self) -> f64 {
        self.raster_m
    }

    /// Raster points per map side.
    pub fn width(&self) -> usize {
        self.width
    }

    /// Raster points per cell side.
    pub fn cell_span(&self) -> usize {
        self.cell_span
    }

    pub fn height_at(&self, rx: usize, ry: usize) -> f64 {
        self.heights[ry * self.width + rx]
    }

    pub fn set_height(&mut self, rx: usize, ry: usize, h: f64) {
        self.heights[ry * self.width + rx] = h.max(0.0);
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Centre of raster point `(rx, ry)`.
    pub fn point(&self, rx: usize, ry: usize) -> (f64, f64) {
        ((rx as f64 + 0.5) * self.raster_m, (ry as f64 + 0.5) * self.raster_m)
    }

    /// Raster point containing `(x, y)`.
    pub fn raster_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if x < 0.0 || y < 0.0 {
            return None;
        }
        let rx = (x / self.raster_m).floor() as usize;
        let ry = (y / self.raster_m).floor() as usize;
        (rx < self.width && ry < self.width).then_some((rx, ry))
    }

    /// Raster index ranges whose point centres fall inside `rect`.
    fn raster_span(&self, rect: &Rect) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let lo = |v: f64| ((v / self.raster_m - 0.5).ceil().max(0.0)) as usize;
        let hi = |v: f64| {
            let t = (v / self.raster_m - 0.5).floor();
            if t < 0.0 {
                None
            } else {
                Some((t as usize + 1).min(self.width))
            }
        };
        let (x0, x1) = (lo(rect.x_min), hi(rect.x_max)?);
        let (y0, y1) = (lo(rect.y_min), hi(rect.y_max)?);
        (x0 < x1 && y0 < y1).then_some((x0..x1, y0..y1))
    }

    /// Raster index ranges covering a grid cell.
    pub fn cell_span_ranges(&self, cell: Cell) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let s = self.cell_span;
        (cell.i * s..(cell.i + 1) * s, cell.j * s..(cell.j + 1) * s)
    }
}

fn point_is_valid(omap: &ObstacleMap, zones: &[NoFlyZone], rx: usize, ry: usize, h: f64) -> bool {
    if omap.height_at(rx, ry) >= h {
        return false;
    }
    let (x, y) = omap.point(rx, ry);
    !zones.iter().any(|z| z.contains(x, y))
}

/// Every raster point inside `cell` that is flyable at altitude `h`: above the
/// obstacle top and outside all no-fly zones.
pub fn valid_positions(
    cell: Cell,
    h: f64,
    omap: &ObstacleMap,
    zones: &[NoFlyZone],
    geom: &MapGeometry,
) -> Vec<FinePosition> {
    if !geom.in_grid(cell) {
        return Vec::new();
    }
    let (xs, ys) = omap.cell_span_ranges(cell);
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for ry in ys {
        for rx in xs.clone() {
            if point_is_valid(omap, zones, rx, ry, h) {
                let (x, y) = omap.point(rx, ry);
                out.push(FinePosition::new(x, y, h));
            }
        }
    }
    out
}

/// `N_v(cell, h)`: the number of valid raster points in a cell.
pub fn valid_count(cell: Cell, h: f64, omap: &ObstacleMap, zones: &[NoFlyZone], geom: &MapGeometry) -> usize {
    if !geom.in_grid(cell) {
        return 0;
    }
    let (xs, ys) = omap.cell_span_ranges(cell);
    ys.flat_map(|ry| xs.clone().map(move |rx| (rx, ry)))
        .filter(|&(rx, ry)| point_is_valid(omap, zones, rx, ry, h))
        .count()
}

/// Precomputed flyable mask at one altitude, plus per-cell valid counts and a
/// representative valid point per cell.
#[derive(Debug, Clone)]
pub struct Airspace {
    geom: MapGeometry,
    raster_m: f64,
    width: usize,
    cell_span: usize,
    altitude: f64,
    free: Vec<bool>,
    valid_counts: Vec<u32>,
    anchors: Vec<Option<u32>>,
}

impl Airspace {
    pub fn new(geom: &MapGeometry, omap: &ObstacleMap, zones: &[NoFlyZone], altitude: f64) -> Self {
        let width = omap.width();
        let mut free: Vec<bool> = omap.heights().iter().map(|&top| top < altitude).collect();
        for zone in zones {
            if let Some((xs, ys)) = omap.raster_span(&zone.rect) {
                for ry in ys {
                    free[ry * width + xs.start..ry * width + xs.end].fill(false);
                }
            }
        }

        let span = omap.cell_span();
        let mut valid_counts = vec![0u32; geom.cell_count()];
        let mut anchors = vec![None; geom.cell_count()];
        for cell in geom.cells() {
            let (xs, ys) = omap.cell_span_ranges(cell);
            // centre of the cell in raster units, doubled to stay integral
            let cx2 = (xs.start + xs.end) as i64 - 1;
            let cy2 = (ys.start + ys.end) as i64 - 1;
            let mut count = 0u32;
            let mut best: Option<(i64, u32)> = None;
            for ry in ys {
                for rx in xs.clone() {
                    let k = ry * width + rx;
                    if free[k] {
                        count += 1;
                        let d = (2 * rx as i64 - cx2).pow(2) + (2 * ry as i64 - cy2).pow(2);
                        if best.is_none_or(|(bd, _)| d < bd) {
                            best = Some((d, k as u32));
                        }
                    }
                }
            }
            let idx = geom.index(cell);
            valid_counts[idx] = count;
            anchors[idx] = best.map(|(_, k)| k);
        }

        Airspace {
            geom: *geom,
            raster_m: omap.raster_m(),
            width,
            cell_span: span,
            altitude,
            free,
            valid_counts,
            anchors,
        }
    }

    pub fn geometry(&self) -> &MapGeometry {
        &self.geom
    }

    pub fn altitude(&self) -> f64 {
        self.altitude
    }

    pub fn raster_m(&self) -> f64 {
        self.raster_m
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cell_span(&self) -> usize {
        self.cell_span
    }

    pub fn free_mask(&self) -> &[bool] {
        &self.free
    }

    pub fn is_free(&self, rx: usize, ry: usize) -> bool {
        rx < self.width && ry < self.width && self.free[ry * self.width + rx]
    }

    pub fn valid_count(&self, cell: Cell) -> usize {
        if !self.geom.in_grid(cell) {
            return 0;
        }
        self.valid_counts[self.geom.index(cell)] as usize
    }

    /// Raster index of a point as a fine position at this altitude.
    pub fn position_of(&self, k: usize) -> FinePosition {
        let (rx, ry) = (k % self.width, k / self.width);
        FinePosition::new((rx as f64 + 0.5) * self.raster_m, (ry as f64 + 0.5) * self.raster_m, self.altitude)
    }

    pub fn raster_index(&self, pos: FinePosition) -> Option<usize> {
        if pos.x < 0.0 || pos.y < 0.0 {
            return None;
        }
        let rx = (pos.x / self.raster_m).floor() as usize;
        let ry = (pos.y / self.raster_m).floor() as usize;
        (rx < self.width && ry < self.width).then_some(ry * self.width + rx)
    }

    pub fn is_valid(&self, pos: FinePosition) -> bool {
        self.raster_index(pos).is_some_and(|k| self.free[k])
    }

    /// The valid point closest to the cell centre (first in scan order on ties).
    pub fn anchor(&self, cell: Cell) -> Option<FinePosition> {
        if !self.geom.in_grid(cell) {
            return None;
        }
        self.anchors[self.geom.index(cell)].map(|k| self.position_of(k as usize))
    }

    /// Exhaustive nearest valid point of `cell` to `from`.
    pub fn nearest_valid(&self, cell: Cell, from: FinePosition) -> Option<FinePosition> {
        if !self.geom.in_grid(cell) {
            return None;
        }
        let s = self.cell_span;
        let mut best: Option<(f64, usize)> = None;
        for ry in cell.j * s..(cell.j + 1) * s {
            for rx in cell.i * s..(cell.i + 1) * s {
                let k = ry * self.width + rx;
                if !self.free[k] {
                    continue;
                }
                let p = self.position_of(k);
                let d = p.planar_distance(&from);
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| self.position_of(k))
    }
}
