//! Trajectory plots as PNG, one pixel per raster point, north up.
//!
//! Palette, back to front:
//!
//! | layer            | colour                                   |
//! |------------------|------------------------------------------|
//! | zero belief      | white `#FFFFFF`                          |
//! | belief heat      | white to green `#228B22`, by `p / p_max` |
//! | buildings        | grey `#808080`                           |
//! | no-fly zones     | red `#DC2828`                            |
//! | path             | yellow `#FFC800`                         |
//! | targets          | blue `#1E3CDC`, 5 x 5 square             |
//! | start            | black `#000000`, 5 x 5 square            |
//! | final position   | magenta `#C800C8`, 5 x 5 square          |

use std::path::Path;

use anyhow::{Context, Result};
use shrinking_pomcp::height::HeightConfig;
use shrinking_pomcp::mission::EpisodeResult;
use shrinking_pomcp::scenario::Scenario;

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const HEAT: Rgb = [34, 139, 34];
pub const BUILDING: Rgb = [128, 128, 128];
pub const NO_FLY: Rgb = [220, 40, 40];
pub const PATH: Rgb = [255, 200, 0];
pub const TARGET: Rgb = [30, 60, 220];
pub const START: Rgb = [0, 0, 0];
pub const FINISH: Rgb = [200, 0, 200];

/// RGB raster; `(0, 0)` is the south-west raster point.
pub struct Canvas {
    pub width: usize,
    pub pixels: Vec<Rgb>,
}

impl Canvas {
    fn new(width: usize) -> Self {
        Canvas { width, pixels: vec![WHITE; width * width] }
    }

    /// Colour at raster point `(rx, ry)`.
    pub fn get(&self, rx: usize, ry: usize) -> Rgb {
        self.pixels[(self.width - 1 - ry) * self.width + rx]
    }

    fn set(&mut self, rx: usize, ry: usize, c: Rgb) {
        if rx < self.width && ry < self.width {
            let w = self.width;
            self.pixels[(w - 1 - ry) * w + rx] = c;
        }
    }

    fn square(&mut self, rx: usize, ry: usize, c: Rgb) {
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let (x, y) = (rx as i64 + dx, ry as i64 + dy);
                if x >= 0 && y >= 0 {
                    self.set(x as usize, y as usize, c);
                }
            }
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        let mut enc = png::Encoder::new(&mut out, self.width as u32, self.width as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(self.pixels.as_flattened())?;
        w.finish()?;
        Ok(out)
    }
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    let f = |x: u8, y: u8| (x as f64 + (y as f64 - x as f64) * t).round() as u8;
    [f(a[0], b[0]), f(a[1], b[1]), f(a[2], b[2])]
}

/// Draws the map layers and, if given, an episode on top.
pub fn draw(sc: &Scenario, episode: Option<&EpisodeResult>) -> Result<Canvas> {
    let h = episode.and_then(|e| e.trajectory.first()).map_or(HeightConfig::default().h_init, |p| p.z);
    let terrain = sc.build(h).context("scenario cannot be rendered")?;
    let omap = &terrain.omap;
    let width = omap.width();
    let span = omap.cell_span();
    let mut cv = Canvas::new(width);

    let p_max = terrain.belief.probs().iter().cloned().fold(0.0, f64::max);
    for ry in 0..width {
        for rx in 0..width {
            let (x, y) = omap.point(rx, ry);
            let k = (ry / span) * sc.grid_n + rx / span;
            let p = terrain.belief.probs()[k];
            let mut c = if p_max > 0.0 && p > 0.0 { lerp(WHITE, HEAT, p / p_max) } else { WHITE };
            if omap.height_at(rx, ry) > 0.0 {
                c = BUILDING;
            }
            if terrain.zones.iter().any(|z| z.contains(x, y)) {
                c = NO_FLY;
            }
            cv.set(rx, ry, c);
        }
    }

    let Some(ep) = episode else { return Ok(cv) };
    let raster = |x: f64, y: f64| omap.raster_of(x, y);
    for p in &ep.trajectory {
        if let Some((rx, ry)) = raster(p.x, p.y) {
            cv.set(rx, ry, PATH);
        }
    }
    let cs = terrain.geom.cell_size_m();
    for t in &ep.target_cells {
        if let Some((rx, ry)) = raster((t.i as f64 + 0.5) * cs, (t.j as f64 + 0.5) * cs) {
            cv.square(rx, ry, TARGET);
        }
    }
    if let Some(p) = ep.trajectory.first() {
        if let Some((rx, ry)) = raster(p.x, p.y) {
            cv.square(rx, ry, START);
        }
    }
    if let Some(p) = ep.trajectory.last().filter(|_| ep.trajectory.len() > 1) {
        if let Some((rx, ry)) = raster(p.x, p.y) {
            cv.square(rx, ry, FINISH);
        }
    }
    Ok(cv)
}

pub fn render_trajectory(episode: Option<&EpisodeResult>, sc: &Scenario, out: &Path) -> Result<()> {
    let bytes = draw(sc, episode)?.encode_png()?;
    std::fs::write(out, bytes).with_context(|| format!("cannot write {}", out.display()))
}
