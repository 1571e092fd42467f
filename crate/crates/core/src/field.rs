//! The stigmergic virtual environment.
//!
//! A scalar pheromone grid with point deposits, explicit 5-point diffusion
//! with zero-flux walls and exponential evaporation; a tiled background with
//! counter-keyed dynamic noise; and virtual objects placed in the arena.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum FieldError {
    #[error("position ({0}, {1}) lies outside the field")]
    OutOfBounds(f64, f64),
    #[error("unstable diffusion: D*dt/cell_size^2 = {0} exceeds 0.25")]
    Unstable(f64),
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error("invalid amount {0}")]
    Amount(f64),
}

pub type Result<T, E = FieldError> = std::result::Result<T, E>;

/// Largest explicit-Euler coefficient `D·dt/h²` the 5-point stencil tolerates.
pub const STABILITY_LIMIT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    gw: usize,
    gh: usize,
    cell_size: f64,
    values: Vec<f64>,
    diffusion_d: f64,
    evaporation_rho: f64,
    walls: Vec<bool>,
}

impl Field {
    /// An empty field. `tick_dt` is the step the field will be advanced by
    /// and is only used to check the stability bound.
    pub fn new(
        gw: usize,
        gh: usize,
        cell_size: f64,
        diffusion_d: f64,
        evaporation_rho: f64,
        tick_dt: f64,
    ) -> Result<Self> {
        if gw == 0 || gh == 0 {
            return Err(FieldError::Config(format!("grid must be non-empty, got {gw}x{gh}")));
        }
        if !(cell_size > 0.0) {
            return Err(FieldError::Config(format!("cell_size must be positive, got {cell_size}")));
        }
        if !(diffusion_d >= 0.0) || !(evaporation_rho >= 0.0) {
            return Err(FieldError::Config(
                "diffusion_d and evaporation_rho must be non-negative".into(),
            ));
        }
        let f = Self {
            gw,
            gh,
            cell_size,
            values: vec![0.0; gw * gh],
            diffusion_d,
            evaporation_rho,
            walls: vec![false; gw * gh],
        };
        f.check_stability(tick_dt)?;
        Ok(f)
    }

    /// A field covering a `width_mm × height_mm` arena.
    pub fn for_arena(
        width_mm: f64,
        height_mm: f64,
        cell_size: f64,
        diffusion_d: f64,
        evaporation_rho: f64,
        tick_dt: f64,
    ) -> Result<Self> {
        let gw = (width_mm / cell_size).ceil().max(1.0) as usize;
        let gh = (height_mm / cell_size).ceil().max(1.0) as usize;
        Self::new(gw, gh, cell_size, diffusion_d, evaporation_rho, tick_dt)
    }

    pub fn stability_number(&self, dt: f64) -> f64 {
        self.diffusion_d * dt / (self.cell_size * self.cell_size)
    }

    pub fn check_stability(&self, dt: f64) -> Result<()> {
        let c = self.stability_number(dt);
        if c > STABILITY_LIMIT {
            return Err(FieldError::Unstable(c));
        }
        Ok(())
    }

    pub fn grid_width(&self) -> usize {
        self.gw
    }

    pub fn grid_height(&self) -> usize {
        self.gh
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn width_mm(&self) -> f64 {
        self.gw as f64 * self.cell_size
    }

    pub fn height_mm(&self) -> f64 {
        self.gh as f64 * self.cell_size
    }

    pub fn diffusion_d(&self) -> f64 {
        self.diffusion_d
    }

    pub fn evaporation_rho(&self) -> f64 {
        self.evaporation_rho
    }

    pub fn set_evaporation_rho(&mut self, rho: f64) -> Result<()> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(FieldError::Config(format!("evaporation_rho must be >= 0, got {rho}")));
        }
        self.evaporation_rho = rho;
        Ok(())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.gw + ix]
    }

    /// Overwrite one cell; negative or non-finite values are rejected.
    pub fn set(&mut self, ix: usize, iy: usize, v: f64) -> Result<()> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(FieldError::Amount(v));
        }
        self.values[iy * self.gw + ix] = v;
        Ok(())
    }

    pub fn fill(&mut self, v: f64) -> Result<()> {
        if !(v >= 0.0) || !v.is_finite() {
            return Err(FieldError::Amount(v));
        }
        self.values.iter_mut().for_each(|c| *c = v);
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn contains(&self, pos: Point) -> bool {
        pos.is_finite()
            && (0.0..=self.width_mm()).contains(&pos.x)
            && (0.0..=self.height_mm()).contains(&pos.y)
    }

    /// Cell containing `pos`; the far edges belong to the last cell.
    pub fn cell_of(&self, pos: Point) -> Result<(usize, usize)> {
        if !self.contains(pos) {
            return Err(FieldError::OutOfBounds(pos.x, pos.y));
        }
        let ix = ((pos.x / self.cell_size) as usize).min(self.gw - 1);
        let iy = ((pos.y / self.cell_size) as usize).min(self.gh - 1);
        Ok((ix, iy))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Point {
        Point::new(
            (ix as f64 + 0.5) * self.cell_size,
            (iy as f64 + 0.5) * self.cell_size,
        )
    }

    /// Add `amount` to the single cell containing `pos`.
    pub fn deposit(&mut self, pos: Point, amount: f64) -> Result<()> {
        if !(amount >= 0.0) || !amount.is_finite() {
            return Err(FieldError::Amount(amount));
        }
        let (ix, iy) = self.cell_of(pos)?;
        self.values[iy * self.gw + ix] += amount;
        Ok(())
    }

    /// Mark cells whose centres fall inside blocker objects as walls.
    pub fn set_blockers(&mut self, objects: &[VirtualObject]) {
        let blockers: Vec<&Shape> = objects
            .iter()
            .filter(|o| matches!(o.effect, Effect::Blocker))
            .map(|o| &o.shape)
            .collect();
        for iy in 0..self.gh {
            for ix in 0..self.gw {
                let c = self.cell_center(ix, iy);
                self.walls[iy * self.gw + ix] = blockers.iter().any(|s| s.contains(c));
            }
        }
    }

    pub fn is_wall(&self, ix: usize, iy: usize) -> bool {
        self.walls[iy * self.gw + ix]
    }

    /// One explicit step: 5-point diffusion with zero-flux boundaries, then
    /// evaporation. Wall cells neither give nor receive mass by diffusion.
    pub fn step(&mut self, dt: f64) -> Result<()> {
        if !(dt > 0.0) {
            return Err(FieldError::Config(format!("dt must be positive, got {dt}")));
        }
        self.check_stability(dt)?;
        let c = self.stability_number(dt);
        let (w, h) = (self.gw, self.gh);
        if c > 0.0 {
            let v = &self.values;
            let walls = &self.walls;
            let mut next = v.clone();
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    if walls[i] {
                        continue;
                    }
                    let vc = v[i];
                    let mut lap = 0.0;
                    if x > 0 && !walls[i - 1] {
                        lap += v[i - 1] - vc;
                    }
                    if x + 1 < w && !walls[i + 1] {
                        lap += v[i + 1] - vc;
                    }
                    if y > 0 && !walls[i - w] {
                        lap += v[i - w] - vc;
                    }
                    if y + 1 < h && !walls[i + w] {
                        lap += v[i + w] - vc;
                    }
                    next[i] = vc + c * lap;
                }
            }
            self.values = next;
        }
        if self.evaporation_rho > 0.0 {
            let decay = (-self.evaporation_rho * dt).exp();
            self.values.iter_mut().for_each(|v| *v *= decay);
        }
        Ok(())
    }

    /// Bilinear interpolation between cell centres, clamped at the borders.
    pub fn sample(&self, pos: Point) -> Result<f64> {
        if !self.contains(pos) {
            return Err(FieldError::OutOfBounds(pos.x, pos.y));
        }
        let fx = (pos.x / self.cell_size - 0.5).clamp(0.0, (self.gw - 1) as f64);
        let fy = (pos.y / self.cell_size - 0.5).clamp(0.0, (self.gh - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.gw - 1), (y0 + 1).min(self.gh - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - tx) + self.get(x1, y0) * tx;
        let bot = self.get(x0, y1) * (1.0 - tx) + self.get(x1, y1) * tx;
        Ok(top * (1.0 - ty) + bot * ty)
    }

    /// Area-averaged, 8-bit quantized copy no larger than `max_dim` per side.
    pub fn thumbnail(&self, max_dim: usize) -> Thumbnail {
        let max_dim = max_dim.max(1);
        let f = self.gw.max(self.gh).div_ceil(max_dim).max(1);
        let (tw, th) = (self.gw.div_ceil(f), self.gh.div_ceil(f));
        let mut avg = Vec::with_capacity(tw * th);
        for ty in 0..th {
            for tx in 0..tw {
                let (mut s, mut n) = (0.0, 0usize);
                for y in ty * f..((ty + 1) * f).min(self.gh) {
                    for x in tx * f..((tx + 1) * f).min(self.gw) {
                        s += self.get(x, y);
                        n += 1;
                    }
                }
                avg.push(s / n as f64);
            }
        }
        let (lo, hi) = avg
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let data = avg.iter().map(|&v| quantize_unit(v, lo, hi)).collect();
        Thumbnail {
            width: tw,
            height: th,
            min: lo,
            max: hi,
            data,
        }
    }
}

/// Map `v` in `[lo, hi]` to `0..=255`; a degenerate range maps to 0.
pub fn quantize_unit(v: f64, lo: f64, hi: f64) -> u8 {
    if hi > lo {
        (((v - lo) / (hi - lo)) * 255.0).round().clamp(0.0, 255.0) as u8
    } else {
        0
    }
}

/// Downsampled, quantized field snapshot for telemetry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thumbnail {
    pub width: usize,
    pub height: usize,
    pub min: f64,
    pub max: f64,
    pub data: Vec<u8>,
}

// ---------------------------------------------------------------------------
// Tiles

pub type Rgb = [u8; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Per-tile luminance offset, uniform in ±amplitude·255.
    Flicker,
    /// Each tile shows the other label with probability `amplitude`.
    Flip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileLayer {
    pub tw: usize,
    pub th: usize,
    pub tile_size: f64,
    pub base_colors: [Rgb; 2],
    /// Row-major binary labels, `tw × th`.
    pub pattern: Vec<u8>,
    pub noise_amplitude: f64,
    pub noise_mode: NoiseMode,
    pub noise_seed: u64,
}

impl TileLayer {
    pub fn new(
        tw: usize,
        th: usize,
        tile_size: f64,
        base_colors: [Rgb; 2],
        pattern: Vec<u8>,
    ) -> Result<Self> {
        let layer = Self {
            tw,
            th,
            tile_size,
            base_colors,
            pattern,
            noise_amplitude: 0.0,
            noise_mode: NoiseMode::Flip,
            noise_seed: 0,
        };
        layer.validate()?;
        Ok(layer)
    }

    pub fn checkerboard(tw: usize, th: usize, tile_size: f64, base_colors: [Rgb; 2]) -> Result<Self> {
        let pattern = (0..th)
            .flat_map(|y| (0..tw).map(move |x| ((x + y) % 2) as u8))
            .collect();
        Self::new(tw, th, tile_size, base_colors, pattern)
    }

    /// Each tile is label 1 with probability `fraction`, keyed by `seed`.
    pub fn random(
        tw: usize,
        th: usize,
        tile_size: f64,
        base_colors: [Rgb; 2],
        fraction: f64,
        seed: u64,
    ) -> Result<Self> {
        let pattern = (0..tw * th)
            .map(|i| (rng::unit_f64(rng::key(&[seed, 0x7A11, i as u64])) < fraction) as u8)
            .collect();
        Self::new(tw, th, tile_size, base_colors, pattern)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tw == 0 || self.th == 0 {
            return Err(FieldError::Config("tile counts must be >= 1".into()));
        }
        if !(self.tile_size > 0.0) {
            return Err(FieldError::Config("tile_size must be positive".into()));
        }
        if self.pattern.len() != self.tw * self.th {
            return Err(FieldError::Config(format!(
                "pattern has {} labels, expected {}",
                self.pattern.len(),
                self.tw * self.th
            )));
        }
        if self.pattern.iter().any(|&l| l > 1) {
            return Err(FieldError::Config("tile labels must be 0 or 1".into()));
        }
        check_amplitude(self.noise_amplitude)
    }

    pub fn set_noise_amplitude(&mut self, amplitude: f64) -> Result<()> {
        check_amplitude(amplitude)?;
        self.noise_amplitude = amplitude;
        Ok(())
    }
}

pub fn check_amplitude(a: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&a) {
        return Err(FieldError::Config(format!("amplitude {a} out of [0,1]")));
    }
    Ok(())
}

/// The tile layer as displayed at one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TileFrame {
    pub tw: usize,
    pub th: usize,
    pub tile_size: f64,
    pub labels: Vec<u8>,
    pub colors: Vec<Rgb>,
}

impl TileFrame {
    /// Index of the tile under `pos`, clamped to the grid.
    pub fn tile_index(&self, pos: Point) -> usize {
        let tx = (pos.x / self.tile_size).floor().clamp(0.0, (self.tw - 1) as f64) as usize;
        let ty = (pos.y / self.tile_size).floor().clamp(0.0, (self.th - 1) as f64) as usize;
        ty * self.tw + tx
    }

    pub fn label_at(&self, pos: Point) -> u8 {
        self.labels[self.tile_index(pos)]
    }

    pub fn color_at(&self, pos: Point) -> Rgb {
        self.colors[self.tile_index(pos)]
    }
}

/// Per-tile display state at tick `t`; a pure function of
/// `(noise_seed, t, tile index)` and the layer settings.
pub fn make_tile_layer_frame(tiles: &TileLayer, t: u64) -> TileFrame {
    let n = tiles.tw * tiles.th;
    let a = tiles.noise_amplitude;
    let mut labels = tiles.pattern.clone();
    let mut colors: Vec<Rgb> = labels.iter().map(|&l| tiles.base_colors[l as usize]).collect();
    if a > 0.0 {
        for i in 0..n {
            let u = rng::unit_f64(rng::key(&[tiles.noise_seed, t, i as u64]));
            match tiles.noise_mode {
                NoiseMode::Flip => {
                    if u < a {
                        labels[i] ^= 1;
                        colors[i] = tiles.base_colors[labels[i] as usize];
                    }
                }
                NoiseMode::Flicker => {
                    let off = (2.0 * u - 1.0) * a * 255.0;
                    colors[i] = colors[i].map(|c| (c as f64 + off).round().clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    TileFrame {
        tw: tiles.tw,
        th: tiles.th,
        tile_size: tiles.tile_size,
        labels,
        colors,
    }
}

// ---------------------------------------------------------------------------
// Virtual objects

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Shape {
    Disc { center: Point, radius: f64 },
    Rect { min: Point, max: Point },
}

impl Shape {
    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Shape::Disc { center, radius } => center.dist2(p) <= radius * radius,
            Shape::Rect { min, max } => {
                (min.x..=max.x).contains(&p.x) && (min.y..=max.y).contains(&p.y)
            }
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Shape::Disc { center, .. } => center,
            Shape::Rect { min, max } => Point::new((min.x + max.x) / 2.0, (min.y + max.y) / 2.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Effect {
    /// Emits `rate` concentration·cell per second at the shape centre.
    DepositSource { rate: f64 },
    Blocker,
    DisplayOnly { color: Rgb },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VirtualObject {
    pub id: u32,
    pub shape: Shape,
    pub effect: Effect,
}

impl VirtualObject {
    pub fn validate(&self) -> Result<()> {
        let ok_shape = match self.shape {
            Shape::Disc { center, radius } => center.is_finite() && radius > 0.0 && radius.is_finite(),
            Shape::Rect { min, max } => {
                min.is_finite() && max.is_finite() && max.x > min.x && max.y > min.y
            }
        };
        if !ok_shape {
            return Err(FieldError::Config(format!(
                "object {} has a shape without positive measure",
                self.id
            )));
        }
        if let Effect::DepositSource { rate } = self.effect {
            if !(rate >= 0.0) || !rate.is_finite() {
                return Err(FieldError::Config(format!(
                    "object {} has invalid deposit rate {rate}",
                    self.id
                )));
            }
        }
        Ok(())
    }
}
