//! Projector frame composition.
//!
//! Layers, bottom to top: tile background, pheromone colormap, virtual
//! objects, and one ring per confirmed track.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::calib::{CalibError, Homography};
use crate::field::{make_tile_layer_frame, quantize_unit, Effect, Field, Rgb, Shape, TileLayer, VirtualObject};
use crate::geom::Point;
use crate::image::ImageBuffer;
use crate::track::{Track, TrackState};

/// A 3-channel image at projector resolution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectorFrame(ImageBuffer);

impl ProjectorFrame {
    pub fn new(width: usize, height: usize) -> Self {
        Self(ImageBuffer::filled(width.max(1), height.max(1), 3, 0).expect("valid dimensions"))
    }

    pub fn image(&self) -> &ImageBuffer {
        &self.0
    }

    pub fn image_mut(&mut self) -> &mut ImageBuffer {
        &mut self.0
    }

    pub fn into_image(self) -> ImageBuffer {
        self.0
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let p = self.0.pixel(x, y);
        [p[0], p[1], p[2]]
    }
}

/// Projector resolution and the world scale anchored to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectorGeometry {
    pub width: usize,
    pub height: usize,
    pub mm_per_px: f64,
}

impl ProjectorGeometry {
    pub fn world_to_projector(&self) -> Homography {
        Homography::scaling(1.0 / self.mm_per_px, 1.0 / self.mm_per_px)
    }

    pub fn projector_to_world(&self) -> Homography {
        Homography::scaling(self.mm_per_px, self.mm_per_px)
    }

    /// World position of a pixel centre.
    fn pixel_world(&self, px: usize) -> f64 {
        (px as f64 + 0.5) * self.mm_per_px
    }
}

/// A monotone 256-entry lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Colormap(pub Vec<Rgb>);

impl Colormap {
    /// Piecewise-linear ramp through `anchors`, evenly spaced.
    pub fn from_anchors(anchors: &[Rgb]) -> Self {
        assert!(anchors.len() >= 2);
        let segs = (anchors.len() - 1) as f64;
        let lut = (0..256)
            .map(|i| {
                let t = i as f64 / 255.0 * segs;
                let k = (t.floor() as usize).min(anchors.len() - 2);
                let f = t - k as f64;
                let (a, b) = (anchors[k], anchors[k + 1]);
                [0, 1, 2].map(|c| (a[c] as f64 + (b[c] as f64 - a[c] as f64) * f).round() as u8)
            })
            .collect();
        Self(lut)
    }

    pub fn get(&self, idx: u8) -> Rgb {
        self.0[idx as usize]
    }
}

impl Default for Colormap {
    fn default() -> Self {
        Self::from_anchors(&[[0, 0, 0], [0, 90, 60], [40, 200, 90], [255, 255, 170]])
    }
}

/// How field values are mapped onto the colormap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FieldScale {
    /// Per-frame min/max; a constant field maps to index 0.
    PerFrame,
    /// Fixed `[0, max]`.
    Fixed { max: f64 },
}

fn field_indices(field: &Field, scale: FieldScale) -> Vec<u8> {
    let (lo, hi) = match scale {
        FieldScale::PerFrame => field.min_max(),
        FieldScale::Fixed { max } => (0.0, max),
    };
    field.values().iter().map(|&v| quantize_unit(v, lo, hi)).collect()
}

/// Map each projector pixel to the field cell (column, row) beneath it.
fn cell_lookup(field: &Field, geom: &ProjectorGeometry) -> (Vec<usize>, Vec<usize>) {
    let cs = field.cell_size();
    let col = (0..geom.width)
        .map(|x| ((geom.pixel_world(x) / cs) as usize).min(field.grid_width() - 1))
        .collect();
    let row = (0..geom.height)
        .map(|y| ((geom.pixel_world(y) / cs) as usize).min(field.grid_height() - 1))
        .collect();
    (col, row)
}

/// Field colors at projector resolution, nearest-cell fill.
pub fn field_colormap(
    field: &Field,
    colormap: &Colormap,
    scale: FieldScale,
    geom: &ProjectorGeometry,
) -> ImageBuffer {
    let idx = field_indices(field, scale);
    let (col, row) = cell_lookup(field, geom);
    let gw = field.grid_width();
    let mut data = Vec::with_capacity(geom.width * geom.height * 3);
    for &r in &row {
        for &c in &col {
            data.extend_from_slice(&colormap.get(idx[r * gw + c]));
        }
    }
    ImageBuffer::from_raw(geom.width, geom.height, 3, data).expect("sized to geometry")
}

/// Color every pixel whose centre lies within `thickness / 2` of the circle.
pub fn draw_ring(frame: &mut ProjectorFrame, center: Point, radius: f64, color: Rgb, thickness: f64) {
    let img = &mut frame.0;
    let (w, h) = (img.width() as f64, img.height() as f64);
    let half = thickness.max(1.0) / 2.0;
    let reach = radius + half;
    let x0 = (center.x - reach).floor().max(0.0);
    let y0 = (center.y - reach).floor().max(0.0);
    let x1 = (center.x + reach).ceil().min(w - 1.0);
    let y1 = (center.y + reach).ceil().min(h - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return;
    }
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let d = (x as f64 - center.x).hypot(y as f64 - center.y);
            if (d - radius).abs() <= half {
                img.set_pixel(x, y, &color);
            }
        }
    }
}

fn fill_shape(frame: &mut ProjectorFrame, shape: &Shape, color: Rgb, geom: &ProjectorGeometry) {
    let s = geom.mm_per_px;
    let (min, max) = match *shape {
        Shape::Disc { center, radius } => (
            Point::new(center.x - radius, center.y - radius),
            Point::new(center.x + radius, center.y + radius),
        ),
        Shape::Rect { min, max } => (min, max),
    };
    let x0 = ((min.x / s - 0.5).floor().max(0.0)) as usize;
    let y0 = ((min.y / s - 0.5).floor().max(0.0)) as usize;
    let x1 = ((max.x / s).ceil() as usize).min(geom.width);
    let y1 = ((max.y / s).ceil() as usize).min(geom.height);
    for y in y0..y1 {
        for x in x0..x1 {
            let p = Point::new(geom.pixel_world(x), geom.pixel_world(y));
            if shape.contains(p) {
                frame.0.set_pixel(x, y, &color);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorKey {
    ByTrackId,
    ByRobotState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OverlayStyle {
    pub ring_thickness: f64,
    /// Gap between the robot rim and the ring, projector px.
    pub ring_margin: f64,
    pub palette: Vec<Rgb>,
    pub color_key: ColorKey,
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            ring_thickness: 3.0,
            ring_margin: 2.0,
            palette: vec![
                [230, 40, 40],
                [40, 90, 240],
                [250, 200, 30],
                [200, 60, 220],
                [30, 210, 220],
                [255, 130, 20],
            ],
            color_key: ColorKey::ByTrackId,
        }
    }
}

impl OverlayStyle {
    pub fn validate(&self) -> Result<(), String> {
        if self.palette.is_empty() {
            return Err("palette must not be empty".into());
        }
        if !(self.ring_thickness >= 1.0) {
            return Err(format!("ring_thickness must be >= 1, got {}", self.ring_thickness));
        }
        if !(self.ring_margin >= 0.0) {
            return Err(format!("ring_margin must be >= 0, got {}", self.ring_margin));
        }
        Ok(())
    }

    /// Palette index for a track; `labels` supplies robot states for
    /// [`ColorKey::ByRobotState`] (missing entries use index 0).
    pub fn color_index(&self, track_id: u64, labels: Option<&HashMap<u64, usize>>) -> usize {
        let n = self.palette.len();
        match self.color_key {
            ColorKey::ByTrackId => (track_id % n as u64) as usize,
            ColorKey::ByRobotState => labels
                .and_then(|m| m.get(&track_id).copied())
                .unwrap_or(0)
                % n,
        }
    }
}

/// Appearance settings that are not part of the ring overlay.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSettings {
    pub geometry: ProjectorGeometry,
    pub field_opacity: f64,
    pub field_scale: FieldScale,
    pub colormap: Colormap,
    pub source_color: Rgb,
}

/// Everything one projector frame is composed from.
#[derive(Debug, Clone, Copy)]
pub struct Scene<'a> {
    pub tiles: &'a TileLayer,
    pub field: &'a Field,
    pub objects: &'a [VirtualObject],
    pub tracks: &'a [Track],
    pub camera_to_projector: &'a Homography,
    pub style: &'a OverlayStyle,
    pub tick: u64,
    pub track_labels: Option<&'a HashMap<u64, usize>>,
}

/// Ring geometry for a confirmed track: projector centre and radius.
pub fn ring_for_track(
    track: &Track,
    camera_to_projector: &Homography,
    style: &OverlayStyle,
) -> Result<(Point, f64), CalibError> {
    let c = Point::new(track.cx, track.cy);
    let center = camera_to_projector.map_point(c)?;
    let scale = camera_to_projector.local_scale(c)?;
    Ok((center, track.r * scale + style.ring_margin + style.ring_thickness / 2.0))
}

pub fn compose_projector_frame(scene: &Scene, settings: &LayerSettings) -> ProjectorFrame {
    let geom = &settings.geometry;
    let mut frame = ProjectorFrame::new(geom.width, geom.height);

    let tiles = make_tile_layer_frame(scene.tiles, scene.tick);
    let tile_col: Vec<usize> = (0..geom.width)
        .map(|x| ((geom.pixel_world(x) / tiles.tile_size) as usize).min(tiles.tw - 1))
        .collect();
    let tile_row: Vec<usize> = (0..geom.height)
        .map(|y| ((geom.pixel_world(y) / tiles.tile_size) as usize).min(tiles.th - 1))
        .collect();

    // field alpha scales with normalized concentration, so empty cells show
    // the tiles untouched
    let idx = field_indices(scene.field, settings.field_scale);
    let (fcol, frow) = cell_lookup(scene.field, geom);
    let gw = scene.field.grid_width();
    let opacity = settings.field_opacity.clamp(0.0, 1.0);
    let blend: Vec<[u16; 4]> = (0..256)
        .map(|i| {
            let a = (opacity * i as f64 / 255.0 * 256.0).round() as u16;
            let c = settings.colormap.get(i as u8);
            [c[0] as u16, c[1] as u16, c[2] as u16, a]
        })
        .collect();

    let data = frame.0.data_mut();
    let stride = geom.width * 3;
    let mut o = 0;
    for y in 0..geom.height {
        let trow = tile_row[y] * tiles.tw;
        let crow = frow[y] * gw;
        // same tile row and field row as above: identical pixels
        if y > 0 && tile_row[y] == tile_row[y - 1] && frow[y] == frow[y - 1] {
            data.copy_within(o - stride..o, o);
            o += stride;
            continue;
        }
        for x in 0..geom.width {
            let base = tiles.colors[trow + tile_col[x]];
            let [r, g, b, a] = blend[idx[crow + fcol[x]] as usize];
            let ia = 256 - a;
            data[o] = ((base[0] as u16 * ia + r * a) >> 8) as u8;
            data[o + 1] = ((base[1] as u16 * ia + g * a) >> 8) as u8;
            data[o + 2] = ((base[2] as u16 * ia + b * a) >> 8) as u8;
            o += 3;
        }
    }

    for obj in scene.objects {
        let color = match obj.effect {
            Effect::DisplayOnly { color } => color,
            Effect::DepositSource { .. } => settings.source_color,
            Effect::Blocker => continue,
        };
        fill_shape(&mut frame, &obj.shape, color, geom);
    }

    for t in scene.tracks.iter().filter(|t| t.state == TrackState::Confirmed) {
        if let Ok((center, radius)) = ring_for_track(t, scene.camera_to_projector, scene.style) {
            let color = scene.style.palette[scene.style.color_index(t.id, scene.track_labels)];
            draw_ring(&mut frame, center, radius, color, scene.style.ring_thickness);
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_outside_frame_is_clipped_away() {
        let mut f = ProjectorFrame::new(40, 30);
        draw_ring(&mut f, Point::new(-100.0, -100.0), 10.0, [255, 0, 0], 1.0);
        assert_eq!(f, ProjectorFrame::new(40, 30));
    }

    #[test]
    fn ring_annulus_membership() {
        let mut f = ProjectorFrame::new(100, 100);
        draw_ring(&mut f, Point::new(50.0, 50.0), 10.0, [255, 0, 0], 1.0);
        assert_eq!(f.pixel(60, 50), [255, 0, 0]);
        assert_eq!(f.pixel(50, 50), [0, 0, 0]);
        assert_eq!(f.pixel(65, 50), [0, 0, 0]);
    }

    #[test]
    fn zero_radius_ring_is_a_dot() {
        let mut f = ProjectorFrame::new(20, 20);
        draw_ring(&mut f, Point::new(10.0, 10.0), 0.0, [9, 9, 9], 1.0);
        let lit: Vec<_> = (0..20)
            .flat_map(|y| (0..20).map(move |x| (x, y)))
            .filter(|&(x, y)| f.pixel(x, y) != [0, 0, 0])
            .collect();
        assert_eq!(lit, vec![(10, 10)]);
    }

    #[test]
    fn colormap_is_monotone() {
        let cm = Colormap::default();
        assert_eq!(cm.0.len(), 256);
        for w in cm.0.windows(2) {
            assert!(w[1].iter().zip(&w[0]).all(|(hi, lo)| hi >= lo));
        }
    }

    fn geom(w: usize, h: usize) -> ProjectorGeometry {
        ProjectorGeometry {
            width: w,
            height: h,
            mm_per_px: 1.0,
        }
    }

    #[test]
    fn field_colormap_examples() {
        let cm = Colormap::default();
        let f = Field::new(2, 1, 10.0, 0.0, 0.0, 1.0).unwrap();
        let img = field_colormap(&f, &cm, FieldScale::PerFrame, &geom(20, 10));
        assert!(img.data().chunks(3).all(|p| p == cm.get(0)));

        let mut f2 = f.clone();
        f2.set(1, 0, 10.0).unwrap();
        let img = field_colormap(&f2, &cm, FieldScale::PerFrame, &geom(20, 10));
        assert_eq!(img.pixel(3, 5), cm.get(0));
        assert_eq!(img.pixel(15, 5), cm.get(255));

        let mut f3 = f.clone();
        f3.fill(7.0).unwrap();
        let img = field_colormap(&f3, &cm, FieldScale::PerFrame, &geom(20, 10));
        assert!(img.data().chunks(3).all(|p| p == cm.get(0)));

        let img = field_colormap(&f2, &cm, FieldScale::Fixed { max: 20.0 }, &geom(20, 10));
        assert_eq!(img.pixel(15, 5), cm.get(128));
    }

    #[test]
    fn color_index_rules() {
        let style = OverlayStyle {
            palette: vec![[1, 0, 0], [0, 0, 1]],
            ..OverlayStyle::default()
        };
        assert_eq!(style.color_index(0, None), 0);
        assert_eq!(style.color_index(1, None), 1);
        assert_eq!(style.color_index(4, None), 0);
        let by_state = OverlayStyle {
            color_key: ColorKey::ByRobotState,
            ..style
        };
        let labels: HashMap<u64, usize> = [(4, 1)].into();
        assert_eq!(by_state.color_index(4, Some(&labels)), 1);
        assert_eq!(by_state.color_index(5, Some(&labels)), 0);
    }
}
