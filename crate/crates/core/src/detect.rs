//! Marker-free circle detection with a two-stage gradient Hough transform.
//!
//! Stage one: every strong edge pixel votes for candidate centres along its
//! gradient line, in both directions, for each integer radius in range.
//! Stage two: for each accepted centre, the radius is the mode of the
//! edge-distance histogram. Voting both polarities lets the same detector
//! find robots darker or brighter than the floor.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{self, GradientField, ImageBuffer, ImageError};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("invalid Hough parameters: {0}")]
    Params(String),
    #[error("no edge pixels within the radius annulus around ({0:.1}, {1:.1})")]
    NoSupport(f64, f64),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T, E = DetectError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoughParams {
    pub r_min: u32,
    pub r_max: u32,
    /// Accumulator downscale factor.
    pub dp: u32,
    /// Sobel magnitude cutoff for edge pixels.
    pub edge_threshold: f32,
    /// Minimum accumulator votes for a centre.
    pub center_threshold: u32,
    /// Minimum distance between accepted centres, full-resolution px.
    pub min_center_dist: f64,
    pub max_circles: usize,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self {
            r_min: 8,
            r_max: 24,
            dp: 2,
            edge_threshold: 60.0,
            center_threshold: 60,
            min_center_dist: 12.0,
            max_circles: 1024,
        }
    }
}

impl HoughParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(DetectError::Params(m));
        if !(0 < self.r_min && self.r_min < self.r_max) {
            return bad(format!("need 0 < r_min < r_max, got {} and {}", self.r_min, self.r_max));
        }
        if self.dp < 1 {
            return bad("dp must be >= 1".into());
        }
        if !(self.min_center_dist >= 1.0) {
            return bad(format!("min_center_dist must be >= 1, got {}", self.min_center_dist));
        }
        if !(self.edge_threshold > 0.0) {
            return bad(format!("edge_threshold must be positive, got {}", self.edge_threshold));
        }
        Ok(())
    }
}

/// A circle hypothesis in camera pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub score: u32,
}

/// Centre votes on a grid downscaled by `dp`.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub width: usize,
    pub height: usize,
    pub dp: u32,
    pub votes: Vec<u32>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, dp: u32) -> Self {
        Self {
            width,
            height,
            dp,
            votes: vec![0; width * height],
        }
    }

    /// Accumulator sized for an image of `w × h` pixels.
    pub fn for_image(w: usize, h: usize, dp: u32) -> Self {
        let dp_us = dp as usize;
        Self::new(w.div_ceil(dp_us), h.div_ceil(dp_us), dp)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u32 {
        self.votes[y * self.width + x]
    }

    pub fn total(&self) -> u64 {
        self.votes.iter().map(|&v| v as u64).sum()
    }
}

pub fn hough_vote_centers(grad: &GradientField, params: &HoughParams) -> Result<Accumulator> {
    params.validate()?;
    if grad.width < 3 || grad.height < 3 {
        return Err(ImageError::Precondition(format!(
            "gradient field must be at least 3x3, got {}x{}",
            grad.width, grad.height
        ))
        .into());
    }
    let mut acc = Accumulator::for_image(grad.width, grad.height, params.dp);
    let inv_dp = 1.0 / params.dp as f32;
    let thr = params.edge_threshold;
    for y in 0..grad.height {
        for x in 0..grad.width {
            let i = y * grad.width + x;
            let m = grad.mag[i];
            if m < thr || m <= 0.0 {
                continue;
            }
            let ux = grad.gx[i] / m * inv_dp;
            let uy = grad.gy[i] / m * inv_dp;
            let (fx, fy) = (x as f32 * inv_dp, y as f32 * inv_dp);
            cast_votes(&mut acc, fx, fy, ux, uy, params);
        }
    }
    Ok(acc)
}

/// Cell `a` outranks cell `b`: more votes, or equal votes and smaller (y, x).
#[inline]
fn outranks(va: u32, a: (usize, usize), vb: u32, b: (usize, usize)) -> bool {
    va > vb || (va == vb && a < b)
}

/// Peak centres `(cx, cy, votes)` in full-resolution pixels.
pub fn extract_center_peaks(acc: &Accumulator, params: &HoughParams) -> Vec<(f64, f64, u32)> {
    let (w, h) = (acc.width, acc.height);
    let thr = params.center_threshold.max(1);
    let mut cand: Vec<(u32, usize, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let v = acc.at(x, y);
            if v < thr {
                continue;
            }
            let mut is_max = true;
            'nb: for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    if (nx, ny) != (x, y) && !outranks(v, (y, x), acc.at(nx, ny), (ny, nx)) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                cand.push((v, y, x));
            }
        }
    }
    cand.sort_by(|a, b| b.0.cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let dp = acc.dp as f64;
    let min_d2 = params.min_center_dist * params.min_center_dist;
    let mut out: Vec<(f64, f64, u32)> = Vec::new();
    for (v, y, x) in cand {
        if out.len() >= params.max_circles {
            break;
        }
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                let wv = acc.at(nx, ny) as f64;
                sw += wv;
                sx += wv * nx as f64;
                sy += wv * ny as f64;
            }
        }
        let (cx, cy) = (sx / sw * dp, sy / sw * dp);
        let clash = out
            .iter()
            .any(|&(ox, oy, _)| (ox - cx).powi(2) + (oy - cy).powi(2) < min_d2);
        if !clash {
            out.push((cx, cy, v));
        }
    }
    out
}

/// Mode of the integer edge-distance histogram over `[r_min, r_max]`;
/// returns `(radius, support)`, ties toward the smaller radius.
pub fn estimate_radius(
    center: (f64, f64),
    grad: &GradientField,
    params: &HoughParams,
) -> Result<(u32, u32)> {
    let thr = params.edge_threshold;
    radius_mode(center, grad.width, grad.height, params, |i| {
        !(grad.mag[i] < thr)
    })
}

fn radius_mode(
    center: (f64, f64),
    width: usize,
    height: usize,
    params: &HoughParams,
    is_edge: impl Fn(usize) -> bool,
) -> Result<(u32, u32)> {
    let (cx, cy) = center;
    if !(cx >= 0.0 && cy >= 0.0 && cx <= (width - 1) as f64 && cy <= (height - 1) as f64) {
        return Err(ImageError::Precondition(format!("centre ({cx}, {cy}) outside image")).into());
    }
    let reach = params.r_max as f64 + 1.0;
    let x0 = (cx - reach).floor().max(0.0) as usize;
    let y0 = (cy - reach).floor().max(0.0) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(width - 1);
    let y1 = ((cy + reach).ceil() as usize).min(height - 1);
    let lo = params.r_min as usize;
    let mut hist = vec![0u32; (params.r_max - params.r_min + 1) as usize];
    for y in y0..=y1 {
        let dy = y as f64 - cy;
        for x in x0..=x1 {
            if !is_edge(y * width + x) {
                continue;
            }
            let dx = x as f64 - cx;
            let bin = (dx * dx + dy * dy).sqrt().round() as usize;
            if bin >= lo && bin - lo < hist.len() {
                hist[bin - lo] += 1;
            }
        }
    }
    let (best, &count) = hist
        .iter()
        .enumerate()
        .rev()
        .max_by_key(|(_, &c)| c)
        .expect("radius range is non-empty");
    if count == 0 {
        return Err(DetectError::NoSupport(cx, cy));
    }
    // `rev` + `max_by_key` keeps the last maximum seen, i.e. the smallest radius
    Ok((params.r_min + best as u32, count))
}

/// Blur → gradients → centre voting → peaks → radius per peak.
///
/// Streams the image row by row so only a few rows of filter output are
/// live at once; the result is identical to running [`image::blur_plane`],
/// [`image::sobel_plane`] and [`detect_in_gradients`] in sequence.
pub fn detect_circles(
    img: &ImageBuffer,
    params: &HoughParams,
    blur_sigma: f64,
    blur_ksize: usize,
) -> Result<Vec<Detection>> {
    params.validate()?;
    img.require_gray("detect_circles")?;
    let (w, h) = (img.width(), img.height());
    if w < 3 || h < 3 {
        return Err(ImageError::Precondition(format!(
            "image must be at least 3x3, got {w}x{h}"
        ))
        .into());
    }
    let k = image::kernel_f32(blur_sigma, blur_ksize)?;
    let edges = scan_edges(img, &k, params.edge_threshold);

    let mut acc = Accumulator::for_image(w, h, params.dp);
    let inv_dp = 1.0 / params.dp as f32;
    for e in &edges.points {
        let ux = e.gx / e.mag * inv_dp;
        let uy = e.gy / e.mag * inv_dp;
        let (fx, fy) = (e.x as f32 * inv_dp, e.y as f32 * inv_dp);
        cast_votes(&mut acc, fx, fy, ux, uy, params);
    }
    let peaks = extract_center_peaks(&acc, params);
    Ok(finish_detections(peaks, &edges, params))
}

struct EdgePoint {
    x: u32,
    y: u32,
    gx: f32,
    gy: f32,
    mag: f32,
}

struct EdgeScan {
    width: usize,
    height: usize,
    points: Vec<EdgePoint>,
    /// `points[row_start[y]..row_start[y + 1]]` lie on row `y`.
    row_start: Vec<usize>,
    /// One bit per pixel, set where the magnitude reaches the threshold.
    bits: Vec<u64>,
}

impl EdgeScan {
    fn is_edge(&self, i: usize) -> bool {
        self.bits[i >> 6] >> (i & 63) & 1 == 1
    }
}

/// Ring of computed rows keyed by source row index.
struct RowRing {
    rows: Vec<Vec<f32>>,
    tags: Vec<usize>,
}

impl RowRing {
    fn new(n: usize, w: usize) -> Self {
        Self {
            rows: vec![vec![0.0; w]; n],
            tags: vec![usize::MAX; n],
        }
    }

    fn slot(&self, idx: usize) -> usize {
        idx % self.rows.len()
    }

    fn ensure(&mut self, idx: usize, fill: impl FnOnce(&mut [f32])) {
        let s = self.slot(idx);
        if self.tags[s] != idx {
            fill(&mut self.rows[s]);
            self.tags[s] = idx;
        }
    }

    fn get(&self, idx: usize) -> &[f32] {
        let s = self.slot(idx);
        debug_assert_eq!(self.tags[s], idx);
        &self.rows[s]
    }
}

fn scan_edges(img: &ImageBuffer, k: &[f32], thr: f32) -> EdgeScan {
    let (w, h) = (img.width(), img.height());
    let ks = k.len();
    let half = ks / 2;
    let clamp_row = |y: isize| y.clamp(0, h as isize - 1) as usize;

    let mut src = vec![0f32; w];
    let mut hring = RowRing::new(ks, w);
    let mut bring = RowRing::new(3, w);
    let (mut gx, mut gy, mut mag) = (vec![0f32; w], vec![0f32; w], vec![0f32; w]);
    let mut points = Vec::new();
    let mut row_start = Vec::with_capacity(h + 1);
    let mut bits = vec![0u64; (w * h).div_ceil(64)];

    let mut blurred_row = |y: usize, hring: &mut RowRing, bring: &mut RowRing| {
        if bring.tags[bring.slot(y)] == y {
            return;
        }
        for t in 0..ks {
            let sy = clamp_row(y as isize + t as isize - half as isize);
            hring.ensure(sy, |out| {
                for (d, &v) in src.iter_mut().zip(&img.data()[sy * w..(sy + 1) * w]) {
                    *d = v as f32;
                }
                if ks == 1 {
                    out.copy_from_slice(&src);
                } else {
                    image::blur_row_h(&src, k, out);
                }
            });
        }
        let rows: Vec<&[f32]> = (0..ks)
            .map(|t| hring.get(clamp_row(y as isize + t as isize - half as isize)))
            .collect();
        bring.ensure(y, |out| {
            if ks == 1 {
                out.copy_from_slice(rows[0]);
            } else {
                image::blur_rows_v(&rows, k, out);
            }
        });
    };

    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        blurred_row(ym, &mut hring, &mut bring);
        blurred_row(y, &mut hring, &mut bring);
        blurred_row(yp, &mut hring, &mut bring);
        image::sobel_row(bring.get(ym), bring.get(y), bring.get(yp), &mut gx, &mut gy, &mut mag);
        row_start.push(points.len());
        for x in 0..w {
            if mag[x] < thr {
                continue;
            }
            let i = y * w + x;
            bits[i >> 6] |= 1 << (i & 63);
            points.push(EdgePoint {
                x: x as u32,
                y: y as u32,
                gx: gx[x],
                gy: gy[x],
                mag: mag[x],
            });
        }
    }
    row_start.push(points.len());
    EdgeScan {
        width: w,
        height: h,
        points,
        row_start,
        bits,
    }
}

#[inline]
fn cast_votes(acc: &mut Accumulator, fx: f32, fy: f32, ux: f32, uy: f32, params: &HoughParams) {
    let (aw, ah) = (acc.width as i64, acc.height as i64);
    for r in params.r_min..=params.r_max {
        let (ox, oy) = (r as f32 * ux, r as f32 * uy);
        for (px, py) in [(fx + ox, fy + oy), (fx - ox, fy - oy)] {
            // floor(p + 0.5); truncation is floor once p + 0.5 >= 0
            let (qx, qy) = (px + 0.5, py + 0.5);
            if qx < 0.0 || qy < 0.0 {
                continue;
            }
            let (cx, cy) = (qx as i64, qy as i64);
            if cx < aw && cy < ah {
                acc.votes[(cy * aw + cx) as usize] += 1;
            }
        }
    }
}

fn sort_detections(mut out: Vec<Detection>) -> Vec<Detection> {
    out.sort_by(|a, b| {
        b.score
            .cmp(&a.score)
            .then(a.cy.total_cmp(&b.cy))
            .then(a.cx.total_cmp(&b.cx))
    });
    out
}

/// The detector stages after gradient computation.
pub fn detect_in_gradients(grad: &GradientField, params: &HoughParams) -> Result<Vec<Detection>> {
    let acc = hough_vote_centers(grad, params)?;
    let peaks = extract_center_peaks(&acc, params);
    let src = GradientEdges {
        grad,
        thr: params.edge_threshold,
    };
    Ok(finish_detections(peaks, &src, params))
}

/// Read access to edge pixels, shared by the staged and streaming paths.
trait EdgeSource {
    fn dims(&self) -> (usize, usize);
    /// Magnitude reaches the edge threshold.
    fn is_edge(&self, i: usize) -> bool;
    /// Visit `(x, y, gx, gy, mag)` of edge pixels inside the inclusive box,
    /// row-major.
    fn visit_box(&self, x0: usize, x1: usize, y0: usize, y1: usize, f: &mut dyn FnMut(&EdgePoint));
}

impl EdgeSource for EdgeScan {
    fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn is_edge(&self, i: usize) -> bool {
        EdgeScan::is_edge(self, i)
    }

    fn visit_box(&self, x0: usize, x1: usize, y0: usize, y1: usize, f: &mut dyn FnMut(&EdgePoint)) {
        for y in y0..=y1 {
            let row = &self.points[self.row_start[y]..self.row_start[y + 1]];
            let lo = row.partition_point(|e| (e.x as usize) < x0);
            for e in row[lo..].iter().take_while(|e| e.x as usize <= x1) {
                f(e);
            }
        }
    }
}

struct GradientEdges<'a> {
    grad: &'a GradientField,
    thr: f32,
}

impl EdgeSource for GradientEdges<'_> {
    fn dims(&self) -> (usize, usize) {
        (self.grad.width, self.grad.height)
    }

    fn is_edge(&self, i: usize) -> bool {
        !(self.grad.mag[i] < self.thr)
    }

    fn visit_box(&self, x0: usize, x1: usize, y0: usize, y1: usize, f: &mut dyn FnMut(&EdgePoint)) {
        let g = self.grad;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let i = y * g.width + x;
                if self.is_edge(i) {
                    f(&EdgePoint {
                        x: x as u32,
                        y: y as u32,
                        gx: g.gx[i],
                        gy: g.gy[i],
                        mag: g.mag[i],
                    });
                }
            }
        }
    }
}

/// Half-width of the full-resolution window used to refine a centre.
const REFINE_HALF: i64 = 3;

/// Re-vote at full resolution in a small window around a coarse centre,
/// using only radii within one pixel of `r_hat`, and return the
/// vote-weighted 3×3 centroid around the window maximum.
#[allow(clippy::needless_range_loop)]
fn refine_center(
    center: (f64, f64),
    r_hat: u32,
    src: &dyn EdgeSource,
    params: &HoughParams,
) -> (f64, f64) {
    const N: usize = (2 * REFINE_HALF + 1) as usize;
    let (w, h) = src.dims();
    let gx0 = center.0.round() as i64 - REFINE_HALF;
    let gy0 = center.1.round() as i64 - REFINE_HALF;
    let r_lo = r_hat.saturating_sub(1).max(params.r_min);
    let r_hi = (r_hat + 1).min(params.r_max);
    let reach = r_hi as f64 + REFINE_HALF as f64 + 1.0;
    let x0 = (center.0 - reach).floor().max(0.0) as usize;
    let y0 = (center.1 - reach).floor().max(0.0) as usize;
    let x1 = ((center.0 + reach).ceil() as usize).min(w - 1);
    let y1 = ((center.1 + reach).ceil() as usize).min(h - 1);

    let mut votes = [[0u32; N]; N];
    src.visit_box(x0, x1, y0, y1, &mut |e| {
        if !(e.mag > 0.0) {
            return;
        }
        let (ux, uy) = (e.gx / e.mag, e.gy / e.mag);
        let (fx, fy) = (e.x as f32, e.y as f32);
        for r in r_lo..=r_hi {
            let (ox, oy) = (r as f32 * ux, r as f32 * uy);
            for (px, py) in [(fx + ox, fy + oy), (fx - ox, fy - oy)] {
                let (qx, qy) = (px + 0.5, py + 0.5);
                if qx < 0.0 || qy < 0.0 {
                    continue;
                }
                let (lx, ly) = (qx as i64 - gx0, qy as i64 - gy0);
                if (0..N as i64).contains(&lx) && (0..N as i64).contains(&ly) {
                    votes[ly as usize][lx as usize] += 1;
                }
            }
        }
    });

    let mut best = (0u32, 0usize, 0usize);
    for (y, row) in votes.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            if v > best.0 {
                best = (v, y, x);
            }
        }
    }
    if best.0 == 0 {
        return center;
    }
    let (_, by, bx) = best;
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for y in by.saturating_sub(1)..=(by + 1).min(N - 1) {
        for x in bx.saturating_sub(1)..=(bx + 1).min(N - 1) {
            let v = votes[y][x] as f64;
            sw += v;
            sx += v * x as f64;
            sy += v * y as f64;
        }
    }
    (gx0 as f64 + sx / sw, gy0 as f64 + sy / sw)
}

/// Radius per peak, full-resolution centre refinement, final radius.
fn finish_detections(
    peaks: Vec<(f64, f64, u32)>,
    src: &dyn EdgeSource,
    params: &HoughParams,
) -> Vec<Detection> {
    let (w, h) = src.dims();
    let clamp = |c: (f64, f64)| (c.0.clamp(0.0, (w - 1) as f64), c.1.clamp(0.0, (h - 1) as f64));
    let edge = |i: usize| src.is_edge(i);
    let dets = peaks
        .into_iter()
        .filter_map(|(cx, cy, votes)| {
            let coarse = clamp((cx, cy));
            let (r0, _) = radius_mode(coarse, w, h, params, edge).ok()?;
            let c = clamp(refine_center(coarse, r0, src, params));
            let (r, _) = radius_mode(c, w, h, params, edge).ok()?;
            Some(Detection {
                cx: c.0,
                cy: c.1,
                r: r as f64,
                score: votes,
            })
        })
        .collect();
    sort_detections(dets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(r_min: u32, r_max: u32, dp: u32) -> HoughParams {
        HoughParams {
            r_min,
            r_max,
            dp,
            edge_threshold: 1.0,
            center_threshold: 50,
            min_center_dist: 10.0,
            max_circles: 100,
        }
    }

    #[test]
    fn zero_gradients_cast_no_votes() {
        let g = GradientField::from_components(20, 20, vec![0.0; 400], vec![0.0; 400]);
        let acc = hough_vote_centers(&g, &params(3, 6, 1)).unwrap();
        assert_eq!(acc.total(), 0);
        assert!(extract_center_peaks(&acc, &params(3, 6, 1)).is_empty());
    }

    #[test]
    fn single_cell_peak() {
        let mut acc = Accumulator::new(10, 10, 1);
        acc.votes[4 * 10 + 6] = 100;
        assert_eq!(extract_center_peaks(&acc, &params(3, 6, 1)), vec![(6.0, 4.0, 100)]);
    }

    #[test]
    fn equal_peaks_keep_lexicographically_smaller() {
        let mut acc = Accumulator::new(20, 20, 1);
        acc.votes[5 * 20 + 9] = 80;
        acc.votes[5 * 20 + 6] = 80;
        let peaks = extract_center_peaks(&acc, &params(3, 6, 1));
        assert_eq!(peaks, vec![(6.0, 5.0, 80)]);
    }

    #[test]
    fn plateau_yields_one_peak() {
        let mut acc = Accumulator::new(10, 10, 1);
        acc.votes[3 * 10 + 3] = 60;
        acc.votes[3 * 10 + 4] = 60;
        let peaks = extract_center_peaks(&acc, &params(3, 6, 1));
        assert_eq!(peaks.len(), 1);
        assert_eq!(peaks[0].2, 60);
        assert!((peaks[0].0 - 3.5).abs() < 1e-12);
    }

    #[test]
    fn max_circles_truncates() {
        let mut acc = Accumulator::new(40, 10, 1);
        for (i, x) in [5usize, 15, 25, 35].into_iter().enumerate() {
            acc.votes[5 * 40 + x] = 100 + i as u32;
        }
        let mut p = params(3, 6, 1);
        p.max_circles = 2;
        let peaks = extract_center_peaks(&acc, &p);
        assert_eq!(peaks.iter().map(|p| p.2).collect::<Vec<_>>(), vec![103, 102]);
    }

    #[test]
    fn dp_scales_peak_coordinates() {
        let mut acc = Accumulator::new(10, 10, 2);
        acc.votes[3 * 10 + 4] = 90;
        assert_eq!(extract_center_peaks(&acc, &params(3, 6, 2)), vec![(8.0, 6.0, 90)]);
    }

    #[test]
    fn radius_without_support_is_an_error() {
        let g = GradientField::from_components(30, 30, vec![0.0; 900], vec![0.0; 900]);
        assert!(matches!(
            estimate_radius((15.0, 15.0), &g, &params(3, 6, 1)),
            Err(DetectError::NoSupport(..))
        ));
    }

    #[test]
    fn invalid_params_are_rejected() {
        let g = GradientField::from_components(5, 5, vec![0.0; 25], vec![0.0; 25]);
        assert!(hough_vote_centers(&g, &params(6, 6, 1)).is_err());
        assert!(hough_vote_centers(&g, &params(3, 6, 0)).is_err());
    }

    #[test]
    fn blank_frame_detects_nothing() {
        let img = ImageBuffer::filled(64, 48, 1, 90).unwrap();
        assert!(detect_circles(&img, &HoughParams::default(), 1.0, 5).unwrap().is_empty());
    }
}
