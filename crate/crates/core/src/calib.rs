//! Projective calibration among the camera, projector and world frames.
//!
//! The world frame is the projector frame scaled by a fixed mm-per-pixel
//! factor, so only camera↔projector needs estimating. Estimation is a
//! Hartley-normalized DLT; fiducial calibration detects projected dots with
//! the circle detector and pairs them with the projected grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::{self, HoughParams};
use crate::geom::Point;
use crate::image::ImageBuffer;

#[derive(Debug, Error, PartialEq)]
pub enum CalibError {
    #[error("point maps to infinity (w = {0:e})")]
    PointAtInfinity(f64),
    #[error("homography is singular (det = {0:e})")]
    Singular(f64),
    #[error("need at least 4 correspondences, got {0}")]
    Arity(usize),
    #[error("degenerate point configuration: {0}")]
    Degenerate(&'static str),
    #[error("detected {detected} fiducials but {expected} were projected")]
    CountMismatch { detected: usize, expected: usize },
    #[error("projector dots do not form an axis-aligned grid: {0}")]
    NotAGrid(String),
    #[error("fiducial detection failed: {0}")]
    Detection(String),
}

pub type Result<T, E = CalibError> = std::result::Result<T, E>;

const EPS_W: f64 = 1e-12;
const EPS_DET: f64 = 1e-12;

/// Invertible 3×3 projective map, stored row-major with `h[2][2] = 1`
/// whenever that entry is nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 9]", into = "[f64; 9]")]
pub struct Homography {
    h: [[f64; 3]; 3],
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            h: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            h: [[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]],
        }
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Self {
            h: [[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Build from rows, normalizing scale and rejecting singular matrices.
    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(CalibError::Singular(f64::NAN));
        }
        let mut h = rows;
        let s = if h[2][2].abs() > EPS_W {
            h[2][2]
        } else {
            h.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
        };
        if s == 0.0 {
            return Err(CalibError::Singular(0.0));
        }
        h.iter_mut().flatten().for_each(|v| *v /= s);
        let out = Self { h };
        let det = out.det();
        if det.abs() < EPS_DET {
            return Err(CalibError::Singular(det));
        }
        Ok(out)
    }

    pub fn from_row_major(v: [f64; 9]) -> Result<Self> {
        Self::from_rows([[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]])
    }

    pub fn rows(&self) -> [[f64; 3]; 3] {
        self.h
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let h = &self.h;
        [h[0][0], h[0][1], h[0][2], h[1][0], h[1][1], h[1][2], h[2][0], h[2][1], h[2][2]]
    }

    /// Decimal text with 17 significant digits per entry, for logs and config.
    pub fn to_decimal_strings(&self) -> [String; 9] {
        self.to_row_major().map(|v| format!("{v:.16e}"))
    }

    pub fn det(&self) -> f64 {
        let m = &self.h;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn map_point(&self, p: Point) -> Result<Point> {
        let h = &self.h;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        if w.abs() < EPS_W {
            return Err(CalibError::PointAtInfinity(w));
        }
        Ok(Point::new(
            (h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
            (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w,
        ))
    }

    pub fn inverse(&self) -> Result<Self> {
        invert_homography(self)
    }

    /// `other ∘ self`: apply `self` first, then `other`.
    pub fn then(&self, other: &Homography) -> Result<Self> {
        let (a, b) = (&other.h, &self.h);
        let mut m = [[0.0; 3]; 3];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Self::from_rows(m)
    }

    /// Square root of the Jacobian determinant at `p`: the linear scale a
    /// small disc around `p` undergoes.
    pub fn local_scale(&self, p: Point) -> Result<f64> {
        let h = &self.h;
        let w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
        if w.abs() < EPS_W {
            return Err(CalibError::PointAtInfinity(w));
        }
        let u = h[0][0] * p.x + h[0][1] * p.y + h[0][2];
        let v = h[1][0] * p.x + h[1][1] * p.y + h[1][2];
        let w2 = w * w;
        let dudx = (h[0][0] * w - u * h[2][0]) / w2;
        let dudy = (h[0][1] * w - u * h[2][1]) / w2;
        let dvdx = (h[1][0] * w - v * h[2][0]) / w2;
        let dvdy = (h[1][1] * w - v * h[2][1]) / w2;
        Ok((dudx * dvdy - dudy * dvdx).abs().sqrt())
    }
}

impl TryFrom<[f64; 9]> for Homography {
    type Error = CalibError;
    fn try_from(v: [f64; 9]) -> Result<Self> {
        Self::from_row_major(v)
    }
}

impl From<Homography> for [f64; 9] {
    fn from(h: Homography) -> Self {
        h.to_row_major()
    }
}

pub fn map_point(h: &Homography, p: Point) -> Result<Point> {
    h.map_point(p)
}

pub fn invert_homography(h: &Homography) -> Result<Homography> {
    let det = h.det();
    if det.abs() < EPS_DET {
        return Err(CalibError::Singular(det));
    }
    let m = &h.h;
    let adj = [
        [
            m[1][1] * m[2][2] - m[1][2] * m[2][1],
            m[0][2] * m[2][1] - m[0][1] * m[2][2],
            m[0][1] * m[1][2] - m[0][2] * m[1][1],
        ],
        [
            m[1][2] * m[2][0] - m[1][0] * m[2][2],
            m[0][0] * m[2][2] - m[0][2] * m[2][0],
            m[0][2] * m[1][0] - m[0][0] * m[1][2],
        ],
        [
            m[1][0] * m[2][1] - m[1][1] * m[2][0],
            m[0][1] * m[2][0] - m[0][0] * m[2][1],
            m[0][0] * m[1][1] - m[0][1] * m[1][0],
        ],
    ];
    let mut inv = adj;
    inv.iter_mut().flatten().for_each(|v| *v /= det);
    Homography::from_rows(inv)
}

/// A point pair `src → dst`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub src: Point,
    pub dst: Point,
}

impl Correspondence {
    pub fn new(src: Point, dst: Point) -> Self {
        Self { src, dst }
    }
}

/// Similarity taking a point set to centroid 0 and mean distance √2.
fn normalizing_transform(pts: &[Point]) -> Result<[[f64; 3]; 3]> {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n;
    let mean = pts.iter().map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(CalibError::Degenerate("all points coincide"));
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Ok([[s, 0.0, -s * cx], [0.0, s, -s * cy], [0.0, 0.0, 1.0]])
}

fn apply(t: &[[f64; 3]; 3], p: Point) -> Point {
    Point::new(t[0][0] * p.x + t[0][2], t[1][1] * p.y + t[1][2])
}

fn has_collinear_triple(pts: &[Point]) -> bool {
    let scale2 = pts
        .iter()
        .flat_map(|a| pts.iter().map(move |b| a.dist2(*b)))
        .fold(0.0, f64::max);
    let n = pts.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let (a, b, c) = (pts[i], pts[j], pts[k]);
                let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
                if cross.abs() <= 1e-9 * scale2 {
                    return true;
                }
            }
        }
    }
    false
}

/// Normalized DLT. Returns the homography and the RMS reprojection error
/// in destination units.
pub fn estimate_homography(corr: &[Correspondence]) -> Result<(Homography, f64)> {
    let n = corr.len();
    if n < 4 {
        return Err(CalibError::Arity(n));
    }
    if corr.iter().any(|c| !c.src.is_finite() || !c.dst.is_finite()) {
        return Err(CalibError::Degenerate("non-finite coordinate"));
    }
    let src: Vec<Point> = corr.iter().map(|c| c.src).collect();
    let dst: Vec<Point> = corr.iter().map(|c| c.dst).collect();
    if n == 4 && (has_collinear_triple(&src) || has_collinear_triple(&dst)) {
        return Err(CalibError::Degenerate("three of four points are collinear"));
    }
    let ts = normalizing_transform(&src)?;
    let td = normalizing_transform(&dst)?;

    // zero rows pad the system so the decomposition always yields a full V
    let rows = (2 * n).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, c) in corr.iter().enumerate() {
        let p = apply(&ts, c.src);
        let q = apply(&td, c.dst);
        let (r0, r1) = (2 * i, 2 * i + 1);
        a[(r0, 0)] = -p.x;
        a[(r0, 1)] = -p.y;
        a[(r0, 2)] = -1.0;
        a[(r0, 6)] = q.x * p.x;
        a[(r0, 7)] = q.x * p.y;
        a[(r0, 8)] = q.x;
        a[(r1, 3)] = -p.x;
        a[(r1, 4)] = -p.y;
        a[(r1, 5)] = -1.0;
        a[(r1, 6)] = q.y * p.x;
        a[(r1, 7)] = q.y * p.y;
        a[(r1, 8)] = q.y;
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(CalibError::Degenerate("decomposition failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let smax = svd.singular_values[order[order.len() - 1]];
    let second = svd.singular_values[order[1]];
    if !(smax > 0.0) || second / smax < 1e-9 {
        return Err(CalibError::Degenerate("null space has more than one dimension"));
    }
    let hv = v_t.row(order[0]);
    let hn = [
        [hv[0], hv[1], hv[2]],
        [hv[3], hv[4], hv[5]],
        [hv[6], hv[7], hv[8]],
    ];
    let hn_det = Homography { h: hn }.det();
    if hn_det.abs() < 1e-12 {
        return Err(CalibError::Degenerate("solution is singular"));
    }

    // H = Td⁻¹ · Hn · Ts
    let td_inv = [
        [1.0 / td[0][0], 0.0, -td[0][2] / td[0][0]],
        [0.0, 1.0 / td[1][1], -td[1][2] / td[1][1]],
        [0.0, 0.0, 1.0],
    ];
    let mul = |a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]| {
        let mut m = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        m
    };
    let h = Homography::from_rows(mul(&td_inv, &mul(&hn, &ts)))
        .map_err(|_| CalibError::Degenerate("solution is singular"))?;

    let mut sq = 0.0;
    for c in corr {
        let m = h.map_point(c.src)?;
        sq += m.dist2(c.dst);
    }
    Ok((h, (sq / n as f64).sqrt()))
}

/// Split axis-aligned grid dots into rows (ascending y), each ascending in x.
fn grid_rows(dots: &[Point]) -> Result<Vec<Vec<Point>>> {
    if dots.len() < 4 {
        return Err(CalibError::NotAGrid(format!("{} dots, need at least 2x2", dots.len())));
    }
    let mut sorted = dots.to_vec();
    sorted.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.x.total_cmp(&b.x)));
    let mut rows: Vec<Vec<Point>> = Vec::new();
    for p in sorted {
        match rows.last_mut() {
            Some(row) if (row[0].y - p.y).abs() <= 0.5 => row.push(p),
            _ => rows.push(vec![p]),
        }
    }
    let cols = rows[0].len();
    if rows.len() < 2 || cols < 2 || rows.iter().any(|r| r.len() != cols) {
        return Err(CalibError::NotAGrid(format!(
            "row lengths {:?}",
            rows.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    for row in &mut rows {
        row.sort_by(|a, b| a.x.total_cmp(&b.x));
    }
    Ok(rows)
}

/// Dominant grid orientation modulo 90°, from nearest-neighbour directions,
/// in (-45°, 45°].
fn grid_orientation(pts: &[Point]) -> f64 {
    let (mut c, mut s) = (0.0, 0.0);
    for (i, p) in pts.iter().enumerate() {
        let nn = pts
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .min_by(|(_, a), (_, b)| p.dist2(**a).total_cmp(&p.dist2(**b)))
            .map(|(_, q)| *q);
        if let Some(q) = nn {
            let a = (q.y - p.y).atan2(q.x - p.x);
            c += (4.0 * a).cos();
            s += (4.0 * a).sin();
        }
    }
    s.atan2(c) / 4.0
}

/// Order detected dots row-major after rotating them onto the grid axes.
fn grid_sort(pts: &[Point], cols: usize) -> Vec<Point> {
    let theta = grid_orientation(pts);
    let (sn, cs) = (-theta).sin_cos();
    let rot = |p: &Point| Point::new(cs * p.x - sn * p.y, sn * p.x + cs * p.y);
    let mut tagged: Vec<(Point, Point)> = pts.iter().map(|p| (rot(p), *p)).collect();
    tagged.sort_by(|a, b| a.0.y.total_cmp(&b.0.y));
    let mut out = Vec::with_capacity(pts.len());
    for row in tagged.chunks_mut(cols) {
        row.sort_by(|a, b| a.0.x.total_cmp(&b.0.x));
        out.extend(row.iter().map(|t| t.1));
    }
    out
}

pub const FIDUCIAL_BLUR_SIGMA: f64 = 1.0;
pub const FIDUCIAL_BLUR_KSIZE: usize = 5;

/// Contrast-weighted centroid of a dot, iterated from the Hough centre.
///
/// Weights are `|I - background|` inside a window of radius `r + 2`, with the
/// background taken as the mean over the ring `[r + 2, r + 4]`. For a
/// symmetric dot this is unbiased, unlike the accumulator centroid.
fn blob_centroid(img: &ImageBuffer, start: Point, r: f64) -> Point {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut c = start;
    for _ in 0..3 {
        let reach = r + 4.0;
        let x0 = (c.x - reach).floor().max(0.0) as usize;
        let y0 = (c.y - reach).floor().max(0.0) as usize;
        let x1 = (c.x + reach).ceil().min(w - 1.0) as usize;
        let y1 = (c.y + reach).ceil().min(h - 1.0) as usize;
        let (mut bg, mut nbg) = (0.0, 0usize);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let d = Point::new(x as f64, y as f64).dist(c);
                if (r + 2.0..=r + 4.0).contains(&d) {
                    bg += img.pixel(x, y)[0] as f64;
                    nbg += 1;
                }
            }
        }
        if nbg == 0 {
            return c;
        }
        let bg = bg / nbg as f64;
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if Point::new(x as f64, y as f64).dist(c) > r + 2.0 {
                    continue;
                }
                let wgt = (img.pixel(x, y)[0] as f64 - bg).abs();
                sw += wgt;
                sx += wgt * x as f64;
                sy += wgt * y as f64;
            }
        }
        if sw <= 0.0 {
            return c;
        }
        c = Point::new(sx / sw, sy / sw);
    }
    c
}

/// Recover the camera→projector homography from a camera frame showing the
/// projected dot grid.
pub fn calibrate_from_fiducials(
    projector_dots: &[Point],
    camera_frame: &ImageBuffer,
    detect_params: &HoughParams,
) -> Result<(Homography, f64)> {
    let rows = grid_rows(projector_dots)?;
    let cols = rows[0].len();
    let expected: Vec<Point> = rows.into_iter().flatten().collect();

    let detections = detect::detect_circles(
        camera_frame,
        detect_params,
        FIDUCIAL_BLUR_SIGMA,
        FIDUCIAL_BLUR_KSIZE,
    )
    .map_err(|e| CalibError::Detection(e.to_string()))?;
    if detections.len() != expected.len() {
        return Err(CalibError::CountMismatch {
            detected: detections.len(),
            expected: expected.len(),
        });
    }
    let seen: Vec<Point> = detections
        .iter()
        .map(|d| blob_centroid(camera_frame, Point::new(d.cx, d.cy), d.r))
        .collect();
    let ordered = grid_sort(&seen, cols);
    let corr: Vec<Correspondence> = ordered
        .into_iter()
        .zip(expected)
        .map(|(c, p)| Correspondence::new(c, p))
        .collect();
    estimate_homography(&corr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(rows: [[f64; 3]; 3]) -> Homography {
        Homography::from_rows(rows).unwrap()
    }

    #[test]
    fn map_point_examples() {
        let p = Point::new(3.0, 4.0);
        assert_eq!(Homography::identity().map_point(p).unwrap(), p);
        let t = h([[1.0, 0.0, 5.0], [0.0, 1.0, -2.0], [0.0, 0.0, 1.0]]);
        assert_eq!(t.map_point(p).unwrap(), Point::new(8.0, 2.0));
        let proj = h([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.1, 0.0, 1.0]]);
        assert_eq!(proj.map_point(Point::new(10.0, 0.0)).unwrap(), Point::new(5.0, 0.0));
    }

    #[test]
    fn map_point_at_infinity() {
        let proj = h([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.1, 0.0, 1.0]]);
        assert!(matches!(
            proj.map_point(Point::new(-10.0, 3.0)),
            Err(CalibError::PointAtInfinity(_))
        ));
    }

    #[test]
    fn invert_examples() {
        assert_eq!(Homography::identity().inverse().unwrap(), Homography::identity());
        let inv = Homography::translation(5.0, -2.0).inverse().unwrap();
        assert_eq!(inv, Homography::translation(-5.0, 2.0));
    }

    #[test]
    fn singular_matrices_are_rejected() {
        let rows = [[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]];
        assert!(matches!(Homography::from_rows(rows), Err(CalibError::Singular(_))));
    }

    #[test]
    fn normalization_sets_h22() {
        let m = h([[2.0, 0.0, 4.0], [0.0, 2.0, 6.0], [0.0, 0.0, 2.0]]);
        assert_eq!(m, Homography::translation(2.0, 3.0));
    }

    #[test]
    fn arity_error() {
        let c = Correspondence::new(Point::new(0.0, 0.0), Point::new(0.0, 0.0));
        assert_eq!(estimate_homography(&[c; 3]).unwrap_err(), CalibError::Arity(3));
    }

    #[test]
    fn collinear_sources_are_degenerate() {
        let src = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0), (0.0, 3.0)];
        let dst = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let corr: Vec<_> = src
            .iter()
            .zip(dst)
            .map(|(s, d)| Correspondence::new((*s).into(), d.into()))
            .collect();
        assert!(matches!(estimate_homography(&corr), Err(CalibError::Degenerate(_))));
    }

    #[test]
    fn exact_four_points_recover_known_map() {
        let truth = h([[1.2, 0.1, 30.0], [-0.05, 0.9, 12.0], [1e-4, 2e-4, 1.0]]);
        let corr: Vec<_> = [(0.0, 0.0), (100.0, 0.0), (100.0, 80.0), (0.0, 80.0)]
            .into_iter()
            .map(|p| {
                let s = Point::from(p);
                Correspondence::new(s, truth.map_point(s).unwrap())
            })
            .collect();
        let (est, rms) = estimate_homography(&corr).unwrap();
        assert!(rms < 1e-9, "{rms}");
        for (a, b) in est.to_row_major().iter().zip(truth.to_row_major()) {
            assert!((a - b).abs() < 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn grid_rows_orders_and_validates() {
        let dots = [(20.0, 10.0), (10.0, 10.0), (10.0, 20.0), (20.0, 20.0)].map(Point::from);
        let rows = grid_rows(&dots).unwrap();
        assert_eq!(rows[0], vec![Point::new(10.0, 10.0), Point::new(20.0, 10.0)]);
        let bad = [(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 5.0)].map(Point::from);
        assert!(matches!(grid_rows(&bad), Err(CalibError::NotAGrid(_))));
    }

    #[test]
    fn grid_sort_handles_small_rotation() {
        let theta: f64 = 0.3;
        let (s, c) = theta.sin_cos();
        let mut pts = Vec::new();
        for r in 0..3 {
            for q in 0..4 {
                let (x, y) = (q as f64 * 50.0, r as f64 * 40.0);
                pts.push(Point::new(c * x - s * y + 200.0, s * x + c * y + 100.0));
            }
        }
        let mut shuffled = pts.clone();
        shuffled.reverse();
        shuffled.swap(1, 7);
        assert_eq!(grid_sort(&shuffled, 4), pts);
    }
}
