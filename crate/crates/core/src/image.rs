//! Raster buffers, binary PNM I/O, separable filtering and the synthetic
//! overhead camera.
//!
//! Filtering works on [`Plane`]s of `f32` samples; quantization back to
//! 8 bits only happens when an [`ImageBuffer`] is produced.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::calib::Homography;
use crate::geom::Point;
use crate::rng;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("malformed PNM: {reason} (at token `{token}`)")]
    Format { token: String, reason: &'static str },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

pub type Result<T, E = ImageError> = std::result::Result<T, E>;

/// Row-major, channel-interleaved 8-bit raster with 1 or 3 channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl ImageBuffer {
    /// A buffer filled with `value` in every sample.
    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::from_raw(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_raw(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::Precondition(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::Precondition(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(ImageError::Precondition(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    /// Samples of the pixel at `(x, y)`.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, value: &[u8]) {
        let i = self.index(x, y);
        let c = self.channels;
        self.data[i..i + c].copy_from_slice(&value[..c]);
    }

    pub(crate) fn require_gray(&self, op: &str) -> Result<()> {
        if self.channels != 1 {
            return Err(ImageError::Precondition(format!(
                "{op} requires a single-channel image, got {} channels",
                self.channels
            )));
        }
        Ok(())
    }

    /// Copy this image shifted by `(dx, dy)`; uncovered pixels take `fill`.
    pub fn shifted(&self, dx: i64, dy: i64, fill: u8) -> ImageBuffer {
        let mut out = vec![fill; self.data.len()];
        let c = self.channels;
        for y in 0..self.height as i64 {
            let sy = y - dy;
            if sy < 0 || sy >= self.height as i64 {
                continue;
            }
            for x in 0..self.width as i64 {
                let sx = x - dx;
                if sx < 0 || sx >= self.width as i64 {
                    continue;
                }
                let d = (y as usize * self.width + x as usize) * c;
                let s = self.index(sx as usize, sy as usize);
                out[d..d + c].copy_from_slice(&self.data[s..s + c]);
            }
        }
        ImageBuffer {
            data: out,
            ..*self
        }
    }
}

// ---------------------------------------------------------------------------
// PNM

/// Encode as binary PGM (P5) or PPM (P6), maxval 255.
pub fn encode_pnm(img: &ImageBuffer) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn decode_pnm(bytes: &[u8]) -> Result<ImageBuffer> {
    let mut pos = 0;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        _ => {
            return Err(ImageError::Format {
                token: magic,
                reason: "unsupported magic, expected P5 or P6",
            })
        }
    };
    let width = parse_dim(next_token(bytes, &mut pos)?, "invalid width")?;
    let height = parse_dim(next_token(bytes, &mut pos)?, "invalid height")?;
    let maxval = next_token(bytes, &mut pos)?;
    if maxval != "255" {
        return Err(ImageError::Format {
            token: maxval,
            reason: "unsupported maxval, expected 255",
        });
    }
    // exactly one whitespace byte separates the header from the payload
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(ImageError::Format {
            token: maxval,
            reason: "missing whitespace after maxval",
        });
    }
    pos += 1;
    let need = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(ImageError::Format {
            token: format!("{} of {need} bytes", payload.len()),
            reason: "truncated payload",
        });
    }
    ImageBuffer::from_raw(width, height, channels, payload[..need].to_vec())
}

fn parse_dim(tok: String, reason: &'static str) -> Result<usize> {
    match tok.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(ImageError::Format { token: tok, reason }),
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(ImageError::Format {
            token: "<eof>".into(),
            reason: "truncated header",
        });
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn load_pnm(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pnm(&bytes)
}

pub fn save_pnm(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| ImageError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_pnm(img)).map_err(io)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Filtering

/// Single-channel floating point raster used between filter stages.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn from_image(img: &ImageBuffer) -> Result<Self> {
        img.require_gray("conversion to plane")?;
        Ok(Self {
            width: img.width,
            height: img.height,
            data: img.data.iter().map(|&v| v as f32).collect(),
        })
    }

    /// Round to nearest and clamp into an 8-bit image.
    pub fn quantize(&self) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .map(|&v| quantize_sample(v))
            .collect();
        ImageBuffer {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Normalized 1-D Gaussian taps, length `ksize`.
pub fn gaussian_kernel(sigma: f64, ksize: usize) -> Result<Vec<f64>> {
    if ksize == 0 || ksize.is_multiple_of(2) {
        return Err(ImageError::Precondition(format!(
            "kernel size must be odd and positive, got {ksize}"
        )));
    }
    if !(sigma > 0.0) {
        return Err(ImageError::Precondition(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    let half = (ksize / 2) as f64;
    let mut k: Vec<f64> = (0..ksize)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Horizontal pass of the separable blur over one row, clamp-to-edge.
/// Taps are accumulated in order, starting from zero.
pub(crate) fn blur_row_h(row: &[f32], k: &[f32], out: &mut [f32]) {
    let half = k.len() / 2;
    let w = row.len();
    out.fill(0.0);
    if w > 2 * half {
        let n = w - 2 * half;
        for (t, &kv) in k.iter().enumerate() {
            for (d, &s) in out[half..half + n].iter_mut().zip(&row[t..t + n]) {
                *d += kv * s;
            }
        }
    }
    for x in (0..w).filter(|&x| x < half || x + half >= w) {
        let mut acc = 0f32;
        for (t, &kv) in k.iter().enumerate() {
            let sx = (x as isize + t as isize - half as isize).clamp(0, w as isize - 1);
            acc += kv * row[sx as usize];
        }
        out[x] = acc;
    }
}

/// Vertical pass: `out = sum_t k[t] * rows[t]`, accumulated in tap order.
pub(crate) fn blur_rows_v(rows: &[&[f32]], k: &[f32], out: &mut [f32]) {
    out.fill(0.0);
    for (&kv, srow) in k.iter().zip(rows) {
        for (d, &s) in out.iter_mut().zip(*srow) {
            *d += kv * s;
        }
    }
}

pub(crate) fn kernel_f32(sigma: f64, ksize: usize) -> Result<Vec<f32>> {
    Ok(gaussian_kernel(sigma, ksize)?.iter().map(|&v| v as f32).collect())
}

/// Separable Gaussian blur with clamp-to-edge borders.
pub fn blur_plane(src: &Plane, sigma: f64, ksize: usize) -> Result<Plane> {
    let k = kernel_f32(sigma, ksize)?;
    if ksize == 1 {
        return Ok(src.clone());
    }
    let half = ksize / 2;
    let (w, h) = (src.width, src.height);
    let mut tmp = vec![0f32; w * h];
    for (row, out) in src.data.chunks_exact(w).zip(tmp.chunks_exact_mut(w)) {
        blur_row_h(row, &k, out);
    }
    let mut out = vec![0f32; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        let rows: Vec<&[f32]> = (0..ksize)
            .map(|t| {
                let sy = (y as isize + t as isize - half as isize).clamp(0, h as isize - 1) as usize;
                &tmp[sy * w..(sy + 1) * w]
            })
            .collect();
        blur_rows_v(&rows, &k, dst);
    }
    Ok(Plane {
        width: w,
        height: h,
        data: out,
    })
}

pub fn gaussian_blur(img: &ImageBuffer, sigma: f64, ksize: usize) -> Result<ImageBuffer> {
    img.require_gray("gaussian_blur")?;
    let plane = Plane::from_image(img)?;
    Ok(blur_plane(&plane, sigma, ksize)?.quantize())
}

/// Per-pixel Sobel responses and their magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub width: usize,
    pub height: usize,
    pub gx: Vec<f32>,
    pub gy: Vec<f32>,
    pub mag: Vec<f32>,
}

impl GradientField {
    /// A field built directly from component planes; magnitude is derived.
    pub fn from_components(width: usize, height: usize, gx: Vec<f32>, gy: Vec<f32>) -> Self {
        assert_eq!(gx.len(), width * height);
        assert_eq!(gy.len(), width * height);
        let mag = gx.iter().zip(&gy).map(|(a, b)| a.hypot(*b)).collect();
        Self {
            width,
            height,
            gx,
            gy,
            mag,
        }
    }
}

/// Sobel responses for one row given the rows above and below
/// (already clamped at the image border).
pub(crate) fn sobel_row(
    rm: &[f32],
    r0: &[f32],
    rp: &[f32],
    gx: &mut [f32],
    gy: &mut [f32],
    mag: &mut [f32],
) {
    let w = r0.len();
    let mut put = |x: usize, xm: usize, xp: usize| {
        let sx = (rm[xp] + 2.0 * r0[xp] + rp[xp]) - (rm[xm] + 2.0 * r0[xm] + rp[xm]);
        let sy = (rp[xm] + 2.0 * rp[x] + rp[xp]) - (rm[xm] + 2.0 * rm[x] + rm[xp]);
        gx[x] = sx;
        gy[x] = sy;
        mag[x] = (sx * sx + sy * sy).sqrt();
    };
    put(0, 0, 1);
    put(w - 1, w - 2, w - 1);

    // interior, written over equal-length windows so it vectorizes
    let n = w - 2;
    let (a0, a1, a2) = (&rm[..n], &rm[1..n + 1], &rm[2..]);
    let (b0, b2) = (&r0[..n], &r0[2..]);
    let (c0, c1, c2) = (&rp[..n], &rp[1..n + 1], &rp[2..]);
    let (gx, gy, mag) = (&mut gx[1..n + 1], &mut gy[1..n + 1], &mut mag[1..n + 1]);
    for i in 0..n {
        let sx = (a2[i] + 2.0 * b2[i] + c2[i]) - (a0[i] + 2.0 * b0[i] + c0[i]);
        let sy = (c0[i] + 2.0 * c1[i] + c2[i]) - (a0[i] + 2.0 * a1[i] + a2[i]);
        gx[i] = sx;
        gy[i] = sy;
        mag[i] = (sx * sx + sy * sy).sqrt();
    }
}

pub fn sobel_plane(src: &Plane) -> Result<GradientField> {
    let (w, h) = (src.width, src.height);
    if w < 3 || h < 3 {
        return Err(ImageError::Precondition(format!(
            "sobel needs at least 3x3 pixels, got {w}x{h}"
        )));
    }
    let n = w * h;
    let mut gx = vec![0f32; n];
    let mut gy = vec![0f32; n];
    let mut mag = vec![0f32; n];
    let d = &src.data;
    for y in 0..h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let r = y * w..(y + 1) * w;
        sobel_row(
            &d[ym * w..][..w],
            &d[y * w..][..w],
            &d[yp * w..][..w],
            &mut gx[r.clone()],
            &mut gy[r.clone()],
            &mut mag[r],
        );
    }
    Ok(GradientField {
        width: w,
        height: h,
        gx,
        gy,
        mag,
    })
}

pub fn sobel_gradients(img: &ImageBuffer) -> Result<GradientField> {
    img.require_gray("sobel_gradients")?;
    sobel_plane(&Plane::from_image(img)?)
}

// ---------------------------------------------------------------------------
// Synthetic camera

/// Software stand-in for the overhead camera.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub width: usize,
    pub height: usize,
    pub world_to_camera: Homography,
    /// Extent of the world frame in mm; robots must lie inside it.
    pub arena_width_mm: f64,
    pub arena_height_mm: f64,
    pub background_level: u8,
    pub robot_body_level: u8,
    pub pixel_noise_sigma: f64,
    /// 0 disables the radial fall-off; 1 darkens the corners to black.
    pub vignette_strength: f64,
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ImageError::Precondition(m));
        if self.width == 0 || self.height == 0 {
            return bad("camera resolution must be positive".into());
        }
        if self.robot_body_level == self.background_level {
            return bad("robot_body_level must differ from background_level".into());
        }
        if !(self.pixel_noise_sigma >= 0.0) {
            return bad(format!("pixel_noise_sigma must be >= 0, got {}", self.pixel_noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.vignette_strength) {
            return bad(format!("vignette_strength must be in [0,1], got {}", self.vignette_strength));
        }
        Ok(())
    }
}

/// A robot body as seen from above: world centre and radius, both in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotDisc {
    pub center: Point,
    pub radius: f64,
}

/// Render robots as filled, anti-aliased discs into a grayscale frame.
///
/// Later entries overdraw earlier ones. Noise is keyed by `(rng_seed, row)`.
pub fn render_camera_view(
    robots: &[RobotDisc],
    cam: &CameraModel,
    rng_seed: u64,
) -> Result<ImageBuffer> {
    cam.validate()?;
    let mut discs = Vec::with_capacity(robots.len());
    for (i, r) in robots.iter().enumerate() {
        let p = r.center;
        if !(p.is_finite()
            && (0.0..=cam.arena_width_mm).contains(&p.x)
            && (0.0..=cam.arena_height_mm).contains(&p.y))
        {
            return Err(ImageError::Precondition(format!(
                "robot {i} at ({}, {}) lies outside the world bounds",
                p.x, p.y
            )));
        }
        if !(r.radius > 0.0) {
            return Err(ImageError::Precondition(format!(
                "robot {i} has non-positive radius {}",
                r.radius
            )));
        }
        let c = cam.world_to_camera.map_point(p).map_err(|e| {
            ImageError::Precondition(format!("robot {i} cannot be mapped to the camera: {e}"))
        })?;
        let scale = cam.world_to_camera.local_scale(p).unwrap_or(1.0);
        discs.push((c, r.radius * scale));
    }

    let (w, h) = (cam.width, cam.height);
    let bg = cam.background_level as f32;
    let body = cam.robot_body_level as f32;
    // (centre, radius, first row, last row, first col, last col)
    let spans: Vec<(Point, f64, usize, usize, usize, usize)> = discs
        .iter()
        .filter_map(|&(c, r)| {
            let x1 = (c.x + r + 1.0).ceil().min(w as f64 - 1.0);
            let y1 = (c.y + r + 1.0).ceil().min(h as f64 - 1.0);
            if x1 < 0.0 || y1 < 0.0 {
                return None;
            }
            let x0 = ((c.x - r - 1.0).floor().max(0.0)) as usize;
            let y0 = ((c.y - r - 1.0).floor().max(0.0)) as usize;
            Some((c, r, y0, y1 as usize, x0, x1 as usize))
        })
        .collect();

    let vig = (cam.vignette_strength > 0.0).then(|| {
        let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
        (cx, cy, cx * cx + cy * cy, cam.vignette_strength)
    });
    let sigma = cam.pixel_noise_sigma as f32;
    let mut row = vec![bg; w];
    let mut out = vec![0u8; w * h];
    for (y, dst) in out.chunks_exact_mut(w).enumerate() {
        row.fill(bg);
        let dy = y as f64;
        for &(c, r, y0, y1, x0, x1) in &spans {
            if y < y0 || y > y1 {
                continue;
            }
            let dy = dy - c.y;
            for (x, v) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
                let dx = x as f64 - c.x;
                let d = (dx * dx + dy * dy).sqrt();
                let cov = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                if cov > 0.0 {
                    *v += (body - *v) * cov;
                }
            }
        }
        if let Some((cx, cy, rmax2, s)) = vig {
            let dy2 = (y as f64 - cy).powi(2);
            for (x, v) in row.iter_mut().enumerate() {
                let rho2 = (x as f64 - cx).powi(2) + dy2;
                let m = if rmax2 > 0.0 { 1.0 - s * rho2 / rmax2 } else { 1.0 };
                *v *= m as f32;
            }
        }
        if sigma > 0.0 {
            rng::add_gaussian_noise(&mut row, rng::key(&[rng_seed, y as u64]), sigma);
        }
        for (d, &v) in dst.iter_mut().zip(&row) {
            *d = quantize_sample(v);
        }
    }
    Ok(ImageBuffer {
        width: w,
        height: h,
        channels: 1,
        data: out,
    })
}

/// Round to nearest (half up) and clamp into `[0, 255]`.
#[inline]
fn quantize_sample(v: f32) -> u8 {
    (v.clamp(0.0, 255.0) + 0.5) as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(w: usize, h: usize, data: Vec<u8>) -> ImageBuffer {
        ImageBuffer::from_raw(w, h, 1, data).unwrap()
    }

    #[test]
    fn decode_p5_verbatim() {
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([0, 255, 128, 7]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!(img, gray(2, 2, vec![0, 255, 128, 7]));
    }

    #[test]
    fn decode_p6_verbatim() {
        let mut bytes = b"P6\n1 1\n255\n".to_vec();
        bytes.extend([255, 0, 0]);
        let img = decode_pnm(&bytes).unwrap();
        assert_eq!((img.width(), img.height(), img.channels()), (1, 1, 3));
        assert_eq!(img.data(), &[255, 0, 0]);
    }

    #[test]
    fn decode_accepts_comments() {
        let mut bytes = b"P5 # gray\n# another\n1 1\n255\n".to_vec();
        bytes.push(9);
        assert_eq!(decode_pnm(&bytes).unwrap().data(), &[9]);
    }

    #[test]
    fn decode_errors_name_the_token() {
        let err = decode_pnm(b"P4\n1 1\n").unwrap_err();
        assert!(matches!(&err, ImageError::Format { token, .. } if token == "P4"), "{err}");

        let err = decode_pnm(b"P5\n1 1\n65535\n\0\0").unwrap_err();
        assert!(matches!(&err, ImageError::Format { token, .. } if token == "65535"), "{err}");

        let err = decode_pnm(b"P5\n2 2\n255\n\x01\x02").unwrap_err();
        assert!(err.to_string().contains("truncated payload"), "{err}");

        let err = decode_pnm(b"P5\nx 2\n255\n").unwrap_err();
        assert!(matches!(&err, ImageError::Format { token, .. } if token == "x"), "{err}");

        let err = decode_pnm(b"P6\n3").unwrap_err();
        assert!(err.to_string().contains("truncated header"), "{err}");
    }

    #[test]
    fn encode_header_is_exact() {
        let bytes = encode_pnm(&gray(2, 2, vec![0, 255, 128, 7]));
        assert_eq!(bytes.len(), 11 + 4);
        assert_eq!(&bytes[..11], b"P5\n2 2\n255\n");
    }

    #[test]
    fn save_and_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        let img = ImageBuffer::from_raw(2, 1, 3, vec![1, 2, 3, 4, 5, 6]).unwrap();
        save_pnm(&img, &path).unwrap();
        assert_eq!(load_pnm(&path).unwrap(), img);
        let err = load_pnm(dir.path().join("missing.pgm")).unwrap_err();
        assert!(err.to_string().contains("missing.pgm"));
    }

    #[test]
    fn two_channel_buffers_are_rejected() {
        assert!(matches!(
            ImageBuffer::from_raw(2, 2, 2, vec![0; 8]),
            Err(ImageError::Precondition(_))
        ));
    }

    #[test]
    fn blur_constant_is_fixed_point() {
        let img = ImageBuffer::filled(12, 7, 1, 77).unwrap();
        for (sigma, k) in [(0.5, 3), (1.0, 5), (3.0, 9)] {
            assert_eq!(gaussian_blur(&img, sigma, k).unwrap(), img);
        }
    }

    #[test]
    fn blur_impulse_center_matches_kernel_weight() {
        // independent kernel: unnormalized taps exp(-d^2/2) for d in -2..=2
        let taps: Vec<f64> = (-2i32..=2).map(|d| (-(d * d) as f64 / 2.0).exp()).collect();
        let sum: f64 = taps.iter().sum();
        let k00 = (taps[2] / sum).powi(2);
        let mut data = vec![0u8; 81];
        data[40] = 255;
        let out = gaussian_blur(&gray(9, 9, data), 1.0, 5).unwrap();
        assert_eq!(out.pixel(4, 4)[0], (255.0 * k00).round() as u8);
        assert_eq!(out.pixel(4, 4)[0], 41);
    }

    #[test]
    fn blur_ksize_one_is_identity() {
        let img = gray(3, 2, vec![1, 50, 3, 200, 5, 6]);
        assert_eq!(gaussian_blur(&img, 1.0, 1).unwrap(), img);
    }

    #[test]
    fn blur_rejects_even_kernel() {
        let img = ImageBuffer::filled(4, 4, 1, 0).unwrap();
        assert!(matches!(gaussian_blur(&img, 1.0, 4), Err(ImageError::Precondition(_))));
        assert!(matches!(gaussian_blur(&img, 0.0, 3), Err(ImageError::Precondition(_))));
    }

    #[test]
    fn sobel_constant_is_zero() {
        let g = sobel_gradients(&ImageBuffer::filled(5, 4, 1, 200).unwrap()).unwrap();
        assert!(g.gx.iter().chain(&g.gy).chain(&g.mag).all(|&v| v == 0.0));
    }

    #[test]
    fn sobel_horizontal_ramp() {
        let (w, h) = (8, 5);
        let data = (0..h).flat_map(|_| (0..w).map(|x| x as u8)).collect();
        let g = sobel_gradients(&gray(w, h, data)).unwrap();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                assert_eq!(g.gx[i], 8.0);
                assert_eq!(g.gy[i], 0.0);
                assert_eq!(g.mag[i], 8.0);
            }
        }
    }

    #[test]
    fn sobel_vertical_step_is_horizontal() {
        let (w, h) = (8, 6);
        let data = (0..h)
            .flat_map(|_| (0..w).map(|x| if x < 4 { 10 } else { 90 }))
            .collect();
        let g = sobel_gradients(&gray(w, h, data)).unwrap();
        for y in 1..h - 1 {
            for x in [3, 4] {
                let i = y * w + x;
                assert!(g.gx[i] > 0.0);
                assert_eq!(g.gy[i], 0.0);
            }
        }
    }

    #[test]
    fn sobel_rejects_tiny_images() {
        let img = ImageBuffer::filled(2, 5, 1, 0).unwrap();
        assert!(matches!(sobel_gradients(&img), Err(ImageError::Precondition(_))));
    }

    pub(crate) fn test_camera(w: usize, h: usize) -> CameraModel {
        CameraModel {
            width: w,
            height: h,
            world_to_camera: Homography::identity(),
            arena_width_mm: w as f64,
            arena_height_mm: h as f64,
            background_level: 30,
            robot_body_level: 200,
            pixel_noise_sigma: 0.0,
            vignette_strength: 0.0,
        }
    }

    #[test]
    fn empty_scene_is_constant_background() {
        let img = render_camera_view(&[], &test_camera(40, 30), 1).unwrap();
        assert!(img.data().iter().all(|&v| v == 30));
    }

    #[test]
    fn single_robot_inside_and_outside() {
        let robot = RobotDisc {
            center: Point::new(100.0, 120.0),
            radius: 20.0,
        };
        let img = render_camera_view(&[robot], &test_camera(320, 240), 1).unwrap();
        assert_eq!(img.pixel(100, 120)[0], 200);
        assert_eq!(img.pixel(100, 150)[0], 30);
        // rim pixel at exactly r: half coverage
        assert_eq!(img.pixel(120, 120)[0], 115);
    }

    #[test]
    fn rendering_is_deterministic_under_seed() {
        let mut cam = test_camera(64, 48);
        cam.pixel_noise_sigma = 5.0;
        cam.vignette_strength = 0.3;
        let robots = [RobotDisc {
            center: Point::new(20.0, 20.0),
            radius: 6.0,
        }];
        let a = render_camera_view(&robots, &cam, 9).unwrap();
        let b = render_camera_view(&robots, &cam, 9).unwrap();
        let c = render_camera_view(&robots, &cam, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn robot_outside_world_is_reported_by_index() {
        let robots = [
            RobotDisc {
                center: Point::new(5.0, 5.0),
                radius: 2.0,
            },
            RobotDisc {
                center: Point::new(-1.0, 5.0),
                radius: 2.0,
            },
        ];
        let err = render_camera_view(&robots, &test_camera(10, 10), 0).unwrap_err();
        assert!(err.to_string().contains("robot 1"), "{err}");
    }

    #[test]
    fn later_robots_overdraw_earlier() {
        let mut cam = test_camera(50, 50);
        cam.robot_body_level = 250;
        let a = RobotDisc {
            center: Point::new(20.0, 25.0),
            radius: 8.0,
        };
        let b = RobotDisc {
            center: Point::new(26.0, 25.0),
            radius: 8.0,
        };
        let img = render_camera_view(&[a, b], &cam, 0).unwrap();
        assert_eq!(img.pixel(23, 25)[0], 250);
    }
}
