//! Scenario files.
//!
//! A scenario is a TOML document. Unknown keys are rejected, and every
//! validation error names the offending key path (`field.diffusion_d`).
//! Parameters that depend on the robot size (Hough radius range, tracker
//! gate, fiducial dot size) default to values derived from
//! `robots.radius_mm` and the camera scale.

use std::path::{Path, PathBuf};

use arena_core::calib::Homography;
use arena_core::detect::HoughParams;
use arena_core::field::{check_amplitude, Field, NoiseMode, Rgb, TileLayer, VirtualObject};
use arena_core::image::CameraModel;
use arena_core::render::{Colormap, FieldScale, LayerSettings, OverlayStyle, ProjectorGeometry};
use arena_core::rng;
use arena_core::swarm::{Arena, Behavior, BehaviorParams, Robot};
use arena_core::track::TrackerParams;
use arena_core::Point;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {reason}")]
    Invalid { path: String, reason: String },
}

impl ConfigError {
    /// Key path the error refers to (empty for I/O errors).
    pub fn key_path(&self) -> &str {
        match self {
            ConfigError::Io { .. } => "",
            ConfigError::Parse { path, .. } | ConfigError::Invalid { path, .. } => path,
        }
    }
}

fn invalid(path: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Simulated robots rendered into a synthetic camera, paced to `tick_rate`.
    #[default]
    ClosedLoop,
    /// Camera frames are read from `frames_dir`; no simulated robots.
    FramesIn,
    /// Closed loop, free-running, no frame export.
    Headless,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub width_mm: f64,
    pub height_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Row-major world→camera homography. Defaults to a uniform scale that
    /// fits the arena, centred.
    pub world_to_camera: Option<[f64; 9]>,
    pub background_level: u8,
    pub robot_body_level: u8,
    pub pixel_noise_sigma: f64,
    pub vignette_strength: f64,
    pub blur_sigma: f64,
    pub blur_ksize: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 1024,
            height: 768,
            world_to_camera: None,
            background_level: 30,
            robot_body_level: 200,
            pixel_noise_sigma: 4.0,
            vignette_strength: 0.0,
            blur_sigma: 1.0,
            blur_ksize: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectorConfig {
    pub width: usize,
    pub height: usize,
    /// Defaults to the smallest pitch that covers the arena.
    pub mm_per_px: Option<f64>,
}

impl Default for ProjectorConfig {
    fn default() -> Self {
        Self {
            width: 800,
            height: 600,
            mm_per_px: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMethod {
    /// Project a 3×3 dot grid, detect it in the camera and fit the homography.
    #[default]
    Fiducial,
    /// Trust `camera.world_to_camera` and the projector pitch as given.
    Nominal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub method: CalibrationMethod,
    /// Dot radius in projector px; defaults to the robot radius.
    pub dot_radius_px: Option<f64>,
    /// Dot grid positions as fractions of the projector width/height.
    pub grid_fractions: [f64; 3],
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            method: CalibrationMethod::Fiducial,
            dot_radius_px: None,
            grid_fractions: [0.2, 0.5, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HoughConfig {
    pub r_min: Option<u32>,
    pub r_max: Option<u32>,
    pub dp: u32,
    pub edge_threshold: f32,
    pub center_threshold: u32,
    pub min_center_dist: Option<f64>,
    pub max_circles: usize,
}

impl Default for HoughConfig {
    fn default() -> Self {
        let d = HoughParams::default();
        Self {
            r_min: None,
            r_max: None,
            dp: d.dp,
            edge_threshold: d.edge_threshold,
            center_threshold: d.center_threshold,
            min_center_dist: None,
            max_circles: d.max_circles,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerConfig {
    pub gate_radius: Option<f64>,
    pub confirm_hits: u32,
    pub max_misses: u32,
    pub radius_smoothing_alpha: f64,
    pub velocity_smoothing_beta: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        let d = TrackerParams::default();
        Self {
            gate_radius: None,
            confirm_hits: d.confirm_hits,
            max_misses: d.max_misses,
            radius_smoothing_alpha: d.radius_smoothing_alpha,
            velocity_smoothing_beta: d.velocity_smoothing_beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub cell_size_mm: f64,
    /// mm²/s
    pub diffusion_d: f64,
    /// 1/s
    pub evaporation_rho: f64,
    pub opacity: f64,
    pub scale: FieldScale,
    /// Colormap anchor colours, low to high.
    pub colormap: Option<Vec<Rgb>>,
    /// Colour used to draw deposit sources.
    pub source_color: Rgb,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            cell_size_mm: 10.0,
            diffusion_d: 100.0,
            evaporation_rho: 0.05,
            opacity: 0.6,
            scale: FieldScale::PerFrame,
            colormap: None,
            source_color: [255, 0, 255],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TilePattern {
    Checkerboard,
    Random { fraction: f64 },
    Explicit { labels: Vec<u8> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TilesConfig {
    pub tile_size_mm: f64,
    pub base_colors: [Rgb; 2],
    pub pattern: TilePattern,
    pub noise_amplitude: f64,
    pub noise_mode: NoiseMode,
    /// Defaults to a stream derived from the master seed.
    pub noise_seed: Option<u64>,
}

impl Default for TilesConfig {
    fn default() -> Self {
        Self {
            tile_size_mm: 100.0,
            base_colors: [[40, 40, 40], [210, 210, 210]],
            pattern: TilePattern::Checkerboard,
            noise_amplitude: 0.0,
            noise_mode: NoiseMode::Flip,
            noise_seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotPose {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Placement {
    Explicit { poses: Vec<RobotPose> },
    Uniform { count: usize },
    Cluster { count: usize, center: [f64; 2], radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotsConfig {
    pub radius_mm: f64,
    pub speed_mm_s: f64,
    pub behavior: Behavior,
    pub placement: Placement,
}

impl Default for RobotsConfig {
    fn default() -> Self {
        Self {
            radius_mm: 16.5,
            speed_mm_s: 20.0,
            behavior: Behavior::RandomWalkDeposit,
            placement: Placement::Explicit { poses: Vec::new() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogConfig {
    pub dir: PathBuf,
    pub tracks_csv: String,
    pub events: String,
    /// Commands as applied, one JSON line each; replayable via
    /// `commands.replay`.
    pub command_trace: Option<String>,
    /// Export camera and projector frames every this many ticks (0 = never).
    /// Ignored when free-running.
    pub frame_export_every: u64,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("arena_out"),
            tracks_csv: "tracks.csv".into(),
            events: "events.jsonl".into(),
            command_trace: None,
            frame_export_every: 0,
        }
    }
}

impl LogConfig {
    pub fn tracks_path(&self) -> PathBuf {
        self.dir.join(&self.tracks_csv)
    }

    pub fn events_path(&self) -> PathBuf {
        self.dir.join(&self.events)
    }

    pub fn trace_path(&self) -> Option<PathBuf> {
        self.command_trace.as_ref().map(|p| self.dir.join(p))
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.dir.join("frames")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandsConfig {
    /// Command trace to feed in, as written by `logs.command_trace`.
    pub replay: Option<PathBuf>,
    /// Wait for a `start` command before tick 0.
    pub wait_for_start: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub master_seed: u64,
    /// Hz; also fixes the simulated step `dt = 1 / tick_rate`.
    #[serde(default = "default_tick_rate")]
    pub tick_rate: f64,
    /// Ticks to run.
    #[serde(default = "default_duration")]
    pub duration: u64,
    #[serde(default)]
    pub mode: Mode,
    /// Skip wall-clock pacing and frame export (implied by `mode = "headless"`).
    #[serde(default)]
    pub free_run: bool,
    /// Input frames for `frames_in` mode.
    #[serde(default)]
    pub frames_dir: Option<PathBuf>,
    pub arena: ArenaConfig,
    #[serde(default)]
    pub camera: CameraConfig,
    #[serde(default)]
    pub projector: ProjectorConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub hough: HoughConfig,
    #[serde(default)]
    pub tracker: TrackerConfig,
    #[serde(default)]
    pub field: FieldConfig,
    #[serde(default)]
    pub tiles: TilesConfig,
    #[serde(default)]
    pub overlay: OverlayStyle,
    #[serde(default)]
    pub behavior: BehaviorParams,
    #[serde(default)]
    pub robots: RobotsConfig,
    #[serde(default)]
    pub objects: Vec<VirtualObject>,
    #[serde(default)]
    pub logs: LogConfig,
    #[serde(default)]
    pub commands: CommandsConfig,
}

fn default_tick_rate() -> f64 {
    30.0
}

fn default_duration() -> u64 {
    300
}

/// Read, parse, fill defaults and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    ScenarioConfig::from_toml_str(&text)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let de = toml::Deserializer::new(text);
        let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::Parse {
                path: if path == "." { String::new() } else { path },
                message: e.into_inner().message().trim().to_string(),
            }
        })?;
        cfg.finalize()?;
        Ok(cfg)
    }

    /// Fill derived defaults and check every invariant.
    pub fn finalize(&mut self) -> Result<(), ConfigError> {
        if self.mode == Mode::Headless {
            self.free_run = true;
        }
        self.validate_top()?;
        let pitch = self.projector.mm_per_px.unwrap_or_else(|| {
            (self.arena.width_mm / self.projector.width as f64)
                .max(self.arena.height_mm / self.projector.height as f64)
        });
        self.projector.mm_per_px = Some(pitch);
        if self.camera.world_to_camera.is_none() {
            self.camera.world_to_camera = Some(fit_camera(&self.arena, &self.camera).to_row_major());
        }
        let r_px = self.robot_radius_px()?;
        let h = &mut self.hough;
        h.r_min.get_or_insert(((0.7 * r_px) as u32).max(2));
        h.r_max.get_or_insert((1.4 * r_px).ceil() as u32 + 1);
        h.min_center_dist.get_or_insert(r_px.max(1.0));
        self.tracker.gate_radius.get_or_insert(1.5 * r_px);
        self.calibration
            .dot_radius_px
            .get_or_insert(self.robots.radius_mm / pitch);
        if self.tiles.noise_seed.is_none() {
            self.tiles.noise_seed = Some(rng::stream_seed(self.master_seed, "tiles", 0));
        }
        self.validate_blocks()
    }

    fn validate_top(&self) -> Result<(), ConfigError> {
        if !(self.tick_rate > 0.0) || !self.tick_rate.is_finite() {
            return Err(invalid("tick_rate", format!("must be > 0, got {}", self.tick_rate)));
        }
        if self.duration < 1 {
            return Err(invalid("duration", "must be >= 1"));
        }
        if !(self.arena.width_mm > 0.0 && self.arena.height_mm > 0.0) {
            return Err(invalid("arena", "width_mm and height_mm must be positive"));
        }
        if self.projector.width == 0 || self.projector.height == 0 {
            return Err(invalid("projector", "resolution must be positive"));
        }
        if let Some(p) = self.projector.mm_per_px {
            if !(p > 0.0) {
                return Err(invalid("projector.mm_per_px", format!("must be > 0, got {p}")));
            }
        }
        if !(self.robots.radius_mm > 0.0) {
            return Err(invalid("robots.radius_mm", "must be > 0"));
        }
        if !(self.robots.speed_mm_s >= 0.0) || !self.robots.speed_mm_s.is_finite() {
            return Err(invalid("robots.speed_mm_s", "must be >= 0"));
        }
        if self.mode == Mode::FramesIn && self.frames_dir.is_none() {
            return Err(invalid("frames_dir", "required in frames_in mode"));
        }
        Ok(())
    }

    fn validate_blocks(&self) -> Result<(), ConfigError> {
        self.camera_model()
            .validate()
            .map_err(|e| invalid("camera", e.to_string()))?;
        if self.camera.blur_ksize.is_multiple_of(2) || !(self.camera.blur_sigma > 0.0) {
            return Err(invalid("camera.blur_ksize", "kernel must be odd with sigma > 0"));
        }
        self.hough_params()
            .validate()
            .map_err(|e| invalid("hough", e.to_string()))?;
        self.tracker_params()
            .validate()
            .map_err(|e| invalid("tracker", e.to_string()))?;
        let f = &self.field;
        if !(f.cell_size_mm > 0.0) {
            return Err(invalid("field.cell_size_mm", "must be > 0"));
        }
        if !(f.diffusion_d >= 0.0) {
            return Err(invalid("field.diffusion_d", "must be >= 0"));
        }
        let c = f.diffusion_d * self.dt() / (f.cell_size_mm * f.cell_size_mm);
        if c > arena_core::field::STABILITY_LIMIT {
            return Err(invalid(
                "field.diffusion_d",
                format!(
                    "D*dt/cell_size^2 = {c:.4} exceeds 0.25 at tick_rate {} Hz",
                    self.tick_rate
                ),
            ));
        }
        if !(f.evaporation_rho >= 0.0) {
            return Err(invalid("field.evaporation_rho", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&f.opacity) {
            return Err(invalid("field.opacity", "must be in [0,1]"));
        }
        if let FieldScale::Fixed { max } = f.scale {
            if !(max > 0.0) {
                return Err(invalid("field.scale.max", "must be > 0"));
            }
        }
        if matches!(&f.colormap, Some(c) if c.is_empty()) {
            return Err(invalid("field.colormap", "needs at least one colour"));
        }
        self.tile_layer()?;
        check_amplitude(self.tiles.noise_amplitude)
            .map_err(|_| invalid("tiles.noise_amplitude", "amplitude out of [0,1]"))?;
        self.overlay
            .validate()
            .map_err(|e| invalid("overlay", e))?;
        self.behavior
            .validate()
            .map_err(|e| invalid("behavior", e))?;
        for (i, o) in self.objects.iter().enumerate() {
            o.validate().map_err(|e| invalid(&format!("objects[{i}]"), e.to_string()))?;
        }
        let cal = &self.calibration;
        if !cal.grid_fractions.iter().all(|f| (0.0..=1.0).contains(f))
            || cal.grid_fractions.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid(
                "calibration.grid_fractions",
                "must be increasing fractions in [0,1]",
            ));
        }
        if !(cal.dot_radius_px.unwrap_or(1.0) > 0.0) {
            return Err(invalid("calibration.dot_radius_px", "must be > 0"));
        }
        match &self.robots.placement {
            Placement::Explicit { poses } => {
                for (i, p) in poses.iter().enumerate() {
                    let inside = p.x.is_finite()
                        && p.y.is_finite()
                        && self.arena().contains(Point::new(p.x, p.y));
                    if !inside {
                        return Err(invalid(
                            &format!("robots.placement.poses[{i}]"),
                            "pose lies outside the arena",
                        ));
                    }
                }
            }
            Placement::Cluster { radius, center, .. } => {
                if !(*radius > 0.0) {
                    return Err(invalid("robots.placement.radius", "must be > 0"));
                }
                if !self.arena().contains(Point::new(center[0], center[1])) {
                    return Err(invalid("robots.placement.center", "lies outside the arena"));
                }
            }
            Placement::Uniform { .. } => {}
        }
        Ok(())
    }

    /// Simulated step, seconds.
    pub fn dt(&self) -> f64 {
        1.0 / self.tick_rate
    }

    pub fn arena(&self) -> Arena {
        Arena {
            width: self.arena.width_mm,
            height: self.arena.height_mm,
        }
    }

    pub fn is_closed_loop(&self) -> bool {
        self.mode != Mode::FramesIn
    }

    pub fn world_to_camera(&self) -> Homography {
        match self.camera.world_to_camera {
            Some(v) => Homography::from_row_major(v).unwrap_or_else(|_| fit_camera(&self.arena, &self.camera)),
            None => fit_camera(&self.arena, &self.camera),
        }
    }

    pub fn camera_model(&self) -> CameraModel {
        let c = &self.camera;
        CameraModel {
            width: c.width,
            height: c.height,
            world_to_camera: self.world_to_camera(),
            arena_width_mm: self.arena.width_mm,
            arena_height_mm: self.arena.height_mm,
            background_level: c.background_level,
            robot_body_level: c.robot_body_level,
            pixel_noise_sigma: c.pixel_noise_sigma,
            vignette_strength: c.vignette_strength,
        }
    }

    pub fn projector_geometry(&self) -> ProjectorGeometry {
        ProjectorGeometry {
            width: self.projector.width,
            height: self.projector.height,
            mm_per_px: self.projector.mm_per_px.unwrap_or(1.0),
        }
    }

    /// Robot radius as imaged at the arena centre.
    pub fn robot_radius_px(&self) -> Result<f64, ConfigError> {
        let h = match self.camera.world_to_camera {
            Some(v) => Homography::from_row_major(v)
                .map_err(|e| invalid("camera.world_to_camera", e.to_string()))?,
            None => fit_camera(&self.arena, &self.camera),
        };
        let c = Point::new(self.arena.width_mm / 2.0, self.arena.height_mm / 2.0);
        let s = h
            .local_scale(c)
            .map_err(|e| invalid("camera.world_to_camera", e.to_string()))?;
        Ok(self.robots.radius_mm * s)
    }

    pub fn hough_params(&self) -> HoughParams {
        let h = &self.hough;
        let d = HoughParams::default();
        HoughParams {
            r_min: h.r_min.unwrap_or(d.r_min),
            r_max: h.r_max.unwrap_or(d.r_max),
            dp: h.dp,
            edge_threshold: h.edge_threshold,
            center_threshold: h.center_threshold,
            min_center_dist: h.min_center_dist.unwrap_or(d.min_center_dist),
            max_circles: h.max_circles,
        }
    }

    pub fn tracker_params(&self) -> TrackerParams {
        let t = &self.tracker;
        TrackerParams {
            gate_radius: t.gate_radius.unwrap_or(TrackerParams::default().gate_radius),
            confirm_hits: t.confirm_hits,
            max_misses: t.max_misses,
            radius_smoothing_alpha: t.radius_smoothing_alpha,
            velocity_smoothing_beta: t.velocity_smoothing_beta,
        }
    }

    pub fn field(&self) -> Result<Field, ConfigError> {
        let f = &self.field;
        let mut field = Field::for_arena(
            self.arena.width_mm,
            self.arena.height_mm,
            f.cell_size_mm,
            f.diffusion_d,
            f.evaporation_rho,
            self.dt(),
        )
        .map_err(|e| invalid("field", e.to_string()))?;
        field.set_blockers(&self.objects);
        Ok(field)
    }

    pub fn layer_settings(&self) -> LayerSettings {
        let f = &self.field;
        LayerSettings {
            geometry: self.projector_geometry(),
            field_opacity: f.opacity,
            field_scale: f.scale,
            colormap: f
                .colormap
                .as_deref()
                .map(Colormap::from_anchors)
                .unwrap_or_default(),
            source_color: f.source_color,
        }
    }

    pub fn tile_layer(&self) -> Result<TileLayer, ConfigError> {
        let t = &self.tiles;
        let tw = (self.arena.width_mm / t.tile_size_mm).ceil().max(1.0) as usize;
        let th = (self.arena.height_mm / t.tile_size_mm).ceil().max(1.0) as usize;
        let seed = t.noise_seed.unwrap_or(0);
        let layer = match &t.pattern {
            TilePattern::Checkerboard => TileLayer::checkerboard(tw, th, t.tile_size_mm, t.base_colors),
            TilePattern::Random { fraction } => {
                if !(0.0..=1.0).contains(fraction) {
                    return Err(invalid("tiles.pattern.fraction", "must be in [0,1]"));
                }
                let pattern_seed = rng::stream_seed(self.master_seed, "tile_pattern", 0);
                TileLayer::random(tw, th, t.tile_size_mm, t.base_colors, *fraction, pattern_seed)
            }
            TilePattern::Explicit { labels } => {
                TileLayer::new(tw, th, t.tile_size_mm, t.base_colors, labels.clone())
            }
        };
        let mut layer = layer.map_err(|e| invalid("tiles", e.to_string()))?;
        layer.noise_mode = t.noise_mode;
        layer.noise_seed = seed;
        layer
            .set_noise_amplitude(t.noise_amplitude)
            .map_err(|_| invalid("tiles.noise_amplitude", "amplitude out of [0,1]"))?;
        Ok(layer)
    }

    /// Initial robots, ids `0..n`.
    pub fn initial_robots(&self) -> Result<Vec<Robot>, ConfigError> {
        let r = &self.robots;
        let mk = |id: usize, x: f64, y: f64, heading: f64| Robot {
            id: id as u64,
            pos: Point::new(x, y),
            heading: arena_core::geom::wrap_angle(heading),
            speed: r.speed_mm_s,
            radius: r.radius_mm,
            opinion: 0,
            behavior: r.behavior,
        };
        let seed = rng::stream_seed(self.master_seed, "placement", 0);
        let poses = match &r.placement {
            Placement::Explicit { poses } => poses.iter().map(|p| (p.x, p.y, p.heading)).collect(),
            Placement::Uniform { count } => {
                let (w, h, m) = (self.arena.width_mm, self.arena.height_mm, r.radius_mm);
                scatter(*count, seed, 2.1 * m, |u, v| {
                    Point::new(m + u * (w - 2.0 * m).max(0.0), m + v * (h - 2.0 * m).max(0.0))
                })
                .map_err(|n| invalid("robots.placement.count", format!("could only place {n} of {count} robots without overlap")))?
            }
            Placement::Cluster { count, center, radius } => {
                let arena = self.arena();
                let (cx, cy, rad, m) = (center[0], center[1], *radius, r.radius_mm);
                scatter(*count, seed, 2.1 * m, |u, v| {
                    // uniform over the disc
                    let rr = rad * u.sqrt();
                    let a = std::f64::consts::TAU * v;
                    let p = Point::new(cx + rr * a.cos(), cy + rr * a.sin());
                    Point::new(p.x.clamp(m, arena.width - m), p.y.clamp(m, arena.height - m))
                })
                .map_err(|n| invalid("robots.placement.count", format!("could only place {n} of {count} robots without overlap")))?
            }
        };
        Ok(poses
            .into_iter()
            .enumerate()
            .map(|(i, (x, y, hd))| mk(i, x, y, hd))
            .collect())
    }
}

/// Rejection-sample `count` positions at least `min_dist` apart. Headings
/// come from the same keyed stream.
fn scatter(
    count: usize,
    seed: u64,
    min_dist: f64,
    sample: impl Fn(f64, f64) -> Point,
) -> Result<Vec<(f64, f64, f64)>, usize> {
    const ATTEMPTS_PER_ROBOT: u64 = 2000;
    let mut placed: Vec<(f64, f64, f64)> = Vec::with_capacity(count);
    let mut k = 0u64;
    for i in 0..count {
        let budget = k + ATTEMPTS_PER_ROBOT;
        loop {
            if k >= budget {
                return Err(i);
            }
            let u = rng::unit_f64(rng::key(&[seed, k, 0]));
            let v = rng::unit_f64(rng::key(&[seed, k, 1]));
            k += 1;
            let p = sample(u, v);
            if placed
                .iter()
                .all(|&(x, y, _)| Point::new(x, y).dist(p) >= min_dist)
            {
                let hd = (rng::unit_f64(rng::key(&[seed, i as u64, 2])) * 2.0 - 1.0)
                    * std::f64::consts::PI;
                placed.push((p.x, p.y, hd));
                break;
            }
        }
    }
    Ok(placed)
}

/// Uniform scale that fits the arena into the frame, centred.
fn fit_camera(arena: &ArenaConfig, cam: &CameraConfig) -> Homography {
    let s = (cam.width as f64 / arena.width_mm).min(cam.height as f64 / arena.height_mm);
    let tx = (cam.width as f64 - s * arena.width_mm) / 2.0;
    let ty = (cam.height as f64 - s * arena.height_mm) / 2.0;
    Homography::scaling(s, s)
        .then(&Homography::translation(tx, ty))
        .unwrap_or_else(|_| Homography::identity())
}
