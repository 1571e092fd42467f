//! Experiment state and the fixed-order tick.

use std::collections::HashMap;
use std::path::PathBuf;
use std::time::Instant;

use arena_core::calib::{calibrate_from_fiducials, Homography};
use arena_core::detect::{detect_circles, Detection, HoughParams};
use arena_core::field::{make_tile_layer_frame, Effect, Field, TileLayer, VirtualObject};
use arena_core::image::{load_pnm, render_camera_view, CameraModel, ImageBuffer, RobotDisc};
use arena_core::render::{compose_projector_frame, LayerSettings, OverlayStyle, ProjectorFrame, Scene};
use arena_core::rng;
use arena_core::swarm::{step_swarm, Arena, Behavior, BehaviorParams, Deposit, Robot};
use arena_core::track::{associate, Track, TrackState, Tracker};
use arena_core::Point;
use serde_json::{json, Value};
use thiserror::Error;

use crate::command::{Command, CommandSource, Param, Verb};
use crate::config::{CalibrationMethod, ConfigError, ScenarioConfig};
use crate::metrics::STAGES;
use crate::record::{AppliedCommand, TickEvents, TickRecord, TrackEntry};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("input frames: {0}")]
    Frames(String),
    #[error("tick {tick}, {stage}: {message}")]
    Stage {
        tick: u64,
        stage: &'static str,
        message: String,
    },
    #[error("logging: {0}")]
    Log(#[from] crate::record::LogError),
    #[error("command replay: {0}")]
    Replay(std::io::Error),
}

fn stage_err(tick: u64, stage: &'static str) -> impl Fn(String) -> EngineError {
    move |message| EngineError::Stage {
        tick,
        stage,
        message,
    }
}

/// Result of the startup calibration.
#[derive(Debug, Clone)]
pub struct Calibration {
    pub camera_to_projector: Homography,
    pub method: CalibrationMethod,
    pub rms_px: f64,
}

impl Calibration {
    pub fn event_line(&self) -> Value {
        json!({
            "type": "calibration",
            "tick": 0,
            "payload": {
                "method": self.method,
                "camera_to_projector": self.camera_to_projector.to_decimal_strings(),
                "rms_px": self.rms_px,
            }
        })
    }
}

/// Recover camera→projector. With fiducials, the dot grid is drawn in
/// projector pixels and imaged through the true projector→camera map.
pub fn calibrate(cfg: &ScenarioConfig) -> Result<Calibration, EngineError> {
    let geom = cfg.projector_geometry();
    let proj_to_cam = geom
        .projector_to_world()
        .then(&cfg.world_to_camera())
        .map_err(|e| EngineError::Calibration(e.to_string()))?;
    let method = cfg.calibration.method;
    match method {
        CalibrationMethod::Nominal => Ok(Calibration {
            camera_to_projector: proj_to_cam
                .inverse()
                .map_err(|e| EngineError::Calibration(e.to_string()))?,
            method,
            rms_px: 0.0,
        }),
        CalibrationMethod::Fiducial => {
            let fr = cfg.calibration.grid_fractions;
            let (w, h) = (geom.width as f64, geom.height as f64);
            let dots: Vec<Point> = fr
                .iter()
                .flat_map(|&fy| fr.iter().map(move |&fx| Point::new(fx * w, fy * h)))
                .collect();
            let radius = cfg.calibration.dot_radius_px.unwrap_or(10.0);
            let cam = CameraModel {
                world_to_camera: proj_to_cam,
                arena_width_mm: w,
                arena_height_mm: h,
                ..cfg.camera_model()
            };
            let discs: Vec<RobotDisc> = dots
                .iter()
                .map(|&center| RobotDisc { center, radius })
                .collect();
            let frame = render_camera_view(&discs, &cam, rng::stream_seed(cfg.master_seed, "calibration", 0))
                .map_err(|e| EngineError::Calibration(e.to_string()))?;
            let (camera_to_projector, rms_px) = calibrate_from_fiducials(&dots, &frame, &cfg.hough_params())
                .map_err(|e| EngineError::Calibration(e.to_string()))?;
            Ok(Calibration {
                camera_to_projector,
                method,
                rms_px,
            })
        }
    }
}

/// Camera frames read from a directory in file-name order.
#[derive(Debug)]
pub struct FrameFiles {
    files: Vec<PathBuf>,
    next: usize,
}

impl FrameFiles {
    pub fn open(dir: &std::path::Path) -> Result<Self, EngineError> {
        let rd = std::fs::read_dir(dir)
            .map_err(|e| EngineError::Frames(format!("{}: {e}", dir.display())))?;
        let mut files: Vec<PathBuf> = rd
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                matches!(
                    p.extension().and_then(|e| e.to_str()),
                    Some("pgm" | "pnm" | "ppm")
                )
            })
            .collect();
        files.sort();
        Ok(Self { files, next: 0 })
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    /// `Ok(None)` once every file has been read.
    pub fn next_frame(&mut self) -> Result<Option<ImageBuffer>, EngineError> {
        let Some(path) = self.files.get(self.next) else {
            return Ok(None);
        };
        self.next += 1;
        let img = load_pnm(path).map_err(|e| EngineError::Frames(format!("{}: {e}", path.display())))?;
        if img.channels() == 1 {
            return Ok(Some(img));
        }
        // luminance from RGB
        let gray: Vec<u8> = img
            .data()
            .chunks_exact(3)
            .map(|p| ((p[0] as u32 * 299 + p[1] as u32 * 587 + p[2] as u32 * 114 + 500) / 1000) as u8)
            .collect();
        ImageBuffer::from_raw(img.width(), img.height(), 1, gray)
            .map(Some)
            .map_err(|e| EngineError::Frames(e.to_string()))
    }
}

/// Detection and identity bookkeeping against the simulated robots.
#[derive(Debug, Clone, Default)]
pub struct TruthStats {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub id_switches: u64,
    robot_track: HashMap<u64, u64>,
}

impl TruthStats {
    pub fn precision(&self) -> f64 {
        let d = self.true_positives + self.false_positives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }

    pub fn recall(&self) -> f64 {
        let d = self.true_positives + self.false_negatives;
        if d == 0 {
            1.0
        } else {
            self.true_positives as f64 / d as f64
        }
    }
}

fn as_track(id: u64, p: Point, r: f64) -> Track {
    Track {
        id,
        cx: p.x,
        cy: p.y,
        vx: 0.0,
        vy: 0.0,
        r,
        state: TrackState::Confirmed,
        hits: 0,
        misses: 0,
        last_update: 0,
    }
}

/// A command waiting for stage 5; `settled` marks control verbs that
/// already took effect while the loop was paused.
#[derive(Debug, Clone)]
struct Pending {
    command: Command,
    settled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Running,
    Paused,
    Stopped,
}

/// Everything the tick thread owns.
pub struct Orchestrator {
    cfg: ScenarioConfig,
    camera: CameraModel,
    hough: HoughParams,
    tracker: Tracker,
    calibration: Calibration,
    cam_to_world: Homography,
    world_to_cam: Homography,
    layer: LayerSettings,
    style: OverlayStyle,
    field: Field,
    tiles: TileLayer,
    objects: Vec<VirtualObject>,
    robots: Vec<Robot>,
    behavior: BehaviorParams,
    arena: Arena,
    robot_radius_px: f64,
    deposits: Vec<Deposit>,
    pending: Vec<Pending>,
    frames: Option<FrameFiles>,
    tick: u64,
    state: RunState,
    pacing_hz: f64,
    truth: TruthStats,
    last_camera: Option<ImageBuffer>,
    last_projector: Option<ProjectorFrame>,
}

impl Orchestrator {
    /// Build the initial state, including calibration.
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, EngineError> {
        let calibration = calibrate(cfg)?;
        let geom = cfg.projector_geometry();
        let cam_to_world = calibration
            .camera_to_projector
            .then(&geom.projector_to_world())
            .map_err(|e| EngineError::Calibration(e.to_string()))?;
        let frames = match (&cfg.mode, &cfg.frames_dir) {
            (crate::config::Mode::FramesIn, Some(dir)) => Some(FrameFiles::open(dir)?),
            _ => None,
        };
        let robots = if cfg.is_closed_loop() {
            cfg.initial_robots()?
        } else {
            Vec::new()
        };
        let state = if cfg.commands.wait_for_start {
            RunState::Paused
        } else {
            RunState::Running
        };
        Ok(Self {
            camera: cfg.camera_model(),
            hough: cfg.hough_params(),
            tracker: Tracker::new(cfg.tracker_params())
                .map_err(|e| ConfigError::Invalid {
                    path: "tracker".into(),
                    reason: e.to_string(),
                })?,
            calibration,
            cam_to_world,
            world_to_cam: cfg.world_to_camera(),
            layer: cfg.layer_settings(),
            style: cfg.overlay.clone(),
            field: cfg.field()?,
            tiles: cfg.tile_layer()?,
            objects: cfg.objects.clone(),
            robots,
            behavior: cfg.behavior.clone(),
            arena: cfg.arena(),
            robot_radius_px: cfg.robot_radius_px()?,
            deposits: Vec::new(),
            pending: Vec::new(),
            frames,
            tick: 0,
            state,
            pacing_hz: cfg.tick_rate,
            truth: TruthStats::default(),
            last_camera: None,
            last_projector: None,
            cfg: cfg.clone(),
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    /// Next tick to run.
    pub fn tick_index(&self) -> u64 {
        self.tick
    }

    pub fn state(&self) -> RunState {
        self.state
    }

    pub fn pacing_hz(&self) -> f64 {
        self.pacing_hz
    }

    pub fn robots(&self) -> &[Robot] {
        &self.robots
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn tiles(&self) -> &TileLayer {
        &self.tiles
    }

    pub fn objects(&self) -> &[VirtualObject] {
        &self.objects
    }

    pub fn tracks(&self) -> &[Track] {
        self.tracker.tracks()
    }

    pub fn truth(&self) -> &TruthStats {
        &self.truth
    }

    pub fn last_camera_frame(&self) -> Option<&ImageBuffer> {
        self.last_camera.as_ref()
    }

    pub fn last_projector_frame(&self) -> Option<&ProjectorFrame> {
        self.last_projector.as_ref()
    }

    pub fn camera_to_world(&self) -> &Homography {
        &self.cam_to_world
    }

    pub fn world_to_camera(&self) -> &Homography {
        &self.world_to_cam
    }

    /// Drain commands while no tick runs. Control verbs take effect at once;
    /// everything is recorded in the next tick's applied list.
    pub fn poll_idle(&mut self, source: &mut dyn CommandSource) {
        for c in source.poll(self.tick) {
            let settled = c.verb.is_control();
            if settled {
                self.control(&c.verb);
            }
            self.pending.push(Pending {
                command: c,
                settled,
            });
        }
    }

    fn control(&mut self, verb: &Verb) {
        match (verb, self.state) {
            (Verb::Stop, _) => self.state = RunState::Stopped,
            (_, RunState::Stopped) => {}
            (Verb::Pause, _) => self.state = RunState::Paused,
            (Verb::Start | Verb::Resume, _) => self.state = RunState::Running,
            _ => {}
        }
    }

    fn apply(&mut self, verb: &Verb) -> Result<(), String> {
        match verb {
            Verb::Start | Verb::Pause | Verb::Resume | Verb::Stop => {
                self.control(verb);
                Ok(())
            }
            Verb::SetNoise { amplitude } => self
                .tiles
                .set_noise_amplitude(*amplitude)
                .map_err(|_| "amplitude out of [0,1]".to_string()),
            Verb::AddObject(obj) => {
                obj.validate().map_err(|e| e.to_string())?;
                match self.objects.iter_mut().find(|o| o.id == obj.id) {
                    Some(o) => *o = obj.clone(),
                    None => self.objects.push(obj.clone()),
                }
                self.field.set_blockers(&self.objects);
                Ok(())
            }
            Verb::RemoveObject { id } => {
                let before = self.objects.len();
                self.objects.retain(|o| o.id != *id);
                if self.objects.len() == before {
                    return Err(format!("no object with id {id}"));
                }
                self.field.set_blockers(&self.objects);
                Ok(())
            }
            Verb::DepositAt { x, y, amount } => self
                .field
                .deposit(Point::new(*x, *y), *amount)
                .map_err(|e| e.to_string()),
            Verb::SetParam(p) => match p {
                Param::NoiseAmplitude(a) => self
                    .tiles
                    .set_noise_amplitude(*a)
                    .map_err(|_| "amplitude out of [0,1]".to_string()),
                Param::EvaporationRho(rho) => {
                    self.field.set_evaporation_rho(*rho).map_err(|e| e.to_string())
                }
                Param::Palette(p) => {
                    let style = OverlayStyle {
                        palette: p.clone(),
                        ..self.style.clone()
                    };
                    style.validate()?;
                    self.style = style;
                    Ok(())
                }
                Param::TickRate(hz) => {
                    self.pacing_hz = *hz;
                    Ok(())
                }
            },
        }
    }

    fn truth_positions(&self) -> Vec<Track> {
        self.robots
            .iter()
            .filter_map(|r| {
                self.world_to_cam
                    .map_point(r.pos)
                    .ok()
                    .map(|p| as_track(r.id, p, self.robot_radius_px))
            })
            .collect()
    }

    fn score_detections(&mut self, truth: &[Track], dets: &[Detection]) {
        let a = associate(truth, dets, self.robot_radius_px);
        self.truth.true_positives += a.matches.len() as u64;
        self.truth.false_negatives += a.unmatched_tracks.len() as u64;
        self.truth.false_positives += a.unmatched_detections.len() as u64;
    }

    /// Associate robots with confirmed tracks; count identity changes and
    /// return the robot-state label of each associated track.
    fn score_identities(&mut self, truth: &[Track]) -> HashMap<u64, usize> {
        let confirmed: Vec<&Track> = self
            .tracker
            .tracks()
            .iter()
            .filter(|t| t.state == TrackState::Confirmed)
            .collect();
        let as_dets: Vec<Detection> = confirmed
            .iter()
            .map(|t| Detection {
                cx: t.cx,
                cy: t.cy,
                r: t.r,
                score: 0,
            })
            .collect();
        let a = associate(truth, &as_dets, self.robot_radius_px);
        let by_id: HashMap<u64, &Robot> = self.robots.iter().map(|r| (r.id, r)).collect();
        let mut labels = HashMap::new();
        for (robot_id, j) in a.matches {
            let track_id = confirmed[j].id;
            if let Some(prev) = self.truth.robot_track.insert(robot_id, track_id) {
                if prev != track_id {
                    self.truth.id_switches += 1;
                }
            }
            if let Some(r) = by_id.get(&robot_id) {
                let label = match r.behavior {
                    Behavior::TileVote => r.opinion as usize,
                    b => b.index(),
                };
                labels.insert(track_id, label);
            }
        }
        labels
    }

    /// Run one tick. `Ok(None)` when frame input is exhausted.
    pub fn tick(&mut self, source: &mut dyn CommandSource) -> Result<Option<TickRecord>, EngineError> {
        let t = self.tick;
        let start = Instant::now();
        let mut stage_ms = [0.0; STAGES];
        let mut lap = Instant::now();
        let mut mark = |i: usize, lap: &mut Instant| {
            let now = Instant::now();
            stage_ms[i] = (now - *lap).as_secs_f64() * 1000.0;
            *lap = now;
        };

        // (1) camera frame
        let frame = match &mut self.frames {
            Some(files) => match files.next_frame()? {
                Some(f) => f,
                None => return Ok(None),
            },
            None => {
                let discs: Vec<RobotDisc> = self
                    .robots
                    .iter()
                    .map(|r| RobotDisc {
                        center: r.pos,
                        radius: r.radius,
                    })
                    .collect();
                render_camera_view(&discs, &self.camera, rng::stream_seed(self.cfg.master_seed, "camera", t))
                    .map_err(|e| stage_err(t, "camera")(e.to_string()))?
            }
        };
        mark(0, &mut lap);

        // (2) detect
        let dets = detect_circles(&frame, &self.hough, self.cfg.camera.blur_sigma, self.cfg.camera.blur_ksize)
            .map_err(|e| stage_err(t, "detect")(e.to_string()))?;
        mark(1, &mut lap);

        // (3) track
        let tev = self
            .tracker
            .step(&dets, self.cfg.dt(), t)
            .map_err(|e| stage_err(t, "track")(e.to_string()))?;
        mark(2, &mut lap);

        // (4) confirmed tracks to world
        let world: Vec<Option<Point>> = self
            .tracker
            .tracks()
            .iter()
            .map(|tr| {
                (tr.state == TrackState::Confirmed)
                    .then(|| self.cam_to_world.map_point(Point::new(tr.cx, tr.cy)).ok())
                    .flatten()
            })
            .collect();
        mark(3, &mut lap);

        // (5) commands, atomically and in arrival order
        for c in source.poll(t) {
            self.pending.push(Pending {
                command: c,
                settled: false,
            });
        }
        let mut applied = Vec::with_capacity(self.pending.len());
        for p in std::mem::take(&mut self.pending) {
            let error = if p.settled { Ok(()) } else { self.apply(&p.command.verb) };
            applied.push(AppliedCommand {
                command: p.command,
                error: error.err(),
            });
        }
        mark(4, &mut lap);

        // (6) last swarm step's deposits, sources, then physics
        let dt = self.cfg.dt();
        for d in std::mem::take(&mut self.deposits) {
            self.field
                .deposit(d.pos, d.amount)
                .map_err(|e| stage_err(t, "field")(e.to_string()))?;
        }
        for o in &self.objects {
            if let Effect::DepositSource { rate } = o.effect {
                let c = o.shape.center();
                if self.field.contains(c) {
                    self.field
                        .deposit(c, rate * dt)
                        .map_err(|e| stage_err(t, "field")(e.to_string()))?;
                }
            }
        }
        self.field
            .step(dt)
            .map_err(|e| stage_err(t, "field")(e.to_string()))?;
        mark(5, &mut lap);

        // ground truth is bookkeeping, not a pipeline stage
        let bookkeeping = Instant::now();
        let labels = if self.frames.is_none() {
            let truth = self.truth_positions();
            self.score_detections(&truth, &dets);
            self.score_identities(&truth)
        } else {
            HashMap::new()
        };
        lap += bookkeeping.elapsed();

        // (7) compose
        let scene = Scene {
            tiles: &self.tiles,
            field: &self.field,
            objects: &self.objects,
            tracks: self.tracker.tracks(),
            camera_to_projector: &self.calibration.camera_to_projector,
            style: &self.style,
            tick: t,
            track_labels: Some(&labels),
        };
        let projector = compose_projector_frame(&scene, &self.layer);
        mark(6, &mut lap);

        // (8) robots sense the projected environment and move
        if self.frames.is_none() {
            let tiles = make_tile_layer_frame(&self.tiles, t);
            let (robots, deposits) = step_swarm(
                &self.robots,
                &self.field,
                &tiles,
                t,
                dt,
                rng::stream_seed(self.cfg.master_seed, "swarm", t),
                &self.behavior,
                &self.arena,
            );
            self.robots = robots;
            self.deposits = deposits;
        }
        mark(7, &mut lap);

        // (9) record
        let tracks = self
            .tracker
            .tracks()
            .iter()
            .zip(world)
            .map(|(tr, w)| TrackEntry {
                id: tr.id,
                cx: tr.cx,
                cy: tr.cy,
                r: tr.r,
                state: tr.state,
                world: w,
                color: self.style.color_index(tr.id, Some(&labels)),
            })
            .collect();
        let tick_ms = start.elapsed().as_secs_f64() * 1000.0;
        self.last_camera = Some(frame);
        self.last_projector = Some(projector);
        self.tick += 1;
        Ok(Some(TickRecord {
            tick: t,
            wall_time_ms: 0.0,
            tick_ms,
            fps_instant: crate::metrics::fps_from_ms(tick_ms),
            stage_ms,
            overrun_ms: None,
            detections: dets.len(),
            tracks,
            field_mass: self.field.mass(),
            events: TickEvents {
                spawned: tev.spawned,
                confirmed: tev.confirmed,
                lost: tev.lost,
                applied,
            },
        }))
    }

    /// Fraction of TileVote robots whose opinion matches the noise-free
    /// tile under them.
    pub fn opinion_accuracy(&self) -> Option<f64> {
        let base = TileLayer {
            noise_amplitude: 0.0,
            ..self.tiles.clone()
        };
        let frame = make_tile_layer_frame(&base, 0);
        let voters: Vec<&Robot> = self
            .robots
            .iter()
            .filter(|r| r.behavior == Behavior::TileVote)
            .collect();
        if voters.is_empty() {
            return None;
        }
        let ok = voters
            .iter()
            .filter(|r| r.opinion == frame.label_at(r.pos))
            .count();
        Some(ok as f64 / voters.len() as f64)
    }
}
