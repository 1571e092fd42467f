//! The experiment loop: pacing, logging, telemetry and the final summary.

use std::time::{Duration, Instant};

use arena_core::image::save_pnm;
use arena_core::swarm::mean_nearest_neighbor_distance;
use serde::Serialize;
use serde_json::json;

use crate::command::{Chain, CommandSource, ScriptedSource};
use crate::config::ScenarioConfig;
use crate::metrics::{Metrics, MetricsSnapshot};
use crate::orchestrator::{EngineError, Orchestrator, RunState};
use crate::record::{Logs, TickRecord};
use crate::telemetry::{telemetry_snapshot, TelemetrySink};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Completed,
    StopCommand,
    EndOfInput,
    /// Paused, and the command source can no longer resume the run.
    PausedWithoutSource,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub ticks_run: u64,
    pub stop_reason: StopReason,
    pub mean_fps: f64,
    pub min_fps: f64,
    /// Closed loop only.
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub id_switches: Option<u64>,
    pub final_field_mass: f64,
    /// World mm; closed loop with at least two robots.
    pub mean_nn_distance_mm: Option<f64>,
    /// TileVote robots only.
    pub opinion_accuracy: Option<f64>,
    pub metrics: Option<MetricsSnapshot>,
}

/// Sleep granularity while paused.
const IDLE_POLL: Duration = Duration::from_millis(5);

/// Run a scenario to completion. Logs are opened before tick 0, so an
/// unwritable path fails before anything runs.
pub fn run_experiment(
    cfg: &ScenarioConfig,
    commands: &mut dyn CommandSource,
    telemetry: &mut dyn TelemetrySink,
) -> Result<ExperimentSummary, EngineError> {
    let trace_path = cfg.logs.trace_path();
    let mut logs = Logs::open(&cfg.logs.tracks_path(), &cfg.logs.events_path(), trace_path.as_deref())?;
    let mut replay = match &cfg.commands.replay {
        Some(p) => ScriptedSource::load(p).map_err(EngineError::Replay)?,
        None => ScriptedSource::default(),
    };
    let mut source = Chain(&mut replay, commands);
    let result = run_loop(cfg, &mut source, telemetry, &mut logs);
    // keep whatever was written, even on failure
    let flushed = logs.flush();
    let summary = result?;
    flushed?;
    Ok(summary)
}

fn run_loop(
    cfg: &ScenarioConfig,
    source: &mut dyn CommandSource,
    telemetry: &mut dyn TelemetrySink,
    logs: &mut Logs,
) -> Result<ExperimentSummary, EngineError> {
    let mut orch = Orchestrator::new(cfg)?;
    logs.write_event(&json!({
        "type": "run_start",
        "tick": 0,
        "payload": {
            "master_seed": cfg.master_seed,
            "mode": cfg.mode,
            "free_run": cfg.free_run,
            "duration": cfg.duration,
            "tick_rate": cfg.tick_rate,
            "robots": orch.robots().len(),
        }
    }))?;
    logs.write_event(&orch.calibration().event_line())?;

    let paced = !cfg.free_run;
    let export_every = if paced { cfg.logs.frame_export_every } else { 0 };
    if export_every > 0 {
        std::fs::create_dir_all(cfg.logs.frames_dir()).map_err(|e| crate::record::LogError::Open {
            path: cfg.logs.frames_dir().display().to_string(),
            source: e,
        })?;
    }
    let mut metrics = Metrics::new();
    let run_start = Instant::now();
    // start of the current tick's accounting window (sleep excluded)
    let mut window_start = Instant::now();
    let mut deadline = Instant::now();
    let mut reason = StopReason::Completed;

    while orch.tick_index() < cfg.duration {
        if orch.state() != RunState::Running {
            orch.poll_idle(source);
            match orch.state() {
                RunState::Stopped => {
                    reason = StopReason::StopCommand;
                    break;
                }
                RunState::Paused if source.is_closed() => {
                    reason = StopReason::PausedWithoutSource;
                    break;
                }
                RunState::Paused => {
                    std::thread::sleep(IDLE_POLL);
                    window_start = Instant::now();
                    deadline = Instant::now();
                    continue;
                }
                RunState::Running => {}
            }
        }
        let Some(mut rec) = orch.tick(source)? else {
            reason = StopReason::EndOfInput;
            break;
        };
        let now = Instant::now();
        // the window also covers the previous tick's logging
        rec.tick_ms = (now - window_start).as_secs_f64() * 1000.0;
        rec.wall_time_ms = (now - run_start).as_secs_f64() * 1000.0;
        let period = Duration::from_secs_f64(1.0 / orch.pacing_hz());
        let tick_deadline = deadline + period;
        if paced && now > tick_deadline {
            rec.overrun_ms = Some((now - tick_deadline).as_secs_f64() * 1000.0);
        }
        rec.fps_instant = metrics.record(rec.tick_ms, rec.stage_ms);
        emit(&orch, &rec, &metrics, logs, telemetry, export_every, cfg)?;

        if paced {
            let now = Instant::now();
            if now < tick_deadline {
                std::thread::sleep(tick_deadline - now);
            }
            deadline = tick_deadline.max(now);
        }
        window_start = Instant::now();
        if orch.state() == RunState::Stopped {
            reason = StopReason::StopCommand;
            break;
        }
    }

    let closed = cfg.is_closed_loop();
    let truth = orch.truth();
    let summary = ExperimentSummary {
        ticks_run: orch.tick_index(),
        stop_reason: reason,
        mean_fps: metrics.mean_fps(),
        min_fps: metrics.min_fps(),
        precision: closed.then(|| truth.precision()),
        recall: closed.then(|| truth.recall()),
        id_switches: closed.then_some(truth.id_switches),
        final_field_mass: orch.field().mass(),
        mean_nn_distance_mm: (closed && orch.robots().len() >= 2)
            .then(|| mean_nearest_neighbor_distance(orch.robots())),
        opinion_accuracy: orch.opinion_accuracy(),
        metrics: metrics.snapshot(),
    };
    logs.write_event(&json!({
        "type": "run_end",
        "tick": summary.ticks_run,
        "payload": {
            "ticks_run": summary.ticks_run,
            "stop_reason": summary.stop_reason,
            "precision": summary.precision,
            "recall": summary.recall,
            "id_switches": summary.id_switches,
            "final_field_mass": summary.final_field_mass,
            "mean_nn_distance_mm": summary.mean_nn_distance_mm,
            "opinion_accuracy": summary.opinion_accuracy,
        },
        "wall": {
            "mean_fps": summary.mean_fps,
            "min_fps": summary.min_fps,
            "elapsed_ms": run_start.elapsed().as_secs_f64() * 1000.0,
        }
    }))?;
    Ok(summary)
}

fn emit(
    orch: &Orchestrator,
    rec: &TickRecord,
    metrics: &Metrics,
    logs: &mut Logs,
    telemetry: &mut dyn TelemetrySink,
    export_every: u64,
    cfg: &ScenarioConfig,
) -> Result<(), EngineError> {
    logs.append(rec)?;
    if export_every > 0 && rec.tick.is_multiple_of(export_every) {
        let dir = cfg.logs.frames_dir();
        let save = |img: &arena_core::image::ImageBuffer, name: String| {
            save_pnm(img, dir.join(name)).map_err(|e| crate::record::LogError::Write(std::io::Error::other(e.to_string())))
        };
        if let Some(c) = orch.last_camera_frame() {
            save(c, format!("camera_{:06}.pgm", rec.tick))?;
        }
        if let Some(p) = orch.last_projector_frame() {
            save(p.image(), format!("projector_{:06}.ppm", rec.tick))?;
        }
    }
    if telemetry.wants_frames() {
        let tiles = arena_core::field::make_tile_layer_frame(orch.tiles(), rec.tick);
        let fps = metrics.snapshot().map(|s| s.fps_ema).unwrap_or(rec.fps_instant);
        telemetry.publish(telemetry_snapshot(rec, fps, orch.field(), &tiles.labels, tiles.tw));
    }
    Ok(())
}
