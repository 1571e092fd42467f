//! Per-tick records and the two on-disk logs.
//!
//! The event log holds one JSON object per line with `type`, `tick` and
//! `payload` keys. Anything that depends on the wall clock lives under a
//! separate `wall` key, so two runs can be compared by dropping it.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use arena_core::track::TrackState;
use arena_core::Point;
use serde::Serialize;
use serde_json::{json, Value};

use crate::command::Command;

/// CSV and event lines are flushed at least this often.
pub const FLUSH_EVERY: u64 = 32;

pub const CSV_HEADER: [&str; 8] = [
    "tick", "track_id", "state", "cx_px", "cy_px", "r_px", "world_x_mm", "world_y_mm",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackEntry {
    pub id: u64,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub state: TrackState,
    /// World position in mm, when the camera→world map is defined there.
    pub world: Option<Point>,
    /// Overlay palette index.
    pub color: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AppliedCommand {
    #[serde(flatten)]
    pub command: Command,
    /// `None` when applied cleanly.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TickEvents {
    pub spawned: Vec<u64>,
    pub confirmed: Vec<u64>,
    pub lost: Vec<u64>,
    pub applied: Vec<AppliedCommand>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    /// Since the start of the run, at the end of this tick.
    pub wall_time_ms: f64,
    pub tick_ms: f64,
    pub fps_instant: f64,
    pub stage_ms: [f64; crate::metrics::STAGES],
    /// Time by which the tick exceeded its pacing period, if it did.
    pub overrun_ms: Option<f64>,
    pub detections: usize,
    pub tracks: Vec<TrackEntry>,
    pub field_mass: f64,
    pub events: TickEvents,
}

impl TickRecord {
    pub fn event_line(&self) -> Value {
        let mut wall = json!({
            "time_ms": self.wall_time_ms,
            "tick_ms": self.tick_ms,
            "fps_instant": self.fps_instant,
        });
        if let Some(o) = self.overrun_ms {
            wall["overrun_ms"] = json!(o);
        }
        let confirmed = self
            .tracks
            .iter()
            .filter(|t| t.state == TrackState::Confirmed)
            .count();
        json!({
            "type": "tick",
            "tick": self.tick,
            "payload": {
                "detections": self.detections,
                "tracks": self.tracks.len(),
                "confirmed": confirmed,
                "field_mass": self.field_mass,
                "events": self.events,
            },
            "wall": wall,
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: String,
        source: std::io::Error,
    },
    #[error("log write failed: {0}")]
    Write(#[from] std::io::Error),
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
}

/// Track CSV plus JSON-lines event log.
pub struct Logs {
    csv: csv::Writer<BufWriter<File>>,
    events: BufWriter<File>,
    trace: Option<BufWriter<File>>,
}

fn create(path: &Path) -> Result<BufWriter<File>, LogError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|source| LogError::Open {
                path: dir.display().to_string(),
                source,
            })?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| LogError::Open {
            path: path.display().to_string(),
            source,
        })
}

fn fmt3(v: f64) -> String {
    format!("{v:.3}")
}

impl Logs {
    /// Open all sinks and write the CSV header.
    pub fn open(tracks: &Path, events: &Path, trace: Option<&Path>) -> Result<Self, LogError> {
        let mut csv = csv::Writer::from_writer(create(tracks)?);
        let events = create(events)?;
        let trace = trace.map(create).transpose()?;
        csv.write_record(CSV_HEADER)?;
        Ok(Self { csv, events, trace })
    }

    pub fn write_event(&mut self, line: &Value) -> Result<(), LogError> {
        serde_json::to_writer(&mut self.events, line).map_err(std::io::Error::other)?;
        self.events.write_all(b"\n")?;
        Ok(())
    }

    /// CSV rows and the tick event line; flushes every [`FLUSH_EVERY`] ticks.
    pub fn append(&mut self, rec: &TickRecord) -> Result<(), LogError> {
        let tick = rec.tick.to_string();
        for t in &rec.tracks {
            let (wx, wy) = match t.world {
                Some(p) => (fmt3(p.x), fmt3(p.y)),
                None => (String::new(), String::new()),
            };
            self.csv.write_record([
                tick.as_str(),
                &t.id.to_string(),
                t.state.as_str(),
                &fmt3(t.cx),
                &fmt3(t.cy),
                &fmt3(t.r),
                &wx,
                &wy,
            ])?;
        }
        self.write_event(&rec.event_line())?;
        if let Some(trace) = &mut self.trace {
            for a in &rec.events.applied {
                let e = crate::command::TraceEntry {
                    tick: rec.tick,
                    command: a.command.clone(),
                };
                crate::command::write_trace_entry(trace, &e)?;
            }
        }
        if rec.tick % FLUSH_EVERY == FLUSH_EVERY - 1 {
            self.flush()?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), LogError> {
        self.csv.flush()?;
        self.events.flush()?;
        if let Some(t) = &mut self.trace {
            t.flush()?;
        }
        Ok(())
    }
}
