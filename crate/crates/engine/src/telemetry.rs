//! Telemetry frames and the drop-oldest queue that carries them to the API.

use arena_core::field::Field;
use arena_core::track::TrackState;
use base64::Engine as _;
use crossbeam_channel::{Receiver, Sender, TrySendError};
use serde::{Deserialize, Serialize};

use crate::record::TickRecord;

/// Serialized frames never exceed this.
pub const MAX_FRAME_BYTES: usize = 64 * 1024;
pub const THUMBNAIL_MAX_DIM: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryTrack {
    pub id: u64,
    /// World mm.
    pub x: f64,
    pub y: f64,
    pub state: TrackState,
    pub color: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldThumb {
    pub w: usize,
    pub h: usize,
    pub min: f64,
    pub max: f64,
    /// Base64 of `w × h` row-major bytes.
    pub data: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryFrame {
    pub tick: u64,
    pub fps: f64,
    pub tracks: Vec<TelemetryTrack>,
    pub field: FieldThumb,
    /// Displayed tile labels at this tick, row-major.
    pub tiles: Vec<u8>,
    /// Tiles per row, so `tiles` can be laid out.
    pub tiles_w: usize,
    pub applied: Vec<u64>,
    /// Set when tracks or tiles were cut to respect the size cap.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

impl TelemetryFrame {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// Project one finished tick into a telemetry frame.
pub fn telemetry_snapshot(
    rec: &TickRecord,
    fps: f64,
    field: &Field,
    tile_labels: &[u8],
    tiles_w: usize,
) -> TelemetryFrame {
    let thumb = field.thumbnail(THUMBNAIL_MAX_DIM);
    let tracks = rec
        .tracks
        .iter()
        .filter(|t| t.state != TrackState::Lost)
        .filter_map(|t| {
            t.world.map(|p| TelemetryTrack {
                id: t.id,
                x: p.x,
                y: p.y,
                state: t.state,
                color: t.color,
            })
        })
        .collect();
    let mut frame = TelemetryFrame {
        tick: rec.tick,
        fps,
        tracks,
        field: FieldThumb {
            w: thumb.width,
            h: thumb.height,
            min: thumb.min,
            max: thumb.max,
            data: base64::engine::general_purpose::STANDARD.encode(&thumb.data),
        },
        tiles: tile_labels.to_vec(),
        tiles_w,
        applied: rec.events.applied.iter().map(|a| a.command.seq).collect(),
        truncated: false,
    };
    enforce_size_cap(&mut frame);
    frame
}

fn enforce_size_cap(frame: &mut TelemetryFrame) {
    let size = |f: &TelemetryFrame| serde_json::to_vec(f).map(|v| v.len()).unwrap_or(0);
    if size(frame) <= MAX_FRAME_BYTES {
        return;
    }
    frame.truncated = true;
    frame.tiles.clear();
    while size(frame) > MAX_FRAME_BYTES && !frame.tracks.is_empty() {
        let keep = frame.tracks.len() * 3 / 4;
        frame.tracks.truncate(keep);
    }
}

/// Where finished ticks are published.
pub trait TelemetrySink {
    /// Skip building frames nobody reads.
    fn wants_frames(&self) -> bool {
        true
    }

    /// Must not block.
    fn publish(&mut self, frame: TelemetryFrame);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct NoTelemetry;

impl TelemetrySink for NoTelemetry {
    fn wants_frames(&self) -> bool {
        false
    }

    fn publish(&mut self, _frame: TelemetryFrame) {}
}

/// Collects every frame; for tests and scripting.
#[derive(Debug, Default, Clone)]
pub struct CollectTelemetry(pub Vec<TelemetryFrame>);

impl TelemetrySink for CollectTelemetry {
    fn publish(&mut self, frame: TelemetryFrame) {
        self.0.push(frame);
    }
}

/// Bounded queue; when full, the oldest frame is discarded.
#[derive(Debug, Clone)]
pub struct TelemetryQueue {
    tx: Sender<TelemetryFrame>,
    rx: Receiver<TelemetryFrame>,
}

pub const TELEMETRY_QUEUE_CAPACITY: usize = 8;

impl TelemetryQueue {
    pub fn new(capacity: usize) -> Self {
        let (tx, rx) = crossbeam_channel::bounded(capacity.max(1));
        Self { tx, rx }
    }

    /// Consumer end.
    pub fn receiver(&self) -> Receiver<TelemetryFrame> {
        self.rx.clone()
    }

    /// Returns how many frames were discarded to make room.
    pub fn push(&self, mut frame: TelemetryFrame) -> usize {
        let mut dropped = 0;
        loop {
            match self.tx.try_send(frame) {
                Ok(()) => return dropped,
                Err(TrySendError::Full(f)) => {
                    frame = f;
                    if self.rx.try_recv().is_ok() {
                        dropped += 1;
                    }
                }
                Err(TrySendError::Disconnected(_)) => return dropped,
            }
        }
    }
}

impl TelemetrySink for TelemetryQueue {
    fn publish(&mut self, frame: TelemetryFrame) {
        self.push(frame);
    }
}
