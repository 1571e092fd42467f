//! Persistent identities over per-frame detections.
//!
//! Constant-velocity prediction, gated greedy nearest-neighbour association
//! and a Tentative → Confirmed → Lost lifecycle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::Detection;

#[derive(Debug, Error, PartialEq)]
pub enum TrackError {
    #[error("dt must be non-negative, got {0}")]
    NegativeDt(f64),
    #[error("invalid tracker parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Tentative,
    Confirmed,
    Lost,
}

impl TrackState {
    pub fn as_str(self) -> &'static str {
        match self {
            TrackState::Tentative => "tentative",
            TrackState::Confirmed => "confirmed",
            TrackState::Lost => "lost",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub cx: f64,
    pub cy: f64,
    /// px/s
    pub vx: f64,
    pub vy: f64,
    pub r: f64,
    pub state: TrackState,
    pub hits: u32,
    pub misses: u32,
    pub last_update: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerParams {
    pub gate_radius: f64,
    pub confirm_hits: u32,
    pub max_misses: u32,
    pub radius_smoothing_alpha: f64,
    pub velocity_smoothing_beta: f64,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            gate_radius: 15.0,
            confirm_hits: 3,
            max_misses: 5,
            radius_smoothing_alpha: 0.3,
            velocity_smoothing_beta: 0.5,
        }
    }
}

impl TrackerParams {
    /// Defaults with the gate at 1.5 × the expected robot radius.
    pub fn for_robot_radius(radius_px: f64) -> Self {
        Self {
            gate_radius: 1.5 * radius_px,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        let bad = |m: &str| Err(TrackError::Params(m.into()));
        if !(self.gate_radius > 0.0) {
            return bad("gate_radius must be positive");
        }
        if self.confirm_hits < 1 {
            return bad("confirm_hits must be >= 1");
        }
        if self.max_misses < 1 {
            return bad("max_misses must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.radius_smoothing_alpha) {
            return bad("radius_smoothing_alpha must be in [0,1]");
        }
        if !(0.0..=1.0).contains(&self.velocity_smoothing_beta) {
            return bad("velocity_smoothing_beta must be in [0,1]");
        }
        Ok(())
    }
}

pub fn predict_tracks(tracks: &[Track], dt: f64) -> Result<Vec<Track>, TrackError> {
    if !(dt >= 0.0) {
        return Err(TrackError::NegativeDt(dt));
    }
    Ok(tracks
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if t.state != TrackState::Lost {
                t.cx += t.vx * dt;
                t.cy += t.vy * dt;
            }
            t
        })
        .collect())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Association {
    /// `(track_id, detection_index)`
    pub matches: Vec<(u64, usize)>,
    pub unmatched_tracks: Vec<u64>,
    pub unmatched_detections: Vec<usize>,
}

/// Greedy gated nearest-neighbour assignment.
///
/// Candidate pairs within `gate` are taken in ascending distance (ties by
/// track id, then detection index) while both sides are free.
pub fn associate(predicted: &[Track], detections: &[Detection], gate: f64) -> Association {
    let gate2 = gate * gate;
    let mut pairs: Vec<(f64, u64, usize, usize)> = Vec::new();
    for (ti, t) in predicted.iter().enumerate() {
        for (di, d) in detections.iter().enumerate() {
            let d2 = (t.cx - d.cx).powi(2) + (t.cy - d.cy).powi(2);
            if d2 <= gate2 {
                pairs.push((d2, t.id, di, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut track_used = vec![false; predicted.len()];
    let mut det_used = vec![false; detections.len()];
    let mut out = Association::default();
    for (_, id, di, ti) in pairs {
        if !track_used[ti] && !det_used[di] {
            track_used[ti] = true;
            det_used[di] = true;
            out.matches.push((id, di));
        }
    }
    out.unmatched_tracks = predicted
        .iter()
        .zip(&track_used)
        .filter(|(_, &u)| !u)
        .map(|(t, _)| t.id)
        .collect();
    out.unmatched_detections = (0..detections.len()).filter(|&i| !det_used[i]).collect();
    out
}

/// Lifecycle changes produced by one tracker step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrackerEvents {
    pub spawned: Vec<u64>,
    pub confirmed: Vec<u64>,
    pub lost: Vec<u64>,
}

/// Advance the track set by one frame.
///
/// Tracks that were already Lost on input are dropped; tracks that become
/// Lost during this step are returned once so they can be logged. `next_id`
/// is the id source for new tracks and only ever increases.
pub fn step_tracker(
    tracks: &[Track],
    detections: &[Detection],
    params: &TrackerParams,
    dt: f64,
    tick: u64,
    next_id: &mut u64,
) -> Result<(Vec<Track>, TrackerEvents), TrackError> {
    params.validate()?;
    let live: Vec<Track> = tracks
        .iter()
        .filter(|t| t.state != TrackState::Lost)
        .cloned()
        .collect();
    let predicted = predict_tracks(&live, dt)?;
    let assoc = associate(&predicted, detections, params.gate_radius);

    let mut events = TrackerEvents::default();
    let mut det_for: std::collections::HashMap<u64, usize> = assoc.matches.iter().copied().collect();
    let mut out = Vec::with_capacity(predicted.len() + assoc.unmatched_detections.len());
    for (prev, mut t) in live.iter().zip(predicted) {
        if let Some(di) = det_for.remove(&t.id) {
            let d = &detections[di];
            if dt > 0.0 {
                let beta = params.velocity_smoothing_beta;
                t.vx = beta * (d.cx - prev.cx) / dt + (1.0 - beta) * t.vx;
                t.vy = beta * (d.cy - prev.cy) / dt + (1.0 - beta) * t.vy;
            }
            t.cx = d.cx;
            t.cy = d.cy;
            let alpha = params.radius_smoothing_alpha;
            t.r = alpha * d.r + (1.0 - alpha) * t.r;
            t.hits += 1;
            t.misses = 0;
            t.last_update = tick;
            if t.state == TrackState::Tentative && t.hits >= params.confirm_hits {
                t.state = TrackState::Confirmed;
                events.confirmed.push(t.id);
            }
        } else {
            t.misses += 1;
            t.hits = 0;
            if t.misses >= params.max_misses {
                t.state = TrackState::Lost;
                events.lost.push(t.id);
            }
        }
        out.push(t);
    }
    for &di in &assoc.unmatched_detections {
        let d = &detections[di];
        let id = *next_id;
        *next_id += 1;
        let state = if params.confirm_hits <= 1 {
            events.confirmed.push(id);
            TrackState::Confirmed
        } else {
            TrackState::Tentative
        };
        events.spawned.push(id);
        out.push(Track {
            id,
            cx: d.cx,
            cy: d.cy,
            vx: 0.0,
            vy: 0.0,
            r: d.r,
            state,
            hits: 1,
            misses: 0,
            last_update: tick,
        });
    }
    Ok((out, events))
}

/// Single-owner tracker state.
#[derive(Debug, Clone)]
pub struct Tracker {
    params: TrackerParams,
    tracks: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(params: TrackerParams) -> Result<Self, TrackError> {
        params.validate()?;
        Ok(Self {
            params,
            tracks: Vec::new(),
            next_id: 0,
        })
    }

    pub fn params(&self) -> &TrackerParams {
        &self.params
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn step(
        &mut self,
        detections: &[Detection],
        dt: f64,
        tick: u64,
    ) -> Result<TrackerEvents, TrackError> {
        let (tracks, events) =
            step_tracker(&self.tracks, detections, &self.params, dt, tick, &mut self.next_id)?;
        self.tracks = tracks;
        Ok(events)
    }
}
