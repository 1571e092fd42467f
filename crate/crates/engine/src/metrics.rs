//! Frame-rate and per-stage latency bookkeeping.

use std::collections::VecDeque;

use serde::Serialize;

/// Stages 1–8 of a tick.
pub const STAGES: usize = 8;

pub const STAGE_NAMES: [&str; STAGES] = [
    "camera", "detect", "track", "map", "commands", "field", "compose", "swarm",
];

pub const FPS_ALPHA: f64 = 0.1;
pub const LATENCY_WINDOW: usize = 100;

#[derive(Debug, Clone, Default)]
pub struct Metrics {
    ema_fps: Option<f64>,
    last_fps: f64,
    window: VecDeque<[f64; STAGES]>,
    ticks: u64,
    total_ms: f64,
    min_fps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsSnapshot {
    pub fps_ema: f64,
    pub fps_instant: f64,
    /// Mean ms per stage over the last [`LATENCY_WINDOW`] ticks.
    pub stage_mean_ms: [f64; STAGES],
}

/// `1000 / ms`, with a floor on `ms` so the result stays finite.
pub fn fps_from_ms(ms: f64) -> f64 {
    1000.0 / ms.max(1e-6)
}

impl Metrics {
    pub fn new() -> Self {
        Self {
            min_fps: f64::INFINITY,
            ..Self::default()
        }
    }

    /// Record one tick; returns its instantaneous fps.
    pub fn record(&mut self, tick_ms: f64, stage_ms: [f64; STAGES]) -> f64 {
        let fps = fps_from_ms(tick_ms);
        self.ema_fps = Some(match self.ema_fps {
            None => fps,
            Some(e) => FPS_ALPHA * fps + (1.0 - FPS_ALPHA) * e,
        });
        self.last_fps = fps;
        if self.window.len() == LATENCY_WINDOW {
            self.window.pop_front();
        }
        self.window.push_back(stage_ms);
        self.ticks += 1;
        self.total_ms += tick_ms;
        self.min_fps = self.min_fps.min(fps);
        fps
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    /// `None` before the first tick.
    pub fn snapshot(&self) -> Option<MetricsSnapshot> {
        let fps_ema = self.ema_fps?;
        let mut mean = [0.0; STAGES];
        for s in &self.window {
            for (m, v) in mean.iter_mut().zip(s) {
                *m += v;
            }
        }
        let n = self.window.len().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(MetricsSnapshot {
            fps_ema,
            fps_instant: self.last_fps,
            stage_mean_ms: mean,
        })
    }

    /// Ticks per second of measured tick time.
    pub fn mean_fps(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.ticks as f64 * 1000.0 / self.total_ms.max(1e-6)
        }
    }

    pub fn min_fps(&self) -> f64 {
        if self.ticks == 0 {
            0.0
        } else {
            self.min_fps
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_tick_fps() {
        let mut m = Metrics::new();
        assert!(m.snapshot().is_none());
        assert_eq!(m.record(25.0, [1.0; STAGES]), 40.0);
        let s = m.snapshot().unwrap();
        assert_eq!(s.fps_instant, 40.0);
        assert_eq!(s.fps_ema, 40.0);
    }

    #[test]
    fn ema_converges_to_constant_rate() {
        let mut m = Metrics::new();
        // start far away so convergence is actually exercised
        m.record(5.0, [0.0; STAGES]);
        for _ in 0..99 {
            m.record(20.0, [0.0; STAGES]);
        }
        // closed form: 50 + (200 - 50)·0.9^99
        let oracle = 50.0 + 150.0 * 0.9f64.powi(99);
        let e = m.snapshot().unwrap().fps_ema;
        assert!((e - oracle).abs() < 1e-9);
        assert!((e - 50.0).abs() <= 0.5, "{e}");
    }

    #[test]
    fn stage_means_use_a_sliding_window() {
        let mut m = Metrics::new();
        for i in 0..150 {
            let mut s = [0.0; STAGES];
            s[1] = i as f64;
            m.record(200.0, s);
        }
        // ticks 50..150
        assert_eq!(m.snapshot().unwrap().stage_mean_ms[1], 99.5);
    }
}
