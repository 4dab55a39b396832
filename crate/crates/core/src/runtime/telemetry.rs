//! Health snapshot and rate accounting.

use std::collections::VecDeque;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::runtime::lifecycle::EngineState;
use crate::track::SLOT_COUNT;

/// Length of the window the reported rates average over, seconds.
pub const RATE_WINDOW: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    /// `initializing`, `running`, `sleeping`, `shutting_down` or `faulted`.
    pub state: String,
    pub fault_reason: Option<String>,
    /// Composed frames per second over the last [`RATE_WINDOW`].
    pub fps_out: f64,
    /// Detector runs per second over the last [`RATE_WINDOW`].
    pub detect_hz: f64,
    /// °C
    pub temp: f64,
    pub fan: bool,
    pub face_count: usize,
    pub slot_occupancy: [bool; SLOT_COUNT],
    /// Seconds since the engine started.
    pub uptime: f64,
    pub frames_dropped: u64,
    pub frames_composed: u64,
    pub last_frame_at: Option<DateTime<Utc>>,
}

impl Telemetry {
    pub fn new(state: &EngineState, temp: f64, fan: bool) -> Self {
        let mut t = Self {
            state: String::new(),
            fault_reason: None,
            fps_out: 0.0,
            detect_hz: 0.0,
            temp,
            fan,
            face_count: 0,
            slot_occupancy: [false; SLOT_COUNT],
            uptime: 0.0,
            frames_dropped: 0,
            frames_composed: 0,
            last_frame_at: None,
        };
        t.set_state(state);
        t
    }

    pub fn set_state(&mut self, state: &EngineState) {
        self.state = state.name().to_string();
        self.fault_reason = state.fault_reason().map(str::to_string);
    }

    pub fn set_slots(&mut self, occupancy: [bool; SLOT_COUNT]) {
        self.slot_occupancy = occupancy;
        self.face_count = occupancy.iter().filter(|o| **o).count();
    }
}

/// Counts events in a trailing time window.
#[derive(Debug, Clone, Default)]
pub struct RateWindow {
    events: VecDeque<f64>,
}

impl RateWindow {
    pub fn record(&mut self, at: f64) {
        self.events.push_back(at);
    }

    /// Events in `(now - RATE_WINDOW, now]` divided by the window length,
    /// or by `now - since` while less than a full window has elapsed.
    pub fn rate(&mut self, now: f64, since: f64) -> f64 {
        while self.events.front().is_some_and(|&t| t <= now - RATE_WINDOW) {
            self.events.pop_front();
        }
        let span = (now - since).min(RATE_WINDOW);
        if span <= 0.0 {
            return 0.0;
        }
        self.events.len() as f64 / span
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rate_over_full_window() {
        let mut w = RateWindow::default();
        for k in 1..=1200 {
            w.record(k as f64 / 60.0);
        }
        // 20 s at 60 Hz: the last 10 s hold exactly 600 events
        assert!((w.rate(20.0, 0.0) - 60.0).abs() < 1e-9);
    }

    #[test]
    fn rate_before_window_fills() {
        let mut w = RateWindow::default();
        for k in 1..=30 {
            w.record(k as f64 / 30.0);
        }
        assert!((w.rate(1.0, 0.0) - 30.0).abs() < 1e-9);
        assert_eq!(RateWindow::default().rate(0.0, 0.0), 0.0);
    }

    #[test]
    fn face_count_follows_slots() {
        let mut t = Telemetry::new(&EngineState::Running, 20.0, true);
        t.set_slots([true, false, true, false]);
        assert_eq!(t.face_count, 2);
        t.set_state(&EngineState::Faulted("x".into()));
        assert_eq!((t.state.as_str(), t.fault_reason.as_deref()), ("faulted", Some("x")));
    }
}
