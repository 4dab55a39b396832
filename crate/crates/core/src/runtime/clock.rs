//! Exact rational time and integer frame pacing.

use std::cmp::Ordering;
use std::time::Duration;

use serde::{Deserialize, Serialize};

/// A point in time expressed as `ticks / rate` seconds.
///
/// Rates are integral (frames per second, or 1e9 for wall-clock
/// nanoseconds), so pacing arithmetic never rounds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Timestamp {
    pub ticks: u64,
    pub rate: u32,
}

pub const NANOS: u32 = 1_000_000_000;

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp { ticks: 0, rate: 1 };

    pub const fn new(ticks: u64, rate: u32) -> Self {
        assert!(rate > 0, "timestamp rate must be positive");
        Self { ticks, rate }
    }

    pub fn from_duration(d: Duration) -> Self {
        Self::new(d.as_nanos() as u64, NANOS)
    }

    pub fn seconds(&self) -> f64 {
        self.ticks as f64 / f64::from(self.rate)
    }

    /// Number of whole periods of a `hz` clock elapsed at this instant,
    /// i.e. `floor(self * hz)`.
    pub fn periods(&self, hz: u32) -> u64 {
        (u128::from(self.ticks) * u128::from(hz) / u128::from(self.rate)) as u64
    }

    pub fn to_duration(&self) -> Duration {
        Duration::from_nanos(
            (u128::from(self.ticks) * u128::from(NANOS) / u128::from(self.rate)) as u64,
        )
    }
}

impl PartialEq for Timestamp {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Timestamp {}

impl PartialOrd for Timestamp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Timestamp {
    fn cmp(&self, other: &Self) -> Ordering {
        (u128::from(self.ticks) * u128::from(other.rate))
            .cmp(&(u128::from(other.ticks) * u128::from(self.rate)))
    }
}

/// Number of ticks of a `hz` clock that fall in `[0, until)`, where `until`
/// is `n / rate` seconds: `ceil(n * hz / rate)`.
pub fn ticks_before(n: u64, rate: u32, hz: u32) -> u64 {
    (u128::from(n) * u128::from(hz)).div_ceil(u128::from(rate)) as u64
}

/// Tracks which frame of a fixed-rate stream is current.
///
/// Frame `i` exists from time `i / fps`; reading at `t` yields frame
/// `floor(t * fps)` if it differs from the last one handed out, counting
/// the frames jumped over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameCursor {
    fps: u32,
    last: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Due {
    /// A frame not handed out before; `skipped` frames became due and were
    /// superseded since the previous read.
    Fresh { index: u64, skipped: u64 },
    /// Still the frame of the previous read.
    Same,
}

impl FrameCursor {
    pub fn new(fps: u32) -> Self {
        assert!(fps > 0);
        Self { fps, last: None }
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn reset(&mut self) {
        self.last = None;
    }

    pub fn last(&self) -> Option<u64> {
        self.last
    }

    /// Index of the frame current at `at`, without consuming it.
    pub fn index_at(&self, at: Timestamp) -> u64 {
        at.periods(self.fps)
    }

    pub fn advance(&mut self, at: Timestamp) -> Due {
        let index = self.index_at(at);
        match self.last {
            Some(last) if index <= last => Due::Same,
            last => {
                let skipped = match last {
                    Some(l) => index - l - 1,
                    None => index,
                };
                self.last = Some(index);
                Due::Fresh { index, skipped }
            }
        }
    }

    /// Start time of frame `index + 1`.
    pub fn next_frame_time(&self, index: u64) -> Timestamp {
        Timestamp::new(index + 1, self.fps)
    }
}
