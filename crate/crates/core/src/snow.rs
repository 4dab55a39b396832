//! Seeded snowflake particles and their rasterization.
//!
//! Randomness comes from ChaCha8 seeded with `SnowParams::seed`, so a given
//! (params, dt sequence) always produces the same flakes on every platform.
//! Each spawned flake draws, in order: x, radius, vx, vy, sway amplitude,
//! sway frequency, sway phase, alpha, each uniform over its configured span.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compose::source_over;
use crate::frame::Rgba8Frame;

/// Closed interval sampled uniformly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.min + (self.max - self.min) * rng.gen::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SnowParams {
    /// Flakes per second.
    pub spawn_rate: f64,
    /// Downward acceleration, px/s².
    pub gravity: f64,
    /// Horizontal drift added to every flake, px/s.
    pub wind: f64,
    pub width: u32,
    pub height: u32,
    pub max_flakes: usize,
    pub seed: u64,
    pub radius: Span,
    /// Initial downward speed, px/s.
    pub fall_speed: Span,
    /// Initial horizontal speed, px/s.
    pub drift: Span,
    pub sway_amp: Span,
    /// rad/s
    pub sway_freq: Span,
    pub alpha: Span,
}

// Visual defaults only; chosen by eye for a 1280x800 projection.
impl Default for SnowParams {
    fn default() -> Self {
        Self {
            spawn_rate: 40.0,
            gravity: 4.0,
            wind: 6.0,
            width: 1280,
            height: 800,
            max_flakes: 1000,
            seed: 2014,
            radius: Span::new(1.5, 4.5),
            fall_speed: Span::new(25.0, 70.0),
            drift: Span::new(-8.0, 8.0),
            sway_amp: Span::new(3.0, 14.0),
            sway_freq: Span::new(0.6, 2.2),
            alpha: Span::new(0.55, 0.95),
        }
    }
}

impl SnowParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.spawn_rate >= 0.0) {
            return Err("snow.spawn_rate must be >= 0".into());
        }
        if !(self.gravity >= 0.0) || self.fall_speed.min < 0.0 {
            return Err("snow.gravity and snow.fall_speed must be >= 0".into());
        }
        if self.max_flakes < 1 {
            return Err("snow.max_flakes must be >= 1".into());
        }
        if !(self.radius.min > 0.0) {
            return Err("snow.radius must be > 0".into());
        }
        if self.alpha.min < 0.0 || self.alpha.max > 1.0 {
            return Err("snow.alpha must lie in [0, 1]".into());
        }
        for (name, s) in [
            ("radius", self.radius),
            ("fall_speed", self.fall_speed),
            ("drift", self.drift),
            ("sway_amp", self.sway_amp),
            ("sway_freq", self.sway_freq),
            ("alpha", self.alpha),
        ] {
            if s.min > s.max {
                return Err(format!("snow.{name}: min exceeds max"));
            }
        }
        if self.width == 0 || self.height == 0 {
            return Err("snow bounds must be non-empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snowflake {
    pub pos: (f64, f64),
    pub vel: (f64, f64),
    pub radius: f64,
    pub sway_amp: f64,
    pub sway_freq: f64,
    pub sway_phase: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnowState {
    pub flakes: Vec<Snowflake>,
    rng: ChaCha8Rng,
    pub time: f64,
    pub spawn_accumulator: f64,
    /// Flakes emitted by the accumulator, including those dropped at the cap.
    pub emitted: u64,
    /// Emitted flakes that were not added because `max_flakes` was reached.
    pub capped: u64,
}

impl SnowState {
    pub fn new(params: &SnowParams) -> Self {
        Self {
            flakes: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            time: 0.0,
            spawn_accumulator: 0.0,
            emitted: 0,
            capped: 0,
        }
    }

    fn spawn(&mut self, params: &SnowParams) -> Snowflake {
        let rng = &mut self.rng;
        let x = f64::from(params.width) * rng.gen::<f64>();
        let radius = params.radius.sample(rng);
        let vx = params.drift.sample(rng);
        let vy = params.fall_speed.sample(rng);
        Snowflake {
            pos: (x, -radius),
            vel: (vx, vy),
            radius,
            sway_amp: params.sway_amp.sample(rng),
            sway_freq: params.sway_freq.sample(rng),
            sway_phase: Span::new(0.0, std::f64::consts::TAU).sample(rng),
            alpha: params.alpha.sample(rng),
        }
    }

    /// Advances the simulation by `dt` seconds in place.
    pub fn step(&mut self, params: &SnowParams, dt: f64) {
        debug_assert!(dt >= 0.0);
        self.spawn_accumulator += params.spawn_rate * dt;
        let due = self.spawn_accumulator.floor();
        self.spawn_accumulator -= due;
        for _ in 0..due as u64 {
            self.emitted += 1;
            if self.flakes.len() >= params.max_flakes {
                self.capped += 1;
                continue;
            }
            let flake = self.spawn(params);
            self.flakes.push(flake);
        }
        let t = self.time;
        for f in &mut self.flakes {
            f.vel.1 += params.gravity * dt;
            let sway = f.sway_amp * f.sway_freq * (f.sway_freq * t + f.sway_phase).cos();
            f.pos.0 += (f.vel.0 + params.wind + sway) * dt;
            f.pos.1 += f.vel.1 * dt;
        }
        let floor = f64::from(params.height);
        self.flakes.retain(|f| f.pos.1 <= floor + f.radius);
        self.time += dt;
    }
}

/// Pure form of [`SnowState::step`].
pub fn snow_step(state: &SnowState, params: &SnowParams, dt: f64) -> SnowState {
    let mut next = state.clone();
    next.step(params, dt);
    next
}

/// Draws each flake as a white soft disc with
/// `alpha = flake.alpha * max(0, 1 - (d / radius)²)` at distance `d` from the
/// flake center to the pixel center, source-over in list order onto a
/// transparent premultiplied frame.
pub fn snow_raster(state: &SnowState, width: u32, height: u32) -> Rgba8Frame {
    let mut frame = Rgba8Frame::transparent(width.max(1), height.max(1))
        .expect("non-empty dimensions");
    for f in &state.flakes {
        let (cx, cy) = f.pos;
        let r = f.radius;
        let x0 = (cx - r).floor().max(0.0) as i64;
        let y0 = (cy - r).floor().max(0.0) as i64;
        let x1 = ((cx + r).ceil() as i64).min(i64::from(width) - 1);
        let y1 = ((cy + r).ceil() as i64).min(i64::from(height) - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                let q = (dx * dx + dy * dy) / (r * r);
                if q >= 1.0 {
                    continue;
                }
                let a = f.alpha * (1.0 - q);
                let s = 255.0 * a;
                let (x, y) = (x as u32, y as u32);
                let px = source_over([s, s, s, s], frame.pixel(x, y));
                frame.set_pixel(x, y, px);
            }
        }
    }
    frame
}

#[cfg(test)]
mod tests {
    use super::*;

    fn still_flake(y: f64) -> Snowflake {
        Snowflake {
            pos: (10.5, y),
            vel: (0.0, 0.0),
            radius: 2.0,
            sway_amp: 0.0,
            sway_freq: 1.0,
            sway_phase: 0.0,
            alpha: 1.0,
        }
    }

    #[test]
    fn zero_dt_is_identity() {
        let p = SnowParams::default();
        let mut s = SnowState::new(&p);
        for _ in 0..50 {
            s.step(&p, 1.0 / 60.0);
        }
        assert_eq!(snow_step(&s, &p, 0.0), s);
    }

    #[test]
    fn semi_implicit_euler() {
        let p = SnowParams {
            spawn_rate: 0.0,
            gravity: 1.0,
            wind: 0.0,
            ..Default::default()
        };
        let mut s = SnowState::new(&p);
        s.flakes.push(still_flake(100.0));
        s.step(&p, 1.0);
        assert_eq!(s.flakes[0].pos.1, 101.0);
        s.step(&p, 1.0);
        assert_eq!(s.flakes[0].vel.1, 2.0);
        assert_eq!(s.flakes[0].pos.1, 103.0);
        assert_eq!(s.flakes[0].pos.0, 10.5);
    }

    #[test]
    fn flakes_below_floor_are_removed() {
        let p = SnowParams { spawn_rate: 0.0, gravity: 0.0, height: 100, ..Default::default() };
        let mut s = SnowState::new(&p);
        let mut f = still_flake(101.0);
        f.vel.1 = 5.0;
        s.flakes.push(f);
        s.step(&p, 0.1);
        assert_eq!(s.flakes.len(), 1);
        s.step(&p, 0.5);
        assert!(s.flakes.is_empty());
    }

    #[test]
    fn cap_is_respected() {
        let p = SnowParams { spawn_rate: 1000.0, max_flakes: 7, ..Default::default() };
        let mut s = SnowState::new(&p);
        s.step(&p, 0.1);
        assert_eq!(s.flakes.len(), 7);
        assert_eq!(s.emitted, 100);
        assert_eq!(s.capped, 93);
    }

    #[test]
    fn empty_raster_is_transparent() {
        let s = SnowState::new(&SnowParams::default());
        let f = snow_raster(&s, 32, 16);
        assert!(f.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn flake_center_pixel_alpha() {
        let mut s = SnowState::new(&SnowParams::default());
        let mut f = still_flake(5.5);
        f.alpha = 0.7;
        s.flakes.push(f);
        let frame = snow_raster(&s, 32, 16);
        let expected = (255.0f64 * 0.7).round() as u8;
        assert_eq!(frame.pixel(10, 5), [expected; 4]);
        assert!(frame.is_valid_premultiplied());
    }
}
