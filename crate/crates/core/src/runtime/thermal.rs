//! First-order device temperature model.
//!
//! `dT/dt = q * load - c * (T - ambient)`, with `c` switching between the
//! fan-on and fan-off cooling constants. Steady state at full load is
//! `ambient + q / c`: with the defaults that is 25 °C with the fan and 45 °C
//! without it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest explicit-Euler substep; with the default constants `c * dt` stays
/// far below 1 so the integration never overshoots.
pub const MAX_STEP: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum ThermalError {
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("load must lie in [0, 1], got {0}")]
    Load(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalModel {
    /// °C
    pub temp: f64,
    /// °C
    pub ambient: f64,
    /// Heating at full load, °C/s.
    pub heat_rate: f64,
    /// Cooling constant with the fan running, 1/s.
    pub cool_fan: f64,
    /// Cooling constant without the fan, 1/s.
    pub cool_nofan: f64,
    pub fan: bool,
}

impl Default for ThermalModel {
    fn default() -> Self {
        Self {
            temp: 20.0,
            ambient: 20.0,
            heat_rate: 0.05,
            cool_fan: 0.01,
            cool_nofan: 0.002,
            fan: true,
        }
    }
}

impl ThermalModel {
    pub fn cooling(&self) -> f64 {
        if self.fan {
            self.cool_fan
        } else {
            self.cool_nofan
        }
    }

    /// Temperature the model converges to under constant `load`.
    pub fn steady_state(&self, load: f64) -> f64 {
        self.ambient + self.heat_rate * load / self.cooling()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.heat_rate >= 0.0 && self.cool_fan > 0.0 && self.cool_nofan > 0.0) {
            return Err("thermal: heat_rate must be >= 0 and cooling constants > 0".into());
        }
        if self.cool_fan * MAX_STEP >= 1.0 || self.cool_nofan * MAX_STEP >= 1.0 {
            return Err("thermal: cooling constants must be below 1/s".into());
        }
        Ok(())
    }
}

/// Advances the model by `dt` seconds at constant `load`, in substeps of at
/// most [`MAX_STEP`].
pub fn thermal_step(model: &ThermalModel, load: f64, dt: f64) -> Result<ThermalModel, ThermalError> {
    if !(dt > 0.0) {
        return Err(ThermalError::NonPositiveStep(dt));
    }
    if !(0.0..=1.0).contains(&load) {
        return Err(ThermalError::Load(load));
    }
    let mut next = model.clone();
    let c = model.cooling();
    let mut left = dt;
    while left > 0.0 {
        let h = left.min(MAX_STEP);
        next.temp += h * (model.heat_rate * load - c * (next.temp - model.ambient));
        left -= h;
    }
    Ok(next)
}
