//! Coulomb-counting battery with an affine open-circuit voltage.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    /// Open-circuit voltage at empty, V.
    pub v_min: f64,
    /// Open-circuit voltage at full, V.
    pub v_max: f64,
    /// Capacity, C.
    pub capacity: f64,
    pub internal_resistance: f64,
    pub soc_initial: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            v_min: 170.0,
            v_max: 210.0,
            // 20 Ah
            capacity: 72_000.0,
            internal_resistance: 0.05,
            soc_initial: 0.8,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.v_min.is_finite() && self.v_min > 0.0) {
            return Err(ConfigError::invalid("battery.v_min", "must be > 0"));
        }
        if !(self.v_max.is_finite() && self.v_max >= self.v_min) {
            return Err(ConfigError::invalid("battery.v_max", "must be >= v_min"));
        }
        if !(self.capacity.is_finite() && self.capacity > 0.0) {
            return Err(ConfigError::invalid("battery.capacity", "must be > 0"));
        }
        if !(self.internal_resistance.is_finite() && self.internal_resistance >= 0.0) {
            return Err(ConfigError::invalid("battery.internal_resistance", "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.soc_initial) {
            return Err(ConfigError::invalid("battery.soc_initial", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> BatteryState {
        BatteryState {
            soc: self.soc_initial,
            capacity: self.capacity,
            v_min: self.v_min,
            v_max: self.v_max,
            internal_resistance: self.internal_resistance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    pub soc: f64,
    pub capacity: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub internal_resistance: f64,
}

impl BatteryState {
    pub fn open_circuit_voltage(&self) -> f64 {
        self.v_min + self.soc * (self.v_max - self.v_min)
    }
}

/// Positive `i_dc` discharges.
pub fn soc_step(state: &BatteryState, i_dc: f64, dt: f64) -> BatteryState {
    BatteryState {
        soc: (state.soc - i_dc * dt / state.capacity).clamp(0.0, 1.0),
        ..*state
    }
}

pub fn terminal_voltage(state: &BatteryState, i_dc: f64) -> f64 {
    state.open_circuit_voltage() - i_dc * state.internal_resistance
}
