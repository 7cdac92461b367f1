//! Longitudinal vehicle dynamics: resistive forces and the load torque they
//! put on the motor shaft.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Vehicle body and driveline parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// Total mass, kg.
    pub mass: f64,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
    /// Rolling resistance coefficient.
    pub rolling_coeff: f64,
    /// Ambient air density, kg/m³.
    pub air_density: f64,
    /// Aerodynamic drag coefficient.
    pub drag_coeff: f64,
    /// Frontal area, m².
    pub frontal_area: f64,
    /// Tyre radius, m.
    pub wheel_radius: f64,
    /// Motor revolutions per wheel revolution.
    pub gear_ratio: f64,
    /// Driveline efficiency in (0, 1].
    pub driveline_efficiency: f64,
}

impl Default for VehicleParams {
    /// A light two-seat city EV. These numbers are chosen, not measured.
    fn default() -> Self {
        Self {
            mass: 400.0,
            gravity: 9.81,
            rolling_coeff: 0.015,
            air_density: 1.2,
            drag_coeff: 0.35,
            frontal_area: 1.8,
            wheel_radius: 0.25,
            gear_ratio: 2.5,
            driveline_efficiency: 0.95,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("vehicle.mass", self.mass),
            ("vehicle.gravity", self.gravity),
            ("vehicle.rolling_coeff", self.rolling_coeff),
            ("vehicle.air_density", self.air_density),
            ("vehicle.drag_coeff", self.drag_coeff),
            ("vehicle.frontal_area", self.frontal_area),
            ("vehicle.wheel_radius", self.wheel_radius),
            ("vehicle.gear_ratio", self.gear_ratio),
            ("vehicle.driveline_efficiency", self.driveline_efficiency),
        ];
        for (key, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::invalid(key, "must be finite and > 0"));
            }
        }
        if self.rolling_coeff >= 1.0 {
            return Err(ConfigError::invalid("vehicle.rolling_coeff", "must be < 1"));
        }
        if self.driveline_efficiency > 1.0 {
            return Err(ConfigError::invalid(
                "vehicle.driveline_efficiency",
                "must be <= 1",
            ));
        }
        Ok(())
    }
}

/// Road grade and vehicle speed at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoadState {
    /// Slope angle, rad, |psi| < pi/2. Positive is uphill.
    pub slope: f64,
    /// Vehicle speed, m/s.
    pub speed: f64,
}

/// The four force components acting against the traction force, N.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ForceBreakdown {
    pub rolling: f64,
    pub grade: f64,
    pub aero: f64,
    pub inertial: f64,
}

impl ForceBreakdown {
    pub fn total(&self) -> f64 {
        self.rolling + self.grade + self.aero + self.inertial
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Force components for the given road state and longitudinal acceleration.
///
/// Rolling resistance and drag oppose the direction of motion and vanish at
/// standstill.
pub fn force_breakdown(params: &VehicleParams, road: RoadState, accel: f64) -> ForceBreakdown {
    let weight = params.mass * params.gravity;
    let v = road.speed;
    ForceBreakdown {
        rolling: weight * params.rolling_coeff * sign(v),
        grade: weight * road.slope.sin(),
        aero: 0.5 * params.air_density * params.drag_coeff * params.frontal_area * v * v * sign(v),
        inertial: params.mass * accel,
    }
}

/// Total tractive force the drivetrain must supply, N.
pub fn total_force(params: &VehicleParams, road: RoadState, accel: f64) -> f64 {
    force_breakdown(params, road, accel).total()
}

/// Maps a wheel force to motor shaft torque through the gear and driveline.
///
/// Losses always work against the motor: efficiency divides when the motor
/// drives the wheels and multiplies when the wheels drive the motor.
pub fn shaft_torque_from_force(params: &VehicleParams, force: f64) -> f64 {
    let lever = params.wheel_radius / params.gear_ratio;
    if force >= 0.0 {
        force * lever / params.driveline_efficiency
    } else {
        force * lever * params.driveline_efficiency
    }
}

/// Load torque at the motor shaft, N·m.
pub fn load_torque(params: &VehicleParams, road: RoadState, accel: f64) -> f64 {
    shaft_torque_from_force(params, total_force(params, road, accel))
}

/// Motor mechanical speed, rad/s, for a vehicle speed in m/s.
pub fn motor_speed_from_vehicle(params: &VehicleParams, v: f64) -> f64 {
    v * params.gear_ratio / params.wheel_radius
}

/// Inverse of [`motor_speed_from_vehicle`].
pub fn vehicle_speed_from_motor(params: &VehicleParams, omega_mech: f64) -> f64 {
    omega_mech * params.wheel_radius / params.gear_ratio
}
