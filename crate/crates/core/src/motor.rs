//! Trapezoidal back-EMF BLDC machine: phase electrical dynamics, torque, and
//! shaft dynamics.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_6, PI, TAU};
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, NonFiniteState};

/// Electrical phase offsets of phases a, b, c.
pub const PHASE_SHIFT: [f64; 3] = [0.0, 2.0 * FRAC_PI_3, 4.0 * FRAC_PI_3];

/// A per-phase triple (a, b, c) of voltages or currents.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseQuantities(pub [f64; 3]);

impl PhaseQuantities {
    pub const ZERO: Self = PhaseQuantities([0.0; 3]);

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        PhaseQuantities([a, b, c])
    }

    pub fn sum(&self) -> f64 {
        self.0[0] + self.0[1] + self.0[2]
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1] + self.0[2] * other.0[2]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Amplitude-invariant Clarke transform, returns (alpha, beta).
    pub fn clarke(&self) -> (f64, f64) {
        let [a, b, c] = self.0;
        let alpha = (2.0 / 3.0) * (a - 0.5 * b - 0.5 * c);
        let beta = (b - c) / 3f64.sqrt();
        (alpha, beta)
    }
}

impl Index<usize> for PhaseQuantities {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for PhaseQuantities {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl Add for PhaseQuantities {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        PhaseQuantities([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for PhaseQuantities {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        PhaseQuantities([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for PhaseQuantities {
    type Output = Self;
    fn mul(self, k: f64) -> Self {
        PhaseQuantities([self.0[0] * k, self.0[1] * k, self.0[2] * k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams {
    /// Phase resistance, ohm.
    pub phase_resistance: f64,
    /// Self inductance per phase, H.
    pub self_inductance: f64,
    /// Mutual inductance between phases, H.
    pub mutual_inductance: f64,
    /// Peak line-neutral back-EMF per mechanical rad/s, V·s/rad.
    pub back_emf_constant: f64,
    pub pole_pairs: u32,
    /// Rotor inertia, kg·m².
    pub inertia: f64,
    /// Viscous friction, N·m·s/rad.
    pub viscous_friction: f64,
}

impl Default for MotorParams {
    /// Hub-class 200 V machine. Chosen values, not taken from any datasheet.
    fn default() -> Self {
        Self {
            phase_resistance: 0.1,
            self_inductance: 1.2e-3,
            mutual_inductance: 0.2e-3,
            back_emf_constant: 0.6,
            pole_pairs: 2,
            inertia: 0.05,
            viscous_friction: 2e-3,
        }
    }
}

impl MotorParams {
    /// Equivalent phase inductance `Ls - Lm`.
    pub fn inductance(&self) -> f64 {
        self.self_inductance - self.mutual_inductance
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let finite = [
            self.phase_resistance,
            self.self_inductance,
            self.mutual_inductance,
            self.back_emf_constant,
            self.inertia,
            self.viscous_friction,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::invalid("motor", "all parameters must be finite"));
        }
        if self.phase_resistance <= 0.0 {
            return Err(ConfigError::invalid("motor.phase_resistance", "must be > 0"));
        }
        if self.mutual_inductance < 0.0 {
            return Err(ConfigError::invalid("motor.mutual_inductance", "must be >= 0"));
        }
        if self.self_inductance <= self.mutual_inductance {
            return Err(ConfigError::invalid(
                "motor.self_inductance",
                "must exceed mutual_inductance",
            ));
        }
        if self.back_emf_constant < 0.0 {
            return Err(ConfigError::invalid("motor.back_emf_constant", "must be >= 0"));
        }
        if self.pole_pairs == 0 {
            return Err(ConfigError::invalid("motor.pole_pairs", "must be >= 1"));
        }
        if self.inertia <= 0.0 {
            return Err(ConfigError::invalid("motor.inertia", "must be > 0"));
        }
        if self.viscous_friction < 0.0 {
            return Err(ConfigError::invalid("motor.viscous_friction", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotorState {
    pub currents: PhaseQuantities,
    /// Electrical rotor angle in [0, 2π).
    pub theta_elec: f64,
    /// Mechanical speed, rad/s.
    pub omega_mech: f64,
}

impl MotorState {
    pub fn is_finite(&self) -> bool {
        self.currents.is_finite() && self.theta_elec.is_finite() && self.omega_mech.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    Euler,
    #[default]
    Rk4,
}

/// Wraps an angle into [0, 2π).
pub fn wrap_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Normalized trapezoidal back-EMF of phase a, in [-1, 1].
///
/// Flat +1 over [30°, 150°), flat -1 over [210°, 330°), linear ramps between.
pub fn back_emf_shape(theta_elec: f64) -> f64 {
    let t = wrap_angle(theta_elec);
    if t < FRAC_PI_6 {
        t / FRAC_PI_6
    } else if t < 5.0 * FRAC_PI_6 {
        1.0
    } else if t < 7.0 * FRAC_PI_6 {
        (PI - t) / FRAC_PI_6
    } else if t < 11.0 * FRAC_PI_6 {
        -1.0
    } else {
        (t - TAU) / FRAC_PI_6
    }
}

/// Zero-mean antiderivative of [`back_emf_shape`] with respect to electrical
/// angle; scaled by `ke / P` it is the rotor flux linked by the phase.
pub fn flux_shape(theta_elec: f64) -> f64 {
    let t = wrap_angle(theta_elec);
    let r = FRAC_PI_6;
    if t < r {
        -FRAC_PI_3 + (t * t - r * r) / (2.0 * r)
    } else if t < 5.0 * r {
        t - 0.5 * PI
    } else if t < 7.0 * r {
        let d = PI - t;
        FRAC_PI_3 + (r * r - d * d) / (2.0 * r)
    } else if t < 11.0 * r {
        FRAC_PI_3 - (t - 7.0 * r)
    } else {
        let u = t - TAU;
        -FRAC_PI_3 + (u * u - r * r) / (2.0 * r)
    }
}

/// Back-EMF shapes of the three phases at the given electrical angle.
pub fn phase_shapes(theta_elec: f64) -> PhaseQuantities {
    PhaseQuantities(PHASE_SHIFT.map(|s| back_emf_shape(theta_elec - s)))
}

/// Rotor (magnet) flux linked by each phase, Wb.
pub fn rotor_flux(params: &MotorParams, theta_elec: f64) -> PhaseQuantities {
    let scale = params.back_emf_constant / params.pole_pairs as f64;
    PhaseQuantities(PHASE_SHIFT.map(|s| scale * flux_shape(theta_elec - s)))
}

pub fn back_emfs(params: &MotorParams, state: &MotorState) -> PhaseQuantities {
    phase_shapes(state.theta_elec) * (params.back_emf_constant * state.omega_mech)
}

/// Electromagnetic torque `ke · Σ shape_x · i_x`.
///
/// This is the stationary-frame torque expression with each back-EMF divided
/// by speed, so it stays defined at standstill.
pub fn electromagnetic_torque(params: &MotorParams, state: &MotorState) -> f64 {
    torque_from(params, state.theta_elec, &state.currents)
}

pub(crate) fn torque_from(params: &MotorParams, theta_elec: f64, currents: &PhaseQuantities) -> f64 {
    params.back_emf_constant * phase_shapes(theta_elec).dot(currents)
}

/// Removes any common-mode current so the phase currents sum to zero.
pub fn project_currents(currents: &mut PhaseQuantities) {
    let mean = currents.sum() / 3.0;
    for i in 0..3 {
        currents[i] -= mean;
    }
}

/// Advances phase currents with rotor angle and speed held fixed.
///
/// `v_applied` are line-neutral voltages.
pub fn step_electrical(
    params: &MotorParams,
    state: &MotorState,
    v_applied: &PhaseQuantities,
    dt: f64,
    integrator: Integrator,
) -> Result<MotorState, NonFiniteState> {
    let emf = back_emfs(params, state);
    let r = params.phase_resistance;
    let l = params.inductance();
    let deriv = |i: PhaseQuantities| (*v_applied - i * r - emf) * (1.0 / l);
    let i0 = state.currents;
    let mut i1 = match integrator {
        Integrator::Euler => i0 + deriv(i0) * dt,
        Integrator::Rk4 => {
            let k1 = deriv(i0);
            let k2 = deriv(i0 + k1 * (0.5 * dt));
            let k3 = deriv(i0 + k2 * (0.5 * dt));
            let k4 = deriv(i0 + k3 * dt);
            i0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    project_currents(&mut i1);
    let next = MotorState {
        currents: i1,
        ..*state
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFiniteState)
    }
}

/// Advances shaft speed and rotor angle under constant applied torques.
pub fn step_mechanical(
    params: &MotorParams,
    state: &MotorState,
    t_em: f64,
    t_load: f64,
    dt: f64,
) -> Result<MotorState, NonFiniteState> {
    let j = params.inertia;
    let b = params.viscous_friction;
    let p = params.pole_pairs as f64;
    let accel = |w: f64| (t_em - t_load - b * w) / j;
    let w0 = state.omega_mech;
    let k1 = accel(w0);
    let k2 = accel(w0 + 0.5 * dt * k1);
    let k3 = accel(w0 + 0.5 * dt * k2);
    let k4 = accel(w0 + dt * k3);
    let w1 = w0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    // angle integral of the same stages (Simpson-consistent)
    let w_mid_a = w0 + 0.5 * dt * k1;
    let w_mid_b = w0 + 0.5 * dt * k2;
    let w_end = w0 + dt * k3;
    let dtheta = dt / 6.0 * (w0 + 2.0 * w_mid_a + 2.0 * w_mid_b + w_end);
    let next = MotorState {
        omega_mech: w1,
        theta_elec: wrap_angle(state.theta_elec + p * dtheta),
        ..*state
    };
    if next.is_finite() {
        Ok(next)
    } else {
        Err(NonFiniteState)
    }
}
