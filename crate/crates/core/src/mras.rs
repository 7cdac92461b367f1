//! Model-reference adaptive gain tuned by the MIT rule.
//!
//! The reference model and the plant share one second-order denominator
//! `s² + b·s + a` and differ only in their gain, so the ideal adaptive gain
//! is `k̄p = bm / b0`.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// `gain / (s² + b·s + a)` in controllable canonical form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrder {
    pub gain: f64,
    /// Constant term `a` of the denominator.
    pub coeff_a: f64,
    /// `s` coefficient `b` of the denominator.
    pub coeff_b: f64,
    state: [f64; 2],
}

impl SecondOrder {
    pub fn new(gain: f64, coeff_a: f64, coeff_b: f64) -> Self {
        Self {
            gain,
            coeff_a,
            coeff_b,
            state: [0.0; 2],
        }
    }

    /// Both denominator coefficients strictly positive.
    pub fn is_hurwitz(&self) -> bool {
        self.coeff_a > 0.0 && self.coeff_b > 0.0
    }

    pub fn output(&self) -> f64 {
        self.gain * self.state[0]
    }

    pub fn reset(&mut self) {
        self.state = [0.0; 2];
    }

    fn deriv(&self, x: [f64; 2], u: f64) -> [f64; 2] {
        [x[1], u - self.coeff_a * x[0] - self.coeff_b * x[1]]
    }

    /// Advances one RK4 step with the input held constant; returns the output.
    pub fn step(&mut self, u: f64, dt: f64) -> f64 {
        let x = self.state;
        let k1 = self.deriv(x, u);
        let k2 = self.deriv([x[0] + 0.5 * dt * k1[0], x[1] + 0.5 * dt * k1[1]], u);
        let k3 = self.deriv([x[0] + 0.5 * dt * k2[0], x[1] + 0.5 * dt * k2[1]], u);
        let k4 = self.deriv([x[0] + dt * k3[0], x[1] + dt * k3[1]], u);
        for i in 0..2 {
            self.state[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.output()
    }
}

pub type ReferenceModel = SecondOrder;
pub type PlantModel = SecondOrder;

pub fn reference_model_step(model: &mut ReferenceModel, uc: f64, dt: f64) -> f64 {
    model.step(uc, dt)
}

/// Adaptive proportional gain and its adaptation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveGainState {
    pub kp: f64,
    pub gamma: f64,
    pub kp_min: f64,
    pub kp_max: f64,
    /// Last model output seen by the update.
    pub ym: f64,
    /// Last tracking error seen by the update.
    pub e: f64,
}

impl AdaptiveGainState {
    pub fn new(kp: f64, gamma: f64, kp_min: f64, kp_max: f64) -> Self {
        Self {
            kp,
            gamma,
            kp_min,
            kp_max,
            ym: 0.0,
            e: 0.0,
        }
    }
}

/// One Euler step of `dkp/dt = -γ·e·ym`, clamped to `[kp_min, kp_max]`.
///
/// The `1/k̄p` factor of the exact sensitivity is folded into `γ`.
pub fn mit_update(state: &AdaptiveGainState, e: f64, ym: f64, dt: f64) -> AdaptiveGainState {
    let mut next = *state;
    next.e = e;
    next.ym = ym;
    let delta = state.gamma * e * ym * dt;
    if delta != 0.0 {
        next.kp = (state.kp - delta).clamp(state.kp_min, state.kp_max);
    }
    next
}

/// `u = kp·uc`, saturated to `±limit`.
pub fn control_output(kp: f64, uc: f64, limit: f64) -> f64 {
    (kp * uc).clamp(-limit, limit)
}

pub fn tracking_error(y: f64, ym: f64) -> f64 {
    y - ym
}

/// Scenario settings for the adaptive speed controller.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MrasConfig {
    /// Normalized adaptation gain; `γ = gamma0 / max(ym²)` over the cycle.
    pub gamma0: f64,
    /// Explicit adaptation gain, overriding `gamma0` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    pub kp_init: f64,
    pub kp_min: f64,
    pub kp_max: f64,
    /// Reference model numerator `bm`.
    pub model_gain: f64,
    pub denom_s_coeff: f64,
    pub denom_const_coeff: f64,
}

impl Default for MrasConfig {
    fn default() -> Self {
        Self {
            gamma0: 2.0,
            gamma: None,
            kp_init: 1.0,
            kp_min: 0.5,
            kp_max: 2.0,
            model_gain: 400.0,
            denom_s_coeff: 40.0,
            denom_const_coeff: 400.0,
        }
    }
}

impl MrasConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma0.is_finite() && self.gamma0 >= 0.0) {
            return Err(ConfigError::invalid("mras.gamma0", "must be >= 0"));
        }
        if let Some(g) = self.gamma {
            if !(g.is_finite() && g >= 0.0) {
                return Err(ConfigError::invalid("mras.gamma", "must be >= 0"));
            }
        }
        if !(self.kp_min.is_finite() && self.kp_max.is_finite() && self.kp_min <= self.kp_max) {
            return Err(ConfigError::invalid("mras.kp_min", "need kp_min <= kp_max"));
        }
        if !(self.kp_init >= self.kp_min && self.kp_init <= self.kp_max) {
            return Err(ConfigError::invalid("mras.kp_init", "must lie in [kp_min, kp_max]"));
        }
        if !self.model_gain.is_finite() {
            return Err(ConfigError::invalid("mras.model_gain", "must be finite"));
        }
        if !(self.denom_s_coeff.is_finite() && self.denom_s_coeff > 0.0) {
            return Err(ConfigError::invalid("mras.denom_s_coeff", "must be > 0 for a stable model"));
        }
        if !(self.denom_const_coeff.is_finite() && self.denom_const_coeff > 0.0) {
            return Err(ConfigError::invalid("mras.denom_const_coeff", "must be > 0 for a stable model"));
        }
        Ok(())
    }

    pub fn reference_model(&self) -> ReferenceModel {
        SecondOrder::new(self.model_gain, self.denom_const_coeff, self.denom_s_coeff)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Unit step response of `bm / (s² + b s + a)` for the underdamped case.
    fn analytic_step(bm: f64, a: f64, b: f64, t: f64) -> f64 {
        let wn = a.sqrt();
        let zeta = b / (2.0 * wn);
        assert!(zeta < 1.0);
        let wd = wn * (1.0 - zeta * zeta).sqrt();
        let env = (-zeta * wn * t).exp();
        bm / a * (1.0 - env * ((wd * t).cos() + zeta * wn / wd * (wd * t).sin()))
    }

    #[test]
    fn zero_input_zero_output() {
        let mut m = SecondOrder::new(400.0, 400.0, 20.0);
        assert_eq!(reference_model_step(&mut m, 0.0, 1e-4), 0.0);
    }

    #[test]
    fn step_response_matches_closed_form() {
        let (bm, a, b) = (900.0, 400.0, 16.0);
        let mut m = SecondOrder::new(bm, a, b);
        let dt = 1e-4;
        let peak = bm / a;
        for k in 1..=20_000 {
            let y = m.step(1.0, dt);
            let exact = analytic_step(bm, a, b, k as f64 * dt);
            assert!((y - exact).abs() <= 1e-3 * peak, "t = {}", k as f64 * dt);
        }
        assert!((m.output() - bm / a).abs() < 1e-6);
    }

    #[test]
    fn mit_edge_cases_leave_kp_untouched() {
        let s = AdaptiveGainState::new(1.2345, 0.0, 0.0, 10.0);
        assert_eq!(mit_update(&s, 3.0, 4.0, 1e-3).kp.to_bits(), 1.2345f64.to_bits());
        let s = AdaptiveGainState::new(1.2345, 5.0, 0.0, 10.0);
        assert_eq!(mit_update(&s, 0.0, 4.0, 1e-3).kp.to_bits(), 1.2345f64.to_bits());
        assert_eq!(mit_update(&s, 2.0, 0.0, 1e-3).kp.to_bits(), 1.2345f64.to_bits());
    }

    #[test]
    fn mit_update_direction_and_clamp() {
        let s = AdaptiveGainState::new(1.0, 1.0, 0.0, 10.0);
        assert!((mit_update(&s, 1.0, 1.0, 0.1).kp - 0.9).abs() < 1e-15);
        assert_eq!(mit_update(&s, -1000.0, 1.0, 1.0).kp, 10.0);
        assert_eq!(mit_update(&s, 1000.0, 1.0, 1.0).kp, 0.0);
    }

    #[test]
    fn output_and_error_examples() {
        assert_eq!(control_output(0.0, 7.0, 100.0), 0.0);
        assert_eq!(control_output(2.0, 5.0, 100.0), 10.0);
        assert_eq!(control_output(2.0, 500.0, 100.0), 100.0);
        assert_eq!(control_output(2.0, -500.0, 100.0), -100.0);
        assert_eq!(tracking_error(1.5, 1.5), 0.0);
        assert_eq!(tracking_error(3.0, 1.0), 2.0);
        assert!(tracking_error(0.5, 1.0) < 0.0);
    }

    #[test]
    fn scalar_gain_contracts_toward_ideal() {
        // dkp/dt = -(γ/k̄p)·ym²·(kp - k̄p) with constant uc: |kp - k̄p| never grows
        let (kbar, ym, gamma, dt) = (2.0, 1.5, 0.2, 1e-3);
        let mut s = AdaptiveGainState::new(0.5, gamma, -100.0, 100.0);
        let mut gap = (s.kp - kbar).abs();
        for _ in 0..100_000 {
            let e = (s.kp - kbar) / kbar * ym;
            s = mit_update(&s, e, ym, dt);
            let g = (s.kp - kbar).abs();
            assert!(g <= gap);
            gap = g;
        }
        assert!(gap < 1e-3);
    }

    #[test]
    fn config_validation() {
        assert!(MrasConfig::default().validate().is_ok());
        let d = MrasConfig::default();
        assert!(MrasConfig { denom_s_coeff: -1.0, ..d }.validate().is_err());
        let c = MrasConfig { kp_init: 5.0, ..d };
        assert!(c.validate().is_err());
    }

    proptest! {
        #[test]
        fn identical_inputs_identical_gain(us in proptest::collection::vec(-5.0f64..5.0, 1..200)) {
            let run = || {
                let mut m = SecondOrder::new(2.0, 4.0, 3.0);
                let mut p = SecondOrder::new(1.0, 4.0, 3.0);
                let mut s = AdaptiveGainState::new(1.0, 0.5, 0.0, 10.0);
                for &u in &us {
                    let ym = m.step(u, 1e-2);
                    let y = p.step(s.kp * u, 1e-2);
                    s = mit_update(&s, tracking_error(y, ym), ym, 1e-2);
                }
                s.kp.to_bits()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
