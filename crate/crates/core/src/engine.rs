//! Closed loop at two rates: drive cycle -> speed controller -> DTC ->
//! inverter -> motor -> vehicle -> battery.
//!
//! The electrical and mechanical states advance together by RK4 every
//! `dt_electrical`; the controllers decide and the trace is logged every
//! `dt_control`. The inverter connection pattern is fixed at the start of
//! each electrical step.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::battery::{soc_step, terminal_voltage, BatteryState};
use crate::cycle::DriveCycle;
use crate::dtc::{estimate_flux, DtcController, FluxEstimate, Measurements, References, Sector};
use crate::error::{InverterError, SimError};
use crate::inverter::{decode_vector, Connection, PhaseDrive, Rail, SwitchState, CURRENT_EPS};
use crate::motor::{phase_shapes, torque_from, wrap_angle, MotorParams, PhaseQuantities};
use crate::mras::{mit_update, tracking_error, AdaptiveGainState, MrasConfig, ReferenceModel};
use crate::scenario::{PiGains, Scenario, SpeedControllerKind};
use crate::vehicle::{
    force_breakdown, motor_speed_from_vehicle, shaft_torque_from_force, vehicle_speed_from_motor, RoadState,
    VehicleParams,
};

pub const TRACE_COLUMNS: [&str; 14] = [
    "t",
    "speed_ref",
    "speed",
    "torque_ref",
    "torque",
    "flux_mag",
    "sector",
    "vector_id",
    "i_a",
    "i_b",
    "i_c",
    "i_dc",
    "soc",
    "kp",
];

/// One logged control step. Speeds are motor mechanical rad/s; `i_dc` is
/// the mean DC-link current over the preceding control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub speed_ref: f64,
    pub speed: f64,
    pub torque_ref: f64,
    pub torque: f64,
    pub flux_mag: f64,
    pub sector: u8,
    pub vector_id: u8,
    pub i_abc: [f64; 3],
    pub i_dc: f64,
    pub soc: f64,
    /// Adaptive gain; absent under the PI controller.
    pub kp: Option<f64>,
}

/// Anti-windup PI on motor speed error, output in N·m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiController {
    pub gains: PiGains,
    pub limit: f64,
    integral: f64,
}

impl PiController {
    pub fn new(gains: PiGains, limit: f64) -> Self {
        Self {
            gains,
            limit,
            integral: 0.0,
        }
    }

    /// Integrates only while unsaturated, or when the error pulls the
    /// output back inside the limit.
    pub fn step(&mut self, err: f64, dt: f64) -> f64 {
        let candidate = self.integral + self.gains.ki * err * dt;
        let raw = self.gains.kp * err + candidate;
        let unwinding = (raw > self.limit && err < 0.0) || (raw < -self.limit && err > 0.0);
        if raw.abs() <= self.limit || unwinding {
            self.integral = candidate;
        }
        (self.gains.kp * err + self.integral).clamp(-self.limit, self.limit)
    }
}

/// Adaptive speed controller: the MIT-tuned gain scales the speed command
/// handed to an inner PI, `T_ref = PI(kp·ω_ref - ω)`, so the closed loop is
/// pulled toward the reference model response.
#[derive(Debug, Clone, PartialEq)]
pub struct MrasSpeedController {
    pub inner: PiController,
    pub model: ReferenceModel,
    pub gain: AdaptiveGainState,
}

impl MrasSpeedController {
    pub fn new(cfg: &MrasConfig, gamma: f64, inner: PiController) -> Self {
        Self {
            inner,
            model: cfg.reference_model(),
            gain: AdaptiveGainState::new(cfg.kp_init, gamma, cfg.kp_min, cfg.kp_max),
        }
    }

    /// Returns the torque reference. Adaptation freezes while it saturates.
    pub fn step(&mut self, omega_ref: f64, omega: f64, dt: f64) -> f64 {
        let ym = self.model.step(omega_ref, dt);
        let command = self.gain.kp * omega_ref;
        let torque = self.inner.step(command - omega, dt);
        if torque.abs() < self.inner.limit {
            self.gain = mit_update(&self.gain, tracking_error(omega, ym), ym, dt);
        }
        torque
    }
}

/// `γ = γ0 / max(ym²)` with `ym` the model response to the whole cycle.
pub fn normalized_gamma(cfg: &MrasConfig, cycle: &DriveCycle, vehicle: &VehicleParams, dt: f64, duration: f64) -> f64 {
    if let Some(g) = cfg.gamma {
        return g;
    }
    let mut model = cfg.reference_model();
    let n = (duration / dt + 1e-9).floor() as usize;
    let mut peak: f64 = 0.0;
    for k in 0..=n {
        let uc = motor_speed_from_vehicle(vehicle, cycle.speed_at(k as f64 * dt));
        peak = peak.max(model.step(uc, dt).powi(2));
    }
    if peak > 0.0 {
        cfg.gamma0 / peak
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
enum SpeedLoop {
    Pi(PiController),
    Mras(MrasSpeedController),
}

impl SpeedLoop {
    fn step(&mut self, omega_ref: f64, omega: f64, dt: f64) -> (f64, Option<f64>) {
        match self {
            SpeedLoop::Pi(pi) => (pi.step(omega_ref - omega, dt), None),
            SpeedLoop::Mras(m) => {
                let kp = m.gain.kp;
                (m.step(omega_ref, omega, dt), Some(kp))
            }
        }
    }
}

// Indices into the augmented RK4 state.
const W: usize = 3;
const TH: usize = 4;
const E_DC: usize = 5;
const E_CU: usize = 6;
const E_VISC: usize = 7;
const E_DRIVELINE: usize = 8;
const E_ROAD: usize = 9;
const E_GRADE: usize = 10;
const INT_VA: usize = 11;
const INT_VB: usize = 12;
const INT_IA: usize = 13;
const INT_IB: usize = 14;
const Q_DC: usize = 15;
const E_REGEN: usize = 16;
const E_DC_ABS: usize = 17;
const N: usize = 18;

type Aug = [f64; N];

/// Direction a conducting diode lets current through: the lower diode
/// feeds positive phase current, the upper one returns negative current.
fn diode_sign(conn: Connection) -> Option<f64> {
    match conn {
        Connection::Diode(Rail::Negative) => Some(1.0),
        Connection::Diode(Rail::Positive) => Some(-1.0),
        _ => None,
    }
}

struct Plant<'a> {
    motor: &'a MotorParams,
    vehicle: &'a VehicleParams,
    slope: f64,
}

impl Plant<'_> {
    fn lever(&self) -> f64 {
        self.vehicle.wheel_radius / self.vehicle.gear_ratio
    }

    /// Shaft acceleration with the vehicle mass reflected through the gear.
    ///
    /// `J·ω̇ = T_em - B·ω - T_L(F_res + M·r·ω̇)` is piecewise linear and
    /// increasing in `ω̇`, so exactly one efficiency branch is consistent.
    fn shaft_accel(&self, drive_torque: f64, road_force: f64) -> f64 {
        let j = self.motor.inertia;
        let m = self.vehicle.mass;
        let r = self.lever();
        let eta = self.vehicle.driveline_efficiency;
        let motoring = (drive_torque - road_force * r / eta) / (j + m * r * r / eta);
        if road_force + m * r * motoring >= 0.0 {
            return motoring;
        }
        let braking = (drive_torque - road_force * r * eta) / (j + m * r * r * eta);
        if road_force + m * r * braking < 0.0 {
            return braking;
        }
        -road_force / (m * r)
    }

    /// At standstill rolling resistance is static friction: it holds the
    /// vehicle until the drive overcomes it, then slides against the motion.
    /// `other_force` is everything else resisting at zero speed.
    fn breakaway(&self, drive_torque: f64, other_force: f64) -> (f64, f64) {
        let v = self.vehicle;
        let rolling = v.mass * v.gravity * v.rolling_coeff;
        let forward = self.shaft_accel(drive_torque, other_force + rolling);
        if forward > 0.0 {
            return (other_force + rolling, forward);
        }
        let backward = self.shaft_accel(drive_torque, other_force - rolling);
        if backward < 0.0 {
            return (other_force - rolling, backward);
        }
        (other_force, 0.0)
    }

    fn deriv(&self, s: &Aug, drive: &PhaseDrive) -> Aug {
        let p = self.motor;
        let ke = p.back_emf_constant;
        let i = PhaseQuantities([s[0], s[1], s[2]]);
        let w = s[W];
        let shapes = phase_shapes(s[TH]);
        let emf = shapes * (ke * w);
        let v = drive.line_neutral(&emf);
        let active = drive.active();
        let l = p.inductance();
        let mut d = [0.0; N];
        for x in 0..3 {
            if active[x] {
                d[x] = (v[x] - p.phase_resistance * i[x] - emf[x]) / l;
            }
        }
        let t_em = ke * shapes.dot(&i);
        let speed = vehicle_speed_from_motor(self.vehicle, w);
        let f = force_breakdown(self.vehicle, RoadState { slope: self.slope, speed }, 0.0);
        let drive_torque = t_em - p.viscous_friction * w;
        let (road_force, accel) = if w == 0.0 {
            self.breakaway(drive_torque, f.total())
        } else {
            (f.total(), self.shaft_accel(drive_torque, f.total()))
        };
        let wheel_force = road_force + self.vehicle.mass * self.lever() * accel;
        let t_load = shaft_torque_from_force(self.vehicle, wheel_force);
        d[W] = accel;
        d[TH] = p.pole_pairs as f64 * w;
        let i_dc = drive.dc_current(&i);
        let p_dc = drive.vdc * i_dc;
        d[E_DC] = p_dc;
        d[E_CU] = p.phase_resistance * i.dot(&i);
        d[E_VISC] = p.viscous_friction * w * w;
        d[E_DRIVELINE] = t_load * w - wheel_force * speed;
        d[E_ROAD] = (f.rolling + f.aero) * speed;
        d[E_GRADE] = f.grade * speed;
        let (va, vb) = v.clarke();
        let (ia, ib) = i.clarke();
        d[INT_VA] = va;
        d[INT_VB] = vb;
        d[INT_IA] = ia;
        d[INT_IB] = ib;
        d[Q_DC] = i_dc;
        d[E_REGEN] = (-p_dc).max(0.0);
        d[E_DC_ABS] = p_dc.abs();
        d
    }

    fn rk4(&self, s: &Aug, drive: &PhaseDrive, dt: f64) -> Aug {
        let axpy = |a: &Aug, k: &Aug, h: f64| {
            let mut out = *a;
            for n in 0..N {
                out[n] += h * k[n];
            }
            out
        };
        let k1 = self.deriv(s, drive);
        let k2 = self.deriv(&axpy(s, &k1, 0.5 * dt), drive);
        let k3 = self.deriv(&axpy(s, &k2, 0.5 * dt), drive);
        let k4 = self.deriv(&axpy(s, &k3, dt), drive);
        let mut next = *s;
        for n in 0..N {
            next[n] += dt / 6.0 * (k1[n] + 2.0 * k2[n] + 2.0 * k3[n] + k4[n]);
        }
        next
    }

    /// One electrical step. A freewheeling diode that runs dry inside the
    /// step, or a shaft that passes through standstill, ends a sub-step at
    /// the zero crossing; the remainder is integrated with the connections
    /// and friction resolved again.
    fn step(&self, s: &Aug, sw: &SwitchState, vdc: f64, dt: f64) -> Aug {
        const MAX_EVENTS: usize = 4;
        let mut cur = *s;
        let mut left = dt;
        for event in 0..=MAX_EVENTS {
            let i = PhaseQuantities([cur[0], cur[1], cur[2]]);
            let emf = phase_shapes(cur[TH]) * (self.motor.back_emf_constant * cur[W]);
            let drive = PhaseDrive::resolve(sw, &i, &emf, vdc);
            let mut next = self.rk4(&cur, &drive, left);
            let diode = (0..3).filter(|&x| {
                diode_sign(drive.connections[x]).is_some_and(|d| d * cur[x] > 0.0 && d * next[x] <= 0.0)
            });
            let stop = (cur[W] != 0.0 && cur[W] * next[W] <= 0.0).then_some(W);
            let crossing = diode
                .chain(stop)
                .map(|x| (x, cur[x] / (cur[x] - next[x])))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let stopped = if let (Some((x, frac)), true) = (crossing, event < MAX_EVENTS) {
                // secant refinement of the zero crossing of component x
                let (mut h0, mut v0) = (0.0, cur[x]);
                let (mut h1, mut v1) = (left, next[x]);
                let mut h = frac * left;
                let tol = if x == W { 1e-12 } else { CURRENT_EPS };
                for _ in 0..8 {
                    next = self.rk4(&cur, &drive, h);
                    if next[x].abs() <= tol || h1 - h0 <= 1e-15 * dt {
                        break;
                    }
                    if next[x] * v0 > 0.0 {
                        (h0, v0) = (h, next[x]);
                    } else {
                        (h1, v1) = (h, next[x]);
                    }
                    h = h0 + (h1 - h0) * v0 / (v0 - v1);
                }
                left -= h;
                x == W
            } else {
                left = 0.0;
                stop.is_some()
            };
            if stopped {
                next[W] = 0.0;
            }
            self.settle(&drive, &mut next);
            cur = next;
            if left <= 0.0 {
                break;
            }
        }
        cur[TH] = wrap_angle(cur[TH]);
        cur
    }

    /// Enforces the diode and star-point constraints at the end of a sub-step.
    fn settle(&self, drive: &PhaseDrive, next: &mut Aug) {
        // a diode cannot carry reverse current: at or past zero it is off
        let mut currents = PhaseQuantities([next[0], next[1], next[2]]);
        let active = drive.active();
        let mut free = [false; 3];
        for x in 0..3 {
            let extinguished = diode_sign(drive.connections[x]).is_some_and(|d| d * currents[x] <= 0.0);
            if extinguished || !active[x] {
                currents[x] = 0.0;
            } else {
                free[x] = true;
            }
        }
        // keep Σi = 0 using only the phases still conducting
        let n_free = free.iter().filter(|f| **f).count();
        if n_free >= 2 {
            let mean = currents.sum() / n_free as f64;
            for x in 0..3 {
                if free[x] {
                    currents[x] -= mean;
                }
            }
        } else {
            currents = PhaseQuantities::ZERO;
        }
        // book the flux the clip removes as the matching volt-seconds so the
        // sensed voltage integral stays consistent with the flux linkage
        let clipped = PhaseQuantities([currents[0] - next[0], currents[1] - next[1], currents[2] - next[2]]);
        let (da, db) = clipped.clarke();
        next[INT_VA] += self.motor.inductance() * da;
        next[INT_VB] += self.motor.inductance() * db;
        next[..3].copy_from_slice(&currents.0);
    }
}

/// Energy integrals accumulated over a run, J.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyTotals {
    /// Net energy drawn from the battery terminals.
    pub dc_link: f64,
    /// Energy returned to the battery terminals.
    pub regenerated: f64,
    /// `∫|P_dc| dt`.
    pub dc_link_abs: f64,
    pub copper: f64,
    pub viscous: f64,
    pub driveline: f64,
    pub road: f64,
    pub grade: f64,
}

/// Energy balance of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    pub kinetic_change: f64,
    pub magnetic_change: f64,
    pub battery_delivered: f64,
    pub battery_regenerated: f64,
    pub copper_loss: f64,
    pub viscous_loss: f64,
    pub driveline_loss: f64,
    pub road_loss: f64,
    pub potential_change: f64,
    /// `battery_delivered - (stored changes + losses)`.
    pub residual: f64,
    /// Scale for the residual: `∫|P_dc| dt + |ΔKE| + losses`.
    pub total: f64,
}

impl EnergyLedger {
    pub fn relative_residual(&self) -> f64 {
        if self.total > 0.0 {
            self.residual.abs() / self.total
        } else {
            0.0
        }
    }

    pub fn resistive_loss(&self) -> f64 {
        self.copper_loss + self.viscous_loss + self.driveline_loss + self.road_loss
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Summary {
    pub duration: f64,
    pub records: usize,
    pub soc_initial: f64,
    pub soc_final: f64,
    /// RMS of `speed - speed_ref`, motor rad/s.
    pub rms_speed_error: f64,
    /// Pooled torque standard deviation over steady windows, N·m.
    pub torque_ripple: f64,
    pub steady_samples: usize,
    pub energy_drawn_j: f64,
    pub energy_regenerated_j: f64,
    pub energy_residual_rel: f64,
    pub kp_final: Option<f64>,
}

/// Motor and vehicle state at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FinalState {
    pub currents: PhaseQuantities,
    pub omega_mech: f64,
    pub theta_elec: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub name: String,
    pub trace: Vec<TraceRecord>,
    pub energy: EnergyTotals,
    pub final_state: FinalState,
    pub summary: Summary,
}

/// Time a reference plateau must last before its samples count as steady.
pub const STEADY_SETTLE_S: f64 = 1.0;

/// Runs a scenario to completion.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    let cfg = &scenario.config;
    cfg.validate()?;
    let cycle = &scenario.cycle;
    let motor = cfg.motor;
    let vehicle = cfg.vehicle;
    let dt_c = cfg.sim.dt_control;
    let substeps = cfg.substeps();
    let dt_e = dt_c / substeps as f64;
    let duration = scenario.duration();
    let n = (duration / dt_c + 1e-9).floor() as usize;
    let plant = Plant {
        motor: &motor,
        vehicle: &vehicle,
        slope: cfg.road.slope,
    };

    let mut state: Aug = [0.0; N];
    let mut battery: BatteryState = cfg.battery.initial_state();
    let initial_flux = FluxEstimate::from_machine(&motor, state[TH], &PhaseQuantities::ZERO);
    let mut dtc = DtcController::new(cfg.dtc, motor, initial_flux);
    let pi = PiController::new(cfg.pi, cfg.speed.torque_limit);
    let mut speed_loop = match cfg.speed.controller {
        SpeedControllerKind::Pi => SpeedLoop::Pi(pi),
        SpeedControllerKind::Mras => {
            let gamma = normalized_gamma(&cfg.mras, cycle, &vehicle, dt_c, duration);
            log::debug!("adaptation gain {gamma:e}");
            SpeedLoop::Mras(MrasSpeedController::new(&cfg.mras, gamma, pi))
        }
    };
    log::info!(
        "running `{}`: {} control steps x {} electrical substeps",
        cfg.name,
        n,
        substeps
    );

    let mut meas = Measurements {
        v_alphabeta: (0.0, 0.0),
        i_alphabeta: (0.0, 0.0),
        currents: PhaseQuantities::ZERO,
        theta_elec: 0.0,
        dt: 0.0,
    };
    let mut i_dc_avg = 0.0;
    let mut trace = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let t = k as f64 * dt_c;
        let omega_ref = motor_speed_from_vehicle(&vehicle, cycle.speed_at(t));
        let omega = state[W];
        let (torque_ref, kp) = speed_loop.step(omega_ref, omega, dt_c);
        meas.currents = PhaseQuantities([state[0], state[1], state[2]]);
        meas.theta_elec = state[TH];
        let decision = dtc.control_step(
            References {
                torque: torque_ref,
                flux: cfg.dtc.flux_ref,
            },
            &meas,
        );
        trace.push(TraceRecord {
            t,
            speed_ref: omega_ref,
            speed: omega,
            torque_ref,
            torque: torque_from(&motor, state[TH], &meas.currents),
            flux_mag: decision.flux.magnitude(),
            sector: decision.sector.index(),
            vector_id: decision.vector_id,
            i_abc: meas.currents.0,
            i_dc: i_dc_avg,
            soc: battery.soc,
            kp,
        });
        if k == n {
            break;
        }

        let vdc = terminal_voltage(&battery, i_dc_avg);
        for idx in [INT_VA, INT_VB, INT_IA, INT_IB, Q_DC] {
            state[idx] = 0.0;
        }
        for j in 0..substeps {
            state = plant.step(&state, &decision.switches, vdc, dt_e);
            if state.iter().any(|v| !v.is_finite()) {
                let step = (k * substeps + j) as u64;
                return Err(SimError::NonFiniteState {
                    step,
                    time: t + (j + 1) as f64 * dt_e,
                });
            }
        }
        i_dc_avg = state[Q_DC] / dt_c;
        battery = soc_step(&battery, i_dc_avg, dt_c);
        meas.v_alphabeta = (state[INT_VA] / dt_c, state[INT_VB] / dt_c);
        meas.i_alphabeta = (state[INT_IA] / dt_c, state[INT_IB] / dt_c);
        meas.dt = dt_c;
    }

    let energy = EnergyTotals {
        dc_link: state[E_DC],
        regenerated: state[E_REGEN],
        dc_link_abs: state[E_DC_ABS],
        copper: state[E_CU],
        viscous: state[E_VISC],
        driveline: state[E_DRIVELINE],
        road: state[E_ROAD],
        grade: state[E_GRADE],
    };
    let final_state = FinalState {
        currents: PhaseQuantities([state[0], state[1], state[2]]),
        omega_mech: state[W],
        theta_elec: state[TH],
    };
    let mut out = RunOutput {
        name: cfg.name.clone(),
        trace,
        energy,
        final_state,
        summary: Summary::default(),
    };
    out.summary = summarize(&out, scenario);
    Ok(out)
}

/// RMS of the speed tracking error over the whole trace.
pub fn rms_speed_error(trace: &[TraceRecord]) -> f64 {
    if trace.is_empty() {
        return 0.0;
    }
    let sum: f64 = trace.iter().map(|r| (r.speed - r.speed_ref).powi(2)).sum();
    (sum / trace.len() as f64).sqrt()
}

/// Pooled within-window standard deviation of the motor torque.
///
/// A window is a run of samples on a constant, non-zero reference plateau,
/// starting [`STEADY_SETTLE_S`] after the plateau begins. Returns the ripple
/// and the number of samples used.
pub fn torque_ripple(trace: &[TraceRecord], cycle: &DriveCycle) -> (f64, usize) {
    let mut windows: Vec<Vec<f64>> = Vec::new();
    let mut current: Vec<f64> = Vec::new();
    let mut plateau_start: Option<f64> = None;
    for r in trace {
        let flat = cycle.accel_at(r.t) == 0.0 && r.speed_ref > 0.0;
        if !flat {
            plateau_start = None;
            if !current.is_empty() {
                windows.push(std::mem::take(&mut current));
            }
            continue;
        }
        let start = *plateau_start.get_or_insert(r.t);
        if r.t - start >= STEADY_SETTLE_S {
            current.push(r.torque);
        }
    }
    if !current.is_empty() {
        windows.push(current);
    }
    let mut ss = 0.0;
    let mut count = 0;
    for w in &windows {
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        ss += w.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        count += w.len();
    }
    if count == 0 {
        (0.0, 0)
    } else {
        ((ss / count as f64).sqrt(), count)
    }
}

/// Machine state from which a single vector is applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub theta_elec: f64,
    pub omega_mech: f64,
    pub currents: PhaseQuantities,
    pub vdc: f64,
}

impl OperatingPoint {
    /// Zero-current point whose stator flux sits on the centre of `sector`.
    pub fn mid_sector(motor: &MotorParams, sector: Sector, omega_mech: f64, vdc: f64) -> Self {
        // the magnet flux trails the rotor by half a turn; a few corrections
        // absorb the small angular wobble of the trapezoidal flux shape
        let mut theta = wrap_angle(sector.center() + PI);
        for _ in 0..8 {
            let psi = FluxEstimate::from_machine(motor, theta, &PhaseQuantities::ZERO);
            let err = (psi.angle() - sector.center() + PI).rem_euclid(2.0 * PI) - PI;
            theta = wrap_angle(theta - err);
        }
        Self {
            theta_elec: theta,
            omega_mech,
            currents: PhaseQuantities::ZERO,
            vdc,
        }
    }
}

/// Estimated torque and flux magnitude before and after one control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VectorResponse {
    pub torque_before: f64,
    pub torque_after: f64,
    pub flux_before: f64,
    pub flux_after: f64,
}

impl VectorResponse {
    pub fn torque_change(&self) -> f64 {
        self.torque_after - self.torque_before
    }

    pub fn flux_change(&self) -> f64 {
        self.flux_after - self.flux_before
    }
}

/// Holds `vector_id` for one control period from `op` and reports what the
/// controller's estimators see. Speed is free to move but the vehicle is
/// reflected as usual, so over one period it barely does.
pub fn vector_response(
    motor: &MotorParams,
    op: &OperatingPoint,
    vector_id: u8,
    dt_control: f64,
    substeps: usize,
) -> Result<VectorResponse, InverterError> {
    let vehicle = VehicleParams::default();
    let plant = Plant {
        motor,
        vehicle: &vehicle,
        slope: 0.0,
    };
    let sw = decode_vector(vector_id)?;
    let mut state: Aug = [0.0; N];
    state[..3].copy_from_slice(&op.currents.0);
    state[W] = op.omega_mech;
    state[TH] = op.theta_elec;
    let dt_e = dt_control / substeps as f64;
    for _ in 0..substeps {
        state = plant.step(&state, &sw, op.vdc, dt_e);
    }
    let before = FluxEstimate::from_machine(motor, op.theta_elec, &op.currents);
    let after = estimate_flux(
        &before,
        (state[INT_VA] / dt_control, state[INT_VB] / dt_control),
        (state[INT_IA] / dt_control, state[INT_IB] / dt_control),
        motor.phase_resistance,
        dt_control,
        0.0,
    );
    Ok(VectorResponse {
        torque_before: torque_from(motor, op.theta_elec, &op.currents),
        torque_after: torque_from(motor, state[TH], &PhaseQuantities([state[0], state[1], state[2]])),
        flux_before: before.magnitude(),
        flux_after: after.magnitude(),
    })
}

/// Phase currents after each of `steps` electrical steps with `vector_id`
/// held, starting from `op`. Diode commutations are resolved exactly as in
/// [`run`].
pub fn hold_vector(
    motor: &MotorParams,
    op: &OperatingPoint,
    vector_id: u8,
    dt_electrical: f64,
    steps: usize,
) -> Result<Vec<PhaseQuantities>, InverterError> {
    let vehicle = VehicleParams::default();
    let plant = Plant {
        motor,
        vehicle: &vehicle,
        slope: 0.0,
    };
    let sw = decode_vector(vector_id)?;
    let mut state: Aug = [0.0; N];
    state[..3].copy_from_slice(&op.currents.0);
    state[W] = op.omega_mech;
    state[TH] = op.theta_elec;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        state = plant.step(&state, &sw, op.vdc, dt_electrical);
        out.push(PhaseQuantities([state[0], state[1], state[2]]));
    }
    Ok(out)
}

/// Energy balance of a finished run.
pub fn energy_audit(out: &RunOutput, scenario: &Scenario) -> EnergyLedger {
    let cfg = &scenario.config;
    let r = cfg.vehicle.wheel_radius / cfg.vehicle.gear_ratio;
    let j_eq = cfg.motor.inertia + cfg.vehicle.mass * r * r;
    let w0 = out.trace.first().map_or(0.0, |t| t.speed);
    let i0 = out.trace.first().map_or([0.0; 3], |t| t.i_abc);
    let w1 = out.final_state.omega_mech;
    let i1 = out.final_state.currents;
    let l = cfg.motor.inductance();
    let mag = |i: &[f64; 3]| 0.5 * l * i.iter().map(|x| x * x).sum::<f64>();
    let e = &out.energy;
    let kinetic_change = 0.5 * j_eq * (w1 * w1 - w0 * w0);
    let magnetic_change = mag(&i1.0) - mag(&i0);
    let losses = e.copper + e.viscous + e.driveline + e.road;
    let residual = e.dc_link - (kinetic_change + magnetic_change + losses + e.grade);
    EnergyLedger {
        kinetic_change,
        magnetic_change,
        battery_delivered: e.dc_link,
        battery_regenerated: e.regenerated,
        copper_loss: e.copper,
        viscous_loss: e.viscous,
        driveline_loss: e.driveline,
        road_loss: e.road,
        potential_change: e.grade,
        residual,
        total: e.dc_link_abs + kinetic_change.abs() + losses,
    }
}

fn summarize(out: &RunOutput, scenario: &Scenario) -> Summary {
    let (ripple, steady) = torque_ripple(&out.trace, &scenario.cycle);
    let ledger = energy_audit(out, scenario);
    Summary {
        duration: out.trace.last().map_or(0.0, |r| r.t),
        records: out.trace.len(),
        soc_initial: out.trace.first().map_or(0.0, |r| r.soc),
        soc_final: out.trace.last().map_or(0.0, |r| r.soc),
        rms_speed_error: rms_speed_error(&out.trace),
        torque_ripple: ripple,
        steady_samples: steady,
        energy_drawn_j: out.energy.dc_link,
        energy_regenerated_j: out.energy.regenerated,
        energy_residual_rel: ledger.relative_residual(),
        kp_final: out.trace.last().and_then(|r| r.kp),
    }
}

/// Two runs of the same cycle and plant, with `b - a` deltas.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub a: RunOutput,
    pub b: RunOutput,
    pub delta_soc_final: f64,
    pub delta_rms_speed_error: f64,
    pub delta_torque_ripple: f64,
}

/// Runs both scenarios concurrently and reports `b - a`.
pub fn compare(a: &Scenario, b: &Scenario) -> Result<Comparison, SimError> {
    check_comparable(a, b)?;
    let (ra, rb) = std::thread::scope(|s| {
        let ha = s.spawn(|| run(a));
        let hb = s.spawn(|| run(b));
        (
            ha.join().expect("simulation thread panicked"),
            hb.join().expect("simulation thread panicked"),
        )
    });
    let (ra, rb) = (ra?, rb?);
    Ok(Comparison {
        delta_soc_final: rb.summary.soc_final - ra.summary.soc_final,
        delta_rms_speed_error: rb.summary.rms_speed_error - ra.summary.rms_speed_error,
        delta_torque_ripple: rb.summary.torque_ripple - ra.summary.torque_ripple,
        a: ra,
        b: rb,
    })
}

fn check_comparable(a: &Scenario, b: &Scenario) -> Result<(), SimError> {
    let (ca, cb) = (&a.config, &b.config);
    if a.cycle.samples() != b.cycle.samples() {
        return Err(SimError::Mismatch("drive cycles differ".into()));
    }
    if ca.motor != cb.motor || ca.vehicle != cb.vehicle || ca.road != cb.road || ca.battery != cb.battery {
        return Err(SimError::Mismatch("plants differ".into()));
    }
    if ca.sim.dt_control != cb.sim.dt_control || a.duration() != b.duration() {
        return Err(SimError::Mismatch("time grids differ".into()));
    }
    Ok(())
}

/// Trace as CSV with the fixed column order. Floats use the shortest
/// round-trip form, so identical runs give identical bytes.
pub fn trace_to_csv(trace: &[TraceRecord]) -> String {
    let mut s = String::with_capacity(trace.len() * 160 + 100);
    s.push_str(&TRACE_COLUMNS.join(","));
    s.push('\n');
    for r in trace {
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},",
            r.t,
            r.speed_ref,
            r.speed,
            r.torque_ref,
            r.torque,
            r.flux_mag,
            r.sector,
            r.vector_id,
            r.i_abc[0],
            r.i_abc[1],
            r.i_abc[2],
            r.i_dc,
            r.soc
        );
        if let Some(kp) = r.kp {
            let _ = write!(s, "{kp}");
        }
        s.push('\n');
    }
    s
}

/// Summary and energy ledger as `key = value` lines.
pub fn summary_to_string(out: &RunOutput, scenario: &Scenario) -> String {
    let cfg = &scenario.config;
    let m = &out.summary;
    let e = energy_audit(out, scenario);
    let mut s = String::new();
    let _ = writeln!(s, "scenario = \"{}\"", out.name);
    let _ = writeln!(s, "dtc_mode = \"{}\"", cfg.dtc.mode);
    let _ = writeln!(
        s,
        "speed_controller = \"{}\"",
        match cfg.speed.controller {
            SpeedControllerKind::Pi => "pi",
            SpeedControllerKind::Mras => "mras",
        }
    );
    let _ = writeln!(s, "cycle = \"{}\"", scenario.cycle.name);
    let _ = writeln!(s, "duration_s = {}", m.duration);
    let _ = writeln!(s, "records = {}", m.records);
    let _ = writeln!(s, "soc_initial = {}", m.soc_initial);
    let _ = writeln!(s, "soc_final = {}", m.soc_final);
    let _ = writeln!(s, "rms_speed_error = {}", m.rms_speed_error);
    let _ = writeln!(s, "torque_ripple = {}", m.torque_ripple);
    let _ = writeln!(s, "steady_samples = {}", m.steady_samples);
    let _ = writeln!(s, "energy_drawn_J = {}", m.energy_drawn_j);
    let _ = writeln!(s, "energy_regenerated_J = {}", m.energy_regenerated_j);
    if let Some(kp) = m.kp_final {
        let _ = writeln!(s, "kp_final = {kp}");
    }
    let _ = writeln!(s, "energy_kinetic_change_J = {}", e.kinetic_change);
    let _ = writeln!(s, "energy_magnetic_change_J = {}", e.magnetic_change);
    let _ = writeln!(s, "energy_copper_loss_J = {}", e.copper_loss);
    let _ = writeln!(s, "energy_viscous_loss_J = {}", e.viscous_loss);
    let _ = writeln!(s, "energy_driveline_loss_J = {}", e.driveline_loss);
    let _ = writeln!(s, "energy_road_loss_J = {}", e.road_loss);
    let _ = writeln!(s, "energy_potential_change_J = {}", e.potential_change);
    let _ = writeln!(s, "energy_residual_J = {}", e.residual);
    let _ = writeln!(s, "energy_residual_rel = {}", e.relative_residual());
    s
}

/// Comparison deltas as `key = value` lines.
pub fn comparison_to_string(c: &Comparison) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "a = \"{}\"", c.a.name);
    let _ = writeln!(s, "b = \"{}\"", c.b.name);
    let _ = writeln!(s, "soc_final_a = {}", c.a.summary.soc_final);
    let _ = writeln!(s, "soc_final_b = {}", c.b.summary.soc_final);
    let _ = writeln!(s, "delta_soc_final = {}", c.delta_soc_final);
    let _ = writeln!(s, "rms_speed_error_a = {}", c.a.summary.rms_speed_error);
    let _ = writeln!(s, "rms_speed_error_b = {}", c.b.summary.rms_speed_error);
    let _ = writeln!(s, "delta_rms_speed_error = {}", c.delta_rms_speed_error);
    let _ = writeln!(s, "torque_ripple_a = {}", c.a.summary.torque_ripple);
    let _ = writeln!(s, "torque_ripple_b = {}", c.b.summary.torque_ripple);
    let _ = writeln!(s, "delta_torque_ripple = {}", c.delta_torque_ripple);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_saturates_without_windup() {
        let mut pi = PiController::new(PiGains { kp: 1.0, ki: 10.0 }, 5.0);
        for _ in 0..1000 {
            assert_eq!(pi.step(100.0, 1e-2), 5.0);
        }
        // integral did not grow while saturated, so a small reversed error
        // takes the output off the limit at once
        assert!(pi.step(-1.0, 1e-2) < 5.0);
    }

    #[test]
    fn shaft_accel_branches_agree_at_kink() {
        let motor = MotorParams::default();
        let vehicle = VehicleParams::default();
        let plant = Plant {
            motor: &motor,
            vehicle: &vehicle,
            slope: 0.0,
        };
        // zero road force: motoring and braking branches meet at zero torque
        assert_eq!(plant.shaft_accel(0.0, 0.0), 0.0);
        let up = plant.shaft_accel(1e-9, 0.0);
        let down = plant.shaft_accel(-1e-9, 0.0);
        assert!(up > 0.0 && down < 0.0);
        // continuity across the kink at F_total = 0
        let f = 50.0;
        let t_kink = 0.0 + f * plant.lever() * 0.0 + motor.inertia * (-f / (vehicle.mass * plant.lever()));
        let a = plant.shaft_accel(t_kink, f);
        assert!((a + f / (vehicle.mass * plant.lever())).abs() < 1e-9);
    }

    #[test]
    fn ripple_ignores_transients() {
        let cycle = DriveCycle::new("c", vec![(0.0, 0.0), (1.0, 5.0), (10.0, 5.0)]).unwrap();
        let trace: Vec<TraceRecord> = (0..=100)
            .map(|k| {
                let t = k as f64 * 0.1;
                TraceRecord {
                    t,
                    speed_ref: cycle.speed_at(t),
                    speed: 0.0,
                    torque_ref: 0.0,
                    torque: if t < 2.0 { 100.0 * t } else if k % 2 == 0 { 1.0 } else { -1.0 },
                    flux_mag: 0.0,
                    sector: 1,
                    vector_id: 0,
                    i_abc: [0.0; 3],
                    i_dc: 0.0,
                    soc: 0.5,
                    kp: None,
                }
            })
            .collect();
        let (ripple, n) = torque_ripple(&trace, &cycle);
        assert_eq!(n, 81);
        assert!((ripple - 1.0).abs() < 0.01, "{ripple}");
    }
}
