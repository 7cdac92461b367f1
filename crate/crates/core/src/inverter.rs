//! Ideal three-phase two-level inverter with anti-parallel diodes.
//!
//! Switch codes are six bits ordered `(A_high, A_low, B_high, B_low, C_high,
//! C_low)`, so `V0 = 010101` ties every phase to the negative rail and
//! `V7 = 101010` ties every phase to the positive rail.

use std::fmt;
use std::str::FromStr;

use crate::error::InverterError;
use crate::motor::PhaseQuantities;

/// Canonical switch codes for V0..V7.
pub const VECTOR_BITS: [[bool; 6]; 8] = {
    const O: bool = false;
    const I: bool = true;
    [
        [O, I, O, I, O, I], // V0 010101
        [I, O, O, O, O, I], // V1 100001
        [O, O, I, O, O, I], // V2 001001
        [O, I, I, O, O, O], // V3 011000
        [O, I, O, O, I, O], // V4 010010
        [O, O, O, I, I, O], // V5 000110
        [I, O, O, I, O, O], // V6 100100
        [I, O, I, O, I, O], // V7 101010
    ]
};

const PHASE_NAMES: [char; 3] = ['A', 'B', 'C'];

/// Gate state of the six inverter switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SwitchState {
    bits: [bool; 6],
}

impl SwitchState {
    pub fn new(bits: [bool; 6]) -> Result<Self, InverterError> {
        for (phase, name) in PHASE_NAMES.iter().enumerate() {
            if bits[2 * phase] && bits[2 * phase + 1] {
                return Err(InverterError::ShootThrough(*name));
            }
        }
        Ok(SwitchState { bits })
    }

    pub fn bits(&self) -> [bool; 6] {
        self.bits
    }

    pub fn high(&self, phase: usize) -> bool {
        self.bits[2 * phase]
    }

    pub fn low(&self, phase: usize) -> bool {
        self.bits[2 * phase + 1]
    }

    /// The V0..V7 index when the code is one of the canonical eight.
    pub fn vector_id(&self) -> Option<u8> {
        VECTOR_BITS
            .iter()
            .position(|b| *b == self.bits)
            .map(|p| p as u8)
    }
}

impl fmt::Display for SwitchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SwitchState {
    type Err = InverterError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bytes = s.as_bytes();
        if bytes.len() != 6 {
            return Err(InverterError::MalformedBits(s.to_owned()));
        }
        let mut bits = [false; 6];
        for (slot, byte) in bits.iter_mut().zip(bytes) {
            *slot = match byte {
                b'0' => false,
                b'1' => true,
                _ => return Err(InverterError::MalformedBits(s.to_owned())),
            };
        }
        SwitchState::new(bits)
    }
}

pub fn decode_vector(vector_id: u8) -> Result<SwitchState, InverterError> {
    VECTOR_BITS
        .get(vector_id as usize)
        .map(|bits| SwitchState { bits: *bits })
        .ok_or(InverterError::InvalidVector(vector_id))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rail {
    Positive,
    Negative,
}

/// How one phase terminal is tied to the DC bus during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connection {
    /// Through a closed switch.
    Switched(Rail),
    /// Through a freewheeling diode; both switches of the leg are open.
    Diode(Rail),
    /// Not conducting; the phase current is held at zero.
    Open,
}

impl Connection {
    pub fn rail(&self) -> Option<Rail> {
        match self {
            Connection::Switched(r) | Connection::Diode(r) => Some(*r),
            Connection::Open => None,
        }
    }
}

/// Below this magnitude a current through an open leg counts as extinguished.
pub const CURRENT_EPS: f64 = 1e-9;

/// Terminal conditions of the three phases for one integration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseDrive {
    pub connections: [Connection; 3],
    pub vdc: f64,
}

impl PhaseDrive {
    /// Resolves which rail every phase sees.
    ///
    /// First pass: closed switches clamp, and an open leg still carrying
    /// current conducts through the diode that matches the current sign.
    /// Second pass: an idle open phase whose terminal would leave the
    /// `[0, Vdc]` window is clamped to the violated rail.
    pub fn resolve(sw: &SwitchState, currents: &PhaseQuantities, emfs: &PhaseQuantities, vdc: f64) -> Self {
        let mut connections = [Connection::Open; 3];
        for (x, conn) in connections.iter_mut().enumerate() {
            *conn = if sw.high(x) {
                Connection::Switched(Rail::Positive)
            } else if sw.low(x) {
                Connection::Switched(Rail::Negative)
            } else if currents[x] > CURRENT_EPS {
                Connection::Diode(Rail::Negative)
            } else if currents[x] < -CURRENT_EPS {
                Connection::Diode(Rail::Positive)
            } else {
                Connection::Open
            };
        }
        let tentative = PhaseDrive { connections, vdc };
        let terminals = tentative.terminal_potentials(emfs);
        for x in 0..3 {
            if connections[x] == Connection::Open {
                if terminals[x] > vdc {
                    connections[x] = Connection::Diode(Rail::Positive);
                } else if terminals[x] < 0.0 {
                    connections[x] = Connection::Diode(Rail::Negative);
                }
            }
        }
        PhaseDrive { connections, vdc }
    }

    fn rail_potential(&self, rail: Rail) -> f64 {
        match rail {
            Rail::Positive => self.vdc,
            Rail::Negative => 0.0,
        }
    }

    fn conducting(&self) -> usize {
        self.connections.iter().filter(|c| c.rail().is_some()).count()
    }

    /// Star-point potential relative to the negative rail.
    ///
    /// With the connected set C carrying all the current,
    /// `Σ_C L di/dt = 0` gives `v_n = mean_C(v_x - e_x)`.
    pub fn neutral(&self, emfs: &PhaseQuantities) -> f64 {
        if self.conducting() < 2 {
            return 0.5 * self.vdc - emfs.sum() / 3.0;
        }
        let mut acc = 0.0;
        let mut n = 0.0;
        for x in 0..3 {
            if let Some(rail) = self.connections[x].rail() {
                acc += self.rail_potential(rail) - emfs[x];
                n += 1.0;
            }
        }
        acc / n
    }

    /// Terminal potentials relative to the negative rail. Open phases sit at
    /// `v_n + e_x`.
    pub fn terminal_potentials(&self, emfs: &PhaseQuantities) -> [f64; 3] {
        let vn = self.neutral(emfs);
        let mut out = [0.0; 3];
        for x in 0..3 {
            out[x] = match self.connections[x].rail() {
                Some(rail) if self.conducting() >= 2 => self.rail_potential(rail),
                _ => vn + emfs[x],
            };
        }
        out
    }

    /// Line-neutral phase voltages. An open phase reads its own back-EMF,
    /// which leaves its current unchanged.
    pub fn line_neutral(&self, emfs: &PhaseQuantities) -> PhaseQuantities {
        let vn = self.neutral(emfs);
        let t = self.terminal_potentials(emfs);
        PhaseQuantities([t[0] - vn, t[1] - vn, t[2] - vn])
    }

    /// Mask of phases that actually carry current this step.
    pub fn active(&self) -> [bool; 3] {
        let live = self.conducting() >= 2;
        self.connections.map(|c| live && c.rail().is_some())
    }

    /// Current drawn from the positive rail.
    pub fn dc_current(&self, currents: &PhaseQuantities) -> f64 {
        (0..3)
            .filter(|&x| self.connections[x].rail() == Some(Rail::Positive))
            .map(|x| currents[x])
            .sum()
    }

    pub fn diode_conduction(&self) -> [bool; 3] {
        self.connections.map(|c| matches!(c, Connection::Diode(_)))
    }
}

/// Line-neutral voltages the inverter imposes for the given switch state.
pub fn terminal_voltages(
    sw: &SwitchState,
    currents: &PhaseQuantities,
    emfs: &PhaseQuantities,
    vdc: f64,
) -> PhaseQuantities {
    PhaseDrive::resolve(sw, currents, emfs, vdc).line_neutral(emfs)
}

/// DC-link current, positive when the battery discharges.
///
/// A phase feeds the positive rail through its high switch, or through the
/// high-side diode when its leg is open and its current is negative.
pub fn dc_link_current(sw: &SwitchState, currents: &PhaseQuantities, diode_conduction: [bool; 3]) -> f64 {
    (0..3)
        .filter(|&x| sw.high(x) || (diode_conduction[x] && !sw.low(x) && currents[x] < 0.0))
        .map(|x| currents[x])
        .sum()
}
