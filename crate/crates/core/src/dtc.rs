//! Direct torque control: stator flux estimation, sector detection,
//! hysteresis comparators and the two switching tables.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, TableParseError};
use crate::inverter::{decode_vector, SwitchState};
use crate::motor::{rotor_flux, torque_from, MotorParams, PhaseQuantities};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FluxCmd {
    /// FI
    Increase,
    /// FD
    Decrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TorqueCmd {
    /// TI
    Increase,
    /// T0, "no change"
    Hold,
    /// TD
    Decrease,
}

impl FluxCmd {
    pub fn label(&self) -> &'static str {
        match self {
            FluxCmd::Increase => "FI",
            FluxCmd::Decrease => "FD",
        }
    }
}

impl TorqueCmd {
    pub fn label(&self) -> &'static str {
        match self {
            TorqueCmd::Increase => "TI",
            TorqueCmd::Hold => "T0",
            TorqueCmd::Decrease => "TD",
        }
    }

    /// +1 / 0 / -1 as produced by the three-level comparator.
    pub fn level(&self) -> i8 {
        match self {
            TorqueCmd::Increase => 1,
            TorqueCmd::Hold => 0,
            TorqueCmd::Decrease => -1,
        }
    }
}

impl fmt::Display for FluxCmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl fmt::Display for TorqueCmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for FluxCmd {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "FI" => Ok(FluxCmd::Increase),
            "FD" => Ok(FluxCmd::Decrease),
            _ => Err(format!("unknown flux command `{s}`")),
        }
    }
}

impl FromStr for TorqueCmd {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "TI" => Ok(TorqueCmd::Increase),
            "T0" => Ok(TorqueCmd::Hold),
            "TD" => Ok(TorqueCmd::Decrease),
            _ => Err(format!("unknown torque command `{s}`")),
        }
    }
}

/// Flux sector Θ1..Θ6, each 60° wide, Θ1 centred on the α axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sector(u8);

impl Sector {
    pub const ALL: [Sector; 6] = [Sector(1), Sector(2), Sector(3), Sector(4), Sector(5), Sector(6)];

    pub fn new(k: u8) -> Option<Sector> {
        (1..=6).contains(&k).then_some(Sector(k))
    }

    pub fn index(&self) -> u8 {
        self.0
    }

    /// Angle of the sector centre, rad.
    pub fn center(&self) -> f64 {
        (self.0 as f64 - 1.0) * PI / 3.0
    }

    fn column(&self) -> usize {
        self.0 as usize - 1
    }
}

/// Sector of a flux angle. Θ1 spans [-30°, 30°); boundaries belong to the
/// sector above them.
pub fn sector_of(angle: f64) -> Sector {
    let deg = angle.to_degrees().rem_euclid(360.0);
    // the nudge keeps exact boundary angles from rounding into the lower sector
    let k = ((deg + 30.0) / 60.0 + 1e-9).floor() as i64;
    Sector((k.rem_euclid(6) + 1) as u8)
}

/// Stator flux linkage in the stationary αβ frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluxEstimate {
    pub psi_alpha: f64,
    pub psi_beta: f64,
}

impl FluxEstimate {
    pub fn new(psi_alpha: f64, psi_beta: f64) -> Self {
        Self { psi_alpha, psi_beta }
    }

    pub fn magnitude(&self) -> f64 {
        self.psi_alpha.hypot(self.psi_beta)
    }

    pub fn angle(&self) -> f64 {
        self.psi_beta.atan2(self.psi_alpha)
    }

    /// Flux actually linked by the stator: `L·i` plus the rotor contribution.
    pub fn from_machine(params: &MotorParams, theta_elec: f64, currents: &PhaseQuantities) -> Self {
        let linked = *currents * params.inductance() + rotor_flux(params, theta_elec);
        let (a, b) = linked.clarke();
        Self::new(a, b)
    }
}

/// Voltage-model flux integrator: `ψ += (v - R·i - leak·ψ)·dt`.
///
/// `leak = 0` is a pure integrator.
pub fn estimate_flux(
    prev: &FluxEstimate,
    v_alphabeta: (f64, f64),
    i_alphabeta: (f64, f64),
    resistance: f64,
    dt: f64,
    leak: f64,
) -> FluxEstimate {
    FluxEstimate {
        psi_alpha: prev.psi_alpha + (v_alphabeta.0 - resistance * i_alphabeta.0 - leak * prev.psi_alpha) * dt,
        psi_beta: prev.psi_beta + (v_alphabeta.1 - resistance * i_alphabeta.1 - leak * prev.psi_beta) * dt,
    }
}

/// Comparator bands and output memory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HysteresisState {
    pub flux_band: f64,
    pub torque_band: f64,
    pub last_flux: FluxCmd,
    pub last_torque: TorqueCmd,
}

impl HysteresisState {
    pub fn new(flux_band: f64, torque_band: f64) -> Self {
        Self {
            flux_band,
            torque_band,
            last_flux: FluxCmd::Increase,
            last_torque: TorqueCmd::Hold,
        }
    }

    /// Two-level flux comparator on `err = ψ_ref - |ψ|`.
    pub fn flux(&mut self, err: f64) -> FluxCmd {
        if err > self.flux_band {
            self.last_flux = FluxCmd::Increase;
        } else if err < -self.flux_band {
            self.last_flux = FluxCmd::Decrease;
        }
        self.last_flux
    }

    /// Three-level torque comparator on `err = T_ref - T`.
    ///
    /// Outputs TI above `+dT`, TD below `-dT`, T0 inside the band. The
    /// thresholds are the band edges, so the output never changes while the
    /// error stays strictly inside the band.
    pub fn torque_3level(&mut self, err: f64) -> TorqueCmd {
        self.last_torque = if err > self.torque_band {
            TorqueCmd::Increase
        } else if err < -self.torque_band {
            TorqueCmd::Decrease
        } else {
            TorqueCmd::Hold
        };
        self.last_torque
    }

    /// Two-level torque comparator used with the conventional table.
    pub fn torque_2level(&mut self, err: f64) -> TorqueCmd {
        if err > self.torque_band {
            self.last_torque = TorqueCmd::Increase;
        } else if err < -self.torque_band {
            self.last_torque = TorqueCmd::Decrease;
        } else if self.last_torque == TorqueCmd::Hold {
            // cold start inside the band
            self.last_torque = if err >= 0.0 { TorqueCmd::Increase } else { TorqueCmd::Decrease };
        }
        self.last_torque
    }
}

/// One printed row of a switching table: vector ids for Θ1..Θ6.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableRow {
    pub flux: FluxCmd,
    pub torque: TorqueCmd,
    pub vectors: [u8; 6],
}

const fn row(flux: FluxCmd, torque: TorqueCmd, vectors: [u8; 6]) -> TableRow {
    TableRow { flux, torque, vectors }
}

use FluxCmd::{Decrease as FD, Increase as FI};
use TorqueCmd::{Decrease as TD, Hold as T0, Increase as TI};

/// Conventional table, rows in printed order. Rows 3 and 4 carry no flux
/// label in the source layout and are kept as continuations of FI; lookups
/// resolve to the first matching row.
pub const CONVENTIONAL_TABLE: [TableRow; 6] = [
    row(FI, TI, [1, 2, 3, 4, 5, 6]),
    row(FI, TD, [6, 1, 2, 3, 4, 5]),
    row(FI, TI, [2, 3, 4, 5, 6, 1]),
    row(FI, TD, [1, 2, 3, 4, 5, 6]),
    row(FD, TI, [0, 0, 0, 0, 0, 0]),
    row(FD, TD, [2, 3, 4, 5, 6, 1]),
];

/// Regenerative table, torque-major, printed order, verbatim. Note the
/// (TD, FD, Θ5) cell: V6 where the rotation pattern predicts V3.
pub const MODIFIED_TABLE: [TableRow; 6] = [
    row(FI, TI, [2, 3, 4, 5, 6, 1]),
    row(FD, TI, [3, 4, 5, 6, 1, 2]),
    row(FI, T0, [0, 7, 0, 7, 0, 7]),
    row(FD, T0, [0, 7, 0, 7, 0, 7]),
    row(FI, TD, [6, 1, 2, 3, 4, 5]),
    row(FD, TD, [5, 6, 1, 2, 6, 4]),
];

/// Whether the (TD, FD, Θ5) cell of the regenerative table is used as
/// printed or replaced by the pattern-consistent V3.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Table3Variant {
    #[default]
    Verbatim,
    Patched,
}

pub fn modified_table(variant: Table3Variant) -> [TableRow; 6] {
    let mut t = MODIFIED_TABLE;
    if variant == Table3Variant::Patched {
        t[5].vectors[4] = 3;
    }
    t
}

/// Conventional lookup. `torque` must be TI or TD; a T0 input is treated
/// as TD since the conventional table has no zero-torque row.
pub fn lookup_conventional(flux: FluxCmd, torque: TorqueCmd, sector: Sector) -> u8 {
    let torque = if torque == T0 { TD } else { torque };
    CONVENTIONAL_TABLE
        .iter()
        .find(|r| r.flux == flux && r.torque == torque)
        .map(|r| r.vectors[sector.column()])
        .expect("conventional table covers every FI/FD x TI/TD pair")
}

pub fn lookup_modified(torque: TorqueCmd, flux: FluxCmd, sector: Sector, variant: Table3Variant) -> u8 {
    modified_table(variant)
        .iter()
        .find(|r| r.flux == flux && r.torque == torque)
        .map(|r| r.vectors[sector.column()])
        .expect("modified table covers every command pair")
}

/// One cell of a switching table in flat form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableEntry {
    pub sector: Sector,
    pub flux: FluxCmd,
    pub torque: TorqueCmd,
    pub vector_id: u8,
    pub bits: SwitchState,
}

/// Flattens printed rows into cells, row-major, sectors ascending.
pub fn table_entries(rows: &[TableRow]) -> Vec<TableEntry> {
    let mut out = Vec::with_capacity(rows.len() * 6);
    for r in rows {
        for s in Sector::ALL {
            let id = r.vectors[s.column()];
            out.push(TableEntry {
                sector: s,
                flux: r.flux,
                torque: r.torque,
                vector_id: id,
                bits: decode_vector(id).expect("table ids are 0..=7"),
            });
        }
    }
    out
}

pub const TABLE_CSV_HEADER: &str = "sector,flux_cmd,torque_cmd,vector_id,bits";

pub fn table_to_csv(entries: &[TableEntry]) -> String {
    let mut s = String::with_capacity(entries.len() * 24);
    s.push_str(TABLE_CSV_HEADER);
    s.push('\n');
    for e in entries {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            e.sector.index(),
            e.flux,
            e.torque,
            e.vector_id,
            e.bits
        ));
    }
    s
}

/// Parses the table CSV written by [`table_to_csv`]. The bit code must agree
/// with the vector id.
pub fn parse_table_csv(text: &str) -> Result<Vec<TableEntry>, TableParseError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == TABLE_CSV_HEADER => {}
        _ => return Err(TableParseError::Header),
    }
    let mut out = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let err = |message: String| TableParseError::Row { line, message };
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", fields.len())));
        }
        let sector = fields[0]
            .parse::<u8>()
            .ok()
            .and_then(Sector::new)
            .ok_or_else(|| err(format!("bad sector `{}`", fields[0])))?;
        let flux = fields[1].parse::<FluxCmd>().map_err(err)?;
        let torque = fields[2].parse::<TorqueCmd>().map_err(err)?;
        let vector_id = fields[3]
            .parse::<u8>()
            .map_err(|_| err(format!("bad vector id `{}`", fields[3])))?;
        let expected = decode_vector(vector_id).map_err(|e| err(e.to_string()))?;
        let bits = fields[4].parse::<SwitchState>().map_err(|e| err(e.to_string()))?;
        if bits != expected {
            return Err(err(format!("bits {bits} do not encode V{vector_id}")));
        }
        out.push(TableEntry {
            sector,
            flux,
            torque,
            vector_id,
            bits,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DtcMode {
    Conventional,
    Modified,
}

impl fmt::Display for DtcMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DtcMode::Conventional => "conventional",
            DtcMode::Modified => "modified",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DtcConfig {
    pub mode: DtcMode,
    /// Stator flux reference, Wb.
    pub flux_ref: f64,
    /// Flux comparator half-band, Wb.
    pub flux_band: f64,
    /// Torque comparator half-band, N·m.
    pub torque_band: f64,
    pub table3_patched: bool,
    /// High-pass leakage of the flux integrator, 1/s.
    pub flux_leak: f64,
}

impl Default for DtcConfig {
    fn default() -> Self {
        Self {
            mode: DtcMode::Modified,
            flux_ref: 0.45,
            flux_band: 0.005,
            torque_band: 0.5,
            table3_patched: false,
            flux_leak: 0.0,
        }
    }
}

impl DtcConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.flux_ref.is_finite() && self.flux_ref > 0.0) {
            return Err(ConfigError::invalid("dtc.flux_ref", "must be > 0"));
        }
        if !(self.flux_band.is_finite() && self.flux_band > 0.0) {
            return Err(ConfigError::invalid("dtc.flux_band", "must be > 0"));
        }
        if !(self.torque_band.is_finite() && self.torque_band > 0.0) {
            return Err(ConfigError::invalid("dtc.torque_band", "must be > 0"));
        }
        if !(self.flux_leak.is_finite() && self.flux_leak >= 0.0) {
            return Err(ConfigError::invalid("dtc.flux_leak", "must be >= 0"));
        }
        Ok(())
    }

    pub fn table3_variant(&self) -> Table3Variant {
        if self.table3_patched {
            Table3Variant::Patched
        } else {
            Table3Variant::Verbatim
        }
    }
}

/// Torque and flux references for one control step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct References {
    pub torque: f64,
    pub flux: f64,
}

/// What the controller observes over the last control period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurements {
    /// Mean αβ stator voltage over the period.
    pub v_alphabeta: (f64, f64),
    /// Mean αβ stator current over the period.
    pub i_alphabeta: (f64, f64),
    /// Phase currents sampled at the end of the period.
    pub currents: PhaseQuantities,
    /// Rotor electrical angle from the position sensor.
    pub theta_elec: f64,
    /// Length of the period just elapsed, s.
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlDecision {
    pub flux: FluxEstimate,
    pub torque_estimate: f64,
    pub sector: Sector,
    pub flux_cmd: FluxCmd,
    pub torque_cmd: TorqueCmd,
    pub vector_id: u8,
    pub switches: SwitchState,
}

/// Estimators, comparators and table lookup for one drive.
#[derive(Debug, Clone, PartialEq)]
pub struct DtcController {
    pub config: DtcConfig,
    motor: MotorParams,
    flux: FluxEstimate,
    hysteresis: HysteresisState,
}

impl DtcController {
    pub fn new(config: DtcConfig, motor: MotorParams, initial_flux: FluxEstimate) -> Self {
        Self {
            config,
            motor,
            flux: initial_flux,
            hysteresis: HysteresisState::new(config.flux_band, config.torque_band),
        }
    }

    pub fn flux(&self) -> FluxEstimate {
        self.flux
    }

    pub fn hysteresis(&self) -> HysteresisState {
        self.hysteresis
    }

    /// Integrates the flux over the elapsed period, then picks the next vector.
    pub fn control_step(&mut self, refs: References, meas: &Measurements) -> ControlDecision {
        if meas.dt > 0.0 {
            self.flux = estimate_flux(
                &self.flux,
                meas.v_alphabeta,
                meas.i_alphabeta,
                self.motor.phase_resistance,
                meas.dt,
                self.config.flux_leak,
            );
        }
        let torque_estimate = torque_from(&self.motor, meas.theta_elec, &meas.currents);
        let sector = sector_of(self.flux.angle());
        let flux_cmd = self.hysteresis.flux(refs.flux - self.flux.magnitude());
        let torque_err = refs.torque - torque_estimate;
        let (torque_cmd, vector_id) = match self.config.mode {
            DtcMode::Conventional => {
                let t = self.hysteresis.torque_2level(torque_err);
                (t, lookup_conventional(flux_cmd, t, sector))
            }
            DtcMode::Modified => {
                let t = self.hysteresis.torque_3level(torque_err);
                (t, lookup_modified(t, flux_cmd, sector, self.config.table3_variant()))
            }
        };
        ControlDecision {
            flux: self.flux,
            torque_estimate,
            sector,
            flux_cmd,
            torque_cmd,
            vector_id,
            switches: decode_vector(vector_id).expect("table ids are 0..=7"),
        }
    }
}
