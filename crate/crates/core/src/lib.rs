//! Fixed-step simulator for a BLDC electric-vehicle drivetrain under
//! direct torque control.

pub mod dtc;
pub mod error;
pub mod inverter;
pub mod motor;
pub mod vehicle;
pub mod battery;
pub mod cycle;
pub mod mras;
pub mod scenario;
pub mod engine;
