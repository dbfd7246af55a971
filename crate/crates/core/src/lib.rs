//! Emulator for UAV-mounted cellular base station experiments: vehicle
//! flight, air-to-ground links, downlink scheduling, traffic probes, the
//! experiment loop and offline log analysis.

pub mod channel;
pub mod cli;
pub mod flightsim;
pub mod geodesy;
pub mod mac;
pub mod orchestrator;
pub mod postproc;
pub mod traffic;
