//! Experiment configuration document and its validation.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::log::parse_timestamp;
use super::OrchestratorError;
use crate::channel::{PathLossModel, RadioConfig};
use crate::flightsim::{mission_duration, FlightPlan};
use crate::geodesy::GeoPosition;
use crate::mac::{CellConfig, McsTable};
use crate::traffic::PingConfig;

/// Bundled reference experiment: aerial eNB on the portable node flying
/// LW1 -> LW2 -> LW1 while serving both fixed nodes.
pub const REFERENCE_SCENARIO: &str = include_str!("../../scenarios/ref.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    FixedNode,
    PortableNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    BaseStation,
    UserEquipment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub kind: NodeKind,
    pub role: NodeRole,
    /// Required for fixed nodes; portable nodes ride the flight plan.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<GeoPosition>,
}

fn default_name() -> String {
    "experiment".into()
}
fn default_step_ms() -> u64 {
    100
}
fn default_report_interval() -> f64 {
    1.0
}
fn default_start_time() -> String {
    "2025-01-01T12:00:00.000Z".into()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub nodes: Vec<NodeSpec>,
    pub flight_plan: FlightPlan,
    #[serde(default)]
    pub radio: RadioConfig,
    #[serde(default)]
    pub channel: PathLossModel,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub mcs_table: McsTable,
    #[serde(default)]
    pub ping: PingConfig,
    #[serde(default = "default_step_ms")]
    pub step_ms: u64,
    /// Defaults to the mission duration rounded up to whole report intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_s: Option<f64>,
    #[serde(default = "default_report_interval")]
    pub report_interval_s: f64,
    #[serde(default)]
    pub seed: u64,
    /// Simulated wall-clock time of step 0.
    #[serde(default = "default_start_time")]
    pub start_time: String,
    /// Start flying at t = 0; otherwise wait for a TAKEOFF command.
    #[serde(default = "default_true")]
    pub auto_start: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, OrchestratorError> {
        serde_json::from_str(text).map_err(|e| OrchestratorError::ConfigInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn reference() -> Self {
        Self::from_json(REFERENCE_SCENARIO).expect("bundled scenario is valid")
    }

    /// Read a config file. `ref` and `ref.json` fall back to the bundled
    /// reference scenario when no such file exists.
    pub fn load(path: &Path) -> Result<Self, OrchestratorError> {
        match std::fs::read_to_string(path) {
            Ok(text) => Self::from_json(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                let name = path.to_string_lossy();
                if name == "ref" || name == "ref.json" {
                    Ok(Self::reference())
                } else {
                    Err(OrchestratorError::ConfigInvalid(format!(
                        "{}: {e}",
                        path.display()
                    )))
                }
            }
            Err(e) => Err(OrchestratorError::ConfigInvalid(format!("{}: {e}", path.display()))),
        }
    }

    pub fn validate(&self) -> Result<ValidatedConfig, OrchestratorError> {
        ValidatedConfig::new(self.clone())
    }
}

fn invalid(msg: impl Into<String>) -> OrchestratorError {
    OrchestratorError::ConfigInvalid(msg.into())
}

/// Convert seconds to an exact whole number of milliseconds.
fn exact_ms(field: &str, seconds: f64) -> Result<u64, OrchestratorError> {
    let ms = seconds * 1000.0;
    if !(ms.is_finite() && ms >= 1.0) || (ms - ms.round()).abs() > 1e-6 {
        return Err(invalid(format!("{field} must be a positive whole number of milliseconds")));
    }
    Ok(ms.round() as u64)
}

/// Config with every cross-field invariant checked and derived timing
/// resolved to integer milliseconds.
#[derive(Debug, Clone)]
pub struct ValidatedConfig {
    pub config: ExperimentConfig,
    pub start: DateTime<Utc>,
    pub base_station: usize,
    pub user_equipment: Vec<usize>,
    pub report_interval_ms: u64,
    pub ping_interval_ms: u64,
    pub total_steps: u64,
    pub mission_duration_s: f64,
    /// Non-fatal findings to record in the experiment log.
    pub warnings: Vec<String>,
}

impl ValidatedConfig {
    fn new(config: ExperimentConfig) -> Result<Self, OrchestratorError> {
        let cfg = &config;
        if cfg.nodes.is_empty() {
            return Err(invalid("no nodes"));
        }
        for (i, n) in cfg.nodes.iter().enumerate() {
            if n.id.is_empty() || !n.id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-') {
                return Err(invalid(format!(
                    "nodes[{i}].id `{}` must be non-empty ASCII letters, digits or '-'",
                    n.id
                )));
            }
            if cfg.nodes[..i].iter().any(|m| m.id == n.id) {
                return Err(invalid(format!("nodes[{i}].id `{}` is duplicated", n.id)));
            }
            match (n.kind, &n.position) {
                (NodeKind::FixedNode, None) => {
                    return Err(invalid(format!("nodes[{i}].position required for a fixed node")))
                }
                (NodeKind::PortableNode, Some(_)) => {
                    return Err(invalid(format!(
                        "nodes[{i}].position not allowed on a portable node"
                    )))
                }
                (NodeKind::FixedNode, Some(p)) if p.altitude_m() < 0.0 => {
                    return Err(invalid(format!("nodes[{i}].position altitude must be >= 0")))
                }
                _ => {}
            }
        }
        let base: Vec<usize> = cfg
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::BaseStation)
            .map(|(i, _)| i)
            .collect();
        if base.len() != 1 {
            return Err(invalid(format!(
                "exactly one BaseStation required, found {}",
                base.len()
            )));
        }
        let ues: Vec<usize> = cfg
            .nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.role == NodeRole::UserEquipment)
            .map(|(i, _)| i)
            .collect();
        if ues.is_empty() {
            return Err(invalid("at least one UserEquipment required"));
        }

        cfg.radio.validate().map_err(|e| invalid(format!("radio: {e}")))?;
        cfg.channel.validate().map_err(|e| invalid(format!("channel: {e}")))?;
        cfg.cell.validate().map_err(|e| invalid(format!("cell: {e}")))?;
        cfg.ping.validate().map_err(|e| invalid(format!("ping: {e}")))?;

        if cfg.step_ms == 0 || !cfg.step_ms.is_multiple_of(cfg.cell.subframe_ms as u64) {
            return Err(invalid("step_ms must be a positive multiple of subframe_ms"));
        }
        let report_interval_ms = exact_ms("report_interval_s", cfg.report_interval_s)?;
        let ping_interval_ms = exact_ms("ping.interval_s", cfg.ping.interval_s)?;
        if !report_interval_ms.is_multiple_of(cfg.step_ms) {
            return Err(invalid("report_interval_s must be a multiple of step_ms"));
        }
        if !ping_interval_ms.is_multiple_of(cfg.step_ms) {
            return Err(invalid("ping.interval_s must be a multiple of step_ms"));
        }
        let start = parse_timestamp(&cfg.start_time)
            .or_else(|_| {
                DateTime::parse_from_rfc3339(&cfg.start_time).map(|d| d.with_timezone(&Utc))
            })
            .map_err(|_| invalid(format!("start_time `{}` is not ISO-8601 UTC", cfg.start_time)))?;

        let mission_s = mission_duration(&cfg.flight_plan);
        let mut warnings = Vec::new();
        let duration_ms = match cfg.duration_s {
            Some(d) => {
                if !(d.is_finite() && d > 0.0) {
                    return Err(invalid("duration_s must be positive"));
                }
                if d < mission_s {
                    warnings.push(format!(
                        "duration_{d:.1}s_truncates_mission_of_{mission_s:.1}s"
                    ));
                }
                (d * 1000.0).round() as u64
            }
            None => {
                let intervals = (mission_s * 1000.0 / report_interval_ms as f64).ceil() as u64;
                intervals.max(1) * report_interval_ms
            }
        };
        let total_steps = duration_ms.div_ceil(cfg.step_ms).max(1);

        Ok(Self {
            base_station: base[0],
            user_equipment: ues,
            report_interval_ms,
            ping_interval_ms,
            total_steps,
            mission_duration_s: mission_s,
            start,
            warnings,
            config,
        })
    }

    pub fn step_ms(&self) -> u64 {
        self.config.step_ms
    }

    pub fn duration_ms(&self) -> u64 {
        self.total_steps * self.config.step_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_is_valid() {
        let v = ExperimentConfig::reference().validate().unwrap();
        assert_eq!(v.user_equipment.len(), 2);
        assert!(v.warnings.is_empty());
        assert!(v.duration_ms() as f64 >= v.mission_duration_s * 1000.0);
        assert_eq!(v.config.flight_plan.waypoints().len(), 7);
    }

    #[test]
    fn rejects_two_base_stations() {
        let mut cfg = ExperimentConfig::reference();
        for n in cfg.nodes.iter_mut() {
            n.role = NodeRole::BaseStation;
        }
        assert!(matches!(cfg.validate(), Err(OrchestratorError::ConfigInvalid(_))));
    }

    #[test]
    fn rejects_bad_timing() {
        let mut cfg = ExperimentConfig::reference();
        cfg.report_interval_s = 0.25;
        cfg.step_ms = 100;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::reference();
        cfg.step_ms = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_ids() {
        let mut cfg = ExperimentConfig::reference();
        cfg.nodes[0].id = "LW_1".into();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::reference();
        cfg.nodes[1].id = cfg.nodes[0].id.clone();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn short_duration_warns() {
        let mut cfg = ExperimentConfig::reference();
        cfg.duration_s = Some(10.0);
        let v = cfg.validate().unwrap();
        assert_eq!(v.total_steps, 100);
        assert_eq!(v.warnings.len(), 1);
    }

    #[test]
    fn unknown_fields_rejected() {
        let mut value: serde_json::Value = serde_json::from_str(REFERENCE_SCENARIO).unwrap();
        value["bogus"] = serde_json::json!(1);
        assert!(ExperimentConfig::from_json(&value.to_string()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = ExperimentConfig::reference();
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
