//! Packet-layer channel emulation: path loss, link budget and the pairwise
//! channel matrix recomputed every simulation step.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{self, GeoPosition};

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("path loss needs a positive distance, got {0} m")]
    NonPositiveDistance(f64),
    #[error("nodes {0} and {1} share the same position")]
    CoincidentNodes(String, String),
    #[error("channel matrix needs at least 2 nodes")]
    TooFewNodes,
    #[error("invalid radio config: {0}")]
    InvalidRadio(String),
    #[error("invalid path loss model: {0}")]
    InvalidModel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub tx_power_dbm: f64,
    pub carrier_freq_mhz: f64,
    pub bandwidth_mhz: f64,
    pub noise_figure_db: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            tx_power_dbm: 12.0,
            carrier_freq_mhz: 3500.0,
            bandwidth_mhz: 20.0,
            noise_figure_db: 5.0,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.carrier_freq_mhz.is_finite() && self.carrier_freq_mhz > 0.0) {
            return Err(ChannelError::InvalidRadio("carrier frequency must be positive".into()));
        }
        if !(self.bandwidth_mhz.is_finite() && self.bandwidth_mhz > 0.0) {
            return Err(ChannelError::InvalidRadio("bandwidth must be positive".into()));
        }
        if !(self.noise_figure_db.is_finite() && self.noise_figure_db >= 0.0) {
            return Err(ChannelError::InvalidRadio("noise figure must be >= 0".into()));
        }
        if !self.tx_power_dbm.is_finite() {
            return Err(ChannelError::InvalidRadio("tx power must be finite".into()));
        }
        Ok(())
    }

    pub fn noise_floor_dbm(&self) -> f64 {
        THERMAL_NOISE_DBM_PER_HZ + 10.0 * (self.bandwidth_mhz * 1e6).log10() + self.noise_figure_db
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum PathLossVariant {
    FreeSpace,
    LogDistance {
        exponent: f64,
        ref_distance_m: f64,
        ref_loss_db: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    #[serde(flatten)]
    pub variant: PathLossVariant,
    #[serde(default)]
    pub shadowing_sigma_db: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            variant: PathLossVariant::FreeSpace,
            shadowing_sigma_db: 0.0,
            rng_seed: 0,
        }
    }
}

/// Identifies one shadowing draw: ordered pair `(tx, rx)` at step `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ShadowingKey {
    pub tx: u32,
    pub rx: u32,
    pub step: u64,
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive an independent generator for a tuple of stream coordinates.
pub(crate) fn sub_rng(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mut h = mix64(seed);
    for &p in parts {
        h = mix64(h ^ p);
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Standard-normal sample that depends only on `(seed, parts)`.
pub(crate) fn keyed_standard_normal(seed: u64, parts: &[u64]) -> f64 {
    StandardNormal.sample(&mut sub_rng(seed, parts))
}

impl PathLossModel {
    pub fn validate(&self) -> Result<(), ChannelError> {
        if !(self.shadowing_sigma_db.is_finite() && self.shadowing_sigma_db >= 0.0) {
            return Err(ChannelError::InvalidModel("shadowing sigma must be >= 0".into()));
        }
        if let PathLossVariant::LogDistance {
            exponent,
            ref_distance_m,
            ref_loss_db,
        } = self.variant
        {
            if !(exponent >= 2.0 && exponent.is_finite()) {
                return Err(ChannelError::InvalidModel("exponent must be >= 2".into()));
            }
            if !(ref_distance_m > 0.0 && ref_distance_m.is_finite()) {
                return Err(ChannelError::InvalidModel("reference distance must be > 0".into()));
            }
            if !ref_loss_db.is_finite() {
                return Err(ChannelError::InvalidModel("reference loss must be finite".into()));
            }
        }
        Ok(())
    }

    /// Path loss without shadowing.
    pub fn median_loss(&self, distance_m: f64, freq_mhz: f64) -> Result<f64, ChannelError> {
        if distance_m.is_nan() || distance_m <= 0.0 {
            return Err(ChannelError::NonPositiveDistance(distance_m));
        }
        Ok(match self.variant {
            PathLossVariant::FreeSpace => {
                20.0 * (distance_m / 1000.0).log10() + 20.0 * freq_mhz.log10() + 32.44
            }
            PathLossVariant::LogDistance {
                exponent,
                ref_distance_m,
                ref_loss_db,
            } => ref_loss_db + 10.0 * exponent * (distance_m / ref_distance_m).log10(),
        })
    }

    /// Zero-mean Gaussian shadowing term for one draw.
    pub fn shadowing_db(&self, key: ShadowingKey) -> f64 {
        if self.shadowing_sigma_db == 0.0 {
            return 0.0;
        }
        let z = keyed_standard_normal(self.rng_seed, &[key.tx as u64, key.rx as u64, key.step]);
        self.shadowing_sigma_db * z
    }
}

pub fn path_loss(
    model: &PathLossModel,
    distance_m: f64,
    freq_mhz: f64,
    key: ShadowingKey,
) -> Result<f64, ChannelError> {
    Ok(model.median_loss(distance_m, freq_mhz)? + model.shadowing_db(key))
}

pub fn link_snr(radio: &RadioConfig, path_loss_db: f64) -> f64 {
    radio.tx_power_dbm - path_loss_db - radio.noise_floor_dbm()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinkState {
    pub distance_m: f64,
    pub path_loss_db: f64,
    pub snr_db: f64,
    pub connected: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelNode {
    pub id: String,
    pub position: GeoPosition,
}

/// Square matrix of links; entry `(i, j)` is the link transmitted by node `i`
/// and received by node `j`. Diagonal entries are self-link markers.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    ids: Vec<String>,
    entries: Vec<Option<LinkState>>,
}

impl ChannelMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|x| x == id)
    }

    /// `None` on the diagonal or out of range.
    pub fn link(&self, tx: usize, rx: usize) -> Option<&LinkState> {
        let n = self.ids.len();
        if tx >= n || rx >= n {
            return None;
        }
        self.entries[tx * n + rx].as_ref()
    }
}

/// Recompute every ordered link for one time step.
pub fn channel_matrix(
    nodes: &[ChannelNode],
    model: &PathLossModel,
    radio: &RadioConfig,
    disconnect_snr_db: f64,
    step: u64,
) -> Result<ChannelMatrix, ChannelError> {
    if nodes.len() < 2 {
        return Err(ChannelError::TooFewNodes);
    }
    let n = nodes.len();
    let mut entries = vec![None; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = geodesy::slant_distance(&nodes[i].position, &nodes[j].position);
            if d == 0.0 {
                return Err(ChannelError::CoincidentNodes(
                    nodes[i].id.clone(),
                    nodes[j].id.clone(),
                ));
            }
            let median = model.median_loss(d, radio.carrier_freq_mhz)?;
            for (tx, rx) in [(i, j), (j, i)] {
                let key = ShadowingKey {
                    tx: tx as u32,
                    rx: rx as u32,
                    step,
                };
                let pl = median + model.shadowing_db(key);
                let snr = link_snr(radio, pl);
                entries[tx * n + rx] = Some(LinkState {
                    distance_m: d,
                    path_loss_db: pl,
                    snr_db: snr,
                    connected: snr >= disconnect_snr_db,
                });
            }
        }
    }
    Ok(ChannelMatrix {
        ids: nodes.iter().map(|n| n.id.clone()).collect(),
        entries,
    })
}
