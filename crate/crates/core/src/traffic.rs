//! Full-buffer throughput reports and ping round-trip times over the
//! emulated links.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{keyed_standard_normal, LinkState};
use crate::mac::{bits_to_mbps, SubframeAllocation, UeId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrafficError {
    #[error("invalid ping config: {0}")]
    InvalidPing(String),
    #[error("report interval shorter than one subframe")]
    IntervalTooShort,
}

/// Latency model: an affine function of distance plus a step penalty once the
/// SNR margin over the disconnect threshold gets thin, plus Gaussian jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PingConfig {
    pub interval_s: f64,
    pub timeout_s: f64,
    pub base_rtt_ms: f64,
    pub distance_coeff_ms_per_m: f64,
    pub marginal_snr_penalty_ms: f64,
    pub marginal_margin_db: f64,
    pub jitter_sigma_ms: f64,
    pub rng_seed: u64,
}

impl Default for PingConfig {
    fn default() -> Self {
        Self {
            interval_s: 1.0,
            timeout_s: 1.0,
            base_rtt_ms: 30.0,
            distance_coeff_ms_per_m: 0.05,
            marginal_snr_penalty_ms: 40.0,
            marginal_margin_db: 20.8,
            jitter_sigma_ms: 2.0,
            rng_seed: 0,
        }
    }
}

impl PingConfig {
    pub fn validate(&self) -> Result<(), TrafficError> {
        let nonneg = [
            ("base_rtt_ms", self.base_rtt_ms),
            ("distance_coeff_ms_per_m", self.distance_coeff_ms_per_m),
            ("marginal_snr_penalty_ms", self.marginal_snr_penalty_ms),
            ("marginal_margin_db", self.marginal_margin_db),
            ("jitter_sigma_ms", self.jitter_sigma_ms),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TrafficError::InvalidPing(format!("{name} must be >= 0")));
            }
        }
        if !(self.interval_s.is_finite() && self.interval_s > 0.0) {
            return Err(TrafficError::InvalidPing("interval_s must be > 0".into()));
        }
        if !(self.timeout_s.is_finite() && self.timeout_s > 0.0) {
            return Err(TrafficError::InvalidPing("timeout_s must be > 0".into()));
        }
        if self.timeout_s * 1000.0 <= self.base_rtt_ms {
            return Err(TrafficError::InvalidPing("timeout must exceed base RTT".into()));
        }
        Ok(())
    }

    /// RTT without jitter.
    pub fn expected_rtt_ms(&self, distance_m: f64, margin_db: f64) -> f64 {
        let penalty = if margin_db < self.marginal_margin_db {
            self.marginal_snr_penalty_ms
        } else {
            0.0
        };
        self.base_rtt_ms + self.distance_coeff_ms_per_m * distance_m + penalty
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Rtt {
    Millis(f64),
    Timeout,
}

impl Rtt {
    pub fn millis(&self) -> Option<f64> {
        match self {
            Rtt::Millis(v) => Some(*v),
            Rtt::Timeout => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PingSample {
    pub t: f64,
    pub rtt: Rtt,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThroughputSample {
    pub t: f64,
    pub ue: UeId,
    pub mbps: f64,
    pub distance_m: f64,
}

/// One ping over `link`. The jitter draw depends only on
/// `(cfg.rng_seed, ue, step)`.
pub fn ping_rtt(
    link: &LinkState,
    mcs_margin_db: f64,
    cfg: &PingConfig,
    ue: UeId,
    step: u64,
    t: f64,
) -> PingSample {
    let rtt = if !link.connected {
        Rtt::Timeout
    } else {
        let mut rtt = cfg.expected_rtt_ms(link.distance_m, mcs_margin_db);
        if cfg.jitter_sigma_ms > 0.0 {
            rtt += cfg.jitter_sigma_ms * keyed_standard_normal(cfg.rng_seed, &[ue.0 as u64, step]);
        }
        let rtt = rtt.max(0.0);
        if rtt >= cfg.timeout_s * 1000.0 {
            Rtt::Timeout
        } else {
            Rtt::Millis(rtt)
        }
    };
    PingSample {
        t,
        rtt,
        distance_m: link.distance_m,
    }
}

/// Throughput seen by an iperf-style receiver over one report interval.
pub fn iperf_report(
    allocs: &[SubframeAllocation],
    ue: UeId,
    interval_s: f64,
    t: f64,
    distance_m: f64,
) -> Result<ThroughputSample, TrafficError> {
    if interval_s.is_nan() || interval_s < 0.001 {
        return Err(TrafficError::IntervalTooShort);
    }
    let bits: u64 = allocs
        .iter()
        .filter_map(|a| a.get(ue))
        .map(|e| e.bits_delivered)
        .sum();
    Ok(ThroughputSample {
        t,
        ue,
        mbps: bits_to_mbps(bits, interval_s),
        distance_m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::{CellConfig, McsSelection, McsTable, RoundRobinScheduler};

    fn link(d: f64, connected: bool) -> LinkState {
        LinkState {
            distance_m: d,
            path_loss_db: 0.0,
            snr_db: 30.0,
            connected,
        }
    }

    fn quiet() -> PingConfig {
        PingConfig {
            jitter_sigma_ms: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_distance_gives_base_rtt() {
        let s = ping_rtt(&link(0.0, true), 100.0, &quiet(), UeId(0), 0, 0.0);
        assert_eq!(s.rtt, Rtt::Millis(30.0));
    }

    #[test]
    fn disconnected_times_out() {
        let s = ping_rtt(&link(10.0, false), 100.0, &PingConfig::default(), UeId(0), 0, 0.0);
        assert_eq!(s.rtt, Rtt::Timeout);
    }

    #[test]
    fn slow_reply_times_out() {
        let cfg = PingConfig {
            distance_coeff_ms_per_m: 10.0,
            ..quiet()
        };
        let s = ping_rtt(&link(200.0, true), 100.0, &cfg, UeId(0), 0, 0.0);
        assert_eq!(s.rtt, Rtt::Timeout);
    }

    #[test]
    fn rtt_is_affine_in_distance() {
        let cfg = quiet();
        let d = 120.0;
        let a = ping_rtt(&link(d, true), 50.0, &cfg, UeId(0), 0, 0.0).rtt.millis().unwrap();
        let b = ping_rtt(&link(2.0 * d, true), 50.0, &cfg, UeId(0), 0, 0.0).rtt.millis().unwrap();
        assert!((b - a - cfg.distance_coeff_ms_per_m * d).abs() < 1e-12);
    }

    #[test]
    fn thin_margin_adds_penalty() {
        let cfg = quiet();
        let wide = ping_rtt(&link(100.0, true), cfg.marginal_margin_db, &cfg, UeId(0), 0, 0.0);
        let thin = ping_rtt(&link(100.0, true), cfg.marginal_margin_db - 0.01, &cfg, UeId(0), 0, 0.0);
        assert_eq!(
            thin.rtt.millis().unwrap() - wide.rtt.millis().unwrap(),
            cfg.marginal_snr_penalty_ms
        );
    }

    #[test]
    fn jitter_is_deterministic_and_non_negative() {
        let cfg = PingConfig {
            base_rtt_ms: 0.0,
            jitter_sigma_ms: 5.0,
            ..Default::default()
        };
        let a = ping_rtt(&link(0.0, true), 100.0, &cfg, UeId(1), 17, 0.0);
        let b = ping_rtt(&link(0.0, true), 100.0, &cfg, UeId(1), 17, 0.0);
        assert_eq!(a, b);
        for step in 0..200 {
            let s = ping_rtt(&link(0.0, true), 100.0, &cfg, UeId(1), step, 0.0);
            assert!(s.rtt.millis().unwrap() >= 0.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(PingConfig::default().validate().is_ok());
        let bad = PingConfig {
            timeout_s: 0.01,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    fn allocs(sel: &[McsSelection], n: usize) -> Vec<SubframeAllocation> {
        let cell = CellConfig::default();
        let mut rr = RoundRobinScheduler::new();
        let active: Vec<_> = sel.iter().enumerate().map(|(i, s)| (UeId(i as u32), *s)).collect();
        (0..n).map(|_| rr.schedule(&active, &cell)).collect()
    }

    #[test]
    fn iperf_reports() {
        let t = McsTable::default();
        let q64 = McsSelection::Active(t.entries()[0]);
        let q16 = McsSelection::Active(t.entries()[1]);
        let a = allocs(&[q64, q64], 1000);
        assert_eq!(iperf_report(&a, UeId(0), 1.0, 1.0, 0.0).unwrap().mbps, 25.2);

        let d = allocs(&[McsSelection::Disconnected, q64], 1000);
        assert_eq!(iperf_report(&d, UeId(0), 1.0, 1.0, 0.0).unwrap().mbps, 0.0);

        let mut half = allocs(&[q64, q64], 500);
        half.extend(allocs(&[q16, q16], 500));
        // (500 * 50 * 504 + 500 * 50 * 336) bits in one second.
        assert_eq!(iperf_report(&half, UeId(0), 1.0, 1.0, 0.0).unwrap().mbps, 21.0);
        assert!(iperf_report(&half, UeId(0), 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn mean_rtt_non_decreasing_in_distance() {
        use crate::channel::{link_snr, path_loss, PathLossModel, RadioConfig, ShadowingKey};
        let cfg = PingConfig::default();
        let radio = RadioConfig::default();
        let model = PathLossModel::default();
        let n = 1000u64;
        let se = cfg.jitter_sigma_ms / (n as f64).sqrt();
        let mean_at = |d: f64| {
            let key = ShadowingKey { tx: 0, rx: 1, step: 0 };
            let pl = path_loss(&model, d, radio.carrier_freq_mhz, key).unwrap();
            let snr = link_snr(&radio, pl);
            let l = LinkState { distance_m: d, path_loss_db: pl, snr_db: snr, connected: true };
            let total: f64 = (0..n)
                .map(|k| ping_rtt(&l, snr, &cfg, UeId(0), k, 0.0).rtt.millis().unwrap())
                .sum();
            total / n as f64
        };
        let means: Vec<f64> = (1..=50).map(|i| mean_at(10.0 * i as f64)).collect();
        for w in means.windows(2) {
            assert!(w[1] >= w[0] - se, "{} then {}", w[0], w[1]);
        }
        assert!(means[49] - means[0] > cfg.marginal_snr_penalty_ms);
    }

    #[test]
    fn throughput_never_exceeds_single_user_cap() {
        let cell = CellConfig::default();
        let table = McsTable::default();
        let mut sched = RoundRobinScheduler::new();
        let top = McsSelection::Active(table.entries()[0]);
        let allocs: Vec<_> = (0..1000).map(|_| sched.schedule(&[(UeId(0), top)], &cell)).collect();
        let s = iperf_report(&allocs, UeId(0), 1.0, 1.0, 0.0).unwrap();
        let cap = cell.n_rb as f64 * 504.0 / 1000.0;
        assert!(s.mbps <= cap);
        assert_eq!(s.mbps, 50.4);
    }
}
