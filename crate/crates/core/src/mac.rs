//! Link adaptation and round-robin downlink scheduling.
//!
//! Capacity arithmetic is integer: a resource block carries
//! `symbols_per_rb * bits_per_symbol` bits per 1 ms subframe, so with the
//! defaults one UE alone at 64-QAM gets 100 * 504 bits/ms = 50.4 Mbps and two
//! UEs sharing the cell get 25.2 Mbps each.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacError {
    #[error("MCS table is empty")]
    EmptyTable,
    #[error("MCS thresholds must be strictly decreasing")]
    UnorderedTable,
    #[error("invalid cell config: {0}")]
    InvalidCell(String),
    #[error("throughput window shorter than one subframe")]
    WindowTooShort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "QAM64")]
    Qam64,
    #[serde(rename = "QAM16")]
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> u32 {
        match self {
            Modulation::Qam64 => 6,
            Modulation::Qam16 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qam64 => "QAM64",
            Modulation::Qam16 => "QAM16",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mcs {
    pub name: Modulation,
    /// Lowest SNR at which this scheme is selected (inclusive).
    pub min_snr_db: f64,
}

impl Mcs {
    pub fn bits_per_symbol(&self) -> u32 {
        self.name.bits_per_symbol()
    }
}

/// MCS entries ordered from highest to lowest order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Mcs>", into = "Vec<Mcs>")]
pub struct McsTable(Vec<Mcs>);

impl McsTable {
    pub fn new(entries: Vec<Mcs>) -> Result<Self, MacError> {
        check_table(&entries)?;
        Ok(Self(entries))
    }

    pub fn entries(&self) -> &[Mcs] {
        &self.0
    }
}

impl Default for McsTable {
    fn default() -> Self {
        Self(vec![
            Mcs { name: Modulation::Qam64, min_snr_db: 18.0 },
            Mcs { name: Modulation::Qam16, min_snr_db: 8.0 },
        ])
    }
}

impl TryFrom<Vec<Mcs>> for McsTable {
    type Error = MacError;
    fn try_from(v: Vec<Mcs>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<McsTable> for Vec<Mcs> {
    fn from(t: McsTable) -> Self {
        t.0
    }
}

fn check_table(entries: &[Mcs]) -> Result<(), MacError> {
    if entries.is_empty() {
        return Err(MacError::EmptyTable);
    }
    if entries.windows(2).any(|w| w[0].min_snr_db.is_nan() || w[0].min_snr_db <= w[1].min_snr_db) {
        return Err(MacError::UnorderedTable);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    pub n_rb: u32,
    pub symbols_per_rb: u32,
    pub subframe_ms: u32,
    pub disconnect_snr_db: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            n_rb: 100,
            symbols_per_rb: 84,
            subframe_ms: 1,
            disconnect_snr_db: 0.0,
        }
    }
}

impl CellConfig {
    pub fn validate(&self) -> Result<(), MacError> {
        if self.n_rb == 0 {
            return Err(MacError::InvalidCell("n_rb must be > 0".into()));
        }
        if self.symbols_per_rb == 0 {
            return Err(MacError::InvalidCell("symbols_per_rb must be > 0".into()));
        }
        if self.subframe_ms != 1 {
            return Err(MacError::InvalidCell("subframe_ms is fixed at 1".into()));
        }
        if !self.disconnect_snr_db.is_finite() {
            return Err(MacError::InvalidCell("disconnect threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Outcome of link adaptation for one UE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum McsSelection {
    Active(Mcs),
    Disconnected,
}

impl McsSelection {
    pub fn is_connected(&self) -> bool {
        matches!(self, McsSelection::Active(_))
    }

    pub fn mcs(&self) -> Option<&Mcs> {
        match self {
            McsSelection::Active(m) => Some(m),
            McsSelection::Disconnected => None,
        }
    }
}

impl fmt::Display for McsSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            McsSelection::Active(m) => f.write_str(m.name.name()),
            McsSelection::Disconnected => f.write_str("DISCONNECTED"),
        }
    }
}

pub fn bits_per_rb(mcs: &Mcs, cell: &CellConfig) -> u64 {
    cell.symbols_per_rb as u64 * mcs.bits_per_symbol() as u64
}

/// Highest-order entry whose threshold is at or below `snr_db`. Below every
/// threshold but at or above the disconnect level the lowest-order entry is
/// used; below the disconnect level the link is dropped.
pub fn select_mcs(
    snr_db: f64,
    table: &[Mcs],
    disconnect_snr_db: f64,
) -> Result<McsSelection, MacError> {
    check_table(table)?;
    if snr_db < disconnect_snr_db || snr_db.is_nan() {
        return Ok(McsSelection::Disconnected);
    }
    let mcs = table
        .iter()
        .find(|m| snr_db >= m.min_snr_db)
        .unwrap_or_else(|| table.last().expect("table is non-empty"));
    Ok(McsSelection::Active(*mcs))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct UeId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SchedulerState {
    /// Position, within the connected UEs, that receives the first RB.
    pub rr_cursor: usize,
    /// Subframes scheduled with at least one connected UE.
    pub round: u64,
    connected: Vec<UeId>,
}

impl SchedulerState {
    pub fn new() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UeAllocation {
    pub ue: UeId,
    pub rb_count: u32,
    pub selection: McsSelection,
    pub bits_delivered: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SubframeAllocation {
    pub entries: Vec<UeAllocation>,
}

impl SubframeAllocation {
    pub fn get(&self, ue: UeId) -> Option<&UeAllocation> {
        self.entries.iter().find(|e| e.ue == ue)
    }

    pub fn total_rbs(&self) -> u32 {
        self.entries.iter().map(|e| e.rb_count).sum()
    }
}

/// Deal the cell's RBs one at a time over the connected UEs, starting at the
/// cursor. Disconnected UEs receive nothing.
pub fn schedule_subframe(
    state: &SchedulerState,
    active: &[(UeId, McsSelection)],
    cell: &CellConfig,
) -> (SubframeAllocation, SchedulerState) {
    let connected: Vec<UeId> = active
        .iter()
        .filter(|(_, s)| s.is_connected())
        .map(|(u, _)| *u)
        .collect();
    let k = connected.len();
    let mut next = state.clone();
    if connected != state.connected {
        next.rr_cursor = 0;
        next.connected = connected;
    }

    let n_rb = cell.n_rb as usize;
    let mut entries = Vec::with_capacity(active.len());
    let mut position = 0usize;
    for (ue, selection) in active {
        let rb_count = match selection {
            McsSelection::Active(_) => {
                // RBs dealt to connected position p: n/k plus one extra when p
                // falls within the first n mod k slots after the cursor.
                let offset = (position + k - next.rr_cursor) % k;
                position += 1;
                (n_rb / k + usize::from(offset < n_rb % k)) as u32
            }
            McsSelection::Disconnected => 0,
        };
        let bits_delivered = selection
            .mcs()
            .map_or(0, |m| rb_count as u64 * bits_per_rb(m, cell));
        entries.push(UeAllocation {
            ue: *ue,
            rb_count,
            selection: *selection,
            bits_delivered,
        });
    }
    if k > 0 {
        next.rr_cursor = (next.rr_cursor + n_rb) % k;
        next.round += 1;
    }
    (SubframeAllocation { entries }, next)
}

/// Stateful convenience wrapper around [`schedule_subframe`].
#[derive(Debug, Clone, Default)]
pub struct RoundRobinScheduler {
    state: SchedulerState,
}

impl RoundRobinScheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> &SchedulerState {
        &self.state
    }

    pub fn schedule(&mut self, active: &[(UeId, McsSelection)], cell: &CellConfig) -> SubframeAllocation {
        let (alloc, next) = schedule_subframe(&self.state, active, cell);
        self.state = next;
        alloc
    }
}

pub fn bits_to_mbps(bits: u64, window_s: f64) -> f64 {
    bits as f64 / (window_s * 1e6)
}

/// Mean throughput per UE over `window_s` seconds of allocations.
pub fn per_user_throughput(
    allocs: &[SubframeAllocation],
    window_s: f64,
    cell: &CellConfig,
) -> Result<BTreeMap<UeId, f64>, MacError> {
    if window_s.is_nan() || window_s * 1000.0 < cell.subframe_ms as f64 {
        return Err(MacError::WindowTooShort);
    }
    let mut bits: BTreeMap<UeId, u64> = BTreeMap::new();
    for alloc in allocs {
        for e in &alloc.entries {
            *bits.entry(e.ue).or_default() += e.bits_delivered;
        }
    }
    Ok(bits
        .into_iter()
        .map(|(ue, b)| (ue, bits_to_mbps(b, window_s)))
        .collect())
}
