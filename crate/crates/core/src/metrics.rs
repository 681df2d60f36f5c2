//! Bandwidth metrics over collected timing records.
//!
//! * synchronous bandwidth: `Σ bytes / (max end − barrier release)`, for
//!   phases where all workers are released together;
//! * global timing bandwidth: `Σ bytes / (max end − min start)`, the span of
//!   the union of all worker intervals, for unsynchronised workers.
//!
//! Everything is in bytes and seconds; unit conversion happens only at
//! presentation time.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::record::{Phase, TimingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "synchronous")]
    Synchronous,
    #[serde(rename = "global_timing")]
    GlobalTiming,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Synchronous => "synchronous",
            Metric::GlobalTiming => "global_timing",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "synchronous" => Ok(Metric::Synchronous),
            "global_timing" => Ok(Metric::GlobalTiming),
            other => Err(format!("unknown metric {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("no input records")]
    EmptyInput,
    #[error("records span more than one phase")]
    MixedPhases,
    #[error("a record starts before the barrier release")]
    StartBeforeRelease,
    #[error("zero-length time window with non-zero bytes")]
    DegenerateWindow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandwidthResult {
    pub metric: Metric,
    pub phase: Phase,
    pub bytes_total: u64,
    pub wall_seconds: f64,
    /// Bytes per second.
    pub bandwidth: f64,
}

fn single_phase(records: &[TimingRecord]) -> Result<Phase, MetricsError> {
    let first = records.first().ok_or(MetricsError::EmptyInput)?.phase;
    if records.iter().any(|r| r.phase != first) {
        return Err(MetricsError::MixedPhases);
    }
    Ok(first)
}

fn result(metric: Metric, phase: Phase, bytes_total: u64, wall_seconds: f64) -> Result<BandwidthResult, MetricsError> {
    let bandwidth = if wall_seconds > 0.0 {
        bytes_total as f64 / wall_seconds
    } else if bytes_total == 0 {
        0.0
    } else {
        return Err(MetricsError::DegenerateWindow);
    };
    Ok(BandwidthResult {
        metric,
        phase,
        bytes_total,
        wall_seconds,
        bandwidth,
    })
}

fn max_end(records: &[TimingRecord]) -> f64 {
    records.iter().map(|r| r.end).fold(f64::NEG_INFINITY, f64::max)
}

pub fn synchronous_bandwidth(records: &[TimingRecord], release: f64) -> Result<BandwidthResult, MetricsError> {
    let phase = single_phase(records)?;
    if records.iter().any(|r| r.start < release) {
        return Err(MetricsError::StartBeforeRelease);
    }
    let bytes: u64 = records.iter().map(|r| r.bytes).sum();
    result(Metric::Synchronous, phase, bytes, max_end(records) - release)
}

pub fn global_timing_bandwidth(records: &[TimingRecord]) -> Result<BandwidthResult, MetricsError> {
    let phase = single_phase(records)?;
    let bytes: u64 = records.iter().map(|r| r.bytes).sum();
    let min_start = records.iter().map(|r| r.start).fold(f64::INFINITY, f64::min);
    result(Metric::GlobalTiming, phase, bytes, max_end(records) - min_start)
}

/// Both metrics for every phase that has records and a release time.
pub fn phase_bandwidths(
    records: &[TimingRecord],
    releases: &[(Phase, f64)],
) -> Result<Vec<BandwidthResult>, MetricsError> {
    let mut by_phase: BTreeMap<Phase, Vec<TimingRecord>> = BTreeMap::new();
    for r in records {
        by_phase.entry(r.phase).or_default().push(r.clone());
    }
    let mut out = Vec::new();
    for (phase, recs) in by_phase {
        if let Some(&(_, release)) = releases.iter().find(|(p, _)| *p == phase) {
            out.push(synchronous_bandwidth(&recs, release)?);
        }
        out.push(global_timing_bandwidth(&recs)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub values: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate(values: &[f64]) -> Result<AggregateResult, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Rounding can put the mean of equal values a hair outside [min, max].
    Ok(AggregateResult {
        values: values.to_vec(),
        mean: mean.clamp(min, max),
        min,
        max,
    })
}

/// One configuration's result at one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub point: u64,
    pub workers: u32,
    pub mean: f64,
}

/// Per sweep point, the candidate with the highest mean; ties go to the
/// smaller worker count. Output is ordered by point.
pub fn best_of(candidates: &[Candidate]) -> Result<Vec<Candidate>, MetricsError> {
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut best: BTreeMap<u64, &Candidate> = BTreeMap::new();
    for c in candidates {
        best.entry(c.point)
            .and_modify(|cur| {
                if c.mean > cur.mean || (c.mean == cur.mean && c.workers < cur.workers) {
                    *cur = c;
                }
            })
            .or_insert(c);
    }
    Ok(best.into_values().cloned().collect())
}

pub fn mib_per_sec(bytes_per_sec: f64) -> f64 {
    bytes_per_sec / (1u64 << 20) as f64
}

pub fn gib_per_sec(bytes_per_sec: f64) -> f64 {
    bytes_per_sec / (1u64 << 30) as f64
}
