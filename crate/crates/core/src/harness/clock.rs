//! Monotonic clock shared by the orchestrator and its worker processes.
//!
//! `CLOCK_MONOTONIC` is system-wide, so timestamps taken in different
//! processes on one host are directly comparable.

use serde::{Deserialize, Serialize};

pub fn monotonic_ns() -> u64 {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_MONOTONIC, &mut ts) };
    assert_eq!(rc, 0, "clock_gettime(CLOCK_MONOTONIC) failed");
    ts.tv_sec as u64 * 1_000_000_000 + ts.tv_nsec as u64
}

/// Seconds elapsed since a fixed run epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunClock {
    epoch_ns: u64,
}

impl RunClock {
    pub fn start() -> Self {
        Self { epoch_ns: monotonic_ns() }
    }

    pub fn from_epoch(epoch_ns: u64) -> Self {
        Self { epoch_ns }
    }

    pub fn epoch_ns(&self) -> u64 {
        self.epoch_ns
    }

    pub fn now(&self) -> f64 {
        monotonic_ns().saturating_sub(self.epoch_ns) as f64 * 1e-9
    }
}
