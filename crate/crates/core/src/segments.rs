//! Segments mode: one large array per worker, written and read in a single
//! store call each.

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::harness::clock::RunClock;
use crate::harness::config::{validate_backend, BackendKind, ConfigInvalid, Launcher, MIB};
use crate::harness::worker::{Job, WorkerTask};
use crate::harness::{open_store, remove_stale_pool, run_phase, HarnessError};
use crate::object::{ObjectStore, PoolName};
use crate::record::Phase;
use crate::report::{PhaseRelease, RunLabel, RunReport, WorkerOps};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentsConfig {
    pub segment_count: u64,
    pub segment_size: u64,
    pub workers: u32,
    pub repetitions: u32,
    pub backend: BackendKind,
    pub root: Option<PathBuf>,
    pub seed: u64,
    pub launcher: Launcher,
    pub barrier_timeout: Duration,
    pub keep_data: bool,
}

impl Default for SegmentsConfig {
    fn default() -> Self {
        Self {
            segment_count: 100,
            segment_size: MIB,
            workers: 2,
            repetitions: 5,
            backend: BackendKind::Posix,
            root: None,
            seed: 0,
            launcher: Launcher::Threads,
            barrier_timeout: Duration::from_secs(60),
            keep_data: false,
        }
    }
}

impl SegmentsConfig {
    pub fn object_size(&self) -> Option<u64> {
        self.segment_count.checked_mul(self.segment_size)
    }

    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        if self.segment_count == 0 || self.workers == 0 || self.repetitions == 0 {
            return Err(ConfigInvalid("segment-count, workers and reps must all be at least 1".into()));
        }
        match self.object_size() {
            Some(n) if n <= crate::object::MAX_ARRAY_LEN as u64 => {}
            _ => return Err(ConfigInvalid("segment-count × segment-size exceeds the 1 GiB array limit".into())),
        }
        validate_backend(self.backend, self.root.as_ref(), &self.launcher)
    }

    pub fn label(&self) -> RunLabel {
        RunLabel {
            pattern: "segments".into(),
            mode: "segments".into(),
            backend: self.backend.as_str().into(),
            object_size_bytes: self.object_size().unwrap_or(0),
            nodes: 1,
            workers_per_node: self.workers,
            iterations: 1,
        }
    }
}

pub fn pool_name(repetition: u32) -> PoolName {
    PoolName::new(format!("segments-rep{repetition}")).expect("valid pool name")
}

pub fn run_segments(config: &SegmentsConfig) -> Result<Vec<RunReport>, HarnessError> {
    config.validate()?;
    let store = open_store(config.backend, config.root.as_deref())?;
    run_segments_on(store.as_ref(), config)
}

pub fn run_segments_on(store: &dyn ObjectStore, config: &SegmentsConfig) -> Result<Vec<RunReport>, HarnessError> {
    config.validate()?;
    let clock = RunClock::start();
    let mut reports = Vec::new();
    for repetition in 0..config.repetitions {
        let pool = pool_name(repetition);
        remove_stale_pool(store, &pool)?;
        store.pool_create(&pool)?;
        let mut report = RunReport::new(config.label(), repetition);
        let result = (|| {
            for phase in [Phase::Write, Phase::Read] {
                let tasks: Vec<_> = (0..config.workers)
                    .map(|w| WorkerTask {
                        worker_id: w,
                        node_id: 0,
                        phase,
                        pool: pool.to_string(),
                        seed: config.seed,
                        job: Job::Segments {
                            segment_count: config.segment_count,
                            segment_size: config.segment_size,
                        },
                        root: config.root.clone(),
                        epoch_ns: clock.epoch_ns(),
                    })
                    .collect();
                let out = run_phase(store, &config.launcher, &tasks, clock, config.barrier_timeout)?;
                report.releases.push(PhaseRelease {
                    phase,
                    release: out.release,
                });
                for o in out.outcomes {
                    report.worker_ops.push(WorkerOps {
                        worker_id: o.record.worker_id,
                        phase,
                        counts: o.ops,
                    });
                    report.records.push(o.record);
                }
            }
            Ok::<_, HarnessError>(())
        })();
        if !(config.keep_data && repetition + 1 == config.repetitions) {
            store.pool_destroy(&pool)?;
        }
        result?;
        report.records.sort_by_key(|r| (r.phase, r.worker_id));
        report.worker_ops.sort_by_key(|w| (w.phase, w.worker_id));
        report.compute_bandwidths()?;
        reports.push(report);
    }
    Ok(reports)
}

/// Checks that every worker issued exactly one array operation per phase.
pub fn audit_single_array_op(report: &RunReport) -> Result<(), String> {
    let bad: Vec<String> = report
        .worker_ops
        .iter()
        .filter(|w| w.counts.array_ops != 1)
        .map(|w| format!("worker {} {}: {} array ops", w.worker_id, w.phase, w.counts.array_ops))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(bad.join("; "))
    }
}
