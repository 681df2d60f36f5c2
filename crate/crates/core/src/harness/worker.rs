//! What a single worker does in one phase, and the child-process entry point.

use std::io::{BufRead, Write};
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::clock::RunClock;
use super::payload::{field_key, mix, PayloadSource};
use crate::fieldio::{FieldioMode, FieldioSession, IndexTopology};
use crate::instrument::{OpCounts, TracedStore};
use crate::object::{ContainerHandle, ContainerName, ErrorKind, ObjectId, ObjectStore, PoolHandle, PoolName};
use crate::posix::PosixStore;
use crate::record::{Phase, TimingRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Job {
    /// `iterations` field writes or reads of `object_size` bytes.
    Fieldio {
        mode: FieldioMode,
        dataset: String,
        iterations: u64,
        object_size: u64,
    },
    /// One array of `segment_count × segment_size` bytes.
    Segments { segment_count: u64, segment_size: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerTask {
    pub worker_id: u32,
    pub node_id: u32,
    pub phase: Phase,
    pub pool: String,
    pub seed: u64,
    pub job: Job,
    /// Store root, for workers that open the store themselves.
    pub root: Option<PathBuf>,
    pub epoch_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerOutcome {
    pub record: TimingRecord,
    pub ops: OpCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerFailure {
    pub worker_id: u32,
    pub detail: String,
}

impl std::fmt::Display for WorkerFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "worker {}: {}", self.worker_id, self.detail)
    }
}

/// `OPS worker=<id> phase=<c> array=<n> puts=<n> gets=<n> exists=<n> creates=<n> pools=<n>`
pub fn ops_line(worker_id: u32, phase: Phase, ops: &OpCounts) -> String {
    format!(
        "OPS worker={worker_id} phase={} array={} puts={} gets={} exists={} creates={} pools={}",
        phase.code(),
        ops.array_ops,
        ops.kv_puts,
        ops.kv_gets,
        ops.existence_checks,
        ops.container_creations,
        ops.pool_ops
    )
}

pub fn parse_ops_line(line: &str) -> Result<(u32, Phase, OpCounts), String> {
    let mut fields = line.split_ascii_whitespace();
    if fields.next() != Some("OPS") {
        return Err(format!("not an OPS line: {line:?}"));
    }
    let mut values = Vec::new();
    for name in ["worker", "phase", "array", "puts", "gets", "exists", "creates", "pools"] {
        let v = fields
            .next()
            .and_then(|f| f.strip_prefix(name))
            .and_then(|f| f.strip_prefix('='))
            .ok_or_else(|| format!("expected {name}= in {line:?}"))?;
        values.push(v);
    }
    let num = |i: usize| values[i].parse::<u64>().map_err(|_| format!("bad number in {line:?}"));
    let phase = Phase::from_code(values[1]).ok_or_else(|| format!("bad phase in {line:?}"))?;
    let worker = values[0].parse().map_err(|_| format!("bad worker in {line:?}"))?;
    Ok((
        worker,
        phase,
        OpCounts {
            array_ops: num(2)?,
            kv_puts: num(3)?,
            kv_gets: num(4)?,
            existence_checks: num(5)?,
            container_creations: num(6)?,
            pool_ops: num(7)?,
        },
    ))
}

/// Container holding a segments-mode worker's object.
pub fn segments_container(worker_id: u32) -> ContainerName {
    ContainerName::new(format!("seg.w{worker_id}")).expect("valid container name")
}

pub fn segments_oid(worker_id: u32) -> ObjectId {
    ObjectId::from_raw(u128::from(worker_id) + 1)
}

/// Deterministic content of one segment.
pub fn fill_segment(seed: u64, worker_id: u32, index: u64, buf: &mut [u8]) {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, u64::from(worker_id)), index)).fill_bytes(buf);
}

/// CRC-32 of a worker's full segments object, generated piecewise.
pub fn segments_checksum(seed: u64, worker_id: u32, segment_count: u64, segment_size: u64) -> u32 {
    let mut buf = vec![0u8; segment_size as usize];
    let mut hasher = crc32fast::Hasher::new();
    for s in 0..segment_count {
        fill_segment(seed, worker_id, s, &mut buf);
        hasher.update(&buf);
    }
    hasher.finalize()
}

fn ensure_container(store: &dyn ObjectStore, pool: &PoolHandle, name: &ContainerName) -> Result<ContainerHandle, String> {
    match store.container_create(pool, name) {
        Ok(h) => Ok(h),
        Err(e) if e.is(ErrorKind::AlreadyExists) => store.container_open(pool, name).map_err(|e| e.to_string()),
        Err(e) => Err(e.to_string()),
    }
}

/// Runs one worker phase against `store`.
///
/// Setup happens first; then `wait_start` blocks until the phase is
/// released. The start timestamp is taken after it returns.
pub fn execute(
    store: &dyn ObjectStore,
    task: &WorkerTask,
    clock: RunClock,
    wait_start: impl FnOnce() -> Result<(), String>,
) -> Result<WorkerOutcome, WorkerFailure> {
    let fail = |detail: String| WorkerFailure {
        worker_id: task.worker_id,
        detail,
    };
    let traced = TracedStore::new(store);
    let pool_name = PoolName::new(task.pool.as_str()).map_err(|e| fail(e.to_string()))?;
    let pool = traced.pool_connect(&pool_name).map_err(|e| fail(e.to_string()))?;

    let (start, end, bytes, ops) = match &task.job {
        Job::Fieldio {
            mode,
            dataset,
            iterations,
            object_size,
        } => {
            let mut session = FieldioSession::open(&traced, &pool, IndexTopology::new(*mode), task.worker_id, task.node_id)
                .map_err(|e| fail(e.to_string()))?;
            let source = PayloadSource::new(task.seed, dataset, task.worker_id, *object_size);
            let mut buf = Vec::with_capacity(source.size());
            wait_start().map_err(fail)?;
            let start = clock.now();
            for i in 0..*iterations {
                let key = field_key(task.seed, dataset, task.worker_id, i);
                match task.phase {
                    Phase::Write | Phase::Populate => {
                        source.fill(&key, i, &mut buf);
                        session.field_write(&key, &buf).map_err(|e| fail(e.to_string()))?;
                    }
                    Phase::Read => {
                        let data = session.field_read(&key).map_err(|e| fail(e.to_string()))?;
                        source
                            .validate(&key, i, &data)
                            .map_err(|why| fail(format!("{}: {why}", ErrorKind::Corrupt)))?;
                    }
                }
            }
            let end = clock.now();
            (start, end, iterations * object_size, *iterations)
        }
        Job::Segments {
            segment_count,
            segment_size,
        } => {
            let cont = ensure_container(&traced, &pool, &segments_container(task.worker_id)).map_err(fail)?;
            let oid = segments_oid(task.worker_id);
            let total = segment_count * segment_size;
            match task.phase {
                Phase::Write | Phase::Populate => {
                    // Assemble every segment up front, then commit in one call.
                    let mut staging = vec![0u8; total as usize];
                    for (s, chunk) in staging.chunks_mut(*segment_size as usize).enumerate() {
                        fill_segment(task.seed, task.worker_id, s as u64, chunk);
                    }
                    wait_start().map_err(fail)?;
                    let start = clock.now();
                    traced.array_write(&cont, oid, &staging).map_err(|e| fail(e.to_string()))?;
                    let end = clock.now();
                    (start, end, total, 1)
                }
                Phase::Read => {
                    let expected = segments_checksum(task.seed, task.worker_id, *segment_count, *segment_size);
                    wait_start().map_err(fail)?;
                    let start = clock.now();
                    let data = traced.array_read(&cont, oid).map_err(|e| fail(e.to_string()))?;
                    let end = clock.now();
                    if data.len() as u64 != total || crc32fast::hash(&data) != expected {
                        return Err(fail(format!(
                            "{}: segments object of {} bytes fails its checksum",
                            ErrorKind::Corrupt,
                            data.len()
                        )));
                    }
                    (start, end, total, 1)
                }
            }
        }
    };

    Ok(WorkerOutcome {
        record: TimingRecord {
            worker_id: task.worker_id,
            phase: task.phase,
            start,
            end,
            bytes,
            ops,
        },
        ops: traced.counts(),
    })
}

/// Entry point of a worker child process. Speaks a line protocol on
/// stdin/stdout: prints `READY` after setup, waits for `GO`, runs, then
/// prints its `REC` and `OPS` lines. Returns the process exit code.
pub fn process_main(task_json: &str) -> i32 {
    let task: WorkerTask = match serde_json::from_str(task_json) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("worker: bad task description: {e}");
            return 2;
        }
    };
    let Some(root) = task.root.clone() else {
        eprintln!("worker {}: no store root given", task.worker_id);
        return 2;
    };
    let store = match PosixStore::open(root) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("worker {}: {e}", task.worker_id);
            return 1;
        }
    };
    let clock = RunClock::from_epoch(task.epoch_ns);
    let wait = || {
        let mut out = std::io::stdout().lock();
        writeln!(out, "READY").and_then(|_| out.flush()).map_err(|e| e.to_string())?;
        drop(out);
        let mut line = String::new();
        std::io::stdin().lock().read_line(&mut line).map_err(|e| e.to_string())?;
        match line.trim() {
            "GO" => Ok(()),
            other => Err(format!("expected GO from orchestrator, got {other:?}")),
        }
    };
    match execute(&store, &task, clock, wait) {
        Ok(outcome) => {
            println!("{}", outcome.record.to_line());
            println!("{}", ops_line(task.worker_id, task.phase, &outcome.ops));
            0
        }
        Err(failure) => {
            eprintln!("{failure}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ops_line_round_trip() {
        let ops = OpCounts {
            array_ops: 100,
            kv_puts: 101,
            kv_gets: 0,
            existence_checks: 103,
            container_creations: 3,
            pool_ops: 1,
        };
        let line = ops_line(7, Phase::Write, &ops);
        assert_eq!(
            line,
            "OPS worker=7 phase=w array=100 puts=101 gets=0 exists=103 creates=3 pools=1"
        );
        assert_eq!(parse_ops_line(&line).unwrap(), (7, Phase::Write, ops));
        assert!(parse_ops_line("OPS worker=1").is_err());
    }

    #[test]
    fn segments_checksum_matches_assembled_buffer() {
        let mut staging = vec![0u8; 4 * 1000];
        for (s, chunk) in staging.chunks_mut(1000).enumerate() {
            fill_segment(9, 2, s as u64, chunk);
        }
        assert_eq!(crc32fast::hash(&staging), segments_checksum(9, 2, 4, 1000));
    }

    #[test]
    fn task_json_round_trip() {
        let task = WorkerTask {
            worker_id: 1,
            node_id: 0,
            phase: Phase::Read,
            pool: "p".into(),
            seed: 3,
            job: Job::Fieldio {
                mode: FieldioMode::NoContainers,
                dataset: "a".into(),
                iterations: 2,
                object_size: 10,
            },
            root: Some("/tmp/x".into()),
            epoch_ns: 5,
        };
        let text = serde_json::to_string(&task).unwrap();
        assert_eq!(serde_json::from_str::<WorkerTask>(&text).unwrap(), task);
    }
}
