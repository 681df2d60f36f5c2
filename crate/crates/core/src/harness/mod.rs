//! Multi-worker benchmark orchestration.

pub mod barrier;
pub mod clock;
pub mod config;
pub mod payload;
pub mod worker;

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::{mpsc, Arc};
use std::time::{Duration, Instant};

use barrier::{BarrierError, StartBarrier};
use clock::RunClock;
use config::{BackendKind, BenchmarkConfig, ConfigInvalid, Launcher, Pattern};
use worker::{execute, Job, WorkerFailure, WorkerOutcome, WorkerTask};

use crate::memory::MemoryStore;
use crate::metrics::MetricsError;
use crate::object::{ErrorKind, ObjectStore, PoolName, StoreError};
use crate::posix::PosixStore;
use crate::record::{Phase, TimingRecord};
use crate::report::{PhaseRelease, RunLabel, RunReport, WorkerOps};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigInvalid),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error(transparent)]
    Barrier(#[from] BarrierError),
    #[error("{} of {expected} workers failed in the {phase} phase ({} records collected): {}",
        failures.len(), completed.len(), failures.iter().map(|f| f.to_string()).collect::<Vec<_>>().join("; "))]
    Workers {
        phase: String,
        expected: usize,
        failures: Vec<WorkerFailure>,
        completed: Vec<TimingRecord>,
    },
    #[error("could not start worker: {0}")]
    Spawn(String),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
}

/// Opens the configured backend. The posix root gets its sentinel if needed.
pub fn open_store(backend: BackendKind, root: Option<&Path>) -> Result<Arc<dyn ObjectStore>, HarnessError> {
    match backend {
        BackendKind::Memory => Ok(Arc::new(MemoryStore::new())),
        BackendKind::Posix => {
            let root = root.ok_or_else(|| ConfigInvalid("the posix backend needs a root directory".into()))?;
            Ok(Arc::new(PosixStore::init(root)?))
        }
    }
}

/// Results of one barriered phase.
#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub release: f64,
    pub outcomes: Vec<WorkerOutcome>,
}

/// Runs every task concurrently, all released by one barrier.
pub fn run_phase(
    store: &dyn ObjectStore,
    launcher: &Launcher,
    tasks: &[WorkerTask],
    clock: RunClock,
    timeout: Duration,
) -> Result<PhaseOutcome, HarnessError> {
    match launcher {
        Launcher::Threads => run_threads(store, tasks, clock, timeout),
        Launcher::Processes { exe } => run_processes(exe, tasks, clock, timeout),
    }
}

fn phase_name(tasks: &[WorkerTask]) -> String {
    let mut names: Vec<&str> = tasks.iter().map(|t| t.phase.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    names.join("+")
}

fn collect(
    tasks: &[WorkerTask],
    results: Vec<Result<WorkerOutcome, WorkerFailure>>,
    release: Option<f64>,
) -> Result<PhaseOutcome, HarnessError> {
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(f) => failures.push(f),
        }
    }
    match release {
        Some(release) if failures.is_empty() => Ok(PhaseOutcome { release, outcomes }),
        _ => {
            if failures.is_empty() {
                failures.push(WorkerFailure {
                    worker_id: u32::MAX,
                    detail: "phase was never released".into(),
                });
            }
            Err(HarnessError::Workers {
                phase: phase_name(tasks),
                expected: tasks.len(),
                failures,
                completed: outcomes.into_iter().map(|o| o.record).collect(),
            })
        }
    }
}

fn run_threads(
    store: &dyn ObjectStore,
    tasks: &[WorkerTask],
    clock: RunClock,
    timeout: Duration,
) -> Result<PhaseOutcome, HarnessError> {
    let barrier = StartBarrier::new(tasks.len(), timeout, clock);
    let results = std::thread::scope(|s| {
        let handles: Vec<_> = tasks
            .iter()
            .map(|task| {
                let barrier = &barrier;
                let handle = std::thread::Builder::new()
                    .name(format!("worker-{}", task.worker_id))
                    .spawn_scoped(s, move || {
                        let r = execute(store, task, clock, || {
                            barrier.wait().map(|_| ()).map_err(|e| e.to_string())
                        });
                        if let Err(f) = &r {
                            barrier.abort(f.to_string());
                        }
                        r
                    });
                (task.worker_id, handle)
            })
            .collect();
        handles
            .into_iter()
            .map(|(id, h)| match h {
                Ok(h) => h.join().unwrap_or_else(|_| {
                    barrier.abort(format!("worker {id} panicked"));
                    Err(WorkerFailure {
                        worker_id: id,
                        detail: "panicked".into(),
                    })
                }),
                Err(e) => {
                    barrier.abort(format!("worker {id} could not start"));
                    Err(WorkerFailure {
                        worker_id: id,
                        detail: format!("thread spawn failed: {e}"),
                    })
                }
            })
            .collect::<Vec<_>>()
    });
    collect(tasks, results, barrier.release_time())
}

enum ChildEvent {
    Line(usize, String),
    Eof(usize),
}

struct Proc {
    child: Child,
    stderr: Option<std::thread::JoinHandle<String>>,
    ready: bool,
    done: bool,
    lines: Vec<String>,
}

fn kill_all(procs: &mut [Proc]) {
    for p in procs.iter_mut() {
        let _ = p.child.kill();
        let _ = p.child.wait();
    }
}

fn run_processes(exe: &Path, tasks: &[WorkerTask], clock: RunClock, timeout: Duration) -> Result<PhaseOutcome, HarnessError> {
    let (tx, rx) = mpsc::channel();
    let mut procs: Vec<Proc> = Vec::with_capacity(tasks.len());
    for (i, task) in tasks.iter().enumerate() {
        let json = serde_json::to_string(task).expect("task serializes");
        let spawned = Command::new(exe)
            .args(["worker", "--task", &json])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn();
        let mut child = match spawned {
            Ok(c) => c,
            Err(e) => {
                kill_all(&mut procs);
                return Err(HarnessError::Spawn(format!("{}: {e}", exe.display())));
            }
        };
        let stdout = child.stdout.take().expect("piped stdout");
        let tx = tx.clone();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                match line {
                    Ok(l) => {
                        if tx.send(ChildEvent::Line(i, l)).is_err() {
                            return;
                        }
                    }
                    Err(_) => break,
                }
            }
            let _ = tx.send(ChildEvent::Eof(i));
        });
        let mut stderr = child.stderr.take().expect("piped stderr");
        let stderr = std::thread::spawn(move || {
            let mut text = String::new();
            let _ = stderr.read_to_string(&mut text);
            text
        });
        procs.push(Proc {
            child,
            stderr: Some(stderr),
            ready: false,
            done: false,
            lines: Vec::new(),
        });
    }
    drop(tx);

    let deadline = Instant::now() + timeout;
    let mut ready = 0;
    let mut early_exit = false;
    while ready < procs.len() && !early_exit {
        let left = deadline.saturating_duration_since(Instant::now());
        match rx.recv_timeout(left) {
            Ok(ChildEvent::Line(i, l)) if l.trim() == "READY" && !procs[i].ready => {
                procs[i].ready = true;
                ready += 1;
            }
            Ok(ChildEvent::Line(i, l)) => procs[i].lines.push(l),
            Ok(ChildEvent::Eof(i)) => {
                procs[i].done = true;
                early_exit = true;
            }
            Err(_) => break,
        }
    }
    let release = if ready == procs.len() {
        let t = clock.now();
        for p in procs.iter_mut() {
            let stdin = p.child.stdin.as_mut().expect("piped stdin");
            // A worker that died already shows up as a failure below.
            let _ = stdin.write_all(b"GO\n").and_then(|_| stdin.flush());
        }
        Some(t)
    } else {
        for p in procs.iter_mut().filter(|p| !p.done) {
            let _ = p.child.kill();
        }
        None
    };
    for p in procs.iter_mut() {
        p.child.stdin.take();
    }
    for event in rx {
        match event {
            ChildEvent::Line(i, l) => procs[i].lines.push(l),
            ChildEvent::Eof(i) => procs[i].done = true,
        }
    }

    let mut results = Vec::with_capacity(procs.len());
    for (task, p) in tasks.iter().zip(procs.iter_mut()) {
        let status = p.child.wait();
        let stderr = p.stderr.take().and_then(|h| h.join().ok()).unwrap_or_default();
        let fail = |detail: String| {
            Err(WorkerFailure {
                worker_id: task.worker_id,
                detail,
            })
        };
        let result = match status {
            Err(e) => fail(format!("wait failed: {e}")),
            Ok(s) if !s.success() => {
                let why = stderr.trim();
                let why = if why.is_empty() {
                    if release.is_none() && p.ready {
                        "stopped because another worker failed before release".to_owned()
                    } else if release.is_none() && !p.done {
                        format!("did not report READY within {timeout:?}")
                    } else {
                        format!("exited with {s}")
                    }
                } else {
                    why.to_owned()
                };
                fail(why)
            }
            Ok(_) => parse_child_output(task, &p.lines),
        };
        results.push(result);
    }
    collect(tasks, results, release)
}

fn parse_child_output(task: &WorkerTask, lines: &[String]) -> Result<WorkerOutcome, WorkerFailure> {
    let fail = |detail: String| WorkerFailure {
        worker_id: task.worker_id,
        detail,
    };
    let rec = lines
        .iter()
        .find(|l| l.starts_with("REC "))
        .ok_or_else(|| fail("no REC line in worker output".into()))?;
    let ops = lines
        .iter()
        .find(|l| l.starts_with("OPS "))
        .ok_or_else(|| fail("no OPS line in worker output".into()))?;
    let record = TimingRecord::parse_line(rec).map_err(fail)?;
    let (_, _, ops) = worker::parse_ops_line(ops).map_err(fail)?;
    if record.worker_id != task.worker_id || record.phase != task.phase {
        return Err(fail(format!("report {rec:?} does not match the task")));
    }
    Ok(WorkerOutcome { record, ops })
}

/// Worker ids of one node: `node * workers_per_node ..`.
fn node_workers(config: &BenchmarkConfig, nodes: std::ops::Range<u32>) -> Vec<(u32, u32)> {
    nodes
        .flat_map(|n| (0..config.workers_per_node).map(move |l| (n * config.workers_per_node + l, n)))
        .collect()
}

pub fn pool_name(config: &BenchmarkConfig, repetition: u32) -> PoolName {
    PoolName::new(format!("fieldio-{}-rep{repetition}", config.pattern)).expect("valid pool name")
}

pub fn run_label(config: &BenchmarkConfig) -> RunLabel {
    RunLabel {
        pattern: config.pattern.as_str().to_owned(),
        mode: config.mode.as_str().to_owned(),
        backend: config.backend.as_str().to_owned(),
        object_size_bytes: config.object_size,
        nodes: config.nodes,
        workers_per_node: config.workers_per_node,
        iterations: config.iterations,
    }
}

/// Removes `pool` if a previous run left it behind.
pub fn remove_stale_pool(store: &dyn ObjectStore, pool: &PoolName) -> Result<(), StoreError> {
    match store.pool_destroy(pool) {
        Err(e) if !e.is(ErrorKind::PoolNotFound) => Err(e),
        _ => Ok(()),
    }
}

struct Runner<'a> {
    store: &'a dyn ObjectStore,
    config: &'a BenchmarkConfig,
    launcher: Launcher,
    root: Option<PathBuf>,
    clock: RunClock,
}

impl Runner<'_> {
    fn task(&self, pool: &PoolName, worker_id: u32, node_id: u32, phase: Phase, dataset: &str) -> WorkerTask {
        WorkerTask {
            worker_id,
            node_id,
            phase,
            pool: pool.to_string(),
            seed: self.config.seed,
            job: Job::Fieldio {
                mode: self.config.mode,
                dataset: dataset.to_owned(),
                iterations: self.config.iterations,
                object_size: self.config.object_size,
            },
            root: self.root.clone(),
            epoch_ns: self.clock.epoch_ns(),
        }
    }

    fn phase(&self, tasks: &[WorkerTask], report: &mut RunReport, phases: &[Phase]) -> Result<(), HarnessError> {
        let out = run_phase(self.store, &self.launcher, tasks, self.clock, self.config.barrier_timeout)?;
        for &phase in phases {
            report.releases.push(PhaseRelease {
                phase,
                release: out.release,
            });
        }
        for o in out.outcomes {
            report.worker_ops.push(WorkerOps {
                worker_id: o.record.worker_id,
                phase: o.record.phase,
                counts: o.ops,
            });
            report.records.push(o.record);
        }
        Ok(())
    }

    fn repetition(&self, repetition: u32) -> Result<RunReport, HarnessError> {
        let pool = pool_name(self.config, repetition);
        remove_stale_pool(self.store, &pool)?;
        self.store.pool_create(&pool)?;
        let mut report = RunReport::new(run_label(self.config), repetition);
        let result = match self.config.pattern {
            Pattern::A => self.pattern_a(&pool, &mut report),
            Pattern::B => self.pattern_b(&pool, &mut report),
        };
        let keep = self.config.keep_data && repetition + 1 == self.config.repetitions;
        if !keep {
            self.store.pool_destroy(&pool)?;
        }
        result?;
        report.records.sort_by_key(|r| (r.phase, r.worker_id));
        report.worker_ops.sort_by_key(|w| (w.phase, w.worker_id));
        report.compute_bandwidths()?;
        Ok(report)
    }

    fn pattern_a(&self, pool: &PoolName, report: &mut RunReport) -> Result<(), HarnessError> {
        let workers = node_workers(self.config, 0..self.config.nodes);
        let writes: Vec<_> = workers.iter().map(|&(w, n)| self.task(pool, w, n, Phase::Write, "a")).collect();
        self.phase(&writes, report, &[Phase::Write])?;
        let reads: Vec<_> = workers.iter().map(|&(w, n)| self.task(pool, w, n, Phase::Read, "a")).collect();
        self.phase(&reads, report, &[Phase::Read])
    }

    fn pattern_b(&self, pool: &PoolName, report: &mut RunReport) -> Result<(), HarnessError> {
        let half = self.config.nodes / 2;
        let writers = node_workers(self.config, 0..half);
        let readers = node_workers(self.config, half..self.config.nodes);
        // Readers' data is written beforehand under their own identities.
        let populate: Vec<_> = readers
            .iter()
            .map(|&(w, n)| self.task(pool, w, n, Phase::Populate, "pre"))
            .collect();
        self.phase(&populate, report, &[Phase::Populate])?;
        let mixed: Vec<_> = writers
            .iter()
            .map(|&(w, n)| self.task(pool, w, n, Phase::Write, "new"))
            .chain(readers.iter().map(|&(w, n)| self.task(pool, w, n, Phase::Read, "pre")))
            .collect();
        self.phase(&mixed, report, &[Phase::Write, Phase::Read])
    }
}

/// Runs every repetition of `config` against `store`.
pub fn run_pattern_on(store: &dyn ObjectStore, config: &BenchmarkConfig) -> Result<Vec<RunReport>, HarnessError> {
    config.validate()?;
    let runner = Runner {
        store,
        config,
        launcher: config.launcher.clone(),
        root: config.root.clone(),
        clock: RunClock::start(),
    };
    (0..config.repetitions).map(|r| runner.repetition(r)).collect()
}

/// Opens the configured backend and runs every repetition.
pub fn run_pattern(config: &BenchmarkConfig) -> Result<Vec<RunReport>, HarnessError> {
    config.validate()?;
    let store = open_store(config.backend, config.root.as_deref())?;
    run_pattern_on(store.as_ref(), config)
}

pub fn run_pattern_a(config: &BenchmarkConfig) -> Result<Vec<RunReport>, HarnessError> {
    if config.pattern != Pattern::A {
        return Err(ConfigInvalid("run_pattern_a called with a pattern b config".into()).into());
    }
    run_pattern(config)
}

pub fn run_pattern_b(config: &BenchmarkConfig) -> Result<Vec<RunReport>, HarnessError> {
    if config.pattern != Pattern::B {
        return Err(ConfigInvalid("run_pattern_b called with a pattern a config".into()).into());
    }
    run_pattern(config)
}

#[cfg(test)]
mod tests {
    use super::config::MIB;
    use super::*;
    use crate::fieldio::FieldioMode;

    fn memory_config(pattern: Pattern) -> BenchmarkConfig {
        BenchmarkConfig {
            pattern,
            backend: BackendKind::Memory,
            nodes: 2,
            workers_per_node: 2,
            iterations: 10,
            object_size: 64 * 1024,
            repetitions: 2,
            seed: 7,
            ..Default::default()
        }
    }

    #[test]
    fn pattern_a_records_and_separation() {
        let reports = run_pattern(&memory_config(Pattern::A)).unwrap();
        assert_eq!(reports.len(), 2);
        for r in &reports {
            assert_eq!(r.records.len(), 8);
            let writes = r.phase_records(Phase::Write);
            let reads = r.phase_records(Phase::Read);
            assert_eq!(writes.len(), 4);
            assert!(writes.iter().all(|w| w.bytes == 10 * 64 * 1024 && w.ops == 10));
            let max_write_end = writes.iter().map(|w| w.end).fold(f64::MIN, f64::max);
            assert!(reads.iter().all(|rd| rd.start >= max_write_end));
            assert_eq!(r.bandwidths.len(), 4);
        }
    }

    #[test]
    fn pattern_b_overlaps_and_conserves_bytes() {
        let mut c = memory_config(Pattern::B);
        c.mode = FieldioMode::NoContainers;
        let reports = run_pattern(&c).unwrap();
        for r in &reports {
            let writes = r.phase_records(Phase::Write);
            let reads = r.phase_records(Phase::Read);
            assert_eq!(writes.iter().map(|w| w.bytes).sum::<u64>(), 2 * 10 * 64 * 1024);
            assert_eq!(reads.len(), 2);
            assert_eq!(r.phase_records(Phase::Populate).len(), 2);
            assert_eq!(r.release(Phase::Write), r.release(Phase::Read));
        }
    }

    #[test]
    fn odd_nodes_rejected_for_b() {
        let mut c = memory_config(Pattern::B);
        c.nodes = 3;
        assert!(matches!(run_pattern(&c), Err(HarnessError::Config(_))));
        assert!(matches!(run_pattern_a(&c), Err(HarnessError::Config(_))));
    }

    #[test]
    fn failing_reader_aborts_with_partial_report() {
        let store = MemoryStore::new();
        let pool = PoolName::new("p").unwrap();
        store.pool_create(&pool).unwrap();
        let clock = RunClock::start();
        let task = |w: u32, phase| WorkerTask {
            worker_id: w,
            node_id: 0,
            phase,
            pool: "p".into(),
            seed: 1,
            job: Job::Fieldio {
                mode: FieldioMode::Full,
                dataset: "a".into(),
                iterations: 2,
                object_size: MIB / 16,
            },
            root: None,
            epoch_ns: clock.epoch_ns(),
        };
        // Worker 1 reads data nobody wrote.
        let tasks = [task(0, Phase::Write), task(1, Phase::Read)];
        match run_phase(&store, &Launcher::Threads, &tasks, clock, Duration::from_secs(10)) {
            Err(HarnessError::Workers {
                failures, completed, ..
            }) => {
                assert_eq!(failures.len(), 1);
                assert_eq!(failures[0].worker_id, 1);
                assert!(failures[0].detail.contains("KeyNotFound"), "{}", failures[0].detail);
                assert_eq!(completed.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
