mod common;

use std::time::Duration;

use fieldstore::fieldio::FieldioMode;
use fieldstore::harness::clock::RunClock;
use fieldstore::harness::config::{BackendKind, BenchmarkConfig, Launcher, Pattern, MIB};
use fieldstore::harness::worker::{Job, WorkerTask};
use fieldstore::harness::{run_pattern, run_pattern_on, run_phase, HarnessError};
use fieldstore::memory::MemoryStore;
use fieldstore::object::{ObjectStore, PoolName};
use fieldstore::posix::PosixStore;
use fieldstore::record::Phase;

fn process_config(root: &std::path::Path, pattern: Pattern) -> BenchmarkConfig {
    BenchmarkConfig {
        pattern,
        backend: BackendKind::Posix,
        root: Some(root.to_path_buf()),
        nodes: 2,
        workers_per_node: 2,
        iterations: 10,
        object_size: MIB,
        repetitions: 2,
        seed: 3,
        launcher: Launcher::Processes {
            exe: common::worker_exe(),
        },
        barrier_timeout: Duration::from_secs(60),
        ..Default::default()
    }
}

#[test]
fn pattern_a_with_process_workers() {
    let dir = common::scratch();
    let reports = run_pattern(&process_config(dir.path(), Pattern::A)).unwrap();
    assert_eq!(reports.len(), 2);
    for r in &reports {
        let writes = r.phase_records(Phase::Write);
        let reads = r.phase_records(Phase::Read);
        assert_eq!((writes.len(), reads.len()), (4, 4));
        assert!(r.records.iter().all(|rec| rec.bytes == 10_485_760 && rec.ops == 10));
        let max_write_end = writes.iter().map(|w| w.end).fold(f64::MIN, f64::max);
        let min_read_start = reads.iter().map(|w| w.start).fold(f64::MAX, f64::min);
        assert!(min_read_start >= max_write_end);
        assert!(writes.iter().all(|w| w.start >= r.release(Phase::Write).unwrap()));
        // Every worker reported its operation counts.
        assert_eq!(r.worker_ops.len(), 8);
        assert!(r.worker_ops.iter().all(|w| w.counts.array_ops == 10));
    }
    // Pools are removed after each repetition.
    assert!(PosixStore::open(dir.path()).unwrap().dump().unwrap().is_empty());
}

#[test]
fn pattern_b_with_process_workers_overlaps() {
    let dir = common::scratch();
    let mut config = process_config(dir.path(), Pattern::B);
    config.mode = FieldioMode::NoContainers;
    config.iterations = 40;
    for r in run_pattern(&config).unwrap() {
        let writes = r.phase_records(Phase::Write);
        let reads = r.phase_records(Phase::Read);
        assert_eq!(writes.iter().map(|w| w.bytes).sum::<u64>(), 2 * 40 * MIB);
        assert_eq!(reads.iter().map(|w| w.bytes).sum::<u64>(), 2 * 40 * MIB);
        let span = |recs: &[fieldstore::record::TimingRecord]| {
            (
                recs.iter().map(|x| x.start).fold(f64::MAX, f64::min),
                recs.iter().map(|x| x.end).fold(f64::MIN, f64::max),
            )
        };
        let (ws, we) = span(&writes);
        let (rs, re) = span(&reads);
        assert!(ws <= re && rs <= we, "write [{ws}, {we}] read [{rs}, {re}]");
    }
}

#[test]
fn memory_backend_refuses_process_workers() {
    let config = BenchmarkConfig {
        backend: BackendKind::Memory,
        launcher: Launcher::Processes {
            exe: common::worker_exe(),
        },
        ..Default::default()
    };
    assert!(matches!(run_pattern(&config), Err(HarnessError::Config(_))));
}

fn task(worker_id: u32, phase: Phase, pool: &str, root: &std::path::Path, clock: RunClock) -> WorkerTask {
    WorkerTask {
        worker_id,
        node_id: 0,
        phase,
        pool: pool.into(),
        seed: 1,
        job: Job::Fieldio {
            mode: FieldioMode::Full,
            dataset: "a".into(),
            iterations: 3,
            object_size: 4096,
        },
        root: Some(root.to_path_buf()),
        epoch_ns: clock.epoch_ns(),
    }
}

#[test]
fn failing_process_worker_gives_partial_report() {
    let dir = common::scratch();
    let store = PosixStore::init(dir.path()).unwrap();
    store.pool_create(&PoolName::new("p").unwrap()).unwrap();
    let clock = RunClock::start();
    let launcher = Launcher::Processes {
        exe: common::worker_exe(),
    };
    // Worker 1 fails mid-phase: its keys were never written.
    let tasks = [
        task(0, Phase::Write, "p", dir.path(), clock),
        task(1, Phase::Read, "p", dir.path(), clock),
    ];
    match run_phase(&store, &launcher, &tasks, clock, Duration::from_secs(30)) {
        Err(HarnessError::Workers {
            failures, completed, ..
        }) => {
            assert_eq!(failures.len(), 1);
            assert_eq!(failures[0].worker_id, 1);
            assert!(failures[0].detail.contains("KeyNotFound"), "{}", failures[0].detail);
            assert_eq!(completed.len(), 1);
            assert_eq!(completed[0].worker_id, 0);
        }
        other => panic!("unexpected {other:?}"),
    }

    // A worker that dies during setup stops the phase before release.
    let tasks = [
        task(0, Phase::Write, "p", dir.path(), clock),
        task(1, Phase::Write, "ghost", dir.path(), clock),
    ];
    let err = run_phase(&store, &launcher, &tasks, clock, Duration::from_secs(30)).unwrap_err();
    let text = err.to_string();
    assert!(text.contains("PoolNotFound"), "{text}");
    assert!(matches!(err, HarnessError::Workers { completed, .. } if completed.is_empty()));
}

#[test]
fn missing_worker_executable_is_a_spawn_error() {
    let dir = common::scratch();
    let store = PosixStore::init(dir.path()).unwrap();
    let clock = RunClock::start();
    let launcher = Launcher::Processes {
        exe: dir.path().join("no-such-binary"),
    };
    let tasks = [task(0, Phase::Write, "p", dir.path(), clock)];
    assert!(matches!(
        run_phase(&store, &launcher, &tasks, clock, Duration::from_secs(5)),
        Err(HarnessError::Spawn(_))
    ));
}

#[test]
fn workload_is_deterministic_for_a_seed() {
    let config = BenchmarkConfig {
        backend: BackendKind::Memory,
        nodes: 2,
        workers_per_node: 2,
        iterations: 5,
        object_size: 10_000,
        repetitions: 1,
        seed: 1234,
        keep_data: true,
        ..Default::default()
    };
    let dumps: Vec<String> = (0..2)
        .map(|_| {
            let store = MemoryStore::new();
            run_pattern_on(&store, &config).unwrap();
            store.dump().render()
        })
        .collect();
    assert_eq!(dumps[0], dumps[1]);
    assert!(dumps[0].lines().filter(|l| l.starts_with("ARR ")).count() == 20);

    let other = BenchmarkConfig { seed: 1235, ..config };
    let store = MemoryStore::new();
    run_pattern_on(&store, &other).unwrap();
    assert_ne!(store.dump().render(), dumps[0]);
}

#[test]
fn threaded_posix_run_keeps_last_repetition() {
    let dir = common::scratch();
    let config = BenchmarkConfig {
        backend: BackendKind::Posix,
        root: Some(dir.path().to_path_buf()),
        nodes: 1,
        workers_per_node: 3,
        iterations: 4,
        object_size: 1000,
        repetitions: 3,
        keep_data: true,
        ..Default::default()
    };
    run_pattern(&config).unwrap();
    let store = PosixStore::open(dir.path()).unwrap();
    assert!(store.pool_connect(&PoolName::new("fieldio-a-rep2").unwrap()).is_ok());
    assert!(store.pool_connect(&PoolName::new("fieldio-a-rep0").unwrap()).is_err());
    assert_eq!(fieldstore::verify::integrity_scan(&store).unwrap(), 3 * 4 + 3);
}
