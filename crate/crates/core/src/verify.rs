//! Self-checks: differential fuzzing of the two backends, on-disk layout
//! conformance, fieldio operation audits and an integrity scan of existing
//! stores.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fieldio::{
    ArrayLocator, FieldKey, FieldioMode, FieldioSession, IndexTopology, GLOBAL_INDEX_CONTAINER, GLOBAL_INDEX_OID,
    SHARED_CONTAINER,
};
use crate::harness::payload::{validate_header, HEADER_LEN};
use crate::instrument::StoreOp;
use crate::keyname::decode_key_filename;
use crate::listing::Listing;
use crate::memory::MemoryStore;
use crate::object::{
    ContainerHandle, ContainerName, ErrorKind, KvHandle, ObjectId, ObjectStore, PoolHandle, PoolName, StoreError,
    StoreResult,
};
use crate::posix::{PosixStore, ARRAY_SUFFIX, KV_SUFFIX, SENTINEL};

/// Object a fuzz operation addresses. Names are raw strings so invalid
/// ones can be generated too.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Target {
    pub pool: String,
    pub container: String,
    pub oid: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FuzzOp {
    PoolCreate(String),
    PoolConnect(String),
    PoolDestroy(String),
    ContainerCreate(String, String),
    ContainerOpen(String, String),
    ContainerExists(String, String),
    KvOpen(Target),
    KvObjectExists(Target),
    KvPut(Target, String, Vec<u8>),
    KvGet(Target, String),
    KvKeyExists(Target, String),
    ArrayWrite(Target, Vec<u8>),
    ArrayRead(Target),
    ArrayExists(Target),
}

/// What an operation returned, reduced to what must agree across backends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Unit,
    Bool(bool),
    Bytes(Vec<u8>),
    Err(ErrorKind),
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Bytes(b) => write!(f, "{} bytes crc {:08x}", b.len(), crc32fast::hash(b)),
            other => write!(f, "{other:?}"),
        }
    }
}

const POOLS: &[&str] = &["p0", "p0", "p0", "p1", "p1", "a/b"];
const CONTAINERS: &[&str] = &["c0", "c0", "c1", "c1", "w.2", "", ".hid"];
const OIDS: &[u128] = &[1, 2, 3, 0x2a, (1 << 96) - 1, 1 << 100];

fn fuzz_keys() -> Vec<String> {
    let mut keys: Vec<String> = [
        "k", "k", "step.0012", "a/b c", ".dot", "..", "%41", "\u{fc}/\u{e9}", "", "-_.~", "K", "s1:f0",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    keys.push("x".repeat(255));
    keys.push("x".repeat(256));
    keys.push("/".repeat(85));
    keys.push("/".repeat(86));
    keys
}

/// Deterministic operation sequence for `seed`.
pub fn generate_ops(seed: u64, count: usize) -> Vec<FuzzOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys = fuzz_keys();
    let mut ops = Vec::with_capacity(count);
    for _ in 0..count {
        let pool = POOLS[rng.random_range(0..POOLS.len())].to_owned();
        let container = CONTAINERS[rng.random_range(0..CONTAINERS.len())].to_owned();
        let oid = OIDS[rng.random_range(0..OIDS.len())];
        let key = keys[rng.random_range(0..keys.len())].clone();
        let t = Target {
            pool: pool.clone(),
            container: container.clone(),
            oid,
        };
        let bytes = |rng: &mut ChaCha8Rng| {
            let len = match rng.random_range(0..10) {
                0 => 0,
                1 => rng.random_range(1000..5000),
                _ => rng.random_range(1..64),
            };
            let mut v = vec![0u8; len];
            rng.fill_bytes(&mut v);
            v
        };
        let op = match rng.random_range(0..1000) {
            0..30 => FuzzOp::PoolCreate(pool),
            30..50 => FuzzOp::PoolConnect(pool),
            50..53 => FuzzOp::PoolDestroy(pool),
            53..120 => FuzzOp::ContainerCreate(pool, container),
            120..150 => FuzzOp::ContainerOpen(pool, container),
            150..180 => FuzzOp::ContainerExists(pool, container),
            180..210 => FuzzOp::KvOpen(t),
            210..270 => FuzzOp::KvObjectExists(t),
            270..500 => FuzzOp::KvPut(t, key, bytes(&mut rng)),
            500..650 => FuzzOp::KvGet(t, key),
            650..720 => FuzzOp::KvKeyExists(t, key),
            720..840 => FuzzOp::ArrayWrite(t, bytes(&mut rng)),
            840..940 => FuzzOp::ArrayRead(t),
            _ => FuzzOp::ArrayExists(t),
        };
        ops.push(op);
    }
    ops
}

fn pool_handle(name: &str) -> StoreResult<PoolHandle> {
    Ok(PoolHandle::new(PoolName::new(name)?))
}

fn container_handle(t: &Target) -> StoreResult<ContainerHandle> {
    Ok(ContainerHandle::new(&pool_handle(&t.pool)?, ContainerName::new(t.container.as_str())?))
}

/// Builds the handle directly so the backend's own oid check is exercised.
fn kv_handle(t: &Target) -> StoreResult<KvHandle> {
    Ok(KvHandle::new(&container_handle(t)?, ObjectId::from_raw(t.oid)))
}

fn run_op(store: &dyn ObjectStore, op: &FuzzOp) -> StoreResult<Outcome> {
    let unit = |_| Outcome::Unit;
    Ok(match op {
        FuzzOp::PoolCreate(p) => store.pool_create(&PoolName::new(p.as_str())?).map(|_| Outcome::Unit)?,
        FuzzOp::PoolConnect(p) => store.pool_connect(&PoolName::new(p.as_str())?).map(|_| Outcome::Unit)?,
        FuzzOp::PoolDestroy(p) => store.pool_destroy(&PoolName::new(p.as_str())?).map(unit)?,
        FuzzOp::ContainerCreate(p, c) => store
            .container_create(&pool_handle(p)?, &ContainerName::new(c.as_str())?)
            .map(|_| Outcome::Unit)?,
        FuzzOp::ContainerOpen(p, c) => store
            .container_open(&pool_handle(p)?, &ContainerName::new(c.as_str())?)
            .map(|_| Outcome::Unit)?,
        FuzzOp::ContainerExists(p, c) => {
            Outcome::Bool(store.container_exists(&pool_handle(p)?, &ContainerName::new(c.as_str())?)?)
        }
        FuzzOp::KvOpen(t) => store
            .kv_open(&container_handle(t)?, ObjectId::from_raw(t.oid))
            .map(|_| Outcome::Unit)?,
        FuzzOp::KvObjectExists(t) => Outcome::Bool(store.kv_object_exists(&container_handle(t)?, ObjectId::from_raw(t.oid))?),
        FuzzOp::KvPut(t, k, v) => store.kv_put(&kv_handle(t)?, k, v).map(unit)?,
        FuzzOp::KvGet(t, k) => Outcome::Bytes(store.kv_get(&kv_handle(t)?, k)?),
        FuzzOp::KvKeyExists(t, k) => Outcome::Bool(store.kv_key_exists(&kv_handle(t)?, k)?),
        FuzzOp::ArrayWrite(t, d) => store.array_write(&container_handle(t)?, ObjectId::from_raw(t.oid), d).map(unit)?,
        FuzzOp::ArrayRead(t) => Outcome::Bytes(store.array_read(&container_handle(t)?, ObjectId::from_raw(t.oid))?),
        FuzzOp::ArrayExists(t) => Outcome::Bool(store.array_exists(&container_handle(t)?, ObjectId::from_raw(t.oid))?),
    })
}

/// Runs `op` and folds errors into the outcome.
pub fn apply(store: &dyn ObjectStore, op: &FuzzOp) -> Outcome {
    run_op(store, op).unwrap_or_else(|e| Outcome::Err(e.kind))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub index: usize,
    pub op: FuzzOp,
    pub posix: Outcome,
    pub memory: Outcome,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = format!("{:?}", self.op);
        let op: String = op.chars().take(160).collect();
        write!(f, "op {}: {op}: posix {} vs memory {}", self.index, self.posix, self.memory)
    }
}

#[derive(Debug, Clone)]
pub struct DifferentialReport {
    pub ops: usize,
    pub divergences: Vec<Divergence>,
    /// Lines that differ between the two final dumps.
    pub dump_diff: Vec<String>,
    /// Tally of outcome kinds, for judging coverage.
    pub outcomes: BTreeMap<String, usize>,
    pub memory_dump: Listing,
}

impl DifferentialReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty() && self.dump_diff.is_empty()
    }
}

/// Replays `ops` single-threaded on both backends and compares every result
/// and the final dumps.
pub fn differential(posix: &PosixStore, memory: &MemoryStore, ops: &[FuzzOp]) -> StoreResult<DifferentialReport> {
    let mut divergences = Vec::new();
    let mut outcomes = BTreeMap::new();
    for (index, op) in ops.iter().enumerate() {
        let p = apply(posix, op);
        let m = apply(memory, op);
        let tag = match &m {
            Outcome::Err(kind) => format!("Err({kind})"),
            Outcome::Bool(b) => format!("Bool({b})"),
            Outcome::Bytes(_) => "Bytes".into(),
            Outcome::Unit => "Unit".into(),
        };
        *outcomes.entry(tag).or_insert(0) += 1;
        if p != m {
            divergences.push(Divergence {
                index,
                op: op.clone(),
                posix: p,
                memory: m,
            });
        }
    }
    let memory_dump = memory.dump();
    let dump_diff = posix.dump()?.diff(&memory_dump);
    Ok(DifferentialReport {
        ops: ops.len(),
        divergences,
        dump_diff,
        outcomes,
        memory_dump,
    })
}

fn walk(dir: &Path, rel: &str, out: &mut BTreeMap<String, Option<u64>>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let rel = if rel.is_empty() { name } else { format!("{rel}/{name}") };
        let meta = entry.metadata()?;
        if meta.is_dir() {
            out.insert(rel.clone(), None);
            walk(&entry.path(), &rel, out)?;
        } else {
            out.insert(rel, Some(meta.len()));
        }
    }
    Ok(())
}

/// Compares the tree under the store root with the tree the path mapping
/// predicts from `oracle`. Returns one line per mismatch.
pub fn layout_conformance(store: &PosixStore, oracle: &Listing) -> std::io::Result<Vec<String>> {
    let mut expected: BTreeMap<String, Option<u64>> = BTreeMap::new();
    for line in oracle.lines() {
        let mut fields = line.split(' ');
        let kind = fields.next().unwrap_or_default();
        let path = fields.next().unwrap_or_default();
        let len = fields.next().and_then(|l| l.parse::<u64>().ok());
        let parts: Vec<&str> = path.split('/').collect();
        match (kind, parts.as_slice()) {
            ("POOL", _) | ("CONT", _) => {
                expected.insert(path.to_owned(), None);
            }
            ("KV", [p, c, oid, key]) => {
                expected.insert(format!("{p}/{c}/{oid}{KV_SUFFIX}"), None);
                expected.insert(format!("{p}/{c}/{oid}{KV_SUFFIX}/{key}"), len);
            }
            ("ARR", [p, c, oid]) => {
                expected.insert(format!("{p}/{c}/{oid}{ARRAY_SUFFIX}"), len);
            }
            _ => {
                expected.insert(format!("unparseable oracle line {line:?}"), None);
            }
        }
    }
    let mut actual = BTreeMap::new();
    walk(store.root(), "", &mut actual)?;
    actual.remove(SENTINEL);
    let mut problems = Vec::new();
    for (path, size) in &expected {
        match actual.get(path) {
            None => problems.push(format!("missing {path}")),
            Some(s) if s != size => problems.push(format!("{path}: size {s:?}, expected {size:?}")),
            _ => {}
        }
    }
    for path in actual.keys().filter(|p| !expected.contains_key(*p)) {
        problems.push(format!("unexpected {path}"));
    }
    Ok(problems)
}

/// Result of one named self-check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, problems: Vec<String>, ok_detail: String) -> Self {
        Self {
            name: name.into(),
            passed: problems.is_empty(),
            detail: if problems.is_empty() { ok_detail } else { problems.join("; ") },
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "ok" } else { "FAILED" };
        write!(f, "{verdict:6} {}: {}", self.name, self.detail)
    }
}

fn expect_trace(label: &str, got: &[StoreOp], want: &[StoreOp], problems: &mut Vec<String>) {
    if got != want {
        problems.push(format!("{label}: trace {got:?}, expected {want:?}"));
    }
}

/// Checks the exact store operations fieldio issues per write and read in
/// both modes, and that no-containers needs fewer metadata operations.
pub fn fieldio_audits() -> StoreResult<Vec<Check>> {
    use StoreOp::*;
    const WRITES: u64 = 20;
    let mut checks = Vec::new();
    let mut metadata_per_write = BTreeMap::new();
    for mode in [FieldioMode::Full, FieldioMode::NoContainers] {
        let store = MemoryStore::new();
        let pool = store.pool_create(&PoolName::new("audit")?)?;
        let mut problems = Vec::new();
        let mut s = FieldioSession::open_traced(&store, &pool, IndexTopology::new(mode), 0, 0)?;
        let opened = s.op_count_audit();
        let want_creates = if mode == FieldioMode::Full { 3 } else { 1 };
        if opened.container_creations != want_creates {
            problems.push(format!(
                "open created {} containers, expected {want_creates}",
                opened.container_creations
            ));
        }
        let keys: Vec<FieldKey> = (0..WRITES)
            .map(|i| FieldKey::new("g", format!("f{i}")))
            .collect::<Result<_, _>>()?;
        for (i, key) in keys.iter().enumerate() {
            let before = s.trace_len();
            s.field_write(key, &[i as u8; 64])?;
            let ops: Vec<StoreOp> = s.trace()[before..].iter().map(|e| e.op).collect();
            let want: &[StoreOp] = if i == 0 {
                &[ArrayWrite, KvObjectExists, KvPut, KvObjectExists, KvPut]
            } else {
                &[ArrayWrite, KvObjectExists, KvPut]
            };
            expect_trace(&format!("{mode} write {i}"), &ops, want, &mut problems);
        }
        let total = s.op_count_audit();
        metadata_per_write.insert(mode, total.metadata_ops() as f64 / WRITES as f64);
        for key in &keys {
            let before = s.trace_len();
            s.field_read(key)?;
            let ops: Vec<StoreOp> = s.trace()[before..].iter().map(|e| e.op).collect();
            expect_trace(
                &format!("{mode} read {key}"),
                &ops,
                &[KvObjectExists, KvGet, KvObjectExists, KvGet, ArrayRead],
                &mut problems,
            );
        }
        let after = s.op_count_audit().saturating_sub(&total);
        let n = WRITES;
        if (after.kv_gets, after.existence_checks, after.array_ops, after.kv_puts) != (2 * n, 2 * n, n, 0) {
            problems.push(format!("{mode} reads: counts {after:?}"));
        }
        checks.push(Check::new(
            &format!("fieldio-trace-{mode}"),
            problems,
            format!("{WRITES} writes and reads follow the write and read step lists"),
        ));
    }
    let full = metadata_per_write[&FieldioMode::Full];
    let nc = metadata_per_write[&FieldioMode::NoContainers];
    let problems = if nc < full {
        Vec::new()
    } else {
        vec![format!("no-containers {nc:.2} metadata ops per write, full {full:.2}")]
    };
    checks.push(Check::new(
        "fieldio-metadata-direction",
        problems,
        format!("metadata ops per write: full {full:.2}, no-containers {nc:.2}"),
    ));
    Ok(checks)
}

fn corrupt(detail: String) -> StoreError {
    StoreError::new(ErrorKind::Corrupt, detail)
}

fn is_index_container(name: &str) -> bool {
    name == SHARED_CONTAINER || name.starts_with("idx.")
}

/// Scans the fieldio indexes of an existing posix store: every index value
/// must parse as a locator that points at an existing object of the recorded
/// length, and benchmark payloads must carry a valid header. Returns the
/// number of index entries checked.
pub fn integrity_scan(store: &PosixStore) -> StoreResult<usize> {
    let listing = store.dump()?;
    let mut checked = 0;
    for line in listing.lines() {
        let Some(rest) = line.strip_prefix("KV ") else {
            continue;
        };
        let path = rest.split(' ').next().unwrap_or_default();
        let parts: Vec<&str> = path.split('/').collect();
        let [pool, cont, oid, enc] = parts[..] else {
            return Err(corrupt(format!("malformed listing line {line:?}")));
        };
        if !is_index_container(cont) {
            continue;
        }
        let key = String::from_utf8(decode_key_filename(enc)?)
            .map_err(|_| corrupt(format!("{path}: key is not UTF-8")))?;
        let pool = PoolHandle::new(PoolName::new(pool)?);
        let cont_handle = ContainerHandle::new(&pool, ContainerName::new(cont)?);
        let oid = ObjectId::parse(oid)?;
        let value = store.kv_get(&KvHandle::new(&cont_handle, oid), &key)?;
        let locator = ArrayLocator::from_bytes(&value).map_err(|e| corrupt(format!("{path}: {}", e.detail)))?;
        let target = ContainerHandle::new(&pool, locator.container.clone());
        let global = oid == GLOBAL_INDEX_OID && (cont == GLOBAL_INDEX_CONTAINER || cont == SHARED_CONTAINER);
        if global {
            if !store.kv_object_exists(&target, locator.oid).unwrap_or(false) {
                return Err(corrupt(format!("{path}: points at missing node index {locator}")));
            }
        } else {
            let data = store.array_read(&target, locator.oid).map_err(|e| {
                corrupt(format!("{path}: points at unreadable array {locator} ({})", e.kind))
            })?;
            if data.len() as u64 != locator.length {
                return Err(corrupt(format!("{path}: array has {} bytes, index says {}", data.len(), locator.length)));
            }
            if data.len() >= HEADER_LEN {
                let field = FieldKey::parse(&key).map_err(|e| corrupt(format!("{path}: {}", e.detail)))?;
                validate_header(&field, &data).map_err(|why| corrupt(format!("{path}: {why}")))?;
            }
        }
        checked += 1;
    }
    Ok(checked)
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    pub root: PathBuf,
    pub ops: usize,
    pub seed: u64,
}

/// Runs every check. Scratch data goes to a hidden directory under `root`
/// that is removed afterwards.
pub fn run_verify(opts: &VerifyOptions) -> std::io::Result<Vec<Check>> {
    let mut checks = Vec::new();
    if opts.root.join(SENTINEL).exists() {
        let check = match PosixStore::open(&opts.root).and_then(|s| integrity_scan(&s)) {
            Ok(n) => Check::new("integrity", vec![], format!("{n} index entries consistent")),
            Err(e) => Check::new("integrity", vec![e.to_string()], String::new()),
        };
        checks.push(check);
    }

    let scratch = opts.root.join(format!(".verify-{}", std::process::id()));
    if scratch.exists() {
        fs::remove_dir_all(&scratch)?;
    }
    fs::create_dir_all(&scratch)?;
    let result = (|| -> std::io::Result<()> {
        let posix = PosixStore::init(&scratch).map_err(std::io::Error::other)?;
        let memory = MemoryStore::new();
        let ops = generate_ops(opts.seed, opts.ops);
        let report = differential(&posix, &memory, &ops).map_err(std::io::Error::other)?;
        let mut problems: Vec<String> = report.divergences.iter().take(10).map(|d| d.to_string()).collect();
        if report.divergences.len() > 10 {
            problems.push(format!("{} divergences in total", report.divergences.len()));
        }
        checks.push(Check::new(
            "differential",
            problems,
            format!("{} ops (seed {}), identical results", report.ops, opts.seed),
        ));
        checks.push(Check::new(
            "dump-equality",
            report.dump_diff.iter().take(10).cloned().collect(),
            format!("{} listing lines match", report.memory_dump.lines().len()),
        ));
        checks.push(Check::new(
            "layout",
            layout_conformance(&posix, &report.memory_dump)?.into_iter().take(10).collect(),
            "on-disk tree matches the path mapping".into(),
        ));
        Ok(())
    })();
    let cleanup = fs::remove_dir_all(&scratch);
    result?;
    cleanup?;

    match fieldio_audits() {
        Ok(mut audits) => checks.append(&mut audits),
        Err(e) => checks.push(Check::new("fieldio-trace", vec![e.to_string()], String::new())),
    }
    Ok(checks)
}
