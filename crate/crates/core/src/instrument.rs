//! Store wrapper that records every operation issued through it.

use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::object::{
    ContainerHandle, ContainerName, KvHandle, ObjectId, ObjectStore, PoolHandle, PoolName, StoreResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StoreOp {
    PoolCreate,
    PoolConnect,
    PoolDestroy,
    ContainerCreate,
    ContainerOpen,
    ContainerExists,
    KvOpen,
    KvObjectExists,
    KvPut,
    KvGet,
    KvKeyExists,
    ArrayWrite,
    ArrayRead,
    ArrayExists,
}

impl StoreOp {
    pub fn is_existence_check(self) -> bool {
        matches!(
            self,
            StoreOp::ContainerOpen
                | StoreOp::ContainerExists
                | StoreOp::KvObjectExists
                | StoreOp::KvKeyExists
                | StoreOp::ArrayExists
        )
    }

    pub fn is_array_op(self) -> bool {
        matches!(self, StoreOp::ArrayWrite | StoreOp::ArrayRead)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpEvent {
    pub op: StoreOp,
    pub container: Option<ContainerName>,
    pub oid: Option<ObjectId>,
    pub key: Option<String>,
}

/// Per-category operation counts.
///
/// Container opens are directory probes and count as existence checks.
/// `kv_open` touches no storage and is not counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounts {
    pub array_ops: u64,
    pub kv_puts: u64,
    pub kv_gets: u64,
    pub existence_checks: u64,
    pub container_creations: u64,
    pub pool_ops: u64,
}

impl OpCounts {
    fn add(&mut self, op: StoreOp) {
        match op {
            StoreOp::ArrayWrite | StoreOp::ArrayRead => self.array_ops += 1,
            StoreOp::KvPut => self.kv_puts += 1,
            StoreOp::KvGet => self.kv_gets += 1,
            StoreOp::ContainerCreate => self.container_creations += 1,
            StoreOp::PoolCreate | StoreOp::PoolConnect | StoreOp::PoolDestroy => self.pool_ops += 1,
            StoreOp::KvOpen => {}
            other => {
                debug_assert!(other.is_existence_check());
                self.existence_checks += 1
            }
        }
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a OpEvent>) -> Self {
        let mut counts = Self::default();
        for e in events {
            counts.add(e.op);
        }
        counts
    }

    /// Everything except array payload transfers.
    pub fn metadata_ops(&self) -> u64 {
        self.kv_puts + self.kv_gets + self.existence_checks + self.container_creations + self.pool_ops
    }

    pub fn saturating_sub(&self, earlier: &OpCounts) -> OpCounts {
        OpCounts {
            array_ops: self.array_ops.saturating_sub(earlier.array_ops),
            kv_puts: self.kv_puts.saturating_sub(earlier.kv_puts),
            kv_gets: self.kv_gets.saturating_sub(earlier.kv_gets),
            existence_checks: self.existence_checks.saturating_sub(earlier.existence_checks),
            container_creations: self.container_creations.saturating_sub(earlier.container_creations),
            pool_ops: self.pool_ops.saturating_sub(earlier.pool_ops),
        }
    }
}

#[derive(Debug, Default)]
struct Recorder {
    counts: OpCounts,
    trace: Option<Vec<OpEvent>>,
}

/// Wraps a store and records the operations issued through it.
#[derive(Debug)]
pub struct TracedStore<S> {
    inner: S,
    recorder: Mutex<Recorder>,
}

impl<S: ObjectStore> TracedStore<S> {
    /// Counts only.
    pub fn new(inner: S) -> Self {
        Self {
            inner,
            recorder: Mutex::new(Recorder::default()),
        }
    }

    /// Counts plus the ordered list of events.
    pub fn with_trace(inner: S) -> Self {
        Self {
            inner,
            recorder: Mutex::new(Recorder {
                counts: OpCounts::default(),
                trace: Some(Vec::new()),
            }),
        }
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn counts(&self) -> OpCounts {
        self.lock().counts
    }

    /// Recorded events, empty when tracing is off.
    pub fn trace(&self) -> Vec<OpEvent> {
        self.lock().trace.clone().unwrap_or_default()
    }

    pub fn trace_len(&self) -> usize {
        self.lock().trace.as_ref().map_or(0, Vec::len)
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Recorder> {
        self.recorder.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn record(&self, op: StoreOp, container: Option<&ContainerName>, oid: Option<ObjectId>, key: Option<&str>) {
        let mut rec = self.lock();
        rec.counts.add(op);
        if let Some(trace) = rec.trace.as_mut() {
            trace.push(OpEvent {
                op,
                container: container.cloned(),
                oid,
                key: key.map(str::to_owned),
            });
        }
    }
}

impl<S: ObjectStore> ObjectStore for TracedStore<S> {
    fn backend_name(&self) -> &'static str {
        self.inner.backend_name()
    }

    fn pool_create(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        self.record(StoreOp::PoolCreate, None, None, None);
        self.inner.pool_create(name)
    }

    fn pool_connect(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        self.record(StoreOp::PoolConnect, None, None, None);
        self.inner.pool_connect(name)
    }

    fn pool_destroy(&self, name: &PoolName) -> StoreResult<()> {
        self.record(StoreOp::PoolDestroy, None, None, None);
        self.inner.pool_destroy(name)
    }

    fn container_create(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        self.record(StoreOp::ContainerCreate, Some(name), None, None);
        self.inner.container_create(pool, name)
    }

    fn container_open(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        self.record(StoreOp::ContainerOpen, Some(name), None, None);
        self.inner.container_open(pool, name)
    }

    fn container_exists(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<bool> {
        self.record(StoreOp::ContainerExists, Some(name), None, None);
        self.inner.container_exists(pool, name)
    }

    fn kv_open(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<KvHandle> {
        self.record(StoreOp::KvOpen, Some(cont.name()), Some(oid), None);
        self.inner.kv_open(cont, oid)
    }

    fn kv_object_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        self.record(StoreOp::KvObjectExists, Some(cont.name()), Some(oid), None);
        self.inner.kv_object_exists(cont, oid)
    }

    fn kv_put(&self, kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<()> {
        self.record(StoreOp::KvPut, Some(kv.container().name()), Some(kv.oid()), Some(key));
        self.inner.kv_put(kv, key, value)
    }

    fn kv_get(&self, kv: &KvHandle, key: &str) -> StoreResult<Vec<u8>> {
        self.record(StoreOp::KvGet, Some(kv.container().name()), Some(kv.oid()), Some(key));
        self.inner.kv_get(kv, key)
    }

    fn kv_key_exists(&self, kv: &KvHandle, key: &str) -> StoreResult<bool> {
        self.record(StoreOp::KvKeyExists, Some(kv.container().name()), Some(kv.oid()), Some(key));
        self.inner.kv_key_exists(kv, key)
    }

    fn array_write(&self, cont: &ContainerHandle, oid: ObjectId, data: &[u8]) -> StoreResult<()> {
        self.record(StoreOp::ArrayWrite, Some(cont.name()), Some(oid), None);
        self.inner.array_write(cont, oid, data)
    }

    fn array_read(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<Vec<u8>> {
        self.record(StoreOp::ArrayRead, Some(cont.name()), Some(oid), None);
        self.inner.array_read(cont, oid)
    }

    fn array_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        self.record(StoreOp::ArrayExists, Some(cont.name()), Some(oid), None);
        self.inner.array_exists(cont, oid)
    }
}
