//! Field I/O: weather fields stored as arrays and indexed through a
//! two-level KV index (global index → node index → array).
//!
//! A field write issues, in order:
//!
//! 1. `array_write` of the payload into the worker's array container,
//! 2. `kv_object_exists` on the node index,
//! 3. `kv_put` of `group:name → locator` into the node index,
//!
//! plus, once per group per session, an existence check and a `kv_put`
//! registering `group → node-index locator` in the global index.
//!
//! A field read issues, in order: existence check and `kv_get` on the global
//! index, existence check and `kv_get` on the node index, `array_read`.

mod key;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use key::{ArrayLocator, FieldKey};

use crate::instrument::{OpCounts, OpEvent, TracedStore};
use crate::object::{
    ContainerHandle, ContainerName, ErrorKind, KvHandle, ObjectId, ObjectStore, PoolHandle, StoreError, StoreResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FieldioMode {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "no-containers")]
    NoContainers,
}

impl FieldioMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldioMode::Full => "full",
            FieldioMode::NoContainers => "no-containers",
        }
    }
}

impl fmt::Display for FieldioMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FieldioMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(FieldioMode::Full),
            "no-containers" | "no_containers" => Ok(FieldioMode::NoContainers),
            other => Err(format!("unknown mode {other:?} (expected full or no-containers)")),
        }
    }
}

pub const SHARED_CONTAINER: &str = "shared";
pub const GLOBAL_INDEX_CONTAINER: &str = "idx.global";
pub const GLOBAL_INDEX_OID: ObjectId = ObjectId::from_raw(1);

/// Where indexes and arrays live for a given mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexTopology {
    mode: FieldioMode,
}

impl IndexTopology {
    pub fn new(mode: FieldioMode) -> Self {
        Self { mode }
    }

    pub fn mode(&self) -> FieldioMode {
        self.mode
    }

    fn name(text: String) -> ContainerName {
        ContainerName::new(text).expect("topology container names are valid")
    }

    pub fn global_index(&self) -> (ContainerName, ObjectId) {
        let cont = match self.mode {
            FieldioMode::Full => GLOBAL_INDEX_CONTAINER,
            FieldioMode::NoContainers => SHARED_CONTAINER,
        };
        (Self::name(cont.to_owned()), GLOBAL_INDEX_OID)
    }

    pub fn node_index(&self, node_id: u32) -> (ContainerName, ObjectId) {
        let cont = match self.mode {
            FieldioMode::Full => format!("idx.n{node_id}"),
            FieldioMode::NoContainers => SHARED_CONTAINER.to_owned(),
        };
        (Self::name(cont), ObjectId::from_raw(2 + u128::from(node_id)))
    }

    pub fn array_container(&self, node_id: u32, worker_id: u32) -> ContainerName {
        match self.mode {
            FieldioMode::Full => Self::name(format!("arr.n{node_id}.w{worker_id}")),
            FieldioMode::NoContainers => Self::name(SHARED_CONTAINER.to_owned()),
        }
    }

    /// Worker id + 1 in bits 64..96, sequence number in the low 64 bits. Index
    /// objects use ids below 2^64, so they never collide with arrays.
    pub fn array_oid(worker_id: u32, seq: u64) -> ObjectId {
        ObjectId::from_raw(((u128::from(worker_id) + 1) << 64) | u128::from(seq))
    }

    /// Containers a session of this worker needs, in creation order.
    pub fn session_containers(&self, node_id: u32, worker_id: u32) -> Vec<ContainerName> {
        let mut names = vec![
            self.array_container(node_id, worker_id),
            self.node_index(node_id).0,
            self.global_index().0,
        ];
        names.dedup();
        names
    }
}

/// One worker's view of the field store.
pub struct FieldioSession<'s> {
    store: TracedStore<&'s dyn ObjectStore>,
    pool: PoolHandle,
    topology: IndexTopology,
    worker_id: u32,
    node_id: u32,
    array_cont: ContainerHandle,
    node_index: KvHandle,
    global_index: KvHandle,
    containers: HashMap<ContainerName, ContainerHandle>,
    next_seq: u64,
    written: HashSet<String>,
    registered: HashSet<String>,
}

impl<'s> FieldioSession<'s> {
    /// Opens a session, creating its containers if needed. Creation is
    /// idempotent so workers of one node can open concurrently.
    pub fn open(
        store: &'s dyn ObjectStore,
        pool: &PoolHandle,
        topology: IndexTopology,
        worker_id: u32,
        node_id: u32,
    ) -> StoreResult<Self> {
        Self::open_with(TracedStore::new(store), pool, topology, worker_id, node_id)
    }

    /// Like [`open`](Self::open) but also keeps the ordered operation trace.
    pub fn open_traced(
        store: &'s dyn ObjectStore,
        pool: &PoolHandle,
        topology: IndexTopology,
        worker_id: u32,
        node_id: u32,
    ) -> StoreResult<Self> {
        Self::open_with(TracedStore::with_trace(store), pool, topology, worker_id, node_id)
    }

    fn open_with(
        store: TracedStore<&'s dyn ObjectStore>,
        pool: &PoolHandle,
        topology: IndexTopology,
        worker_id: u32,
        node_id: u32,
    ) -> StoreResult<Self> {
        let mut containers = HashMap::new();
        for name in topology.session_containers(node_id, worker_id) {
            let handle = match store.container_create(pool, &name) {
                Ok(h) => h,
                Err(e) if e.is(ErrorKind::AlreadyExists) => store.container_open(pool, &name)?,
                Err(e) => return Err(e),
            };
            containers.insert(name, handle);
        }
        let (node_cont, node_oid) = topology.node_index(node_id);
        let (global_cont, global_oid) = topology.global_index();
        let array_cont = containers[&topology.array_container(node_id, worker_id)].clone();
        let node_index = store.kv_open(&containers[&node_cont], node_oid)?;
        let global_index = store.kv_open(&containers[&global_cont], global_oid)?;
        Ok(Self {
            store,
            pool: pool.clone(),
            topology,
            worker_id,
            node_id,
            array_cont,
            node_index,
            global_index,
            containers,
            next_seq: 0,
            written: HashSet::new(),
            registered: HashSet::new(),
        })
    }

    pub fn worker_id(&self) -> u32 {
        self.worker_id
    }

    pub fn node_id(&self) -> u32 {
        self.node_id
    }

    pub fn mode(&self) -> FieldioMode {
        self.topology.mode()
    }

    pub fn array_container(&self) -> &ContainerName {
        self.array_cont.name()
    }

    fn container(&mut self, name: &ContainerName) -> StoreResult<ContainerHandle> {
        if let Some(h) = self.containers.get(name) {
            return Ok(h.clone());
        }
        let h = self.store.container_open(&self.pool, name)?;
        self.containers.insert(name.clone(), h.clone());
        Ok(h)
    }

    /// Stores one field and indexes it. Each key may be written once per session.
    pub fn field_write(&mut self, key: &FieldKey, data: &[u8]) -> StoreResult<ArrayLocator> {
        let index_key = key.serialize();
        if self.written.contains(&index_key) {
            return Err(StoreError::new(
                ErrorKind::AlreadyExists,
                format!("field {index_key} already written in this session"),
            ));
        }
        let oid = IndexTopology::array_oid(self.worker_id, self.next_seq);
        self.next_seq += 1;

        self.store.array_write(&self.array_cont, oid, data)?;
        // The node index materializes on its first put, so a negative
        // answer needs no separate create call.
        self.store.kv_object_exists(self.node_index.container(), self.node_index.oid())?;
        let locator = ArrayLocator::new(self.array_cont.name().clone(), oid, data.len() as u64);
        self.store
            .kv_put(&self.node_index, &index_key, locator.serialize().as_bytes())?;

        if !self.registered.contains(key.group()) {
            self.store
                .kv_object_exists(self.global_index.container(), self.global_index.oid())?;
            let node_locator = ArrayLocator::new(self.node_index.container().name().clone(), self.node_index.oid(), 0);
            self.store
                .kv_put(&self.global_index, key.group(), node_locator.serialize().as_bytes())?;
            self.registered.insert(key.group().to_owned());
        }
        self.written.insert(index_key);
        Ok(locator)
    }

    /// Looks a field up through both index levels and returns its payload.
    pub fn field_read(&mut self, key: &FieldKey) -> StoreResult<Vec<u8>> {
        let not_found = |what: &str| StoreError::new(ErrorKind::KeyNotFound, format!("{what} for field {key}"));

        if !self
            .store
            .kv_object_exists(self.global_index.container(), self.global_index.oid())?
        {
            return Err(not_found("no global index"));
        }
        let node_ref = ArrayLocator::from_bytes(&self.store.kv_get(&self.global_index, key.group())?)?;

        let node_cont = self.container(&node_ref.container)?;
        if !self.store.kv_object_exists(&node_cont, node_ref.oid)? {
            return Err(not_found("no node index"));
        }
        let node_index = KvHandle::new(&node_cont, node_ref.oid);
        let locator = ArrayLocator::from_bytes(&self.store.kv_get(&node_index, &key.serialize())?)?;

        let array_cont = self.container(&locator.container)?;
        let data = self.store.array_read(&array_cont, locator.oid)?;
        if data.len() as u64 != locator.length {
            return Err(StoreError::new(
                ErrorKind::Corrupt,
                format!(
                    "field {key}: array {} holds {} bytes, index says {}",
                    locator.oid,
                    data.len(),
                    locator.length
                ),
            ));
        }
        Ok(data)
    }

    /// Operations this session has issued so far, by category.
    pub fn op_count_audit(&self) -> OpCounts {
        self.store.counts()
    }

    /// Ordered operations; empty unless opened with [`open_traced`](Self::open_traced).
    pub fn trace(&self) -> Vec<OpEvent> {
        self.store.trace()
    }

    pub fn trace_len(&self) -> usize {
        self.store.trace_len()
    }
}

/// Verifies that every node-index entry under `pool` points at an array of
/// the recorded length. Returns the number of entries checked.
pub fn check_index_consistency(
    store: &dyn ObjectStore,
    pool: &PoolHandle,
    topology: IndexTopology,
    nodes: impl IntoIterator<Item = u32>,
    keys: impl Fn(u32) -> Vec<FieldKey>,
) -> StoreResult<usize> {
    let mut checked = 0;
    for node in nodes {
        let (cont, oid) = topology.node_index(node);
        let cont = store.container_open(pool, &cont)?;
        let kv = store.kv_open(&cont, oid)?;
        for key in keys(node) {
            let locator = ArrayLocator::from_bytes(&store.kv_get(&kv, &key.serialize())?)?;
            let acont = store.container_open(pool, &locator.container)?;
            let data = store.array_read(&acont, locator.oid)?;
            if data.len() as u64 != locator.length {
                return Err(StoreError::new(
                    ErrorKind::Corrupt,
                    format!("field {key}: length {} != indexed {}", data.len(), locator.length),
                ));
            }
            checked += 1;
        }
    }
    Ok(checked)
}
