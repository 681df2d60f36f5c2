//! In-memory reference backend.
//!
//! Thread-safe within one process; it cannot be shared across processes, so
//! the harness only drives it with threaded workers.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};

use crate::keyname;
use crate::listing::{Entry, Listing};
use crate::object::{
    check_array, check_put, ContainerHandle, ContainerName, ErrorKind, KvHandle, ObjectId, ObjectStore, PoolHandle,
    PoolName, StoreError, StoreResult,
};

type Payload = Arc<Vec<u8>>;

#[derive(Debug, Default, Clone)]
struct Container {
    kvs: BTreeMap<ObjectId, BTreeMap<String, Payload>>,
    arrays: BTreeMap<ObjectId, Payload>,
}

type Pools = BTreeMap<PoolName, BTreeMap<ContainerName, Container>>;

#[derive(Debug, Default)]
pub struct MemoryStore {
    pools: RwLock<Pools>,
}

fn pool_missing(name: &PoolName) -> StoreError {
    StoreError::new(ErrorKind::PoolNotFound, format!("pool {name}"))
}

fn container_missing(pool: &PoolName, name: &ContainerName) -> StoreError {
    StoreError::new(ErrorKind::ContainerNotFound, format!("container {pool}/{name}"))
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }

    fn read(&self) -> RwLockReadGuard<'_, Pools> {
        self.pools.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> RwLockWriteGuard<'_, Pools> {
        self.pools.write().unwrap_or_else(|e| e.into_inner())
    }

    fn with_container<R>(&self, cont: &ContainerHandle, f: impl FnOnce(&Container) -> R) -> StoreResult<R> {
        let pools = self.read();
        let containers = pools.get(cont.pool()).ok_or_else(|| pool_missing(cont.pool()))?;
        let c = containers
            .get(cont.name())
            .ok_or_else(|| container_missing(cont.pool(), cont.name()))?;
        Ok(f(c))
    }

    fn with_container_mut<R>(&self, cont: &ContainerHandle, f: impl FnOnce(&mut Container) -> R) -> StoreResult<R> {
        let mut pools = self.write();
        let containers = pools.get_mut(cont.pool()).ok_or_else(|| pool_missing(cont.pool()))?;
        let c = containers
            .get_mut(cont.name())
            .ok_or_else(|| container_missing(cont.pool(), cont.name()))?;
        Ok(f(c))
    }

    /// Canonical sorted listing of the whole store.
    pub fn dump(&self) -> Listing {
        let pools = self.read();
        let mut entries = Vec::new();
        for (pool, containers) in pools.iter() {
            entries.push(Entry::pool(pool.as_str()));
            for (name, c) in containers {
                let prefix = format!("{pool}/{name}");
                entries.push(Entry::container(&prefix));
                for (oid, keys) in &c.kvs {
                    for (key, value) in keys {
                        let path = format!("{prefix}/{oid}/{}", keyname::encode_key_bytes(key.as_bytes()));
                        entries.push(Entry::kv(path, value));
                    }
                }
                for (oid, data) in &c.arrays {
                    entries.push(Entry::array(format!("{prefix}/{oid}"), data));
                }
            }
        }
        Listing::from_entries(entries)
    }
}

impl ObjectStore for MemoryStore {
    fn backend_name(&self) -> &'static str {
        "memory"
    }

    fn pool_create(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        let mut pools = self.write();
        if pools.contains_key(name) {
            return Err(StoreError::new(ErrorKind::AlreadyExists, format!("pool {name}")));
        }
        pools.insert(name.clone(), BTreeMap::new());
        Ok(PoolHandle::new(name.clone()))
    }

    fn pool_connect(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        if self.read().contains_key(name) {
            Ok(PoolHandle::new(name.clone()))
        } else {
            Err(pool_missing(name))
        }
    }

    fn pool_destroy(&self, name: &PoolName) -> StoreResult<()> {
        self.write().remove(name).map(drop).ok_or_else(|| pool_missing(name))
    }

    fn container_create(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        let mut pools = self.write();
        let containers = pools.get_mut(pool.name()).ok_or_else(|| pool_missing(pool.name()))?;
        if containers.contains_key(name) {
            return Err(StoreError::new(
                ErrorKind::AlreadyExists,
                format!("container {}/{name}", pool.name()),
            ));
        }
        containers.insert(name.clone(), Container::default());
        Ok(ContainerHandle::new(pool, name.clone()))
    }

    fn container_open(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        if self.container_exists(pool, name)? {
            Ok(ContainerHandle::new(pool, name.clone()))
        } else {
            Err(container_missing(pool.name(), name))
        }
    }

    fn container_exists(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<bool> {
        let pools = self.read();
        let containers = pools.get(pool.name()).ok_or_else(|| pool_missing(pool.name()))?;
        Ok(containers.contains_key(name))
    }

    fn kv_object_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        self.with_container(cont, |c| c.kvs.contains_key(&oid))
    }

    fn kv_put(&self, kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<()> {
        check_put(kv, key, value)?;
        let value = Arc::new(value.to_vec());
        self.with_container_mut(kv.container(), |c| {
            c.kvs.entry(kv.oid()).or_default().insert(key.to_owned(), value);
        })
    }

    fn kv_get(&self, kv: &KvHandle, key: &str) -> StoreResult<Vec<u8>> {
        keyname::validate_key(key)?;
        self.with_container(kv.container(), |c| {
            c.kvs.get(&kv.oid()).and_then(|keys| keys.get(key)).cloned()
        })?
        .map(|v| v.as_ref().clone())
        .ok_or_else(|| StoreError::new(ErrorKind::KeyNotFound, format!("key {key:?} in object {}", kv.oid())))
    }

    fn kv_key_exists(&self, kv: &KvHandle, key: &str) -> StoreResult<bool> {
        keyname::validate_key(key)?;
        self.with_container(kv.container(), |c| {
            c.kvs.get(&kv.oid()).is_some_and(|keys| keys.contains_key(key))
        })
    }

    fn array_write(&self, cont: &ContainerHandle, oid: ObjectId, data: &[u8]) -> StoreResult<()> {
        check_array(oid, data)?;
        let data = Arc::new(data.to_vec());
        self.with_container_mut(cont, |c| {
            c.arrays.insert(oid, data);
        })
    }

    fn array_read(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<Vec<u8>> {
        self.with_container(cont, |c| c.arrays.get(&oid).cloned())?
            .map(|v| v.as_ref().clone())
            .ok_or_else(|| StoreError::new(ErrorKind::ObjectNotFound, format!("array {oid}")))
    }

    fn array_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        self.with_container(cont, |c| c.arrays.contains_key(&oid))
    }
}
