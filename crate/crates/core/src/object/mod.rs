//! Backend-neutral object store contract: pools, containers, key-value
//! objects and array objects.
//!
//! Handles are plain values naming what they refer to. They can only be
//! obtained through a successful create/connect/open call and are freely
//! shareable between threads.

mod error;
mod id;
mod name;

pub use error::{ErrorKind, StoreError, StoreResult};
pub use id::ObjectId;
pub use name::{ContainerName, PoolName, MAX_NAME_LEN};

use crate::keyname;

/// Largest KV value accepted by `kv_put`.
pub const MAX_VALUE_LEN: usize = 64 << 20;
/// Largest array accepted by `array_write`.
pub const MAX_ARRAY_LEN: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PoolHandle {
    pool: PoolName,
}

impl PoolHandle {
    pub(crate) fn new(pool: PoolName) -> Self {
        Self { pool }
    }

    pub fn name(&self) -> &PoolName {
        &self.pool
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ContainerHandle {
    pool: PoolName,
    container: ContainerName,
}

impl ContainerHandle {
    pub(crate) fn new(pool: &PoolHandle, container: ContainerName) -> Self {
        Self {
            pool: pool.pool.clone(),
            container,
        }
    }

    pub fn pool(&self) -> &PoolName {
        &self.pool
    }

    pub fn name(&self) -> &ContainerName {
        &self.container
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KvHandle {
    container: ContainerHandle,
    oid: ObjectId,
}

impl KvHandle {
    pub(crate) fn new(container: &ContainerHandle, oid: ObjectId) -> Self {
        Self {
            container: container.clone(),
            oid,
        }
    }

    pub fn container(&self) -> &ContainerHandle {
        &self.container
    }

    pub fn oid(&self) -> ObjectId {
        self.oid
    }
}

/// The storage contract implemented by every backend.
///
/// All operations are individually atomic from an observer's point of view.
/// There are no cross-operation transactions.
pub trait ObjectStore: Send + Sync {
    /// Short identifier used in reports (`posix`, `memory`).
    fn backend_name(&self) -> &'static str;

    fn pool_create(&self, name: &PoolName) -> StoreResult<PoolHandle>;
    fn pool_connect(&self, name: &PoolName) -> StoreResult<PoolHandle>;
    /// Removes a pool and everything in it. Used between benchmark repetitions.
    fn pool_destroy(&self, name: &PoolName) -> StoreResult<()>;

    fn container_create(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle>;
    fn container_open(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle>;
    fn container_exists(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<bool>;

    /// Returns a handle without touching storage; the object materializes on
    /// the first `kv_put`.
    fn kv_open(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<KvHandle> {
        Ok(KvHandle::new(cont, oid.check_user()?))
    }
    fn kv_object_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool>;
    fn kv_put(&self, kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<()>;
    fn kv_get(&self, kv: &KvHandle, key: &str) -> StoreResult<Vec<u8>>;
    fn kv_key_exists(&self, kv: &KvHandle, key: &str) -> StoreResult<bool>;

    fn array_write(&self, cont: &ContainerHandle, oid: ObjectId, data: &[u8]) -> StoreResult<()>;
    fn array_read(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<Vec<u8>>;
    fn array_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool>;
}

/// Shared argument checks for `kv_put`; returns the encoded key.
pub(crate) fn check_put(kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<String> {
    kv.oid().check_user()?;
    let encoded = keyname::validate_key(key)?;
    if value.len() > MAX_VALUE_LEN {
        return Err(StoreError::new(
            ErrorKind::IoFailure,
            format!("value of {} bytes exceeds the 64 MiB cap", value.len()),
        ));
    }
    Ok(encoded)
}

pub(crate) fn check_array(oid: ObjectId, data: &[u8]) -> StoreResult<()> {
    oid.check_user()?;
    if data.len() > MAX_ARRAY_LEN {
        return Err(StoreError::new(
            ErrorKind::IoFailure,
            format!("array of {} bytes exceeds the 1 GiB cap", data.len()),
        ));
    }
    Ok(())
}

impl<T: ObjectStore + ?Sized> ObjectStore for &T {
    fn backend_name(&self) -> &'static str {
        (**self).backend_name()
    }
    fn pool_create(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        (**self).pool_create(name)
    }
    fn pool_connect(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        (**self).pool_connect(name)
    }
    fn pool_destroy(&self, name: &PoolName) -> StoreResult<()> {
        (**self).pool_destroy(name)
    }
    fn container_create(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        (**self).container_create(pool, name)
    }
    fn container_open(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        (**self).container_open(pool, name)
    }
    fn container_exists(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<bool> {
        (**self).container_exists(pool, name)
    }
    fn kv_open(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<KvHandle> {
        (**self).kv_open(cont, oid)
    }
    fn kv_object_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        (**self).kv_object_exists(cont, oid)
    }
    fn kv_put(&self, kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<()> {
        (**self).kv_put(kv, key, value)
    }
    fn kv_get(&self, kv: &KvHandle, key: &str) -> StoreResult<Vec<u8>> {
        (**self).kv_get(kv, key)
    }
    fn kv_key_exists(&self, kv: &KvHandle, key: &str) -> StoreResult<bool> {
        (**self).kv_key_exists(kv, key)
    }
    fn array_write(&self, cont: &ContainerHandle, oid: ObjectId, data: &[u8]) -> StoreResult<()> {
        (**self).array_write(cont, oid, data)
    }
    fn array_read(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<Vec<u8>> {
        (**self).array_read(cont, oid)
    }
    fn array_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        (**self).array_exists(cont, oid)
    }
}
