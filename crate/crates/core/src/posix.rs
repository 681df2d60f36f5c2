//! Object store backed by a plain POSIX directory tree.
//!
//! Pools and containers are directories, a KV object is a directory of key
//! files and an array is a single file:
//!
//! ```text
//! <root>/.fieldstore                              sentinel, "fieldstore-v1\n"
//! <root>/<pool>/<container>/<oid32hex>.kv/<encoded-key>
//! <root>/<pool>/<container>/<oid32hex>.arr
//! ```
//!
//! Key files and arrays are staged in a dot-prefixed temp file in the target
//! directory and renamed into place, so readers see either the old or the new
//! content and never a prefix. Nothing is fsynced.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use crate::keyname;
use crate::listing::{Entry, Listing};
use crate::object::{
    check_array, check_put, ContainerHandle, ContainerName, ErrorKind, KvHandle, ObjectId, ObjectStore, PoolHandle,
    PoolName, StoreError, StoreResult,
};

pub const SENTINEL: &str = ".fieldstore";
pub const SENTINEL_CONTENT: &[u8] = b"fieldstore-v1\n";
pub const KV_SUFFIX: &str = ".kv";
pub const ARRAY_SUFFIX: &str = ".arr";

/// Pure mapping from object coordinates to paths under a root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathMapping {
    root: PathBuf,
}

impl PathMapping {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn sentinel(&self) -> PathBuf {
        self.root.join(SENTINEL)
    }

    pub fn pool_dir(&self, pool: &PoolName) -> PathBuf {
        self.root.join(pool.as_str())
    }

    pub fn container_dir(&self, pool: &PoolName, container: &ContainerName) -> PathBuf {
        self.pool_dir(pool).join(container.as_str())
    }

    pub fn kv_dir(&self, pool: &PoolName, container: &ContainerName, oid: ObjectId) -> PathBuf {
        self.container_dir(pool, container).join(format!("{oid}{KV_SUFFIX}"))
    }

    /// `key` must already be validated; see [`keyname::validate_key`].
    pub fn key_file(&self, pool: &PoolName, container: &ContainerName, oid: ObjectId, encoded_key: &str) -> PathBuf {
        self.kv_dir(pool, container, oid).join(encoded_key)
    }

    pub fn array_file(&self, pool: &PoolName, container: &ContainerName, oid: ObjectId) -> PathBuf {
        self.container_dir(pool, container).join(format!("{oid}{ARRAY_SUFFIX}"))
    }
}

static TEMP_COUNTER: AtomicU64 = AtomicU64::new(0);

fn temp_path_for(path: &Path) -> io::Result<PathBuf> {
    let parent = path
        .parent()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no parent"))?;
    let n = TEMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    Ok(parent.join(format!(".tmp-{}-{n}", std::process::id())))
}

fn put_file_io(path: &Path, value: &[u8]) -> io::Result<()> {
    let tmp = temp_path_for(path)?;
    let mut file: File = OpenOptions::new().write(true).create_new(true).open(&tmp)?;
    let staged = file.write_all(value).and_then(|_| fs::rename(&tmp, path));
    if staged.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    staged
}

/// Writes `value` to a unique temp file next to `path` and renames it over
/// `path`.
pub fn atomic_put_file(path: &Path, value: &[u8]) -> StoreResult<()> {
    put_file_io(path, value).map_err(|e| StoreError::io(path.display(), e))
}

#[derive(Debug, Clone)]
pub struct PosixStore {
    map: PathMapping,
}

impl PosixStore {
    /// Opens the store at `root`, writing the sentinel if it is missing.
    /// `root` itself must already exist.
    pub fn init(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let map = PathMapping::new(root);
        let meta = fs::metadata(map.root()).map_err(|e| StoreError::io(map.root().display(), e))?;
        if !meta.is_dir() {
            return Err(StoreError::new(
                ErrorKind::IoFailure,
                format!("{} is not a directory", map.root().display()),
            ));
        }
        match fs::read(map.sentinel()) {
            Ok(_) => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => atomic_put_file(&map.sentinel(), SENTINEL_CONTENT)?,
            Err(e) => return Err(StoreError::io(map.sentinel().display(), e)),
        }
        Self::open(map.root().to_path_buf())
    }

    /// Opens an existing store; the sentinel must be present.
    pub fn open(root: impl Into<PathBuf>) -> StoreResult<Self> {
        let map = PathMapping::new(root);
        let content = fs::read(map.sentinel()).map_err(|e| StoreError::io(map.sentinel().display(), e))?;
        if content != SENTINEL_CONTENT {
            return Err(StoreError::new(
                ErrorKind::Corrupt,
                format!("unexpected sentinel content in {}", map.sentinel().display()),
            ));
        }
        Ok(Self { map })
    }

    pub fn root(&self) -> &Path {
        self.map.root()
    }

    pub fn mapping(&self) -> &PathMapping {
        &self.map
    }

    /// Error for a container whose directory (or pool directory) is gone,
    /// or `None` if both are present.
    fn missing_parent(&self, pool: &PoolName, container: Option<&ContainerName>) -> Option<StoreError> {
        if !self.map.pool_dir(pool).is_dir() {
            return Some(StoreError::new(ErrorKind::PoolNotFound, format!("pool {pool}")));
        }
        match container {
            Some(c) if !self.map.container_dir(pool, c).is_dir() => Some(StoreError::new(
                ErrorKind::ContainerNotFound,
                format!("container {pool}/{c}"),
            )),
            _ => None,
        }
    }

    fn parent_or(&self, cont: &ContainerHandle, fallback: StoreError) -> StoreError {
        self.missing_parent(cont.pool(), Some(cont.name())).unwrap_or(fallback)
    }

    /// Walks the tree and produces the same listing format as the memory
    /// backend's dump.
    pub fn dump(&self) -> StoreResult<Listing> {
        let mut entries = Vec::new();
        for pool in visible_entries(self.root())? {
            let pool_path = self.root().join(&pool);
            if !pool_path.is_dir() {
                return Err(corrupt(&pool_path, "stray file at pool level"));
            }
            entries.push(Entry::pool(&pool));
            for container in visible_entries(&pool_path)? {
                let cont_path = pool_path.join(&container);
                if !cont_path.is_dir() {
                    return Err(corrupt(&cont_path, "stray file at container level"));
                }
                let prefix = format!("{pool}/{container}");
                entries.push(Entry::container(&prefix));
                for object in visible_entries(&cont_path)? {
                    let obj_path = cont_path.join(&object);
                    if let Some(oid) = object.strip_suffix(KV_SUFFIX) {
                        let oid = ObjectId::parse(oid).map_err(|_| corrupt(&obj_path, "bad object id"))?;
                        for key in visible_entries(&obj_path)? {
                            keyname::decode_key_filename(&key)?;
                            let value = read_file(&obj_path.join(&key))?;
                            entries.push(Entry::kv(format!("{prefix}/{oid}/{key}"), &value));
                        }
                    } else if let Some(oid) = object.strip_suffix(ARRAY_SUFFIX) {
                        let oid = ObjectId::parse(oid).map_err(|_| corrupt(&obj_path, "bad object id"))?;
                        let data = read_file(&obj_path)?;
                        entries.push(Entry::array(format!("{prefix}/{oid}"), &data));
                    } else {
                        return Err(corrupt(&obj_path, "unrecognised object entry"));
                    }
                }
            }
        }
        Ok(Listing::from_entries(entries))
    }
}

fn corrupt(path: &Path, why: &str) -> StoreError {
    StoreError::new(ErrorKind::Corrupt, format!("{}: {why}", path.display()))
}

fn read_file(path: &Path) -> StoreResult<Vec<u8>> {
    fs::read(path).map_err(|e| StoreError::io(path.display(), e))
}

/// Sorted names of non-hidden entries in `dir`.
fn visible_entries(dir: &Path) -> StoreResult<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| StoreError::io(dir.display(), e))? {
        let entry = entry.map_err(|e| StoreError::io(dir.display(), e))?;
        let name = entry
            .file_name()
            .into_string()
            .map_err(|_| corrupt(dir, "non UTF-8 entry"))?;
        if !name.starts_with('.') {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}

impl ObjectStore for PosixStore {
    fn backend_name(&self) -> &'static str {
        "posix"
    }

    fn pool_create(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        let dir = self.map.pool_dir(name);
        match fs::create_dir(&dir) {
            Ok(()) => Ok(PoolHandle::new(name.clone())),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(StoreError::new(ErrorKind::AlreadyExists, format!("pool {name}")))
            }
            Err(e) => Err(StoreError::io(dir.display(), e)),
        }
    }

    fn pool_connect(&self, name: &PoolName) -> StoreResult<PoolHandle> {
        if self.map.pool_dir(name).is_dir() {
            Ok(PoolHandle::new(name.clone()))
        } else {
            Err(StoreError::new(ErrorKind::PoolNotFound, format!("pool {name}")))
        }
    }

    fn pool_destroy(&self, name: &PoolName) -> StoreResult<()> {
        let dir = self.map.pool_dir(name);
        match fs::remove_dir_all(&dir) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(StoreError::new(ErrorKind::PoolNotFound, format!("pool {name}")))
            }
            Err(e) => Err(StoreError::io(dir.display(), e)),
        }
    }

    fn container_create(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        let dir = self.map.container_dir(pool.name(), name);
        match fs::create_dir(&dir) {
            Ok(()) => Ok(ContainerHandle::new(pool, name.clone())),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(StoreError::new(
                ErrorKind::AlreadyExists,
                format!("container {}/{name}", pool.name()),
            )),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(self
                .missing_parent(pool.name(), None)
                .unwrap_or_else(|| StoreError::io(dir.display(), e))),
            Err(e) => Err(StoreError::io(dir.display(), e)),
        }
    }

    fn container_open(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<ContainerHandle> {
        if self.container_exists(pool, name)? {
            Ok(ContainerHandle::new(pool, name.clone()))
        } else {
            Err(StoreError::new(
                ErrorKind::ContainerNotFound,
                format!("container {}/{name}", pool.name()),
            ))
        }
    }

    fn container_exists(&self, pool: &PoolHandle, name: &ContainerName) -> StoreResult<bool> {
        if self.map.container_dir(pool.name(), name).is_dir() {
            return Ok(true);
        }
        match self.missing_parent(pool.name(), None) {
            Some(err) => Err(err),
            None => Ok(false),
        }
    }

    fn kv_object_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        if self.map.kv_dir(cont.pool(), cont.name(), oid).is_dir() {
            return Ok(true);
        }
        match self.missing_parent(cont.pool(), Some(cont.name())) {
            Some(err) => Err(err),
            None => Ok(false),
        }
    }

    fn kv_put(&self, kv: &KvHandle, key: &str, value: &[u8]) -> StoreResult<()> {
        let encoded = check_put(kv, key, value)?;
        let cont = kv.container();
        let path = self.map.key_file(cont.pool(), cont.name(), kv.oid(), &encoded);
        match put_file_io(&path, value) {
            Ok(()) => return Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(StoreError::io(path.display(), e)),
        }
        // First put on this object: materialize the KV directory. Another
        // writer may win the race, which is fine.
        let dir = self.map.kv_dir(cont.pool(), cont.name(), kv.oid());
        match fs::create_dir(&dir) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {}
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(self.parent_or(cont, StoreError::io(dir.display(), e)));
            }
            Err(e) => return Err(StoreError::io(dir.display(), e)),
        }
        atomic_put_file(&path, value)
    }

    fn kv_get(&self, kv: &KvHandle, key: &str) -> StoreResult<Vec<u8>> {
        let encoded = keyname::validate_key(key)?;
        let cont = kv.container();
        let path = self.map.key_file(cont.pool(), cont.name(), kv.oid(), &encoded);
        match fs::read(&path) {
            Ok(v) => Ok(v),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(self.parent_or(
                cont,
                StoreError::new(ErrorKind::KeyNotFound, format!("key {key:?} in object {}", kv.oid())),
            )),
            Err(e) => Err(StoreError::io(path.display(), e)),
        }
    }

    fn kv_key_exists(&self, kv: &KvHandle, key: &str) -> StoreResult<bool> {
        let encoded = keyname::validate_key(key)?;
        let cont = kv.container();
        if self.map.key_file(cont.pool(), cont.name(), kv.oid(), &encoded).is_file() {
            return Ok(true);
        }
        match self.missing_parent(cont.pool(), Some(cont.name())) {
            Some(err) => Err(err),
            None => Ok(false),
        }
    }

    fn array_write(&self, cont: &ContainerHandle, oid: ObjectId, data: &[u8]) -> StoreResult<()> {
        check_array(oid, data)?;
        let path = self.map.array_file(cont.pool(), cont.name(), oid);
        put_file_io(&path, data).map_err(|e| {
            if e.kind() == io::ErrorKind::NotFound {
                if let Some(err) = self.missing_parent(cont.pool(), Some(cont.name())) {
                    return err;
                }
            }
            StoreError::io(path.display(), e)
        })
    }

    fn array_read(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<Vec<u8>> {
        let path = self.map.array_file(cont.pool(), cont.name(), oid);
        match fs::read(&path) {
            Ok(v) => Ok(v),
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                Err(self.parent_or(cont, StoreError::new(ErrorKind::ObjectNotFound, format!("array {oid}"))))
            }
            Err(e) => Err(StoreError::io(path.display(), e)),
        }
    }

    fn array_exists(&self, cont: &ContainerHandle, oid: ObjectId) -> StoreResult<bool> {
        if self.map.array_file(cont.pool(), cont.name(), oid).is_file() {
            return Ok(true);
        }
        match self.missing_parent(cont.pool(), Some(cont.name())) {
            Some(err) => Err(err),
            None => Ok(false),
        }
    }
}
