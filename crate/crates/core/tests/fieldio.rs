mod common;

use fieldstore::fieldio::{
    check_index_consistency, ArrayLocator, FieldKey, FieldioMode, FieldioSession, IndexTopology,
};
use fieldstore::harness::payload::{field_key, PayloadSource};
use fieldstore::listing::EntryKind;
use fieldstore::memory::MemoryStore;
use fieldstore::object::{ErrorKind, ObjectStore, PoolName};
use fieldstore::posix::PosixStore;

fn dirs(path: &std::path::Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(path)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn session_open_creates_topology_containers() {
    let dir = common::scratch();
    let store = PosixStore::init(dir.path()).unwrap();
    let full = store.pool_create(&PoolName::new("full").unwrap()).unwrap();
    FieldioSession::open(&store, &full, IndexTopology::new(FieldioMode::Full), 3, 1).unwrap();
    assert_eq!(dirs(&dir.path().join("full")), ["arr.n1.w3", "idx.global", "idx.n1"]);
    let nc = store.pool_create(&PoolName::new("nc").unwrap()).unwrap();
    FieldioSession::open(&store, &nc, IndexTopology::new(FieldioMode::NoContainers), 3, 1).unwrap();
    assert_eq!(dirs(&dir.path().join("nc")), ["shared"]);
}

#[test]
fn concurrent_session_open_on_one_node() {
    let dir = common::scratch();
    let store = PosixStore::init(dir.path()).unwrap();
    let pool = store.pool_create(&PoolName::new("p").unwrap()).unwrap();
    std::thread::scope(|s| {
        for w in 0..8 {
            let (store, pool) = (&store, &pool);
            s.spawn(move || {
                FieldioSession::open(store, pool, IndexTopology::new(FieldioMode::Full), w, 0).unwrap();
            });
        }
    });
    assert_eq!(dirs(&dir.path().join("p")).len(), 8 + 2);
}

#[test]
fn one_mib_field_is_indexed_with_its_length() {
    let store = MemoryStore::new();
    let pool = store.pool_create(&PoolName::new("p").unwrap()).unwrap();
    let topo = IndexTopology::new(FieldioMode::Full);
    let mut s = FieldioSession::open(&store, &pool, topo, 0, 0).unwrap();
    let key = FieldKey::new("s1", "f0").unwrap();
    s.field_write(&key, &vec![1u8; 1 << 20]).unwrap();
    let (cont, oid) = topo.node_index(0);
    let cont = store.container_open(&pool, &cont).unwrap();
    let kv = store.kv_open(&cont, oid).unwrap();
    let loc = ArrayLocator::from_bytes(&store.kv_get(&kv, "s1:f0").unwrap()).unwrap();
    assert_eq!(loc.length, 1_048_576);
    assert_eq!(s.field_read(&key).unwrap().len(), 1 << 20);
    assert_eq!(
        s.field_read(&FieldKey::new("s1", "never").unwrap()).unwrap_err().kind,
        ErrorKind::KeyNotFound
    );
}

#[test]
fn two_thousand_writes_by_one_worker() {
    let store = MemoryStore::new();
    let pool = store.pool_create(&PoolName::new("p").unwrap()).unwrap();
    let topo = IndexTopology::new(FieldioMode::Full);
    let mut s = FieldioSession::open(&store, &pool, topo, 0, 0).unwrap();
    for i in 0..2000 {
        s.field_write(&FieldKey::new("g", format!("f{i}")).unwrap(), &[i as u8; 16]).unwrap();
    }
    let dump = store.dump();
    assert_eq!(dump.count(EntryKind::Array), 2000);
    let node_keys = dump.lines().iter().filter(|l| l.starts_with("KV p/idx.n0/")).count();
    assert_eq!(node_keys, 2000);
    let checked = check_index_consistency(&store, &pool, topo, [0], |_| {
        (0..2000).map(|i| FieldKey::new("g", format!("f{i}")).unwrap()).collect()
    })
    .unwrap();
    assert_eq!(checked, 2000);
}

/// Writer i writes 100 fields, reader i (a fresh session with the same
/// identity) reads them back and validates every payload.
fn paired_write_read(store: &dyn ObjectStore, mode: FieldioMode) {
    let pool = store.pool_create(&PoolName::new("pair").unwrap()).unwrap();
    let topo = IndexTopology::new(mode);
    let workers = [(0u32, 0u32), (1, 0), (2, 1), (3, 1)];
    for &(w, n) in &workers {
        let mut s = FieldioSession::open(store, &pool, topo, w, n).unwrap();
        let src = PayloadSource::new(11, "a", w, 4096);
        for i in 0..100 {
            let key = field_key(11, "a", w, i);
            s.field_write(&key, &src.payload(&key, i)).unwrap();
        }
    }
    for &(w, n) in &workers {
        let mut s = FieldioSession::open(store, &pool, topo, w, n).unwrap();
        let src = PayloadSource::new(11, "a", w, 4096);
        for i in 0..100 {
            let key = field_key(11, "a", w, i);
            let data = s.field_read(&key).unwrap();
            src.validate(&key, i, &data).unwrap();
        }
    }
}

#[test]
fn paired_reads_return_written_payloads_on_both_backends() {
    for mode in [FieldioMode::Full, FieldioMode::NoContainers] {
        let dir = common::scratch();
        paired_write_read(&PosixStore::init(dir.path()).unwrap(), mode);
        paired_write_read(&MemoryStore::new(), mode);
    }
}

fn array_dirs(root: &std::path::Path, pool: &str) -> Vec<String> {
    let mut out = Vec::new();
    for c in dirs(&root.join(pool)) {
        if dirs(&root.join(pool).join(&c)).iter().any(|f| f.ends_with(".arr")) {
            out.push(c);
        }
    }
    out
}

#[test]
fn mode_layout_by_tree_walk() {
    let dir = common::scratch();
    let store = PosixStore::init(dir.path()).unwrap();
    for (name, mode) in [("full", FieldioMode::Full), ("nc", FieldioMode::NoContainers)] {
        let pool = store.pool_create(&PoolName::new(name).unwrap()).unwrap();
        for w in 0..6 {
            let mut s = FieldioSession::open(&store, &pool, IndexTopology::new(mode), w, w / 3).unwrap();
            for i in 0..3 {
                s.field_write(&FieldKey::new(format!("g{w}"), format!("f{i}")).unwrap(), b"data").unwrap();
            }
        }
    }
    assert_eq!(array_dirs(dir.path(), "full").len(), 6);
    assert_eq!(array_dirs(dir.path(), "nc"), ["shared"]);
    let shared = dirs(&dir.path().join("nc/shared"));
    assert_eq!(shared.iter().filter(|f| f.ends_with(".arr")).count(), 18);
}
