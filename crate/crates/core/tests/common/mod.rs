#![allow(dead_code)]

use std::path::Path;

use tempfile::TempDir;

/// Scratch directory on tmpfs when available.
pub fn scratch() -> TempDir {
    let shm = Path::new("/dev/shm");
    if shm.is_dir() {
        if let Ok(dir) = tempfile::tempdir_in(shm) {
            return dir;
        }
    }
    tempfile::tempdir().expect("temp dir")
}

pub fn worker_exe() -> std::path::PathBuf {
    env!("CARGO_BIN_EXE_fieldstore").into()
}
