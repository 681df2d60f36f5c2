use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::fieldio::FieldioMode;

pub const KIB: u64 = 1 << 10;
pub const MIB: u64 = 1 << 20;
pub const GIB: u64 = 1 << 30;

/// Parses `123`, `123B`, `4KiB`, `1MiB`, `2GiB` (1024-based).
pub fn parse_size(text: &str) -> Result<u64, String> {
    let text = text.trim();
    let split = text.find(|c: char| !c.is_ascii_digit()).unwrap_or(text.len());
    let (digits, unit) = text.split_at(split);
    if digits.is_empty() {
        return Err(format!("invalid size {text:?}"));
    }
    let n: u64 = digits.parse().map_err(|_| format!("invalid size {text:?}"))?;
    let scale = match unit {
        "" | "B" => 1,
        "KiB" => KIB,
        "MiB" => MIB,
        "GiB" => GIB,
        _ => return Err(format!("invalid size unit in {text:?} (use B, KiB, MiB or GiB)")),
    };
    n.checked_mul(scale).ok_or_else(|| format!("size {text:?} overflows"))
}

/// Renders a byte count with the largest exact 1024-based unit.
pub fn format_size(bytes: u64) -> String {
    for (scale, unit) in [(GIB, "GiB"), (MIB, "MiB"), (KIB, "KiB")] {
        if bytes >= scale && bytes % scale == 0 {
            return format!("{}{unit}", bytes / scale);
        }
    }
    format!("{bytes}B")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    #[serde(rename = "a")]
    A,
    #[serde(rename = "b")]
    B,
}

impl Pattern {
    pub fn as_str(self) -> &'static str {
        match self {
            Pattern::A => "a",
            Pattern::B => "b",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "A" => Ok(Pattern::A),
            "b" | "B" => Ok(Pattern::B),
            other => Err(format!("unknown pattern {other:?} (expected a or b)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BackendKind {
    #[serde(rename = "posix")]
    Posix,
    #[serde(rename = "memory")]
    Memory,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Posix => "posix",
            BackendKind::Memory => "memory",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BackendKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "posix" => Ok(BackendKind::Posix),
            "memory" => Ok(BackendKind::Memory),
            other => Err(format!("unknown backend {other:?} (expected posix or memory)")),
        }
    }
}

/// How workers are executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Launcher {
    /// Threads of the orchestrating process.
    Threads,
    /// Child processes running `<exe> worker --task <json>`.
    Processes { exe: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub pattern: Pattern,
    pub mode: FieldioMode,
    pub backend: BackendKind,
    pub root: Option<PathBuf>,
    pub nodes: u32,
    pub workers_per_node: u32,
    pub iterations: u64,
    pub object_size: u64,
    pub repetitions: u32,
    pub seed: u64,
    pub launcher: Launcher,
    pub barrier_timeout: Duration,
    /// Keep the last repetition's pool instead of destroying it.
    pub keep_data: bool,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            pattern: Pattern::A,
            mode: FieldioMode::Full,
            backend: BackendKind::Posix,
            root: None,
            nodes: 2,
            workers_per_node: 24,
            iterations: 2000,
            object_size: MIB,
            repetitions: 5,
            seed: 0,
            launcher: Launcher::Threads,
            barrier_timeout: Duration::from_secs(60),
            keep_data: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigInvalid(pub String);

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), ConfigInvalid> {
        let bad = |msg: &str| Err(ConfigInvalid(msg.to_owned()));
        if self.nodes == 0 || self.workers_per_node == 0 || self.iterations == 0 || self.repetitions == 0 {
            return bad("nodes, workers-per-node, iterations and reps must all be at least 1");
        }
        if self.pattern == Pattern::B && self.nodes % 2 != 0 {
            return bad("pattern b needs an even node count (half write, half read)");
        }
        if self.total_workers().is_none() {
            return bad("too many workers");
        }
        validate_backend(self.backend, self.root.as_ref(), &self.launcher)
    }

    pub fn total_workers(&self) -> Option<u32> {
        self.nodes.checked_mul(self.workers_per_node).filter(|&n| n < u32::MAX)
    }
}

pub(crate) fn validate_backend(
    backend: BackendKind,
    root: Option<&PathBuf>,
    launcher: &Launcher,
) -> Result<(), ConfigInvalid> {
    match (backend, launcher) {
        (BackendKind::Memory, Launcher::Processes { .. }) => Err(ConfigInvalid(
            "the memory backend cannot be shared across processes; use threaded workers".into(),
        )),
        (BackendKind::Posix, _) => match root {
            None => Err(ConfigInvalid("the posix backend needs a root directory".into())),
            Some(r) if !r.is_dir() => Err(ConfigInvalid(format!("root {} is not a directory", r.display()))),
            Some(_) => Ok(()),
        },
        (BackendKind::Memory, Launcher::Threads) => Ok(()),
    }
}
