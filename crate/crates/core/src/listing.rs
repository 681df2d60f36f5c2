//! Canonical store listings used to compare backends.
//!
//! One entry per line, sorted:
//!
//! ```text
//! POOL <pool>
//! CONT <pool>/<container>
//! KV   <pool>/<container>/<oid>/<encoded-key> <length> <crc32>
//! ARR  <pool>/<container>/<oid> <length> <crc32>
//! ```
//!
//! (single space separated; the alignment above is only for reading).

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EntryKind {
    Pool,
    Container,
    Kv,
    Array,
}

impl EntryKind {
    fn tag(self) -> &'static str {
        match self {
            EntryKind::Pool => "POOL",
            EntryKind::Container => "CONT",
            EntryKind::Kv => "KV",
            EntryKind::Array => "ARR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub kind: EntryKind,
    pub path: String,
    /// Length and CRC-32 of the payload; only for KV and ARR entries.
    pub payload: Option<(u64, u32)>,
}

impl Entry {
    pub fn pool(path: impl Into<String>) -> Self {
        Self {
            kind: EntryKind::Pool,
            path: path.into(),
            payload: None,
        }
    }

    pub fn container(path: impl Into<String>) -> Self {
        Self {
            kind: EntryKind::Container,
            path: path.into(),
            payload: None,
        }
    }

    pub fn kv(path: impl Into<String>, value: &[u8]) -> Self {
        Self {
            kind: EntryKind::Kv,
            path: path.into(),
            payload: Some((value.len() as u64, crc32fast::hash(value))),
        }
    }

    pub fn array(path: impl Into<String>, data: &[u8]) -> Self {
        Self {
            kind: EntryKind::Array,
            path: path.into(),
            payload: Some((data.len() as u64, crc32fast::hash(data))),
        }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.kind.tag(), self.path)?;
        if let Some((len, crc)) = self.payload {
            write!(f, " {len} {crc:08x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Listing {
    lines: Vec<String>,
}

impl Listing {
    pub fn from_entries(entries: impl IntoIterator<Item = Entry>) -> Self {
        let mut lines: Vec<String> = entries.into_iter().map(|e| e.to_string()).collect();
        lines.sort();
        Self { lines }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Newline-terminated text form; empty for an empty store.
    pub fn render(&self) -> String {
        self.lines.iter().map(|l| format!("{l}\n")).collect()
    }

    /// Lines present in exactly one of the two listings, prefixed `-`/`+`.
    pub fn diff(&self, other: &Listing) -> Vec<String> {
        use std::collections::BTreeSet;
        let a: BTreeSet<_> = self.lines.iter().collect();
        let b: BTreeSet<_> = other.lines.iter().collect();
        a.difference(&b)
            .map(|l| format!("-{l}"))
            .chain(b.difference(&a).map(|l| format!("+{l}")))
            .collect()
    }

    pub fn count(&self, kind: EntryKind) -> usize {
        let prefix = format!("{} ", kind.tag());
        self.lines.iter().filter(|l| l.starts_with(&prefix)).count()
    }
}

impl fmt::Display for Listing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
