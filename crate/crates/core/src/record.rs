//! Per-worker timing records and the line format workers use to report them.
//!
//! ```text
//! REC worker=<id> phase=<w|r|p> start=<f64> end=<f64> bytes=<u64> ops=<u64>
//! ```

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[serde(rename = "write")]
    Write,
    #[serde(rename = "read")]
    Read,
    #[serde(rename = "populate")]
    Populate,
}

impl Phase {
    pub fn code(self) -> char {
        match self {
            Phase::Write => 'w',
            Phase::Read => 'r',
            Phase::Populate => 'p',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "w" => Some(Phase::Write),
            "r" => Some(Phase::Read),
            "p" => Some(Phase::Populate),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Write => "write",
            Phase::Read => "read",
            Phase::Populate => "populate",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Phase {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "write" | "w" => Ok(Phase::Write),
            "read" | "r" => Ok(Phase::Read),
            "populate" | "p" => Ok(Phase::Populate),
            other => Err(format!("unknown phase {other:?}")),
        }
    }
}

/// What one worker did in one phase. Times are seconds since the run epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub worker_id: u32,
    pub phase: Phase,
    pub start: f64,
    pub end: f64,
    pub bytes: u64,
    pub ops: u64,
}

impl TimingRecord {
    pub fn elapsed(&self) -> f64 {
        self.end - self.start
    }

    pub fn to_line(&self) -> String {
        self.to_string()
    }

    pub fn parse_line(line: &str) -> Result<Self, String> {
        let mut fields = line.split_ascii_whitespace();
        if fields.next() != Some("REC") {
            return Err(format!("not a REC line: {line:?}"));
        }
        let mut get = |name: &str| -> Result<&str, String> {
            let field = fields.next().ok_or_else(|| format!("missing {name} in {line:?}"))?;
            field
                .strip_prefix(name)
                .and_then(|v| v.strip_prefix('='))
                .ok_or_else(|| format!("expected {name}= in {line:?}"))
        };
        let bad = |what: &str| format!("bad {what} in {line:?}");
        let worker_id = get("worker")?.parse().map_err(|_| bad("worker"))?;
        let phase = Phase::from_code(get("phase")?).ok_or_else(|| bad("phase"))?;
        let start = get("start")?.parse().map_err(|_| bad("start"))?;
        let end = get("end")?.parse().map_err(|_| bad("end"))?;
        let bytes = get("bytes")?.parse().map_err(|_| bad("bytes"))?;
        let ops = get("ops")?.parse().map_err(|_| bad("ops"))?;
        if fields.next().is_some() {
            return Err(format!("trailing fields in {line:?}"));
        }
        Ok(Self {
            worker_id,
            phase,
            start,
            end,
            bytes,
            ops,
        })
    }
}

impl fmt::Display for TimingRecord {
    // f64 Display is the shortest representation that parses back exactly.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "REC worker={} phase={} start={} end={} bytes={} ops={}",
            self.worker_id,
            self.phase.code(),
            self.start,
            self.end,
            self.bytes,
            self.ops
        )
    }
}
