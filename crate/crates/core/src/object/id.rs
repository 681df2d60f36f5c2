use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::error::{ErrorKind, StoreError};

/// 128-bit object identifier.
///
/// The upper 32 bits are reserved for the backend; only the lower 96 bits
/// may be chosen by users. Rendered as 32 lowercase hex digits, big-endian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectId(u128);

impl ObjectId {
    pub const USER_BITS: u32 = 96;
    pub const USER_MAX: u128 = (1u128 << Self::USER_BITS) - 1;

    /// Builds a user identifier. Fails if `lo` does not fit in 96 bits.
    pub fn new(lo: u128) -> Result<Self, StoreError> {
        if lo > Self::USER_MAX {
            return Err(StoreError::new(
                ErrorKind::InvalidObjectId,
                format!("{lo:#x} exceeds the 96 user-managed bits"),
            ));
        }
        Ok(Self(lo))
    }

    /// Raw constructor that bypasses the reserved-bits check.
    pub const fn from_raw(raw: u128) -> Self {
        Self(raw)
    }

    pub const fn as_u128(self) -> u128 {
        self.0
    }

    pub const fn hi(self) -> u32 {
        (self.0 >> Self::USER_BITS) as u32
    }

    pub const fn lo(self) -> u128 {
        self.0 & Self::USER_MAX
    }

    pub fn is_user(self) -> bool {
        self.hi() == 0
    }

    pub(crate) fn check_user(self) -> Result<Self, StoreError> {
        if self.is_user() {
            Ok(self)
        } else {
            Err(StoreError::new(
                ErrorKind::InvalidObjectId,
                format!("object id {self} has reserved bits set"),
            ))
        }
    }

    pub fn render(self) -> String {
        format!("{:032x}", self.0)
    }

    /// Parses exactly 32 lowercase hex digits. Reserved bits must be zero.
    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let bad = || StoreError::new(ErrorKind::InvalidObjectId, format!("malformed object id {text:?}"));
        if text.len() != 32 || !text.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(bad());
        }
        let raw = u128::from_str_radix(text, 16).map_err(|_| bad())?;
        Self::from_raw(raw).check_user()
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl FromStr for ObjectId {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
