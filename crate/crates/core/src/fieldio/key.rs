use std::fmt;
use std::str::FromStr;

use crate::keyname::{decode_key_filename, encode_key_bytes};
use crate::object::{ContainerName, ErrorKind, ObjectId, StoreError};

/// Identifies one weather field: a partition `group` (e.g. a forecast step)
/// and a `name` unique within that group.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FieldKey {
    group: String,
    name: String,
}

impl FieldKey {
    pub fn new(group: impl Into<String>, name: impl Into<String>) -> Result<Self, StoreError> {
        let (group, name) = (group.into(), name.into());
        if group.is_empty() || name.is_empty() {
            return Err(StoreError::new(
                ErrorKind::InvalidName,
                "field key components must be non-empty",
            ));
        }
        Ok(Self { group, name })
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// `group:name` with each component filename-encoded, so the separator
    /// can never appear inside a component.
    pub fn serialize(&self) -> String {
        format!(
            "{}:{}",
            encode_key_bytes(self.group.as_bytes()),
            encode_key_bytes(self.name.as_bytes())
        )
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let corrupt = || StoreError::new(ErrorKind::Corrupt, format!("malformed field key {text:?}"));
        let (group, name) = text.split_once(':').ok_or_else(corrupt)?;
        let group = String::from_utf8(decode_key_filename(group)?).map_err(|_| corrupt())?;
        let name = String::from_utf8(decode_key_filename(name)?).map_err(|_| corrupt())?;
        Self::new(group, name).map_err(|_| corrupt())
    }
}

impl fmt::Display for FieldKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

/// Pointer stored as a KV value: where an object lives and how long it is.
///
/// Wire form: `cont=<container>;oid=<32hex>;len=<decimal>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArrayLocator {
    pub container: ContainerName,
    pub oid: ObjectId,
    pub length: u64,
}

impl ArrayLocator {
    pub fn new(container: ContainerName, oid: ObjectId, length: u64) -> Self {
        Self { container, oid, length }
    }

    pub fn serialize(&self) -> String {
        self.to_string()
    }

    pub fn parse(text: &str) -> Result<Self, StoreError> {
        let corrupt = || StoreError::new(ErrorKind::Corrupt, format!("malformed array locator {text:?}"));
        let mut parts = text.split(';');
        let (Some(cont), Some(oid), Some(len), None) = (parts.next(), parts.next(), parts.next(), parts.next())
        else {
            return Err(corrupt());
        };
        let cont = cont.strip_prefix("cont=").ok_or_else(corrupt)?;
        let oid = oid.strip_prefix("oid=").ok_or_else(corrupt)?;
        let len = len.strip_prefix("len=").ok_or_else(corrupt)?;
        if len.is_empty() || !len.bytes().all(|b| b.is_ascii_digit()) || (len.len() > 1 && len.starts_with('0')) {
            return Err(corrupt());
        }
        Ok(Self {
            container: ContainerName::new(cont).map_err(|_| corrupt())?,
            oid: ObjectId::parse(oid).map_err(|_| corrupt())?,
            length: len.parse().map_err(|_| corrupt())?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| StoreError::new(ErrorKind::Corrupt, "array locator is not ASCII"))?;
        Self::parse(text)
    }
}

impl fmt::Display for ArrayLocator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cont={};oid={};len={}", self.container, self.oid, self.length)
    }
}

impl FromStr for ArrayLocator {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}
