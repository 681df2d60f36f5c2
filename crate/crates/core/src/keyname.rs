//! Reversible mapping from KV keys to file names.
//!
//! Bytes in `[A-Za-z0-9._-]` pass through, everything else becomes `%XX`
//! with uppercase hex. A leading `.` is escaped as well so that encoded keys
//! never collide with `.`/`..` or with the dot-prefixed temp files the POSIX
//! backend stages writes in.

use percent_encoding::{percent_decode_str, percent_encode, AsciiSet, NON_ALPHANUMERIC};

use crate::object::{ErrorKind, StoreError};

const ESCAPED: &AsciiSet = &NON_ALPHANUMERIC.remove(b'.').remove(b'_').remove(b'-');

/// Longest encoded key accepted by any backend (`NAME_MAX` on Linux).
pub const MAX_ENCODED_KEY_LEN: usize = 255;

pub fn encode_key_bytes(bytes: &[u8]) -> String {
    match bytes.split_first() {
        Some((b'.', rest)) => {
            let mut out = String::from("%2E");
            out.extend(percent_encode(rest, ESCAPED));
            out
        }
        _ => percent_encode(bytes, ESCAPED).to_string(),
    }
}

/// Maps a key to the file name holding its value.
pub fn map_key_filename(key: &str) -> Result<String, StoreError> {
    if key.is_empty() {
        return Err(StoreError::new(ErrorKind::InvalidName, "empty key"));
    }
    Ok(encode_key_bytes(key.as_bytes()))
}

/// Inverse of [`encode_key_bytes`]. Only canonical encodings are accepted.
pub fn decode_key_filename(name: &str) -> Result<Vec<u8>, StoreError> {
    let bytes: Vec<u8> = percent_decode_str(name).collect();
    if encode_key_bytes(&bytes) != name {
        return Err(StoreError::new(
            ErrorKind::Corrupt,
            format!("{name:?} is not a canonical key file name"),
        ));
    }
    Ok(bytes)
}

/// Checks a key against the shared key contract and returns its file name.
pub fn validate_key(key: &str) -> Result<String, StoreError> {
    let encoded = map_key_filename(key)?;
    if encoded.len() > MAX_ENCODED_KEY_LEN {
        return Err(StoreError::new(
            ErrorKind::InvalidName,
            format!("key encodes to {} bytes (max {MAX_ENCODED_KEY_LEN})", encoded.len()),
        ));
    }
    Ok(encoded)
}
