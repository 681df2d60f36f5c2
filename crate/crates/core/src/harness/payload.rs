//! Deterministic workload: field keys and self-validating payloads.
//!
//! A payload of at least [`HEADER_LEN`] bytes starts with a header
//!
//! ```text
//! [0..8)   FNV-1a 64 of the serialized field key, little-endian
//! [8..16)  total payload length, little-endian
//! [16..20) CRC-32 of bytes [20..), little-endian
//! ```
//!
//! followed by seeded pseudorandom bytes. Readers validate the header alone.
//! Shorter payloads are validated by regenerating them.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fieldio::FieldKey;

pub const HEADER_LEN: usize = 20;
const SLACK: usize = 4096;

pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// splitmix64 finalizer over the combined inputs.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9e37_79b9_7f4a_7c15).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of the `iter`-th field written by `worker_id` in `dataset`.
///
/// The group is unique per (dataset, worker) so global-index registrations
/// from different writers never overwrite each other.
pub fn field_key(seed: u64, dataset: &str, worker_id: u32, iter: u64) -> FieldKey {
    let tag = mix(mix(seed, u64::from(worker_id)), iter) as u32;
    FieldKey::new(format!("{dataset}.w{worker_id}"), format!("f{iter:06}.{tag:08x}"))
        .expect("generated keys are non-empty")
}

/// Seeded byte source for one worker's payloads.
#[derive(Debug, Clone)]
pub struct PayloadSource {
    base: Vec<u8>,
    size: usize,
}

impl PayloadSource {
    pub fn new(seed: u64, dataset: &str, worker_id: u32, size: u64) -> Self {
        let size = usize::try_from(size).expect("object size fits in memory");
        let stream = mix(mix(seed, fnv1a(dataset.as_bytes())), u64::from(worker_id));
        let mut base = vec![0u8; size + SLACK];
        ChaCha8Rng::seed_from_u64(stream).fill_bytes(&mut base);
        Self { base, size }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn offset(iter: u64) -> usize {
        ((iter.wrapping_mul(4093)) % SLACK as u64) as usize
    }

    /// Fills `buf` with the payload of the `iter`-th field.
    pub fn fill(&self, key: &FieldKey, iter: u64, buf: &mut Vec<u8>) {
        buf.clear();
        let off = Self::offset(iter);
        if self.size < HEADER_LEN {
            buf.extend_from_slice(&self.base[off..off + self.size]);
            return;
        }
        let body = &self.base[off..off + self.size - HEADER_LEN];
        buf.extend_from_slice(&fnv1a(key.serialize().as_bytes()).to_le_bytes());
        buf.extend_from_slice(&(self.size as u64).to_le_bytes());
        buf.extend_from_slice(&crc32fast::hash(body).to_le_bytes());
        buf.extend_from_slice(body);
    }

    pub fn payload(&self, key: &FieldKey, iter: u64) -> Vec<u8> {
        let mut buf = Vec::with_capacity(self.size);
        self.fill(key, iter, &mut buf);
        buf
    }

    /// Checks that `data` is an intact payload for `key`.
    pub fn validate(&self, key: &FieldKey, iter: u64, data: &[u8]) -> Result<(), String> {
        if data.len() != self.size {
            return Err(format!("field {key}: {} bytes, expected {}", data.len(), self.size));
        }
        if self.size < HEADER_LEN {
            return if data == self.payload(key, iter) {
                Ok(())
            } else {
                Err(format!("field {key}: content mismatch"))
            };
        }
        validate_header(key, data)
    }
}

/// Header-only validation; needs no generator state.
pub fn validate_header(key: &FieldKey, data: &[u8]) -> Result<(), String> {
    if data.len() < HEADER_LEN {
        return Err(format!("field {key}: {} bytes is shorter than the header", data.len()));
    }
    let word = |r: std::ops::Range<usize>| u64::from_le_bytes(data[r].try_into().unwrap());
    if word(0..8) != fnv1a(key.serialize().as_bytes()) {
        return Err(format!("field {key}: header belongs to another key"));
    }
    if word(8..16) != data.len() as u64 {
        return Err(format!("field {key}: header length {} != {}", word(8..16), data.len()));
    }
    let crc = u32::from_le_bytes(data[16..20].try_into().unwrap());
    if crc != crc32fast::hash(&data[HEADER_LEN..]) {
        return Err(format!("field {key}: CRC mismatch"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_known_values() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn payloads_are_deterministic_and_valid() {
        let a = PayloadSource::new(42, "a", 3, 1 << 20);
        let b = PayloadSource::new(42, "a", 3, 1 << 20);
        let key = field_key(42, "a", 3, 7);
        assert_eq!(key, field_key(42, "a", 3, 7));
        let p = a.payload(&key, 7);
        assert_eq!(p.len(), 1 << 20);
        assert_eq!(p, b.payload(&key, 7));
        a.validate(&key, 7, &p).unwrap();
        assert_ne!(p, a.payload(&field_key(42, "a", 3, 8), 8));
        assert_ne!(p, PayloadSource::new(43, "a", 3, 1 << 20).payload(&key, 7));
    }

    #[test]
    fn detects_damage() {
        let src = PayloadSource::new(1, "a", 0, 4096);
        let key = field_key(1, "a", 0, 0);
        let mut p = src.payload(&key, 0);
        p[100] ^= 1;
        assert!(src.validate(&key, 0, &p).is_err());
        let p = src.payload(&key, 0);
        assert!(src.validate(&key, 0, &p[..4000]).is_err());
        let other = field_key(1, "a", 0, 1);
        assert!(validate_header(&other, &p).is_err());
    }

    #[test]
    fn tiny_payloads() {
        for size in [0u64, 1, 19, 20, 21] {
            let src = PayloadSource::new(5, "pre", 1, size);
            let key = field_key(5, "pre", 1, 2);
            let p = src.payload(&key, 2);
            assert_eq!(p.len() as u64, size);
            src.validate(&key, 2, &p).unwrap();
        }
    }
}
