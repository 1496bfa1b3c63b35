//! Hex-encoded SHA-256 content digests for artifacts and manifests.

use sha2::{Digest, Sha256};

pub fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let out = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

/// Digest of a serializable value's canonical JSON form.
pub fn json_digest<T: serde::Serialize>(value: &T) -> String {
    hex_digest(serde_json::to_string(value).expect("serializable").as_bytes())
}

/// Digest of an f64 slice by exact bit pattern.
pub fn f64_digest(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    hex_digest(&bytes)
}
