//! Content digests used to key caches and stamp artifacts.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 over a label plus the canonical JSON form of `value`, hex-encoded.
///
/// Struct fields serialize in declaration order and floats as shortest
/// round-trip decimals, so equal values always hash equally.
pub fn digest_json<T: Serialize>(label: &str, value: &T) -> String {
    let body = serde_json::to_string(value).expect("digest serialization cannot fail");
    let mut h = Sha256::new();
    h.update(label.as_bytes());
    h.update([0u8]);
    h.update(body.as_bytes());
    let out = h.finalize();
    let mut hex = String::with_capacity(64);
    for b in out {
        use std::fmt::Write;
        write!(hex, "{b:02x}").unwrap();
    }
    hex
}

/// Short prefix for file names.
pub fn short(digest: &str) -> &str {
    &digest[..16.min(digest.len())]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_is_stable_and_label_sensitive() {
        let a = digest_json("map-v1", &(1.5f64, vec![1, 2]));
        let b = digest_json("map-v1", &(1.5f64, vec![1, 2]));
        let c = digest_json("other", &(1.5f64, vec![1, 2]));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn digest_distinguishes_epsilon() {
        let a = digest_json("map-v1", &0.0f64);
        let b = digest_json("map-v1", &0.01f64);
        assert_ne!(a, b);
    }
}
