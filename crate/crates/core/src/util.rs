use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON serialisation of `value`.
pub fn json_hash<S: serde::Serialize>(value: &S) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serialisable"))
}
