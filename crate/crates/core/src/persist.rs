//! Shared helpers for the versioned JSON artifact files.

use sha2::{Digest, Sha256};

/// Lower-case hex SHA-256.
pub fn checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads the top-level `version` field without committing to a schema.
pub(crate) fn probe_version(bytes: &[u8]) -> Result<u64, String> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| e.to_string())?;
    value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| "missing or non-integer 'version'".to_string())
}
