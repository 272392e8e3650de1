//! Byte-stable JSON: keys sorted, floats in shortest round-trip form,
//! compact, newline-terminated.

use serde::Serialize;

use crate::error::{Result, ServiceError};

pub fn to_canonical_vec<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    // `Value` objects are BTreeMaps, so keys come out sorted at every depth
    let v = serde_json::to_value(value).map_err(|e| ServiceError::Validation(e.to_string()))?;
    let mut out = serde_json::to_vec(&v).map_err(|e| ServiceError::Validation(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}
