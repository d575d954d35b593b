//! Raw little-endian f32 file IO. Save-then-load is bitwise identity;
//! non-finite values are rejected at ingestion with the first offending
//! index.

use std::fs;
use std::path::Path;

use zcl_core::FloatField;

use crate::error::{Error, Result};

/// Load a raw f32 field; `count` reads only a prefix.
pub fn load_raw_f32(path: &Path, count: Option<usize>) -> Result<FloatField> {
    let bytes = fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(Error::Param(format!(
            "{}: {} bytes is not a whole number of f32s",
            path.display(),
            bytes.len()
        )));
    }
    let available = bytes.len() / 4;
    let take = match count {
        Some(c) if c > available => {
            return Err(Error::Param(format!(
                "{}: requested {c} values but file holds {available}",
                path.display()
            )));
        }
        Some(c) => c,
        None => available,
    };
    let mut values = Vec::with_capacity(take);
    for (i, chunk) in bytes.chunks_exact(4).take(take).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::Param(format!(
                "{}: non-finite value at index {i}",
                path.display()
            )));
        }
        values.push(v);
    }
    Ok(FloatField::new(values)?)
}

pub fn save_raw_f32(path: &Path, field: &FloatField) -> Result<()> {
    let mut bytes = Vec::with_capacity(field.len() * 4);
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn save_then_load_is_bitwise_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.f32");
        let field = FloatField::new(vec![1.5, -2.25, 0.0, f32::MIN_POSITIVE]).unwrap();
        save_raw_f32(&path, &field).unwrap();
        let back = load_raw_f32(&path, None).unwrap();
        assert_eq!(back.values(), field.values());
    }

    #[test]
    fn ragged_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.f32");
        std::fs::write(&path, [0u8; 10]).unwrap();
        assert!(matches!(load_raw_f32(&path, None), Err(Error::Param(_))));
    }

    #[test]
    fn count_reads_a_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.f32");
        let field = FloatField::new((0..10).map(|i| i as f32).collect()).unwrap();
        save_raw_f32(&path, &field).unwrap();
        let back = load_raw_f32(&path, Some(3)).unwrap();
        assert_eq!(back.values(), &[0.0, 1.0, 2.0]);
        assert!(load_raw_f32(&path, Some(11)).is_err());
    }

    #[test]
    fn non_finite_value_names_first_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.f32");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&1.0f32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        let err = load_raw_f32(&path, None).unwrap_err();
        assert!(err.to_string().contains("index 1"));
    }
}
