//! Binary PGM (P5) image output with min-max normalization to 8 bits.

use std::io::Write;
use std::path::Path;

use zcl_core::FloatField;

use crate::error::{Error, Result};

pub fn write_pgm(path: &Path, field: &FloatField, width: usize, height: usize) -> Result<()> {
    if width * height != field.len() {
        return Err(Error::Param(format!(
            "{width}x{height} does not match {} values",
            field.len()
        )));
    }
    let (lo, hi) = field.min_max();
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut out = Vec::with_capacity(32 + field.len());
    write!(out, "P5\n{width} {height}\n255\n")?;
    for &v in field.values() {
        out.push(((v - lo) * scale).round().clamp(0.0, 255.0) as u8);
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parse the header of a P5 file: (width, height, maxval, pixel offset).
pub fn parse_pgm_header(bytes: &[u8]) -> Result<(usize, usize, usize, usize)> {
    let mut at = 0usize;
    let mut next_token = || -> Result<String> {
        while at < bytes.len() && bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        let start = at;
        while at < bytes.len() && !bytes[at].is_ascii_whitespace() {
            at += 1;
        }
        if start == at {
            return Err(Error::Param("truncated PGM header".to_string()));
        }
        let token = String::from_utf8(bytes[start..at].to_vec())
            .map_err(|_| Error::Param("PGM header is not ASCII".to_string()))?;
        // exactly one whitespace byte separates maxval from pixels
        at += 1;
        Ok(token)
    };
    let magic = next_token()?;
    if magic != "P5" {
        return Err(Error::Param("not a binary PGM (P5) file".to_string()));
    }
    let fields: Vec<String> = (0..3).map(|_| next_token()).collect::<Result<_>>()?;
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Param(format!("bad PGM header field {s:?}")))
    };
    Ok((parse(&fields[0])?, parse(&fields[1])?, parse(&fields[2])?, at))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let field = FloatField::new((0..12).map(|i| i as f32).collect()).unwrap();
        write_pgm(&path, &field, 4, 3).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let (w, h, maxval, offset) = parse_pgm_header(&bytes).unwrap();
        assert_eq!((w, h, maxval), (4, 3, 255));
        assert_eq!(bytes.len() - offset, 12);
        assert_eq!(bytes[offset], 0);
        assert_eq!(*bytes.last().unwrap(), 255);
    }

    #[test]
    fn dimension_mismatch_is_param_error() {
        let dir = tempfile::tempdir().unwrap();
        let field = FloatField::new(vec![1.0; 10]).unwrap();
        assert!(write_pgm(&dir.path().join("x.pgm"), &field, 3, 3).is_err());
    }
}
