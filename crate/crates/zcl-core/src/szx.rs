//! Constant-block baseline codec: blocks whose values all sit within the
//! bound of the block midrange collapse to a single mean value; other
//! blocks store fixed-width quantized offsets from the mean.
//!
//! Frame layout (little-endian):
//!
//! ```text
//! header: "ZSX1" | eb_abs f32 | element_count u64 | block_len u32   (20 bytes)
//! body:   per block:
//!   flag u8: 0 = constant  -> mean f32
//!            1 = non-const -> mean f32 | width u8
//!                             | sign bitmap ceil(b/8) bytes
//!                             | magnitudes, b values at width bits
//! ```
//!
//! Within a constant block the reconstruction is exactly flat (variance
//! zero), which is the mechanism behind this codec's stripe artifacts on
//! smooth data.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::bitio::{pack_bits, unpack_bits};
use crate::error::CodecError;
use crate::field::{resolve_error_bound, ErrorBoundSpec, FloatField};
use crate::zlite::{quantize_exact, quantizer_bound, CodecStats};

pub const MAGIC: [u8; 4] = *b"ZSX1";
pub const HEADER_LEN: usize = 20;
pub const DEFAULT_BLOCK_LEN: usize = 128;

const FLAG_CONSTANT: u8 = 0;
const FLAG_NON_CONSTANT: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SzxFrame {
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SzxHeader {
    pub eb_abs: f32,
    pub element_count: u64,
    pub block_len: u32,
}

impl SzxHeader {
    pub fn parse(bytes: &[u8]) -> Result<SzxHeader, CodecError> {
        if bytes.len() < HEADER_LEN {
            return Err(CodecError::Format {
                offset: bytes.len(),
                what: "frame shorter than header".to_string(),
            });
        }
        if bytes[0..4] != MAGIC {
            return Err(CodecError::Format {
                offset: 0,
                what: format!("bad magic {:02x?}", &bytes[0..4]),
            });
        }
        let eb_abs = f32::from_le_bytes(bytes[4..8].try_into().unwrap());
        let element_count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
        let block_len = u32::from_le_bytes(bytes[16..20].try_into().unwrap());
        if !(eb_abs.is_finite() && eb_abs > 0.0) {
            return Err(CodecError::Format {
                offset: 4,
                what: "eb_abs must be finite and > 0".to_string(),
            });
        }
        if block_len == 0 {
            return Err(CodecError::Format {
                offset: 16,
                what: "block_len must be positive".to_string(),
            });
        }
        Ok(SzxHeader {
            eb_abs,
            element_count,
            block_len,
        })
    }
}

impl SzxFrame {
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        SzxHeader::parse(&bytes)?;
        Ok(SzxFrame { bytes })
    }

    pub fn header(&self) -> SzxHeader {
        SzxHeader::parse(&self.bytes).expect("frame was validated on construction")
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}

pub(crate) fn compress_slice(
    values: &[f32],
    eb_abs: f32,
    block_len: usize,
) -> Result<(Vec<u8>, crate::zlite::MicroCounts), CodecError> {
    if values.is_empty() {
        return Err(CodecError::EmptyField);
    }
    if block_len == 0 {
        return Err(CodecError::InvalidParam("block_len must be positive".to_string()));
    }
    // Same power-of-two quantization grid as the main codec: offsets are
    // taken from the quantized mean on an absolute grid, so the f32
    // reconstruction is exact and the written bound holds with no slack.
    let eb_header = quantizer_bound(eb_abs)?;
    let eb = eb_header as f64;
    let step = 2.0 * eb;
    let mut out = Vec::with_capacity(HEADER_LEN + values.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&eb_header.to_le_bytes());
    out.extend_from_slice(&(values.len() as u64).to_le_bytes());
    out.extend_from_slice(&(block_len as u32).to_le_bytes());

    let mut counts = crate::zlite::MicroCounts::default();
    let mut base = 0usize;
    for block in values.chunks(block_len) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in block {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mean = ((lo as f64 + hi as f64) / 2.0) as f32;
        let constant = block.iter().all(|&v| (v as f64 - mean as f64).abs() <= eb);
        counts.total += 1;
        if constant {
            counts.constant += 1;
            out.push(FLAG_CONSTANT);
            out.extend_from_slice(&mean.to_le_bytes());
        } else {
            out.push(FLAG_NON_CONSTANT);
            out.extend_from_slice(&mean.to_le_bytes());
            let mean_q = quantize_exact(mean, step, base)?;
            let mut qs: Vec<i64> = Vec::with_capacity(block.len());
            for (i, &v) in block.iter().enumerate() {
                qs.push(quantize_exact(v, step, base + i)? - mean_q);
            }
            let max_mag = qs.iter().map(|q| q.unsigned_abs()).max().unwrap_or(0);
            let width = 64 - max_mag.leading_zeros();
            out.push(width as u8);
            if width > 0 {
                let sign_start = out.len();
                out.resize(sign_start + block.len().div_ceil(8), 0);
                for (i, &q) in qs.iter().enumerate() {
                    if q < 0 {
                        out[sign_start + i / 8] |= 1 << (i % 8);
                    }
                }
                pack_bits(qs.iter().map(|q| q.unsigned_abs() as u32), width, &mut out);
            }
        }
        base += block.len();
    }
    Ok((out, counts))
}

pub(crate) fn decode_slice(bytes: &[u8]) -> Result<Vec<f32>, CodecError> {
    let header = SzxHeader::parse(bytes)?;
    let n = header.element_count as usize;
    let block_len = header.block_len as usize;
    let eb = header.eb_abs as f64;
    let step = 2.0 * eb;
    let mut values: Vec<f32> = Vec::with_capacity(n);
    let mut pos = HEADER_LEN;
    let mut remaining = n;
    while remaining > 0 {
        let b = remaining.min(block_len);
        let Some(&flag) = bytes.get(pos) else {
            return Err(CodecError::Format {
                offset: pos,
                what: "missing block flag".to_string(),
            });
        };
        pos += 1;
        let Some(mean_bytes) = bytes.get(pos..pos + 4) else {
            return Err(CodecError::Format {
                offset: pos,
                what: "truncated block mean".to_string(),
            });
        };
        let mean = f32::from_le_bytes(mean_bytes.try_into().unwrap());
        pos += 4;
        if !mean.is_finite() {
            return Err(CodecError::Format {
                offset: pos - 4,
                what: "block mean is not finite".to_string(),
            });
        }
        match flag {
            FLAG_CONSTANT => values.extend(core::iter::repeat(mean).take(b)),
            FLAG_NON_CONSTANT => {
                let Some(&width) = bytes.get(pos) else {
                    return Err(CodecError::Format {
                        offset: pos,
                        what: "missing block width".to_string(),
                    });
                };
                pos += 1;
                if width > 32 {
                    return Err(CodecError::Format {
                        offset: pos - 1,
                        what: format!("block width {width} out of range"),
                    });
                }
                let mean_q = quantize_exact(mean, step, values.len()).map_err(|_| {
                    CodecError::Format {
                        offset: pos - 6,
                        what: "block mean outside quantizer range".to_string(),
                    }
                })?;
                if width == 0 {
                    let x = (step * mean_q as f64) as f32;
                    values.extend(core::iter::repeat(x).take(b));
                } else {
                    let sign_bytes = b.div_ceil(8);
                    if bytes.len() < pos + sign_bytes {
                        return Err(CodecError::Format {
                            offset: pos,
                            what: "truncated sign bitmap".to_string(),
                        });
                    }
                    let sign_start = pos;
                    pos += sign_bytes;
                    let mut mags: Vec<u32> = Vec::with_capacity(b);
                    unpack_bits(bytes, &mut pos, width as u32, b, &mut mags)?;
                    for (i, &mag) in mags.iter().enumerate() {
                        let neg = bytes[sign_start + i / 8] & (1 << (i % 8)) != 0;
                        let q = if neg { -(mag as i64) } else { mag as i64 };
                        let x = (step * (mean_q + q) as f64) as f32;
                        if !x.is_finite() {
                            return Err(CodecError::Format {
                                offset: pos,
                                what: "reconstructed value is not finite".to_string(),
                            });
                        }
                        values.push(x);
                    }
                }
            }
            other => {
                return Err(CodecError::Format {
                    offset: pos - 5,
                    what: format!("invalid block flag {other}"),
                });
            }
        }
        remaining -= b;
    }
    if pos != bytes.len() {
        return Err(CodecError::Format {
            offset: pos,
            what: "trailing bytes after last block".to_string(),
        });
    }
    Ok(values)
}

/// Compress with the default 128-value blocks.
pub fn compress_szx(
    field: &FloatField,
    spec: &ErrorBoundSpec,
) -> Result<(SzxFrame, CodecStats), CodecError> {
    compress_szx_with(field, spec, DEFAULT_BLOCK_LEN)
}

pub fn compress_szx_with(
    field: &FloatField,
    spec: &ErrorBoundSpec,
    block_len: usize,
) -> Result<(SzxFrame, CodecStats), CodecError> {
    let eb_abs = resolve_error_bound(spec, field)?;
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let (bytes, counts) = compress_slice(field.values(), eb_abs, block_len)?;
    #[cfg(feature = "std")]
    let elapsed = start.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let elapsed = 0.0;
    let stats = CodecStats {
        original_bytes: field.len() * 4,
        compressed_bytes: bytes.len(),
        ratio: (field.len() * 4) as f64 / bytes.len() as f64,
        constant_block_fraction: counts.fraction(),
        compress_seconds: elapsed,
        decompress_seconds: 0.0,
    };
    Ok((SzxFrame { bytes }, stats))
}

pub fn decompress_szx(frame: &SzxFrame) -> Result<FloatField, CodecError> {
    let values = decode_slice(frame.as_bytes())?;
    FloatField::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn small_range_block_is_constant_five_bytes() {
        let field = FloatField::new(vec![1.0f32; 128]).unwrap();
        let (frame, stats) = compress_szx(&field, &ErrorBoundSpec::Absolute(1e-3)).unwrap();
        assert_eq!(frame.len(), HEADER_LEN + 5);
        assert_eq!(stats.constant_block_fraction, 1.0);
    }

    #[test]
    fn globally_constant_field_ratio_is_closed_form() {
        let n = 131_072;
        let field = FloatField::new(vec![2.5f32; n]).unwrap();
        let (frame, stats) = compress_szx(&field, &ErrorBoundSpec::Absolute(1e-3)).unwrap();
        let expected_bytes = HEADER_LEN + (n / 128) * 5;
        assert_eq!(frame.len(), expected_bytes);
        let expected_ratio = (4 * n) as f64 / expected_bytes as f64;
        assert!((stats.ratio - expected_ratio).abs() < 1e-12);
    }

    #[test]
    fn constant_block_reconstructs_to_mean() {
        let field = FloatField::new(vec![3.25f32; 128]).unwrap();
        let (frame, _) = compress_szx(&field, &ErrorBoundSpec::Absolute(0.5)).unwrap();
        let out = decompress_szx(&frame).unwrap();
        assert!(out.values().iter().all(|&v| v == 3.25));
    }

    #[test]
    fn round_trip_bound_holds() {
        let values: Vec<f32> = (0..10_000).map(|i| (i as f32 * 0.013).cos() * 25.0).collect();
        let field = FloatField::new(values).unwrap();
        for spec in [ErrorBoundSpec::Absolute(0.01), ErrorBoundSpec::Relative(1e-3)] {
            let eb = resolve_error_bound(&spec, &field).unwrap() as f64;
            let (frame, _) = compress_szx(&field, &spec).unwrap();
            let out = decompress_szx(&frame).unwrap();
            assert_eq!(out.len(), field.len());
            for (a, b) in out.values().iter().zip(field.values()) {
                assert!((*a as f64 - *b as f64).abs() <= eb);
            }
        }
    }

    #[test]
    fn linear_ramp_within_constant_block_flattens() {
        // ramp of 128 values spanning less than 2*eb classifies constant,
        // so the reconstruction has exactly zero variance
        let eb = 0.5f32;
        let values: Vec<f32> = (0..128).map(|i| i as f32 * (0.9 / 127.0)).collect();
        let field = FloatField::new(values).unwrap();
        let (frame, _) = compress_szx(&field, &ErrorBoundSpec::Absolute(eb)).unwrap();
        let out = decompress_szx(&frame).unwrap();
        let first = out.values()[0];
        assert!(out.values().iter().all(|&v| v == first));
    }

    #[test]
    fn corrupted_flag_is_format_error() {
        let field = FloatField::new(vec![1.0f32; 128]).unwrap();
        let (frame, _) = compress_szx(&field, &ErrorBoundSpec::Absolute(1e-3)).unwrap();
        let mut bytes = frame.into_bytes();
        bytes[HEADER_LEN] = 7;
        let frame = SzxFrame::from_bytes(bytes).unwrap();
        assert!(matches!(
            decompress_szx(&frame),
            Err(CodecError::Format { .. })
        ));
    }

    #[test]
    fn tail_block_shorter_than_block_len() {
        let values: Vec<f32> = (0..130).map(|i| (i as f32).sin() * 3.0).collect();
        let field = FloatField::new(values).unwrap();
        let (frame, _) = compress_szx(&field, &ErrorBoundSpec::Absolute(1e-4)).unwrap();
        let out = decompress_szx(&frame).unwrap();
        assert_eq!(out.len(), 130);
    }
}
