//! Error-bounded lossy codec for 32-bit float fields: fused quantization
//! and 1D Lorenzo prediction per thread-block, followed by fixed-length
//! bit-shift encoding of delta micro blocks with a constant-block shortcut.
//!
//! Frame layout (all integers little-endian):
//!
//! ```text
//! header: "ZCL1" | version u8 | eb_abs f32 | element_count u64
//!         | thread_block_len u32 | micro_block_len u32          (25 bytes)
//! body:   per thread-block, in order:
//!         outlier i32 (first quantized value)
//!         per micro block of deltas:
//!           code_len u8                       (0 = constant block, done)
//!           sign bitmap, ceil(b/8) bytes      (bit set = negative)
//!           magnitudes, b values at code_len bits each, LSB-first
//! ```
//!
//! Thread-blocks are independently decodable: prediction state resets at
//! every thread-block boundary, so blocks may be encoded by any number of
//! workers and concatenated in order with bitwise-identical output.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use crate::bitio::{pack_bits, unpack_bits};
use crate::error::CodecError;
use crate::field::{resolve_error_bound, ErrorBoundSpec, FloatField};

pub const MAGIC: [u8; 4] = *b"ZCL1";
pub const FORMAT_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 25;

pub const DEFAULT_THREAD_BLOCK_LEN: usize = 1024;
pub const DEFAULT_MICRO_BLOCK_LEN: usize = 32;

/// Which codec backs an operation that accepts either.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CodecKind {
    ZLite,
    SzxBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecParams {
    pub thread_block_len: usize,
    pub micro_block_len: usize,
    /// Worker count for drivers that parallelize by thread-block. The
    /// serial functions in this module ignore it; output never depends
    /// on it.
    pub parallelism: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams {
            thread_block_len: DEFAULT_THREAD_BLOCK_LEN,
            micro_block_len: DEFAULT_MICRO_BLOCK_LEN,
            parallelism: 1,
        }
    }
}

impl CodecParams {
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.micro_block_len == 0 || self.thread_block_len == 0 {
            return Err(CodecError::InvalidParam(
                "block lengths must be positive".to_string(),
            ));
        }
        if self.thread_block_len % self.micro_block_len != 0 {
            return Err(CodecError::InvalidParam(
                "micro_block_len must divide thread_block_len".to_string(),
            ));
        }
        if self.parallelism == 0 {
            return Err(CodecError::InvalidParam("parallelism must be >= 1".to_string()));
        }
        Ok(())
    }
}

/// Size and quality accounting for one codec invocation. Wall times are
/// filled in by `std` drivers; they stay zero where no clock is available.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CodecStats {
    pub original_bytes: usize,
    pub compressed_bytes: usize,
    pub ratio: f64,
    pub constant_block_fraction: f64,
    pub compress_seconds: f64,
    pub decompress_seconds: f64,
}

impl CodecStats {
    /// Average stored bits per 32-bit value.
    pub fn bit_rate(&self) -> f64 {
        32.0 / self.ratio
    }
}

/// A validated, self-describing compressed byte container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompressedFrame {
    bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameHeader {
    pub eb_abs: f32,
    pub element_count: u64,
    pub thread_block_len: u32,
    pub micro_block_len: u32,
}

impl FrameHeader {
    pub fn parse(bytes: &[u8]) -> Result<FrameHeader, CodecError> {
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
        if bytes[4] != FORMAT_VERSION {
            return Err(CodecError::Format {
                offset: 4,
                what: format!("unsupported format version {}", bytes[4]),
            });
        }
        let eb_abs = f32::from_le_bytes(bytes[5..9].try_into().unwrap());
        let element_count = u64::from_le_bytes(bytes[9..17].try_into().unwrap());
        let thread_block_len = u32::from_le_bytes(bytes[17..21].try_into().unwrap());
        let micro_block_len = u32::from_le_bytes(bytes[21..25].try_into().unwrap());
        if !(eb_abs.is_finite() && eb_abs > 0.0) {
            return Err(CodecError::Format {
                offset: 5,
                what: "eb_abs must be finite and > 0".to_string(),
            });
        }
        if thread_block_len == 0
            || micro_block_len == 0
            || thread_block_len % micro_block_len != 0
        {
            return Err(CodecError::Format {
                offset: 17,
                what: "invalid block lengths".to_string(),
            });
        }
        Ok(FrameHeader {
            eb_abs,
            element_count,
            thread_block_len,
            micro_block_len,
        })
    }
}

impl CompressedFrame {
    /// Wrap raw bytes, validating the header (magic, version, fields).
    /// Body consistency is checked on decompression.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        FrameHeader::parse(&bytes)?;
        Ok(CompressedFrame { bytes })
    }

    pub fn header(&self) -> FrameHeader {
        FrameHeader::parse(&self.bytes).expect("frame was validated on construction")
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

pub fn write_header(eb_abs: f32, element_count: u64, params: &CodecParams, out: &mut Vec<u8>) {
    out.extend_from_slice(&MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&eb_abs.to_le_bytes());
    out.extend_from_slice(&element_count.to_le_bytes());
    out.extend_from_slice(&(params.thread_block_len as u32).to_le_bytes());
    out.extend_from_slice(&(params.micro_block_len as u32).to_le_bytes());
}

#[inline]
fn round_half_away(v: f64) -> i64 {
    if v >= 0.0 {
        (v + 0.5) as i64
    } else {
        (v - 0.5) as i64
    }
}

#[inline]
fn reconstruct(step: f64, q: i64) -> f32 {
    (step * q as f64) as f32
}

/// Quantized magnitudes stay below 2^24 so that `step * q` (step a power
/// of two) is exactly representable in f32: reconstruction then incurs no
/// rounding at all and the error bound holds with no tolerance.
pub(crate) const EXACT_QUANT_LIMIT: i64 = (1 << 24) - 1;

/// Largest power of two <= 2*eb. Quantizing on a power-of-two grid keeps
/// the effective bound within (eb/2, eb] while making reconstructed
/// values exact in f32.
pub(crate) fn snap_step(eb_abs: f64) -> f64 {
    let (_, e) = libm::frexp(2.0 * eb_abs);
    libm::exp2((e - 1) as f64)
}

/// The absolute bound actually written into frame headers for a requested
/// bound: half the snapped power-of-two quantization step.
pub fn quantizer_bound(eb_abs: f32) -> Result<f32, CodecError> {
    if !(eb_abs.is_finite() && eb_abs > 0.0) {
        return Err(CodecError::InvalidParam(
            "error bound must be finite and > 0".to_string(),
        ));
    }
    let half = (snap_step(eb_abs as f64) / 2.0) as f32;
    if !(half.is_finite() && half > 0.0) {
        return Err(CodecError::InvalidParam(
            "error bound too small to represent".to_string(),
        ));
    }
    Ok(half)
}

#[inline]
pub(crate) fn quantize_exact(x: f32, step: f64, index: usize) -> Result<i64, CodecError> {
    let v = x as f64 / step;
    if !(v.abs() < EXACT_QUANT_LIMIT as f64 + 0.5) {
        return Err(CodecError::QuantizerOverflow { index });
    }
    Ok(round_half_away(v))
}

/// Quantize one value onto the 2*eb grid, round-half-away-from-zero.
#[inline]
pub fn quantize_value(x: f32, eb_abs: f64, index: usize) -> Result<i32, CodecError> {
    let v = x as f64 / (2.0 * eb_abs);
    if !(v.abs() < i32::MAX as f64 + 0.5) {
        return Err(CodecError::QuantizerOverflow { index });
    }
    Ok(round_half_away(v) as i32)
}

/// Fused quantization + 1D Lorenzo prediction over one thread-block.
/// Returns the leading quantized value and the successive differences.
pub fn fused_quantize_lorenzo(
    block: &[f32],
    eb_abs: f32,
) -> Result<(i32, Vec<i64>), CodecError> {
    if block.is_empty() {
        return Err(CodecError::EmptyField);
    }
    let eb = eb_abs as f64;
    let outlier = quantize_value(block[0], eb, 0)?;
    let mut deltas = Vec::with_capacity(block.len() - 1);
    let mut prev = outlier as i64;
    for (i, &x) in block.iter().enumerate().skip(1) {
        let q = quantize_value(x, eb, i)? as i64;
        deltas.push(q - prev);
        prev = q;
    }
    Ok((outlier, deltas))
}

#[inline]
fn code_len(deltas: &[i64]) -> u32 {
    let max_mag = deltas.iter().map(|d| d.unsigned_abs()).max().unwrap_or(0);
    64 - max_mag.leading_zeros()
}

/// Encode one micro block of deltas. `deltas.len()` may be short of
/// `micro_len` for the final block; missing positions count as zero.
pub fn encode_micro_block(deltas: &[i64], micro_len: usize, out: &mut Vec<u8>) {
    debug_assert!(deltas.len() <= micro_len);
    let width = code_len(deltas);
    out.push(width as u8);
    if width == 0 {
        return;
    }
    let sign_bytes = micro_len.div_ceil(8);
    let sign_start = out.len();
    out.resize(sign_start + sign_bytes, 0);
    for (i, &d) in deltas.iter().enumerate() {
        if d < 0 {
            out[sign_start + i / 8] |= 1 << (i % 8);
        }
    }
    let magnitudes = (0..micro_len).map(|i| deltas.get(i).map_or(0, |d| d.unsigned_abs() as u32));
    pack_bits(magnitudes, width, out);
}

fn decode_micro_block(
    data: &[u8],
    pos: &mut usize,
    micro_len: usize,
    take: usize,
    out: &mut Vec<i64>,
) -> Result<(), CodecError> {
    let Some(&width) = data.get(*pos) else {
        return Err(CodecError::Format {
            offset: *pos,
            what: "missing micro-block code length".to_string(),
        });
    };
    *pos += 1;
    if width == 0 {
        out.extend(core::iter::repeat(0).take(take));
        return Ok(());
    }
    if width > 32 {
        return Err(CodecError::Format {
            offset: *pos - 1,
            what: format!("code length {width} out of range"),
        });
    }
    let sign_bytes = micro_len.div_ceil(8);
    if data.len() < *pos + sign_bytes {
        return Err(CodecError::Format {
            offset: *pos,
            what: "truncated sign bitmap".to_string(),
        });
    }
    let sign_start = *pos;
    *pos += sign_bytes;
    let mut mags: Vec<u32> = Vec::with_capacity(micro_len);
    unpack_bits(data, pos, width as u32, micro_len, &mut mags)?;
    for i in 0..take {
        let mag = mags[i] as i64;
        let neg = data[sign_start + i / 8] & (1 << (i % 8)) != 0;
        out.push(if neg { -mag } else { mag });
    }
    Ok(())
}

/// Counts of constant (all-zero-delta) micro blocks vs total micro blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MicroCounts {
    pub constant: usize,
    pub total: usize,
}

impl MicroCounts {
    pub fn add(&mut self, other: MicroCounts) {
        self.constant += other.constant;
        self.total += other.total;
    }

    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.constant as f64 / self.total as f64
        }
    }
}

/// Encode one thread-block (outlier + delta micro blocks) onto `out`.
///
/// `eb_header` must be a [`quantizer_bound`] value (half a power-of-two
/// step), as written into the frame header. Exposed so external drivers
/// can encode thread-blocks on separate workers and concatenate; the
/// result is bitwise identical to serial [`compress`].
pub fn encode_thread_block(
    block: &[f32],
    eb_header: f32,
    micro_len: usize,
    out: &mut Vec<u8>,
) -> Result<MicroCounts, CodecError> {
    if block.is_empty() {
        return Err(CodecError::EmptyField);
    }
    let step = 2.0 * eb_header as f64;
    let first = quantize_exact(block[0], step, 0)?;
    out.extend_from_slice(&(first as i32).to_le_bytes());
    let mut deltas = Vec::with_capacity(block.len().saturating_sub(1));
    let mut prev = first;
    for (i, &x) in block.iter().enumerate().skip(1) {
        let q = quantize_exact(x, step, i)?;
        deltas.push(q - prev);
        prev = q;
    }
    let mut counts = MicroCounts::default();
    for micro in deltas.chunks(micro_len) {
        let before = out.len();
        encode_micro_block(micro, micro_len, out);
        counts.total += 1;
        if out.len() == before + 1 {
            counts.constant += 1;
        }
    }
    Ok(counts)
}

/// Compress a raw slice at an already-resolved absolute bound.
pub fn compress_slice(
    values: &[f32],
    eb_abs: f32,
    params: &CodecParams,
) -> Result<(Vec<u8>, MicroCounts), CodecError> {
    params.validate()?;
    if values.is_empty() {
        return Err(CodecError::EmptyField);
    }
    let eb_header = quantizer_bound(eb_abs)?;
    let mut out = Vec::with_capacity(HEADER_LEN + values.len() / 2);
    write_header(eb_header, values.len() as u64, params, &mut out);
    let mut counts = MicroCounts::default();
    let mut base = 0usize;
    for block in values.chunks(params.thread_block_len) {
        counts.add(encode_thread_block(block, eb_header, params.micro_block_len, &mut out).map_err(
            |e| match e {
                CodecError::QuantizerOverflow { index } => {
                    CodecError::QuantizerOverflow { index: base + index }
                }
                other => other,
            },
        )?);
        base += block.len();
    }
    Ok((out, counts))
}

/// Compress a field; serial reference implementation.
pub fn compress(
    field: &FloatField,
    spec: &ErrorBoundSpec,
    params: &CodecParams,
) -> Result<(CompressedFrame, CodecStats), CodecError> {
    let eb_abs = resolve_error_bound(spec, field)?;
    #[cfg(feature = "std")]
    let start = std::time::Instant::now();
    let (bytes, counts) = compress_slice(field.values(), eb_abs, params)?;
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
    Ok((CompressedFrame { bytes }, stats))
}

/// Decode a frame body given its parsed header; `pos` starts at the body.
pub fn decode_body(
    bytes: &[u8],
    header: &FrameHeader,
    mut pos: usize,
) -> Result<Vec<f32>, CodecError> {
    let n = header.element_count as usize;
    let tb = header.thread_block_len as usize;
    let mb = header.micro_block_len as usize;
    let step = 2.0 * header.eb_abs as f64;
    let mut values = Vec::with_capacity(n);
    let mut deltas: Vec<i64> = Vec::with_capacity(tb);
    let mut remaining = n;
    while remaining > 0 {
        let block_len = remaining.min(tb);
        let Some(outlier_bytes) = bytes.get(pos..pos + 4) else {
            return Err(CodecError::Format {
                offset: pos,
                what: "truncated thread-block outlier".to_string(),
            });
        };
        let outlier = i32::from_le_bytes(outlier_bytes.try_into().unwrap()) as i64;
        pos += 4;
        let n_deltas = block_len - 1;
        deltas.clear();
        let mut produced = 0;
        while produced < n_deltas {
            let take = (n_deltas - produced).min(mb);
            decode_micro_block(bytes, &mut pos, mb, take, &mut deltas)?;
            produced += take;
        }
        let mut q = outlier;
        push_value(&mut values, step, q, pos)?;
        for &d in &deltas {
            q += d;
            push_value(&mut values, step, q, pos)?;
        }
        remaining -= block_len;
    }
    if pos != bytes.len() {
        return Err(CodecError::Format {
            offset: pos,
            what: "trailing bytes after last thread-block".to_string(),
        });
    }
    Ok(values)
}

#[inline]
fn push_value(values: &mut Vec<f32>, step: f64, q: i64, pos: usize) -> Result<(), CodecError> {
    let x = reconstruct(step, q);
    if !x.is_finite() {
        return Err(CodecError::Format {
            offset: pos,
            what: "reconstructed value is not finite".to_string(),
        });
    }
    values.push(x);
    Ok(())
}

/// Decompress a frame into a field satisfying the header's error bound.
pub fn decompress(frame: &CompressedFrame) -> Result<FloatField, CodecError> {
    let header = frame.header();
    let values = decode_body(frame.as_bytes(), &header, HEADER_LEN)?;
    Ok(FloatField::from_trusted(values))
}

/// Size metrics for a frame: ratio = original bytes / frame bytes.
pub fn compression_metrics(frame: &CompressedFrame, field: &FloatField) -> CodecStats {
    let original = field.len() * 4;
    CodecStats {
        original_bytes: original,
        compressed_bytes: frame.len(),
        ratio: original as f64 / frame.len() as f64,
        constant_block_fraction: 0.0,
        compress_seconds: 0.0,
        decompress_seconds: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quantize_single_value() {
        // round-half-away: 0.3 / 0.2 = 1.5 -> q = 2, reconstruction 0.4
        let q = quantize_value(0.3, 0.1, 0).unwrap();
        assert_eq!(q, 2);
        let recon = reconstruct(0.2, q as i64);
        assert!((recon - 0.3).abs() <= 0.1 + 1e-9);
    }

    #[test]
    fn lorenzo_single_and_constant() {
        let (outlier, deltas) = fused_quantize_lorenzo(&[1.0], 0.5).unwrap();
        assert_eq!((outlier, deltas.len()), (1, 0));
        let (_, deltas) = fused_quantize_lorenzo(&[7.5, 7.5, 7.5, 7.5], 1e-3).unwrap();
        assert!(deltas.iter().all(|&d| d == 0));
    }

    #[test]
    fn micro_block_constant_is_one_byte() {
        let mut out = Vec::new();
        encode_micro_block(&[0i64; 32], 32, &mut out);
        assert_eq!(out, vec![0x00]);
    }

    #[test]
    fn micro_block_mixed_signs() {
        let mut deltas = vec![0i64; 32];
        deltas[0] = 1;
        deltas[1] = -1;
        let mut out = Vec::new();
        encode_micro_block(&deltas, 32, &mut out);
        // L=1, sign bitmap marks index 1, magnitudes 1,1,0.. packed 1 bit each
        assert_eq!(out, vec![1, 0x02, 0x00, 0x00, 0x00, 0x03, 0x00, 0x00, 0x00]);
    }

    #[test]
    fn micro_block_all_fives() {
        let deltas = vec![5i64; 32];
        let mut out = Vec::new();
        encode_micro_block(&deltas, 32, &mut out);
        assert_eq!(out[0], 3);
        assert_eq!(&out[1..5], &[0, 0, 0, 0]);
        assert_eq!(out.len(), 1 + 4 + 12);
        let mut pos = 5;
        let mut mags = Vec::new();
        unpack_bits(&out, &mut pos, 3, 32, &mut mags).unwrap();
        assert!(mags.iter().all(|&m| m == 5));
    }

    #[test]
    fn overflow_is_refused() {
        let err = quantize_value(1e9, 1e-4, 7).unwrap_err();
        assert_eq!(err, CodecError::QuantizerOverflow { index: 7 });
    }

    #[test]
    fn constant_field_ratio() {
        let field = FloatField::new(vec![3.5f32; 1 << 20]).unwrap();
        let (frame, stats) =
            compress(&field, &ErrorBoundSpec::Absolute(1e-3), &CodecParams::default()).unwrap();
        // closed form: header + 1024 thread-blocks * (4-byte outlier + 32 one-byte micro blocks)
        assert_eq!(frame.len(), HEADER_LEN + 1024 * (4 + 32));
        assert!(stats.ratio >= 100.0);
        assert_eq!(stats.constant_block_fraction, 1.0);
    }

    #[test]
    fn round_trip_and_metrics() {
        let values: Vec<f32> = (0..5000).map(|i| (i as f32 * 0.01).sin() * 40.0).collect();
        let field = FloatField::new(values).unwrap();
        let spec = ErrorBoundSpec::Relative(1e-3);
        let (frame, _) = compress(&field, &spec, &CodecParams::default()).unwrap();
        let eb = resolve_error_bound(&spec, &field).unwrap();
        let out = decompress(&frame).unwrap();
        assert_eq!(out.len(), field.len());
        for (a, b) in out.values().iter().zip(field.values()) {
            assert!((*a as f64 - *b as f64).abs() <= eb as f64);
        }
        let metrics = compression_metrics(&frame, &field);
        assert!((metrics.bit_rate() - 32.0 / metrics.ratio).abs() < 1e-12);
    }

    #[test]
    fn flipped_magic_is_format_error() {
        let field = FloatField::new(vec![1.0, 2.0, 3.0]).unwrap();
        let (frame, _) =
            compress(&field, &ErrorBoundSpec::Absolute(0.1), &CodecParams::default()).unwrap();
        let mut bytes = frame.into_bytes();
        bytes[0] ^= 0xff;
        assert!(matches!(
            CompressedFrame::from_bytes(bytes),
            Err(CodecError::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn truncated_body_is_format_error() {
        let field = FloatField::new((0..4000).map(|i| i as f32).collect()).unwrap();
        let (frame, _) =
            compress(&field, &ErrorBoundSpec::Absolute(0.1), &CodecParams::default()).unwrap();
        let mut bytes = frame.into_bytes();
        bytes.truncate(bytes.len() - 9);
        let frame = CompressedFrame::from_bytes(bytes).unwrap();
        assert!(matches!(decompress(&frame), Err(CodecError::Format { .. })));
    }

    #[test]
    fn empty_input_is_parameter_error() {
        assert_eq!(
            compress_slice(&[], 0.1, &CodecParams::default()).unwrap_err(),
            CodecError::EmptyField
        );
    }
}
