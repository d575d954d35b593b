//! Chunked compression with an up-front size index, for overlapping the
//! codec with communication: a caller-supplied hook runs between chunk
//! codecs and can poll transport progress or abort the operation.
//!
//! Frame layout (little-endian):
//!
//! ```text
//! chunk_count u32 | chunk_count x compressed_size u32 | chunk payloads
//! ```
//!
//! Every chunk is a complete self-describing frame (header included), so
//! any chunk is decodable from its index entry and payload slice alone.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::CodecError;
use crate::field::{resolve_error_bound, ErrorBoundSpec, FloatField};
use crate::szx;
use crate::zlite::{self, CodecKind, CodecParams, MicroCounts};

pub const DEFAULT_CHUNK_LEN: usize = 5120;

/// What a progress hook tells the codec between chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HookSignal {
    Continue,
    Abort,
}

/// Non-blocking callable invoked between chunk codecs.
pub type ProgressHook<'a> = &'a mut dyn FnMut() -> HookSignal;

/// A hook that does nothing; chunk codecs may then batch freely.
pub fn noop_hook() -> impl FnMut() -> HookSignal {
    || HookSignal::Continue
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChunkedFrame {
    bytes: Vec<u8>,
}

impl ChunkedFrame {
    /// Wrap raw bytes, validating that the index region is present.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, CodecError> {
        if bytes.len() < 4 {
            return Err(CodecError::Format {
                offset: bytes.len(),
                what: "missing chunk count".to_string(),
            });
        }
        let count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        if bytes.len() < 4 + 4 * count {
            return Err(CodecError::Format {
                offset: bytes.len(),
                what: "truncated chunk size index".to_string(),
            });
        }
        Ok(ChunkedFrame { bytes })
    }

    pub fn chunk_count(&self) -> usize {
        u32::from_le_bytes(self.bytes[0..4].try_into().unwrap()) as usize
    }

    /// Per-chunk compressed sizes from the front-of-buffer index.
    pub fn index(&self) -> Vec<u32> {
        (0..self.chunk_count())
            .map(|i| {
                let at = 4 + 4 * i;
                u32::from_le_bytes(self.bytes[at..at + 4].try_into().unwrap())
            })
            .collect()
    }

    pub fn payload(&self) -> &[u8] {
        &self.bytes[4 + 4 * self.chunk_count()..]
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

/// Compress one raw slice into a self-describing frame for `codec`.
pub fn compress_chunk_bytes(
    values: &[f32],
    eb_abs: f32,
    params: &CodecParams,
    codec: CodecKind,
) -> Result<(Vec<u8>, MicroCounts), CodecError> {
    match codec {
        CodecKind::ZLite => zlite::compress_slice(values, eb_abs, params),
        CodecKind::SzxBaseline => {
            szx::compress_slice(values, eb_abs, szx::DEFAULT_BLOCK_LEN)
        }
    }
}

/// Decode one frame produced by [`compress_chunk_bytes`], dispatching on
/// the magic bytes.
pub fn decompress_chunk_bytes(bytes: &[u8]) -> Result<Vec<f32>, CodecError> {
    match bytes.get(0..4) {
        Some(m) if m == zlite::MAGIC => {
            let header = zlite::FrameHeader::parse(bytes)?;
            zlite::decode_body(bytes, &header, zlite::HEADER_LEN)
        }
        Some(m) if m == szx::MAGIC => szx::decode_slice(bytes),
        _ => Err(CodecError::Format {
            offset: 0,
            what: "unrecognized chunk magic".to_string(),
        }),
    }
}

/// Compress a field chunk by chunk, invoking `hook` between chunks.
///
/// The bound is resolved once against the whole field, so reconstruction
/// is bitwise identical to the whole-buffer codec whenever
/// `thread_block_len` divides `chunk_len`. A hook abort discards all
/// partial state.
pub fn compress_chunked(
    field: &FloatField,
    spec: &ErrorBoundSpec,
    params: &CodecParams,
    chunk_len: usize,
    codec: CodecKind,
    hook: ProgressHook<'_>,
) -> Result<ChunkedFrame, CodecError> {
    params.validate()?;
    if chunk_len == 0 {
        return Err(CodecError::InvalidParam("chunk_len must be positive".to_string()));
    }
    if codec == CodecKind::ZLite && chunk_len % params.thread_block_len != 0 {
        return Err(CodecError::InvalidParam(
            "thread_block_len must divide chunk_len".to_string(),
        ));
    }
    let eb_abs = resolve_error_bound(spec, field)?;
    let chunks: Vec<&[f32]> = field.values().chunks(chunk_len).collect();
    let mut sizes: Vec<u32> = Vec::with_capacity(chunks.len());
    let mut payload: Vec<u8> = Vec::new();
    for (ordinal, chunk) in chunks.iter().enumerate() {
        if ordinal > 0 && hook() == HookSignal::Abort {
            return Err(CodecError::HookAborted);
        }
        let (bytes, _) = compress_chunk_bytes(chunk, eb_abs, params, codec).map_err(|e| {
            CodecError::Chunk {
                ordinal,
                source: alloc::boxed::Box::new(e),
            }
        })?;
        sizes.push(bytes.len() as u32);
        payload.extend_from_slice(&bytes);
    }
    let mut out = Vec::with_capacity(4 + 4 * sizes.len() + payload.len());
    out.extend_from_slice(&(sizes.len() as u32).to_le_bytes());
    for s in &sizes {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out.extend_from_slice(&payload);
    Ok(ChunkedFrame { bytes: out })
}

/// Byte (offset, length) of each chunk within the frame buffer.
pub fn chunk_offsets(frame: &ChunkedFrame) -> Vec<(usize, usize)> {
    let mut at = 4 + 4 * frame.chunk_count();
    frame
        .index()
        .iter()
        .map(|&size| {
            let entry = (at, size as usize);
            at += size as usize;
            entry
        })
        .collect()
}

/// Decompress a chunked frame, invoking `hook` between chunks.
pub fn decompress_chunked(
    frame: &ChunkedFrame,
    hook: ProgressHook<'_>,
) -> Result<FloatField, CodecError> {
    let index = frame.index();
    let payload = frame.payload();
    let mut at = 0usize;
    let mut values: Vec<f32> = Vec::new();
    for (ordinal, &size) in index.iter().enumerate() {
        if ordinal > 0 && hook() == HookSignal::Abort {
            return Err(CodecError::HookAborted);
        }
        let size = size as usize;
        let Some(bytes) = payload.get(at..at + size) else {
            return Err(CodecError::Chunk {
                ordinal,
                source: alloc::boxed::Box::new(CodecError::Format {
                    offset: at,
                    what: "index size exceeds payload".to_string(),
                }),
            });
        };
        let chunk_values = decompress_chunk_bytes(bytes).map_err(|e| CodecError::Chunk {
            ordinal,
            source: alloc::boxed::Box::new(e),
        })?;
        values.extend_from_slice(&chunk_values);
        at += size;
    }
    if at != payload.len() {
        return Err(CodecError::Format {
            offset: 4 + 4 * index.len() + at,
            what: "payload bytes beyond last indexed chunk".to_string(),
        });
    }
    FloatField::new(values)
}
