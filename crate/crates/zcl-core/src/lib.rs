//! Error-bounded lossy compression primitives for compressed collective
//! communication, together with the closed-form error-propagation
//! calculators used to check collective output quality.
//!
//! The crate is `no_std`-compatible (allocation required). Everything here
//! is a pure function over immutable input: frames produced on one machine
//! decode identically on any other, and all multi-byte header fields are
//! little-endian.
//!
//! Modules:
//! - [`field`]: float fields and error-bound specifications
//! - [`zlite`]: the fused quantization + Lorenzo prediction codec
//! - [`chunked`]: chunked frames with an up-front size index and progress hooks
//! - [`szx`]: the constant-block baseline codec
//! - [`stats`]: error-propagation theory and quality metrics

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bitio;
pub mod chunked;
pub mod error;
pub mod field;
pub mod stats;
pub mod szx;
pub mod zlite;

pub use chunked::{
    chunk_offsets, compress_chunk_bytes, compress_chunked, decompress_chunk_bytes,
    decompress_chunked, noop_hook, ChunkedFrame, HookSignal,
};
pub use error::CodecError;
pub use field::{resolve_error_bound, ErrorBoundSpec, FloatField};
pub use szx::{compress_szx, compress_szx_with, decompress_szx, SzxFrame};
pub use zlite::{
    compress, compression_metrics, decompress, CodecKind, CodecParams, CodecStats,
    CompressedFrame,
};
