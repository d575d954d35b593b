//! Multi-worker compression driver. Thread-blocks are fully independent,
//! so workers encode disjoint block ranges and the concatenation is
//! bitwise identical to the serial codec regardless of worker count.

use std::time::Instant;

use zcl_core::zlite::{
    encode_thread_block, quantizer_bound, write_header, MicroCounts, HEADER_LEN,
};
use zcl_core::{
    resolve_error_bound, CodecError, CodecParams, CodecStats, CompressedFrame, ErrorBoundSpec,
    FloatField,
};

use crate::error::Result;

pub fn compress_parallel(
    field: &FloatField,
    spec: &ErrorBoundSpec,
    params: &CodecParams,
) -> Result<(CompressedFrame, CodecStats)> {
    params.validate().map_err(crate::error::Error::from)?;
    let start = Instant::now();
    let eb_abs = resolve_error_bound(spec, field)?;
    let eb_header = quantizer_bound(eb_abs)?;
    let values = field.values();
    let blocks: Vec<&[f32]> = values.chunks(params.thread_block_len).collect();
    let workers = params.parallelism.min(blocks.len()).max(1);
    let per_worker = blocks.len().div_ceil(workers);

    let mut parts: Vec<std::result::Result<(Vec<u8>, MicroCounts), CodecError>> =
        Vec::with_capacity(workers);
    std::thread::scope(|scope| {
        let handles: Vec<_> = blocks
            .chunks(per_worker)
            .map(|range| {
                scope.spawn(move || {
                    let mut out = Vec::new();
                    let mut counts = MicroCounts::default();
                    for block in range {
                        counts.add(encode_thread_block(
                            block,
                            eb_header,
                            params.micro_block_len,
                            &mut out,
                        )?);
                    }
                    Ok((out, counts))
                })
            })
            .collect();
        for handle in handles {
            parts.push(handle.join().expect("encode worker panicked"));
        }
    });

    let mut bytes = Vec::with_capacity(HEADER_LEN + values.len() / 2);
    write_header(eb_header, values.len() as u64, params, &mut bytes);
    let mut counts = MicroCounts::default();
    for part in parts {
        let (part_bytes, part_counts) = part.map_err(crate::error::Error::from)?;
        bytes.extend_from_slice(&part_bytes);
        counts.add(part_counts);
    }
    let stats = CodecStats {
        original_bytes: field.len() * 4,
        compressed_bytes: bytes.len(),
        ratio: (field.len() * 4) as f64 / bytes.len() as f64,
        constant_block_fraction: counts.fraction(),
        compress_seconds: start.elapsed().as_secs_f64(),
        decompress_seconds: 0.0,
    };
    Ok((CompressedFrame::from_bytes(bytes)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_field, SyntheticKind, SyntheticSpec};
    use zcl_core::compress;

    #[test]
    fn parallel_output_is_bitwise_serial() {
        let field =
            generate_field(&SyntheticSpec::new(SyntheticKind::SineMix, 100_000, 11)).unwrap();
        let spec = ErrorBoundSpec::Relative(1e-3);
        let (serial, _) = compress(&field, &spec, &CodecParams::default()).unwrap();
        for workers in [1, 2, 3, 8] {
            let params = CodecParams {
                parallelism: workers,
                ..CodecParams::default()
            };
            let (parallel, _) = compress_parallel(&field, &spec, &params).unwrap();
            assert_eq!(parallel.as_bytes(), serial.as_bytes());
        }
    }
}
