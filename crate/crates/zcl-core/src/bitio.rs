//! Fixed-width bit packing, little-endian bit order within bytes: the
//! first value occupies the low bits of the first byte.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::error::CodecError;

/// Appends `width`-bit values to `out`. `width` must be in 1..=32 and every
/// value must fit in `width` bits; the final partial byte is zero-padded.
pub fn pack_bits(values: impl Iterator<Item = u32>, width: u32, out: &mut Vec<u8>) {
    debug_assert!((1..=32).contains(&width));
    let mut acc: u64 = 0;
    let mut nbits: u32 = 0;
    for v in values {
        debug_assert!(width == 32 || v < (1u32 << width));
        acc |= (v as u64) << nbits;
        nbits += width;
        while nbits >= 8 {
            out.push((acc & 0xff) as u8);
            acc >>= 8;
            nbits -= 8;
        }
    }
    if nbits > 0 {
        out.push((acc & 0xff) as u8);
    }
}

/// Reads `count` values of `width` bits from `data` starting at `*pos`,
/// advancing `*pos` past the (byte-aligned) packed region.
pub fn unpack_bits(
    data: &[u8],
    pos: &mut usize,
    width: u32,
    count: usize,
    out: &mut Vec<u32>,
) -> Result<(), CodecError> {
    let total_bits = count as u64 * width as u64;
    let nbytes = total_bits.div_ceil(8) as usize;
    let Some(region) = data.get(*pos..*pos + nbytes) else {
        return Err(CodecError::Format {
            offset: *pos,
            what: "truncated bit-packed region".to_string(),
        });
    };
    let mut acc: u64 = 0;
    let mut nbits: u32 = 0;
    let mut bytes = region.iter();
    let mask: u64 = if width == 32 { u32::MAX as u64 } else { (1u64 << width) - 1 };
    for _ in 0..count {
        while nbits < width {
            acc |= (*bytes.next().unwrap() as u64) << nbits;
            nbits += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= width;
        nbits -= width;
    }
    *pos += nbytes;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn pack_one_bit_values() {
        let mut out = Vec::new();
        pack_bits([1u32, 1, 0, 0, 0, 0, 0, 0, 1].into_iter(), 1, &mut out);
        assert_eq!(out, vec![0x03, 0x01]);
    }

    #[test]
    fn round_trip_widths() {
        for width in 1..=32u32 {
            let values: Vec<u32> = (0..67u32)
                .map(|i| {
                    let v = i.wrapping_mul(2654435761);
                    if width == 32 { v } else { v & ((1 << width) - 1) }
                })
                .collect();
            let mut packed = Vec::new();
            pack_bits(values.iter().copied(), width, &mut packed);
            let mut pos = 0;
            let mut unpacked = Vec::new();
            unpack_bits(&packed, &mut pos, width, values.len(), &mut unpacked).unwrap();
            assert_eq!(values, unpacked, "width {width}");
            assert_eq!(pos, packed.len());
        }
    }

    #[test]
    fn truncated_region_is_an_error() {
        let data = [0u8; 3];
        let mut pos = 0;
        let mut out = Vec::new();
        assert!(unpack_bits(&data, &mut pos, 8, 4, &mut out).is_err());
    }
}
