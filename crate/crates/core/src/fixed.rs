//! Fixed-point encoding of real-valued gradients and the integer median.
//!
//! Gradients live as `raw = round(value * 2^scale_bits)` signed integers so
//! that every protocol step (pad addition, scalar multiplication, medians)
//! is exact integer arithmetic inside the encryption layer's plaintext space.

use crate::error::NumericError;

/// Default number of fractional bits.
pub const DEFAULT_SCALE_BITS: u32 = 16;

/// Default bound on `|raw|` (as a power of two). Keeps sums over users and
/// pad additions inside the transparent backend's 64-bit plaintext space.
pub const DEFAULT_VALUE_BITS: u32 = 40;

/// A real value stored as `raw / 2^scale_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPoint {
    pub raw: i64,
    pub scale_bits: u32,
}

impl FixedPoint {
    pub fn from_raw(raw: i64, scale_bits: u32) -> Self {
        Self { raw, scale_bits }
    }

    pub fn to_f64(self) -> f64 {
        decode_fixed(self)
    }
}

/// Encodes `v` with `round-half-to-even`, so reimplementations match bit-exactly.
///
/// Fails with [`NumericError::Range`] outside the dynamic range
/// `|v| < 2^(value_bits - scale_bits - 1)` for the default `value_bits`.
pub fn encode_fixed(v: f64, scale_bits: u32) -> Result<FixedPoint, NumericError> {
    let limit = (1i64 << (DEFAULT_VALUE_BITS - scale_bits - 1)) as f64;
    if !v.is_finite() || v.abs() >= limit {
        return Err(NumericError::Range(v));
    }
    let raw = (v * (1i64 << scale_bits) as f64).round_ties_even() as i64;
    Ok(FixedPoint { raw, scale_bits })
}

/// Exact inverse of [`encode_fixed`] on the representable grid.
pub fn decode_fixed(f: FixedPoint) -> f64 {
    f.raw as f64 / (1i64 << f.scale_bits) as f64
}

/// Lower median: the `⌈len/2⌉`-th smallest element, i.e. the middle order
/// statistic for odd length and the lower of the two middle ones for even
/// length. Always an element of the input, so the result stays an integer.
pub fn median_int(values: &[i64]) -> Result<i64, NumericError> {
    Ok(median_int_with_source(values)?.0)
}

/// Like [`median_int`] but also returns the index (in the original slice) of
/// the element selected as the median. Ties break toward the smaller index.
pub fn median_int_with_source(values: &[i64]) -> Result<(i64, usize), NumericError> {
    if values.is_empty() {
        return Err(NumericError::EmptyInput);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| (values[i], i));
    let src = order[(values.len() - 1) / 2];
    Ok((values[src], src))
}
