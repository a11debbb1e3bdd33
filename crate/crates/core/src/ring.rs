//! Arithmetic in the ring `Z_{2^64}` and fixed-point encoding.
//!
//! All protocol values live in a single 64-bit ring; overflow wraps.
//! Narrower attributes (32-bit codes) are embedded in the low half, keeping
//! the high half free for reserved sentinel keys.

/// Ring bit width. The engine is specialized to `Z_{2^64}`.
pub const RING_BITS: u32 = 64;

/// Default fractional bits for fixed-point encoding.
pub const DEFAULT_FRAC_BITS: u32 = 12;

/// Keys at or above this value are reserved for dummy-row sentinels.
pub const SENTINEL_BASE: u64 = 1 << 63;

#[inline]
pub fn add(a: u64, b: u64) -> u64 {
    a.wrapping_add(b)
}

#[inline]
pub fn sub(a: u64, b: u64) -> u64 {
    a.wrapping_sub(b)
}

#[inline]
pub fn mul(a: u64, b: u64) -> u64 {
    a.wrapping_mul(b)
}

#[inline]
pub fn neg(a: u64) -> u64 {
    a.wrapping_neg()
}

/// Fixed-point layout: `total_bits` ring width, `frac_bits` fractional bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedPoint {
    pub frac_bits: u32,
}

impl Default for FixedPoint {
    fn default() -> Self {
        FixedPoint {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPoint {
    pub fn new(frac_bits: u32) -> Self {
        assert!(frac_bits < 32, "frac_bits must leave integer headroom");
        FixedPoint { frac_bits }
    }

    /// `round(x * 2^f) mod 2^64`, two's complement for negative values.
    #[inline]
    pub fn encode(&self, x: f64) -> u64 {
        let scaled = (x * (1u64 << self.frac_bits) as f64).round();
        scaled as i64 as u64
    }

    #[inline]
    pub fn decode(&self, v: u64) -> f64 {
        (v as i64 as f64) / (1u64 << self.frac_bits) as f64
    }

    /// Resolution of one fixed-point step, `2^-f`.
    #[inline]
    pub fn ulp(&self) -> f64 {
        1.0 / (1u64 << self.frac_bits) as f64
    }

    /// Plaintext truncation after a product of two encodings: floor-shift
    /// preserving sign.
    #[inline]
    pub fn trunc(&self, v: u64) -> u64 {
        ((v as i64) >> self.frac_bits) as u64
    }
}

/// Packs little-endian `u64` words into bytes.
pub fn words_to_bytes(words: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(words.len() * 8);
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Inverse of [`words_to_bytes`]. Returns `None` on ragged input.
pub fn bytes_to_words(bytes: &[u8]) -> Option<Vec<u64>> {
    if bytes.len() % 8 != 0 {
        return None;
    }
    Some(
        bytes
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrapping_ops() {
        assert_eq!(add(u64::MAX, 2), 1);
        assert_eq!(sub(1, 2), u64::MAX);
        assert_eq!(mul(1 << 63, 2), 0);
    }

    #[test]
    fn fixed_point_round_trip() {
        let fp = FixedPoint::default();
        for &x in &[0.0, 1.0, -1.0, 3.25, -117.0625, 0.000244140625] {
            let enc = fp.encode(x);
            assert!((fp.decode(enc) - x).abs() <= fp.ulp());
        }
    }

    #[test]
    fn fixed_point_product_truncates() {
        let fp = FixedPoint::default();
        let a = fp.encode(1.5);
        let b = fp.encode(-2.0);
        let prod = fp.trunc(mul(a, b));
        assert!((fp.decode(prod) + 3.0).abs() <= 2.0 * fp.ulp());
    }

    #[test]
    fn word_bytes_round_trip() {
        let ws = vec![0u64, 1, u64::MAX, 0xdead_beef];
        assert_eq!(bytes_to_words(&words_to_bytes(&ws)).unwrap(), ws);
        assert!(bytes_to_words(&[1, 2, 3]).is_none());
    }
}
