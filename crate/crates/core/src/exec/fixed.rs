//! 8-bit fixed-point primitives shared by both executors.
//!
//! A value `q` with radix `r` represents `q / 2^r`. Rounding is half away
//! from zero; every narrowing saturates.

use serde::{Deserialize, Serialize};

use crate::ir::TensorShape;

pub const MAX_RADIX: i8 = 7;

pub fn sat8(v: i64) -> i8 {
    v.clamp(i8::MIN as i64, i8::MAX as i64) as i8
}

pub fn sat32(v: i64) -> i32 {
    v.clamp(i32::MIN as i64, i32::MAX as i64) as i32
}

/// `v * 2^s`; negative `s` divides with half-away-from-zero rounding.
pub fn round_shift(v: i64, s: i32) -> i64 {
    if s >= 0 {
        v.checked_shl(s as u32)
            .filter(|r| r >> s == v)
            .unwrap_or(if v < 0 { i64::MIN / 2 } else { i64::MAX / 2 })
    } else {
        let d = 1i64 << (-s).min(62);
        round_div(v, d)
    }
}

/// Integer division rounding half away from zero; `d > 0`.
pub fn round_div(v: i64, d: i64) -> i64 {
    let q = (v.abs() + d / 2) / d;
    if v < 0 {
        -q
    } else {
        q
    }
}

fn round_half_away(x: f32) -> i64 {
    // f32::round already rounds half away from zero
    x.round() as i64
}

pub fn quantize_with(x: &[f32], radix: i8) -> Vec<i8> {
    let scale = (1u32 << radix) as f32;
    x.iter().map(|&v| sat8(round_half_away(v * scale))).collect()
}

pub fn dequantize(q: &[i8], radix: i8) -> Vec<f32> {
    let scale = (1u32 << radix) as f32;
    q.iter().map(|&v| v as f32 / scale).collect()
}

pub fn quant_sse(x: &[f32], radix: i8) -> f64 {
    let scale = (1u32 << radix) as f64;
    quantize_with(x, radix)
        .iter()
        .zip(x)
        .map(|(&q, &v)| {
            let e = q as f64 / scale - v as f64;
            e * e
        })
        .sum()
}

/// Radix in `0..=7` minimising squared error; ties go to the larger radix.
pub fn choose_radix(x: &[f32]) -> i8 {
    let mut best = (f64::INFINITY, MAX_RADIX);
    for r in (0..=MAX_RADIX).rev() {
        let e = quant_sse(x, r);
        if e < best.0 {
            best = (e, r);
        }
    }
    best.1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QTensor {
    pub shape: TensorShape,
    pub radix: i8,
    pub data: Vec<i8>,
}

pub fn quantize(shape: TensorShape, x: &[f32]) -> QTensor {
    let radix = choose_radix(x);
    QTensor { shape, radix, data: quantize_with(x, radix) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_shift(3, -1), 2);
        assert_eq!(round_shift(-3, -1), -2);
        assert_eq!(round_shift(5, -2), 1);
        assert_eq!(round_shift(-6, -2), -2);
        assert_eq!(round_shift(3, 2), 12);
        assert_eq!(round_div(-7, 2), -4);
    }

    #[test]
    fn radix_rules() {
        assert_eq!(choose_radix(&[0.0; 8]), 7);
        assert_eq!(choose_radix(&[-1.0, 0.5, 0.99, -0.25]), 7);
        assert_eq!(choose_radix(&[100.0, -3.0]), 0);
        assert_eq!(quantize_with(&[200.0, -200.0], 0), vec![127, -128]);
    }
}
