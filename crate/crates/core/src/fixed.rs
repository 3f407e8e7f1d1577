//! Two's-complement fixed-point formats and the arithmetic implementation
//! model used throughout the verifier.
//!
//! A format `Q<k>.<l>` stores a value in `k + l` bits: `k` integer bits
//! (sign included) and `l` fractional bits. The real value of a raw word
//! `r` is `r * 2^-l`. Every operation wraps modulo `2^(k+l)`; nothing
//! saturates. Operations report whether a wrap happened so callers can
//! count overflow events.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest total width supported. Products are formed in `i128`, so two
/// 64-bit operands still fit.
pub const MAX_WIDTH: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpFormat {
    int_bits: u32,
    frac_bits: u32,
}

impl FxpFormat {
    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        if int_bits == 0 {
            return Err(Error::Format(
                "integer part needs at least the sign bit".into(),
            ));
        }
        if int_bits + frac_bits > MAX_WIDTH {
            return Err(Error::Format(format!(
                "Q{int_bits}.{frac_bits} is {} bits wide, at most {MAX_WIDTH} supported",
                int_bits + frac_bits
            )));
        }
        Ok(Self {
            int_bits,
            frac_bits,
        })
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Total word width `k + l`.
    pub fn width(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    pub fn min_raw(&self) -> i64 {
        (-(1i128 << (self.width() - 1))) as i64
    }

    pub fn max_raw(&self) -> i64 {
        ((1i128 << (self.width() - 1)) - 1) as i64
    }

    /// Value of one unit in the last place, `2^-l`.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    /// Smallest and largest representable real values.
    pub fn range(&self) -> (f64, f64) {
        (self.to_f64(self.min_raw()), self.to_f64(self.max_raw()))
    }

    pub fn in_range(&self, raw: i128) -> bool {
        raw >= self.min_raw() as i128 && raw <= self.max_raw() as i128
    }

    /// Reduce an arbitrary integer modulo `2^(k+l)` into the signed range.
    pub fn wrap(&self, raw: i128) -> i64 {
        let w = self.width();
        let modulus = 1i128 << w;
        let mut r = raw.rem_euclid(modulus);
        if r >= modulus >> 1 {
            r -= modulus;
        }
        r as i64
    }

    fn wrap_flagged(&self, raw: i128) -> (i64, bool) {
        (self.wrap(raw), !self.in_range(raw))
    }

    /// Real value of a raw word as the nearest `f64` (exact up to 53 bits).
    pub fn to_f64(&self, raw: i64) -> f64 {
        raw as f64 * self.ulp()
    }

    /// Exact real value of a raw word.
    pub fn to_rational(&self, raw: i64) -> BigRational {
        BigRational::new(BigInt::from(raw), BigInt::one() << self.frac_bits as usize)
    }

    /// Quantize a real number. Out-of-range values wrap. Non-finite input
    /// maps to zero and is reported as a wrap.
    pub fn quantize(&self, x: f64, mode: RoundingMode) -> (i64, bool) {
        if !x.is_finite() {
            return (0, true);
        }
        if x == 0.0 {
            return (0, false);
        }
        let (mant, exp) = decompose(x);
        let shift = exp + self.frac_bits as i32;
        if shift >= 0 {
            // Bits at or above the word width vanish modulo 2^(k+l).
            if shift >= self.width() as i32 {
                return (0, true);
            }
            let full = (mant as i128) << shift;
            self.wrap_flagged(full)
        } else {
            let r = shift_round(mant as i128, (-shift) as u32, mode);
            self.wrap_flagged(r)
        }
    }

    /// Wrap-around addition of two raw words.
    pub fn add_raw(&self, a: i64, b: i64) -> (i64, bool) {
        self.wrap_flagged(a as i128 + b as i128)
    }

    /// Fixed-point multiply: exact double-width product, shift right by `l`
    /// with the given rounding, then wrap to the word width.
    pub fn mul_raw(&self, a: i64, b: i64, mode: RoundingMode) -> (i64, bool) {
        let product = a as i128 * b as i128;
        self.wrap_flagged(shift_round(product, self.frac_bits, mode))
    }

    /// `x * 2^l` rounded per `mode` without wrapping, saturated far outside
    /// any format. Agrees with [`quantize`](Self::quantize) modulo the word width.
    pub fn quantize_unwrapped(&self, x: f64, mode: RoundingMode) -> i128 {
        scaled_round(x, self.frac_bits, mode)
    }

    /// Largest raw word whose value is `<= x` (unwrapped, saturated far
    /// outside any format).
    pub fn floor_raw(&self, x: f64) -> i128 {
        scaled_round(x, self.frac_bits, RoundingMode::TruncateTowardNegInf)
    }

    /// Smallest raw word whose value is `>= x` (unwrapped, saturated).
    pub fn ceil_raw(&self, x: f64) -> i128 {
        -scaled_round(-x, self.frac_bits, RoundingMode::TruncateTowardNegInf)
    }

    /// Binary rendering with an `integer|fraction` separator, e.g. `00011|010`.
    pub fn bits_string(&self, raw: i64) -> String {
        let w = self.width();
        let bits = (raw as u64) & if w == 64 { u64::MAX } else { (1u64 << w) - 1 };
        let s = format!("{:0width$b}", bits, width = w as usize);
        let (int, frac) = s.split_at(self.int_bits as usize);
        format!("{int}|{frac}")
    }
}

impl fmt::Display for FxpFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Q{}.{}", self.int_bits, self.frac_bits)
    }
}

impl FromStr for FxpFormat {
    type Err = Error;

    /// Accepts `Q4.6`, `q4.6`, `Q<4,6>` and `4.6`.
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        let t = t.strip_prefix(['Q', 'q']).unwrap_or(t);
        let t = t
            .trim_start_matches(['<', '⟨'])
            .trim_end_matches(['>', '⟩']);
        let (k, l) = t
            .split_once(['.', ','])
            .ok_or_else(|| Error::Format(format!("expected Q<k>.<l>, got {s:?}")))?;
        let k: u32 = k
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad integer bits in {s:?}")))?;
        let l: u32 = l
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad fraction bits in {s:?}")))?;
        FxpFormat::new(k, l)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RoundingMode {
    /// Floor; an arithmetic right shift in hardware.
    #[default]
    TruncateTowardNegInf,
    /// Round to nearest, exact halves toward zero.
    NearestTiesTowardZero,
}

impl fmt::Display for RoundingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RoundingMode::TruncateTowardNegInf => "trunc",
            RoundingMode::NearestTiesTowardZero => "nearest",
        })
    }
}

impl FromStr for RoundingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "trunc" | "truncate" | "floor" => Ok(RoundingMode::TruncateTowardNegInf),
            "nearest" | "round" => Ok(RoundingMode::NearestTiesTowardZero),
            other => Err(Error::Format(format!("unknown rounding mode {other:?}"))),
        }
    }
}

/// `p / 2^s` rounded per `mode`.
pub fn shift_round(p: i128, s: u32, mode: RoundingMode) -> i128 {
    if s == 0 {
        return p;
    }
    if s >= 127 {
        return match mode {
            RoundingMode::TruncateTowardNegInf if p < 0 => -1,
            _ => 0,
        };
    }
    match mode {
        RoundingMode::TruncateTowardNegInf => p >> s,
        RoundingMode::NearestTiesTowardZero => {
            let half = 1i128 << (s - 1);
            let bias = if p >= 0 { half - 1 } else { half };
            (p + bias) >> s
        }
    }
}

/// Split a finite non-zero `f64` into `mant * 2^exp` with an integer mantissa.
fn decompose(x: f64) -> (i64, i32) {
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac = (bits & ((1u64 << 52) - 1)) as i64;
    let (mant, exp) = if biased == 0 {
        (frac, -1074)
    } else {
        (frac | (1i64 << 52), biased - 1075)
    };
    (sign * mant, exp)
}

const SATURATE: i128 = 1 << 120;

/// `x * 2^l` rounded per `mode`, saturated to `±2^120`.
fn scaled_round(x: f64, l: u32, mode: RoundingMode) -> i128 {
    if x.is_nan() || x == 0.0 {
        return 0;
    }
    if x.is_infinite() {
        return if x > 0.0 { SATURATE } else { -SATURATE };
    }
    let (mant, exp) = decompose(x);
    let shift = exp + l as i32;
    if shift >= 0 {
        if shift > 66 {
            return if mant > 0 { SATURATE } else { -SATURATE };
        }
        (mant as i128) << shift
    } else {
        shift_round(mant as i128, (-shift) as u32, mode)
    }
}

/// Smallest `k` (sign bit included) such that `max_abs < 2^(k-1)`.
pub fn min_integer_bits(max_abs: f64) -> u32 {
    let m = max_abs.abs();
    let mut k = 1u32;
    while m >= ((k - 1) as f64).exp2() {
        k += 1;
    }
    k
}

/// Same rule evaluated on an exact rational bound.
pub fn min_integer_bits_exact(max_abs: &BigRational) -> u32 {
    let m = if max_abs < &BigRational::zero() {
        -max_abs.clone()
    } else {
        max_abs.clone()
    };
    let mut k = 1u32;
    let mut limit = BigRational::one();
    while m >= limit {
        k += 1;
        limit *= BigRational::from_integer(BigInt::from(2));
    }
    k
}

/// A value in a specific fixed-point format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FxpValue {
    raw: i64,
    format: FxpFormat,
}

impl FxpValue {
    /// Wraps `raw` into the format if needed.
    pub fn from_raw(raw: i64, format: FxpFormat) -> Self {
        Self {
            raw: format.wrap(raw as i128),
            format,
        }
    }

    pub fn zero(format: FxpFormat) -> Self {
        Self { raw: 0, format }
    }

    pub fn raw(&self) -> i64 {
        self.raw
    }

    pub fn format(&self) -> FxpFormat {
        self.format
    }

    pub fn to_f64(&self) -> f64 {
        self.format.to_f64(self.raw)
    }

    pub fn to_rational(&self) -> BigRational {
        self.format.to_rational(self.raw)
    }

    pub fn bits_string(&self) -> String {
        self.format.bits_string(self.raw)
    }

    pub fn overflowing_add(self, rhs: Self) -> (Self, bool) {
        debug_assert_eq!(self.format, rhs.format, "mixed formats");
        let (raw, w) = self.format.add_raw(self.raw, rhs.raw);
        (
            Self {
                raw,
                format: self.format,
            },
            w,
        )
    }

    pub fn overflowing_mul(self, rhs: Self, mode: RoundingMode) -> (Self, bool) {
        debug_assert_eq!(self.format, rhs.format, "mixed formats");
        let (raw, w) = self.format.mul_raw(self.raw, rhs.raw, mode);
        (
            Self {
                raw,
                format: self.format,
            },
            w,
        )
    }
}

impl fmt::Display for FxpValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_f64())
    }
}

/// Quantize a real number into `fmt`, wrapping when out of range.
pub fn fxp_from_real(x: f64, fmt: FxpFormat, mode: RoundingMode) -> FxpValue {
    let (raw, _) = fmt.quantize(x, mode);
    FxpValue { raw, format: fmt }
}

pub fn fxp_add(a: FxpValue, b: FxpValue) -> FxpValue {
    a.overflowing_add(b).0
}

pub fn fxp_mult(a: FxpValue, b: FxpValue, mode: RoundingMode) -> FxpValue {
    a.overflowing_mul(b, mode).0
}

/// Running count of wrap-around events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WrapCounter(u64);

impl WrapCounter {
    pub fn record(&mut self, wrapped: bool) {
        self.0 += wrapped as u64;
    }

    pub fn count(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(k: u32, l: u32) -> FxpFormat {
        FxpFormat::new(k, l).unwrap()
    }

    #[test]
    fn encodes_three_and_a_quarter() {
        let v = fxp_from_real(3.25, q(5, 3), RoundingMode::TruncateTowardNegInf);
        assert_eq!(v.raw(), 26);
        assert_eq!(v.bits_string(), "00011|010");
        let v = fxp_from_real(3.25, q(5, 3), RoundingMode::NearestTiesTowardZero);
        assert_eq!(v.raw(), 26);
    }

    #[test]
    fn zero_quantizes_to_zero() {
        for mode in [
            RoundingMode::TruncateTowardNegInf,
            RoundingMode::NearestTiesTowardZero,
        ] {
            assert_eq!(fxp_from_real(0.0, q(3, 9), mode).raw(), 0);
            assert_eq!(fxp_from_real(-0.0, q(1, 0), mode).raw(), 0);
        }
    }

    #[test]
    fn truncation_matches_rational_floor() {
        // floor(0.749 * 64) on the exact binary value of 0.749
        let x = BigRational::from_float(0.749f64).unwrap() * BigRational::from_integer(64.into());
        let expected = x.floor().to_integer();
        assert_eq!(expected, BigInt::from(47));
        let v = fxp_from_real(0.749, q(4, 6), RoundingMode::TruncateTowardNegInf);
        assert_eq!(v.raw(), 47);
        assert_eq!(v.to_f64(), 0.734375);
    }

    #[test]
    fn nearest_breaks_ties_toward_zero() {
        let f = q(4, 1);
        let m = RoundingMode::NearestTiesTowardZero;
        assert_eq!(f.quantize(0.25, m).0, 0);
        assert_eq!(f.quantize(-0.25, m).0, 0);
        assert_eq!(f.quantize(0.75, m).0, 1);
        assert_eq!(f.quantize(-0.75, m).0, -1);
        assert_eq!(f.quantize(0.26, m).0, 1);
        assert_eq!(f.quantize(-0.26, m).0, -1);
    }

    #[test]
    fn add_examples() {
        let f = q(4, 4);
        let t = RoundingMode::TruncateTowardNegInf;
        assert_eq!(
            fxp_add(fxp_from_real(1.5, f, t), fxp_from_real(2.25, f, t)).to_f64(),
            3.75
        );
        let (v, wrapped) = fxp_from_real(7.9375, f, t).overflowing_add(fxp_from_real(0.0625, f, t));
        assert!(wrapped);
        assert_eq!(v.to_f64(), -8.0);
    }

    #[test]
    fn add_zero_is_identity_exhaustively() {
        let f = q(4, 4);
        for raw in f.min_raw()..=f.max_raw() {
            let a = FxpValue::from_raw(raw, f);
            assert_eq!(fxp_add(a, FxpValue::zero(f)), a);
        }
    }

    #[test]
    fn mul_examples() {
        let t = RoundingMode::TruncateTowardNegInf;
        let f = q(4, 6);
        let a = fxp_from_real(2.0, f, t);
        let b = fxp_from_real(0.734375, f, t);
        assert_eq!(fxp_mult(a, b, t).to_f64(), 1.46875);

        let f = q(4, 4);
        let tiny = fxp_from_real(0.0625, f, t);
        assert_eq!(fxp_mult(tiny, tiny, t).raw(), 0);
    }

    #[test]
    fn mul_by_one_is_identity_exhaustively() {
        let f = q(3, 3);
        let one = fxp_from_real(1.0, f, RoundingMode::TruncateTowardNegInf);
        for mode in [
            RoundingMode::TruncateTowardNegInf,
            RoundingMode::NearestTiesTowardZero,
        ] {
            for raw in f.min_raw()..=f.max_raw() {
                let a = FxpValue::from_raw(raw, f);
                assert_eq!(fxp_mult(a, one, mode), a);
            }
        }
    }

    #[test]
    fn min_integer_bits_examples() {
        assert_eq!(min_integer_bits(23.3), 6);
        assert_eq!(min_integer_bits(53.9), 7);
        assert_eq!(min_integer_bits(0.0), 1);
        assert_eq!(min_integer_bits(72_142_560.0), 28);
        assert_eq!(min_integer_bits(0.5), 1);
        assert_eq!(min_integer_bits(1.0), 2);
        assert_eq!(
            min_integer_bits_exact(&BigRational::from_float(23.3).unwrap()),
            6
        );
    }

    #[test]
    fn parses_and_prints_formats() {
        let f: FxpFormat = "Q4.6".parse().unwrap();
        assert_eq!((f.int_bits(), f.frac_bits()), (4, 6));
        assert_eq!(f.to_string(), "Q4.6");
        assert_eq!("q<28,4>".parse::<FxpFormat>().unwrap(), q(28, 4));
        assert!("Q0.4".parse::<FxpFormat>().is_err());
        assert!("Q40.40".parse::<FxpFormat>().is_err());
        assert!("banana".parse::<FxpFormat>().is_err());
    }

    #[test]
    fn wide_formats_do_not_overflow_products() {
        let f = q(32, 32);
        let t = RoundingMode::TruncateTowardNegInf;
        let (r, wrapped) = f.mul_raw(f.min_raw(), f.min_raw(), t);
        // (-2^31)^2 = 2^62 needs 95 bits of raw word, which wraps to 0
        assert!(wrapped);
        assert_eq!(r, 0);
        let (r, wrapped) = f.mul_raw(f.max_raw(), 1 << 32, t);
        assert!(!wrapped);
        assert_eq!(r, f.max_raw());
    }

    #[test]
    fn huge_inputs_wrap_exactly() {
        let f = q(4, 4);
        let t = RoundingMode::TruncateTowardNegInf;
        assert_eq!(f.quantize(1e300, t), (0, true));
        // 17 -> raw 272 -> 272 - 256 = 16 -> value 1.0
        let (raw, wrapped) = f.quantize(17.0, t);
        assert!(wrapped);
        assert_eq!(raw, 16);
        assert_eq!(f.quantize(f64::NAN, t), (0, true));
    }

    #[test]
    fn floor_and_ceil_raw() {
        let f = q(4, 6);
        assert_eq!(f.floor_raw(2.7), 172);
        assert_eq!(f.ceil_raw(2.7), 173);
        assert_eq!(f.floor_raw(-2.7), -173);
        assert_eq!(f.ceil_raw(-2.7), -172);
        assert_eq!(f.ceil_raw(2.5), 160);
    }
}
