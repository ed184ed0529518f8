//! Signed fixed-point words, weight quantization and saturating arithmetic.
//!
//! All stored quantities (weights, membrane potentials, synaptic currents) are
//! plain two's-complement integers of a design-time bit-width. Real-valued
//! scale only matters at the boundary where trained float parameters are
//! mapped onto the integer grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Total signed bit-width of a fixed-point quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct QFormat {
    bits: u8,
}

impl QFormat {
    pub const MIN_BITS: u8 = 2;
    pub const MAX_BITS: u8 = 32;

    pub fn new(bits: u32) -> Result<Self> {
        if !(Self::MIN_BITS as u32..=Self::MAX_BITS as u32).contains(&bits) {
            return Err(Error::InvalidBitWidth(bits));
        }
        Ok(Self { bits: bits as u8 })
    }

    pub fn bits(self) -> u8 {
        self.bits
    }

    pub fn min(self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    pub fn max(self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }

    pub fn contains(self, v: i64) -> bool {
        (self.min()..=self.max()).contains(&v)
    }

    pub fn clamp(self, v: i64) -> i32 {
        v.clamp(self.min(), self.max()) as i32
    }

    /// Two's-complement bit pattern of `v` in the low `bits` bits.
    pub fn to_raw(self, v: i32) -> u64 {
        (v as i64 as u64) & self.mask()
    }

    /// Sign-extends the low `bits` bits of `raw`.
    pub fn from_raw(self, raw: u64) -> i32 {
        let shift = 64 - self.bits as u32;
        (((raw & self.mask()) << shift) as i64 >> shift) as i32
    }

    fn mask(self) -> u64 {
        if self.bits == 64 {
            u64::MAX
        } else {
            (1u64 << self.bits) - 1
        }
    }
}

impl TryFrom<u8> for QFormat {
    type Error = Error;

    fn try_from(bits: u8) -> Result<Self> {
        QFormat::new(bits as u32)
    }
}

impl From<QFormat> for u8 {
    fn from(f: QFormat) -> u8 {
        f.bits
    }
}

/// A value paired with its format. The value is always representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QWord {
    value: i32,
    format: QFormat,
}

impl QWord {
    pub fn new(value: i64, format: QFormat) -> Result<Self> {
        if !format.contains(value) {
            return Err(Error::OutOfRange(format!(
                "{value} does not fit a {}-bit signed word",
                format.bits
            )));
        }
        Ok(Self { value: value as i32, format })
    }

    /// Clamps `value` into the format range.
    pub fn saturating(value: i64, format: QFormat) -> Self {
        Self { value: format.clamp(value), format }
    }

    pub fn zero(format: QFormat) -> Self {
        Self { value: 0, format }
    }

    pub fn value(self) -> i32 {
        self.value
    }

    pub fn format(self) -> QFormat {
        self.format
    }

    /// Re-expresses the word in a format at least as wide.
    pub fn widen(self, format: QFormat) -> Result<Self> {
        if format.bits < self.format.bits {
            return Err(Error::FormatMismatch { left: self.format.bits, right: format.bits });
        }
        Ok(Self { value: self.value, format })
    }
}

/// Membrane reset applied after a spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetPolicy {
    ResetToZero,
    ResetBySubtract,
}

impl ResetPolicy {
    pub fn code(self) -> u64 {
        match self {
            ResetPolicy::ResetToZero => 0,
            ResetPolicy::ResetBySubtract => 1,
        }
    }

    pub fn from_code(code: u64) -> Result<Self> {
        match code {
            0 => Ok(ResetPolicy::ResetToZero),
            1 => Ok(ResetPolicy::ResetBySubtract),
            other => Err(Error::Config(format!("unknown reset policy code {other}"))),
        }
    }
}

/// Per-layer mapping between float units and the integer grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerQuantization {
    /// Float units per integer LSB, shared by weights and membrane potential.
    pub weight_scale: f64,
    /// Threshold in the membrane-potential format.
    pub threshold_q: QWord,
    pub reset_policy: ResetPolicy,
}

impl LayerQuantization {
    pub fn new(
        weight_scale: f64,
        threshold: f64,
        potential: QFormat,
        reset_policy: ResetPolicy,
    ) -> Result<Self> {
        if !(weight_scale.is_finite() && weight_scale > 0.0) {
            return Err(Error::Config(format!("weight scale must be positive, got {weight_scale}")));
        }
        if !threshold.is_finite() {
            return Err(Error::NonFinite { index: 0, value: threshold });
        }
        let threshold_q = quantize_value(threshold, weight_scale, potential);
        Ok(Self { weight_scale, threshold_q, reset_policy })
    }
}

fn largest_code(fmt: QFormat) -> f64 {
    fmt.max() as f64
}

fn check_finite(weights: &[f64]) -> Result<()> {
    match weights.iter().enumerate().find(|(_, w)| !w.is_finite()) {
        Some((index, &value)) => Err(Error::NonFinite { index, value }),
        None => Ok(()),
    }
}

/// `clamp(round(x / scale))` with round-half-away-from-zero.
pub fn quantize_value(x: f64, scale: f64, fmt: QFormat) -> QWord {
    let code = (x / scale).round();
    // f64 -> i64 saturates, clamp handles the rest
    QWord::saturating(code as i64, fmt)
}

/// Symmetric max-abs quantization of one weight vector.
///
/// Returns the quantized words and the float value of one LSB. An all-zero
/// vector maps to zeros with a unit scale.
pub fn quantize_weights(weights: &[f64], fmt: QFormat) -> Result<(Vec<QWord>, f64)> {
    if weights.is_empty() {
        return Err(Error::Empty("weight vector"));
    }
    check_finite(weights)?;
    let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if max_abs == 0.0 {
        return Ok((vec![QWord::zero(fmt); weights.len()], 1.0));
    }
    let qmax = largest_code(fmt);
    let words = weights
        .iter()
        .map(|&w| QWord::saturating((w * qmax / max_abs).round() as i64, fmt))
        .collect();
    Ok((words, max_abs / qmax))
}

/// LSB size such that every group fits its own format without clipping.
///
/// Used when several weight groups of one layer (feedforward and recurrent)
/// accumulate into the same membrane and must share a grid. For a single
/// group this equals the scale returned by [`quantize_weights`].
pub fn shared_scale(groups: &[(&[f64], QFormat)]) -> Result<f64> {
    let mut scale = 0.0f64;
    for (weights, fmt) in groups {
        check_finite(weights)?;
        let max_abs = weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
        scale = scale.max(max_abs / largest_code(*fmt));
    }
    Ok(if scale == 0.0 { 1.0 } else { scale })
}

/// Quantizes onto a given grid.
pub fn quantize_with_scale(weights: &[f64], scale: f64, fmt: QFormat) -> Result<Vec<QWord>> {
    check_finite(weights)?;
    Ok(weights.iter().map(|&w| quantize_value(w, scale, fmt)).collect())
}

/// Saturating addition of two words of the same format.
pub fn sat_add(a: QWord, b: QWord) -> Result<QWord> {
    if a.format != b.format {
        return Err(Error::FormatMismatch { left: a.format.bits, right: b.format.bits });
    }
    Ok(QWord::saturating(a.value as i64 + b.value as i64, a.format))
}

/// Saturating subtraction of two words of the same format.
pub fn sat_sub(a: QWord, b: QWord) -> Result<QWord> {
    if a.format != b.format {
        return Err(Error::FormatMismatch { left: a.format.bits, right: b.format.bits });
    }
    Ok(QWord::saturating(a.value as i64 - b.value as i64, a.format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(bits: u32) -> QFormat {
        QFormat::new(bits).unwrap()
    }

    fn values(words: &[QWord]) -> Vec<i32> {
        words.iter().map(|w| w.value()).collect()
    }

    #[test]
    fn format_range() {
        assert_eq!((q(8).min(), q(8).max()), (-128, 127));
        assert_eq!((q(2).min(), q(2).max()), (-2, 1));
        assert_eq!((q(32).min(), q(32).max()), (i32::MIN as i64, i32::MAX as i64));
        assert!(QFormat::new(1).is_err());
        assert!(QFormat::new(33).is_err());
    }

    #[test]
    fn raw_roundtrip_sign_extends() {
        let f = q(9);
        assert_eq!(f.to_raw(-1), 0x1ff);
        assert_eq!(f.from_raw(0x1ff), -1);
        assert_eq!(f.from_raw(0x100), -256);
        assert_eq!(f.from_raw(0xff), 255);
        assert_eq!(q(32).from_raw(q(32).to_raw(i32::MIN)), i32::MIN);
    }

    #[test]
    fn quantize_half_rounds_away() {
        let (w, s) = quantize_weights(&[-0.5, 0.25, 0.5], q(4)).unwrap();
        assert_eq!(values(&w), vec![-7, 4, 7]);
        assert_eq!(s, 0.5 / 7.0);
    }

    #[test]
    fn quantize_all_zero() {
        let (w, s) = quantize_weights(&[0.0, 0.0], q(8)).unwrap();
        assert_eq!(values(&w), vec![0, 0]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn quantize_two_bit() {
        let (w, s) = quantize_weights(&[1.0], q(2)).unwrap();
        assert_eq!(values(&w), vec![1]);
        assert_eq!(s, 1.0);
    }

    #[test]
    fn quantize_rejects_nan() {
        let err = quantize_weights(&[0.1, f64::NAN], q(8)).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 1, .. }));
        assert!(quantize_weights(&[], q(8)).is_err());
        assert!(quantize_weights(&[f64::INFINITY], q(8)).is_err());
    }

    #[test]
    fn shared_scale_matches_single_group() {
        let w = [0.3, -0.9, 0.45];
        let (_, s) = quantize_weights(&w, q(6)).unwrap();
        assert_eq!(shared_scale(&[(&w, q(6))]).unwrap(), s);
        // the coarser group decides
        let r = [2.0];
        let s2 = shared_scale(&[(&w, q(8)), (&r, q(4))]).unwrap();
        assert_eq!(s2, 2.0 / 7.0);
    }

    #[test]
    fn threshold_rescaled_to_potential_grid() {
        let lq = LayerQuantization::new(0.5 / 7.0, 1.0, q(9), ResetPolicy::ResetToZero).unwrap();
        assert_eq!(lq.threshold_q.value(), 14);
        assert_eq!(lq.threshold_q.format(), q(9));
        assert!(LayerQuantization::new(0.0, 1.0, q(9), ResetPolicy::ResetToZero).is_err());
    }

    #[test]
    fn sat_add_examples() {
        let f = q(8);
        let w = |v| QWord::new(v, f).unwrap();
        assert_eq!(sat_add(w(127), w(1)).unwrap().value(), 127);
        assert_eq!(sat_add(w(-128), w(-1)).unwrap().value(), -128);
        assert_eq!(sat_add(w(50), w(-20)).unwrap().value(), 30);
        let other = QWord::new(1, q(9)).unwrap();
        assert!(matches!(sat_add(w(1), other), Err(Error::FormatMismatch { .. })));
    }

    #[test]
    fn qword_rejects_out_of_range() {
        assert!(QWord::new(128, q(8)).is_err());
        assert!(QWord::new(-129, q(8)).is_err());
        assert_eq!(QWord::saturating(1000, q(8)).value(), 127);
    }

    proptest! {
        #[test]
        fn quantize_is_sign_symmetric(ws in prop::collection::vec(-10.0f64..10.0, 1..32), bits in 2u32..=16) {
            let f = q(bits);
            let neg: Vec<f64> = ws.iter().map(|w| -w).collect();
            let (a, sa) = quantize_weights(&ws, f).unwrap();
            let (b, sb) = quantize_weights(&neg, f).unwrap();
            prop_assert_eq!(sa, sb);
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.value(), -y.value());
            }
        }

        #[test]
        fn dequantization_error_is_half_lsb(ws in prop::collection::vec(-10.0f64..10.0, 1..32), bits in 2u32..=16) {
            let f = q(bits);
            let (words, scale) = quantize_weights(&ws, f).unwrap();
            for (w, qw) in ws.iter().zip(&words) {
                if qw.value() as i64 != f.min() {
                    prop_assert!((w - qw.value() as f64 * scale).abs() <= scale / 2.0 + 1e-12);
                }
            }
        }

        #[test]
        fn sat_add_commutes_and_stays_in_range(a in any::<i32>(), b in any::<i32>(), bits in 2u32..=32) {
            let f = q(bits);
            let x = QWord::saturating(a as i64, f);
            let y = QWord::saturating(b as i64, f);
            let s = sat_add(x, y).unwrap();
            prop_assert_eq!(s, sat_add(y, x).unwrap());
            prop_assert!(f.contains(s.value() as i64));
        }
    }
}
