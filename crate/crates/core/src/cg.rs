//! Coefficient generator: multiplier-free leakage.
//!
//! A decay factor k/256 is applied by summing right-shifted copies of the
//! input. Each of the eight shift paths (>>1 .. >>8) is gated by one bit of
//! the 9-bit `DecayRate` word; a ninth bit routes the input straight through
//! (no decay). The eight paths are grouped in four adder blocks of two
//! shifts each, and a block that was not synthesized (see [`SelectionUnits`])
//! cannot be used.
//!
//! Shifting happens on the magnitude and the sign is put back afterwards, so
//! `decay(-x) == -decay(x)` holds exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fxp::QWord;

const BYPASS: u16 = 1 << 8;

/// 9-bit decay control word: bit 8 bypass, bits 7..0 shift enables
/// (bit 7 selects `>>1`, bit 0 selects `>>8`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub struct DecayRate(u16);

impl DecayRate {
    pub const BYPASS: DecayRate = DecayRate(BYPASS);

    pub fn from_raw(raw: u16) -> Result<Self> {
        if raw >= 512 {
            return Err(Error::OutOfRange(format!("decay rate word {raw:#x} exceeds 9 bits")));
        }
        Ok(Self(raw))
    }

    /// Factor k/256 with bypass clear.
    pub fn from_k(k: u8) -> Self {
        Self(k as u16)
    }

    pub fn raw(self) -> u16 {
        self.0
    }

    pub fn is_bypass(self) -> bool {
        self.0 & BYPASS != 0
    }

    /// Shift-enable mask; meaningless when bypassed.
    pub fn k(self) -> u8 {
        (self.0 & 0xff) as u8
    }

    pub fn factor(self) -> f64 {
        if self.is_bypass() {
            1.0
        } else {
            self.k() as f64 / 256.0
        }
    }

    /// Adder blocks needed to realize this rate.
    pub fn required_units(self) -> SelectionUnits {
        if self.is_bypass() {
            return SelectionUnits(0);
        }
        let k = self.k();
        let mut mask = 0u8;
        for unit in 0..4 {
            let pair = 0b1100_0000u8 >> (2 * unit);
            if k & pair != 0 {
                mask |= 1 << unit;
            }
        }
        SelectionUnits(mask)
    }
}

impl TryFrom<u16> for DecayRate {
    type Error = Error;

    fn try_from(raw: u16) -> Result<Self> {
        DecayRate::from_raw(raw)
    }
}

impl From<DecayRate> for u16 {
    fn from(d: DecayRate) -> u16 {
        d.0
    }
}

/// Design-time presence of the four adder blocks. Unit `i` carries shifts
/// `2i+1` and `2i+2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct SelectionUnits(u8);

impl SelectionUnits {
    pub const ALL: SelectionUnits = SelectionUnits(0b1111);
    pub const NONE: SelectionUnits = SelectionUnits(0);

    pub fn new(mask: u8) -> Result<Self> {
        if mask > 0b1111 {
            return Err(Error::OutOfRange(format!("selection unit mask {mask:#b} exceeds 4 bits")));
        }
        Ok(Self(mask))
    }

    /// Blocks needed to cover the top `leak_bits` shift paths.
    pub fn for_leak_bits(leak_bits: u8) -> Self {
        let units = (leak_bits.min(8) as u32).div_ceil(2);
        Self(((1u16 << units) - 1) as u8)
    }

    pub fn mask(self) -> u8 {
        self.0
    }

    pub fn union(self, other: SelectionUnits) -> SelectionUnits {
        SelectionUnits(self.0 | other.0)
    }

    pub fn covers(self, rate: DecayRate) -> bool {
        rate.required_units().0 & !self.0 == 0
    }
}

impl TryFrom<u8> for SelectionUnits {
    type Error = Error;

    fn try_from(mask: u8) -> Result<Self> {
        SelectionUnits::new(mask)
    }
}

impl From<SelectionUnits> for u8 {
    fn from(s: SelectionUnits) -> u8 {
        s.0
    }
}

/// Encodes a retention factor with `leak_bits` of shift precision.
///
/// k = round(factor * 256) (ties up) with the low `8 - leak_bits` bits
/// cleared. Factors that round to 256 select the bypass path, which is
/// exactly 1.
pub fn encode_decay(factor: f64, leak_bits: u8) -> Result<DecayRate> {
    if !(0.0..=1.0).contains(&factor) {
        return Err(Error::OutOfRange(format!("decay factor {factor} outside [0, 1]")));
    }
    if !(1..=8).contains(&leak_bits) {
        return Err(Error::OutOfRange(format!("leak precision {leak_bits} outside 1..=8")));
    }
    let k = (factor * 256.0 + 0.5).floor();
    if k >= 256.0 {
        return Ok(DecayRate::BYPASS);
    }
    let k = k as u8;
    let keep = 0xffu8 << (8 - leak_bits);
    Ok(DecayRate::from_k(k & keep))
}

/// Applies the shift-and-add network to one word.
pub fn apply_decay(x: QWord, rate: DecayRate, units: SelectionUnits) -> Result<QWord> {
    if !units.covers(rate) {
        return Err(Error::Config(format!(
            "decay rate {:#011b} needs selection units {:#06b}, only {:#06b} synthesized",
            rate.raw(),
            rate.required_units().mask(),
            units.mask()
        )));
    }
    Ok(QWord::saturating(decay_value(x.value() as i64, rate), x.format()))
}

/// Raw arithmetic of the coefficient generator, without the unit check.
pub(crate) fn decay_value(x: i64, rate: DecayRate) -> i64 {
    if rate.is_bypass() {
        return x;
    }
    let magnitude = x.unsigned_abs();
    let k = rate.k();
    let sum: u64 = (1..=8u32)
        .filter(|s| k & (0x80 >> (s - 1)) != 0)
        .map(|s| magnitude >> s)
        .sum();
    if x < 0 {
        -(sum as i64)
    } else {
        sum as i64
    }
}
