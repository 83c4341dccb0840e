use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform quantizer with `2^bits` levels over `[lo, hi)`.
///
/// Level `k` has value `lo + k·(hi−lo)/2^bits`. A real input maps to the
/// largest level not above it, clamped into `0..2^bits`, so boundary ties
/// resolve downwards and quantizing a level returns that same level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    bits: u32,
    lo: f64,
    hi: f64,
}

impl QuantizerSpec {
    pub const MAX_BITS: u32 = 16;

    pub fn new(bits: u32, lo: f64, hi: f64) -> Result<Self> {
        if bits == 0 || bits > Self::MAX_BITS {
            return Err(Error::invalid_arg(format!(
                "quantizer bit width must be in 1..={}, got {bits}",
                Self::MAX_BITS
            )));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid_arg(format!(
                "quantizer range needs finite lo < hi, got [{lo}, {hi})"
            )));
        }
        Ok(Self { bits, lo, hi })
    }

    /// `[0, 1)` range, used for network inputs and hidden activations.
    pub fn unit(bits: u32) -> Result<Self> {
        Self::new(bits, 0.0, 1.0)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn level(&self, code: u32) -> f64 {
        self.lo + code as f64 * (self.hi - self.lo) / self.levels() as f64
    }

    /// Level index of `x`.
    pub fn code(&self, x: f64) -> u32 {
        let top = self.levels() - 1;
        if x.is_nan() || x <= self.lo {
            return 0;
        }
        let scaled = ((x - self.lo) * self.levels() as f64 / (self.hi - self.lo)).floor();
        let mut k = if scaled >= top as f64 { top } else { scaled as u32 };
        // Division rounding can land one level off; settle on max{k : level(k) <= x}.
        if k < top && self.level(k + 1) <= x {
            k += 1;
        } else if k > 0 && self.level(k) > x {
            k -= 1;
        }
        k
    }

    pub fn quantize(&self, x: f64) -> f64 {
        self.level(self.code(x))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

pub fn quantize(x: f64, q: &QuantizerSpec) -> f64 {
    q.quantize(x)
}

/// Clipped straight-through gradient: passes `upstream` when the forward
/// input `x` lay inside the quantizer range (boundaries included), else 0.
pub fn quantize_grad(upstream: f64, x: f64, q: &QuantizerSpec) -> f64 {
    if q.contains(x) {
        upstream
    } else {
        0.0
    }
}

/// Hidden-layer activation: `min(max(z, 0), 1)`.
pub fn clipped_relu(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

pub fn clipped_relu_grad(z: f64) -> f64 {
    if z > 0.0 && z < 1.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(bits: u32, lo: f64, hi: f64) -> QuantizerSpec {
        QuantizerSpec::new(bits, lo, hi).unwrap()
    }

    #[test]
    fn worked_examples() {
        assert_eq!(quantize(0.3, &q(2, 0.0, 1.0)), 0.25);
        assert_eq!(quantize(-5.0, &q(3, 0.0, 1.0)), 0.0);
        assert_eq!(quantize(1.0, &q(2, 0.0, 1.0)), 0.75);
        assert_eq!(q(2, 0.0, 1.0).code(1.0), 3);
    }

    #[test]
    fn straight_through() {
        let unit = q(2, 0.0, 1.0);
        assert_eq!(quantize_grad(1.0, 0.5, &unit), 1.0);
        assert_eq!(quantize_grad(1.0, 1.5, &unit), 0.0);
        assert_eq!(quantize_grad(-2.0, 0.0, &unit), -2.0);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(QuantizerSpec::new(0, 0.0, 1.0).is_err());
        assert!(QuantizerSpec::new(2, 1.0, 1.0).is_err());
        assert!(QuantizerSpec::new(2, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn boundary_ties_floor() {
        let unit = q(2, 0.0, 1.0);
        assert_eq!(unit.code(0.25), 1);
        assert_eq!(unit.code(0.25 - 1e-12), 0);
        assert_eq!(unit.code(f64::NAN), 0);
    }

    proptest! {
        #[test]
        fn idempotent(x in -3.0f64..3.0, bits in 1u32..8, lo in -2.0f64..1.0, width in 0.01f64..5.0) {
            let spec = q(bits, lo, lo + width);
            let once = spec.quantize(x);
            prop_assert_eq!(spec.quantize(once).to_bits(), once.to_bits());
            prop_assert!(spec.code(x) < spec.levels());
        }

        #[test]
        fn monotone(a in -3.0f64..3.0, b in -3.0f64..3.0, bits in 1u32..8, lo in -2.0f64..1.0, width in 0.01f64..5.0) {
            let spec = q(bits, lo, lo + width);
            let (x, y) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(spec.quantize(x) <= spec.quantize(y));
        }

        #[test]
        fn image_size_is_min_of_levels_and_inputs(xs in proptest::collection::vec(-1.0f64..2.0, 1..40), bits in 1u32..5) {
            let spec = q(bits, 0.0, 1.0);
            let mut codes: Vec<u32> = xs.iter().map(|&x| spec.code(x)).collect();
            codes.sort_unstable();
            codes.dedup();
            let mut distinct = xs.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            prop_assert!(codes.len() <= (spec.levels() as usize).min(distinct.len()));
        }
    }

    #[test]
    fn full_image_when_inputs_cover_every_level() {
        let spec = q(3, 0.0, 1.0);
        let xs: Vec<f64> = (0..200).map(|i| i as f64 / 199.0).collect();
        let mut codes: Vec<u32> = xs.iter().map(|&x| spec.code(x)).collect();
        codes.dedup();
        assert_eq!(codes.len(), 8);
    }
}
