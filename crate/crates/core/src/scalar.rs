//! Scalar abstraction over the monetary precision used by the simulation.
//!
//! All loss arithmetic is generic over [`Scalar`] so the same engine code
//! runs in wide (f64) and narrow (f32) precision. The crate root exposes
//! the [`crate::Wide`] and [`crate::Narrow`] aliases.

use std::fmt;

use num_traits::Float;

/// Floating-point scalar a loss value can be computed in: f32 or f64.
pub trait Scalar: Float + fmt::Debug + fmt::Display + Send + Sync + 'static {
    /// Lossy conversion from the wide (f64) representation.
    fn from_wide(value: f64) -> Self;

    /// Exact widening back to f64.
    fn to_wide(self) -> f64;

    /// Size in bytes of one stored value, used by memory accounting.
    const BYTES: u64;
}

impl Scalar for f32 {
    #[inline]
    fn from_wide(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn to_wide(self) -> f64 {
        f64::from(self)
    }

    const BYTES: u64 = 4;
}

impl Scalar for f64 {
    #[inline]
    fn from_wide(value: f64) -> Self {
        value
    }

    #[inline]
    fn to_wide(self) -> f64 {
        self
    }

    const BYTES: u64 = 8;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn widening_roundtrips_narrow_values() {
        let narrow = Scalar::from_wide(140.25_f64);
        let _: f32 = narrow;
        assert_eq!(narrow.to_wide(), 140.25);
    }

    #[test]
    fn infinity_survives_conversion() {
        assert_eq!(f32::from_wide(f64::INFINITY), f32::INFINITY);
        assert_eq!(f32::INFINITY.to_wide(), f64::INFINITY);
    }
}
