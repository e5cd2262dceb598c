//! Element precision policy.
//!
//! Values are stored as `f64` internally. An array tagged [`Precision::F32`]
//! has every element rounded to the nearest `f32` whenever it is produced,
//! so arithmetic results (and overflow to infinity) match single precision.

use std::cell::Cell;
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    #[inline]
    pub fn round(self, v: f64) -> f64 {
        match self {
            Precision::F32 => v as f32 as f64,
            Precision::F64 => v,
        }
    }

    /// The wider of two precisions; mixed inputs promote.
    #[inline]
    pub fn widest(self, other: Precision) -> Precision {
        self.max(other)
    }

    pub fn epsilon(self) -> f64 {
        match self {
            Precision::F32 => f32::EPSILON as f64,
            Precision::F64 => f64::EPSILON,
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Precision::F32 => f.write_str("f32"),
            Precision::F64 => f.write_str("f64"),
        }
    }
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::InvalidConfig(format!("unknown precision `{other}`"))),
        }
    }
}

thread_local! {
    static DEFAULT_PRECISION: Cell<Precision> = const { Cell::new(Precision::F32) };
}

/// Precision applied to newly created arrays on this thread.
pub fn default_precision() -> Precision {
    DEFAULT_PRECISION.with(|p| p.get())
}

pub fn set_default_precision(precision: Precision) {
    DEFAULT_PRECISION.with(|p| p.set(precision));
}

/// Runs `f` with `precision` as the default, restoring the previous default
/// afterwards (also on unwind).
pub fn with_precision<T>(precision: Precision, f: impl FnOnce() -> T) -> T {
    struct Restore(Precision);
    impl Drop for Restore {
        fn drop(&mut self) {
            set_default_precision(self.0);
        }
    }
    let _restore = Restore(default_precision());
    set_default_precision(precision);
    f()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_single() {
        assert_eq!(default_precision(), Precision::F32);
    }

    #[test]
    fn scoped_override_restores() {
        with_precision(Precision::F64, || {
            assert_eq!(default_precision(), Precision::F64);
        });
        assert_eq!(default_precision(), Precision::F32);
    }

    #[test]
    fn f32_rounding_overflows_to_infinity() {
        assert!(Precision::F32.round(1e39).is_infinite());
        assert_eq!(Precision::F64.round(1e39), 1e39);
        assert_eq!(Precision::F32.round(0.1), 0.1f32 as f64);
    }
}
