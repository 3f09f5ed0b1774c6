//! Circular (mod 2π) arithmetic and the small amount of circular statistics
//! the estimators need.
//!
//! Every phase in the crate is a [`Phase`]: a radian value canonically wrapped
//! into `[0, 2π)` at construction. Signed residuals live in `(−π, π]` and are
//! plain `f64`s produced by [`wrap_signed`]. Degrees only show up at reporting
//! boundaries ([`circular_rmse`]).

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex carrier sample, `e^{jθ}` plus noise.
pub type UnitSample = Complex64;

/// Averages whose magnitude falls below this are treated as having no phase.
pub const DEGENERATE_MAGNITUDE: f64 = 1e-12;

/// An angle in radians, always in `[0, 2π)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Phase(f64);

impl Phase {
    pub const ZERO: Phase = Phase(0.0);
    pub const PI: Phase = Phase(PI);

    /// Wraps `radians` into `[0, 2π)`.
    ///
    /// Panics on NaN or infinite input; use [`Phase::try_new`] or
    /// [`wrap_2pi`] for unchecked values.
    pub fn new(radians: f64) -> Self {
        match Self::try_new(radians) {
            Ok(p) => p,
            Err(e) => panic!("{e}"),
        }
    }

    pub fn try_new(radians: f64) -> Result<Self> {
        if !radians.is_finite() {
            return Err(Error::domain(format!(
                "phase must be finite, got {radians}"
            )));
        }
        let mut r = radians.rem_euclid(TAU);
        // rem_euclid can round up to exactly 2π for tiny negative inputs.
        if r >= TAU {
            r = 0.0;
        }
        Ok(Phase(r))
    }

    #[inline]
    pub fn radians(self) -> f64 {
        self.0
    }

    /// The same angle expressed in `(−π, π]`.
    #[inline]
    pub fn signed(self) -> f64 {
        if self.0 > PI {
            self.0 - TAU
        } else {
            self.0
        }
    }

    pub fn degrees(self) -> f64 {
        self.0.to_degrees()
    }

    /// `e^{jθ}`.
    pub fn phasor(self) -> Complex64 {
        Complex64::from_polar(1.0, self.0)
    }

    /// Argument of `z`, or `None` when `|z|` is too small to carry a phase.
    pub fn from_complex(z: Complex64) -> Option<Self> {
        if z.norm() < DEGENERATE_MAGNITUDE || !z.arg().is_finite() {
            None
        } else {
            Some(Phase::new(z.arg()))
        }
    }

    /// Shortest angular distance to `other`, in `[0, π]`.
    pub fn distance(self, other: Phase) -> f64 {
        // Ordered so the result is bit-for-bit symmetric.
        let (hi, lo) = if self.0 >= other.0 {
            (self.0, other.0)
        } else {
            (other.0, self.0)
        };
        let d = hi - lo;
        d.min(TAU - d)
    }

    /// Half the angle, taking the representative in `[0, π)`.
    ///
    /// Halving is only defined mod π; callers that need the other branch add
    /// [`Phase::PI`].
    pub fn half(self) -> Phase {
        Phase(self.0 / 2.0)
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6} rad", self.0)
    }
}

impl TryFrom<f64> for Phase {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Phase::try_new(value)
    }
}

impl From<Phase> for f64 {
    fn from(p: Phase) -> f64 {
        p.0
    }
}

impl Add for Phase {
    type Output = Phase;

    fn add(self, rhs: Phase) -> Phase {
        Phase::new(self.0 + rhs.0)
    }
}

impl Sub for Phase {
    type Output = Phase;

    fn sub(self, rhs: Phase) -> Phase {
        Phase::new(self.0 - rhs.0)
    }
}

impl Neg for Phase {
    type Output = Phase;

    fn neg(self) -> Phase {
        Phase::new(-self.0)
    }
}

impl Add<f64> for Phase {
    type Output = Phase;

    fn add(self, rhs: f64) -> Phase {
        Phase::new(self.0 + rhs)
    }
}

impl Sub<f64> for Phase {
    type Output = Phase;

    fn sub(self, rhs: f64) -> Phase {
        Phase::new(self.0 - rhs)
    }
}

impl AddAssign for Phase {
    fn add_assign(&mut self, rhs: Phase) {
        *self = *self + rhs;
    }
}

impl SubAssign for Phase {
    fn sub_assign(&mut self, rhs: Phase) {
        *self = *self - rhs;
    }
}

impl std::iter::Sum for Phase {
    fn sum<I: Iterator<Item = Phase>>(iter: I) -> Phase {
        iter.fold(Phase::ZERO, |acc, p| acc + p)
    }
}

/// `x − 2π·floor(x / 2π)`, in `[0, 2π)`.
pub fn wrap_2pi(x: f64) -> Result<Phase> {
    Phase::try_new(x)
}

/// The representative of `x` (mod 2π) in `(−π, π]`.
pub fn wrap_signed(x: f64) -> Result<f64> {
    Phase::try_new(x).map(Phase::signed)
}

/// Wraps `x` into `[0, period)`.
pub fn wrap_period(x: f64, period: f64) -> Result<f64> {
    if !x.is_finite() || !period.is_finite() || period <= 0.0 {
        return Err(Error::domain(format!(
            "cannot wrap {x} into period {period}"
        )));
    }
    let r = x.rem_euclid(period);
    Ok(if r >= period { 0.0 } else { r })
}

/// `|wrap_signed(a − b)|`, in `[0, π]`.
pub fn circ_distance(a: Phase, b: Phase) -> f64 {
    a.distance(b)
}

/// Result of coherently averaging carrier samples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentAverage {
    pub mean: Complex64,
}

impl CoherentAverage {
    /// Phase of the mean, `None` when the samples cancelled.
    pub fn phase(&self) -> Option<Phase> {
        Phase::from_complex(self.mean)
    }

    pub fn magnitude(&self) -> f64 {
        self.mean.norm()
    }

    pub fn is_degenerate(&self) -> bool {
        self.magnitude() < DEGENERATE_MAGNITUDE
    }
}

/// Arithmetic mean of `samples`; phase and magnitude are read off the result.
pub fn coherent_average(samples: &[UnitSample]) -> Result<CoherentAverage> {
    if samples.is_empty() {
        return Err(Error::usage("coherent_average needs at least one sample"));
    }
    let sum: Complex64 = samples.iter().sum();
    Ok(CoherentAverage {
        mean: sum / samples.len() as f64,
    })
}

/// Circular mean of unit phasors, `None` if they cancel.
pub fn circular_mean<I>(phases: I) -> Option<Phase>
where
    I: IntoIterator<Item = Phase>,
{
    let sum: Complex64 = phases.into_iter().map(Phase::phasor).sum();
    Phase::from_complex(sum)
}

/// Root-mean-square of the wrapped errors, reported in degrees.
pub fn circular_rmse(errors: &[f64]) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::usage("circular_rmse needs at least one error term"));
    }
    let mut acc = 0.0;
    for &e in errors {
        let w = wrap_signed(e)?;
        acc += w * w;
    }
    Ok((acc / errors.len() as f64).sqrt().to_degrees())
}
