//! Convex–concave split potentials `F = F₁ + F₂`.
//!
//! The convex part is evaluated implicitly by the time stepper and the
//! concave part explicitly, which is what makes the scheme unconditionally
//! energy stable. `F₂′` must be globally Lipschitz.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub trait SplitPotential<T: Scalar>: Send + Sync + std::fmt::Debug {
    fn convex(&self, s: T) -> T;
    fn convex_deriv(&self, s: T) -> T;
    /// Second derivative of the convex part, used in the Newton Jacobian.
    fn convex_second(&self, s: T) -> T;
    fn concave(&self, s: T) -> T;
    fn concave_deriv(&self, s: T) -> T;
    /// Lipschitz constant of `concave_deriv`.
    fn concave_lipschitz(&self) -> T;

    fn value(&self, s: T) -> T {
        self.convex(s) + self.concave(s)
    }

    fn deriv(&self, s: T) -> T {
        self.convex_deriv(s) + self.concave_deriv(s)
    }
}

/// `¼(1−s²)² + k·max{|s|−1, 0}²` split as
/// `F₁(s) = ¼s⁴ + ¼ + k·max{|s|−1, 0}²` and `F₂(s) = −½s²`.
///
/// With `k = 0` this is the smooth double well.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuarticWell<T> {
    penalty: T,
}

impl<T: Scalar> QuarticWell<T> {
    /// Penalty weight `1/δ′` (zero for the plain double well).
    pub fn penalty(&self) -> T {
        self.penalty
    }
}

pub fn double_well<T: Scalar>() -> QuarticWell<T> {
    QuarticWell { penalty: T::zero() }
}

/// Double well plus the quadratic penalty `(1/δ′) max{|s|−1, 0}²` that keeps
/// the phase field close to `[−1, 1]`.
pub fn penalised_double_well<T: Scalar>(delta_prime: T) -> Result<QuarticWell<T>> {
    if !(delta_prime > T::zero()) || !delta_prime.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "penalty scale delta' must be positive and finite, got {delta_prime}"
        )));
    }
    Ok(QuarticWell {
        penalty: T::one() / delta_prime,
    })
}

impl<T: Scalar> QuarticWell<T> {
    #[inline]
    fn excess(s: T) -> T {
        (s.abs() - T::one()).max(T::zero())
    }
}

impl<T: Scalar> SplitPotential<T> for QuarticWell<T> {
    fn convex(&self, s: T) -> T {
        let q = T::lit(0.25);
        let e = Self::excess(s);
        q * s.powi(4) + q + self.penalty * e * e
    }

    fn convex_deriv(&self, s: T) -> T {
        let e = Self::excess(s);
        s * s * s + T::lit(2.0) * self.penalty * e * s.signum()
    }

    fn convex_second(&self, s: T) -> T {
        let jump = if s.abs() >= T::one() && self.penalty > T::zero() {
            T::lit(2.0) * self.penalty
        } else {
            T::zero()
        };
        T::lit(3.0) * s * s + jump
    }

    fn concave(&self, s: T) -> T {
        -T::lit(0.5) * s * s
    }

    fn concave_deriv(&self, s: T) -> T {
        -s
    }

    fn concave_lipschitz(&self) -> T {
        T::one()
    }
}

/// Bulk potential `F` and surface potential `G`.
#[derive(Clone, Debug)]
pub struct Potentials<T> {
    pub bulk: Arc<dyn SplitPotential<T>>,
    pub surface: Arc<dyn SplitPotential<T>>,
}

impl<T: Scalar> Potentials<T> {
    pub fn new(bulk: impl SplitPotential<T> + 'static, surface: impl SplitPotential<T> + 'static) -> Self {
        Self {
            bulk: Arc::new(bulk),
            surface: Arc::new(surface),
        }
    }

    /// The same potential on the bulk and on the boundary.
    pub fn same(p: impl SplitPotential<T> + Clone + 'static) -> Self {
        Self::new(p.clone(), p)
    }
}
