//! Physical constants, the coupling parameter and the time grid.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Reaction coupling `L ∈ [0, ∞]`. `1/L` acts as the reaction rate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Coupling<T> {
    Finite(T),
    Infinite,
}

impl<T: Scalar> Coupling<T> {
    pub fn is_zero(&self) -> bool {
        matches!(self, Coupling::Finite(l) if *l == T::zero())
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Coupling::Infinite)
    }

    /// Finite value, if any.
    pub fn finite(&self) -> Option<T> {
        match self {
            Coupling::Finite(l) => Some(*l),
            Coupling::Infinite => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Coupling::Finite(l) => l.to_f64_lossy(),
            Coupling::Infinite => f64::INFINITY,
        }
    }

    /// Maps `+∞` to [`Coupling::Infinite`]; everything else is finite.
    pub fn from_f64(l: f64) -> Self {
        if l == f64::INFINITY {
            Coupling::Infinite
        } else {
            Coupling::Finite(T::lit(l))
        }
    }
}

impl<T: Scalar> std::fmt::Display for Coupling<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Coupling::Finite(l) => write!(f, "{l}"),
            Coupling::Infinite => f.write_str("inf"),
        }
    }
}

/// The prefactors `L̃/(L̃+1)` and `1/(L̃+1)` with `L̃ = L/m_Ω`, through
/// which the whole scheme depends on `L`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingWeights<T> {
    pub w_inf: T,
    pub w_zero: T,
    /// `L̃ = L/m_Ω`; `None` for `L = ∞`.
    pub l_eff: Option<T>,
}

impl<T: Scalar> CouplingWeights<T> {
    pub fn new(coupling: Coupling<T>, m_bulk: T) -> Self {
        match coupling {
            Coupling::Infinite => Self {
                w_inf: T::one(),
                w_zero: T::zero(),
                l_eff: None,
            },
            Coupling::Finite(l) => {
                let le = l / m_bulk;
                let denom = le + T::one();
                Self {
                    w_inf: le / denom,
                    w_zero: T::one() / denom,
                    l_eff: Some(le),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub epsilon: T,
    pub delta: T,
    pub kappa: T,
    pub m_bulk: T,
    pub m_surf: T,
    pub beta: T,
    pub coupling: Coupling<T>,
    pub tau: T,
    pub t_final: T,
}

impl<T: Scalar> ModelParams<T> {
    /// The simulation parameters of the full-resolution droplet study.
    pub fn table() -> Self {
        Self {
            epsilon: T::lit(0.01),
            delta: T::lit(0.02),
            kappa: T::lit(0.25),
            m_bulk: T::one(),
            m_surf: T::lit(0.4),
            beta: T::lit(4.0),
            coupling: Coupling::Finite(T::one()),
            tau: T::lit(6e-7),
            t_final: T::lit(0.05),
        }
    }

    /// Scaled-down parameters for runs that finish in minutes on one core.
    pub fn desk() -> Self {
        Self {
            epsilon: T::lit(0.02),
            delta: T::lit(0.04),
            tau: T::lit(1e-5),
            t_final: T::lit(5e-3),
            ..Self::table()
        }
    }

    pub fn with_coupling(self, coupling: Coupling<T>) -> Self {
        Self { coupling, ..self }
    }

    pub fn weights(&self) -> CouplingWeights<T> {
        CouplingWeights::new(self.coupling, self.m_bulk)
    }

    /// Number of steps needed to reach `T`: `T/τ` when it is an integer up
    /// to rounding, otherwise `⌈T/τ⌉`.
    pub fn n_steps(&self) -> usize {
        let r = self.t_final / self.tau;
        let k = r.round();
        let steps = if (r - k).abs() <= T::lit(1e-9) * r { k } else { r.ceil() };
        steps.to_usize().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("m_bulk", self.m_bulk),
            ("m_surf", self.m_surf),
            ("beta", self.beta),
            ("tau", self.tau),
            ("t_final", self.t_final),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.kappa >= T::zero()) || !self.kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be nonnegative and finite, got {}",
                self.kappa
            )));
        }
        if let Coupling::Finite(l) = self.coupling {
            if !(l >= T::zero()) || !l.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "coupling L must lie in [0, inf], got {l}"
                )));
            }
        }
        if self.tau > self.t_final {
            return Err(Error::InvalidParameter(format!(
                "tau = {} exceeds the final time {}",
                self.tau, self.t_final
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_limits() {
        let w = CouplingWeights::<f64>::new(Coupling::Infinite, 1.0);
        assert_eq!((w.w_inf, w.w_zero), (1.0, 0.0));
        let w = CouplingWeights::<f64>::new(Coupling::Finite(0.0), 1.0);
        assert_eq!((w.w_inf, w.w_zero), (0.0, 1.0));
        for l in [1e-12, 1e-3, 0.1, 1.0, 7.0, 1e6] {
            let w = CouplingWeights::<f64>::new(Coupling::Finite(l), 2.0);
            assert!((w.w_inf + w.w_zero - 1.0).abs() <= 2.0 * f64::EPSILON);
            assert_eq!(w.l_eff, Some(l / 2.0));
        }
        // tiny L keeps full relative precision in w_inf
        let w = CouplingWeights::<f64>::new(Coupling::Finite(1e-300), 1.0);
        assert_eq!(w.w_inf, 1e-300);
    }

    #[test]
    fn presets_are_valid() {
        let t = ModelParams::<f64>::table();
        t.validate().unwrap();
        assert_eq!(t.n_steps(), 83_334);
        let d = ModelParams::<f64>::desk();
        d.validate().unwrap();
        assert_eq!(d.n_steps(), 500);
        assert_eq!(d.beta, 4.0);
        assert_eq!(d.m_surf, 0.4);
    }

    #[test]
    fn validation_rejects_bad_values() {
        let base = ModelParams::<f64>::desk();
        assert!(ModelParams { beta: 0.0, ..base }.validate().is_err());
        assert!(ModelParams { epsilon: -1.0, ..base }.validate().is_err());
        assert!(ModelParams { kappa: -0.1, ..base }.validate().is_err());
        assert!(ModelParams { tau: 1.0, ..base }.validate().is_err());
        assert!(base.with_coupling(Coupling::Finite(-1.0)).validate().is_err());
        assert!(base.with_coupling(Coupling::Finite(f64::NAN)).validate().is_err());
        assert!(ModelParams { kappa: 0.0, ..base }.validate().is_ok());
        assert!(base.with_coupling(Coupling::Infinite).validate().is_ok());
    }

    #[test]
    fn coupling_f64_roundtrip() {
        assert_eq!(Coupling::<f64>::from_f64(f64::INFINITY), Coupling::Infinite);
        assert_eq!(Coupling::<f64>::from_f64(0.5).to_f64(), 0.5);
        assert_eq!(Coupling::<f64>::Infinite.to_string(), "inf");
    }
}
