//! The time-periodic reaction term `f(t, u)` and its `u`-derivatives.
//!
//! Built-in families share the product form `f(t, u) = b(t) g(u)` with
//! `b(t) = 1 + beta sin(2 pi t / T)`. A custom family takes a table of
//! Fourier-in-`t`, polynomial-in-`u` coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kinetics::PeriodicOrbit;
use crate::scalar::Scalar;

/// Autonomous factor `g(u)` of a product-form family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile<S> {
    /// `u (1 - u) (u - theta)`.
    Bistable { theta: S },
    /// Zero on `[0, q1]`, `(u - q1)(1 - u)` above.
    Combustion { q1: S },
    /// `u (1 - u)`.
    Logistic,
}

/// One term `u^power (cos_coeff cos(2 pi k t/T) + sin_coeff sin(2 pi k t/T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CustomTerm<S> {
    pub power: u32,
    pub harmonic: u32,
    pub cos_coeff: S,
    pub sin_coeff: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family<S> {
    /// `b(t) g(u)` with one of the built-in profiles.
    Forced { profile: Profile<S>, beta: S },
    Custom { terms: Vec<CustomTerm<S>> },
}

/// Evaluable model of `f(t, u)` with period `T`. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearitySpec<S> {
    pub family: Family<S>,
    pub period: S,
}

impl<S: Scalar> NonlinearitySpec<S> {
    pub fn bistable(theta: S, beta: S, period: S) -> Result<Self> {
        if !(theta > S::zero() && theta < S::one()) {
            return Err(LabError::Model(format!(
                "bistable threshold must lie in (0, 1), got {theta}"
            )));
        }
        Self::forced(Profile::Bistable { theta }, beta, period)
    }

    pub fn combustion(q1: S, beta: S, period: S) -> Result<Self> {
        if !(q1 > S::zero() && q1 < S::one()) {
            return Err(LabError::Model(format!(
                "ignition level must lie in (0, 1), got {q1}"
            )));
        }
        Self::forced(Profile::Combustion { q1 }, beta, period)
    }

    pub fn logistic(beta: S, period: S) -> Result<Self> {
        Self::forced(Profile::Logistic, beta, period)
    }

    pub fn forced(profile: Profile<S>, beta: S, period: S) -> Result<Self> {
        check_period(period)?;
        if !beta.is_finite() || beta < S::zero() {
            return Err(LabError::Model(format!(
                "forcing amplitude must be finite and nonnegative, got {beta}"
            )));
        }
        let spec = Self {
            family: Family::Forced { profile, beta },
            period,
        };
        Ok(spec)
    }

    /// Custom table. Every term must carry a positive power of `u` so that `f(t, 0) = 0`.
    pub fn custom(terms: Vec<CustomTerm<S>>, period: S) -> Result<Self> {
        check_period(period)?;
        for term in &terms {
            if term.power == 0 {
                return Err(LabError::Model(
                    "custom term with u^0 violates f(t, 0) = 0".into(),
                ));
            }
            if !term.cos_coeff.is_finite() || !term.sin_coeff.is_finite() {
                return Err(LabError::Model("non-finite custom coefficient".into()));
            }
        }
        Ok(Self {
            family: Family::Custom { terms },
            period,
        })
    }

    /// `f ≡ 0`.
    pub fn zero(period: S) -> Result<Self> {
        Self::custom(Vec::new(), period)
    }

    pub fn period(&self) -> S {
        self.period
    }

    /// Freezes the time dependence at `t`.
    #[inline]
    pub fn at(&self, t: S) -> Kinetics<'_, S> {
        let b = match &self.family {
            Family::Forced { beta, .. } => {
                S::one() + *beta * (S::TAU() * t / self.period).sin()
            }
            Family::Custom { .. } => S::one(),
        };
        Kinetics { spec: self, t, b }
    }

    pub fn eval_f(&self, t: S, u: S) -> Result<S> {
        finite(self.at(t).f(u), "f", t, u)
    }

    pub fn eval_fu(&self, t: S, u: S) -> Result<S> {
        finite(self.at(t).fu(u), "f_u", t, u)
    }

    pub fn eval_fuu(&self, t: S, u: S) -> Result<S> {
        finite(self.at(t).fuu(u), "f_uu", t, u)
    }

    /// Checks `f`, `f_u`, `f_uu` are finite on `[0, u_max]` at a sample of times.
    pub fn check_finite(&self, u_max: S) -> Result<()> {
        let n = 16;
        for i in 0..n {
            let t = self.period * S::from_usize_lossy(i) / S::from_usize_lossy(n);
            for j in 0..=n {
                let u = u_max * S::from_usize_lossy(j) / S::from_usize_lossy(n);
                self.eval_f(t, u)?;
                self.eval_fu(t, u)?;
                self.eval_fuu(t, u)?;
            }
        }
        Ok(())
    }

    /// The constant levels that are zeros of `g` for product families.
    pub fn profile(&self) -> Option<Profile<S>> {
        match &self.family {
            Family::Forced { profile, .. } => Some(*profile),
            Family::Custom { .. } => None,
        }
    }
}

fn check_period<S: Scalar>(period: S) -> Result<()> {
    if !(period.is_finite() && period > S::zero()) {
        return Err(LabError::Model(format!(
            "period must be positive and finite, got {period}"
        )));
    }
    Ok(())
}

fn finite<S: Scalar>(v: S, what: &str, t: S, u: S) -> Result<S> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LabError::Model(format!(
            "{what} is not finite at t = {t}, u = {u}"
        )))
    }
}

/// `f(t, ·)` at a fixed time.
#[derive(Debug, Clone, Copy)]
pub struct Kinetics<'a, S> {
    spec: &'a NonlinearitySpec<S>,
    t: S,
    b: S,
}

impl<S: Scalar> Kinetics<'_, S> {
    pub fn time(&self) -> S {
        self.t
    }

    /// `f(t, u)`, extended by `f(t, 0) = 0` for `u < 0`.
    #[inline]
    pub fn f(&self, u: S) -> S {
        if u <= S::zero() {
            return S::zero();
        }
        match &self.spec.family {
            Family::Forced { profile, .. } => self.b * g(profile, u),
            Family::Custom { terms } => custom_poly(terms, self.spec.period, self.t, u),
        }
    }

    /// `∂_u f`; analytic for built-in families, central differences for custom tables.
    #[inline]
    pub fn fu(&self, u: S) -> S {
        let u = u.max(S::zero());
        match &self.spec.family {
            Family::Forced { profile, .. } => self.b * g_prime(profile, u),
            Family::Custom { terms } => {
                let h = S::lit(1e-6) * S::one().max(u.abs());
                let p = self.spec.period;
                (custom_poly(terms, p, self.t, u + h) - custom_poly(terms, p, self.t, u - h))
                    / (S::two() * h)
            }
        }
    }

    /// `∂_uu f`; custom tables use a wider second-difference step to limit round-off.
    #[inline]
    pub fn fuu(&self, u: S) -> S {
        let u = u.max(S::zero());
        match &self.spec.family {
            Family::Forced { profile, .. } => self.b * g_second(profile, u),
            Family::Custom { terms } => {
                let h = S::lit(1e-4) * S::one().max(u.abs());
                let p = self.spec.period;
                (custom_poly(terms, p, self.t, u + h) - S::two() * custom_poly(terms, p, self.t, u)
                    + custom_poly(terms, p, self.t, u - h))
                    / (h * h)
            }
        }
    }
}

#[inline]
fn g<S: Scalar>(profile: &Profile<S>, u: S) -> S {
    match *profile {
        Profile::Bistable { theta } => u * (S::one() - u) * (u - theta),
        Profile::Combustion { q1 } => {
            if u <= q1 {
                S::zero()
            } else {
                (u - q1) * (S::one() - u)
            }
        }
        Profile::Logistic => u * (S::one() - u),
    }
}

#[inline]
fn g_prime<S: Scalar>(profile: &Profile<S>, u: S) -> S {
    match *profile {
        // d/du [-u^3 + (1+θ)u^2 - θu]
        Profile::Bistable { theta } => {
            -S::lit(3.0) * u * u + S::two() * (S::one() + theta) * u - theta
        }
        Profile::Combustion { q1 } => {
            if u <= q1 {
                S::zero()
            } else {
                S::one() + q1 - S::two() * u
            }
        }
        Profile::Logistic => S::one() - S::two() * u,
    }
}

#[inline]
fn g_second<S: Scalar>(profile: &Profile<S>, u: S) -> S {
    match *profile {
        Profile::Bistable { theta } => -S::lit(6.0) * u + S::two() * (S::one() + theta),
        Profile::Combustion { q1 } => {
            if u <= q1 {
                S::zero()
            } else {
                -S::two()
            }
        }
        Profile::Logistic => -S::two(),
    }
}

fn custom_poly<S: Scalar>(terms: &[CustomTerm<S>], period: S, t: S, u: S) -> S {
    terms
        .iter()
        .map(|term| {
            let phase = S::TAU() * S::from_u32(term.harmonic).unwrap() * t / period;
            let coeff = if term.harmonic == 0 {
                term.cos_coeff
            } else {
                term.cos_coeff * phase.cos() + term.sin_coeff * phase.sin()
            };
            coeff * u.powi(term.power as i32)
        })
        .sum()
}

/// Suprema of `|∂_u f|` and `|∂_uu f|` over the tube between two orbits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivativeBounds<S> {
    pub c1: S,
    pub c2: S,
}

/// Safety factor applied to the sampled suprema.
pub const BOUND_SAFETY: f64 = 1.05;

/// `C1`, `C2` over `{(t, u): t in [0, T], p_minus(t) <= u <= p_plus(t)}` on a default grid.
pub fn derivative_bounds<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
) -> Result<DerivativeBounds<S>> {
    derivative_bounds_on_grid(spec, p_minus, p_plus, 200, 200)
}

pub fn derivative_bounds_on_grid<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
    n_t: usize,
    n_u: usize,
) -> Result<DerivativeBounds<S>> {
    let period = spec.period();
    let mut c1 = S::zero();
    let mut c2 = S::zero();
    let slack = S::lit(1e-12);
    for i in 0..=n_t {
        let t = period * S::from_usize_lossy(i) / S::from_usize_lossy(n_t.max(1));
        let lo = p_minus.value_at(t);
        let hi = p_plus.value_at(t);
        if lo > hi + slack {
            return Err(LabError::Domain(format!(
                "orbits cross at t = {t}: p_minus = {lo} > p_plus = {hi}"
            )));
        }
        let k = spec.at(t);
        for j in 0..=n_u {
            let u = lo + (hi - lo) * S::from_usize_lossy(j) / S::from_usize_lossy(n_u.max(1));
            c1 = c1.max(k.fu(u).abs());
            c2 = c2.max(k.fuu(u).abs());
        }
    }
    let safety = S::lit(BOUND_SAFETY);
    if !(c1.is_finite() && c2.is_finite()) {
        return Err(LabError::Model("derivative bounds are not finite".into()));
    }
    Ok(DerivativeBounds {
        c1: c1 * safety,
        c2: c2 * safety,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(beta: f64, t: f64) -> f64 {
        1.0 + beta * (std::f64::consts::TAU * t).sin()
    }

    #[test]
    fn zero_state_and_threshold_zero() {
        let logistic = NonlinearitySpec::<f64>::logistic(0.5, 1.0).unwrap();
        assert_eq!(logistic.eval_f(0.37, 0.0).unwrap(), 0.0);
        let bistable = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        assert!(bistable.eval_f(0.8, 0.3).unwrap().abs() < 1e-15);
    }

    #[test]
    fn forced_bistable_value_matches_product_formula() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let expected = b(0.5, 0.25) * 0.5 * 0.5 * 0.2;
        assert!((spec.eval_f(0.25, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.075).abs() < 1e-15);
    }

    #[test]
    fn logistic_slope_at_zero() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        assert!((spec.eval_fu(0.3, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bistable_second_derivative_matches_second_difference() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        for i in 1..40 {
            let u = i as f64 * 0.05;
            let h = 1e-4;
            let fd = (spec.eval_f(0.0, u + h).unwrap() - 2.0 * spec.eval_f(0.0, u).unwrap()
                + spec.eval_f(0.0, u - h).unwrap())
                / (h * h);
            assert!((fd - spec.eval_fuu(0.0, u).unwrap()).abs() < 1e-5, "u = {u}");
        }
    }

    #[test]
    fn derivatives_are_periodic() {
        let spec = NonlinearitySpec::<f64>::combustion(0.3, 0.5, 2.0).unwrap();
        for &(t, u) in &[(0.1, 0.5), (1.3, 0.9), (0.7, 0.2)] {
            let a = spec.eval_fu(t, u).unwrap();
            let c = spec.eval_fu(t + 2.0, u).unwrap();
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_states_are_clamped() {
        let spec = NonlinearitySpec::<f64>::logistic(0.2, 1.0).unwrap();
        assert_eq!(spec.eval_f(0.1, -1e-9).unwrap(), 0.0);
    }

    #[test]
    fn invalid_parameters_are_model_errors() {
        assert!(matches!(
            NonlinearitySpec::<f64>::bistable(1.3, 0.0, 1.0),
            Err(LabError::Model(_))
        ));
        assert!(matches!(
            NonlinearitySpec::<f64>::logistic(f64::NAN, 1.0),
            Err(LabError::Model(_))
        ));
        assert!(matches!(
            NonlinearitySpec::<f64>::zero(0.0),
            Err(LabError::Model(_))
        ));
        let constant = CustomTerm {
            power: 0,
            harmonic: 0,
            cos_coeff: 1.0,
            sin_coeff: 0.0,
        };
        assert!(NonlinearitySpec::<f64>::custom(vec![constant], 1.0).is_err());
    }

    #[test]
    fn custom_table_reproduces_logistic() {
        let terms = vec![
            CustomTerm { power: 1, harmonic: 0, cos_coeff: 1.0, sin_coeff: 0.0 },
            CustomTerm { power: 1, harmonic: 1, cos_coeff: 0.0, sin_coeff: 0.5 },
            CustomTerm { power: 2, harmonic: 0, cos_coeff: -1.0, sin_coeff: 0.0 },
            CustomTerm { power: 2, harmonic: 1, cos_coeff: 0.0, sin_coeff: -0.5 },
        ];
        let custom = NonlinearitySpec::<f64>::custom(terms, 1.0).unwrap();
        let builtin = NonlinearitySpec::<f64>::logistic(0.5, 1.0).unwrap();
        for &(t, u) in &[(0.1, 0.2), (0.6, 0.9), (0.35, 1.4)] {
            assert!((custom.eval_f(t, u).unwrap() - builtin.eval_f(t, u).unwrap()).abs() < 1e-13);
            assert!((custom.eval_fu(t, u).unwrap() - builtin.eval_fu(t, u).unwrap()).abs() < 1e-8);
            assert!((custom.eval_fuu(t, u).unwrap() - builtin.eval_fuu(t, u).unwrap()).abs() < 1e-5);
        }
    }

    #[test]
    fn single_precision_evaluation() {
        let spec = NonlinearitySpec::<f32>::bistable(0.3, 0.5, 1.0).unwrap();
        let v = spec.eval_f(0.25, 0.5).unwrap();
        assert!((v - 0.075).abs() < 1e-6);
    }
}
