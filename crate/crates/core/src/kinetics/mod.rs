//! The kinetics ODE `h_t = f(t, h)`: flows, the period map, periodic orbits and the
//! perturbation construction used by the Dirichlet builder.

mod orbits;
mod perturb;

pub use orbits::{
    find_periodic_orbits, floquet_integral, stability_taxonomy, OrbitScan, Plateau, ScanNode,
    Taxonomy,
};
pub use perturb::{
    build_perturbation_g, epsilon_star, variational_bounds, variational_bounds_for,
    PerturbationProfile, VariationalBounds,
};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::nonlinearity::NonlinearitySpec;
use crate::scalar::Scalar;

/// Step size and tolerances for ODE work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig<S> {
    /// RK4 step; one Richardson halving is always performed on top of it.
    pub dt: S,
    /// `|P(a) - a| < tol_per` classifies a trajectory as periodic.
    pub tol_per: S,
    pub tol_root: S,
    pub u_max: S,
    /// Probe distance for the stability taxonomy.
    pub probe_eps: S,
}

impl<S: Scalar> OdeConfig<S> {
    pub fn for_spec(spec: &NonlinearitySpec<S>) -> Self {
        Self {
            dt: spec.period() / S::lit(2000.0),
            tol_per: S::lit(1e-7),
            tol_root: S::lit(1e-9),
            u_max: S::lit(10.0),
            probe_eps: S::lit(1e-3),
        }
    }

    /// Same tolerances with the step divided by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            dt: self.dt / S::from_usize_lossy(factor),
            ..*self
        }
    }
}

/// Shape of a trajectory over one period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryClass {
    Periodic,
    MonotoneIncreasing,
    MonotoneDecreasing,
}

impl TrajectoryClass {
    pub fn label(&self) -> &'static str {
        match self {
            TrajectoryClass::Periodic => "periodic",
            TrajectoryClass::MonotoneIncreasing => "increasing",
            TrajectoryClass::MonotoneDecreasing => "decreasing",
        }
    }
}

/// Sampled solution of the kinetics ODE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory<S> {
    pub times: Vec<S>,
    pub values: Vec<S>,
    /// Richardson estimate of the end-point error of the recorded run.
    pub richardson_error: S,
    /// Extrapolated end value.
    pub end_value: S,
}

/// Number of RK4 steps covering `span` with step at most `dt`, rounded up to even.
pub(crate) fn step_count<S: Scalar>(span: S, dt: S) -> usize {
    let raw = (span / dt - S::lit(1e-9)).ceil().to_usize().unwrap_or(2).max(2);
    raw + raw % 2
}

/// Fixed-step RK4 for `h_t = f(t, h) - sink` from `t0` over `n` steps of size `h`.
pub(crate) fn rk4_flow<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    t0: S,
    h: S,
    n: usize,
    sink: S,
    u_max: S,
    mut record: Option<&mut Vec<S>>,
) -> Result<S> {
    let mut y = a;
    let half = h * S::half();
    if let Some(rec) = record.as_deref_mut() {
        rec.clear();
        rec.push(y);
    }
    for i in 0..n {
        let t = t0 + h * S::from_usize_lossy(i);
        let k0 = spec.at(t);
        let km = spec.at(t + half);
        let k1 = spec.at(t + h);
        let s1 = k0.f(y) - sink;
        let s2 = km.f(y + half * s1) - sink;
        let s3 = km.f(y + half * s2) - sink;
        let s4 = k1.f(y + h * s3) - sink;
        y += h / S::lit(6.0) * (s1 + S::two() * (s2 + s3) + s4);
        if !y.is_finite() || y.abs() > u_max {
            return Err(LabError::Divergence {
                t: (t + h).as_f64(),
                value: y.as_f64(),
            });
        }
        if let Some(rec) = record.as_deref_mut() {
            rec.push(y);
        }
    }
    Ok(y)
}

/// Fixed-step RK4 for a small autonomous-in-structure system `y' = rhs(t, y)`.
pub(crate) fn rk4_system<S: Scalar, const N: usize>(
    y0: [S; N],
    t0: S,
    h: S,
    n: usize,
    mut rhs: impl FnMut(S, &[S; N]) -> [S; N],
    mut observe: impl FnMut(S, &[S; N]),
) -> [S; N] {
    let mut y = y0;
    let half = h * S::half();
    observe(t0, &y);
    for i in 0..n {
        let t = t0 + h * S::from_usize_lossy(i);
        let k1 = rhs(t, &y);
        let y2 = std::array::from_fn(|j| y[j] + half * k1[j]);
        let k2 = rhs(t + half, &y2);
        let y3 = std::array::from_fn(|j| y[j] + half * k2[j]);
        let k3 = rhs(t + half, &y3);
        let y4 = std::array::from_fn(|j| y[j] + h * k3[j]);
        let k4 = rhs(t + h, &y4);
        y = std::array::from_fn(|j| y[j] + h / S::lit(6.0) * (k1[j] + S::two() * (k2[j] + k3[j]) + k4[j]));
        observe(t + h, &y);
    }
    y
}

/// Solves `h_t = f(t, h)`, `h(0) = a` on `[0, t_end]`.
///
/// The returned samples come from the halved-step run at the coarse step nodes; the end
/// value is Richardson-extrapolated from the two runs.
pub fn integrate_h<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    t_end: S,
    cfg: &OdeConfig<S>,
) -> Result<Trajectory<S>> {
    integrate_with_sink(spec, a, t_end, S::zero(), cfg)
}

/// Solves the perturbed flow `h_t = f(t, h) - sink`.
pub fn integrate_with_sink<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    t_end: S,
    sink: S,
    cfg: &OdeConfig<S>,
) -> Result<Trajectory<S>> {
    if a < S::zero() && sink == S::zero() {
        return Err(LabError::Domain(format!("initial value must be nonnegative, got {a}")));
    }
    if !(t_end > S::zero()) {
        return Err(LabError::Domain(format!("t_end must be positive, got {t_end}")));
    }
    let n = step_count(t_end, cfg.dt);
    let h = t_end / S::from_usize_lossy(n);
    let coarse = rk4_flow(spec, a, S::zero(), h, n, sink, cfg.u_max, None)?;
    let mut fine_rec = Vec::with_capacity(2 * n + 1);
    let fine = rk4_flow(spec, a, S::zero(), h * S::half(), 2 * n, sink, cfg.u_max, Some(&mut fine_rec))?;
    let correction = (fine - coarse) / S::lit(15.0);
    let times = (0..=n).map(|i| h * S::from_usize_lossy(i)).collect();
    let values = fine_rec.iter().step_by(2).copied().collect();
    Ok(Trajectory {
        times,
        values,
        richardson_error: correction.abs(),
        end_value: fine + correction,
    })
}

fn endpoint<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    sink: S,
    cfg: &OdeConfig<S>,
) -> Result<S> {
    let period = spec.period();
    let n = step_count(period, cfg.dt);
    let h = period / S::from_usize_lossy(n);
    let coarse = rk4_flow(spec, a, S::zero(), h, n, sink, cfg.u_max, None)?;
    let fine = rk4_flow(spec, a, S::zero(), h * S::half(), 2 * n, sink, cfg.u_max, None)?;
    Ok(fine + (fine - coarse) / S::lit(15.0))
}

/// Period map `P(a) = h(T; a)`.
pub fn poincare_map<S: Scalar>(spec: &NonlinearitySpec<S>, a: S, cfg: &OdeConfig<S>) -> Result<S> {
    if a < S::zero() {
        return Err(LabError::Domain(format!("initial value must be nonnegative, got {a}")));
    }
    endpoint(spec, a, S::zero(), cfg)
}

/// Period map of the perturbed flow `h_t = f(t, h) - eps`.
pub fn perturbed_poincare_map<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    eps: S,
    cfg: &OdeConfig<S>,
) -> Result<S> {
    endpoint(spec, a, eps, cfg)
}

pub fn classify_increment<S: Scalar>(increment: S, tol_per: S) -> TrajectoryClass {
    if increment.abs() < tol_per {
        TrajectoryClass::Periodic
    } else if increment > S::zero() {
        TrajectoryClass::MonotoneIncreasing
    } else {
        TrajectoryClass::MonotoneDecreasing
    }
}

/// Periodic / T-monotone classification of the trajectory through `a`.
pub fn classify_trajectory<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    cfg: &OdeConfig<S>,
) -> Result<TrajectoryClass> {
    let p = poincare_map(spec, a, cfg)?;
    Ok(classify_increment(p - a, cfg.tol_per))
}

/// Stability of an orbit from one side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stability {
    Stable,
    Unstable,
    Degenerate,
    /// The side leaves the nonnegative state space (only the zero orbit from below).
    NotProbed,
}

/// A `T`-periodic solution `p(t)` of the kinetics ODE with its stability data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit<S> {
    pub a0: S,
    pub period: S,
    /// Uniform samples `p(t_k)`, `t_k = k T / (n - 1)`.
    pub values: Vec<S>,
    /// `f(t_k, p(t_k))`, used for Hermite interpolation.
    pub slopes: Vec<S>,
    /// `∫_0^T ∂_u f(t, p(t)) dt`; negative means linearly stable.
    pub floquet: S,
    pub stability_above: Stability,
    pub stability_below: Stability,
    pub in_yper: bool,
    pub probe_eps: S,
}

impl<S: Scalar> PeriodicOrbit<S> {
    /// Integrates one period from `a0` and fills the Floquet integral and taxonomy.
    pub fn from_initial(spec: &NonlinearitySpec<S>, a0: S, cfg: &OdeConfig<S>) -> Result<Self> {
        let traj = integrate_h(spec, a0, spec.period(), cfg)?;
        let mut orbit = Self::from_samples(spec, a0, traj.values);
        orbit.floquet = floquet_integral(spec, &orbit);
        let tax = stability_taxonomy(spec, &orbit, cfg.probe_eps, cfg)?;
        orbit.stability_above = tax.above;
        orbit.stability_below = tax.below;
        orbit.in_yper = tax.in_yper;
        orbit.probe_eps = cfg.probe_eps;
        Ok(orbit)
    }

    /// Bare orbit from uniform samples over one period; stability fields are left
    /// `Degenerate` until a taxonomy is attached.
    pub fn from_samples(spec: &NonlinearitySpec<S>, a0: S, values: Vec<S>) -> Self {
        let n = values.len();
        let period = spec.period();
        let slopes = values
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let t = period * S::from_usize_lossy(k) / S::from_usize_lossy(n.max(2) - 1);
                spec.at(t).f(v)
            })
            .collect();
        Self {
            a0,
            period,
            values,
            slopes,
            floquet: S::zero(),
            stability_above: Stability::Degenerate,
            stability_below: Stability::Degenerate,
            in_yper: false,
            probe_eps: S::zero(),
        }
    }

    /// Constant orbit `p ≡ level` sampled at `n` points. Only meaningful when `level`
    /// is a zero of `f(t, ·)` for every `t`.
    pub fn constant(spec: &NonlinearitySpec<S>, level: S, n: usize) -> Self {
        let mut orbit = Self::from_samples(spec, level, vec![level; n.max(3)]);
        orbit.floquet = floquet_integral(spec, &orbit);
        orbit
    }

    pub fn sample_step(&self) -> S {
        self.period / S::from_usize_lossy(self.values.len() - 1)
    }

    /// `p(t)` for any real `t`, by cubic Hermite interpolation of the samples.
    pub fn value_at(&self, t: S) -> S {
        let n = self.values.len();
        let h = self.sample_step();
        let mut tau = t % self.period;
        if tau < S::zero() {
            tau += self.period;
        }
        let pos = tau / h;
        let k = pos.floor().to_usize().unwrap_or(0).min(n - 2);
        let s = pos - S::from_usize_lossy(k);
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * h, self.slopes[k + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let two = S::two();
        let three = S::lit(3.0);
        (two * s3 - three * s2 + S::one()) * y0
            + (s3 - two * s2 + s) * m0
            + (-two * s3 + three * s2) * y1
            + (s3 - s2) * m1
    }

    pub fn is_linearly_stable(&self) -> bool {
        self.floquet < S::zero()
    }

    /// `sup_t |p(t) - q(t)|` over the sample times of `self`.
    pub fn sup_distance(&self, other: &PeriodicOrbit<S>) -> S {
        let h = self.sample_step();
        self.values
            .iter()
            .enumerate()
            .fold(S::zero(), |m, (k, &v)| {
                m.max((v - other.value_at(h * S::from_usize_lossy(k))).abs())
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn logistic_closed_form(a: f64, t: f64) -> f64 {
        1.0 / (1.0 + ((1.0 - a) / a) * (-t).exp())
    }

    #[test]
    fn zero_field_keeps_initial_value() {
        let spec = NonlinearitySpec::<f64>::zero(1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let traj = integrate_h(&spec, 0.7, 1.0, &cfg).unwrap();
        assert!(traj.values.iter().all(|&v| (v - 0.7).abs() < 1e-15));
    }

    #[test]
    fn logistic_equilibrium_and_closed_form() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let traj = integrate_h(&spec, 1.0, 1.0, &cfg).unwrap();
        assert!(traj.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
        let expected = logistic_closed_form(0.5, 1.0);
        assert!((expected - 0.731_058_578_630_004_9).abs() < 1e-15);
        let p = poincare_map(&spec, 0.5, &cfg).unwrap();
        assert!((p - expected).abs() < 1e-13, "{p} vs {expected}");
        let traj = integrate_h(&spec, 0.5, 1.0, &cfg).unwrap();
        for (t, v) in traj.times.iter().zip(&traj.values) {
            assert!((v - logistic_closed_form(0.5, *t)).abs() < 1e-12);
        }
    }

    #[test]
    fn bistable_decreases_below_threshold() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        assert!(poincare_map(&spec, 0.2, &cfg).unwrap() < 0.2);
        assert_eq!(
            classify_trajectory(&spec, 0.2, &cfg).unwrap(),
            TrajectoryClass::MonotoneDecreasing
        );
        assert_eq!(classify_trajectory(&spec, 0.3, &cfg).unwrap(), TrajectoryClass::Periodic);
    }

    #[test]
    fn logistic_midpoint_is_increasing() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        assert_eq!(
            classify_trajectory(&spec, 0.5, &cfg).unwrap(),
            TrajectoryClass::MonotoneIncreasing
        );
    }

    #[test]
    fn forced_bistable_class_survives_step_refinement() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let fine = cfg.refined(100);
        for &a in &[0.9, 0.2, 0.5, 1.3] {
            assert_eq!(
                classify_trajectory(&spec, a, &cfg).unwrap(),
                classify_trajectory(&spec, a, &fine).unwrap(),
                "a = {a}"
            );
        }
        assert_eq!(
            classify_trajectory(&spec, 0.9, &cfg).unwrap(),
            TrajectoryClass::MonotoneIncreasing
        );
    }

    #[test]
    fn blow_up_is_a_divergence_error() {
        let terms = vec![crate::nonlinearity::CustomTerm {
            power: 2,
            harmonic: 0,
            cos_coeff: 1.0,
            sin_coeff: 0.0,
        }];
        let spec = NonlinearitySpec::<f64>::custom(terms, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        assert!(matches!(
            integrate_h(&spec, 2.0, 1.0, &cfg),
            Err(LabError::Divergence { .. })
        ));
    }

    #[test]
    fn hermite_interpolation_tracks_the_flow() {
        let spec = NonlinearitySpec::<f64>::logistic(0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let traj = integrate_h(&spec, 0.2, 1.0, &cfg).unwrap();
        let orbit = PeriodicOrbit::from_samples(&spec, 0.2, traj.values.clone());
        let fine = cfg.refined(7);
        let t = 0.123_456;
        let direct = integrate_h(&spec, 0.2, t, &fine).unwrap().end_value;
        assert!((orbit.value_at(t) - direct).abs() < 1e-12);
    }

    #[test]
    fn comparison_of_ordered_initial_values() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let lo = integrate_h(&spec, 0.31, 3.0, &cfg).unwrap();
        let hi = integrate_h(&spec, 0.32, 3.0, &cfg).unwrap();
        assert!(lo.values.iter().zip(&hi.values).all(|(a, b)| a < b));
    }

    #[test]
    fn single_precision_period_map() {
        let spec = NonlinearitySpec::<f32>::logistic(0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let p = poincare_map(&spec, 0.5f32, &cfg).unwrap();
        assert!((p - 0.731_058_6).abs() < 1e-4);
    }
}
