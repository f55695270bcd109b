use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_trajectory, perturbed_poincare_map, OdeConfig, PeriodicOrbit, TrajectoryClass};
use crate::error::{LabError, Result};
use crate::nonlinearity::{derivative_bounds, DerivativeBounds, NonlinearitySpec};
use crate::scalar::{linspace, Scalar};

/// Lower bound `M1` on `h_a(T; a)` and upper bound `M2` on `|h_aa(T; a)|` over a tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationalBounds<S> {
    pub m1: S,
    pub m2: S,
}

/// `M1 = exp(-C1 T)` and the larger of the two `M2` expressions.
pub fn variational_bounds<S: Scalar>(bounds: &DerivativeBounds<S>, period: S) -> VariationalBounds<S> {
    let (c1, c2) = (bounds.c1, bounds.c2);
    let m1 = (-c1 * period).exp();
    let growth = (S::two() * c1 * period).exp();
    let m2 = if c1 < S::lit(1e-12) {
        c2 * period * growth
    } else {
        let lead = c2 * growth / c1;
        let a = lead * (S::one() - (-c1 * period).exp());
        let b = lead * ((c1 * period).exp() - S::one());
        a.max(b)
    };
    VariationalBounds { m1, m2 }
}

/// Variational bounds for the tube between two orbits.
pub fn variational_bounds_for<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
) -> Result<VariationalBounds<S>> {
    let bounds = derivative_bounds(spec, p_minus, p_plus)?;
    Ok(variational_bounds(&bounds, spec.period()))
}

/// The largest constant sink `eps` for which the perturbed flow from `a` still returns to
/// `a` after one period: the root of `h(T; a; eps) = a`. Zero at the orbit end points.
pub fn epsilon_star<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    a: S,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
    cfg: &OdeConfig<S>,
) -> Result<S> {
    let (lo, hi) = (p_minus.a0, p_plus.a0);
    if (a - lo).abs() <= cfg.tol_root || (a - hi).abs() <= cfg.tol_root {
        return Ok(S::zero());
    }
    if !(a > lo && a < hi) {
        return Err(LabError::Domain(format!("a = {a} lies outside ({lo}, {hi})")));
    }
    let gap = |eps: S| perturbed_poincare_map(spec, a, eps, cfg).map(|p| p - a);
    let d0 = gap(S::zero())?;
    if !(d0 > S::zero()) {
        return Err(LabError::Bracket(format!(
            "P(a) - a = {d0:e} at a = {a}: the unperturbed flow is not increasing"
        )));
    }
    let mut eps_lo = S::zero();
    let mut eps_hi = (d0 / spec.period()).max(S::lit(1e-12));
    let mut d_hi = gap(eps_hi)?;
    let mut doublings = 0;
    while d_hi > S::zero() {
        eps_lo = eps_hi;
        eps_hi = eps_hi * S::two();
        d_hi = gap(eps_hi)?;
        doublings += 1;
        if doublings > 60 {
            return Err(LabError::Bracket(format!("no sign change in eps up to {eps_hi:e} at a = {a}")));
        }
    }
    if d_hi == S::zero() {
        return Ok(eps_hi);
    }
    let target = cfg.tol_root * S::half();
    let mut mid = (eps_lo + eps_hi) * S::half();
    for _ in 0..200 {
        mid = (eps_lo + eps_hi) * S::half();
        let d = gap(mid)?;
        if d.abs() < target || mid <= eps_lo || mid >= eps_hi {
            break;
        }
        if d > S::zero() {
            eps_lo = mid;
        } else {
            eps_hi = mid;
        }
    }
    Ok(mid)
}

/// Bump `s(sigma) = 16 sigma^2 (1 - sigma)^2` and its first two derivatives.
fn bump<S: Scalar>(sigma: S) -> (S, S, S) {
    let c = S::lit(16.0);
    let one = S::one();
    let s = c * sigma * sigma * (one - sigma) * (one - sigma);
    let ds = S::lit(32.0) * (sigma - S::lit(3.0) * sigma * sigma + S::two() * sigma * sigma * sigma);
    let dds = S::lit(32.0) * (one - S::lit(6.0) * sigma + S::lit(6.0) * sigma * sigma);
    (s, ds, dds)
}

/// `max |s'|` on `[0, 1]`, attained at `sigma = 1/2 ± 1/(2 sqrt 3)`.
fn bump_slope_max<S: Scalar>() -> S {
    S::lit(16.0) / (S::lit(3.0) * S::lit(3.0).sqrt())
}

/// Smooth sink `g(a) = kappa s((a - lo) / (hi - lo))` between two orbit initial values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationProfile<S> {
    pub lo: S,
    pub hi: S,
    pub grid: Vec<S>,
    pub values: Vec<S>,
    pub eps_star: Vec<S>,
    pub kappa: S,
    /// Slope cap `C1 / (2 (exp(C1 T) - 1))`.
    pub slope_bound: S,
    pub c1: S,
}

impl<S: Scalar> PerturbationProfile<S> {
    fn sigma(&self, a: S) -> Option<S> {
        if a <= self.lo || a >= self.hi {
            None
        } else {
            Some((a - self.lo) / (self.hi - self.lo))
        }
    }

    pub fn value(&self, a: S) -> S {
        self.sigma(a).map_or(S::zero(), |s| self.kappa * bump(s).0)
    }

    pub fn derivative(&self, a: S) -> S {
        self.sigma(a)
            .map_or(S::zero(), |s| self.kappa * bump(s).1 / (self.hi - self.lo))
    }

    pub fn second_derivative(&self, a: S) -> S {
        let w = self.hi - self.lo;
        self.sigma(a).map_or(S::zero(), |s| self.kappa * bump(s).2 / (w * w))
    }

    pub fn is_trivial(&self) -> bool {
        !(self.kappa > S::zero())
    }
}

/// Builds the perturbation profile on `n_grid` nodes of `[p_minus(0), p_plus(0)]`.
///
/// Every interior node must be `T`-monotone increasing.
pub fn build_perturbation_g<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
    n_grid: usize,
    cfg: &OdeConfig<S>,
) -> Result<PerturbationProfile<S>> {
    let (lo, hi) = (p_minus.a0, p_plus.a0);
    if !(hi > lo) {
        return Err(LabError::Domain(format!("need p_minus(0) < p_plus(0), got {lo} and {hi}")));
    }
    let grid = linspace(lo, hi, n_grid.max(5));
    let interior = &grid[1..grid.len() - 1];
    let classes: Vec<TrajectoryClass> = interior
        .par_iter()
        .map(|&a| classify_trajectory(spec, a, cfg))
        .collect::<Result<_>>()?;
    if let Some((a, class)) = interior
        .iter()
        .zip(&classes)
        .find(|(_, c)| **c != TrajectoryClass::MonotoneIncreasing)
    {
        return Err(LabError::Hypothesis(format!(
            "trajectory through a = {a} is {} between the orbits, not increasing",
            class.label()
        )));
    }
    let eps_star: Vec<S> = grid
        .par_iter()
        .map(|&a| epsilon_star(spec, a, p_minus, p_plus, cfg))
        .collect::<Result<_>>()?;
    let bounds = derivative_bounds(spec, p_minus, p_plus)?;
    let c1 = bounds.c1;
    let period = spec.period();
    let slope_bound = if c1 * period < S::lit(1e-10) {
        S::one() / (S::two() * period)
    } else {
        c1 / (S::two() * ((c1 * period).exp() - S::one()))
    };
    let width = hi - lo;
    let mut kappa = slope_bound * width / bump_slope_max::<S>();
    for (&a, &eps) in grid.iter().zip(&eps_star).skip(1).take(grid.len() - 2) {
        let s = bump((a - lo) / width).0;
        kappa = kappa.min(S::half() * eps / s);
    }
    let mut profile = PerturbationProfile {
        lo,
        hi,
        grid,
        values: Vec::new(),
        eps_star,
        kappa,
        slope_bound,
        c1,
    };
    profile.values = profile.grid.iter().map(|&a| profile.value(a)).collect();
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{find_periodic_orbits, poincare_map, rk4_system, step_count};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn forced_bistable_tube() -> (NonlinearitySpec<f64>, PeriodicOrbit<f64>, PeriodicOrbit<f64>, OdeConfig<f64>) {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let scan = find_periodic_orbits(&spec, (0.0, 1.5), 76, &cfg).unwrap();
        let pm = scan.orbits[1].clone();
        let pp = scan.orbits[2].clone();
        (spec, pm, pp, cfg)
    }

    #[test]
    fn identity_flow_has_unit_m1() {
        let vb = variational_bounds(&DerivativeBounds { c1: 0.0f64, c2: 0.0 }, 1.0);
        assert_eq!(vb.m1, 1.0);
        assert_eq!(vb.m2, 0.0);
        let vb = variational_bounds(&DerivativeBounds { c1: 0.0f64, c2: 2.0 }, 0.5);
        assert!((vb.m2 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn logistic_tube_m1() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        let zero = PeriodicOrbit::constant(&spec, 0.0, 201);
        let one = PeriodicOrbit::constant(&spec, 1.0, 201);
        let vb = variational_bounds_for(&spec, &zero, &one).unwrap();
        assert!((vb.m1 - (-1.05f64).exp()).abs() < 1e-12);
        let c1 = 1.05f64;
        let c2 = 2.1f64;
        let expected = c2 * (2.0 * c1).exp() / c1 * (c1.exp() - 1.0);
        assert!((vb.m2 - expected).abs() < 1e-9);
    }

    #[test]
    fn variational_equation_respects_m1() {
        let (spec, pm, pp, cfg) = forced_bistable_tube();
        let vb = variational_bounds_for(&spec, &pm, &pp).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = step_count(1.0, cfg.dt);
        let h = 1.0 / n as f64;
        for _ in 0..20 {
            let a = rng.gen_range(pm.a0..pp.a0);
            let end = rk4_system(
                [a, 1.0],
                0.0,
                h,
                n,
                |t, y| {
                    let k = spec.at(t);
                    [k.f(y[0]), k.fu(y[0]) * y[1]]
                },
                |_, _| {},
            );
            assert!(end[1] >= vb.m1, "a = {a}: h_a = {} < {}", end[1], vb.m1);
        }
    }

    #[test]
    fn epsilon_star_endpoints_vanish() {
        let (spec, pm, pp, cfg) = forced_bistable_tube();
        assert_eq!(epsilon_star(&spec, pm.a0, &pm, &pp, &cfg).unwrap(), 0.0);
        assert_eq!(epsilon_star(&spec, pp.a0, &pm, &pp, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn logistic_epsilon_star_survives_refinement() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let zero = PeriodicOrbit::constant(&spec, 0.0, 201);
        let one = PeriodicOrbit::constant(&spec, 1.0, 201);
        let eps = epsilon_star(&spec, 0.5, &zero, &one, &cfg).unwrap();
        assert!((eps - 0.25).abs() < 1e-7, "{eps}");
        let fine = cfg.refined(10);
        let back = perturbed_poincare_map(&spec, 0.5, eps, &fine).unwrap();
        assert!((back - 0.5).abs() < 1e-8, "{back}");
    }

    #[test]
    fn perturbed_map_decreases_in_eps() {
        let spec = NonlinearitySpec::<f64>::logistic(0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let values: Vec<f64> = [0.0, 0.05, 0.1, 0.2]
            .iter()
            .map(|&e| perturbed_poincare_map(&spec, 0.5, e, &cfg).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn perturbation_profile_properties() {
        let (spec, pm, pp, cfg) = forced_bistable_tube();
        let g = build_perturbation_g(&spec, &pm, &pp, 41, &cfg).unwrap();
        assert_eq!(g.values[0], 0.0);
        assert_eq!(*g.values.last().unwrap(), 0.0);
        assert!(!g.is_trivial());
        let mut max_slope: f64 = 0.0;
        for i in 0..g.grid.len() - 1 {
            max_slope = max_slope.max(((g.values[i + 1] - g.values[i]) / (g.grid[i + 1] - g.grid[i])).abs());
        }
        assert!(max_slope <= g.slope_bound + 1e-12);
        for i in 1..g.grid.len() - 1 {
            assert!(g.values[i] > 0.0 && g.values[i] <= g.eps_star[i]);
        }
        for k in 1..=50 {
            let a = g.lo + (g.hi - g.lo) * k as f64 / 51.0;
            let p = perturbed_poincare_map(&spec, a, g.value(a), &cfg).unwrap();
            assert!(p > a, "a = {a}");
        }
    }

    #[test]
    fn analytic_derivatives_of_the_profile() {
        let (spec, pm, pp, cfg) = forced_bistable_tube();
        let g = build_perturbation_g(&spec, &pm, &pp, 21, &cfg).unwrap();
        let h = 1e-5;
        for k in 1..10 {
            let a = g.lo + (g.hi - g.lo) * k as f64 / 10.0;
            let d = (g.value(a + h) - g.value(a - h)) / (2.0 * h);
            let dd = (g.derivative(a + h) - g.derivative(a - h)) / (2.0 * h);
            assert!((d - g.derivative(a)).abs() < 1e-9);
            assert!((dd - g.second_derivative(a)).abs() < 1e-7);
        }
    }

    #[test]
    fn decreasing_interior_is_a_hypothesis_error() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let zero = PeriodicOrbit::constant(&spec, 0.0, 201);
        let theta = PeriodicOrbit::constant(&spec, 0.3, 201);
        assert!(poincare_map(&spec, 0.15, &cfg).unwrap() < 0.15);
        assert!(matches!(
            build_perturbation_g(&spec, &zero, &theta, 11, &cfg),
            Err(LabError::Hypothesis(_))
        ));
    }
}
