//! Measurements on solution traces: zero numbers, symmetry, bases and the ω-limit.

mod omega;

pub use omega::{
    detect_omega_limit, BoundaryEvent, OmegaConfig, OmegaLimitReport, RunTrace, StrobeDrift, Verdict,
};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kinetics::{OrbitScan, PeriodicOrbit};
use crate::pde::Field;
use crate::scalar::{max_abs, Scalar};

/// Default counting threshold `max(1e-7 ‖w‖∞, 1e-12)`.
pub fn default_eta<S: Scalar>(w: &[S]) -> S {
    (S::lit(1e-7) * max_abs(w)).max(S::lit(1e-12))
}

/// Sign changes of `w` after zeroing entries with `|w| < eta`; `-1` when nothing survives.
pub fn zero_number<S: Scalar>(w: &[S], eta: S) -> i64 {
    let mut last: Option<bool> = None;
    let mut changes = 0i64;
    for &v in w {
        if v.abs() < eta {
            continue;
        }
        let positive = v > S::zero();
        if let Some(prev) = last {
            if prev != positive {
                changes += 1;
            }
        }
        last = Some(positive);
    }
    if last.is_none() {
        -1
    } else {
        changes
    }
}

/// Zero numbers of the period differences `u(·, (m+1)T) - u(·, mT)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroNumberTrace<S> {
    /// Time `(m+1)T` at which each difference is taken.
    pub times: Vec<S>,
    pub counts: Vec<i64>,
    /// Threshold used for each count.
    pub etas: Vec<S>,
    pub burn_in: usize,
    /// Index of the first count that exceeds its predecessor after the burn-in.
    pub first_increase: Option<usize>,
}

impl<S: Scalar> ZeroNumberTrace<S> {
    pub fn is_monotone(&self) -> bool {
        self.first_increase.is_none()
    }

    /// Smallest threshold used.
    pub fn eta(&self) -> S {
        self.etas.iter().fold(S::infinity(), |m, &e| m.min(e))
    }
}

/// Counts along consecutive strobes. `eta = None` uses [`default_eta`] per difference.
pub fn zero_trace_period_difference<S: Scalar>(
    strobes: &[Field<S>],
    eta: Option<S>,
    burn_in: usize,
) -> ZeroNumberTrace<S> {
    let mut trace = ZeroNumberTrace {
        times: Vec::new(),
        counts: Vec::new(),
        etas: Vec::new(),
        burn_in,
        first_increase: None,
    };
    for pair in strobes.windows(2) {
        let w: Vec<S> = pair[1].values.iter().zip(&pair[0].values).map(|(a, b)| *a - *b).collect();
        let e = eta.unwrap_or_else(|| default_eta(&w));
        trace.times.push(pair[1].time);
        trace.counts.push(zero_number(&w, e));
        trace.etas.push(e);
    }
    trace.first_increase = (burn_in + 1..trace.counts.len())
        .find(|&m| trace.counts[m] > trace.counts[m - 1]);
    trace
}

/// Leftmost strict local maximum above `1e-6 max u`, refined by a parabola.
fn leftmost_local_max<S: Scalar>(u: &Field<S>) -> Option<S> {
    let v = &u.values;
    let floor = S::lit(1e-6) * u.max();
    let dx = u.grid.dx();
    (1..v.len() - 1)
        .find(|&i| v[i] > floor && v[i] > v[i - 1] && v[i] > v[i + 1])
        .map(|i| {
            let curv = v[i - 1] - S::two() * v[i] + v[i + 1];
            let shift = S::half() * (v[i - 1] - v[i + 1]) / curv;
            u.grid.x(i) + shift * dx
        })
}

/// Median over the last five snapshots of the leftmost strict local maximum.
pub fn symmetry_center<S: Scalar>(snapshots: &[Field<S>]) -> Result<S> {
    if snapshots.len() < 5 {
        return Err(LabError::Shape(format!(
            "symmetry center needs at least 5 snapshots, got {}",
            snapshots.len()
        )));
    }
    let mut centers = snapshots[snapshots.len() - 5..]
        .iter()
        .map(|u| {
            leftmost_local_max(u)
                .ok_or_else(|| LabError::Shape(format!("no strict local maximum at t = {}", u.time)))
        })
        .collect::<Result<Vec<S>>>()?;
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    Ok(centers[2])
}

/// Outcome of [`verify_symmetric_decreasing`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCheck<S> {
    pub passes: bool,
    /// `max |u(x) - u(2 x0 - x)|` over the cycle.
    pub reflection_residual: S,
    /// Largest increase of `u` when stepping away from `x0`; positive values violate
    /// monotonicity.
    pub derivative_margin: S,
}

/// Reflection symmetry about `x0` within `tol_sym` and strict decrease away from it.
pub fn verify_symmetric_decreasing<S: Scalar>(cycle: &[Field<S>], x0: S, tol_sym: S) -> SymmetryCheck<S> {
    let mut reflection = S::zero();
    let mut margin = S::neg_infinity();
    let mut scale = S::one();
    for u in cycle {
        let g = &u.grid;
        let v = &u.values;
        scale = scale.max(u.max());
        for (i, &value) in v.iter().enumerate() {
            let mirror = S::two() * x0 - g.x(i);
            if mirror >= g.x_min && mirror <= g.x_max {
                reflection = reflection.max((value - u.value_at_cubic(mirror)).abs());
            }
        }
        for i in 0..v.len() - 1 {
            if g.x(i) >= x0 {
                margin = margin.max(v[i + 1] - v[i]);
            }
            if g.x(i + 1) <= x0 {
                margin = margin.max(v[i] - v[i + 1]);
            }
        }
    }
    SymmetryCheck {
        passes: !cycle.is_empty() && reflection < tol_sym && margin <= S::lit(1e-12) * scale,
        reflection_residual: reflection,
        derivative_margin: margin,
    }
}

/// Mean of the ten outermost interior nodes on each side of every snapshot,
/// as `(times, left, right)`.
pub fn tail_values<S: Scalar>(cycle: &[Field<S>]) -> (Vec<S>, Vec<S>, Vec<S>) {
    let mut times = Vec::with_capacity(cycle.len());
    let mut left = Vec::with_capacity(cycle.len());
    let mut right = Vec::with_capacity(cycle.len());
    for u in cycle {
        let n = u.values.len();
        let k = 10.min((n - 2) / 2).max(1);
        let mean = |s: &[S]| s.iter().copied().sum::<S>() / S::from_usize_lossy(s.len());
        times.push(u.time);
        left.push(mean(&u.values[1..1 + k]));
        right.push(mean(&u.values[n - 1 - k..n - 1]));
    }
    (times, left, right)
}

/// Orbit matching the spatial tails of `cycle`, with its sup distance. `tol` is the
/// largest admissible distance.
pub fn extract_base<S: Scalar>(
    cycle: &[Field<S>],
    scan: &OrbitScan<S>,
    tol: S,
) -> Result<(PeriodicOrbit<S>, S)> {
    let (times, left, right) = tail_values(cycle);
    let all_times: Vec<S> = times.iter().chain(&times).copied().collect();
    let all_values: Vec<S> = left.iter().chain(&right).copied().collect();
    match scan.nearest(&all_times, &all_values) {
        Some((orbit, d)) if d <= tol => Ok((orbit.clone(), d)),
        _ => Err(LabError::Match {
            tails: all_values.iter().map(|v| v.as_f64()).collect(),
        }),
    }
}

/// First point where the majorization by the shifted ground state fails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapViolation {
    pub t: f64,
    pub x: f64,
    pub u: f64,
    pub cap: f64,
}

/// Checks `u(x, t) <= V(x_V + |x - x0| - l0, t) + tol` for `|x - x0| >= l0` on every
/// field, where `V` is the ground state cycle centered at `ground_center`. Each field is
/// compared with the ground snapshot closest in phase.
pub fn audit_supersolution_cap<S: Scalar>(
    fields: &[Field<S>],
    ground: &[Field<S>],
    ground_center: S,
    period: S,
    x0: S,
    l0: S,
    tol: S,
) -> Option<CapViolation> {
    if ground.is_empty() {
        return None;
    }
    let phase = |t: S| {
        let p = t % period;
        if p < S::zero() {
            p + period
        } else {
            p
        }
    };
    for u in fields {
        let pu = phase(u.time);
        let v = ground
            .iter()
            .min_by(|a, b| {
                let da = (phase(a.time) - pu).abs().min(period - (phase(a.time) - pu).abs());
                let db = (phase(b.time) - pu).abs().min(period - (phase(b.time) - pu).abs());
                da.partial_cmp(&db).unwrap_or(std::cmp::Ordering::Equal)
            })
            .expect("nonempty ground cycle");
        for (i, &value) in u.values.iter().enumerate() {
            let x = u.grid.x(i);
            let r = (x - x0).abs();
            if r < l0 {
                continue;
            }
            let cap = v.value_at(ground_center + r - l0);
            if value > cap + tol {
                return Some(CapViolation {
                    t: u.time.as_f64(),
                    x: x.as_f64(),
                    u: value.as_f64(),
                    cap: cap.as_f64(),
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_profile_counts_minus_one() {
        assert_eq!(zero_number(&[0.0f64; 10], 1e-12), -1);
        assert_eq!(zero_number(&[1e-13f64, -1e-13], 1e-12), -1);
    }

    #[test]
    fn sine_has_two_interior_zeros() {
        let grid = Grid::<f64>::new(0.1, 3.0 * std::f64::consts::PI - 0.1, 1001).unwrap();
        let w = Field::from_fn(grid, f64::sin);
        assert_eq!(zero_number(&w.values, 1e-6), 2);
    }

    #[test]
    fn polynomial_counts_match_a_fine_sign_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let roots: Vec<f64> = (0..5).map(|_| rng.gen_range(-0.95..0.95)).collect();
            let lead = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let p = |x: f64| lead * roots.iter().map(|r| x - r).product::<f64>();
            let grid = Grid::<f64>::new(-1.0, 1.0, 2001).unwrap();
            let w = Field::from_fn(grid, p);
            // independent oracle: sign scan at 100x resolution
            let fine = Grid::<f64>::new(-1.0, 1.0, 200_001).unwrap();
            let signs: Vec<bool> = fine.nodes().iter().map(|&x| p(x) > 0.0).collect();
            let exact = signs.windows(2).filter(|s| s[0] != s[1]).count() as i64;
            let eta = 1e-12;
            let close_pair = {
                let mut r = roots.clone();
                r.sort_by(|a, b| a.partial_cmp(b).unwrap());
                r.windows(2).any(|w| w[1] - w[0] < 3e-3)
            };
            if !close_pair {
                assert_eq!(zero_number(&w.values, eta), exact, "roots {roots:?}");
            }
        }
    }

    #[test]
    fn trace_flags_increases_after_burn_in() {
        let grid = Grid::<f64>::symmetric(1.0, 5).unwrap();
        let mk = |t: f64, v: [f64; 5]| Field { grid, values: v.to_vec(), time: t, support: None };
        let diffs = [[0.0, 1.0, -1.0, 1.0, 0.0], [0.0, 1.0, -1.0, 1.0, 0.0], [0.0, 1.0, 1.0, 1.0, 0.0], [0.0, 1.0, -1.0, 1.0, 0.0]];
        let mut strobes = vec![mk(0.0, [0.0; 5])];
        for (m, d) in diffs.iter().enumerate() {
            let mut v = [0.0; 5];
            for i in 0..5 {
                v[i] = strobes[m].values[i] + d[i];
            }
            strobes.push(mk(m as f64 + 1.0, v));
        }
        let tr = zero_trace_period_difference(&strobes, None, 0);
        assert_eq!(tr.counts, vec![2, 2, 0, 2]);
        assert_eq!(tr.first_increase, Some(3));
        assert!(tr.etas.iter().all(|&e| e > 0.0));
        let late = zero_trace_period_difference(&strobes, None, 3);
        assert!(late.is_monotone());
    }

    fn bump(grid: Grid<f64>, c: f64, t: f64) -> Field<f64> {
        Field { time: t, ..Field::from_fn(grid, |x| 0.5 / (1.0 + (x - c).powi(2))) }
    }

    #[test]
    fn center_of_a_shifted_bump() {
        let grid = Grid::<f64>::symmetric(10.0, 401).unwrap();
        let snaps: Vec<_> = (0..6).map(|k| bump(grid, 1.234, k as f64)).collect();
        assert!((symmetry_center(&snaps).unwrap() - 1.234).abs() < 1e-3);
        let mono = vec![Field::from_fn(grid, |x| x + 10.0); 5];
        assert!(matches!(symmetry_center(&mono), Err(LabError::Shape(_))));
        assert!(symmetry_center(&snaps[..3]).is_err());
    }

    #[test]
    fn symmetric_bump_passes_and_front_fails() {
        let grid = Grid::<f64>::symmetric(10.0, 401).unwrap();
        let ok = verify_symmetric_decreasing(&[bump(grid, 0.3, 0.0)], 0.3, 1e-4);
        assert!(ok.passes, "{ok:?}");
        let front = Field::from_fn(grid, |x| 1.0 / (1.0 + (2.0 * (x - 3.0)).exp()));
        let bad = verify_symmetric_decreasing(&[front], 0.0, 1e-4);
        assert!(!bad.passes);
        assert!(bad.reflection_residual > 0.5);
    }

    #[test]
    fn cap_audit_detects_small_radius() {
        let grid = Grid::<f64>::symmetric(10.0, 401).unwrap();
        let ground = vec![bump(grid, 0.0, 0.0)];
        let u = vec![Field::from_fn(grid, |x| 0.45 / (1.0 + x * x))];
        assert!(audit_supersolution_cap(&u, &ground, 0.0, 1.0, 0.0, 0.0, 1e-12).is_none());
        let big = vec![Field::from_fn(grid, |x| 0.9 / (1.0 + x * x))];
        assert!(audit_supersolution_cap(&big, &ground, 0.0, 1.0, 0.0, 0.0, 1e-12).is_some());
        assert!(audit_supersolution_cap(&big, &ground, 0.0, 1.0, 0.0, 3.0, 1e-12).is_none());
    }
}
