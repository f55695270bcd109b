use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    classify_increment, integrate_h, poincare_map, OdeConfig, PeriodicOrbit, Stability,
    TrajectoryClass,
};
use crate::error::{LabError, Result};
use crate::linalg::{bisect, simpson};
use crate::nonlinearity::NonlinearitySpec;
use crate::scalar::{linspace, Scalar};

/// `∫_0^T ∂_u f(t, p(t)) dt` by composite Simpson on the orbit samples.
pub fn floquet_integral<S: Scalar>(spec: &NonlinearitySpec<S>, orbit: &PeriodicOrbit<S>) -> S {
    let h = orbit.sample_step();
    let integrand: Vec<S> = orbit
        .values
        .iter()
        .enumerate()
        .map(|(k, &p)| spec.at(h * S::from_usize_lossy(k)).fu(p))
        .collect();
    simpson(&integrand, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Taxonomy {
    pub above: Stability,
    pub below: Stability,
    pub in_yper: bool,
}

/// One-sided stability from the sign pattern of `P(a) - a` at `a0 ± k probe_eps / 4`.
pub fn stability_taxonomy<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    orbit: &PeriodicOrbit<S>,
    probe_eps: S,
    cfg: &OdeConfig<S>,
) -> Result<Taxonomy> {
    if !(probe_eps > S::zero()) {
        return Err(LabError::Domain(format!("probe_eps must be positive, got {probe_eps}")));
    }
    let a0 = orbit.a0;
    let quarter = probe_eps / S::lit(4.0);
    let offsets: Vec<S> = (1..=4).map(|k| quarter * S::from_usize_lossy(k)).collect();
    if a0 + probe_eps > cfg.u_max || a0 < S::zero() {
        return Err(LabError::Domain(format!(
            "stability probes around {a0} leave [0, {}]",
            cfg.u_max
        )));
    }
    let tol = cfg.tol_per;
    let above: Vec<S> = offsets
        .iter()
        .map(|&d| poincare_map(spec, a0 + d, cfg).map(|p| p - (a0 + d)))
        .collect::<Result<_>>()?;
    let in_yper = above.iter().all(|&inc| inc >= -tol);
    let above = if above.iter().all(|&inc| inc > tol) {
        Stability::Unstable
    } else if above.iter().all(|&inc| inc < tol) {
        Stability::Stable
    } else {
        Stability::Degenerate
    };
    let below = if a0 - probe_eps < S::zero() {
        Stability::NotProbed
    } else {
        let incs: Vec<S> = offsets
            .iter()
            .map(|&d| poincare_map(spec, a0 - d, cfg).map(|p| p - (a0 - d)))
            .collect::<Result<_>>()?;
        if incs.iter().all(|&inc| inc < -tol) {
            Stability::Unstable
        } else if incs.iter().all(|&inc| inc > -tol) {
            Stability::Stable
        } else {
            Stability::Degenerate
        }
    };
    Ok(Taxonomy {
        above,
        below,
        in_yper,
    })
}

/// One node of the period-map scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanNode<S> {
    pub a: S,
    pub p: S,
    pub class: TrajectoryClass,
    /// `∫_0^T ∂_u f(t, h(t; a)) dt` along the trajectory.
    pub floquet: S,
}

/// Interval of initial values whose trajectories are all periodic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau<S> {
    pub lo: S,
    pub hi: S,
    pub lower: PeriodicOrbit<S>,
    pub upper: PeriodicOrbit<S>,
}

impl<S: Scalar> Plateau<S> {
    /// True when `level` lies strictly inside, at least `margin` away from both ends.
    pub fn strictly_contains(&self, level: S, margin: S) -> bool {
        level > self.lo + margin && level < self.hi - margin
    }
}

/// Result of scanning `P(a) - a` over an interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitScan<S> {
    pub nodes: Vec<ScanNode<S>>,
    /// Isolated periodic orbits, ordered by `a0`.
    pub orbits: Vec<PeriodicOrbit<S>>,
    pub plateaus: Vec<Plateau<S>>,
}

impl<S: Scalar> OrbitScan<S> {
    /// Isolated orbits followed by plateau end orbits.
    pub fn candidates(&self) -> impl Iterator<Item = &PeriodicOrbit<S>> {
        self.orbits
            .iter()
            .chain(self.plateaus.iter().flat_map(|p| [&p.lower, &p.upper]))
    }

    /// Candidate orbit closest to `values` sampled at `times` (sup distance).
    pub fn nearest(&self, times: &[S], values: &[S]) -> Option<(&PeriodicOrbit<S>, S)> {
        self.candidates()
            .map(|orbit| {
                let d = times
                    .iter()
                    .zip(values)
                    .fold(S::zero(), |m, (&t, &v)| m.max((orbit.value_at(t) - v).abs()));
                (orbit, d)
            })
            .min_by(|x, y| x.1.partial_cmp(&y.1).unwrap_or(std::cmp::Ordering::Equal))
    }

    /// Orbits that are neither in `Y_per` nor linearly stable.
    pub fn assumption_h_violations(&self) -> Vec<S> {
        self.candidates()
            .filter(|o| !o.in_yper && !o.is_linearly_stable())
            .map(|o| o.a0)
            .collect()
    }

    /// Top of the bottom basin: the largest `a` such that every scanned trajectory in
    /// `(0, a)` is periodic or decreasing.
    pub fn extinction_ceiling(&self) -> S {
        let mut ceiling = S::zero();
        for node in &self.nodes {
            if node.class == TrajectoryClass::MonotoneIncreasing {
                break;
            }
            ceiling = node.a;
        }
        ceiling
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Sign {
    Neg,
    Zero,
    Pos,
}

/// Scans `P(a) - a` on `n_scan` nodes of `[lo, hi]`, bisects every sign change and
/// reports runs of at least three periodic nodes as plateaus.
pub fn find_periodic_orbits<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    range: (S, S),
    n_scan: usize,
    cfg: &OdeConfig<S>,
) -> Result<OrbitScan<S>> {
    let (lo, hi) = range;
    if !(lo >= S::zero() && hi > lo && hi <= cfg.u_max) {
        return Err(LabError::Domain(format!(
            "scan range [{lo}, {hi}] must lie in [0, {}]",
            cfg.u_max
        )));
    }
    let grid = linspace(lo, hi, n_scan.max(3));
    let nodes: Vec<ScanNode<S>> = grid
        .par_iter()
        .map(|&a| scan_node(spec, a, cfg))
        .collect::<Result<_>>()?;
    let signs: Vec<Sign> = nodes
        .iter()
        .map(|n| {
            let inc = n.p - n.a;
            if inc.abs() < cfg.tol_per {
                Sign::Zero
            } else if inc > S::zero() {
                Sign::Pos
            } else {
                Sign::Neg
            }
        })
        .collect();
    let increment = |a: S| poincare_map(spec, a, cfg).map(|p| p - a);
    let is_periodic = |a: S| increment(a).map(|d| if d.abs() < cfg.tol_per { -S::one() } else { S::one() });

    let mut roots: Vec<S> = Vec::new();
    let mut plateau_bounds: Vec<(S, S)> = Vec::new();
    let n = nodes.len();
    let mut i = 0;
    while i < n {
        if signs[i] == Sign::Zero {
            let start = i;
            while i + 1 < n && signs[i + 1] == Sign::Zero {
                i += 1;
            }
            let end = i;
            if end - start + 1 >= 3 {
                let mut p_lo = nodes[start].a;
                if start > 0 {
                    p_lo = bisect(nodes[start].a, nodes[start - 1].a, -S::one(), cfg.tol_root, 200, is_periodic)?;
                }
                let mut p_hi = nodes[end].a;
                if end + 1 < n {
                    p_hi = bisect(nodes[end].a, nodes[end + 1].a, -S::one(), cfg.tol_root, 200, is_periodic)?;
                }
                plateau_bounds.push((p_lo, p_hi));
            } else {
                let left = start.checked_sub(1).map(|k| (k, signs[k]));
                let right = (end + 1 < n).then(|| (end + 1, signs[end + 1]));
                let root = match (left, right) {
                    (Some((l, sl)), Some((r, sr))) if sl != sr => {
                        let f_l = nodes[l].p - nodes[l].a;
                        bisect(nodes[l].a, nodes[r].a, f_l, cfg.tol_root, 200, increment)?
                    }
                    _ => (start..=end)
                        .min_by(|&x, &y| {
                            let dx = (nodes[x].p - nodes[x].a).abs();
                            let dy = (nodes[y].p - nodes[y].a).abs();
                            dx.partial_cmp(&dy).unwrap_or(std::cmp::Ordering::Equal)
                        })
                        .map(|k| nodes[k].a)
                        .unwrap(),
                };
                roots.push(root);
            }
        } else if i + 1 < n && signs[i + 1] != Sign::Zero && signs[i + 1] != signs[i] {
            let f_l = nodes[i].p - nodes[i].a;
            roots.push(bisect(nodes[i].a, nodes[i + 1].a, f_l, cfg.tol_root, 200, increment)?);
        }
        i += 1;
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots.dedup_by(|a, b| (*a - *b).abs() < S::lit(10.0) * cfg.tol_root);

    let orbits = roots
        .into_iter()
        .map(|a0| PeriodicOrbit::from_initial(spec, a0, cfg))
        .collect::<Result<Vec<_>>>()?;
    let plateaus = plateau_bounds
        .into_iter()
        .map(|(p_lo, p_hi)| {
            Ok(Plateau {
                lo: p_lo,
                hi: p_hi,
                lower: PeriodicOrbit::from_initial(spec, p_lo, cfg)?,
                upper: PeriodicOrbit::from_initial(spec, p_hi, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(OrbitScan {
        nodes,
        orbits,
        plateaus,
    })
}

fn scan_node<S: Scalar>(spec: &NonlinearitySpec<S>, a: S, cfg: &OdeConfig<S>) -> Result<ScanNode<S>> {
    let traj = integrate_h(spec, a, spec.period(), cfg)?;
    let h = spec.period() / S::from_usize_lossy(traj.values.len() - 1);
    let integrand: Vec<S> = traj
        .values
        .iter()
        .enumerate()
        .map(|(k, &v)| spec.at(h * S::from_usize_lossy(k)).fu(v))
        .collect();
    Ok(ScanNode {
        a,
        p: traj.end_value,
        class: classify_increment(traj.end_value - a, cfg.tol_per),
        floquet: simpson(&integrand, h),
    })
}
