use serde::{Deserialize, Serialize};

use super::{extract_base, symmetry_center, verify_symmetric_decreasing, SymmetryCheck};
use crate::error::{LabError, Result};
use crate::kinetics::{OrbitScan, PeriodicOrbit, Stability};
use crate::nonlinearity::NonlinearitySpec;
use crate::pde::{Boundary, Evolver, Field, SolverAudit, SolverConfig};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Extinction,
    FlatPeriodic,
    GroundState,
    Undecided,
    HeteroclinicSuspect,
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Extinction => "extinction",
            Verdict::FlatPeriodic => "flat-periodic",
            Verdict::GroundState => "ground-state",
            Verdict::Undecided => "undecided",
            Verdict::HeteroclinicSuspect => "heteroclinic-suspect",
        }
    }
}

/// Drift of `u(x0, mT)` over the last strobes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StrobeDrift {
    Increasing,
    Decreasing,
    None,
}

/// Boundary handling changes made during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BoundaryEvent {
    /// The zero boundary was replaced by the orbit starting at `a0`.
    Pinned { t: f64, a0: f64 },
    /// The leak check was switched off because the solution lies below the lowest
    /// positive orbit.
    LeakIgnored { t: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaConfig<S> {
    pub solver: SolverConfig<S>,
    pub max_periods: usize,
    pub tol_omega: S,
    pub tol_flat: S,
    pub tol_sym: S,
    /// Consecutive periods below `tol_omega` needed for convergence.
    pub consecutive: usize,
    /// Snapshots stored per period for the limit cycle.
    pub n_cycle: usize,
    /// Core window half-width as a fraction of the domain half-width.
    pub core_fraction: S,
    /// Relative distance to a stable orbit below which a leaking run is pinned to it.
    pub pin_fraction: S,
    /// Largest sup distance accepted when matching a level or tail to an orbit.
    pub match_tol: S,
    /// Keep every strobe (otherwise only the last few).
    pub keep_strobes: bool,
    /// Stop with `Extinction` as soon as a strobe lies below the lowest positive orbit;
    /// by comparison with the kinetics flow the solution cannot rise again.
    pub certify_extinction: bool,
}

impl<S: Scalar> OmegaConfig<S> {
    pub fn for_period(period: S) -> Self {
        Self {
            solver: SolverConfig::for_period(period),
            max_periods: 400,
            tol_omega: S::lit(1e-6),
            tol_flat: S::lit(1e-5),
            tol_sym: S::lit(1e-4),
            consecutive: 3,
            n_cycle: 8,
            core_fraction: S::lit(0.6),
            pin_fraction: S::lit(0.05),
            match_tol: S::lit(1e-2),
            keep_strobes: true,
            certify_extinction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OmegaLimitReport<S> {
    pub verdict: Verdict,
    pub x0: S,
    pub base_orbit: Option<PeriodicOrbit<S>>,
    /// Sup distance between the base orbit and the measured level or tails.
    pub base_distance: Option<S>,
    /// Mean core value for flat limits.
    pub level: Option<S>,
    pub limit_cycle: Vec<Field<S>>,
    pub residual: S,
    pub strobe_monotone: StrobeDrift,
    pub periods_used: usize,
    pub symmetry: Option<SymmetryCheck<S>>,
    pub note: Option<String>,
}

impl<S: Scalar> OmegaLimitReport<S> {
    /// Flat limit on a positive linearly stable orbit.
    pub fn is_propagation(&self) -> bool {
        self.verdict == Verdict::FlatPeriodic
            && self
                .base_orbit
                .as_ref()
                .is_some_and(|o| o.a0 > self.residual.max(S::lit(1e-8)) && o.is_linearly_stable())
    }
}

/// Strobes and boundary events of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace<S> {
    pub strobes: Vec<Field<S>>,
    pub events: Vec<BoundaryEvent>,
    pub audit: SolverAudit,
}

struct Window<S> {
    center: S,
    half_width: S,
    radius: S,
}

impl<S: Scalar> Window<S> {
    fn clamp(&self, x0: S, domain_center: S) -> S {
        let slack = self.half_width - self.radius;
        x0.max(domain_center - slack).min(domain_center + slack)
    }

    fn nodes<'a>(&'a self, u: &'a Field<S>) -> impl Iterator<Item = (usize, S)> + 'a {
        u.values
            .iter()
            .enumerate()
            .filter(move |(i, _)| (u.grid.x(*i) - self.center).abs() <= self.radius)
            .map(|(i, &v)| (i, v))
    }
}

/// Midpoint of the nodes where `u` is at least half its maximum.
fn half_max_center<S: Scalar>(u: &Field<S>) -> Option<S> {
    let top = u.max();
    if !(top > S::zero()) {
        return None;
    }
    let half = S::half() * top;
    let first = u.values.iter().position(|&v| v >= half)?;
    let last = u.values.iter().rposition(|&v| v >= half)?;
    Some(S::half() * (u.grid.x(first) + u.grid.x(last)))
}

fn drift<S: Scalar>(strobes: &[Field<S>], x0: S) -> StrobeDrift {
    let k = strobes.len().min(10);
    if k < 4 {
        return StrobeDrift::None;
    }
    let vals: Vec<S> = strobes[strobes.len() - k..].iter().map(|u| u.value_at(x0)).collect();
    let inc: Vec<S> = vals.windows(2).map(|w| w[1] - w[0]).collect();
    let shrinking = inc.windows(2).all(|w| w[1].abs() < w[0].abs());
    if shrinking && inc.iter().all(|&d| d > S::zero()) {
        StrobeDrift::Increasing
    } else if shrinking && inc.iter().all(|&d| d < S::zero()) {
        StrobeDrift::Decreasing
    } else {
        StrobeDrift::None
    }
}

fn lowest_positive<S: Scalar>(scan: &OrbitScan<S>) -> Option<&PeriodicOrbit<S>> {
    scan.candidates()
        .filter(|o| o.a0 > S::lit(1e-8))
        .min_by(|a, b| a.a0.partial_cmp(&b.a0).unwrap_or(std::cmp::Ordering::Equal))
}

fn handle_leak<S: Scalar>(
    ev: &mut Evolver<'_, S>,
    scan: &OrbitScan<S>,
    window: &Window<S>,
    pin_fraction: S,
    events: &mut Vec<BoundaryEvent>,
    err: LabError,
) -> Result<()> {
    let t = ev.time();
    let u = ev.field();
    let core_max = window.nodes(&u).fold(S::zero(), |m, (_, v)| m.max(v));
    let positive = || scan.candidates().filter(|o| o.a0 > S::lit(1e-8));
    let pin = positive()
        .filter(|o| o.stability_below == Stability::Stable)
        .map(|o| (o, (core_max - o.value_at(t)).abs() / o.value_at(t)))
        .filter(|(_, d)| *d <= pin_fraction)
        .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    if let Some((orbit, _)) = pin {
        log::debug!("pinning boundary to orbit a0 = {} at t = {t}", orbit.a0);
        events.push(BoundaryEvent::Pinned {
            t: t.as_f64(),
            a0: orbit.a0.as_f64(),
        });
        ev.set_boundary(Boundary::DirichletOrbit(orbit.clone()));
        return Ok(());
    }
    if let Some(orbit) = lowest_positive(scan) {
        if u.max() < orbit.value_at(t) {
            log::debug!("leak below the orbit a0 = {} ignored at t = {t}", orbit.a0);
            events.push(BoundaryEvent::LeakIgnored { t: t.as_f64() });
            ev.set_leak(None);
            return Ok(());
        }
    }
    Err(err)
}

/// Runs the solver from `u0` until the strobes converge on the core window or
/// `max_periods` pass, then classifies the limit against the orbits of `scan`.
pub fn detect_omega_limit<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    u0: &Field<S>,
    cfg: &OmegaConfig<S>,
    scan: &OrbitScan<S>,
) -> Result<(OmegaLimitReport<S>, RunTrace<S>)> {
    let mut ev = Evolver::new(spec, u0, cfg.solver.clone())?;
    let spp = ev.steps_per_period();
    let grid = u0.grid;
    let domain_center = grid.center();
    let mut window = Window {
        center: domain_center,
        half_width: grid.half_width(),
        radius: cfg.core_fraction * grid.half_width(),
    };
    let x_init = u0
        .support
        .map(|(a, b)| (a + b) * S::half())
        .unwrap_or_else(|| grid.x(u0.argmax()));
    window.center = window.clamp(x_init, domain_center);
    let snap_steps: Vec<usize> = (0..cfg.n_cycle).map(|j| j * spp / cfg.n_cycle.max(1)).collect();

    let mut strobes = vec![ev.field()];
    let mut dropped = 0usize;
    let mut events = Vec::new();
    let mut cycle = Vec::with_capacity(cfg.n_cycle);
    let mut consec = 0;
    let mut residual = S::infinity();
    let mut converged = false;
    let mut certified = None;
    let mut periods = 0;
    while periods < cfg.max_periods {
        periods += 1;
        cycle.clear();
        let mut next_snap = 0;
        for k in 0..spp {
            if next_snap < snap_steps.len() && snap_steps[next_snap] == k {
                cycle.push(ev.field());
                next_snap += 1;
            }
            if let Err(e) = ev.step() {
                match e {
                    LabError::Truncation { .. } => {
                        handle_leak(&mut ev, scan, &window, cfg.pin_fraction, &mut events, e)?
                    }
                    e => return Err(e),
                }
            }
        }
        let current = ev.field();
        let prev = strobes.last().expect("strobes start nonempty");
        residual = window
            .nodes(&current)
            .fold(S::zero(), |m, (i, v)| m.max((v - prev.values[i]).abs()));
        strobes.push(current);
        if !cfg.keep_strobes && strobes.len() > 12 {
            strobes.remove(0);
            dropped += 1;
        }
        if let Some(c) = half_max_center(strobes.last().expect("just pushed")) {
            window.center = window.clamp(c, domain_center);
        }
        if cfg.certify_extinction {
            let last = strobes.last().expect("just pushed");
            let ceiling = lowest_positive(scan).map(|o| o.value_at(last.time));
            if let Some(c) = ceiling {
                if last.max() < c * (S::one() - S::lit(1e-3)) {
                    certified = Some(c);
                    break;
                }
            }
        }
        consec = if residual < cfg.tol_omega { consec + 1 } else { 0 };
        if consec >= cfg.consecutive {
            converged = true;
            break;
        }
    }
    log::debug!("omega detection stopped after {periods} periods (dropped {dropped} strobes), residual {residual:e}");

    let last = strobes.last().expect("strobes nonempty").clone();
    let mut report = OmegaLimitReport {
        verdict: Verdict::Undecided,
        x0: window.center,
        base_orbit: None,
        base_distance: None,
        level: None,
        limit_cycle: cycle,
        residual,
        strobe_monotone: drift(&strobes, window.center),
        periods_used: periods,
        symmetry: None,
        note: None,
    };
    if let Some(c) = certified {
        report.verdict = Verdict::Extinction;
        report.base_orbit = scan.candidates().find(|o| o.a0.abs() <= cfg.match_tol).cloned();
        report.note = Some(format!("max u = {} below the lowest positive orbit value {c}", last.max()));
    } else if !converged {
        if report.strobe_monotone != StrobeDrift::None {
            report.verdict = Verdict::HeteroclinicSuspect;
        }
        report.note = Some(format!("no convergence within {} periods", cfg.max_periods));
    } else {
        let (lo, hi, sum, count) = window.nodes(&last).fold(
            (S::infinity(), S::neg_infinity(), S::zero(), 0usize),
            |(lo, hi, s, c), (_, v)| (lo.min(v), hi.max(v), s + v, c + 1),
        );
        if hi - lo < cfg.tol_flat {
            let level = sum / S::from_usize_lossy(count.max(1));
            report.level = Some(level);
            let t = last.time;
            let best = scan
                .candidates()
                .map(|o| (o, (o.value_at(t) - level).abs()))
                .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
            match best {
                Some((orbit, d)) if d <= cfg.match_tol => {
                    report.verdict = if orbit.a0 <= cfg.match_tol {
                        Verdict::Extinction
                    } else {
                        Verdict::FlatPeriodic
                    };
                    report.base_orbit = Some(orbit.clone());
                    report.base_distance = Some(d);
                }
                _ => {
                    report.verdict = Verdict::FlatPeriodic;
                    report.note = Some(format!("flat level {level} matches no scanned orbit"));
                }
            }
        } else {
            match symmetry_center(&strobes) {
                Ok(x0) => {
                    report.x0 = x0;
                    let sym = verify_symmetric_decreasing(&report.limit_cycle, x0, cfg.tol_sym);
                    report.symmetry = Some(sym);
                    match extract_base(&report.limit_cycle, scan, cfg.match_tol) {
                        Ok((orbit, d)) => {
                            report.base_orbit = Some(orbit);
                            report.base_distance = Some(d);
                            if sym.passes {
                                report.verdict = Verdict::GroundState;
                            } else {
                                report.note = Some("converged profile is not symmetric decreasing".into());
                            }
                        }
                        Err(e) => report.note = Some(e.to_string()),
                    }
                }
                Err(e) => report.note = Some(e.to_string()),
            }
        }
    }
    let audit = ev.audit;
    Ok((report, RunTrace { strobes, events, audit }))
}
