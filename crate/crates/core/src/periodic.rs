//! Phase-plane construction and monotone iteration towards a symmetrically decreasing
//! periodic solution of the Dirichlet problem with boundary data `p_minus(t)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kinetics::{build_perturbation_g, rk4_system, step_count, OdeConfig, PeriodicOrbit, PerturbationProfile};
use crate::nonlinearity::NonlinearitySpec;
use crate::pde::{Boundary, Evolver, Field, Grid, SolverConfig};
use crate::scalar::Scalar;

/// Smallest admissible `c1`; the transform degenerates as `c1 -> 0`.
pub const C1_FLOOR: f64 = 1e-8;

/// The reduced monostable problem `q'' + g~(q) = 0` obtained from
/// `q = exp(-c1 p_minus(0)) - exp(-c1 phi)`.
#[derive(Debug, Clone, Copy)]
pub struct ReducedProblem<'a, S> {
    pub g: &'a PerturbationProfile<S>,
    pub c1: S,
    pub c2: S,
    /// `exp(-c1 p_minus(0))`.
    pub e0: S,
    pub q_bar: S,
}

impl<'a, S: Scalar> ReducedProblem<'a, S> {
    pub fn new(g: &'a PerturbationProfile<S>, c1: S, c2: S) -> Self {
        let c1 = c1.max(S::lit(C1_FLOOR));
        let e0 = (-c1 * g.lo).exp();
        let q_bar = -e0 * (-c1 * (g.hi - g.lo)).exp_m1();
        Self { g, c1, c2, e0, q_bar }
    }

    pub fn to_q(&self, phi: S) -> S {
        -self.e0 * (-self.c1 * (phi - self.g.lo)).exp_m1()
    }

    pub fn to_phi(&self, q: S) -> S {
        self.g.lo - (-q / self.e0).ln_1p() / self.c1
    }

    pub fn g_tilde(&self, q: S) -> S {
        if !(q > S::zero() && q < self.q_bar) {
            return S::zero();
        }
        self.c1 * self.c2 * (self.e0 - q) * self.g.value(self.to_phi(q))
    }

    /// `q(R)` for the shot `q(0) = amplitude`, `q'(0) = 0`, with samples when requested.
    fn shoot(&self, amplitude: S, r: S, n_half: usize, mut record: Option<(&mut Vec<S>, &mut Vec<S>)>) -> S {
        let h = r / S::from_usize_lossy(n_half);
        let end = rk4_system(
            [amplitude, S::zero()],
            S::zero(),
            h,
            n_half,
            |_, y| [y[1], -self.g_tilde(y[0])],
            |_, y| {
                if let Some((q, dq)) = record.as_mut() {
                    q.push(y[0]);
                    dq.push(y[1]);
                }
            },
        );
        end[0]
    }
}

/// Symmetric solution of `phi'' - c1 (phi')^2 = -c2 g(phi)`, `phi(±R) = p_minus(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePlaneSolution<S> {
    pub r: S,
    pub phi: Field<S>,
    pub c1: S,
    pub c2: S,
    pub q_bar: S,
    /// `q(0)` of the reduced problem.
    pub amplitude: S,
    /// Reduced profile `q(x)` and `q'(x)` on the nodes with `x >= 0`.
    pub q: Vec<S>,
    pub dq: Vec<S>,
    /// Max discrete residual of the original equation on the grid.
    pub residual: S,
}

/// Shooting on `q(0) = A` from just below `q_bar` downwards; the largest `A` with
/// `q(R; A) = 0` is refined by bisection.
pub fn solve_phase_plane<S: Scalar>(
    g: &PerturbationProfile<S>,
    c1: S,
    c2: S,
    r: S,
    n_x: usize,
) -> Result<PhasePlaneSolution<S>> {
    if !(c2 > S::zero()) || !(r > S::zero()) {
        return Err(LabError::Domain(format!("need c2 > 0 and R > 0, got c2 = {c2}, R = {r}")));
    }
    if n_x < 5 || n_x % 2 == 0 {
        return Err(LabError::Domain(format!("phase-plane grid needs an odd n_x >= 5, got {n_x}")));
    }
    let problem = ReducedProblem::new(g, c1, c2);
    let n_half = (n_x - 1) / 2;
    let bracket = if g.is_trivial() { None } else { shooting_bracket(&problem, r, n_half) };
    let Some((mut lo, mut hi)) = bracket else {
        return Err(LabError::DomainTooSmall {
            r: r.as_f64(),
            feasible: feasible_half_width(&problem, r, n_half),
        });
    };
    // F(lo) < 0 < F(hi)
    for _ in 0..200 {
        let mid = (lo + hi) * S::half();
        if mid <= lo || mid >= hi {
            break;
        }
        if problem.shoot(mid, r, n_half, None) < S::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let amplitude = hi;
    let mut q = Vec::with_capacity(n_half + 1);
    let mut dq = Vec::with_capacity(n_half + 1);
    problem.shoot(amplitude, r, n_half, Some((&mut q, &mut dq)));
    q[n_half] = S::zero();
    let grid = Grid::symmetric(r, n_x)?;
    let mut values = vec![S::zero(); n_x];
    for (k, &qk) in q.iter().enumerate() {
        let phi = problem.to_phi(qk.max(S::zero()));
        values[n_half + k] = phi;
        values[n_half - k] = phi;
    }
    let phi = Field {
        grid,
        values,
        time: S::zero(),
        support: None,
    };
    let residual = phase_plane_residual(&phi, g, problem.c1, c2);
    Ok(PhasePlaneSolution {
        r,
        phi,
        c1: problem.c1,
        c2,
        q_bar: problem.q_bar,
        amplitude,
        q,
        dq,
        residual,
    })
}

fn shooting_bracket<S: Scalar>(problem: &ReducedProblem<'_, S>, r: S, n_half: usize) -> Option<(S, S)> {
    let q_bar = problem.q_bar;
    let mut prev: Option<S> = None;
    let n = 240;
    for k in 0..n {
        // gaps from 1e-12 up to 1 relative to q_bar
        let gap = S::lit(10f64.powf(-12.0 + 12.0 * k as f64 / (n - 1) as f64));
        let a = q_bar * (S::one() - gap);
        if !(a > S::zero()) {
            break;
        }
        if problem.shoot(a, r, n_half, None) < S::zero() {
            return prev.map(|p| (a, p));
        }
        prev = Some(a);
    }
    None
}

fn feasible_half_width<S: Scalar>(problem: &ReducedProblem<'_, S>, r: S, n_half: usize) -> Option<f64> {
    if problem.g.is_trivial() {
        return None;
    }
    let mut candidate = r;
    for _ in 0..12 {
        candidate = candidate * S::two();
        let h = r / S::from_usize_lossy(n_half);
        let steps = (candidate / h).ceil().to_usize().unwrap_or(n_half).max(n_half);
        if shooting_bracket(problem, candidate, steps).is_some() {
            return Some(candidate.as_f64());
        }
    }
    None
}

/// `max |phi'' - c1 (phi')^2 + c2 g(phi)|` with centred differences.
pub fn phase_plane_residual<S: Scalar>(phi: &Field<S>, g: &PerturbationProfile<S>, c1: S, c2: S) -> S {
    let dx = phi.grid.dx();
    let v = &phi.values;
    (1..v.len() - 1).fold(S::zero(), |m, i| {
        let d2 = (v[i + 1] - S::two() * v[i] + v[i - 1]) / (dx * dx);
        let d1 = (v[i + 1] - v[i - 1]) / (S::two() * dx);
        m.max((d2 - c1 * d1 * d1 + c2 * g.value(v[i])).abs())
    })
}

/// Bounds on the perturbed variational quantities over the `a`-grid of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBounds<S> {
    /// `min H_a`.
    pub m1: S,
    /// `max H_a`, times the safety factor.
    pub m2: S,
    /// `max |H_aa / H_a|`, times the safety factor.
    pub m3: S,
}

pub const PERTURBED_SAFETY: f64 = 1.1;

/// Integrates `H`, `H_a`, `H_aa` of `H_t = f(t, H) - g(a)` over one period for every
/// grid value `a` of `g`.
pub fn perturbed_bounds<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    g: &PerturbationProfile<S>,
    cfg: &OdeConfig<S>,
) -> PerturbedBounds<S> {
    let period = spec.period();
    let n = step_count(period, cfg.dt);
    let h = period / S::from_usize_lossy(n);
    let mut m1 = S::infinity();
    let mut m2 = S::zero();
    let mut m3 = S::zero();
    for &a in &g.grid {
        let (ga, dga, ddga) = (g.value(a), g.derivative(a), g.second_derivative(a));
        rk4_system(
            [a, S::one(), S::zero()],
            S::zero(),
            h,
            n,
            |t, y| {
                let k = spec.at(t);
                let fu = k.fu(y[0]);
                [
                    k.f(y[0]) - ga,
                    fu * y[1] - dga,
                    k.fuu(y[0]) * y[1] * y[1] + fu * y[2] - ddga,
                ]
            },
            |_, y| {
                m1 = m1.min(y[1]);
                m2 = m2.max(y[1]);
                m3 = m3.max((y[2] / y[1]).abs());
            },
        );
    }
    let safety = S::lit(PERTURBED_SAFETY);
    PerturbedBounds {
        m1,
        m2: m2 * safety,
        m3: m3 * safety,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletConfig<S> {
    /// Fixed half-width; `None` searches `r_start, 2 r_start, ...` up to `r_cap`.
    pub r: Option<S>,
    pub r_start: S,
    pub r_cap: S,
    /// Target grid spacing.
    pub dx: S,
    pub dt: S,
    pub tol_fix: S,
    pub max_periods: usize,
    /// Allowed per-period decrease in the monotone certificate.
    pub tol_monotone: S,
    pub n_grid: usize,
    /// Snapshots stored per period of the final cycle.
    pub n_cycle: usize,
    pub ode: OdeConfig<S>,
}

impl<S: Scalar> DirichletConfig<S> {
    pub fn for_spec(spec: &NonlinearitySpec<S>) -> Self {
        Self {
            r: None,
            r_start: S::lit(10.0),
            r_cap: S::lit(160.0),
            dx: S::lit(0.02),
            dt: spec.period() / S::lit(400.0),
            tol_fix: S::lit(1e-6),
            max_periods: 400,
            tol_monotone: S::lit(1e-9),
            n_grid: 41,
            n_cycle: 8,
            ode: OdeConfig::for_spec(spec),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicDirichletSolution<S> {
    pub r: S,
    pub c1: S,
    pub c2: S,
    pub bounds: PerturbedBounds<S>,
    pub phase_plane: PhasePlaneSolution<S>,
    /// Snapshots `w(·, t_k)` over the final period, `t_k = k T / n_cycle`.
    pub profile_cycle: Vec<Field<S>>,
    /// `‖w(·, T) - w(·, 0)‖_∞` over the final period.
    pub period_residual: S,
    pub monotone_certificate: bool,
    pub periods_used: usize,
    /// `min (w(·, T; phi) - phi)` after the first period.
    pub first_step_margin: S,
    /// Largest per-period decrease seen (zero for a strictly monotone run).
    pub worst_drop: S,
}

#[derive(Debug)]
pub enum DirichletError<S> {
    Lab(LabError),
    /// Iteration stayed monotone but did not settle; the partial result is attached.
    NoConvergence(Box<PeriodicDirichletSolution<S>>),
}

impl<S> From<LabError> for DirichletError<S> {
    fn from(e: LabError) -> Self {
        DirichletError::Lab(e)
    }
}

impl<S: Scalar> fmt::Display for DirichletError<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirichletError::Lab(e) => write!(f, "{e}"),
            DirichletError::NoConvergence(p) => write!(
                f,
                "no convergence after {} periods (period residual {:e})",
                p.periods_used, p.period_residual
            ),
        }
    }
}

impl<S: Scalar> std::error::Error for DirichletError<S> {}

impl<S> DirichletError<S> {
    pub fn exit_code(&self) -> i32 {
        match self {
            DirichletError::Lab(e) => e.exit_code(),
            DirichletError::NoConvergence(_) => 3,
        }
    }
}

fn grid_nodes<S: Scalar>(r: S, dx: S) -> usize {
    let half = (r / dx).round().to_usize().unwrap_or(1).max(2);
    2 * half + 1
}

/// Builds `g`, the phase-plane subsolution and then iterates the period map of the
/// Dirichlet problem from it until it settles.
pub fn build_periodic_dirichlet<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    p_minus: &PeriodicOrbit<S>,
    p_plus: &PeriodicOrbit<S>,
    cfg: &DirichletConfig<S>,
) -> std::result::Result<PeriodicDirichletSolution<S>, DirichletError<S>> {
    let g = build_perturbation_g(spec, p_minus, p_plus, cfg.n_grid, &cfg.ode)?;
    let bounds = perturbed_bounds(spec, &g, &cfg.ode);
    if !(bounds.m1 > S::zero()) {
        return Err(LabError::Hypothesis(format!("perturbed H_a reaches {} <= 0", bounds.m1)).into());
    }
    let c1 = bounds.m3;
    let c2 = S::one() / bounds.m2;
    let phase_plane = match cfg.r {
        Some(r) => solve_phase_plane(&g, c1, c2, r, grid_nodes(r, cfg.dx))?,
        None => {
            let mut r = cfg.r_start;
            loop {
                match solve_phase_plane(&g, c1, c2, r, grid_nodes(r, cfg.dx)) {
                    Ok(sol) => break sol,
                    Err(LabError::DomainTooSmall { feasible, .. }) if r * S::two() <= cfg.r_cap => {
                        let _ = feasible;
                        r = r * S::two();
                    }
                    Err(LabError::DomainTooSmall { feasible, .. }) => {
                        return Err(LabError::DomainTooSmall { r: r.as_f64(), feasible }.into())
                    }
                    Err(e) => return Err(e.into()),
                }
            }
        }
    };
    let r = phase_plane.r;
    log::info!("phase plane solved at R = {r} (c1 = {}, c2 = {})", phase_plane.c1, c2);

    let solver = SolverConfig {
        dt: cfg.dt,
        boundary: Boundary::DirichletOrbit(p_minus.clone()),
        leak: None,
        ..SolverConfig::for_period(spec.period())
    };
    let mut ev = Evolver::new(spec, &phase_plane.phi, solver)?;
    let spp = ev.steps_per_period();
    let n_cycle = cfg.n_cycle.max(1);
    let mut prev = phase_plane.phi.values.clone();
    let mut cycle: Vec<Field<S>> = vec![ev.field()];
    let mut first_step_margin = S::zero();
    let mut worst_drop = S::zero();
    let mut period_residual = S::infinity();
    let mut periods = 0;
    while periods < cfg.max_periods {
        let mut snapshots = vec![ev.field()];
        for k in 1..=n_cycle {
            let target = k * spp / n_cycle;
            let done = (k - 1) * spp / n_cycle;
            ev.advance(target - done)?;
            if k < n_cycle {
                snapshots.push(ev.field());
            }
        }
        periods += 1;
        let now = ev.values();
        let mut residual = S::zero();
        let mut drop = S::zero();
        let mut drop_at = 0;
        let mut margin = S::infinity();
        for (i, (&a, &b)) in now.iter().zip(&prev).enumerate() {
            let d = a - b;
            residual = residual.max(d.abs());
            margin = margin.min(d);
            if -d > drop {
                drop = -d;
                drop_at = i;
            }
        }
        if periods == 1 {
            first_step_margin = margin;
        }
        worst_drop = worst_drop.max(drop);
        if drop > cfg.tol_monotone {
            return Err(LabError::Certificate {
                period: periods,
                x: ev.grid().x(drop_at).as_f64(),
                drop: drop.as_f64(),
            }
            .into());
        }
        prev.copy_from_slice(now);
        period_residual = residual;
        cycle = snapshots;
        if residual < cfg.tol_fix {
            break;
        }
    }
    let solution = PeriodicDirichletSolution {
        r,
        c1: phase_plane.c1,
        c2,
        bounds,
        phase_plane,
        profile_cycle: cycle,
        period_residual,
        monotone_certificate: true,
        periods_used: periods,
        first_step_margin,
        worst_drop,
    };
    if period_residual < cfg.tol_fix {
        Ok(solution)
    } else {
        Err(DirichletError::NoConvergence(Box::new(solution)))
    }
}
