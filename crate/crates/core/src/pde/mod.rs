//! Truncated-line solver for `u_t = u_xx + f(t, u)` plus exact kernel oracles.

mod change;
mod kernels;

pub use change::kinetic_change_of_variables;
pub use kernels::{cole_hopf_log_convolution, evolve_quadratic_gradient, heat_kernel_convolve};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::kinetics::PeriodicOrbit;
use crate::linalg::TridiagonalLu;
use crate::nonlinearity::NonlinearitySpec;
use crate::scalar::Scalar;

/// Uniform grid on `[x_min, x_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid<S> {
    pub x_min: S,
    pub x_max: S,
    pub n_x: usize,
}

impl<S: Scalar> Grid<S> {
    pub fn new(x_min: S, x_max: S, n_x: usize) -> Result<Self> {
        if n_x < 3 || !(x_max > x_min) || !x_min.is_finite() || !x_max.is_finite() {
            return Err(LabError::Domain(format!(
                "grid needs n_x >= 3 and x_min < x_max, got [{x_min}, {x_max}] with {n_x} nodes"
            )));
        }
        Ok(Self { x_min, x_max, n_x })
    }

    /// `[-half_width, half_width]` with `n_x` nodes.
    pub fn symmetric(half_width: S, n_x: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n_x)
    }

    pub fn dx(&self) -> S {
        (self.x_max - self.x_min) / S::from_usize_lossy(self.n_x - 1)
    }

    pub fn x(&self, i: usize) -> S {
        if i + 1 == self.n_x {
            self.x_max
        } else {
            self.x_min + self.dx() * S::from_usize_lossy(i)
        }
    }

    pub fn nodes(&self) -> Vec<S> {
        (0..self.n_x).map(|i| self.x(i)).collect()
    }

    /// Index of the node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: S) -> usize {
        let pos = ((x - self.x_min) / self.dx()).round();
        pos.max(S::zero()).to_usize().unwrap_or(0).min(self.n_x - 1)
    }

    /// Same extent with `2 (n_x - 1) + 1` nodes.
    pub fn refined(&self) -> Self {
        Self {
            n_x: 2 * (self.n_x - 1) + 1,
            ..*self
        }
    }

    pub fn half_width(&self) -> S {
        (self.x_max - self.x_min) * S::half()
    }

    pub fn center(&self) -> S {
        (self.x_max + self.x_min) * S::half()
    }
}

/// Values on a grid at a time stamp, with the support of the initial data if known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field<S> {
    pub grid: Grid<S>,
    pub values: Vec<S>,
    pub time: S,
    pub support: Option<(S, S)>,
}

impl<S: Scalar> Field<S> {
    pub fn zeros(grid: Grid<S>) -> Self {
        Self {
            grid,
            values: vec![S::zero(); grid.n_x],
            time: S::zero(),
            support: None,
        }
    }

    pub fn from_fn(grid: Grid<S>, f: impl Fn(S) -> S) -> Self {
        Self {
            grid,
            values: grid.nodes().into_iter().map(f).collect(),
            time: S::zero(),
            support: None,
        }
    }

    pub fn with_support(mut self, lo: S, hi: S) -> Self {
        self.support = Some((lo, hi));
        self
    }

    pub fn max(&self) -> S {
        self.values.iter().fold(S::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn min(&self) -> S {
        self.values.iter().fold(S::infinity(), |m, &v| m.min(v))
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> S {
        crate::linalg::trapezoid(&self.values, self.grid.dx())
    }

    /// Piecewise linear interpolation, constant outside the grid.
    pub fn value_at(&self, x: S) -> S {
        let dx = self.grid.dx();
        let pos = (x - self.grid.x_min) / dx;
        if pos <= S::zero() {
            return self.values[0];
        }
        let n = self.grid.n_x;
        let k = pos.floor().to_usize().unwrap_or(n - 1);
        if k >= n - 1 {
            return self.values[n - 1];
        }
        let s = pos - S::from_usize_lossy(k);
        self.values[k] * (S::one() - s) + self.values[k + 1] * s
    }

    /// Four-point Lagrange interpolation, falling back to linear next to the ends.
    pub fn value_at_cubic(&self, x: S) -> S {
        let n = self.grid.n_x;
        let pos = (x - self.grid.x_min) / self.grid.dx();
        let k = pos.floor().to_isize().unwrap_or(-1);
        if n < 4 || k < 1 || k + 2 > n as isize - 1 {
            return self.value_at(x);
        }
        let k = k as usize;
        let s = pos - S::from_usize_lossy(k);
        let (ym, y0, y1, y2) = (self.values[k - 1], self.values[k], self.values[k + 1], self.values[k + 2]);
        let one = S::one();
        let two = S::two();
        let six = S::lit(6.0);
        -s * (s - one) * (s - two) / six * ym + (s + one) * (s - one) * (s - two) / two * y0
            - (s + one) * s * (s - two) / two * y1
            + (s + one) * s * (s - one) / six * y2
    }

    /// `sup |self - other|` over the nodes of `self` with `|x - center| <= radius`.
    pub fn sup_distance_on(&self, other: &Field<S>, center: S, radius: S) -> S {
        let mut d = S::zero();
        for (i, &v) in self.values.iter().enumerate() {
            let x = self.grid.x(i);
            if (x - center).abs() <= radius {
                d = d.max((v - other.value_at(x)).abs());
            }
        }
        d
    }
}

/// Boundary data at both ends of the truncated line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Boundary<S> {
    DirichletZero,
    /// `u(±L, t) = p(t)` for a periodic orbit `p`.
    DirichletOrbit(PeriodicOrbit<S>),
}

impl<S: Scalar> Boundary<S> {
    pub fn value(&self, t: S) -> S {
        match self {
            Boundary::DirichletZero => S::zero(),
            Boundary::DirichletOrbit(p) => p.value_at(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig<S> {
    pub dt: S,
    pub u_max: S,
    pub boundary: Boundary<S>,
    /// Boundary-adjacent values above this raise a truncation error (zero boundary only).
    pub leak: Option<S>,
    /// Number of initial diffusion steps replaced by two backward Euler half steps.
    pub startup_steps: usize,
}

impl<S: Scalar> SolverConfig<S> {
    pub fn for_period(period: S) -> Self {
        Self {
            dt: period / S::lit(400.0),
            u_max: S::lit(10.0),
            boundary: Boundary::DirichletZero,
            leak: Some(S::lit(1e-4)),
            startup_steps: 2,
        }
    }
}

/// Counters accumulated while stepping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverAudit {
    /// Node values below `-1e-12` that were clipped to zero.
    pub clipped: u64,
    pub node_steps: u64,
    pub min_before_clip: f64,
}

/// Strang-split stepper: half Heun reaction, Crank-Nicolson diffusion, half reaction.
pub struct Evolver<'a, S: Scalar> {
    spec: &'a NonlinearitySpec<S>,
    cfg: SolverConfig<S>,
    grid: Grid<S>,
    u: Vec<S>,
    t: S,
    steps: usize,
    steps_per_period: usize,
    lu: TridiagonalLu<S>,
    r: S,
    scratch: Vec<S>,
    support: Option<(S, S)>,
    pub audit: SolverAudit,
}

impl<'a, S: Scalar> Evolver<'a, S> {
    /// The step is shrunk so that a whole number of steps covers one period.
    pub fn new(spec: &'a NonlinearitySpec<S>, u0: &Field<S>, cfg: SolverConfig<S>) -> Result<Self> {
        let grid = u0.grid;
        let dx = grid.dx();
        if !(cfg.dt > S::zero()) {
            return Err(LabError::Domain(format!("dt must be positive, got {}", cfg.dt)));
        }
        if cfg.dt > S::lit(10.0) * dx * dx {
            return Err(LabError::Domain(format!(
                "dt = {} exceeds 10 dx^2 = {}",
                cfg.dt,
                S::lit(10.0) * dx * dx
            )));
        }
        if let Some(v) = u0.values.iter().find(|v| !v.is_finite() || **v < S::lit(-1e-12)) {
            return Err(LabError::Domain(format!("initial data must be finite and nonnegative, found {v}")));
        }
        let period = spec.period();
        let steps_per_period = (period / cfg.dt).ceil().to_usize().unwrap_or(1).max(1);
        let dt = period / S::from_usize_lossy(steps_per_period);
        let cfg = SolverConfig { dt, ..cfg };
        let r = dt / (dx * dx);
        let m = grid.n_x - 2;
        let half_r = r * S::half();
        let sub = vec![-half_r; m];
        let diag = vec![S::one() + r; m];
        let sup = vec![-half_r; m];
        let mut u = u0.values.clone();
        for v in u.iter_mut() {
            *v = v.max(S::zero());
        }
        let b0 = cfg.boundary.value(u0.time);
        u[0] = b0;
        u[grid.n_x - 1] = b0;
        Ok(Self {
            spec,
            cfg,
            grid,
            u,
            t: u0.time,
            steps: 0,
            steps_per_period,
            lu: TridiagonalLu::new(&sub, &diag, &sup),
            r,
            scratch: vec![S::zero(); m],
            support: u0.support,
            audit: SolverAudit::default(),
        })
    }

    pub fn time(&self) -> S {
        self.t
    }

    pub fn dt(&self) -> S {
        self.cfg.dt
    }

    pub fn steps_per_period(&self) -> usize {
        self.steps_per_period
    }

    pub fn grid(&self) -> &Grid<S> {
        &self.grid
    }

    pub fn values(&self) -> &[S] {
        &self.u
    }

    pub fn config(&self) -> &SolverConfig<S> {
        &self.cfg
    }

    pub fn field(&self) -> Field<S> {
        Field {
            grid: self.grid,
            values: self.u.clone(),
            time: self.t,
            support: self.support,
        }
    }

    pub fn set_boundary(&mut self, boundary: Boundary<S>) {
        self.cfg.boundary = boundary;
    }

    pub fn set_leak(&mut self, leak: Option<S>) {
        self.cfg.leak = leak;
    }

    fn react(&mut self, t: S, tau: S) {
        let k0 = self.spec.at(t);
        let k1 = self.spec.at(t + tau);
        let half = tau * S::half();
        let n = self.u.len();
        for v in &mut self.u[1..n - 1] {
            let s0 = k0.f(*v);
            let pred = *v + tau * s0;
            *v += half * (s0 + k1.f(pred));
        }
    }

    fn diffuse(&mut self, boundary_value: S) {
        let n = self.u.len();
        let m = n - 2;
        let half_r = self.r * S::half();
        if self.steps < self.cfg.startup_steps {
            for _ in 0..2 {
                self.scratch.copy_from_slice(&self.u[1..n - 1]);
                self.scratch[0] += half_r * boundary_value;
                self.scratch[m - 1] += half_r * boundary_value;
                self.lu.solve_in_place(&mut self.scratch);
                self.u[1..n - 1].copy_from_slice(&self.scratch);
            }
        } else {
            let u = &self.u;
            for i in 1..n - 1 {
                self.scratch[i - 1] = u[i] + half_r * (u[i - 1] - S::two() * u[i] + u[i + 1]);
            }
            self.scratch[0] += half_r * boundary_value;
            self.scratch[m - 1] += half_r * boundary_value;
            self.lu.solve_in_place(&mut self.scratch);
            self.u[1..n - 1].copy_from_slice(&self.scratch);
        }
    }

    /// Advances one time step.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.cfg.dt;
        let tau = dt * S::half();
        let t = self.t;
        let n = self.u.len();
        let mid = self.cfg.boundary.value(t + tau);
        self.u[0] = mid;
        self.u[n - 1] = mid;
        self.react(t, tau);
        self.diffuse(mid);
        self.react(t + tau, tau);
        self.steps += 1;
        self.t = t + dt;
        let edge = self.cfg.boundary.value(self.t);
        self.u[0] = edge;
        self.u[n - 1] = edge;

        let floor = S::lit(-1e-12);
        let mut max = S::zero();
        let mut finite = true;
        for v in &mut self.u {
            if *v < S::zero() {
                if *v < floor {
                    self.audit.clipped += 1;
                    self.audit.min_before_clip = self.audit.min_before_clip.min(v.as_f64());
                }
                *v = S::zero();
            }
            finite &= v.is_finite();
            max = max.max(*v);
        }
        self.audit.node_steps += n as u64;
        if !finite || max > self.cfg.u_max {
            return Err(LabError::BlowUp {
                t: self.t.as_f64(),
                max: max.as_f64(),
            });
        }
        if let (Some(leak), Boundary::DirichletZero) = (self.cfg.leak, &self.cfg.boundary) {
            let value = self.u[1].max(self.u[n - 2]);
            if value > leak {
                return Err(LabError::Truncation {
                    t: self.t.as_f64(),
                    value: value.as_f64(),
                    threshold: leak.as_f64(),
                    half_width: self.grid.half_width().as_f64(),
                });
            }
        }
        Ok(())
    }

    pub fn advance(&mut self, steps: usize) -> Result<()> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    /// Advances exactly one forcing period.
    pub fn advance_period(&mut self) -> Result<()> {
        self.advance(self.steps_per_period)
    }
}

/// Evolves `u0` to `t_end`, calling `on_strobe` at every multiple of the period
/// (including the start when it is one).
pub fn evolve<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    u0: &Field<S>,
    cfg: SolverConfig<S>,
    t_end: S,
    mut on_strobe: impl FnMut(&Field<S>),
) -> Result<Field<S>> {
    let mut ev = Evolver::new(spec, u0, cfg)?;
    let dt = ev.dt();
    let spp = ev.steps_per_period();
    let total = ((t_end - u0.time) / dt - S::lit(1e-9)).ceil().to_usize().unwrap_or(0);
    let start_offset = {
        let phase = u0.time / dt;
        phase.round().to_usize().unwrap_or(0) % spp
    };
    if start_offset == 0 {
        on_strobe(&ev.field());
    }
    for k in 1..=total {
        ev.step()?;
        if (start_offset + k) % spp == 0 {
            on_strobe(&ev.field());
        }
    }
    Ok(ev.field())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{OdeConfig, PeriodicOrbit};

    fn gaussian(grid: Grid<f64>) -> Field<f64> {
        Field::from_fn(grid, |x| (-x * x).exp())
    }

    #[test]
    fn grid_geometry() {
        let g = Grid::<f64>::symmetric(40.0, 2049).unwrap();
        assert!((g.dx() - 80.0 / 2048.0).abs() < 1e-15);
        assert_eq!(g.x(2048), 40.0);
        assert_eq!(g.nearest(0.0), 1024);
        assert_eq!(g.refined().n_x, 4097);
        assert!(Grid::<f64>::new(1.0, 0.0, 10).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let grid = Grid::<f64>::symmetric(10.0, 201).unwrap();
        let out = evolve(&spec, &Field::zeros(grid), SolverConfig::for_period(1.0), 3.0, |_| {}).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heat_flow_matches_kernel() {
        let spec = NonlinearitySpec::<f64>::zero(1.0).unwrap();
        let grid = Grid::<f64>::symmetric(40.0, 1025).unwrap();
        let u0 = gaussian(grid);
        let out = evolve(&spec, &u0, SolverConfig::for_period(1.0), 1.0, |_| {}).unwrap();
        let exact = heat_kernel_convolve(&u0, 1.0).unwrap();
        let err = out.values.iter().zip(&exact.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn strobes_fire_once_per_period() {
        let spec = NonlinearitySpec::<f64>::zero(1.0).unwrap();
        let grid = Grid::<f64>::symmetric(10.0, 101).unwrap();
        let mut times = Vec::new();
        evolve(&spec, &gaussian(grid), SolverConfig::for_period(1.0), 3.0, |f| times.push(f.time)).unwrap();
        assert_eq!(times.len(), 4);
        assert!((times[3] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn orbit_boundary_keeps_a_constant_orbit() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let one = PeriodicOrbit::constant(&spec, 1.0, 401);
        let grid = Grid::<f64>::symmetric(5.0, 101).unwrap();
        let cfg = SolverConfig {
            boundary: Boundary::DirichletOrbit(one),
            ..SolverConfig::for_period(1.0)
        };
        let out = evolve(&spec, &Field::from_fn(grid, |_| 1.0), cfg, 2.0, |_| {}).unwrap();
        assert!(out.values.iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn orbit_boundary_tracks_a_forced_orbit() {
        let spec = NonlinearitySpec::<f64>::logistic(0.5, 1.0).unwrap();
        let ode = OdeConfig::for_spec(&spec);
        let orbit = PeriodicOrbit::from_initial(&spec, 1.0, &ode).unwrap();
        let grid = Grid::<f64>::symmetric(5.0, 101).unwrap();
        let cfg = SolverConfig {
            boundary: Boundary::DirichletOrbit(orbit.clone()),
            ..SolverConfig::for_period(1.0)
        };
        let mut ev = Evolver::new(&spec, &Field::from_fn(grid, |_| 1.0), cfg).unwrap();
        ev.advance(137).unwrap();
        let t = ev.time();
        assert!(ev.values().iter().all(|&v| (v - orbit.value_at(t)).abs() < 1e-9));
    }

    #[test]
    fn leak_raises_truncation() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        let grid = Grid::<f64>::symmetric(4.0, 161).unwrap();
        let u0 = Field::from_fn(grid, |x| if x.abs() < 2.0 { 1.0 } else { 0.0 });
        let err = evolve(&spec, &u0, SolverConfig::for_period(1.0), 20.0, |_| {}).unwrap_err();
        assert!(matches!(err, LabError::Truncation { .. }));
    }

    #[test]
    fn superlinear_growth_blows_up() {
        let terms = vec![crate::nonlinearity::CustomTerm {
            power: 2,
            harmonic: 0,
            cos_coeff: 1.0,
            sin_coeff: 0.0,
        }];
        let spec = NonlinearitySpec::<f64>::custom(terms, 1.0).unwrap();
        let grid = Grid::<f64>::symmetric(10.0, 201).unwrap();
        let u0 = Field::from_fn(grid, |x| if x.abs() < 3.0 { 3.0 } else { 0.0 });
        let err = evolve(&spec, &u0, SolverConfig::for_period(1.0), 5.0, |_| {}).unwrap_err();
        assert!(matches!(err, LabError::BlowUp { .. }));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let spec = NonlinearitySpec::<f64>::zero(1.0).unwrap();
        let grid = Grid::<f64>::symmetric(1.0, 201).unwrap();
        let cfg = SolverConfig { dt: 0.5, ..SolverConfig::for_period(1.0) };
        assert!(matches!(Evolver::new(&spec, &Field::zeros(grid), cfg), Err(LabError::Domain(_))));
    }

    #[test]
    fn single_precision_heat_step() {
        let spec = NonlinearitySpec::<f32>::zero(1.0).unwrap();
        let grid = Grid::<f32>::symmetric(20.0, 401).unwrap();
        let u0 = Field::from_fn(grid, |x| (-x * x).exp());
        let out = evolve(&spec, &u0, SolverConfig::for_period(1.0), 1.0, |_| {}).unwrap();
        let exact = 1.0 / 5f32.sqrt();
        assert!((out.values[200] - exact).abs() < 2e-3);
    }
}
