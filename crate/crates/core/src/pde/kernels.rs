use super::{Field, Grid};
use crate::error::{LabError, Result};
use crate::linalg::TridiagonalLu;
use crate::scalar::Scalar;

fn kernel<S: Scalar>(t: S, x: S) -> S {
    let four_t = S::lit(4.0) * t;
    (-x * x / four_t).exp() / (S::PI() * four_t).sqrt()
}

/// Kernel samples `K(t, k dx)` for `k = 0..=m`, with `m dx` covering `8 sqrt(2 t)`.
fn kernel_table<S: Scalar>(grid: &Grid<S>, t: S) -> Vec<S> {
    let dx = grid.dx();
    let cut = S::lit(8.0) * (S::two() * t).sqrt();
    let m = (cut / dx).ceil().to_usize().unwrap_or(0).max(1);
    (0..=m).map(|k| kernel(t, dx * S::from_usize_lossy(k))).collect()
}

/// `∫ K(t, x - y) u0(y) dy` by the trapezoid rule on the grid, `u0 = 0` outside it.
pub fn heat_kernel_convolve<S: Scalar>(u0: &Field<S>, t: S) -> Result<Field<S>> {
    if !(t > S::zero()) {
        return Err(LabError::Domain(format!("kernel time must be positive, got {t}")));
    }
    let grid = u0.grid;
    let n = grid.n_x;
    let dx = grid.dx();
    let k = kernel_table(&grid, t);
    let m = k.len() - 1;
    let weight = |j: usize| if j == 0 || j == n - 1 { S::half() } else { S::one() };
    let values = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(m);
            let hi = (i + m).min(n - 1);
            let mut acc = S::zero();
            for j in lo..=hi {
                acc += weight(j) * u0.values[j] * k[i.abs_diff(j)];
            }
            acc * dx
        })
        .collect();
    Ok(Field {
        grid,
        values,
        time: u0.time + t,
        support: u0.support,
    })
}

/// `(1/M) ln ∫ exp(M psi0(y)) K(t, x - y) dy` with `psi0` extended by its edge values.
pub fn cole_hopf_log_convolution<S: Scalar>(psi0: &Field<S>, m: S, t: S) -> Result<Field<S>> {
    if !(m > S::zero()) || !(t > S::zero()) {
        return Err(LabError::Domain(format!("need M > 0 and t > 0, got M = {m}, t = {t}")));
    }
    let grid = psi0.grid;
    let n = grid.n_x as isize;
    let k = kernel_table(&grid, t);
    let w = k.len() as isize - 1;
    let scaled: Vec<S> = psi0.values.iter().map(|&v| m * v).collect();
    let mut values = Vec::with_capacity(grid.n_x);
    for i in 0..n {
        let at = |j: isize| scaled[(i + j).clamp(0, n - 1) as usize];
        let peak = (-w..=w).fold(S::neg_infinity(), |mx, j| mx.max(at(j)));
        let mut num = S::zero();
        let mut mass = S::zero();
        for j in -w..=w {
            let weight = if j.abs() == w { S::half() } else { S::one() };
            let kw = weight * k[j.unsigned_abs()];
            num += kw * (at(j) - peak).exp();
            mass += kw;
        }
        let v = (peak + (num / mass).ln()) / m;
        if !v.is_finite() {
            return Err(LabError::Range(format!(
                "log-convolution is not finite at x = {}; rescale psi0 or reduce M",
                grid.x(i as usize)
            )));
        }
        values.push(v);
    }
    Ok(Field {
        grid,
        values,
        time: psi0.time + t,
        support: psi0.support,
    })
}

/// Crank-Nicolson heat flow with constant Dirichlet data, two backward Euler half
/// steps at the start.
fn heat_dirichlet<S: Scalar>(values: &mut [S], dx: S, dt: S, steps: usize, left: S, right: S) {
    let n = values.len();
    let m = n - 2;
    let r = dt / (dx * dx);
    let half_r = r * S::half();
    let lu = TridiagonalLu::new(&vec![-half_r; m], &vec![S::one() + r; m], &vec![-half_r; m]);
    values[0] = left;
    values[n - 1] = right;
    let mut rhs = vec![S::zero(); m];
    for step in 0..steps {
        let sweeps = if step < 2 { 2 } else { 1 };
        for _ in 0..sweeps {
            if step < 2 {
                rhs.copy_from_slice(&values[1..n - 1]);
            } else {
                for i in 1..n - 1 {
                    rhs[i - 1] = values[i] + half_r * (values[i - 1] - S::two() * values[i] + values[i + 1]);
                }
            }
            rhs[0] += half_r * left;
            rhs[m - 1] += half_r * right;
            lu.solve_in_place(&mut rhs);
            values[1..n - 1].copy_from_slice(&rhs);
        }
    }
}

/// Solves `w_t = w_xx - M w_x^2` through `psi = exp(-M w)`, which satisfies the heat
/// equation. Dirichlet data default to the edge values of `w0`.
pub fn evolve_quadratic_gradient<S: Scalar>(
    w0: &Field<S>,
    m: S,
    dt: S,
    t_end: S,
    boundary: Option<(S, S)>,
) -> Result<Field<S>> {
    if m < S::zero() {
        return Err(LabError::Domain(format!("M must be nonnegative, got {m}")));
    }
    if !(dt > S::zero()) || !(t_end > S::zero()) {
        return Err(LabError::Domain(format!("need dt > 0 and t_end > 0, got {dt}, {t_end}")));
    }
    let n = w0.grid.n_x;
    let (left, right) = boundary.unwrap_or((w0.values[0], w0.values[n - 1]));
    let steps = (t_end / dt - S::lit(1e-9)).ceil().to_usize().unwrap_or(1).max(1);
    let dt = t_end / S::from_usize_lossy(steps);
    let dx = w0.grid.dx();
    let values = if m == S::zero() {
        let mut v = w0.values.clone();
        heat_dirichlet(&mut v, dx, dt, steps, left, right);
        v
    } else {
        let to_psi = |w: S| {
            let p = (-m * w).exp();
            if p.is_finite() && p >= S::min_positive_value() {
                Ok(p)
            } else {
                Err(LabError::Range(format!(
                    "exp(-M w) leaves the floating point range at w = {w}, M = {m}; rescale w or reduce M"
                )))
            }
        };
        let mut psi: Vec<S> = w0.values.iter().map(|&w| to_psi(w)).collect::<Result<_>>()?;
        heat_dirichlet(&mut psi, dx, dt, steps, to_psi(left)?, to_psi(right)?);
        psi.iter()
            .map(|&p| {
                if p > S::zero() {
                    Ok(-p.ln() / m)
                } else {
                    Err(LabError::Range("psi underflowed to zero; rescale w or reduce M".into()))
                }
            })
            .collect::<Result<_>>()?
    };
    Ok(Field {
        grid: w0.grid,
        values,
        time: w0.time + t_end,
        support: w0.support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sup(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn narrow_bump_reproduces_the_kernel() {
        let grid = Grid::<f64>::symmetric(10.0, 4001).unwrap();
        let dx = grid.dx();
        let mut u0 = Field::zeros(grid);
        u0.values[2000] = 1.0 / dx;
        for &t in &[0.1, 0.5, 2.0] {
            let out = heat_kernel_convolve(&u0, t).unwrap();
            let exact: Vec<f64> = grid.nodes().iter().map(|&x| kernel(t, x)).collect();
            let peak = kernel(t, 0.0);
            assert!(sup(&out.values, &exact) / peak < 0.02, "t = {t}");
        }
    }

    #[test]
    fn constants_are_caloric_in_the_interior() {
        let grid = Grid::<f64>::symmetric(200.0, 4001).unwrap();
        let out = heat_kernel_convolve(&Field::from_fn(grid, |_| 0.7), 4.0).unwrap();
        assert!((out.values[2000] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn mass_is_conserved() {
        let grid = Grid::<f64>::symmetric(40.0, 2049).unwrap();
        let u0 = Field::from_fn(grid, |x| if x.abs() < 3.0 { 1.0 + 0.2 * x } else { 0.0 });
        let out = heat_kernel_convolve(&u0, 2.0).unwrap();
        assert!((out.integral() - u0.integral()).abs() < 1e-6);
    }

    #[test]
    fn nonpositive_time_is_rejected() {
        let grid = Grid::<f64>::symmetric(1.0, 11).unwrap();
        assert!(matches!(heat_kernel_convolve(&Field::zeros(grid), 0.0), Err(LabError::Domain(_))));
    }

    #[test]
    fn cole_hopf_keeps_constants_and_relaxes_bumps() {
        let grid = Grid::<f64>::symmetric(40.0, 1601).unwrap();
        let c = Field::from_fn(grid, |_| 0.4);
        let out = cole_hopf_log_convolution(&c, 2.0, 1.0).unwrap();
        assert!(out.values.iter().all(|v| (v - 0.4).abs() < 1e-12));

        let bump = Field::from_fn(grid, |x| 0.1 + if x.abs() < 1.0 { 0.5 } else { 0.0 });
        let mut prev = f64::INFINITY;
        for &t in &[1.0, 10.0, 100.0] {
            let out = cole_hopf_log_convolution(&bump, 1.0, t).unwrap();
            let dev = out.values.iter().fold(0.0f64, |m, v| m.max((v - 0.1).abs()));
            assert!(dev < prev);
            prev = dev;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn quadratic_gradient_constants_and_heat_limit() {
        let grid = Grid::<f64>::symmetric(40.0, 2049).unwrap();
        let c = Field::from_fn(grid, |_| 0.3);
        let out = evolve_quadratic_gradient(&c, 1.0, 0.0025, 1.0, None).unwrap();
        assert!(out.values.iter().all(|v| (v - 0.3).abs() < 1e-13));

        let g = Field::from_fn(grid, |x| (-x * x).exp());
        let heat = evolve_quadratic_gradient(&g, 0.0, 0.0025, 1.0, None).unwrap();
        let exact = heat_kernel_convolve(&g, 1.0).unwrap();
        assert!(sup(&heat.values, &exact.values) < 1e-3);
    }

    #[test]
    fn quadratic_gradient_matches_log_convolution() {
        let grid = Grid::<f64>::symmetric(40.0, 2049).unwrap();
        let w0 = Field::from_fn(grid, |x| 0.5 * (-x * x).exp());
        let numeric = evolve_quadratic_gradient(&w0, 1.0, 0.0025, 1.0, None).unwrap();
        let psi0 = Field::from_fn(grid, |x| -0.5 * (-x * x).exp());
        let closed = cole_hopf_log_convolution(&psi0, 1.0, 1.0).unwrap();
        let flipped: Vec<f64> = closed.values.iter().map(|v| -v).collect();
        assert!(sup(&numeric.values, &flipped) < 1e-3);
    }

    #[test]
    fn huge_values_are_a_range_error() {
        let grid = Grid::<f64>::symmetric(1.0, 11).unwrap();
        let w0 = Field::from_fn(grid, |_| -1e5);
        assert!(matches!(
            evolve_quadratic_gradient(&w0, 1.0, 0.01, 0.1, None),
            Err(LabError::Range(_))
        ));
    }
}
