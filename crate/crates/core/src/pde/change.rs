use rayon::prelude::*;

use super::Field;
use crate::error::{LabError, Result};
use crate::kinetics::{integrate_h, OdeConfig};
use crate::nonlinearity::NonlinearitySpec;
use crate::scalar::Scalar;

/// Nodewise `v = h(t; ·)^{-1}(u)`, the coordinate in which `u = h(t; v)`.
pub fn kinetic_change_of_variables<S: Scalar>(
    spec: &NonlinearitySpec<S>,
    u: &Field<S>,
    t_in_period: S,
    cfg: &OdeConfig<S>,
) -> Result<Field<S>> {
    if t_in_period < S::zero() {
        return Err(LabError::Domain(format!("time must be nonnegative, got {t_in_period}")));
    }
    if t_in_period == S::zero() {
        return Ok(u.clone());
    }
    let flow = |a: S| -> Result<S> {
        if a == S::zero() {
            return Ok(S::zero());
        }
        integrate_h(spec, a, t_in_period, cfg).map(|tr| tr.end_value)
    };
    let target_max = u.max().max(S::zero());
    let mut a_hi = target_max.max(S::lit(1e-3));
    let not_invertible = |_| LabError::Range(format!("h({t_in_period}; a) is not invertible up to {target_max}"));
    let mut h_hi = flow(a_hi).map_err(not_invertible)?;
    while h_hi < target_max {
        a_hi = a_hi * S::lit(1.5);
        if a_hi > cfg.u_max {
            return Err(LabError::Range(format!(
                "value {target_max} is not reached by h({t_in_period}; a) for a <= {}",
                cfg.u_max
            )));
        }
        h_hi = flow(a_hi).map_err(not_invertible)?;
    }
    let n_table = 65;
    let table: Vec<(S, S)> = (0..n_table)
        .map(|k| {
            let a = a_hi * S::from_usize_lossy(k) / S::from_usize_lossy(n_table - 1);
            flow(a).map(|h| (a, h))
        })
        .collect::<Result<_>>()?;
    if table.windows(2).any(|w| !(w[1].1 > w[0].1)) {
        return Err(LabError::Range(format!("h({t_in_period}; a) is not strictly increasing")));
    }
    let tol = S::lit(1e-10);
    let values = u
        .values
        .par_iter()
        .map(|&target| {
            let target = target.max(S::zero());
            if target == S::zero() {
                return Ok(S::zero());
            }
            let k = table.partition_point(|&(_, h)| h < target).clamp(1, n_table - 1);
            let (mut lo, mut f_lo) = (table[k - 1].0, table[k - 1].1 - target);
            let (mut hi, mut f_hi) = (table[k].0, table[k].1 - target);
            if f_hi == S::zero() {
                return Ok(hi);
            }
            let mut side = 0i8;
            for _ in 0..200 {
                if hi - lo <= tol {
                    break;
                }
                let mut mid = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
                if !(mid > lo && mid < hi) {
                    mid = (lo + hi) * S::half();
                }
                let f_mid = flow(mid)? - target;
                if f_mid == S::zero() {
                    return Ok(mid);
                }
                if f_mid < S::zero() {
                    lo = mid;
                    f_lo = f_mid;
                    if side == -1 {
                        f_hi = f_hi * S::half();
                    }
                    side = -1;
                } else {
                    hi = mid;
                    f_hi = f_mid;
                    if side == 1 {
                        f_lo = f_lo * S::half();
                    }
                    side = 1;
                }
                if f_mid.abs() < S::lit(1e-14) {
                    return Ok(mid);
                }
            }
            Ok((lo + hi) * S::half())
        })
        .collect::<Result<_>>()?;
    Ok(Field {
        grid: u.grid,
        values,
        time: u.time,
        support: u.support,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pde::Grid;

    fn profile() -> Field<f64> {
        let grid = Grid::<f64>::symmetric(5.0, 41).unwrap();
        Field::from_fn(grid, |x| 0.9 * (-x * x / 4.0).exp())
    }

    #[test]
    fn identity_at_period_start() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let u = profile();
        assert_eq!(kinetic_change_of_variables(&spec, &u, 0.0, &cfg).unwrap(), u);
    }

    #[test]
    fn trivial_flow_is_identity() {
        let spec = NonlinearitySpec::<f64>::zero(1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let u = profile();
        let v = kinetic_change_of_variables(&spec, &u, 0.4, &cfg).unwrap();
        for (a, b) in u.values.iter().zip(&v.values) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn round_trip_through_the_flow() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.5, 1.0).unwrap();
        let cfg = OdeConfig::for_spec(&spec);
        let u = profile();
        let v = kinetic_change_of_variables(&spec, &u, 0.37, &cfg).unwrap();
        for (&target, &a) in u.values.iter().zip(&v.values) {
            let back = if a == 0.0 { 0.0 } else { integrate_h(&spec, a, 0.37, &cfg).unwrap().end_value };
            assert!((back - target).abs() < 1e-9, "{back} vs {target}");
        }
    }

    #[test]
    fn unreachable_values_are_a_range_error() {
        let spec = NonlinearitySpec::<f64>::bistable(0.3, 0.0, 1.0).unwrap();
        let cfg = OdeConfig { u_max: 1.5, ..OdeConfig::for_spec(&spec) };
        let grid = Grid::<f64>::symmetric(1.0, 5).unwrap();
        let u = Field::from_fn(grid, |_| 3.0);
        assert!(matches!(
            kinetic_change_of_variables(&spec, &u, 0.5, &cfg),
            Err(LabError::Range(_))
        ));
    }
}
