//! Tridiagonal solves and the small quadrature / root helpers used across the crate.

use crate::scalar::Scalar;

/// Solves `a_i x_{i-1} + b_i x_i + c_i x_{i+1} = d_i` in place in `d`.
///
/// `a[0]` and `c[n-1]` are ignored. The forward elimination has no pivoting, so the
/// matrix must be diagonally dominant (all systems assembled in this crate are).
pub fn solve_tridiagonal<S: Scalar>(a: &[S], b: &[S], c: &[S], d: &mut [S]) {
    let n = d.len();
    assert!(a.len() == n && b.len() == n && c.len() == n, "tridiagonal size mismatch");
    if n == 0 {
        return;
    }
    let mut cp = vec![S::zero(); n];
    cp[0] = c[0] / b[0];
    d[0] /= b[0];
    for i in 1..n {
        let m = b[i] - a[i] * cp[i - 1];
        cp[i] = c[i] / m;
        d[i] = (d[i] - a[i] * d[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        let next = d[i + 1];
        d[i] -= cp[i] * next;
    }
}

/// Pre-factored constant-coefficient tridiagonal matrix, reused for every time step.
#[derive(Debug, Clone)]
pub struct TridiagonalLu<S> {
    sub: Vec<S>,
    cp: Vec<S>,
    inv_m: Vec<S>,
}

impl<S: Scalar> TridiagonalLu<S> {
    pub fn new(a: &[S], b: &[S], c: &[S]) -> Self {
        let n = b.len();
        assert!(a.len() == n && c.len() == n && n > 0, "tridiagonal size mismatch");
        let mut cp = vec![S::zero(); n];
        let mut inv_m = vec![S::zero(); n];
        inv_m[0] = S::one() / b[0];
        cp[0] = c[0] * inv_m[0];
        for i in 1..n {
            let m = b[i] - a[i] * cp[i - 1];
            inv_m[i] = S::one() / m;
            cp[i] = c[i] * inv_m[i];
        }
        Self {
            sub: a.to_vec(),
            cp,
            inv_m,
        }
    }

    pub fn len(&self) -> usize {
        self.cp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cp.is_empty()
    }

    pub fn solve_in_place(&self, d: &mut [S]) {
        let n = self.len();
        assert_eq!(d.len(), n);
        d[0] *= self.inv_m[0];
        for i in 1..n {
            d[i] = (d[i] - self.sub[i] * d[i - 1]) * self.inv_m[i];
        }
        for i in (0..n - 1).rev() {
            let next = d[i + 1];
            d[i] -= self.cp[i] * next;
        }
    }
}

/// Composite Simpson rule on uniform samples; falls back to a trapezoid on the last
/// interval when the number of intervals is odd.
pub fn simpson<S: Scalar>(values: &[S], h: S) -> S {
    let n = values.len();
    if n < 2 {
        return S::zero();
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut acc = S::zero();
    let mut i = 0;
    while i < even {
        acc += values[i] + S::lit(4.0) * values[i + 1] + values[i + 2];
        i += 2;
    }
    let mut total = acc * h / S::lit(3.0);
    if even < intervals {
        total += (values[n - 2] + values[n - 1]) * h * S::half();
    }
    total
}

/// Composite trapezoid rule on uniform samples.
pub fn trapezoid<S: Scalar>(values: &[S], h: S) -> S {
    let n = values.len();
    if n < 2 {
        return S::zero();
    }
    let inner: S = values[1..n - 1].iter().copied().sum();
    (inner + (values[0] + values[n - 1]) * S::half()) * h
}

/// Bisection for a sign change of `f` on `[lo, hi]`; `f_lo` is `f(lo)`.
///
/// Stops when the bracket is narrower than `tol` or after `max_iter` halvings and
/// returns the midpoint. Errors from `f` are forwarded.
pub fn bisect<S, E, F>(mut lo: S, mut hi: S, mut f_lo: S, tol: S, max_iter: usize, mut f: F) -> Result<S, E>
where
    S: Scalar,
    F: FnMut(S) -> Result<S, E>,
{
    for _ in 0..max_iter {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = (lo + hi) * S::half();
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        let f_mid = f(mid)?;
        if f_mid == S::zero() {
            return Ok(mid);
        }
        if (f_mid > S::zero()) == (f_lo > S::zero()) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * S::half())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dense_solve(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> Vec<f64> {
        // Gaussian elimination with partial pivoting on the dense matrix.
        let n = d.len();
        let mut m = vec![vec![0.0; n + 1]; n];
        for i in 0..n {
            m[i][i] = b[i];
            if i > 0 {
                m[i][i - 1] = a[i];
            }
            if i + 1 < n {
                m[i][i + 1] = c[i];
            }
            m[i][n] = d[i];
        }
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
                .unwrap();
            m.swap(col, piv);
            for row in col + 1..n {
                let factor = m[row][col] / m[col][col];
                for k in col..=n {
                    m[row][k] -= factor * m[col][k];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| m[i][k] * x[k]).sum();
            x[i] = (m[i][n] - s) / m[i][i];
        }
        x
    }

    proptest! {
        #[test]
        fn thomas_matches_dense_elimination(
            rows in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -5.0f64..5.0), 3..40)
        ) {
            let n = rows.len();
            let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let c: Vec<f64> = rows.iter().map(|r| r.1).collect();
            let b: Vec<f64> = (0..n).map(|i| 2.5 + a[i].abs() + c[i].abs()).collect();
            let d: Vec<f64> = rows.iter().map(|r| r.2).collect();
            let expected = dense_solve(&a, &b, &c, &d);
            let mut x = d.clone();
            solve_tridiagonal(&a, &b, &c, &mut x);
            let mut y = d.clone();
            TridiagonalLu::new(&a, &b, &c).solve_in_place(&mut y);
            for i in 0..n {
                prop_assert!((x[i] - expected[i]).abs() < 1e-10);
                prop_assert!((y[i] - expected[i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_precision_solve() {
        let a = [0.0f32, -1.0, -1.0, -1.0];
        let b = [4.0f32; 4];
        let c = [-1.0f32, -1.0, -1.0, 0.0];
        let mut d = [3.0f32, 2.0, 2.0, 3.0];
        solve_tridiagonal(&a, &b, &c, &mut d);
        for v in d {
            assert!((v - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let v: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&v, h) - 0.25).abs() < 1e-14);
        assert!((trapezoid(&[1.0f64, 1.0, 1.0], 0.5) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bisection_finds_sqrt_two() {
        let r: Result<f64, ()> = bisect(0.0, 2.0, -2.0, 1e-12, 200, |x| Ok(x * x - 2.0));
        assert!((r.unwrap() - 2f64.sqrt()).abs() < 1e-11);
    }
}
