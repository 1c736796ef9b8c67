//! Cubic spline interpolation on equispaced nodes, natural or periodic
//! boundary. Backs the tabulated potential families.

use crate::scalar::{rf, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline<F: Real> {
    x0: F,
    h: F,
    values: Vec<F>,
    /// Second derivatives at the nodes.
    m: Vec<F>,
    periodic: bool,
}

/// Solve a tridiagonal system in place (Thomas algorithm).
fn solve_tridiag<F: Real>(sub: &[F], diag: &[F], sup: &[F], rhs: &[F]) -> Vec<F> {
    let n = diag.len();
    let mut c = vec![F::zero(); n];
    let mut d = vec![F::zero(); n];
    c[0] = sup[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - sub[i] * c[i - 1];
        c[i] = if i + 1 < n { sup[i] / denom } else { F::zero() };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / denom;
    }
    let mut x = vec![F::zero(); n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

impl<F: Real> CubicSpline<F> {
    /// Natural spline through `values` at nodes `x0 + i h`.
    pub fn natural(x0: F, h: F, values: Vec<F>) -> Self {
        let n = values.len();
        assert!(n >= 3, "need at least 3 nodes");
        let mut m = vec![F::zero(); n];
        if n > 2 {
            let k = n - 2;
            let sub = vec![F::one(); k];
            let diag = vec![rf::<F>(4.0); k];
            let sup = vec![F::one(); k];
            let six = rf::<F>(6.0);
            let rhs: Vec<F> = (1..n - 1)
                .map(|i| six * (values[i - 1] - rf::<F>(2.0) * values[i] + values[i + 1]) / (h * h))
                .collect();
            let sol = solve_tridiag(&sub, &diag, &sup, &rhs);
            m[1..n - 1].copy_from_slice(&sol);
        }
        Self {
            x0,
            h,
            values,
            m,
            periodic: false,
        }
    }

    /// Periodic spline: `values[i]` at `x0 + i h`, period `values.len() * h`.
    pub fn periodic(x0: F, h: F, values: Vec<F>) -> Self {
        let n = values.len();
        assert!(n >= 3, "need at least 3 nodes");
        let six = rf::<F>(6.0);
        let rhs: Vec<F> = (0..n)
            .map(|i| {
                let prev = values[(i + n - 1) % n];
                let next = values[(i + 1) % n];
                six * (prev - rf::<F>(2.0) * values[i] + next) / (h * h)
            })
            .collect();
        // Cyclic tridiagonal (1, 4, 1) solved by Sherman-Morrison.
        let gamma = -rf::<F>(4.0);
        let mut diag = vec![rf::<F>(4.0); n];
        diag[0] = diag[0] - gamma;
        diag[n - 1] = diag[n - 1] - F::one() * F::one() / gamma;
        let sub = vec![F::one(); n];
        let sup = vec![F::one(); n];
        let y = solve_tridiag(&sub, &diag, &sup, &rhs);
        let mut u = vec![F::zero(); n];
        u[0] = gamma;
        u[n - 1] = F::one();
        let z = solve_tridiag(&sub, &diag, &sup, &u);
        let fact = (y[0] + y[n - 1] / gamma) / (F::one() + z[0] + z[n - 1] / gamma);
        let m: Vec<F> = y.iter().zip(z.iter()).map(|(yi, zi)| *yi - fact * *zi).collect();
        Self {
            x0,
            h,
            values,
            m,
            periodic: true,
        }
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    pub fn node_count(&self) -> usize {
        self.values.len()
    }

    fn locate(&self, x: F) -> (usize, usize, F) {
        let n = self.values.len();
        if self.periodic {
            let period = self.h * rf(n as f64);
            let mut t = (x - self.x0) % period;
            if t < F::zero() {
                t = t + period;
            }
            let mut i = (t / self.h).floor().to_usize().unwrap_or(0);
            if i >= n {
                i = n - 1;
            }
            (i, (i + 1) % n, t - rf::<F>(i as f64) * self.h)
        } else {
            let t = x - self.x0;
            let mut i = (t / self.h).floor().to_isize().unwrap_or(0);
            if i < 0 {
                i = 0;
            }
            if i as usize >= n - 1 {
                i = (n - 2) as isize;
            }
            let i = i as usize;
            (i, i + 1, t - rf::<F>(i as f64) * self.h)
        }
    }

    /// Interpolated value; clamped splines extrapolate linearly with the
    /// boundary slope.
    pub fn value(&self, x: F) -> F {
        let n = self.values.len();
        if !self.periodic {
            let xe = self.x0 + self.h * rf((n - 1) as f64);
            if x < self.x0 {
                return self.values[0] + self.derivative(self.x0) * (x - self.x0);
            }
            if x > xe {
                return self.values[n - 1] + self.derivative(xe) * (x - xe);
            }
        }
        let (i, j, t) = self.locate(x);
        let h = self.h;
        let six = rf::<F>(6.0);
        let a = h - t;
        self.m[i] * a * a * a / (six * h)
            + self.m[j] * t * t * t / (six * h)
            + (self.values[i] - self.m[i] * h * h / six) * a / h
            + (self.values[j] - self.m[j] * h * h / six) * t / h
    }

    pub fn derivative(&self, x: F) -> F {
        let n = self.values.len();
        let (i, j, t) = if !self.periodic {
            let xe = self.x0 + self.h * rf((n - 1) as f64);
            let xc = x.max(self.x0).min(xe);
            self.locate(xc)
        } else {
            self.locate(x)
        };
        let h = self.h;
        let six = rf::<F>(6.0);
        let a = h - t;
        -self.m[i] * a * a / (rf::<F>(2.0) * h)
            + self.m[j] * t * t / (rf::<F>(2.0) * h)
            + (self.values[j] - self.values[i]) / h
            - (self.m[j] - self.m[i]) * h / six
    }

    /// S'' is piecewise linear between node values, so node extrema bound it.
    pub fn min_second_derivative(&self) -> F {
        self.m.iter().copied().fold(F::infinity(), |a, b| a.min(b))
    }

    pub fn second_derivative_range(&self) -> (F, F) {
        let lo = self.min_second_derivative();
        let hi = self
            .m
            .iter()
            .copied()
            .fold(F::neg_infinity(), |a, b| a.max(b));
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn natural_reproduces_parabola_interior() {
        let n = 65;
        let h = 4.0 / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|i| (-2.0 + i as f64 * h).powi(2)).collect();
        let sp = CubicSpline::natural(-2.0, h, values);
        for i in 0..40 {
            let x = -1.5 + i as f64 * 3.0 / 40.0;
            assert_abs_diff_eq!(sp.value(x), x * x, epsilon = 1e-3);
            assert_abs_diff_eq!(sp.derivative(x), 2.0 * x, epsilon = 1e-2);
        }
    }

    #[test]
    fn periodic_reproduces_cosine() {
        let n = 64;
        let h = 1.0 / n as f64;
        let values: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::TAU * i as f64 * h).cos())
            .collect();
        let sp = CubicSpline::periodic(0.0, h, values);
        for i in 0..97 {
            let x = i as f64 / 97.0 * 3.0 - 1.0; // also tests wrapping
            let exact = (std::f64::consts::TAU * x).cos();
            assert_abs_diff_eq!(sp.value(x), exact, epsilon = 1e-5);
            let dexact = -std::f64::consts::TAU * (std::f64::consts::TAU * x).sin();
            assert_abs_diff_eq!(sp.derivative(x), dexact, epsilon = 1e-3);
        }
    }

    #[test]
    fn clamped_linear_extrapolation() {
        let values: Vec<f64> = (0..11).map(|i| i as f64).collect(); // y = x
        let sp = CubicSpline::natural(0.0, 1.0, values);
        assert_abs_diff_eq!(sp.value(-2.0), -2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(sp.value(12.0), 12.0, epsilon = 1e-9);
    }
}
