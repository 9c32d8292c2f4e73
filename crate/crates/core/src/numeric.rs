//! Small scalar tools shared by the pipelines: bisection, Richardson
//! extrapolation, cubic splines and finite differences.

use num_complex::Complex64;

/// Bisection for a sign change of `f` on `[lo, hi]`, where `f(lo) < 0 < f(hi)`
/// (the orientation is given by the caller through `f`). Stops when the
/// bracket is shorter than `tol`.
pub fn bisect<E, F>(mut lo: f64, mut hi: f64, tol: f64, mut f: F) -> Result<f64, E>
where
    F: FnMut(f64) -> Result<f64, E>,
{
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Richardson tableau for samples taken at `eps_k = eps_0 / 2^k`, eliminating
/// the error terms `eps^1 .. eps^order`. Returns the final extrapolant and
/// the difference to the previous row's extrapolant of the same order.
pub fn richardson_halving(values: &[f64], order: usize) -> (f64, f64) {
    assert!(values.len() > order + 1, "ladder too short for the order");
    let n = values.len();
    let mut table = vec![vec![0.0; order + 1]; n];
    for (k, &v) in values.iter().enumerate() {
        table[k][0] = v;
        for j in 1..=order.min(k) {
            let factor = (1u64 << j) as f64;
            table[k][j] = table[k][j - 1] + (table[k][j - 1] - table[k - 1][j - 1]) / (factor - 1.0);
        }
    }
    let best = table[n - 1][order];
    let prev = table[n - 2][order];
    (best, (best - prev).abs())
}

/// Natural cubic spline through `(xs, ys)` with strictly increasing `xs`.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(xs: &[f64], ys: &[f64]) -> Self {
        assert_eq!(xs.len(), ys.len());
        let n = xs.len();
        assert!(n >= 2);
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for the interior second derivatives
            let mut diag = vec![0.0; n];
            let mut rhs = vec![0.0; n];
            let mut upper = vec![0.0; n];
            for i in 1..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let h1 = xs[i + 1] - xs[i];
                diag[i] = 2.0 * (h0 + h1);
                upper[i] = h1;
                rhs[i] = 6.0 * ((ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0);
            }
            for i in 2..n - 1 {
                let h0 = xs[i] - xs[i - 1];
                let w = h0 / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[n - 2] = rhs[n - 2] / diag[n - 2];
            for i in (1..n - 2).rev() {
                m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
            }
        }
        Self {
            xs: xs.to_vec(),
            ys: ys.to_vec(),
            m,
        }
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        let i = match self.xs.partition_point(|&v| v <= x) {
            0 => 0,
            k if k >= n => n - 2,
            k => k - 1,
        };
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// Fourth-order finite-difference first and second derivatives of samples
/// on a uniform grid with spacing `h` (one-sided stencils at the ends).
pub fn uniform_derivatives(y: &[f64], h: f64) -> (Vec<f64>, Vec<f64>) {
    let n = y.len();
    assert!(n >= 6, "need at least six samples");
    let mut d1 = vec![0.0; n];
    let mut d2 = vec![0.0; n];
    for i in 0..n {
        if i >= 2 && i + 2 < n {
            d1[i] = (y[i - 2] - 8.0 * y[i - 1] + 8.0 * y[i + 1] - y[i + 2]) / (12.0 * h);
            d2[i] = (-y[i - 2] + 16.0 * y[i - 1] - 30.0 * y[i] + 16.0 * y[i + 1] - y[i + 2])
                / (12.0 * h * h);
        } else if i < 2 {
            let s = &y[i..i + 6];
            d1[i] = (-25.0 * s[0] + 48.0 * s[1] - 36.0 * s[2] + 16.0 * s[3] - 3.0 * s[4])
                / (12.0 * h);
            d2[i] = (45.0 * s[0] - 154.0 * s[1] + 214.0 * s[2] - 156.0 * s[3] + 61.0 * s[4]
                - 10.0 * s[5])
                / (12.0 * h * h);
        } else {
            let s = &y[i - 5..=i];
            d1[i] = (25.0 * s[5] - 48.0 * s[4] + 36.0 * s[3] - 16.0 * s[2] + 3.0 * s[1])
                / (12.0 * h);
            d2[i] = (45.0 * s[5] - 154.0 * s[4] + 214.0 * s[3] - 156.0 * s[2] + 61.0 * s[1]
                - 10.0 * s[0])
                / (12.0 * h * h);
        }
    }
    (d1, d2)
}

/// Five-point central difference for a complex-analytic function, step
/// `1e-5 * (1 + |z|)` along the real direction.
pub fn complex_derivative<E, F>(mut f: F, z: Complex64) -> Result<Complex64, E>
where
    F: FnMut(Complex64) -> Result<Complex64, E>,
{
    let h = 1e-5 * (1.0 + z.norm());
    let hc = Complex64::new(h, 0.0);
    let fm2 = f(z - 2.0 * hc)?;
    let fm1 = f(z - hc)?;
    let fp1 = f(z + hc)?;
    let fp2 = f(z + 2.0 * hc)?;
    Ok((fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h))
}

/// `n` points on `[a, b]`, clustered toward both ends: `a + (b-a)(1-cos)/2`.
pub fn cosine_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = std::f64::consts::PI * j as f64 / (n - 1) as f64;
            a + (b - a) * 0.5 * (1.0 - th.cos())
        })
        .collect()
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|j| a + (b - a) * j as f64 / (n - 1) as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn richardson_removes_polynomial_error() {
        // v(eps) = 2 + 3 eps - eps^2 + 0.5 eps^3 + 7 eps^4 is recovered exactly
        let ladder: Vec<f64> = (0..9).map(|k| 1e-2 / f64::powi(2.0, k)).collect();
        let vals: Vec<f64> = ladder
            .iter()
            .map(|e| 2.0 + 3.0 * e - e * e + 0.5 * e.powi(3) + 7.0 * e.powi(4))
            .collect();
        let (v, err) = richardson_halving(&vals, 4);
        assert!((v - 2.0).abs() < 1e-13);
        assert!(err < 1e-13);
    }

    #[test]
    fn spline_reproduces_smooth_function() {
        let xs = linspace(0.0, 3.0, 301);
        let ys: Vec<f64> = xs.iter().map(|x| x.sin()).collect();
        let s = CubicSpline::new(&xs, &ys);
        for x in linspace(0.2, 2.8, 57) {
            assert!((s.eval(x) - x.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn derivative_stencils_are_fourth_order() {
        let h = 0.01;
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * h).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let (d1, d2) = uniform_derivatives(&ys, h);
        for i in 0..50 {
            assert!((d1[i] - ys[i]).abs() < 1e-7, "d1 at {i}");
            assert!((d2[i] - ys[i]).abs() < 1e-5, "d2 at {i}");
        }
    }

    #[test]
    fn bisection_finds_root() {
        let r: Result<f64, ()> = bisect(0.0, 2.0, 1e-14, |x| Ok(x * x - 2.0));
        assert!((r.unwrap() - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn complex_fd_matches_analytic() {
        let z = Complex64::new(0.3, 1.1);
        let d: Result<Complex64, ()> = complex_derivative(|w| Ok(w * w * w), z);
        assert!((d.unwrap() - 3.0 * z * z).norm() < 1e-9);
    }
}
