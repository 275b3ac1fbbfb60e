//! Natural cubic spline on a strictly increasing grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 3 || y.len() != n {
            return Err(Error::invalid("spline needs at least 3 knots and matching lengths"));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("spline knots must be strictly increasing with finite values"));
        }
        // tridiagonal solve for the natural spline
        let mut m = vec![0.0; n];
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            let a = h0;
            let b = 2.0 * (h0 + h1);
            let cc = h1;
            let r = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
            let denom = b - a * c[i - 1];
            c[i] = cc / denom;
            d[i] = (r - a * d[i - 1]) / denom;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - c[i] * m[i + 1];
        }
        Ok(CubicSpline { x, y, m })
    }

    /// Tabulates `f` on `n` uniform knots over `[lo, hi]`.
    pub fn tabulate(lo: f64, hi: f64, n: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        if n < 3 || !(hi > lo) {
            return Err(Error::invalid("tabulation needs n >= 3 and hi > lo"));
        }
        let x: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
        let y = x.iter().map(|&v| f(v)).collect::<Result<Vec<_>>>()?;
        Self::new(x, y)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn segment(&self, t: f64) -> usize {
        match self.x.partition_point(|&v| v <= t) {
            0 => 0,
            k if k >= self.x.len() => self.x.len() - 2,
            k => k - 1,
        }
    }

    /// Value at `t`; linear extrapolation with the end slopes outside the knots.
    pub fn eval(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain();
        if t < lo {
            return self.y[0] + (t - lo) * self.derivative(lo);
        }
        if t > hi {
            return *self.y.last().unwrap() + (t - hi) * self.derivative(hi);
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        a * self.y[i] + b * self.y[i + 1] + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    pub fn derivative(&self, t: f64) -> f64 {
        let (lo, hi) = self.domain();
        let tc = t.clamp(lo, hi);
        let i = self.segment(tc);
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - tc) / h;
        let b = (tc - self.x[i]) / h;
        (self.y[i + 1] - self.y[i]) / h - (3.0 * a * a - 1.0) * h * self.m[i] / 6.0
            + (3.0 * b * b - 1.0) * h * self.m[i + 1] / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolates_knots_and_reproduces_lines() {
        let s = CubicSpline::new(vec![0.0, 1.0, 2.5, 4.0], vec![1.0, 3.0, 6.0, 9.0]).unwrap();
        assert!((s.eval(2.5) - 6.0).abs() < 1e-14);
        let line = CubicSpline::tabulate(-1.0, 1.0, 5, |x| Ok(2.0 * x - 1.0)).unwrap();
        for &t in &[-0.9, 0.13, 0.77, 1.5] {
            assert!((line.eval(t) - (2.0 * t - 1.0)).abs() < 1e-13);
            assert!((line.derivative(t) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_for_smooth_functions() {
        let s = CubicSpline::tabulate(0.0, 3.0, 301, |x| Ok(x.sin())).unwrap();
        for k in 0..50 {
            let t = 0.1 + 0.05 * k as f64;
            assert!((s.eval(t) - t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_unsorted() {
        assert!(CubicSpline::new(vec![0.0, 0.0, 1.0], vec![0.0; 3]).is_err());
    }
}
