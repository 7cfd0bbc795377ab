//! Monotone piecewise cubic Hermite interpolation (Fritsch-Carlson slopes)
//! and Gauss-Legendre integration of the interpolant.

use std::sync::OnceLock;

use crate::{Error, Result};

pub const GAUSS_NODES: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

fn same_sign(a: f64, b: f64) -> bool {
    (a > 0.0 && b > 0.0) || (a < 0.0 && b < 0.0)
}

/// Three-point end slope, clipped to keep the end piece shape preserving.
fn end_slope(h0: f64, h1: f64, m0: f64, m1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * m0 - h0 * m1) / (h0 + h1);
    if !same_sign(d, m0) {
        0.0
    } else if !same_sign(m0, m1) && d.abs() > 3.0 * m0.abs() {
        3.0 * m0
    } else {
        d
    }
}

impl Pchip {
    pub fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::Data("interpolation needs at least two (x, y) pairs".into()));
        }
        if x.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::Data("interpolation data must be finite".into()));
        }
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data(
                "interpolation abscissae must be strictly increasing".into(),
            ));
        }
        let n = x.len();
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let m: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d[0] = m[0];
            d[1] = m[0];
        } else {
            for k in 1..n - 1 {
                if same_sign(m[k - 1], m[k]) {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    d[k] = (w1 + w2) / (w1 / m[k - 1] + w2 / m[k]);
                }
            }
            d[0] = end_slope(h[0], h[1], m[0], m[1]);
            d[n - 1] = end_slope(h[n - 2], h[n - 3], m[n - 2], m[n - 3]);
        }
        Ok(Self {
            x: x.to_vec(),
            y: y.to_vec(),
            d,
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], self.x[self.x.len() - 1])
    }

    fn piece(&self, v: f64) -> usize {
        let last = self.x.len() - 2;
        match self.x.partition_point(|&xi| xi <= v) {
            0 => 0,
            p => (p - 1).min(last),
        }
    }

    fn eval_piece(&self, k: usize, v: f64) -> f64 {
        let h = self.x[k + 1] - self.x[k];
        let t = (v - self.x[k]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * self.y[k]
            + (t3 - 2.0 * t2 + t) * h * self.d[k]
            + (-2.0 * t3 + 3.0 * t2) * self.y[k + 1]
            + (t3 - t2) * h * self.d[k + 1]
    }

    /// Value at `v`; outside the data range the end pieces are extended.
    pub fn eval(&self, v: f64) -> f64 {
        self.eval_piece(self.piece(v), v)
    }

    /// Integral over `[a, b]` with `GAUSS_NODES`-point Gauss-Legendre
    /// quadrature on every piece the interval touches.
    pub fn integrate(&self, a: f64, b: f64) -> f64 {
        if b < a {
            return -self.integrate(b, a);
        }
        let (nodes, weights) = gauss_legendre();
        let mut total = 0.0;
        for k in self.piece(a)..=self.piece(b) {
            let lo = a.max(if k == 0 { f64::NEG_INFINITY } else { self.x[k] });
            let hi = b.min(if k + 2 == self.x.len() {
                f64::INFINITY
            } else {
                self.x[k + 1]
            });
            if hi <= lo {
                continue;
            }
            let half = 0.5 * (hi - lo);
            let mid = 0.5 * (hi + lo);
            let s: f64 = nodes
                .iter()
                .zip(weights)
                .map(|(&z, &w)| w * self.eval_piece(k, mid + half * z))
                .sum();
            total += half * s;
        }
        total
    }
}

/// Nodes and weights on [-1, 1], computed once by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_NODES;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, 0.0);
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                let dz = p0 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            x[i] = -z;
            x[n - 1 - i] = z;
            w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
            w[n - 1 - i] = w[i];
        }
        (x, w)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials() {
        let (x, w) = gauss_legendre();
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13);
        let p: f64 = x.iter().zip(w).map(|(z, w)| w * z.powi(10)).sum();
        assert!((p - 2.0 / 11.0).abs() < 1e-13);
    }

    #[test]
    fn passes_through_anchors() {
        let x = [0.0, 1.0, 2.5, 3.0, 7.0];
        let y = [1.0, 3.0, 3.5, 10.0, 11.0];
        let p = Pchip::new(&x, &y).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(p.eval(*a), *b);
        }
    }

    #[test]
    fn monotone_data_stays_monotone() {
        let x = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0, 0.1, 5.0, 5.1, 5.1, 9.0];
        let p = Pchip::new(&x, &y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=5000 {
            let v = p.eval(i as f64 / 1000.0);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn linear_data_is_reproduced() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let p = Pchip::new(&x, &y).unwrap();
        assert!((p.eval(3.0) - 8.0).abs() < 1e-12);
        // Integral of 3x - 1 over [1.5, 7] = 1.5 (49 - 2.25) - 5.5
        assert!((p.integrate(1.5, 7.0) - (1.5 * (49.0 - 2.25) - 5.5)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_abscissae() {
        assert!(Pchip::new(&[0.0, 0.0], &[1.0, 2.0]).is_err());
        assert!(Pchip::new(&[0.0], &[1.0]).is_err());
    }
}
