use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..(n + 1) / 2 {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre rule: `panels` equal panels on [a, b], `order` nodes each.
pub fn composite(a: f64, b: f64, panels: usize, order: usize) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut xs = Vec::with_capacity(panels * order);
    let mut ws = Vec::with_capacity(panels * order);
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for (x, w) in gx.iter().zip(&gw) {
            xs.push(lo + 0.5 * h * (x + 1.0));
            ws.push(0.5 * h * w);
        }
    }
    (xs, ws)
}

/// Gauss–Legendre rule mapped to [a, b].
pub fn mapped(a: f64, b: f64, order: usize) -> (Vec<f64>, Vec<f64>) {
    composite(a, b, 1, order)
}

/// Chebyshev extrema cos(pi k / n), k = 0..=n, mapped to [a, b].
pub fn cheb_points(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| 0.5 * (a + b) + 0.5 * (b - a) * (PI * k as f64 / n as f64).cos()).collect()
}

/// Chebyshev interpolant on [a, b] built from values at `cheb_points(a, b, n)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChebSeries {
    pub a: f64,
    pub b: f64,
    pub coef: Vec<C64>,
}

impl ChebSeries {
    pub fn from_values(a: f64, b: f64, vals: &[C64]) -> Self {
        let n = vals.len() - 1;
        if n == 0 {
            return ChebSeries { a, b, coef: vals.to_vec() };
        }
        let coef = (0..=n)
            .map(|j| {
                let mut s = C64::new(0.0, 0.0);
                for (k, v) in vals.iter().enumerate() {
                    let w = if k == 0 || k == n { 0.5 } else { 1.0 };
                    s += v * (w * (PI * (j * k) as f64 / n as f64).cos());
                }
                let w = if j == 0 || j == n { 0.5 } else { 1.0 };
                s * (2.0 * w / n as f64)
            })
            .collect();
        ChebSeries { a, b, coef }
    }

    fn local(&self, x: f64) -> f64 {
        if self.b == self.a {
            0.0
        } else {
            (2.0 * x - self.a - self.b) / (self.b - self.a)
        }
    }

    fn clenshaw(coef: &[C64], t: f64) -> C64 {
        let (mut b1, mut b2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for c in coef.iter().skip(1).rev() {
            let b0 = c + 2.0 * t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        coef[0] + t * b1 - b2
    }

    pub fn eval(&self, x: f64) -> C64 {
        Self::clenshaw(&self.coef, self.local(x))
    }

    /// \int_{x0}^{x1} of the interpolant.
    pub fn integral(&self, x0: f64, x1: f64) -> C64 {
        let n = self.coef.len();
        let at = |k: usize| if k < n { self.coef[k] } else { C64::new(0.0, 0.0) };
        let mut anti = vec![C64::new(0.0, 0.0); n + 1];
        for (k, slot) in anti.iter_mut().enumerate().skip(1) {
            let prev = if k == 1 { 2.0 * at(0) } else { at(k - 1) };
            *slot = (prev - at(k + 1)) / (2.0 * k as f64);
        }
        let half = 0.5 * (self.b - self.a);
        (Self::clenshaw(&anti, self.local(x1)) - Self::clenshaw(&anti, self.local(x0))) * half
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn weights_sum_to_two() {
        for n in 1..40 {
            let (_, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn twenty_point_rule_matches_tabulated_node() {
        let (x, _) = gauss_legendre(20);
        assert!((x[19] - 0.993_128_599_185_094_9).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn exact_for_polynomials_up_to_degree_2n_minus_1(n in 1usize..25, k in 0usize..48) {
            prop_assume!(k < 2 * n);
            let (x, w) = gauss_legendre(n);
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(k as i32)).sum();
            let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
            prop_assert!((q - exact).abs() < 1e-13);
        }
    }
}

#[cfg(test)]
mod cheb_tests {
    use super::*;

    #[test]
    fn chebyshev_integral_of_exponential() {
        let (a, b) = (-0.3, 0.7);
        for n in [16, 24] {
            let xs = cheb_points(a, b, n);
            let vals: Vec<C64> = xs.iter().map(|&x| C64::new(0.0, 2.0 * x).exp()).collect();
            let s = ChebSeries::from_values(a, b, &vals);
            let want = (C64::new(0.0, 2.0 * 0.5).exp() - C64::new(0.0, 2.0 * -0.1).exp()) / C64::new(0.0, 2.0);
            assert!((s.integral(-0.1, 0.5) - want).norm() < 1e-14);
            assert!((s.eval(0.123) - C64::new(0.0, 0.246).exp()).norm() < 1e-14);
        }
    }

    #[test]
    fn chebyshev_points_nest_under_doubling() {
        let coarse = cheb_points(0.0, 1.0, 4);
        let fine = cheb_points(0.0, 1.0, 8);
        for (k, x) in coarse.iter().enumerate() {
            assert_eq!(*x, fine[2 * k]);
        }
    }
}
