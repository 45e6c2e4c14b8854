use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

/// Uniform periodic grid x_j = x0 + j L / M, j = 0..M.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PeriodicGrid {
    pub x0: f64,
    pub period: f64,
    pub m: usize,
}

impl PeriodicGrid {
    pub fn new(x0: f64, period: f64, m: usize) -> Self {
        PeriodicGrid { x0, period, m }
    }

    pub fn h(&self) -> f64 {
        self.period / self.m as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x0 + j as f64 * self.h()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.x(j)).collect()
    }

    /// Momentum 2 pi n / L.
    pub fn p(&self, n: i64) -> f64 {
        2.0 * PI * n as f64 / self.period
    }

    /// Signed mode number stored at FFT slot k.
    pub fn mode(&self, k: usize) -> i64 {
        if k <= self.m / 2 {
            k as i64
        } else {
            k as i64 - self.m as i64
        }
    }

    pub fn slot(&self, n: i64) -> usize {
        n.rem_euclid(self.m as i64) as usize
    }
}

/// Forward transform: out_k = sum_j v_j e^{-2 pi i j k / M}.
pub fn fft(v: &mut [C64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(v.len()).process(v);
}

/// Normalised inverse: out_k = (1/M) sum_j v_j e^{2 pi i j k / M}.
pub fn ifft_norm(v: &mut [C64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(v.len()).process(v);
    let s = 1.0 / v.len() as f64;
    v.iter_mut().for_each(|z| *z *= s);
}

pub fn to_complex(v: &[f64]) -> Vec<C64> {
    v.iter().map(|&x| C64::new(x, 0.0)).collect()
}

/// Coefficients c_n = (1/L) \int e^{i p_n x} u(x) dx, stored at slot n mod M,
/// so that u(x) = sum_n c_n e^{-i p_n x}.
pub fn modes(grid: &PeriodicGrid, u: &[C64]) -> Vec<C64> {
    let mut c = u.to_vec();
    ifft_norm(&mut c);
    for (k, z) in c.iter_mut().enumerate() {
        let n = grid.mode(k);
        *z *= C64::from_polar(1.0, grid.p(n) * grid.x0);
    }
    c
}

/// Inverse of `modes`: samples u(x_j) = sum_n c_n e^{-i p_n x_j}.
pub fn synthesize(grid: &PeriodicGrid, c: &[C64]) -> Vec<C64> {
    let mut v: Vec<C64> = c
        .iter()
        .enumerate()
        .map(|(k, z)| z * C64::from_polar(1.0, -grid.p(grid.mode(k)) * grid.x0))
        .collect();
    fft(&mut v);
    v
}

/// Spectral derivative of order `order` of periodic samples.
pub fn derivative(grid: &PeriodicGrid, u: &[C64], order: u32) -> Vec<C64> {
    let mut c = u.to_vec();
    fft(&mut c);
    let m = grid.m;
    for (k, z) in c.iter_mut().enumerate() {
        if m % 2 == 0 && k == m / 2 {
            *z = C64::new(0.0, 0.0);
            continue;
        }
        let w = C64::new(0.0, grid.p(grid.mode(k)));
        *z *= w.powu(order);
    }
    ifft_norm(&mut c);
    c
}

pub fn derivative_real(grid: &PeriodicGrid, u: &[f64], order: u32) -> Vec<f64> {
    derivative(grid, &to_complex(u), order).iter().map(|z| z.re).collect()
}

/// Evaluates the trigonometric interpolant with `modes` coefficients (and optional derivative order) at x.
pub fn eval_modes(grid: &PeriodicGrid, c: &[C64], x: f64, order: u32) -> C64 {
    let m = grid.m;
    let mut s = C64::new(0.0, 0.0);
    for (k, z) in c.iter().enumerate() {
        if m % 2 == 0 && k == m / 2 {
            continue;
        }
        let p = grid.p(grid.mode(k));
        s += z * C64::new(0.0, -p).powu(order) * C64::from_polar(1.0, -p * x);
    }
    s
}

/// Ratio of the largest coefficient among the top `frac` of the band to the largest overall.
pub fn tail_ratio(grid: &PeriodicGrid, u: &[C64], frac: f64) -> f64 {
    let mut c = u.to_vec();
    fft(&mut c);
    let kcut = ((grid.m / 2) as f64 * (1.0 - frac)).floor() as i64;
    let mut top: f64 = 0.0;
    let mut all: f64 = 0.0;
    for (k, z) in c.iter().enumerate() {
        let n = grid.mode(k).abs();
        all = all.max(z.norm());
        if n > kcut {
            top = top.max(z.norm());
        }
    }
    if all == 0.0 {
        0.0
    } else {
        top / all
    }
}

/// Periodic trapezoid rule.
pub fn trapezoid(grid: &PeriodicGrid, u: &[C64]) -> C64 {
    u.iter().sum::<C64>() * grid.h()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn derivative_exact_on_fourier_mode() {
        let g = PeriodicGrid::new(-1.3, 5.0, 64);
        let p = g.p(3);
        let u: Vec<C64> = g.points().iter().map(|&x| C64::from_polar(1.0, -p * x)).collect();
        let d = derivative(&g, &u, 3);
        for (j, x) in g.points().iter().enumerate() {
            let exact = C64::new(0.0, -p).powu(3) * C64::from_polar(1.0, -p * x);
            assert!((d[j] - exact).norm() < 1e-10 * p.powi(3));
        }
    }

    #[test]
    fn modes_round_trip() {
        let g = PeriodicGrid::new(0.7, 3.0, 48);
        let u: Vec<C64> = g.points().iter().map(|&x| C64::new((2.0 * PI * x / 3.0).sin().exp(), x.cos())).collect();
        let u = synthesize(&g, &modes(&g, &u.iter().map(|z| C64::new(z.re, 0.0)).collect::<Vec<_>>()));
        let back: Vec<f64> = g.points().iter().map(|&x| (2.0 * PI * x / 3.0).sin().exp()).collect();
        for (a, b) in u.iter().zip(&back) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn mode_coefficient_matches_definition(n in -10i64..10, x0 in -3.0f64..3.0) {
            let g = PeriodicGrid::new(x0, 2.5, 32);
            let p = g.p(n);
            let u: Vec<C64> = g.points().iter().map(|&x| C64::from_polar(1.0, -p * x)).collect();
            let c = modes(&g, &u);
            for k in 0..32 {
                let want = if g.mode(k) == n { 1.0 } else { 0.0 };
                prop_assert!((c[k] - C64::new(want, 0.0)).norm() < 1e-12);
            }
            let y = eval_modes(&g, &c, 0.123, 1);
            let exact = C64::new(0.0, -p) * C64::from_polar(1.0, -p * 0.123);
            prop_assert!((y - exact).norm() < 1e-10);
        }
    }
}
