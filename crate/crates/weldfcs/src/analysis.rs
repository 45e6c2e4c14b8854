use std::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::profile::{BoxMaps, KinkMaps, Mover};
use crate::quad::composite;
use crate::spectral::{derivative, tail_ratio, PeriodicGrid};

/// Default spectral-tail alarm for derivatives.
pub const DERIVATIVE_TAIL_TOL: f64 = 1e-8;

fn check_resolved(grid: &PeriodicGrid, v: &[C64], tol: f64) -> Result<()> {
    let ratio = tail_ratio(grid, v, 0.125);
    if ratio > tol {
        return Err(Error::DerivativeUnresolved { ratio, tol });
    }
    Ok(())
}

/// Schwarzian from samples of the first derivative F' on a periodic grid.
pub fn schwarzian_from_derivative(grid: &PeriodicGrid, d1: &[C64], tol: f64) -> Result<Vec<C64>> {
    check_resolved(grid, d1, tol)?;
    let mean = d1.iter().sum::<C64>() / d1.len() as f64;
    let centred: Vec<C64> = d1.iter().map(|v| v - mean).collect();
    let d2 = derivative(grid, &centred, 1);
    let d3 = derivative(grid, &centred, 2);
    Ok(d1
        .iter()
        .zip(d2.iter().zip(&d3))
        .map(|(a, (b, c))| {
            let r = b / a;
            c / a - 1.5 * r * r
        })
        .collect())
}

/// Schwarzian of a lifted circle map f = x + u with u periodic.
pub fn schwarzian_periodic(grid: &PeriodicGrid, u: &[f64], tol: f64) -> Result<Vec<f64>> {
    let uc: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
    let d1: Vec<C64> = derivative(grid, &uc, 1).iter().map(|z| C64::new(1.0 + z.re, 0.0)).collect();
    Ok(schwarzian_from_derivative(grid, &d1, tol)?.iter().map(|z| z.re).collect())
}

/// Finite-difference weights for derivatives up to `order` at z from nodes `x` (Fornberg).
pub fn fd_weights(z: f64, x: &[f64], order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; order + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Schwarzian of samples f_j on a uniform line grid by `width`-point finite differences,
/// centred in the interior and one-sided near the ends.
pub fn schwarzian_line(h: f64, f: &[f64], width: usize) -> Vec<f64> {
    let n = f.len();
    assert!(n >= width && width >= 5);
    let half = width / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - width);
            let nodes: Vec<f64> = (start..start + width).map(|j| (j as f64 - i as f64) * h).collect();
            let w = fd_weights(0.0, &nodes, 3);
            let d = |k: usize| (0..width).map(|j| w[k][j] * f[start + j]).sum::<f64>();
            let (d1, d2, d3) = (d(1), d(2), d(3));
            d3 / d1 - 1.5 * (d2 / d1) * (d2 / d1)
        })
        .collect()
}

/// \int xi (SX - (2 pi^2 / gamma^2) X'^2) by the periodic trapezoid rule.
pub fn action_integral(grid: &PeriodicGrid, xi: &[f64], xprime: &[C64], sx: &[C64], gamma: f64) -> Result<C64> {
    let edge = xi.len().min(4);
    let scale = xi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let touches = xi[..edge].iter().chain(&xi[xi.len() - edge..]).any(|v| v.abs() > 1e-14 * scale.max(1e-300));
    if scale > 0.0 && touches {
        return Err(Error::SupportClipped);
    }
    let k = 2.0 * PI * PI / (gamma * gamma);
    let s: C64 = xi.iter().zip(xprime.iter().zip(sx)).map(|(x, (d, s))| *x * (s - k * d * d)).sum();
    Ok(s * grid.h())
}

/// \int (beta(x +- vt) - beta(x)) Sh(x) dx over the kink support.
pub fn counterterm_integral(kink: &KinkMaps, mover: Mover, t: f64) -> f64 {
    let p = &kink.profile;
    let (lo, hi) = p.support();
    let shift = mover.sign() * kink.v * t;
    let (xs, ws) = composite(lo, hi, 128, 20);
    xs.iter().zip(&ws).map(|(x, w)| w * (p.beta(x + shift) - p.beta(*x)) * p.sh(*x)).sum()
}

/// (c v / 24 pi) \int (beta(x+) + beta(x-) - 2 beta(x)) Sh(x) dx.
pub fn counterterm_c(kink: &KinkMaps, t: f64, c: f64) -> f64 {
    let total: f64 = Mover::both().iter().map(|&m| counterterm_integral(kink, m, t)).sum();
    c * kink.v / (24.0 * PI) * total
}

/// C_{t,L} - C_{0,L} = (c v / 24 pi) \int_{I_L} (beta_L(x + vt) - beta_L(x)) Sh_L(x) dx.
pub fn counterterm_box(bx: &BoxMaps, t: f64, c: f64) -> f64 {
    let p = &bx.kink.profile;
    let (lo, hi) = p.support();
    let v = bx.v();
    let mut total = 0.0;
    for (a, b) in [(lo, hi), (-hi - bx.l / 2.0, -lo - bx.l / 2.0)] {
        let (xs, ws) = composite(a, b, 128, 20);
        total += xs.iter().zip(&ws).map(|(x, w)| w * (bx.beta(x + v * t) - bx.beta(*x)) * bx.sh(*x)).sum::<f64>();
    }
    c * v / (24.0 * PI) * total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::TemperatureProfile;
    use crate::spectral::to_complex;
    use proptest::prelude::*;

    fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, d: u32) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm), f(rm));
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if d == 0 || (left + right - whole).abs() <= 15.0 * tol {
                return left + right + (left + right - whole) / 15.0;
            }
            rec(f, a, m, fa, flm, fm, left, tol / 2.0, d - 1) + rec(f, m, b, fm, frm, fb, right, tol / 2.0, d - 1)
        }
        rec(f, a, b, fa, fm, fb, whole, tol, depth)
    }

    #[test]
    fn identity_has_zero_schwarzian() {
        let g = PeriodicGrid::new(0.0, 4.0, 64);
        let s = schwarzian_periodic(&g, &vec![0.0; 64], DERIVATIVE_TAIL_TOL).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn mobius_map_has_zero_schwarzian_on_samples() {
        let (a, b, c, d) = (2.0, 1.0, 0.3, 3.0);
        let h = 0.04;
        let f: Vec<f64> = (0..51).map(|j| -1.0 + j as f64 * h).map(|x| (a * x + b) / (c * x + d)).collect();
        let s = schwarzian_line(h, &f, 9);
        let worst = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn chain_rule_for_two_smooth_circle_maps() {
        let l = 5.0;
        let k = 2.0 * PI / l;
        let (e1, e2, p1, p2) = (0.12, 0.09, 0.4, -1.1);
        let f1 = |x: f64| x + e1 * (k * x + p1).sin();
        let f2 = |x: f64| x + e2 * (2.0 * k * x + p2).sin();
        let s1 = |x: f64| {
            let d1 = 1.0 + e1 * k * (k * x + p1).cos();
            let d2 = -e1 * k * k * (k * x + p1).sin();
            let d3 = -e1 * k * k * k * (k * x + p1).cos();
            d3 / d1 - 1.5 * (d2 / d1).powi(2)
        };
        let s2 = |x: f64| {
            let q = 2.0 * k;
            let d1 = 1.0 + e2 * q * (q * x + p2).cos();
            let d2 = -e2 * q * q * (q * x + p2).sin();
            let d3 = -e2 * q * q * q * (q * x + p2).cos();
            (d3 / d1 - 1.5 * (d2 / d1).powi(2), d1)
        };
        let g = PeriodicGrid::new(0.0, l, 256);
        let u: Vec<f64> = g.points().iter().map(|&x| f1(f2(x)) - x).collect();
        let s = schwarzian_periodic(&g, &u, DERIVATIVE_TAIL_TOL).unwrap();
        for (j, x) in g.points().iter().enumerate() {
            let (sf2, df2) = s2(*x);
            let want = df2 * df2 * s1(f2(*x)) + sf2;
            assert!((s[j] - want).abs() < 1e-8);
        }
    }

    #[test]
    fn fd_and_spectral_schwarzian_agree() {
        let g = PeriodicGrid::new(-2.0, 4.0, 512);
        let u: Vec<f64> = g.points().iter().map(|&x| 0.1 * (PI * x / 2.0).sin() + 0.05 * (PI * x).cos()).collect();
        let s = schwarzian_periodic(&g, &u, DERIVATIVE_TAIL_TOL).unwrap();
        let f: Vec<f64> = g.points().iter().zip(&u).map(|(x, u)| x + u).collect();
        let sl = schwarzian_line(g.h(), &f, 13);
        for j in 0..512 {
            let tol = if (8..504).contains(&j) { 1e-7 } else { 1e-5 };
            assert!((s[j] - sl[j]).abs() < tol, "{j} {}", (s[j] - sl[j]).abs());
        }
    }

    #[test]
    fn unresolved_derivative_is_flagged() {
        let g = PeriodicGrid::new(0.0, 1.0, 32);
        let d1: Vec<C64> = (0..32).map(|j| C64::new(1.0 + 0.5 * if j % 2 == 0 { 1.0 } else { -1.0 } * 0.1, 0.0)).collect();
        assert!(matches!(schwarzian_from_derivative(&g, &d1, 1e-8), Err(Error::DerivativeUnresolved { .. })));
    }

    #[test]
    fn action_of_identity_welding() {
        let g = PeriodicGrid::new(-10.0, 20.0, 400);
        let xi: Vec<f64> = g.points().iter().map(|&x| if x.abs() < 3.0 { (1.0 - x * x / 9.0).powi(4) } else { 0.0 }).collect();
        let one = vec![C64::new(1.0, 0.0); 400];
        let zero = vec![C64::new(0.0, 0.0); 400];
        let a = action_integral(&g, &xi, &one, &zero, 1.3).unwrap();
        let int_xi: f64 = xi.iter().sum::<f64>() * g.h();
        assert!((a.re + 2.0 * PI * PI / 1.69 * int_xi).abs() < 1e-12 && a.im == 0.0);
        assert_eq!(action_integral(&g, &vec![0.0; 400], &one, &to_complex(&vec![0.3; 400]), 1.3).unwrap(), C64::new(0.0, 0.0));
    }

    #[test]
    fn clipped_support_is_flagged() {
        let g = PeriodicGrid::new(0.0, 1.0, 16);
        let xi = vec![1.0; 16];
        let one = vec![C64::new(1.0, 0.0); 16];
        assert!(matches!(action_integral(&g, &xi, &one, &one, 1.0), Err(Error::SupportClipped)));
    }

    #[test]
    fn counterterm_trivial_cases() {
        let k = KinkMaps::new(TemperatureProfile::default_kink(), 1.0).unwrap();
        assert_eq!(counterterm_c(&k, 0.0, 1.0), 0.0);
        let flat = KinkMaps::new(TemperatureProfile::new(1.5, 1.5, 0.0, 1.0, Default::default()).unwrap(), 1.0).unwrap();
        assert_eq!(counterterm_c(&flat, 3.0, 1.0), 0.0);
    }

    #[test]
    fn counterterm_matches_adaptive_quadrature() {
        let k = KinkMaps::new(TemperatureProfile::default_kink(), 1.0).unwrap();
        let p = k.profile;
        let t = 4.0;
        let f = |x: f64| (p.beta(x + t) + p.beta(x - t) - 2.0 * p.beta(x)) * p.sh(x);
        let reference = adaptive_simpson(&f, -1.0, 1.0, 1e-13, 40) / (24.0 * PI);
        assert!((counterterm_c(&k, t, 1.0) - reference).abs() < 1e-10);
    }

    proptest! {
        #[test]
        fn spectral_schwarzian_vanishes_for_translations(b in -3.0f64..3.0) {
            let g = PeriodicGrid::new(0.0, 2.0, 32);
            let s = schwarzian_periodic(&g, &vec![b; 32], DERIVATIVE_TAIL_TOL).unwrap();
            prop_assert!(s.iter().all(|v| v.abs() < 1e-13));
        }

        #[test]
        fn fd_weights_differentiate_polynomials(z in -1.0f64..1.0, p in 0u32..6) {
            let nodes: Vec<f64> = (0..7).map(|j| -1.5 + 0.5 * j as f64).collect();
            let w = fd_weights(z, &nodes, 3);
            let d1: f64 = nodes.iter().zip(&w[1]).map(|(x, w)| w * x.powi(p as i32)).sum();
            let exact = if p == 0 { 0.0 } else { p as f64 * z.powi(p as i32 - 1) };
            prop_assert!((d1 - exact).abs() < 1e-9);
        }
    }
}
