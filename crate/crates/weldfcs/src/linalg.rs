use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense complex matrix, row-major, real and imaginary parts stored apart.
#[derive(Clone, Debug)]
pub struct CMat {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl CMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMat { rows, cols, re: vec![0.0; rows * cols], im: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMat::zeros(n, n);
        for i in 0..n {
            m.re[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = CMat::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                let z = f(i, j);
                m.re[i * cols + j] = z.re;
                m.im[i * cols + j] = z.im;
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        let k = i * self.cols + j;
        C64::new(self.re[k], self.im[k])
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, z: C64) {
        let k = i * self.cols + j;
        self.re[k] = z.re;
        self.im[k] = z.im;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, j: usize, z: C64) {
        let k = i * self.cols + j;
        self.re[k] += z.re;
        self.im[k] += z.im;
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows)
            .map(|i| {
                let r = &self.re[i * self.cols..(i + 1) * self.cols];
                let s = &self.im[i * self.cols..(i + 1) * self.cols];
                let (mut a, mut b) = (0.0, 0.0);
                for j in 0..self.cols {
                    a += r[j] * x[j].re - s[j] * x[j].im;
                    b += r[j] * x[j].im + s[j] * x[j].re;
                }
                C64::new(a, b)
            })
            .collect()
    }

    /// Sub-matrix with the given row and column index lists.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMat {
        let mut m = CMat::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                m.re[a * cols.len() + b] = self.re[i * self.cols + j];
                m.im[a * cols.len() + b] = self.im[i * self.cols + j];
            }
        }
        m
    }

    pub fn norm1(&self) -> f64 {
        let mut best: f64 = 0.0;
        for j in 0..self.cols {
            let mut s = 0.0;
            for i in 0..self.rows {
                let k = i * self.cols + j;
                s += self.re[k].hypot(self.im[k]);
            }
            best = best.max(s);
        }
        best
    }

    pub fn max_abs(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max)
    }
}

/// C = A B.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.cols, b.rows);
    let (n, m) = (a.rows, b.cols);
    let mut c = CMat::zeros(n, m);
    for i in 0..n {
        let cr = &mut c.re[i * m..(i + 1) * m];
        let ci = &mut c.im[i * m..(i + 1) * m];
        for k in 0..a.cols {
            let (ar, ai) = (a.re[i * a.cols + k], a.im[i * a.cols + k]);
            if ar == 0.0 && ai == 0.0 {
                continue;
            }
            let br = &b.re[k * m..(k + 1) * m];
            let bi = &b.im[k * m..(k + 1) * m];
            for j in 0..m {
                cr[j] += ar * br[j] - ai * bi[j];
                ci[j] += ar * bi[j] + ai * br[j];
            }
        }
    }
    c
}

/// LU factorisation with partial pivoting, P A = L U.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
    piv: Vec<usize>,
    norm1: f64,
}

impl Lu {
    pub fn new(a: &CMat) -> Result<Lu> {
        assert_eq!(a.rows, a.cols);
        let n = a.rows;
        let norm1 = a.norm1();
        let mut re = a.re.clone();
        let mut im = a.im.clone();
        let mut piv = vec![0; n];
        for k in 0..n {
            let mut best = k;
            let mut bv = -1.0;
            for i in k..n {
                let v = re[i * n + k].hypot(im[i * n + k]);
                if v > bv {
                    bv = v;
                    best = i;
                }
            }
            piv[k] = best;
            if bv == 0.0 || !bv.is_finite() {
                return Err(Error::SingularSystem { cond: f64::INFINITY });
            }
            if best != k {
                for j in 0..n {
                    re.swap(k * n + j, best * n + j);
                    im.swap(k * n + j, best * n + j);
                }
            }
            let (pr, pi) = (re[k * n + k], im[k * n + k]);
            let d = pr * pr + pi * pi;
            let (ir, ii) = (pr / d, -pi / d);
            let (top_re, rest_re) = re.split_at_mut((k + 1) * n);
            let (top_im, rest_im) = im.split_at_mut((k + 1) * n);
            let rk_re = &top_re[k * n + k + 1..k * n + n];
            let rk_im = &top_im[k * n + k + 1..k * n + n];
            for (rr, ri) in rest_re.chunks_mut(n).zip(rest_im.chunks_mut(n)) {
                let (ar, ai) = (rr[k], ri[k]);
                let lr = ar * ir - ai * ii;
                let li = ar * ii + ai * ir;
                rr[k] = lr;
                ri[k] = li;
                if lr == 0.0 && li == 0.0 {
                    continue;
                }
                let rr = &mut rr[k + 1..];
                let ri = &mut ri[k + 1..];
                for j in 0..rr.len() {
                    let (ur, ui) = (rk_re[j], rk_im[j]);
                    rr[j] -= lr * ur - li * ui;
                    ri[j] -= lr * ui + li * ur;
                }
            }
        }
        Ok(Lu { n, re, im, piv, norm1 })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> C64 {
        C64::new(self.re[i * self.n + j], self.im[i * self.n + j])
    }

    /// Solves A x = b.
    pub fn solve(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
        }
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.at(i, j) * x[j];
            }
            x[i] = s / self.at(i, i);
        }
        x
    }

    /// Solves A^H x = b.
    pub fn solve_adjoint(&self, b: &[C64]) -> Vec<C64> {
        let n = self.n;
        let mut v = b.to_vec();
        for i in 0..n {
            let mut s = v[i];
            for j in 0..i {
                s -= self.at(j, i).conj() * v[j];
            }
            v[i] = s / self.at(i, i).conj();
        }
        for i in (0..n).rev() {
            let mut s = v[i];
            for j in i + 1..n {
                s -= self.at(j, i).conj() * v[j];
            }
            v[i] = s;
        }
        for k in (0..n).rev() {
            v.swap(k, self.piv[k]);
        }
        v
    }

    /// Hager–Higham estimate of the 1-norm condition number.
    pub fn cond1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut x = vec![C64::new(1.0 / n as f64, 0.0); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..6 {
            let y = self.solve(&x);
            est = y.iter().map(|z| z.norm()).sum::<f64>();
            let xi: Vec<C64> =
                y.iter().map(|z| if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) }).collect();
            let z = self.solve_adjoint(&xi);
            let (mut j, mut zmax) = (0, -1.0);
            for (k, zk) in z.iter().enumerate() {
                if zk.norm() > zmax {
                    zmax = zk.norm();
                    j = k;
                }
            }
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![C64::new(0.0, 0.0); n];
            x[j] = C64::new(1.0, 0.0);
        }
        // Higham's extra probe vector
        let alt: Vec<C64> = (0..n)
            .map(|i| {
                let sgn = if i % 2 == 0 { 1.0 } else { -1.0 };
                C64::new(sgn * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
            })
            .collect();
        let y = self.solve(&alt);
        let alt_est = 2.0 * y.iter().map(|z| z.norm()).sum::<f64>() / (3.0 * n as f64);
        self.norm1 * est.max(alt_est)
    }
}

/// Relative residual |A x - b| / |b| in the max norm.
pub fn rel_residual(a: &CMat, x: &[C64], b: &[C64]) -> f64 {
    let ax = a.matvec(x);
    let num = ax.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    let den = b.iter().map(|q| q.norm()).fold(0.0, f64::max);
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn test_matrix(n: usize, seed: u64) -> CMat {
        let mut s = seed;
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut m = CMat::from_fn(n, n, |_, _| C64::new(next(), next()));
        for i in 0..n {
            m.add_at(i, i, C64::new(2.0, 0.0));
        }
        m
    }

    #[test]
    fn solve_and_adjoint_recover_known_vector() {
        let a = test_matrix(40, 7);
        let x: Vec<C64> = (0..40).map(|i| C64::new(i as f64, -(i as f64) / 3.0)).collect();
        let b = a.matvec(&x);
        let lu = Lu::new(&a).unwrap();
        let y = lu.solve(&b);
        assert!(x.iter().zip(&y).all(|(p, q)| (p - q).norm() < 1e-10));
        let ah = CMat::from_fn(40, 40, |i, j| a.get(j, i).conj());
        let bh = ah.matvec(&x);
        let yh = lu.solve_adjoint(&bh);
        assert!(x.iter().zip(&yh).all(|(p, q)| (p - q).norm() < 1e-10));
    }

    #[test]
    fn condition_estimate_of_diagonal_is_exact() {
        let a = CMat::from_fn(5, 5, |i, j| if i == j { C64::new(10f64.powi(i as i32), 0.0) } else { C64::new(0.0, 0.0) });
        let c = Lu::new(&a).unwrap().cond1_estimate();
        assert!((c - 1e4).abs() < 1e-8);
    }

    #[test]
    fn singular_matrix_is_rejected() {
        let a = CMat::zeros(3, 3);
        assert!(matches!(Lu::new(&a), Err(Error::SingularSystem { .. })));
    }

    proptest! {
        #[test]
        fn matmul_is_associative_on_vectors(seed in 0u64..1000, n in 2usize..12) {
            let a = test_matrix(n, seed);
            let b = test_matrix(n, seed + 17);
            let x: Vec<C64> = (0..n).map(|i| C64::new(1.0 + i as f64, 0.5)).collect();
            let lhs = matmul(&a, &b).matvec(&x);
            let rhs = a.matvec(&b.matvec(&x));
            for (p, q) in lhs.iter().zip(&rhs) {
                prop_assert!((p - q).norm() < 1e-10);
            }
        }

        #[test]
        fn lu_solve_residual_is_small(seed in 0u64..1000, n in 1usize..30) {
            let a = test_matrix(n, seed);
            let b: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (i as f64).cos())).collect();
            let x = Lu::new(&a).unwrap().solve(&b);
            prop_assert!(rel_residual(&a, &x, &b) < 1e-11);
        }
    }
}
