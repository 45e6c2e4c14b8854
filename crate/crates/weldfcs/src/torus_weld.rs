use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::analysis::{schwarzian_from_derivative, DERIVATIVE_TAIL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{matmul, rel_residual, CMat, Lu};
use crate::quad::gauss_legendre;
use crate::spectral::{derivative_real, eval_modes, modes, synthesize, to_complex, PeriodicGrid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusOptions {
    /// Spectral truncation: modes -N..=N.
    pub n: usize,
    /// Largest admissible kernel entry on the truncation edge.
    pub tail_tol: f64,
    /// Condition-number ceiling of the projected system.
    pub cond_max: f64,
    /// Relative residual ceiling of the linear solve.
    pub residual_tol: f64,
    /// Spectral tail bound for X' before forming its Schwarzian.
    pub derivative_tol: f64,
}

impl TorusOptions {
    pub fn new(n: usize) -> Self {
        TorusOptions { n, tail_tol: 1e-12, cond_max: 1e14, residual_tol: 1e-10, derivative_tol: DERIVATIVE_TAIL_TOL }
    }
}

/// Welding problem for f(x) = x + u(x) on the circle of length `grid.period`.
#[derive(Clone, Debug)]
pub struct TorusWeldProblem {
    pub grid: PeriodicGrid,
    /// Samples of f - id (periodic).
    pub u: Vec<f64>,
    pub tau: C64,
    pub opts: TorusOptions,
}

impl TorusWeldProblem {
    pub fn new(grid: PeriodicGrid, u: Vec<f64>, tau: C64, opts: TorusOptions) -> Result<Self> {
        if u.len() != grid.m {
            return Err(Error::InvalidArgument(format!("{} samples for a grid of {}", u.len(), grid.m)));
        }
        if grid.m < 4 * opts.n || opts.n == 0 {
            return Err(Error::InvalidArgument(format!("need M >= 4N > 0, got M = {}, N = {}", grid.m, opts.n)));
        }
        let abs_q = (-2.0 * PI * tau.im).exp();
        if !(tau.im > 0.0) || abs_q >= 1.0 - 1e-12 {
            return Err(Error::QOnUnitCircle { abs_q });
        }
        let up = derivative_real(&grid, &u, 1);
        if up.iter().any(|d| !(1.0 + d > 0.0)) {
            return Err(Error::InvalidArgument("f' must be positive".into()));
        }
        Ok(TorusWeldProblem { grid, u, tau, opts })
    }

    pub fn q(&self) -> C64 {
        (C64::i() * 2.0 * PI * self.tau).exp()
    }

    /// q^n for any integer n.
    fn qpow(&self, n: i64) -> C64 {
        (C64::i() * 2.0 * PI * self.tau * n as f64).exp()
    }
}

/// Truncated operators in the Fourier basis, indexed by n + N.
#[derive(Clone, Debug)]
pub struct KernelBlocks {
    pub n: usize,
    /// Composition with f: (F^{-1} g) = g o f.
    pub finv: CMat,
    /// Composition with f^{-1}.
    pub f: CMat,
    pub k11: CMat,
    pub k12: CMat,
    pub k21: CMat,
    /// Largest |K| entry on the truncation edge |m| = N or |n| = N.
    pub tail: f64,
}

impl KernelBlocks {
    pub fn k(&self) -> CMat {
        let mut k = self.k11.clone();
        for i in 0..k.re.len() {
            k.re[i] += self.k12.re[i] + self.k21.re[i];
            k.im[i] += self.k12.im[i] + self.k21.im[i];
        }
        k
    }
}

fn mode_of(idx: usize, n: usize) -> i64 {
    idx as i64 - n as i64
}

pub fn assemble_k(pb: &TorusWeldProblem) -> Result<KernelBlocks> {
    let grid = pb.grid;
    let n = pb.opts.n;
    let dim = 2 * n + 1;
    let m = grid.m;
    let x0 = grid.x0;
    let up = derivative_real(&grid, &pb.u, 1);
    let plan = FftPlanner::new().plan_fft_inverse(m);
    let inv_m = 1.0 / m as f64;
    let mut buf = vec![C64::new(0.0, 0.0); m];

    let mut finv = CMat::zeros(dim, dim);
    for j in 0..dim {
        let pn = grid.p(mode_of(j, n));
        for (b, u) in buf.iter_mut().zip(&pb.u) {
            *b = C64::from_polar(1.0, -pn * u);
        }
        plan.process(&mut buf);
        for i in 0..dim {
            let mi = mode_of(i, n);
            let c = buf[grid.slot(mi - mode_of(j, n))] * inv_m;
            finv.set(i, j, c * C64::from_polar(1.0, (grid.p(mi) - pn) * x0));
        }
    }
    let mut f = CMat::zeros(dim, dim);
    for i in 0..dim {
        let pm = grid.p(mode_of(i, n));
        for ((b, u), d) in buf.iter_mut().zip(&pb.u).zip(&up) {
            *b = C64::from_polar(1.0 + d, pm * u);
        }
        plan.process(&mut buf);
        for j in 0..dim {
            let nj = mode_of(j, n);
            let c = buf[grid.slot(mode_of(i, n) - nj)] * inv_m;
            f.set(i, j, c * C64::from_polar(1.0, (pm - grid.p(nj)) * x0));
        }
    }

    let pos: Vec<usize> = (n..dim).collect();
    let neg: Vec<usize> = (0..n).collect();
    let all: Vec<usize> = (0..dim).collect();
    let top = matmul(&finv.select(&pos, &neg), &f.select(&neg, &all));
    let bottom = matmul(&finv.select(&neg, &pos), &f.select(&pos, &all));
    let mut k11 = CMat::zeros(dim, dim);
    for (a, &i) in pos.iter().enumerate() {
        for j in 0..dim {
            k11.set(i, j, top.get(a, j));
        }
    }
    for (a, &i) in neg.iter().enumerate() {
        for j in 0..dim {
            k11.set(i, j, -bottom.get(a, j));
        }
    }
    let qn: Vec<C64> = (0..dim).map(|j| pb.qpow(mode_of(j, n))).collect();
    let k12 = CMat::from_fn(dim, dim, |i, j| if j >= n { finv.get(i, j) * qn[j] } else { C64::new(0.0, 0.0) });
    let k21 = CMat::from_fn(dim, dim, |i, j| if i < n { f.get(i, j) / qn[i] } else { C64::new(0.0, 0.0) });

    let mut blocks = KernelBlocks { n, finv, f, k11, k12, k21, tail: 0.0 };
    let k = blocks.k();
    let mut tail: f64 = 0.0;
    for e in [0, dim - 1] {
        for j in 0..dim {
            tail = tail.max(k.get(e, j).norm()).max(k.get(j, e).norm());
        }
    }
    blocks.tail = tail;
    if !(tail <= pb.opts.tail_tol) {
        return Err(Error::TruncationTooCoarse { tail, n, tol: pb.opts.tail_tol });
    }
    Ok(blocks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub cond: f64,
    pub rel_residual: f64,
    pub tail: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TorusWeldSolution {
    pub grid: PeriodicGrid,
    pub n: usize,
    pub tau: C64,
    pub tau_hat: C64,
    /// Coefficients of Y_1 for modes -N..=N (index n + N); the constant mode is 0.
    pub y1_modes: Vec<C64>,
    /// Coefficients of f - id on the fine grid (slot order).
    pub u_modes: Vec<C64>,
    pub u: Vec<f64>,
    pub y1: Vec<C64>,
    pub x1: Vec<C64>,
    pub x2: Vec<C64>,
    pub xprime: Vec<C64>,
    pub sx: Vec<C64>,
    pub stats: SolveStats,
}

impl TorusWeldSolution {
    /// X'(x) at an arbitrary point by trigonometric interpolation.
    pub fn xprime_at(&self, x: f64) -> C64 {
        let up = eval_modes(&self.grid, &self.u_modes, x, 1);
        let mut y1p = C64::new(0.0, 0.0);
        for (k, c) in self.y1_modes.iter().enumerate() {
            let p = self.grid.p(mode_of(k, self.n));
            y1p += c * C64::new(0.0, -p) * C64::from_polar(1.0, -p * x);
        }
        1.0 + up - y1p
    }

    /// Relative defects of the identities \int X'^2 = \int X'^2 / f' and
    /// \int SX = \int (SX - Sf) / f'; the second is scaled by \int |SX|, since the signed integral can cancel.
    pub fn stokes_defects(&self, derivative_tol: f64) -> Result<(f64, f64)> {
        let h = self.grid.h();
        let fp: Vec<f64> = derivative_real(&self.grid, &self.u, 1).iter().map(|d| 1.0 + d).collect();
        let sf = schwarzian_from_derivative(&self.grid, &to_complex(&fp), derivative_tol)?;
        let a: C64 = self.xprime.iter().map(|z| z * z).sum::<C64>() * h;
        let b: C64 = self.xprime.iter().zip(&fp).map(|(z, d)| z * z / d).sum::<C64>() * h;
        let c: C64 = self.sx.iter().sum::<C64>() * h;
        let d: C64 = self.sx.iter().zip(&sf).zip(&fp).map(|((s, sf), d)| (s - sf) / d).sum::<C64>() * h;
        let scale: f64 = self.sx.iter().map(|z| z.norm()).sum::<f64>() * h;
        let rel2 = if scale == 0.0 { (c - d).norm() } else { (c - d).norm() / scale };
        Ok(((a - b).norm() / a.norm(), rel2))
    }
}

/// Solves the projected Fredholm equation for Y_1 and reconstructs tau_hat and X.
pub fn solve_y1(pb: &TorusWeldProblem) -> Result<TorusWeldSolution> {
    let blocks = assemble_k(pb)?;
    solve_with(pb, &blocks)
}

pub fn solve_with(pb: &TorusWeldProblem, blocks: &KernelBlocks) -> Result<TorusWeldSolution> {
    let grid = pb.grid;
    let n = pb.opts.n;
    let dim = 2 * n + 1;
    let k = blocks.k();
    let u_modes = modes(&grid, &to_complex(&pb.u));
    let y12p: Vec<C64> = (0..dim)
        .map(|i| if i == n { C64::new(0.0, 0.0) } else { u_modes[grid.slot(mode_of(i, n))] })
        .collect();
    let k12y = blocks.k12.matvec(&y12p);
    let rhs_full: Vec<C64> = (0..dim).map(|i| if i < n { y12p[i] } else { C64::new(0.0, 0.0) } - k12y[i]).collect();

    let idx: Vec<usize> = (0..dim).filter(|&i| i != n).collect();
    let mut a = k.select(&idx, &idx);
    for v in a.re.iter_mut().chain(a.im.iter_mut()) {
        *v = -*v;
    }
    for d in 0..idx.len() {
        a.add_at(d, d, C64::new(1.0, 0.0));
    }
    let rhs: Vec<C64> = idx.iter().map(|&i| rhs_full[i]).collect();
    let lu = Lu::new(&a)?;
    let cond = lu.cond1_estimate();
    if !(cond <= pb.opts.cond_max) {
        return Err(Error::SingularSystem { cond });
    }
    let sol = lu.solve(&rhs);
    let res = rel_residual(&a, &sol, &rhs);
    if !(res <= pb.opts.residual_tol) {
        return Err(Error::SingularSystem { cond });
    }
    let mut y1_modes = vec![C64::new(0.0, 0.0); dim];
    for (v, &i) in sol.iter().zip(&idx) {
        y1_modes[i] = *v;
    }
    reconstruct(pb, y1_modes, u_modes, SolveStats { cond, rel_residual: res, tail: blocks.tail })
}

fn reconstruct(pb: &TorusWeldProblem, y1_modes: Vec<C64>, u_modes: Vec<C64>, stats: SolveStats) -> Result<TorusWeldSolution> {
    let grid = pb.grid;
    let n = pb.opts.n;
    let l = grid.period;
    let mut c = vec![C64::new(0.0, 0.0); grid.m];
    let mut cp = vec![C64::new(0.0, 0.0); grid.m];
    for (i, y) in y1_modes.iter().enumerate() {
        let nn = mode_of(i, n);
        c[grid.slot(nn)] = *y;
        cp[grid.slot(nn)] = y * C64::new(0.0, -grid.p(nn));
    }
    let y1 = synthesize(&grid, &c);
    let y1p = synthesize(&grid, &cp);
    let up = derivative_real(&grid, &pb.u, 1);
    let xprime: Vec<C64> = up.iter().zip(&y1p).map(|(d, y)| 1.0 + d - y).collect();
    let tau_hat = pb.tau - pb.u.iter().zip(&xprime).map(|(u, x)| *u * x).sum::<C64>() * grid.h() / (l * l);
    let sx = schwarzian_from_derivative(&grid, &xprime, pb.opts.derivative_tol)?;
    let x1: Vec<C64> = grid.points().iter().zip(&pb.u).zip(&y1).map(|((x, u), y)| x + u - y - l * pb.tau).collect();
    let x2: Vec<C64> = x1.iter().map(|z| z + l * tau_hat).collect();
    Ok(TorusWeldSolution {
        grid,
        n,
        tau: pb.tau,
        tau_hat,
        y1_modes,
        u_modes,
        u: pb.u.clone(),
        y1,
        x1,
        x2,
        xprime,
        sx,
        stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Max residual of the first boundary equation in real space.
    pub boundary_1: f64,
    /// Max residual of the second boundary equation in real space.
    pub boundary_2: f64,
    /// Constant-mode residual of the unprojected equation.
    pub integrability: f64,
    /// |\int_b omega - tau_hat|.
    pub b_cycle: f64,
}

impl Diagnostics {
    pub fn max(&self) -> f64 {
        self.boundary_1.max(self.boundary_2).max(self.integrability).max(self.b_cycle)
    }
}

pub fn residual_diagnostics(pb: &TorusWeldProblem, blocks: &KernelBlocks, sol: &TorusWeldSolution) -> Diagnostics {
    let grid = pb.grid;
    let l = grid.period;
    let n = sol.n;
    let dim = 2 * n + 1;
    let m = grid.m;
    let h = grid.h();
    let xs = grid.points();
    let up = derivative_real(&grid, &pb.u, 1);
    let upp = derivative_real(&grid, &pb.u, 2);
    let fx: Vec<f64> = xs.iter().zip(&pb.u).map(|(x, u)| x + u).collect();
    let fp: Vec<f64> = up.iter().map(|d| 1.0 + d).collect();
    let shift = l * (sol.tau_hat - sol.tau);
    let y2: Vec<C64> = sol.y1.iter().zip(&pb.u).map(|(y, u)| y - u - shift).collect();
    let q = pb.q();
    let w = 2.0 * PI / l;

    let stride = (m / 256).max(1);
    let (mut r1max, mut r2max) = (0.0f64, 0.0f64);
    for i in (0..m).step_by(stride) {
        let x = xs[i];
        let (mut e0p, mut em2) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for k in 0..dim {
            let nn = mode_of(k, n);
            let e = C64::from_polar(1.0, -grid.p(nn) * x);
            if nn >= 0 {
                e0p += sol.y1_modes[k] * e;
            } else {
                em2 += (sol.y1_modes[k] - sol.u_modes[grid.slot(nn)]) * e;
            }
        }
        let (mut k11y, mut k12y, mut k21y) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
        for j in 0..m {
            let kern11 = if j == i {
                C64::new(-(fp[j] - 1.0) / (2.0 * l), -upp[j] / (4.0 * PI * fp[j]))
            } else {
                let c1 = 1.0 / (0.5 * w * (fx[j] - fx[i])).tan();
                let c2 = 1.0 / (0.5 * w * (xs[j] - x)).tan();
                -(C64::new(0.5, 0.5 * c1) * fp[j] - C64::new(0.5, 0.5 * c2)) / l
            };
            k11y += kern11 * sol.y1[j];
            let r12 = q * C64::from_polar(1.0, -w * (fx[i] - xs[j]));
            k12y += y2[j] / (1.0 - r12) / l;
            let r21 = q * C64::from_polar(1.0, -w * (fx[j] - x));
            k21y += fp[j] * sol.y1[j] * r21 / (1.0 - r21) / l;
        }
        r1max = r1max.max((e0p - (k11y + k12y) * h).norm());
        r2max = r2max.max((em2 - k21y * h).norm());
    }

    let mut y12 = vec![C64::new(0.0, 0.0); dim];
    for (k, v) in y12.iter_mut().enumerate() {
        *v = sol.u_modes[grid.slot(mode_of(k, n))];
    }
    y12[n] += shift;
    let row0 = n;
    let mut integ = sol.y1_modes[row0];
    for j in 0..dim {
        integ -= (blocks.k11.get(row0, j) + blocks.k12.get(row0, j) + blocks.k21.get(row0, j)) * sol.y1_modes[j];
        integ += blocks.k12.get(row0, j) * y12[j];
    }

    let fy1 = blocks.f.matvec(&sol.y1_modes);
    let f0 = eval_modes(&grid, &sol.u_modes, 0.0, 0).re;
    let (mut at_p2, mut at_p1) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0));
    for k in 0..dim {
        let nn = mode_of(k, n);
        let ph = C64::from_polar(1.0, -grid.p(nn) * f0);
        if nn >= 0 {
            let a = sol.y1_modes[k] - y12[k];
            at_p2 += a;
            at_p1 += a * pb.qpow(nn) * ph;
        } else {
            at_p2 += fy1[k] / pb.qpow(nn);
            at_p1 += fy1[k] * ph;
        }
    }
    let b_int = sol.tau - f0 / l + (at_p1 - at_p2) / l;
    Diagnostics { boundary_1: r1max, boundary_2: r2max, integrability: integ.norm(), b_cycle: (b_int - sol.tau_hat).norm() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EffectiveTau {
    /// (s_k, d tau_hat / ds at s_k).
    pub nodes: Vec<(f64, C64)>,
    pub tau_hat: C64,
}

/// Integrates d tau_hat / ds = L^{-2} \int xi X_s'^2 over [0, s_end] with Gauss–Legendre
/// nodes, re-solving the welding of g_s = x + `u_of_s(s)` at each node.
pub fn effective_tau_ode<G>(
    grid: PeriodicGrid,
    xi: &[f64],
    tau0: C64,
    opts: TorusOptions,
    s_end: f64,
    order: usize,
    mut u_of_s: G,
) -> Result<EffectiveTau>
where
    G: FnMut(f64) -> Result<Vec<f64>>,
{
    let l = grid.period;
    let (gx, gw) = gauss_legendre(order);
    let mut nodes = Vec::with_capacity(order);
    let mut tau_hat = tau0;
    for (x, w) in gx.iter().zip(&gw) {
        let s = 0.5 * s_end * (x + 1.0);
        let pb = TorusWeldProblem::new(grid, u_of_s(s)?, tau0, opts)?;
        let sol = solve_y1(&pb)?;
        let rate = xi.iter().zip(&sol.xprime).map(|(a, d)| *a * d * d).sum::<C64>() * grid.h() / (l * l);
        tau_hat += 0.5 * s_end * w * rate;
        nodes.push((s, rate));
    }
    Ok(EffectiveTau { nodes, tau_hat })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(l: f64, m: usize, n: usize, tau: C64, u: impl Fn(f64) -> f64) -> TorusWeldProblem {
        let grid = PeriodicGrid::new(-l / 2.0, l, m);
        let us = grid.points().iter().map(|&x| u(x)).collect();
        TorusWeldProblem::new(grid, us, tau, TorusOptions::new(n)).unwrap()
    }

    fn tau(im: f64) -> C64 {
        C64::new(0.0, im)
    }

    #[test]
    fn identity_gives_diagonal_kernel() {
        let pb = problem(10.0, 256, 48, tau(0.1), |_| 0.0);
        let b = assemble_k(&pb).unwrap();
        assert!(b.k11.max_abs() < 1e-15);
        let k = b.k();
        for i in 0..97 {
            for j in 0..97 {
                let nn = mode_of(i, 48);
                let want = if i == j { (-2.0 * PI * 0.1 * nn.abs() as f64).exp() } else { 0.0 };
                assert!((k.get(i, j) - want).norm() < 1e-14);
                let id = if i == j { 1.0 } else { 0.0 };
                assert!((b.f.get(i, j) - id).norm() < 1e-14);
            }
        }
        let sol = solve_with(&pb, &b).unwrap();
        assert!(sol.y1_modes.iter().all(|z| z.norm() < 1e-15));
        assert_eq!(sol.tau_hat, tau(0.1));
        let d = residual_diagnostics(&pb, &b, &sol);
        assert!(d.max() < 1e-13, "{d:?}");
    }

    #[test]
    fn translation_gives_phase_matrix_and_shifted_tau() {
        let l = 10.0;
        let bshift = 0.05 * l;
        let pb = problem(l, 256, 48, tau(0.1), |_| -bshift);
        let b = assemble_k(&pb).unwrap();
        assert!(b.k11.max_abs() < 1e-14);
        for i in 0..97 {
            let want = C64::from_polar(1.0, -2.0 * PI * mode_of(i, 48) as f64 / l * bshift);
            assert!((b.f.get(i, i) - want).norm() < 1e-13);
            assert!((b.finv.get(i, i) - want.conj()).norm() < 1e-13);
        }
        let sol = solve_with(&pb, &b).unwrap();
        assert!(sol.y1_modes.iter().all(|z| z.norm() < 1e-14));
        assert!((sol.tau_hat - (tau(0.1) + 0.05)).norm() < 1e-14);
        let d = residual_diagnostics(&pb, &b, &sol);
        assert!(d.b_cycle < 1e-12 && d.max() < 1e-12, "{d:?}");
    }

    #[test]
    fn unit_circle_and_coarse_truncation_are_rejected() {
        let grid = PeriodicGrid::new(0.0, 1.0, 64);
        let err = TorusWeldProblem::new(grid, vec![0.0; 64], tau(1e-14), TorusOptions::new(8)).unwrap_err();
        assert!(matches!(err, Error::QOnUnitCircle { .. }));
        let pb = problem(10.0, 256, 20, tau(0.1), |_| 0.0);
        assert!(matches!(assemble_k(&pb), Err(Error::TruncationTooCoarse { .. })));
    }

    fn eps_perturbation(l: f64) -> impl Fn(f64) -> f64 {
        let eps = 0.02 * l / (2.0 * PI);
        move |x| eps * (2.0 * PI * x / l).sin()
    }

    #[test]
    fn refinement_blocks_agree_on_shared_modes() {
        let l = 10.0;
        let u = |x: f64| 0.3 * (2.0 * PI * x / l).sin() + 0.1 * (4.0 * PI * x / l).cos();
        let a = assemble_k(&problem(l, 512, 64, tau(0.15), u)).unwrap();
        let b = assemble_k(&problem(l, 512, 128, tau(0.15), u)).unwrap();
        let (ka, kb) = (a.k(), b.k());
        let mut worst: f64 = 0.0;
        for i in 0..129 {
            for j in 0..129 {
                worst = worst.max((ka.get(i, j) - kb.get(i + 64, j + 64)).norm());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn perturbed_circle_matches_fine_reference() {
        let l = 10.0;
        let coarse = solve_y1(&problem(l, 256, 64, tau(0.15), eps_perturbation(l))).unwrap();
        let fine = solve_y1(&problem(l, 1024, 256, tau(0.15), eps_perturbation(l))).unwrap();
        assert!((coarse.tau_hat - fine.tau_hat).norm() < 1e-8);
        for k in 0..129 {
            assert!((coarse.y1_modes[k] - fine.y1_modes[k + 192]).norm() < 1e-8);
        }
        for j in 0..256 {
            assert!((coarse.y1[j] - fine.y1[4 * j]).norm() < 1e-8);
        }
    }

    #[test]
    fn perturbed_circle_residuals_are_small() {
        let l = 10.0;
        let pb = problem(l, 1024, 256, tau(0.15), eps_perturbation(l));
        let b = assemble_k(&pb).unwrap();
        let sol = solve_with(&pb, &b).unwrap();
        let d = residual_diagnostics(&pb, &b, &sol);
        assert!(d.max() < 1e-8, "{d:?}");
    }

    #[test]
    fn stokes_identities_hold() {
        let l = 10.0;
        let u = |x: f64| {
            0.4 * (2.0 * PI * x / l).sin() + 0.1 * (4.0 * PI * x / l).cos() + 0.3 * (-3.0 * (2.0 * PI * x / l).cos() - 3.0).exp()
        };
        let grid = PeriodicGrid::new(-5.0, l, 512);
        let us = grid.points().iter().map(|&x| u(x)).collect();
        let pb = TorusWeldProblem::new(grid, us, C64::new(0.05, 0.12), TorusOptions::new(128)).unwrap();
        let sol = solve_y1(&pb).unwrap();
        let (d1, d2) = sol.stokes_defects(DERIVATIVE_TAIL_TOL).unwrap();
        assert!(d1 < 1e-8 && d2 < 1e-7, "{d1} {d2}");
        assert!(sol.tau_hat.im > 0.0);
    }

    #[test]
    fn doubling_truncation_converges_fast() {
        let l = 10.0;
        let u = |x: f64| 0.3 * (2.0 * PI * x / l).sin() + 0.1 * (4.0 * PI * x / l).cos();
        let taus: Vec<C64> = [32usize, 64, 128]
            .iter()
            .map(|&n| solve_y1(&problem(l, 1024, n, tau(0.15), u)).map(|s| s.tau_hat))
            .collect::<Result<_>>()
            .unwrap_or_default();
        if taus.len() == 3 {
            let (e1, e2) = ((taus[0] - taus[2]).norm(), (taus[1] - taus[2]).norm());
            assert!(e2 * 10.0 <= e1 || e1 < 1e-13, "{e1} {e2}");
        }
    }

    #[test]
    fn quasi_periodicity_and_boundary_relations() {
        let l = 10.0;
        let pb = problem(l, 256, 64, tau(0.15), eps_perturbation(l));
        let sol = solve_y1(&pb).unwrap();
        for j in 0..256 {
            assert!((sol.x2[j] - sol.x1[j] - l * sol.tau_hat).norm() < 1e-12);
        }
        let a = sol.xprime_at(-5.0);
        let b = sol.xprime_at(5.0);
        assert!((a - b).norm() < 1e-12);
        assert!((sol.xprime_at(sol.grid.x(17)) - sol.xprime[17]).norm() < 1e-11);
    }

    #[test]
    fn effective_tau_for_zero_field_is_constant() {
        let grid = PeriodicGrid::new(-5.0, 10.0, 256);
        let r = effective_tau_ode(grid, &vec![0.0; 256], tau(0.15), TorusOptions::new(64), 0.3, 4, |s| {
            Ok(grid.points().iter().map(|&x| 0.01 * s * (2.0 * PI * x / 10.0).sin()).collect())
        })
        .unwrap();
        assert_eq!(r.tau_hat, tau(0.15));
    }
}
