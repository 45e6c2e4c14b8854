use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{schwarzian_from_derivative, DERIVATIVE_TAIL_TOL};
use crate::error::{Error, Result};
use crate::linalg::{rel_residual, CMat, Lu};
use crate::spectral::{derivative_real, eval_modes, modes, synthesize, to_complex, PeriodicGrid};
use crate::torus_weld::{assemble_k, KernelBlocks, SolveStats, TorusOptions, TorusWeldProblem};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderOptions {
    /// Window padding on each side of the support, in units of gamma.
    pub pad: f64,
    /// Initial momentum cutoff; defaults to 40 / gamma.
    pub p_max: Option<f64>,
    /// Absolute tail bound for the window spectrum of g - id and for the kernel edges.
    pub tail_tol: f64,
    pub cond_max: f64,
    pub residual_tol: f64,
    /// Factor applied to the cutoff at each refinement of the adaptive planner.
    pub growth: f64,
    pub max_refinements: usize,
}

impl Default for CylinderOptions {
    fn default() -> Self {
        CylinderOptions { pad: 6.0, p_max: None, tail_tol: 1e-12, cond_max: 1e12, residual_tol: 1e-10, growth: 1.5, max_refinements: 8 }
    }
}

/// Minimal distance, in units of gamma, between the support of g - id and the window edge.
pub const MIN_CLEARANCE: f64 = 5.0;

pub type Sampler<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;

/// Welding of a line diffeomorphism g, equal to the identity outside `support`.
pub struct CylinderWeldProblem<'a> {
    pub gamma: f64,
    pub support: (f64, f64),
    pub g: &'a Sampler<'a>,
    pub opts: CylinderOptions,
}

/// Periodised discretisation of the window.
#[derive(Clone, Debug)]
pub struct Discretization {
    pub grid: PeriodicGrid,
    pub n: usize,
    pub p_max: f64,
    pub u: Vec<f64>,
    /// Largest |P c_k| of g - id over N < |k| <= 2N.
    pub tail: f64,
}

fn spectrum_tail(grid: &PeriodicGrid, u: &[f64], n: usize) -> f64 {
    let c = modes(grid, &to_complex(u));
    (0..grid.m)
        .filter(|&k| {
            let a = grid.mode(k).unsigned_abs() as usize;
            a > n && a <= 2 * n
        })
        .map(|k| c[k].norm() * grid.period)
        .fold(0.0, f64::max)
}

/// Chooses the window and the momentum cutoff, growing the cutoff until the spectrum of
/// g - id on the window is resolved.
pub fn plan(pb: &CylinderWeldProblem) -> Result<Discretization> {
    let gamma = pb.gamma;
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if !(pb.opts.growth > 1.0) {
        return Err(Error::config("numerics.p_growth", "must exceed 1"));
    }
    if pb.opts.pad < MIN_CLEARANCE {
        return Err(Error::WindowTooSmall { dist: pb.opts.pad * gamma, need: MIN_CLEARANCE * gamma });
    }
    let (slo, shi) = pb.support;
    let lo = slo - pb.opts.pad * gamma;
    let period = shi - slo + 2.0 * pb.opts.pad * gamma;
    let mut p_max = pb.opts.p_max.unwrap_or(40.0 / gamma);
    let mut refinements = 0;
    loop {
        let n = (p_max * period / (2.0 * PI)).ceil() as usize;
        let grid = PeriodicGrid::new(lo, period, 4 * n);
        let xs = grid.points();
        let gx = (pb.g)(&xs)?;
        let u: Vec<f64> = gx.iter().zip(&xs).map(|(g, x)| g - x).collect();
        let clear = MIN_CLEARANCE * gamma;
        let scale = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut dist = f64::INFINITY;
        for (x, v) in xs.iter().zip(&u) {
            if v.abs() > 1e-14 * scale.max(1.0) {
                dist = dist.min(x - lo).min(lo + period - x);
            }
        }
        if dist < clear {
            return Err(Error::WindowTooSmall { dist, need: clear });
        }
        let tail = spectrum_tail(&grid, &u, n);
        if tail <= pb.opts.tail_tol {
            return Ok(Discretization { grid, n, p_max, u, tail });
        }
        if refinements == pb.opts.max_refinements {
            return Err(Error::TruncationTooCoarse { tail, n, tol: pb.opts.tail_tol });
        }
        refinements += 1;
        p_max *= pb.opts.growth;
    }
}

/// p / (1 - e^{-gamma |p|}) with a series near p = 0.
pub fn momentum_factor(p: f64, gamma: f64) -> f64 {
    let x = gamma * p.abs();
    let mag = if x < 1e-4 { (1.0 + 0.5 * x + x * x / 12.0) / gamma } else { p.abs() / -(-x).exp_m1() };
    mag.copysign(p)
}

fn torus_problem(gamma: f64, disc: &Discretization, opts: &CylinderOptions) -> Result<TorusWeldProblem> {
    let tau = C64::new(0.0, gamma / disc.grid.period);
    let mut topts = TorusOptions::new(disc.n);
    topts.tail_tol = opts.tail_tol;
    TorusWeldProblem::new(disc.grid, disc.u.clone(), tau, topts)
}

/// Sigma = -(K - K0) diag(1 / (1 - e^{-gamma |p|})) on the modes n != 0.
pub fn assemble_sigma(blocks: &KernelBlocks, grid: &PeriodicGrid, gamma: f64) -> CMat {
    let n = blocks.n;
    let k = blocks.k();
    let idx: Vec<usize> = (0..2 * n + 1).filter(|&i| i != n).collect();
    let p = |i: usize| grid.p(i as i64 - n as i64);
    CMat::from_fn(idx.len(), idx.len(), |a, b| {
        let (i, j) = (idx[a], idx[b]);
        let mut kij = k.get(i, j);
        if i == j {
            kij -= (-gamma * p(i).abs()).exp();
        }
        -kij / -(-gamma * p(j).abs()).exp_m1()
    })
}

/// Schwartz-type decay probe: the largest |Sigma(p, q)| (1 + p^2)^2 (1 + q^2)^2 over entries
/// above the round-off floor `floor`, split into the inner region max(|p|, |q|) < p_cut / 2
/// and the outer region up to the cutoff.
pub fn sigma_decay(sigma: &CMat, grid: &PeriodicGrid, n: usize, floor: f64) -> (f64, f64) {
    let mode = |a: usize| if a < n { a as i64 - n as i64 } else { a as i64 - n as i64 + 1 };
    let half = grid.p(n as i64) / 2.0;
    let (mut inner, mut outer) = (0.0f64, 0.0f64);
    for a in 0..sigma.rows {
        let p = grid.p(mode(a));
        for b in 0..sigma.cols {
            let v = sigma.get(a, b).norm();
            if v <= floor {
                continue;
            }
            let q = grid.p(mode(b));
            let w = v * (1.0 + p * p).powi(2) * (1.0 + q * q).powi(2);
            if p.abs().max(q.abs()) < half {
                inner = inner.max(w);
            } else {
                outer = outer.max(w);
            }
        }
    }
    (inner, outer)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CylinderWeldSolution {
    pub grid: PeriodicGrid,
    pub n: usize,
    pub gamma: f64,
    pub p_max: f64,
    /// X' of the periodised problem at the window edge; the line solution is X'/kappa.
    pub kappa: C64,
    /// Z on modes -N..=N (index n + N), zero at n = 0.
    pub z_modes: Vec<C64>,
    pub u_modes: Vec<C64>,
    pub u: Vec<f64>,
    pub xprime: Vec<C64>,
    pub sx: Vec<C64>,
    pub stats: SolveStats,
}

impl CylinderWeldSolution {
    fn y1p_at(&self, x: f64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (k, z) in self.z_modes.iter().enumerate() {
            if k == self.n {
                continue;
            }
            let p = self.grid.p(k as i64 - self.n as i64);
            s += C64::new(0.0, -momentum_factor(p, self.gamma)) * z * C64::from_polar(1.0, -p * x);
        }
        s
    }

    /// X'(x) by trigonometric interpolation inside the window.
    pub fn xprime_at(&self, x: f64) -> C64 {
        (1.0 + eval_modes(&self.grid, &self.u_modes, x, 1) - self.y1p_at(x)) / self.kappa
    }

    pub fn window(&self) -> (f64, f64) {
        (self.grid.x0, self.grid.x0 + self.grid.period)
    }

    /// Least-squares slope of ln|X' - 1| over [a, b].
    pub fn decay_rate(&self, a: f64, b: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .grid
            .points()
            .iter()
            .zip(&self.xprime)
            .filter(|(x, _)| **x >= a && **x <= b)
            .map(|(x, d)| (*x, (d - 1.0).norm().ln()))
            .collect();
        let k = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / k, sy / k);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(n, d), (x, y)| (n + (x - mx) * (y - my), d + (x - mx) * (x - mx)));
        num / den
    }
}

/// Plans and solves, growing the cutoff further when the kernel blocks are not yet resolved.
pub fn solve_cylinder(pb: &CylinderWeldProblem) -> Result<CylinderWeldSolution> {
    let mut opts = pb.opts;
    loop {
        let disc = plan(&CylinderWeldProblem { opts, ..*pb })?;
        match solve_discretized(pb.gamma, &disc, &opts) {
            Err(Error::TruncationTooCoarse { .. }) if opts.max_refinements > 0 => {
                opts.p_max = Some(disc.p_max * opts.growth);
                opts.max_refinements -= 1;
            }
            r => return r,
        }
    }
}

pub fn solve_discretized(gamma: f64, disc: &Discretization, opts: &CylinderOptions) -> Result<CylinderWeldSolution> {
    let tp = torus_problem(gamma, disc, opts)?;
    let blocks = assemble_k(&tp)?;
    let grid = disc.grid;
    let n = disc.n;
    let dim = 2 * n + 1;
    let sigma = assemble_sigma(&blocks, &grid, gamma);

    let u_modes = modes(&grid, &to_complex(&disc.u));
    let y12p: Vec<C64> =
        (0..dim).map(|i| if i == n { C64::new(0.0, 0.0) } else { u_modes[grid.slot(i as i64 - n as i64)] }).collect();
    let k12y = blocks.k12.matvec(&y12p);
    let idx: Vec<usize> = (0..dim).filter(|&i| i != n).collect();
    let rhs: Vec<C64> = idx.iter().map(|&i| if i < n { y12p[i] } else { C64::new(0.0, 0.0) } - k12y[i]).collect();
    let mut a = sigma;
    for d in 0..idx.len() {
        a.add_at(d, d, C64::new(1.0, 0.0));
    }
    let lu = Lu::new(&a)?;
    let cond = lu.cond1_estimate();
    if !(cond <= opts.cond_max) {
        return Err(Error::NearSingular { cond });
    }
    let z = lu.solve(&rhs);
    let res = rel_residual(&a, &z, &rhs);
    if !(res <= opts.residual_tol) {
        return Err(Error::NearSingular { cond });
    }
    let mut z_modes = vec![C64::new(0.0, 0.0); dim];
    let mut y1p_slots = vec![C64::new(0.0, 0.0); grid.m];
    for (v, &i) in z.iter().zip(&idx) {
        z_modes[i] = *v;
        let nn = i as i64 - n as i64;
        y1p_slots[grid.slot(nn)] = C64::new(0.0, -momentum_factor(grid.p(nn), gamma)) * v;
    }
    let y1p = synthesize(&grid, &y1p_slots);
    let up = derivative_real(&grid, &disc.u, 1);
    let xt: Vec<C64> = up.iter().zip(&y1p).map(|(d, y)| 1.0 + d - y).collect();
    let kappa = xt[0];
    let xprime: Vec<C64> = xt.iter().map(|v| v / kappa).collect();
    if xprime.iter().any(|v| v.norm() == 0.0 || !v.is_finite()) {
        return Err(Error::NearSingular { cond });
    }
    let sx = schwarzian_from_derivative(&grid, &xprime, DERIVATIVE_TAIL_TOL)?;
    Ok(CylinderWeldSolution {
        grid,
        n,
        gamma,
        p_max: disc.p_max,
        kappa,
        z_modes,
        u_modes,
        u: disc.u.clone(),
        xprime,
        sx,
        stats: SolveStats { cond, rel_residual: res, tail: blocks.tail.max(disc.tail) },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCheck {
    pub defect_1: f64,
    pub defect_2: f64,
}

/// Evaluates the two boundary relations of the line problem in real space, in their
/// differentiated form, on at most `points` window nodes:
///   Y1'/(2 g') = (1/2 pi i) [PV \int Y1' / (g(y) - g(x)) - \int Y2' / (y - g(x) + i gamma)],
///   Y2'/2 = (1/2 pi i) [\int Y1' / (g(y) - i gamma - x) - PV \int Y2' / (y - x)],
/// with Y1' = g' - X' and Y2' = 1 - X'.
pub fn realspace_crosscheck(sol: &CylinderWeldSolution, points: usize) -> CrossCheck {
    let grid = sol.grid;
    let m = grid.m;
    let h = grid.h();
    let xs = grid.points();
    let up = derivative_real(&grid, &sol.u, 1);
    let upp = derivative_real(&grid, &sol.u, 2);
    let gx: Vec<f64> = xs.iter().zip(&sol.u).map(|(x, u)| x + u).collect();
    let gp: Vec<f64> = up.iter().map(|d| 1.0 + d).collect();
    let y1p: Vec<C64> = gp.iter().zip(&sol.xprime).map(|(g, x)| g - x).collect();
    let y2p: Vec<C64> = sol.xprime.iter().map(|x| 1.0 - x).collect();
    let phi: Vec<C64> = y1p.iter().zip(&gp).map(|(y, g)| y / g).collect();
    let dphi = crate::spectral::derivative(&grid, &phi, 1);
    let dy2 = crate::spectral::derivative(&grid, &y2p, 1);
    let gamma = sol.gamma;
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    let stride = (m / points.max(1)).max(1);
    let (mut d1, mut d2) = (0.0f64, 0.0f64);
    for i in (0..m).step_by(stride) {
        let x = xs[i];
        let mut pv1 = dphi[i] * h;
        let mut int2 = C64::new(0.0, 0.0);
        let mut int3 = C64::new(0.0, 0.0);
        let mut pv4 = dy2[i] * h;
        for j in 0..m {
            let y = xs[j];
            if j == i {
                pv1 += phi[j] * upp[j] / (2.0 * gp[j]) * h;
            } else {
                let split = gp[j] / (gx[j] - gx[i]) - 1.0 / (y - x);
                pv1 += phi[j] * (1.0 / (y - x) + split) * h;
                pv4 += y2p[j] / (y - x) * h;
            }
            int2 += y2p[j] / C64::new(y - gx[i], gamma) * h;
            int3 += y1p[j] / C64::new(gx[j] - x, -gamma) * h;
        }
        let r1 = y1p[i] / (2.0 * gp[i]) - (pv1 - int2) / two_pi_i;
        let r2 = y2p[i] / 2.0 - (int3 - pv4) / two_pi_i;
        d1 = d1.max(r1.norm());
        d2 = d2.max(r2.norm());
    }
    CrossCheck { defect_1: d1, defect_2: d2 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::OdeOptions;
    use crate::profile::{KinkMaps, Mover, TemperatureProfile};
    use crate::quad::composite;

    fn kink() -> KinkMaps {
        KinkMaps::new(TemperatureProfile::default_kink(), 1.0).unwrap()
    }

    fn solve_kink(k: &KinkMaps, mover: Mover, s: f64, t: f64, opts: CylinderOptions) -> Result<CylinderWeldSolution> {
        let sampler = |ys: &[f64]| k.g(mover, s, t, ys, OdeOptions::default());
        let pb = CylinderWeldProblem { gamma: k.gamma(), support: k.g_support(mover, s, t), g: &sampler, opts };
        solve_cylinder(&pb)
    }

    #[test]
    fn identity_welding_is_trivial() {
        let id = |ys: &[f64]| Ok(ys.to_vec());
        let pb = CylinderWeldProblem { gamma: 1.0, support: (-1.0, 1.0), g: &id, opts: CylinderOptions::default() };
        let disc = plan(&pb).unwrap();
        let blocks = assemble_k(&torus_problem(1.0, &disc, &pb.opts).unwrap()).unwrap();
        assert!(assemble_sigma(&blocks, &disc.grid, 1.0).max_abs() < 1e-15);
        let sol = solve_cylinder(&pb).unwrap();
        assert!(sol.xprime.iter().all(|x| (x - 1.0).norm() < 1e-13));
        let worst = sol.sx.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        assert!(worst < 1e-12, "{worst} {}", sol.grid.m);
        let cc = realspace_crosscheck(&sol, 64);
        assert!(cc.defect_1 < 1e-12 && cc.defect_2 < 1e-12);
    }

    #[test]
    fn momentum_factor_limits() {
        assert!((momentum_factor(1e-9, 2.0) - 0.5).abs() < 1e-8);
        assert!((momentum_factor(-1e-9, 2.0) + 0.5).abs() < 1e-8);
        let p: f64 = 0.3;
        assert!((momentum_factor(p, 2.0) - p / (1.0 - (-0.6f64).exp())).abs() < 1e-15);
        let x = 0.99e-4;
        let series = momentum_factor(x / 2.0, 2.0);
        let direct = (x / 2.0) / -(-x).exp_m1();
        assert!((series - direct).abs() < 1e-12);
    }

    #[test]
    fn narrow_window_is_rejected() {
        let k = kink();
        let sampler = |ys: &[f64]| k.g(Mover::Plus, 0.2, 2.0, ys, OdeOptions::default());
        let (lo, hi) = k.g_support(Mover::Plus, 0.2, 2.0);
        let pb = CylinderWeldProblem {
            gamma: k.gamma(),
            support: (lo + 2.0, hi),
            g: &sampler,
            opts: CylinderOptions::default(),
        };
        assert!(matches!(solve_cylinder(&pb), Err(Error::WindowTooSmall { .. })));
    }

    #[test]
    fn cutoff_doubling_leaves_sigma_stable() {
        let k = kink();
        let sampler = |ys: &[f64]| k.g(Mover::Plus, 0.2, 2.0, ys, OdeOptions::default());
        let mut opts = CylinderOptions::default();
        let pb = CylinderWeldProblem { gamma: k.gamma(), support: k.g_support(Mover::Plus, 0.2, 2.0), g: &sampler, opts };
        let d1 = plan(&pb).unwrap();
        opts.p_max = Some(2.0 * d1.p_max);
        let pb2 = CylinderWeldProblem { opts, ..pb };
        let d2 = plan(&pb2).unwrap();
        let s1 = assemble_sigma(&assemble_k(&torus_problem(pb.gamma, &d1, &opts).unwrap()).unwrap(), &d1.grid, pb.gamma);
        let s2 = assemble_sigma(&assemble_k(&torus_problem(pb.gamma, &d2, &opts).unwrap()).unwrap(), &d2.grid, pb.gamma);
        let off = d2.n - d1.n;
        let mut worst: f64 = 0.0;
        for a in 0..s1.rows {
            for b in 0..s1.cols {
                worst = worst.max((s1.get(a, b) - s2.get(a + off, b + off)).norm());
            }
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn sigma_entries_decay_faster_than_inverse_quartic() {
        let k = kink();
        let sampler = |ys: &[f64]| k.g(Mover::Plus, 0.2, 4.0, ys, OdeOptions::default());
        let opts = CylinderOptions::default();
        let pb = CylinderWeldProblem { gamma: k.gamma(), support: k.g_support(Mover::Plus, 0.2, 4.0), g: &sampler, opts };
        let d = plan(&pb).unwrap();
        let s = assemble_sigma(&assemble_k(&torus_problem(pb.gamma, &d, &opts).unwrap()).unwrap(), &d.grid, pb.gamma);
        let (inner, outer) = sigma_decay(&s, &d.grid, d.n, 1e-14);
        assert!(inner.is_finite() && outer < inner, "{inner} {outer}");
    }

    #[test]
    fn kink_solution_decays_and_passes_crosscheck() {
        let k = kink();
        let sol = solve_kink(&k, Mover::Plus, 0.2, 2.0, CylinderOptions::default()).unwrap();
        let cc = realspace_crosscheck(&sol, 128);
        assert!(cc.defect_1 < 1e-6 && cc.defect_2 < 1e-6, "{cc:?}");
        let g = k.gamma();
        let lo = k.g_support(Mover::Plus, 0.2, 2.0).0;
        let rate = sol.decay_rate(lo - 3.0 * g, lo - 0.5 * g);
        let want = 2.0 * PI / g;
        assert!((rate - want).abs() < 0.1 * want, "{rate} {want}");
        assert!(sol.xprime.iter().all(|x| x.norm() > 0.0));
    }

    #[test]
    fn mover_reflection_symmetry() {
        let k = kink();
        let (s, t) = (0.2, 2.0);
        let minus = solve_kink(&k, Mover::Minus, s, t, CylinderOptions::default()).unwrap();
        let mirror = solve_kink(&k, Mover::Plus, -s, -t, CylinderOptions::default()).unwrap();
        let mut worst: f64 = 0.0;
        for j in 0..41 {
            let x = -4.0 + 0.2 * j as f64;
            worst = worst.max((minus.xprime_at(x) - mirror.xprime_at(-x).conj()).norm());
        }
        assert!(worst < 1e-9, "{worst}");
    }

    #[test]
    fn linear_response_matches_momentum_integral() {
        let k = kink();
        let (t, h) = (4.0, 1e-4);
        let opts = CylinderOptions { pad: 8.0, ..Default::default() };
        let plus = solve_kink(&k, Mover::Plus, h, t, opts).unwrap();
        let minus = solve_kink(&k, Mover::Plus, -h, t, opts).unwrap();
        let (ylo, yhi) = k.xi_support(Mover::Plus, t);
        let (ys, yw) = composite(ylo, yhi, 80, 40);
        let xi: Vec<f64> = ys.iter().map(|&y| k.xi(Mover::Plus, t, y)).collect();
        let (ps, pw) = composite(-150.0, 150.0, 600, 40);
        let g = k.gamma();
        let xihat: Vec<C64> =
            ps.iter().map(|&p| ys.iter().zip(&yw).zip(&xi).map(|((y, w), v)| C64::from_polar(w * v, p * y)).sum()).collect();
        let mut worst: f64 = 0.0;
        for j in 0..17 {
            let x = -6.0 + 0.5 * j as f64;
            let num = (plus.xprime_at(x) - minus.xprime_at(x)) / (2.0 * h);
            let cf: C64 = ps
                .iter()
                .zip(&pw)
                .zip(&xihat)
                .map(|((p, w), xh)| w * p / -(-g * p).exp_m1() * C64::from_polar(1.0, -p * x) * xh)
                .sum::<C64>()
                * C64::new(0.0, 1.0 / (2.0 * PI));
            worst = worst.max((num - cf).norm());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn plateau_multiplier_for_long_times() {
        let k = kink();
        let (s, t) = (0.2, 16.0);
        let sol = solve_kink(&k, Mover::Plus, s, t, CylinderOptions::default()).unwrap();
        let p = k.profile;
        let (a, d) = (p.center, p.half_width);
        let mid = 0.5 * (k.h(a + d - t) + k.h(a - d));
        let want = 1.0 / C64::new(1.0, -p.delta_beta() * s / p.beta_left);
        assert!((sol.xprime_at(mid) - want).norm() < 1e-3, "{} {want}", sol.xprime_at(mid));
    }
}

