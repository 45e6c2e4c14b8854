use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::{action_integral, counterterm_box, counterterm_integral};
use crate::characters::{small_tau_ratio, SmallTauRatio, Theory};
use crate::cylinder_weld::{solve_cylinder, CylinderOptions, CylinderWeldProblem, CylinderWeldSolution};
use crate::error::{Error, Result};
use crate::ode::OdeOptions;
use crate::profile::{BoxMaps, KinkMaps, Mover};
use crate::quad::{cheb_points, composite, ChebSeries};
use crate::spectral::PeriodicGrid;
use crate::torus_weld::{solve_y1, TorusOptions, TorusWeldProblem, TorusWeldSolution};

/// Order-preserving map over independent work items, parallel when the `parallel` feature is on.
pub fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Nested Chebyshev sampling of the s-integrands.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    /// Initial number of Chebyshev intervals; nodes = initial + 1.
    pub initial: usize,
    /// Largest number of intervals before giving up.
    pub max: usize,
    /// Bound on the change of the s-integrals under node doubling, relative to max(1, |integral|).
    pub tol: f64,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { initial: 4, max: 64, tol: 1e-7 }
    }
}

/// Samples of vector-valued integrands along s in [lo, hi] with their Chebyshev interpolants.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SPath {
    pub lo: f64,
    pub hi: f64,
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<C64>>,
    pub series: Vec<ChebSeries>,
    /// max over targets of |I_2n - I_n| for each integrand.
    pub error: Vec<f64>,
}

impl SPath {
    /// \int_0^s of integrand `k`.
    pub fn integral(&self, k: usize, s: f64) -> C64 {
        if s == 0.0 || self.series.is_empty() {
            return C64::new(0.0, 0.0);
        }
        self.series[k].integral(0.0, s)
    }

    pub fn max_error(&self) -> f64 {
        self.error.iter().fold(0.0, |m, e| m.max(*e))
    }
}

fn s_range(targets: &[f64]) -> (f64, f64) {
    targets.iter().fold((0.0f64, 0.0f64), |(a, b), s| (a.min(*s), b.max(*s)))
}

/// Samples `sample(s)` (a fixed number `dim` of integrands) on nested Chebyshev nodes spanning
/// 0 and all `targets`, doubling until the integrals to each target settle.
pub fn sample_path<F>(targets: &[f64], dim: usize, opts: PathOptions, sample: F) -> Result<SPath>
where
    F: Fn(f64) -> Result<Vec<C64>> + Sync + Send,
{
    let (lo, hi) = s_range(targets);
    if lo == hi {
        return Ok(SPath { lo, hi, nodes: vec![], values: vec![], series: vec![], error: vec![0.0; dim] });
    }
    if opts.initial == 0 || opts.max < 2 * opts.initial {
        return Err(Error::config("numerics.s_nodes", "need 0 < initial and max >= 2 initial"));
    }
    let mut n = opts.initial;
    let mut nodes = cheb_points(lo, hi, n);
    let mut values = par_map(&nodes, |&s| sample(s)).into_iter().collect::<Result<Vec<_>>>()?;
    let build = |vals: &[Vec<C64>]| -> Vec<ChebSeries> {
        (0..dim)
            .map(|k| ChebSeries::from_values(lo, hi, &vals.iter().map(|v| v[k]).collect::<Vec<_>>()))
            .collect()
    };
    let mut series = build(&values);
    loop {
        let n2 = 2 * n;
        let fine = cheb_points(lo, hi, n2);
        let fresh: Vec<f64> = fine.iter().skip(1).step_by(2).copied().collect();
        let new_vals = par_map(&fresh, |&s| sample(s)).into_iter().collect::<Result<Vec<_>>>()?;
        let mut merged = Vec::with_capacity(n2 + 1);
        let mut it = new_vals.into_iter();
        for (k, v) in values.into_iter().enumerate() {
            if k > 0 {
                merged.push(it.next().expect("one fresh node between old nodes"));
            }
            merged.push(v);
        }
        let fine_series = build(&merged);
        let error: Vec<f64> = (0..dim)
            .map(|k| {
                targets
                    .iter()
                    .filter(|s| **s != 0.0)
                    .map(|&s| {
                        let a = fine_series[k].integral(0.0, s);
                        (a - series[k].integral(0.0, s)).norm() / a.norm().max(1.0)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        nodes = fine;
        values = merged;
        series = fine_series;
        n = n2;
        if error.iter().all(|e| *e <= opts.tol) {
            return Ok(SPath { lo, hi, nodes, values, series, error });
        }
        if 2 * n > opts.max {
            return Err(Error::NotConverged { terms: n + 1 });
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfiniteOptions {
    pub cylinder: CylinderOptions,
    pub path: PathOptions,
    pub ode: OdeOptions,
}

impl Default for InfiniteOptions {
    fn default() -> Self {
        InfiniteOptions { cylinder: CylinderOptions::default(), path: PathOptions::default(), ode: OdeOptions::default() }
    }
}

/// Cylinder welding of g^pm_{s,t}.
pub fn solve_mover(kink: &KinkMaps, mover: Mover, s: f64, t: f64, opts: &InfiniteOptions) -> Result<CylinderWeldSolution> {
    let sampler = |ys: &[f64]| kink.g(mover, s, t, ys, opts.ode);
    let pb = CylinderWeldProblem { gamma: kink.gamma(), support: kink.g_support(mover, s, t), g: &sampler, opts: opts.cylinder };
    solve_cylinder(&pb)
}

/// A^pm(s) = \int xi^pm_t (SX - (2 pi^2 / gamma^2) X'^2) dy for the welding at flow time s.
pub fn mover_action(kink: &KinkMaps, mover: Mover, s: f64, t: f64, opts: &InfiniteOptions) -> Result<C64> {
    let sol = solve_mover(kink, mover, s, t, opts)?;
    let xi: Vec<f64> = sol.grid.points().iter().map(|&y| kink.xi(mover, t, y)).collect();
    action_integral(&sol.grid, &xi, &sol.xprime, &sol.sx, kink.gamma())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MoverPath {
    pub mover: Mover,
    /// \int (beta(x +- vt) - beta(x)) Sh dx.
    pub counterterm: f64,
    pub path: SPath,
}

/// c = 1 data from which lnPsi^pm_t follows for any central charge.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InfiniteBase {
    pub t: f64,
    pub v: f64,
    pub delta_beta: f64,
    pub movers: Vec<MoverPath>,
}

impl InfiniteBase {
    /// lnPsi^pm at flow time s for c = 1.
    pub fn ln_psi_mover(&self, mover: Mover, s: f64) -> C64 {
        let m = self.movers.iter().find(|m| m.mover == mover).expect("both movers sampled");
        let bracket = m.path.integral(0, s) + s * self.v * m.counterterm;
        C64::new(0.0, -1.0 / (24.0 * PI)) * bracket
    }

    pub fn point(&self, c: f64, lambda: f64, s: f64) -> FcsPoint {
        let plus = self.ln_psi_mover(Mover::Plus, s) * c;
        let minus = self.ln_psi_mover(Mover::Minus, s) * c;
        FcsPoint { lambda, s, ln_psi: plus + minus, ln_psi_plus: plus, ln_psi_minus: minus }
    }

    pub fn s_error(&self) -> f64 {
        self.movers.iter().map(|m| m.path.max_error()).fold(0.0, f64::max)
    }
}

/// Samples both mover paths over flow times covering `s_targets`.
pub fn infinite_base(kink: &KinkMaps, t: f64, s_targets: &[f64], opts: &InfiniteOptions) -> Result<InfiniteBase> {
    let mut movers = Vec::with_capacity(2);
    for mover in Mover::both() {
        let path = sample_path(s_targets, 1, opts.path, |s| Ok(vec![mover_action(kink, mover, s, t, opts)?]))?;
        movers.push(MoverPath { mover, counterterm: counterterm_integral(kink, mover, t), path });
    }
    Ok(InfiniteBase { t, v: kink.v, delta_beta: kink.profile.delta_beta(), movers })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FcsPoint {
    pub lambda: f64,
    pub s: f64,
    pub ln_psi: C64,
    pub ln_psi_plus: C64,
    pub ln_psi_minus: C64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FcsResult {
    pub t: f64,
    pub c: f64,
    pub points: Vec<FcsPoint>,
    pub counterterm_plus: f64,
    pub counterterm_minus: f64,
    pub s_error: f64,
    pub s_nodes: usize,
}

impl FcsResult {
    fn from_base(base: &InfiniteBase, c: f64, pairs: &[(f64, f64)]) -> Self {
        let ct = |m: Mover| base.movers.iter().find(|p| p.mover == m).map_or(0.0, |p| p.counterterm);
        FcsResult {
            t: base.t,
            c,
            points: pairs.iter().map(|&(l, s)| base.point(c, l, s)).collect(),
            counterterm_plus: ct(Mover::Plus),
            counterterm_minus: ct(Mover::Minus),
            s_error: base.s_error(),
            s_nodes: base.movers.iter().map(|m| m.path.nodes.len()).max().unwrap_or(0),
        }
    }
}

fn flow_times(kink: &KinkMaps, lambdas: &[f64]) -> Result<Vec<f64>> {
    let db = kink.profile.delta_beta();
    if db == 0.0 {
        return Err(Error::DeltaBetaZero);
    }
    Ok(lambdas.iter().map(|l| l / db).collect())
}

/// lnPsi_t(lambda) = sum over movers, at real counting parameters.
pub fn psi_infinite(kink: &KinkMaps, c: f64, t: f64, lambdas: &[f64], opts: &InfiniteOptions) -> Result<FcsResult> {
    let ss = flow_times(kink, lambdas)?;
    let base = infinite_base(kink, t, &ss, opts)?;
    let pairs: Vec<(f64, f64)> = lambdas.iter().copied().zip(ss).collect();
    Ok(FcsResult::from_base(&base, c, &pairs))
}

/// lnPsi_t parameterized by the flow time s = lambda / Delta beta; valid also for Delta beta = 0.
pub fn psi_infinite_by_s(kink: &KinkMaps, c: f64, t: f64, ss: &[f64], opts: &InfiniteOptions) -> Result<FcsResult> {
    let base = infinite_base(kink, t, ss, opts)?;
    let db = kink.profile.delta_beta();
    let pairs: Vec<(f64, f64)> = ss.iter().map(|&s| (s * db, s)).collect();
    Ok(FcsResult::from_base(&base, c, &pairs))
}

/// Quadrature nodes (y, weight) and values of xi^pm_t, built in the x chart where y = +-h(x).
pub fn xi_quadrature(kink: &KinkMaps, mover: Mover, t: f64) -> Vec<(f64, f64, f64)> {
    let p = &kink.profile;
    let (lo, hi) = p.support();
    let shift = mover.sign() * kink.v * t;
    if shift == 0.0 {
        return vec![];
    }
    let mut cuts = vec![lo, hi, lo - shift, hi - shift];
    cuts.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let panels = ((b - a) / 0.05).ceil().max(4.0) as usize;
        let (xs, ws) = composite(a, b, panels, 20);
        for (x, wt) in xs.iter().zip(&ws) {
            let val = kink.gamma() * (p.beta(x + shift) / p.beta(*x) - 1.0);
            if val != 0.0 {
                out.push((mover.sign() * kink.h(*x), wt * kink.h_prime(*x), val));
            }
        }
    }
    out
}

/// \int xi^pm_t dy.
pub fn xi_integral(kink: &KinkMaps, mover: Mover, t: f64) -> f64 {
    xi_quadrature(kink, mover, t).iter().map(|(_, w, v)| w * v).sum()
}

/// xi_hat(p) = \int e^{ipy} xi(y) dy on the given momenta.
pub fn xi_hat(quad: &[(f64, f64, f64)], ps: &[f64]) -> Vec<C64> {
    par_map(ps, |&p| quad.iter().map(|(y, w, v)| C64::from_polar(w * v, p * y)).sum())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentOptions {
    /// Upper momentum cutoff of the variance integral.
    pub p_cut: f64,
    /// Lower cutoff in units of 1/gamma; the integrand decays like e^{-gamma |p|} there.
    pub p_neg: f64,
    /// Momentum panel width.
    pub p_panel: f64,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions { p_cut: 200.0, p_neg: 40.0, p_panel: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean from the xi integrals and counterterms; variance from the momentum integral.
pub fn moments_closed_form(kink: &KinkMaps, c: f64, t: f64, opts: &MomentOptions) -> Result<Moments> {
    let db = kink.profile.delta_beta();
    if db == 0.0 {
        return Err(Error::DeltaBetaZero);
    }
    let g = kink.gamma();
    let lo = -opts.p_neg / g;
    let panels = ((opts.p_cut - lo) / opts.p_panel).ceil() as usize;
    let (ps, pw) = composite(lo, opts.p_cut, panels, 16);
    let (mut xi_sum, mut ct_sum, mut var_sum) = (0.0, 0.0, 0.0);
    for mover in Mover::both() {
        let quad = xi_quadrature(kink, mover, t);
        xi_sum += quad.iter().map(|(_, w, v)| w * v).sum::<f64>();
        ct_sum += counterterm_integral(kink, mover, t);
        if quad.is_empty() {
            continue;
        }
        let hat = xi_hat(&quad, &ps);
        var_sum += ps
            .iter()
            .zip(&pw)
            .zip(&hat)
            .map(|((p, w), h)| w * p * (p * p + 4.0 * PI * PI / (g * g)) / -(-g * p).exp_m1() * h.norm_sqr())
            .sum::<f64>();
    }
    let mean = PI * c / (12.0 * g * g * db) * xi_sum - c * kink.v / (24.0 * PI * db) * ct_sum;
    let variance = c / (48.0 * PI * PI * db * db) * var_sum;
    Ok(Moments { mean, variance })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineMoments {
    pub h: f64,
    /// lnPsi at lambda = -2h, -h, h, 2h.
    pub stencil: Vec<FcsPoint>,
    pub moments: Moments,
    pub s_error: f64,
}

/// Cumulants from lnPsi_t by five-point differences in lambda with step h.
pub fn moments_from_pipeline(kink: &KinkMaps, c: f64, t: f64, h: f64, opts: &InfiniteOptions) -> Result<PipelineMoments> {
    let lambdas = [-2.0 * h, -h, h, 2.0 * h];
    let r = psi_infinite(kink, c, t, &lambdas, opts)?;
    let f: Vec<C64> = r.points.iter().map(|p| p.ln_psi).collect();
    let d1 = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
    let d2 = (-f[0] + 16.0 * f[1] + 16.0 * f[2] - f[3]) / (12.0 * h * h);
    Ok(PipelineMoments { h, stencil: r.points, moments: Moments { mean: d1.im, variance: -d2.re }, s_error: r.s_error })
}

/// (gamma^4 / 3 pi^3) p (p^2 + 4 pi^2 / gamma^2) / (1 - e^{-gamma p}).
pub fn fourier_identity_closed_form(gamma: f64, p: f64) -> f64 {
    let m = if (gamma * p).abs() < 1e-8 { 1.0 / gamma + 0.5 * p } else { p / -(-gamma * p).exp_m1() };
    gamma.powi(4) / (3.0 * PI.powi(3)) * (p * p + 4.0 * PI * PI / (gamma * gamma)) * m
}

/// \int e^{ipy} / sinh^4(pi (y - i0) / gamma) dy on the shifted line y - i gamma / 2,
/// where the integrand becomes e^{ipy + p gamma / 2} / cosh^4(pi y / gamma).
pub fn fourier_identity_quadrature(gamma: f64, p: f64) -> C64 {
    let half = 14.0 * gamma;
    let panels = (2.0 * half * (1.0 + p.abs()) / gamma).ceil().max(64.0) as usize;
    let (ys, ws) = composite(-half, half, panels, 20);
    let pref = (0.5 * p * gamma).exp();
    ys.iter().zip(&ws).map(|(y, w)| C64::from_polar(w * pref / (PI * y / gamma).cosh().powi(4), p * y)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LdfPoint {
    pub lambda: C64,
    pub plus: C64,
    pub minus: C64,
    pub total: C64,
}

fn pole_guard(den: C64, lambda: C64, beta: f64) -> Result<()> {
    if den.norm() <= 1e-12 * beta {
        return Err(Error::PoleHit { re: lambda.re, im: lambda.im });
    }
    Ok(())
}

/// Xi^+(lambda) = (pi c / 12)(1/(beta_L - i lambda) - 1/beta_L).
pub fn xi_rate_plus(beta_left: f64, c: f64, lambda: C64) -> Result<C64> {
    let den = beta_left - C64::i() * lambda;
    pole_guard(den, lambda, beta_left)?;
    Ok(PI * c / 12.0 * (1.0 / den - 1.0 / beta_left))
}

/// Xi^-(lambda) = (pi c / 12)(1/(beta_R + i lambda) - 1/beta_R).
pub fn xi_rate_minus(beta_right: f64, c: f64, lambda: C64) -> Result<C64> {
    let den = beta_right + C64::i() * lambda;
    pole_guard(den, lambda, beta_right)?;
    Ok(PI * c / 12.0 * (1.0 / den - 1.0 / beta_right))
}

pub fn ldf(beta_left: f64, beta_right: f64, c: f64, lambda: C64) -> Result<LdfPoint> {
    let plus = xi_rate_plus(beta_left, c, lambda)?;
    let minus = xi_rate_minus(beta_right, c, lambda)?;
    Ok(LdfPoint { lambda, plus, minus, total: plus + minus })
}

/// Long-time free-fermion formula (c = 1) with Fermi functions, by quadrature in omega.
pub fn levitov_lesovik(beta_left: f64, beta_right: f64, lambda: f64) -> C64 {
    let fermi = |b: f64, w: f64| 1.0 / ((b * w).exp() + 1.0);
    let hole = |b: f64, w: f64| 1.0 / ((-b * w).exp() + 1.0);
    let half = 60.0 / beta_left.min(beta_right);
    let panels = (2.0 * half * (1.0 + lambda.abs()) / 0.5).ceil() as usize;
    let (ws, wt) = composite(-half, half, panels, 20);
    let sum: C64 = ws
        .iter()
        .zip(&wt)
        .map(|(&w, &q)| {
            let a = fermi(beta_left, w) * hole(beta_right, w) * (C64::from_polar(1.0, lambda * w) - 1.0);
            let b = fermi(beta_right, w) * hole(beta_left, w) * (C64::from_polar(1.0, -lambda * w) - 1.0);
            q * (1.0 + a + b).ln()
        })
        .sum();
    sum / (2.0 * PI)
}

/// w(x, y) with theta(0) = 1/2.
pub fn levy_jump_rate(beta_left: f64, beta_right: f64, c: f64, x: f64, y: f64) -> f64 {
    let theta = |z: f64| {
        if z > 0.0 {
            1.0
        } else if z < 0.0 {
            0.0
        } else {
            0.5
        }
    };
    PI * c / 12.0 * ((-beta_left * (y - x)).exp() * theta(y - x) + (-beta_right * (x - y)).exp() * theta(x - y))
}

/// \int (e^{i lambda q} - 1) w(0, q) dq by quadrature.
pub fn levy_khintchine(beta_left: f64, beta_right: f64, c: f64, lambda: f64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for (a, b) in [(0.0, 60.0 / beta_left), (-60.0 / beta_right, 0.0)] {
        let panels = ((b - a) * (1.0 + lambda.abs()) / 0.25).ceil() as usize;
        let (qs, ws) = composite(a, b, panels, 20);
        total += qs
            .iter()
            .zip(&ws)
            .map(|(&q, &w)| w * levy_jump_rate(beta_left, beta_right, c, 0.0, q) * (C64::from_polar(1.0, lambda * q) - 1.0))
            .sum::<C64>();
    }
    total
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub sigma: f64,
    /// Maximizer of nu sigma - G(nu).
    pub nu: f64,
    pub rate: f64,
    /// |I(sigma) - (beta_L sigma - sqrt(pi c sigma / 3))| for sigma > 0, mirrored for sigma < 0.
    pub asymptotic_defect: f64,
}

/// G(nu) = Xi(-i nu), real on (-beta_R, beta_L).
pub fn cumulant_function(beta_left: f64, beta_right: f64, c: f64, nu: f64) -> f64 {
    PI * c / 12.0 * (nu / (beta_left * (beta_left - nu)) - nu / (beta_right * (beta_right + nu)))
}

pub fn rate_function(beta_left: f64, beta_right: f64, c: f64, sigma: f64) -> RatePoint {
    let k = PI * c / 12.0;
    let nu = if c == 0.0 {
        if sigma > 0.0 {
            beta_left
        } else if sigma < 0.0 {
            -beta_right
        } else {
            0.0
        }
    } else {
        let d1 = |n: f64| k * (1.0 / ((beta_left - n) * (beta_left - n)) - 1.0 / ((beta_right + n) * (beta_right + n))) - sigma;
        let d2 = |n: f64| 2.0 * k * (1.0 / (beta_left - n).powi(3) + 1.0 / (beta_right + n).powi(3));
        let (mut a, mut b) = (-beta_right, beta_left);
        let mut n = 0.0;
        for _ in 0..400 {
            let f = d1(n);
            if f == 0.0 {
                break;
            }
            if f > 0.0 {
                b = n;
            } else {
                a = n;
            }
            let mut next = n - f / d2(n);
            if !(next > a && next < b) {
                next = 0.5 * (a + b);
            }
            let done = (next - n).abs() <= 1e-16 * (1.0 + n.abs());
            n = next;
            if done {
                break;
            }
        }
        n
    };
    let rate = if c == 0.0 { nu * sigma } else { nu * sigma - cumulant_function(beta_left, beta_right, c, nu) };
    let asym = if sigma >= 0.0 {
        beta_left * sigma - (PI * c * sigma / 3.0).sqrt()
    } else {
        -beta_right * sigma - (-PI * c * sigma / 3.0).sqrt()
    };
    RatePoint { sigma, nu, rate, asymptotic_defect: (rate - asym).abs() }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LdfResult {
    pub beta_left: f64,
    pub beta_right: f64,
    pub c: f64,
    pub xi: Vec<LdfPoint>,
    pub rate: Vec<RatePoint>,
    /// max |I(-sigma) - I(sigma) - sigma Delta beta| over the sigma grid.
    pub gallavotti_cohen_defect: f64,
    /// Smallest second difference of I over the sigma grid, scaled by the local spacing.
    pub min_curvature: f64,
    /// max |Xi(lambda) - Xi(-lambda + i Delta beta)| over the lambda grid.
    pub fluctuation_defect: f64,
}

pub fn ldf_table(beta_left: f64, beta_right: f64, c: f64, lambdas: &[C64], sigmas: &[f64]) -> Result<LdfResult> {
    let db = beta_right - beta_left;
    let xi = lambdas.iter().map(|&l| ldf(beta_left, beta_right, c, l)).collect::<Result<Vec<_>>>()?;
    let mut fluct: f64 = 0.0;
    for p in &xi {
        let mirror = -p.lambda + C64::new(0.0, db);
        if let Ok(m) = ldf(beta_left, beta_right, c, mirror) {
            fluct = fluct.max((p.total - m.total).norm());
        }
    }
    let rate: Vec<RatePoint> = sigmas.iter().map(|&s| rate_function(beta_left, beta_right, c, s)).collect();
    let gc = sigmas
        .iter()
        .map(|&s| {
            let a = rate_function(beta_left, beta_right, c, -s).rate;
            let b = rate_function(beta_left, beta_right, c, s).rate;
            (a - b - s * db).abs()
        })
        .fold(0.0, f64::max);
    let mut curv = f64::INFINITY;
    for w in rate.windows(3) {
        let (h1, h2) = (w[1].sigma - w[0].sigma, w[2].sigma - w[1].sigma);
        if h1 > 0.0 && h2 > 0.0 {
            let d = ((w[2].rate - w[1].rate) / h2 - (w[1].rate - w[0].rate) / h1) / (0.5 * (h1 + h2));
            curv = curv.min(d);
        }
    }
    Ok(LdfResult { beta_left, beta_right, c, xi, rate, gallavotti_cohen_defect: gc, min_curvature: curv, fluctuation_defect: fluct })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongtimeRow {
    pub t: f64,
    pub ln_psi_plus_over_t: C64,
    pub ln_psi_minus_over_t: C64,
    pub defect_plus: f64,
    pub defect_minus: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LongtimeResult {
    pub lambda: f64,
    pub xi_plus: C64,
    pub xi_minus: C64,
    pub rows: Vec<LongtimeRow>,
    /// Defects non-increasing over the upper half of the t grid (reported, not enforced).
    pub monotone_plus: bool,
    pub monotone_minus: bool,
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

/// Per-mover lnPsi^pm_t(lambda)/t against Xi^pm(lambda) over a grid of times.
pub fn longtime_approach(kink: &KinkMaps, c: f64, ts: &[f64], lambda: f64, opts: &InfiniteOptions) -> Result<LongtimeResult> {
    let p = kink.profile;
    let xp = xi_rate_plus(p.beta_left, c, C64::new(lambda, 0.0))?;
    let xm = xi_rate_minus(p.beta_right, c, C64::new(lambda, 0.0))?;
    let mut rows = Vec::with_capacity(ts.len());
    for &t in ts {
        let r = psi_infinite(kink, c, t, &[lambda], opts)?;
        let pt = r.points[0];
        let (a, b) = (pt.ln_psi_plus / t, pt.ln_psi_minus / t);
        rows.push(LongtimeRow { t, ln_psi_plus_over_t: a, ln_psi_minus_over_t: b, defect_plus: (a - xp).norm(), defect_minus: (b - xm).norm() });
    }
    let top = &rows[rows.len() / 2..];
    let dp: Vec<f64> = top.iter().map(|r| r.defect_plus).collect();
    let dm: Vec<f64> = top.iter().map(|r| r.defect_minus).collect();
    Ok(LongtimeResult { lambda, xi_plus: xp, xi_minus: xm, rows, monotone_plus: non_increasing(&dp), monotone_minus: non_increasing(&dm) })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteOptions {
    /// Momentum cutoff of the torus discretization; N = ceil(p_max L / 2 pi).
    pub p_max: f64,
    pub tail_tol: f64,
    pub cond_max: f64,
    pub residual_tol: f64,
    pub derivative_tol: f64,
    pub path: PathOptions,
    pub ode: OdeOptions,
}

impl Default for FiniteOptions {
    fn default() -> Self {
        FiniteOptions { p_max: 40.0, tail_tol: 1e-4, cond_max: 1e14, residual_tol: 1e-10, derivative_tol: 1e-4, path: PathOptions::default(), ode: OdeOptions::default() }
    }
}

/// Grid [-3L/4, L/4) with M = 4N points.
pub fn box_grid(bx: &BoxMaps, opts: &FiniteOptions) -> (PeriodicGrid, usize) {
    let n = (opts.p_max * bx.l / (2.0 * PI)).ceil() as usize;
    (PeriodicGrid::new(-0.75 * bx.l, bx.l, 4 * n), n)
}

/// Torus welding problem of g_{s,t,L} at tau_{0,L}.
pub fn box_problem(bx: &BoxMaps, s: f64, t: f64, opts: &FiniteOptions) -> Result<TorusWeldProblem> {
    let (grid, n) = box_grid(bx, opts);
    let ys = grid.points();
    let g = bx.g(s, t, &ys, opts.ode)?;
    let u: Vec<f64> = g.iter().zip(&ys).map(|(a, b)| a - b).collect();
    TorusWeldProblem::new(grid, u, bx.tau0(), torus_options(n, opts))
}

fn torus_options(n: usize, opts: &FiniteOptions) -> TorusOptions {
    TorusOptions { n, tail_tol: opts.tail_tol, cond_max: opts.cond_max, residual_tol: opts.residual_tol, derivative_tol: opts.derivative_tol }
}

pub fn solve_box(bx: &BoxMaps, s: f64, t: f64, opts: &FiniteOptions) -> Result<TorusWeldSolution> {
    solve_y1(&box_problem(bx, s, t, opts)?)
}

/// (\int xi SX, \int xi X'^2) for the torus welding at flow time s.
fn box_integrands(bx: &BoxMaps, xi: &[f64], s: f64, t: f64, opts: &FiniteOptions) -> Result<Vec<C64>> {
    let sol = solve_box(bx, s, t, opts)?;
    let h = sol.grid.h();
    let a: C64 = xi.iter().zip(&sol.sx).map(|(x, v)| *x * v).sum::<C64>() * h;
    let b: C64 = xi.iter().zip(&sol.xprime).map(|(x, d)| *x * d * d).sum::<C64>() * h;
    Ok(vec![a, b])
}

#[derive(Clone, Debug, Serialize)]
pub struct FinitePoint {
    pub lambda: f64,
    pub s: f64,
    pub ln_psi: C64,
    pub action_term: C64,
    pub character_term: C64,
    pub counterterm_term: C64,
    pub tau_hat: C64,
    pub character: SmallTauRatio,
}

#[derive(Clone, Debug, Serialize)]
pub struct FiniteFcs {
    pub t: f64,
    pub l: f64,
    pub c: f64,
    pub n: usize,
    pub tau0: C64,
    /// C_{t,L} - C_{0,L}.
    pub counterterm: f64,
    pub points: Vec<FinitePoint>,
    pub s_error: f64,
    pub s_nodes: usize,
}

fn check_finite_theory(theory: &Theory) -> Result<()> {
    theory.validate()?;
    if let Theory::CentralCharge { .. } = theory {
        return Err(Error::config("theory.model", "finite-volume FCS needs a character: use free_fermion or free_boson"));
    }
    Ok(())
}

/// lnPsi_{t,L} at flow times `ss`; lambda = s Delta beta is recorded alongside.
pub fn psi_finite_by_s(bx: &BoxMaps, theory: &Theory, t: f64, ss: &[f64], opts: &FiniteOptions) -> Result<FiniteFcs> {
    check_finite_theory(theory)?;
    let c = theory.central_charge();
    let (grid, n) = box_grid(bx, opts);
    let xi: Vec<f64> = grid.points().iter().map(|&y| bx.xi(t, y)).collect();
    let path = sample_path(ss, 2, opts.path, |s| box_integrands(bx, &xi, s, t, opts))?;
    let tau0 = bx.tau0();
    let l2 = bx.l * bx.l;
    let ct = counterterm_box(bx, t, c);
    let db = bx.kink.profile.delta_beta();
    let mut points = Vec::with_capacity(ss.len());
    for &s in ss {
        let tau_hat = tau0 + path.integral(1, s) / l2;
        let ratio = small_tau_ratio(theory, tau_hat, tau0)?;
        let action_term = C64::new(0.0, -c / (24.0 * PI)) * path.integral(0, s);
        let counterterm_term = C64::new(0.0, -s * ct);
        let character_term = ratio.ln_ratio();
        points.push(FinitePoint {
            lambda: s * db,
            s,
            ln_psi: action_term + character_term + counterterm_term,
            action_term,
            character_term,
            counterterm_term,
            tau_hat,
            character: ratio,
        });
    }
    Ok(FiniteFcs { t, l: bx.l, c, n, tau0, counterterm: ct, points, s_error: path.max_error(), s_nodes: path.nodes.len() })
}

pub fn psi_finite(bx: &BoxMaps, theory: &Theory, t: f64, lambdas: &[f64], opts: &FiniteOptions) -> Result<FiniteFcs> {
    let ss = flow_times(&bx.kink, lambdas)?;
    let mut r = psi_finite_by_s(bx, theory, t, &ss, opts)?;
    for (p, l) in r.points.iter_mut().zip(lambdas) {
        p.lambda = *l;
    }
    Ok(r)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTauCheck {
    pub ode: C64,
    pub direct: C64,
    pub defect: f64,
}

/// tau_hat at flow time s from the s-integrated rate and from the welding at s itself.
pub fn effective_tau_check(bx: &BoxMaps, s: f64, t: f64, order: usize, opts: &FiniteOptions) -> Result<EffectiveTauCheck> {
    let (grid, n) = box_grid(bx, opts);
    let xi: Vec<f64> = grid.points().iter().map(|&y| bx.xi(t, y)).collect();
    let ys = grid.points();
    let ode = crate::torus_weld::effective_tau_ode(grid, &xi, bx.tau0(), torus_options(n, opts), s, order, |sv| {
        let g = bx.g(sv, t, &ys, opts.ode)?;
        Ok(g.iter().zip(&ys).map(|(a, b)| a - b).collect())
    })?
    .tau_hat;
    let direct = solve_box(bx, s, t, opts)?.tau_hat;
    Ok(EffectiveTauCheck { ode, direct, defect: (ode - direct).norm() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l: f64,
    pub n: usize,
    /// max over the probe points of |X'_L(y + O_L) - X'(y)| for the right mover.
    pub xprime_error: f64,
    pub ln_psi: C64,
    pub ln_psi_defect: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThermoSweep {
    pub t: f64,
    pub s: f64,
    pub ln_psi_infinite: C64,
    pub rows: Vec<SweepRow>,
    /// Least-squares slope of ln(xprime_error) against ln L.
    pub slope: f64,
    pub defect_decreasing: bool,
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let num: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    num / den
}

/// Finite-volume solutions at box sizes `ls` compared with the infinite-volume ones.
pub fn thermodynamic_sweep(
    kink: &KinkMaps,
    theory: &Theory,
    t: f64,
    s: f64,
    ls: &[f64],
    probes: &[f64],
    inf: &InfiniteOptions,
    fin: &FiniteOptions,
) -> Result<ThermoSweep> {
    let c = theory.central_charge();
    let cyl = solve_mover(kink, Mover::Plus, s, t, inf)?;
    let ln_inf = psi_infinite_by_s(kink, c, t, &[s], inf)?.points[0].ln_psi;
    let mut rows = Vec::with_capacity(ls.len());
    for &l in ls {
        let bx = BoxMaps::new(kink.clone(), l)?;
        let sol = solve_box(&bx, s, t, fin)?;
        let o = bx.origin(Mover::Plus);
        let err = probes.iter().map(|&y| (sol.xprime_at(y + o) - cyl.xprime_at(y)).norm()).fold(0.0, f64::max);
        let fv = psi_finite_by_s(&bx, theory, t, &[s], fin)?;
        let ln = fv.points[0].ln_psi;
        rows.push(SweepRow { l, n: sol.n, xprime_error: err, ln_psi: ln, ln_psi_defect: (ln - ln_inf).norm() });
    }
    let slope = loglog_slope(&rows.iter().map(|r| r.l).collect::<Vec<_>>(), &rows.iter().map(|r| r.xprime_error).collect::<Vec<_>>());
    let defects: Vec<f64> = rows.iter().map(|r| r.ln_psi_defect).collect();
    Ok(ThermoSweep { t, s, ln_psi_infinite: ln_inf, slope, defect_decreasing: defects.windows(2).all(|w| w[1] < w[0]), rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::TemperatureProfile;
    use proptest::prelude::*;

    fn kink() -> KinkMaps {
        KinkMaps::new(TemperatureProfile::default_kink(), 1.0).unwrap()
    }

    #[test]
    fn path_integrates_analytic_integrand() {
        let targets = [-0.3, 0.1, 0.5];
        let path = sample_path(&targets, 1, PathOptions::default(), |s| Ok(vec![C64::new(s.cos(), s.exp())])).unwrap();
        for s in targets {
            let want = C64::new(s.sin(), s.exp() - 1.0);
            assert!((path.integral(0, s) - want).norm() < 1e-12);
        }
        assert!(path.max_error() < 1e-7);
    }

    #[test]
    fn zero_counting_parameter_gives_zero() {
        let r = psi_infinite(&kink(), 1.0, 2.0, &[0.0], &InfiniteOptions::default()).unwrap();
        assert_eq!(r.points[0].ln_psi, C64::new(0.0, 0.0));
        assert_eq!(r.s_nodes, 0);
    }

    #[test]
    fn equal_temperatures_need_flow_time_entry() {
        let p = TemperatureProfile::new(1.5, 1.5, 0.0, 1.0, Default::default()).unwrap();
        let k = KinkMaps::new(p, 1.0).unwrap();
        assert_eq!(psi_infinite(&k, 1.0, 2.0, &[0.1], &InfiniteOptions::default()).unwrap_err(), Error::DeltaBetaZero);
        let r = psi_infinite_by_s(&k, 1.0, 2.0, &[0.3], &InfiniteOptions::default()).unwrap();
        assert!(r.points[0].ln_psi.norm() < 1e-12, "{}", r.points[0].ln_psi);
    }

    #[test]
    fn conjugation_symmetry_and_central_charge_scaling() {
        let k = kink();
        let opts = InfiniteOptions::default();
        let base = infinite_base(&k, 1.0, &[-0.1, 0.1], &opts).unwrap();
        let (a, b) = (base.point(1.0, 0.1, -0.1), base.point(1.0, -0.1, 0.1));
        assert!((a.ln_psi - b.ln_psi.conj()).norm() < 1e-9, "{:?} {:?}", a, b);
        let scaled = base.point(0.7, 0.1, -0.1);
        assert!((scaled.ln_psi - 0.7 * a.ln_psi).norm() < 1e-14);
        assert!(base.s_error() < 1e-7);
    }

    #[test]
    fn zero_time_moments_vanish() {
        let m = moments_closed_form(&kink(), 1.0, 0.0, &MomentOptions::default()).unwrap();
        assert_eq!((m.mean, m.variance), (0.0, 0.0));
    }

    #[test]
    fn mean_grows_linearly_on_the_plateau() {
        let k = kink();
        let o = MomentOptions::default();
        let m = |t: f64| moments_closed_form(&k, 1.0, t, &o).unwrap().mean;
        let d1 = m(12.0) - m(8.0);
        let d2 = m(16.0) - m(12.0);
        assert!((d1 - d2).abs() < 1e-8 * d1.abs(), "{d1} {d2}");
        let p = k.profile;
        let rate = PI / 12.0 * (1.0 / (p.beta_right * p.beta_right) - 1.0 / (p.beta_left * p.beta_left));
        assert!((d1 / 4.0 + rate).abs() < 1e-8, "{} {rate}", d1 / 4.0);
    }

    #[test]
    fn fourier_residue_identity() {
        for (g, p) in [(1.0, 2.0), (1.0, -2.0), (2.0, 0.7), (0.5, 5.0), (1.5, 0.0)] {
            let q = fourier_identity_quadrature(g, p);
            let cf = fourier_identity_closed_form(g, p);
            assert!((q - cf).norm() < 1e-8 * cf.abs().max(1.0), "{g} {p} {q} {cf}");
        }
    }

    #[test]
    fn rates_vanish_at_zero_and_poles_are_flagged() {
        let r = ldf(2.0, 1.0, 1.0, C64::new(0.0, 0.0)).unwrap();
        assert_eq!(r.total, C64::new(0.0, 0.0));
        assert!(matches!(ldf(2.0, 1.0, 1.0, C64::new(0.0, -2.0)), Err(Error::PoleHit { .. })));
        assert!(matches!(ldf(2.0, 1.0, 1.0, C64::new(0.0, 1.0)), Err(Error::PoleHit { .. })));
    }

    #[test]
    fn levitov_lesovik_matches_closed_form() {
        let cf = ldf(1.0, 2.0, 1.0, C64::new(0.3, 0.0)).unwrap().total;
        let ll = levitov_lesovik(1.0, 2.0, 0.3);
        assert!((cf - ll).norm() < 1e-8, "{cf} {ll}");
    }

    #[test]
    fn levy_khintchine_matches_closed_form() {
        for c in [1.0, 0.5] {
            let cf = ldf(2.0, 1.0, c, C64::new(0.4, 0.0)).unwrap().total;
            assert!((levy_khintchine(2.0, 1.0, c, 0.4) - cf).norm() < 1e-8);
        }
        assert_eq!(levy_jump_rate(2.0, 1.0, 1.0, 0.3, 0.3), PI / 12.0);
        assert_eq!(levy_jump_rate(2.0, 1.0, 0.0, 0.3, 1.3), 0.0);
    }

    #[test]
    fn rate_function_properties() {
        let (bl, br, c) = (2.0, 1.0, 1.0);
        let drift = PI * c / 12.0 * (1.0 / (bl * bl) - 1.0 / (br * br));
        let r = rate_function(bl, br, c, drift);
        assert!(r.nu.abs() < 1e-14 && r.rate.abs() < 1e-14, "{r:?}");
        let sig: Vec<f64> = (0..=40).map(|k| -5.0 + 0.25 * k as f64).collect();
        let table = ldf_table(bl, br, c, &[C64::new(0.3, 0.1)], &sig).unwrap();
        assert!(table.gallavotti_cohen_defect < 1e-10);
        assert!(table.min_curvature > 0.0);
        for s in [1.0, 2.0] {
            assert!((rate_function(1.0, 1.0, 0.3, s).rate - rate_function(1.0, 1.0, 0.3, -s).rate).abs() < 1e-13);
        }
        let far: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&s| rate_function(bl, br, c, s).asymptotic_defect).collect();
        assert!(far[2] < 1.0 && (far[2] - far[1]).abs() < 0.1, "{far:?}");
    }

    #[test]
    fn vanishing_central_charge_rate_is_piecewise_linear() {
        assert_eq!(rate_function(2.0, 1.0, 0.0, 3.0).rate, 6.0);
        assert_eq!(rate_function(2.0, 1.0, 0.0, -3.0).rate, 3.0);
    }

    #[test]
    fn effective_tau_path_matches_direct_welding() {
        let bx = BoxMaps::new(kink(), 40.0).unwrap();
        let e = effective_tau_check(&bx, 0.25, 2.0, 16, &FiniteOptions { tail_tol: 1e-4, ..Default::default() }).unwrap();
        assert!(e.defect < 1e-8, "{e:?}");
    }

    #[test]
    fn finite_volume_zero_time_is_trivial() {
        let bx = BoxMaps::new(kink(), 20.0).unwrap();
        let r = psi_finite(&bx, &Theory::FreeFermion, 0.0, &[-0.2, 0.3], &FiniteOptions { tail_tol: 1e-4, ..Default::default() }).unwrap();
        for p in &r.points {
            assert!(p.ln_psi.norm() < 1e-9, "{:?}", p.ln_psi);
        }
    }

    #[test]
    fn finite_volume_needs_a_character() {
        let bx = BoxMaps::new(kink(), 20.0).unwrap();
        let err = psi_finite(&bx, &Theory::CentralCharge { c: 0.7 }, 1.0, &[0.1], &FiniteOptions::default()).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn loglog_slope_of_power_law() {
        let xs = [40.0, 80.0, 160.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(-1.0)).collect();
        assert!((loglog_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn fluctuation_symmetry_of_rates(re in -3.0f64..3.0, im in -0.9f64..1.9) {
            let l = C64::new(re, im);
            let a = ldf(2.0, 1.0, 1.0, l).unwrap().total;
            let b = ldf(2.0, 1.0, 1.0, -l + C64::new(0.0, -1.0)).unwrap().total;
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn gallavotti_cohen_symmetry(s in -20.0f64..20.0, bl in 0.5f64..3.0, br in 0.5f64..3.0) {
            let d = rate_function(bl, br, 1.0, -s).rate - rate_function(bl, br, 1.0, s).rate - s * (br - bl);
            prop_assert!(d.abs() < 1e-10 * (1.0 + s.abs()));
        }

        #[test]
        fn rate_function_is_nonnegative(s in -10.0f64..10.0) {
            prop_assert!(rate_function(2.0, 1.0, 1.0, s).rate >= -1e-14);
        }
    }
}
