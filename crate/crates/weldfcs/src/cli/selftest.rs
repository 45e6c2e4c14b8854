use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::cache::Cache;
use super::config::RunConfig;
use crate::analysis::{action_integral, counterterm_c, fd_weights, schwarzian_line, schwarzian_periodic};
use crate::characters::{ln_character_direct, ln_character_modular, small_tau_ratio, Theory, TERM_CAP};
use crate::cylinder_weld::{momentum_factor, realspace_crosscheck, solve_cylinder, CylinderOptions, CylinderWeldProblem};
use crate::error::{Error, Result};
use crate::fcs::{
    fourier_identity_closed_form, fourier_identity_quadrature, ldf, ldf_table, levitov_lesovik, levy_khintchine, loglog_slope,
    moments_closed_form, psi_finite, psi_infinite, rate_function, sample_path, solve_mover, FiniteOptions, InfiniteOptions,
    MomentOptions, PathOptions,
};
use crate::linalg::{rel_residual, CMat, Lu};
use crate::ode::{dopri5, OdeOptions};
use crate::profile::{BoxMaps, KinkMaps, Mover, TemperatureProfile};
use crate::quad::{cheb_points, composite, gauss_legendre, ChebSeries};
use crate::spectral::{derivative, modes, synthesize, trapezoid, PeriodicGrid};
use crate::torus_weld::{solve_y1, TorusOptions, TorusWeldProblem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub defect: Option<f64>,
    pub tolerance: f64,
    pub message: Option<String>,
}

fn run(name: &str, tolerance: f64, f: impl FnOnce() -> Result<f64>) -> Check {
    let (status, defect, message) = match f() {
        Ok(d) if d <= tolerance => (Status::Pass, Some(d), None),
        Ok(d) => (Status::Fail, Some(d), None),
        Err(e) => (Status::Error, None, Some(e.to_string())),
    };
    Check { name: name.into(), status, defect, tolerance, message }
}

fn flagged<T>(r: Result<T>, want: impl Fn(&Error) -> bool) -> Result<f64> {
    Ok(match r {
        Err(e) if want(&e) => 0.0,
        _ => 1.0,
    })
}

fn kink() -> Result<KinkMaps> {
    KinkMaps::new(TemperatureProfile::default_kink(), 1.0)
}

fn max_norm(it: impl IntoIterator<Item = f64>) -> f64 {
    it.into_iter().fold(0.0, f64::max)
}

fn test_matrix(n: usize) -> CMat {
    CMat::from_fn(n, n, |i, j| {
        let d = if i == j { 4.0 } else { 0.0 };
        C64::new(d + ((i * 7 + j * 3) % 5) as f64 * 0.1, ((i + 2 * j) % 3) as f64 * 0.2 - 0.2)
    })
}

pub fn run_all() -> Vec<Check> {
    let mut out = Vec::new();

    out.push(run("quad.gauss_legendre_polynomial_exactness", 1e-14, || {
        let (x, w) = gauss_legendre(8);
        Ok((x.iter().zip(&w).map(|(x, w)| w * x.powi(14)).sum::<f64>() - 2.0 / 15.0).abs())
    }));
    out.push(run("quad.composite_exponential", 1e-14, || {
        let (x, w) = composite(0.0, 1.0, 4, 10);
        Ok((x.iter().zip(&w).map(|(x, w)| w * x.exp()).sum::<f64>() - (1f64.exp() - 1.0)).abs())
    }));
    out.push(run("quad.chebyshev_interpolant", 1e-13, || {
        let xs = cheb_points(-1.0, 2.0, 32);
        let v: Vec<C64> = xs.iter().map(|x| C64::new(x.sin(), x.cos())).collect();
        let s = ChebSeries::from_values(-1.0, 2.0, &v);
        Ok(max_norm([0.3, 1.1, -0.7].iter().map(|&x: &f64| (s.eval(x) - C64::new(x.sin(), x.cos())).norm())))
    }));
    out.push(run("quad.chebyshev_antiderivative", 1e-13, || {
        let xs = cheb_points(0.0, 2.0, 32);
        let v: Vec<C64> = xs.iter().map(|x| C64::new(x.cos(), 0.0)).collect();
        let s = ChebSeries::from_values(0.0, 2.0, &v);
        Ok((s.integral(0.5, 1.7) - C64::new(1.7f64.sin() - 0.5f64.sin(), 0.0)).norm())
    }));

    out.push(run("spectral.modes_round_trip", 1e-13, || {
        let g = PeriodicGrid::new(-1.3, 5.0, 64);
        let u: Vec<C64> = g.points().iter().map(|x| C64::new((2.0 * PI * x / 5.0).sin(), 0.3 * (4.0 * PI * x / 5.0).cos())).collect();
        let back = synthesize(&g, &modes(&g, &u));
        Ok(max_norm(u.iter().zip(&back).map(|(a, b)| (a - b).norm())))
    }));
    out.push(run("spectral.derivative_of_fourier_mode", 1e-12, || {
        let g = PeriodicGrid::new(0.4, 3.0, 32);
        let k = 2.0 * PI * 3.0 / 3.0;
        let u: Vec<C64> = g.points().iter().map(|x| C64::new((k * x).sin(), 0.0)).collect();
        let d = derivative(&g, &u, 1);
        Ok(max_norm(g.points().iter().zip(&d).map(|(x, d)| (d - C64::new(k * (k * x).cos(), 0.0)).norm())))
    }));
    out.push(run("spectral.trapezoid_periodic_gaussian", 1e-13, || {
        let g = PeriodicGrid::new(-10.0, 20.0, 128);
        let u: Vec<C64> = g.points().iter().map(|x| C64::new((-x * x).exp(), 0.0)).collect();
        Ok((trapezoid(&g, &u).re - PI.sqrt()).abs())
    }));

    out.push(run("linalg.lu_residual", 1e-14, || {
        let a = test_matrix(24);
        let b: Vec<C64> = (0..24).map(|i| C64::new(i as f64, 1.0)).collect();
        let x = Lu::new(&a)?.solve(&b);
        Ok(rel_residual(&a, &x, &b))
    }));
    out.push(run("linalg.adjoint_solve", 1e-13, || {
        let a = test_matrix(12);
        let b: Vec<C64> = (0..12).map(|i| C64::new(1.0, i as f64 * 0.1)).collect();
        let x = Lu::new(&a)?.solve_adjoint(&b);
        let ah = CMat::from_fn(12, 12, |i, j| a.get(j, i).conj());
        Ok(rel_residual(&ah, &x, &b))
    }));
    out.push(run("linalg.condition_of_diagonal", 1e-12, || {
        let a = CMat::from_fn(5, 5, |i, j| if i == j { C64::new(10f64.powi(i as i32), 0.0) } else { C64::new(0.0, 0.0) });
        Ok((Lu::new(&a)?.cond1_estimate() / 1e4 - 1.0).abs())
    }));
    out.push(run("linalg.singular_matrix_flagged", 0.0, || {
        flagged(Lu::new(&CMat::zeros(3, 3)), |e| matches!(e, Error::SingularSystem { .. }))
    }));

    out.push(run("ode.exponential_decay", 1e-11, || {
        let y = dopri5(|_, y, d| d[0] = -y[0], 0.0, 2.0, &[1.0], OdeOptions::default())?;
        Ok((y[0] - (-2.0f64).exp()).abs())
    }));
    out.push(run("ode.backward_integration", 1e-11, || {
        let y = dopri5(|t, _, d| d[0] = t.cos(), 1.0, -0.5, &[1f64.sin()], OdeOptions::default())?;
        Ok((y[0] - (-0.5f64).sin()).abs())
    }));
    out.push(run("ode.logistic_flow", 1e-10, || {
        let (y0, t1) = (0.3, 1.7f64);
        let y = dopri5(|_, y, d| d[0] = y[0] * (1.0 - y[0]), 0.0, t1, &[y0], OdeOptions::default())?;
        Ok((y[0] - y0 * t1.exp() / (1.0 - y0 + y0 * t1.exp())).abs())
    }));

    out.push(run("profile.asymptotic_temperatures", 0.0, || {
        let p = TemperatureProfile::default_kink();
        Ok((p.beta(-5.0) - p.beta_left).abs() + (p.beta(5.0) - p.beta_right).abs())
    }));
    out.push(run("profile.step_midpoint_symmetry", 1e-15, || {
        let p = TemperatureProfile::default_kink();
        Ok(max_norm([0.1, 0.25, 0.4].iter().map(|&u| (p.phi_derivs(u).0 + p.phi_derivs(1.0 - u).0 - 1.0).abs())))
    }));
    out.push(run("profile.inverse_of_h", 1e-13, || {
        let k = kink()?;
        Ok(max_norm([-3.0, -0.7, 0.0, 0.4, 2.5].iter().map(|&x| (k.h_inv(k.h(x)) - x).abs())))
    }));
    out.push(run("profile.h_prime_difference_quotient", 1e-8, || {
        let k = kink()?;
        let e = 1e-5;
        Ok(max_norm([-0.5, 0.0, 0.3].iter().map(|&x| ((k.h(x + e) - k.h(x - e)) / (2.0 * e) - k.h_prime(x)).abs())))
    }));
    out.push(run("profile.flow_matches_closed_form", 1e-10, || {
        let k = kink()?;
        let ys = [-1.5, -0.5, 0.0, 0.5, 1.5];
        let mut worst: f64 = 0.0;
        for m in Mover::both() {
            let g = k.g(m, 0.3, 1.0, &ys, OdeOptions::default())?;
            for (y, gy) in ys.iter().zip(&g) {
                worst = worst.max((gy - k.g_closed(m, 0.3, 1.0, *y)).abs());
            }
        }
        Ok(worst)
    }));
    out.push(run("profile.flow_is_identity_off_support", 0.0, || {
        let k = kink()?;
        let (lo, hi) = k.g_support(Mover::Plus, 0.3, 1.0);
        let ys = [lo - 1.0, hi + 1.0];
        let g = k.g(Mover::Plus, 0.3, 1.0, &ys, OdeOptions::default())?;
        Ok((g[0] - ys[0]).abs() + (g[1] - ys[1]).abs())
    }));
    out.push(run("profile.box_rejects_oversized_kink", 0.0, || {
        flagged(BoxMaps::new(kink()?, 3.0), |e| matches!(e, Error::BoxTooSmall { .. }))
    }));

    out.push(run("analysis.identity_schwarzian", 1e-14, || {
        let g = PeriodicGrid::new(0.0, 4.0, 64);
        Ok(max_norm(schwarzian_periodic(&g, &[0.0; 64], 1e-8)?.iter().map(|v| v.abs())))
    }));
    out.push(run("analysis.translation_schwarzian", 1e-13, || {
        let g = PeriodicGrid::new(0.0, 2.0, 32);
        Ok(max_norm(schwarzian_periodic(&g, &[0.7; 32], 1e-8)?.iter().map(|v| v.abs())))
    }));
    out.push(run("analysis.mobius_schwarzian", 1e-9, || {
        let h = 0.04;
        let f: Vec<f64> = (0..51).map(|j| -1.0 + j as f64 * h).map(|x| (2.0 * x + 1.0) / (0.3 * x + 3.0)).collect();
        Ok(max_norm(schwarzian_line(h, &f, 9).iter().map(|v| v.abs())))
    }));
    out.push(run("analysis.finite_difference_weights", 1e-10, || {
        let nodes: Vec<f64> = (0..7).map(|j| -1.5 + 0.5 * j as f64).collect();
        let w = fd_weights(0.2, &nodes, 3);
        let d3: f64 = nodes.iter().zip(&w[3]).map(|(x, w)| w * x.powi(4)).sum();
        Ok((d3 - 24.0 * 0.2).abs())
    }));
    out.push(run("analysis.action_of_identity_welding", 1e-12, || {
        let g = PeriodicGrid::new(-10.0, 20.0, 400);
        let xi: Vec<f64> = g.points().iter().map(|&x| if x.abs() < 3.0 { (1.0 - x * x / 9.0).powi(4) } else { 0.0 }).collect();
        let one = vec![C64::new(1.0, 0.0); 400];
        let zero = vec![C64::new(0.0, 0.0); 400];
        let a = action_integral(&g, &xi, &one, &zero, 1.3)?;
        let int_xi: f64 = xi.iter().sum::<f64>() * g.h();
        Ok((a.re + 2.0 * PI * PI / 1.69 * int_xi).abs() + a.im.abs())
    }));
    out.push(run("analysis.clipped_support_flagged", 0.0, || {
        let g = PeriodicGrid::new(0.0, 1.0, 16);
        let one = vec![C64::new(1.0, 0.0); 16];
        flagged(action_integral(&g, &[1.0; 16], &one, &one, 1.0), |e| matches!(e, Error::SupportClipped))
    }));
    out.push(run("analysis.counterterm_vanishes_at_zero_time", 0.0, || Ok(counterterm_c(&kink()?, 0.0, 1.0).abs())));

    out.push(run("characters.direct_and_modular_series_agree", 1e-10, || {
        let tau = C64::new(0.1, 0.3);
        let mut worst: f64 = 0.0;
        for th in [Theory::FreeFermion, Theory::FreeBoson { radius: 1.3 }] {
            worst = worst.max((ln_character_direct(&th, tau, TERM_CAP)? - ln_character_modular(&th, tau, TERM_CAP)?).norm());
        }
        Ok(worst)
    }));
    out.push(run("characters.self_dual_boson_is_fermion", 1e-12, || {
        let tau = C64::new(0.2, 0.7);
        let b = ln_character_direct(&Theory::FreeBoson { radius: 2f64.sqrt() }, tau, TERM_CAP)?;
        let f = ln_character_direct(&Theory::FreeFermion, tau, TERM_CAP)?;
        Ok((b - f).norm())
    }));
    out.push(run("characters.vacuum_dominance", 1e-10, || {
        let tau = C64::new(0.1, 8.0);
        let lead = -C64::i() * 2.0 * PI * tau / 24.0;
        Ok((ln_character_direct(&Theory::FreeFermion, tau, TERM_CAP)? - lead).norm())
    }));
    out.push(run("characters.equal_arguments_unit_ratio", 1e-14, || {
        let tau = C64::new(0.0, 0.05);
        Ok(small_tau_ratio(&Theory::FreeFermion, tau, tau)?.ln_ratio().norm())
    }));
    out.push(run("characters.central_charge_only_flagged", 0.0, || {
        flagged(ln_character_direct(&Theory::CentralCharge { c: 0.7 }, C64::new(0.0, 1.0), TERM_CAP), |e| {
            matches!(e, Error::SeriesInfeasible { .. })
        })
    }));

    out.push(run("cylinder.momentum_factor_limit", 1e-8, || Ok((momentum_factor(1e-9, 2.0) - 0.5).abs())));
    out.push(run("cylinder.identity_welding", 1e-12, || {
        let id = |ys: &[f64]| Ok(ys.to_vec());
        let pb = CylinderWeldProblem { gamma: 1.0, support: (-1.0, 1.0), g: &id, opts: CylinderOptions::default() };
        let sol = solve_cylinder(&pb)?;
        Ok(max_norm(sol.xprime.iter().map(|x| (x - 1.0).norm())))
    }));
    out.push(run("cylinder.narrow_window_flagged", 0.0, || {
        let k = kink()?;
        let sampler = |ys: &[f64]| k.g(Mover::Plus, 0.2, 2.0, ys, OdeOptions::default());
        let (lo, hi) = k.g_support(Mover::Plus, 0.2, 2.0);
        let pb = CylinderWeldProblem { gamma: k.gamma(), support: (lo + 2.0, hi), g: &sampler, opts: CylinderOptions::default() };
        flagged(solve_cylinder(&pb), |e| matches!(e, Error::WindowTooSmall { .. }))
    }));
    let kink_solution = kink().and_then(|k| solve_mover(&k, Mover::Plus, 0.2, 1.0, &InfiniteOptions::default()));
    out.push(run("cylinder.kink_residual", 1e-10, || Ok(kink_solution.clone()?.stats.rel_residual)));
    out.push(run("cylinder.kink_realspace_relations", 1e-6, || {
        let cc = realspace_crosscheck(&kink_solution.clone()?, 128);
        Ok(cc.defect_1.max(cc.defect_2))
    }));
    out.push(run("cylinder.kink_far_field_is_identity", 1e-10, || {
        let sol = kink_solution.clone()?;
        let (a, b) = sol.window();
        Ok((sol.xprime_at(a + 0.1 * (b - a)) - 1.0).norm())
    }));

    out.push(run("torus.identity_welding", 1e-12, || {
        let g = PeriodicGrid::new(-15.0, 20.0, 128);
        let pb = TorusWeldProblem::new(g, vec![0.0; 128], C64::new(0.0, 0.5), TorusOptions::new(32))?;
        let sol = solve_y1(&pb)?;
        Ok(max_norm(sol.xprime.iter().map(|x| (x - 1.0).norm())) + (sol.tau_hat - sol.tau).norm())
    }));

    out.push(run("fcs.chebyshev_path", 1e-12, || {
        let targets = [-0.3, 0.1, 0.5];
        let path = sample_path(&targets, 1, PathOptions::default(), |s| Ok(vec![C64::new(s.cos(), s.exp())]))?;
        Ok(max_norm(targets.iter().map(|&s| (path.integral(0, s) - C64::new(s.sin(), s.exp() - 1.0)).norm())))
    }));
    out.push(run("fcs.zero_counting_parameter", 0.0, || {
        Ok(psi_infinite(&kink()?, 1.0, 2.0, &[0.0], &InfiniteOptions::default())?.points[0].ln_psi.norm())
    }));
    out.push(run("fcs.zero_time_moments", 0.0, || {
        let m = moments_closed_form(&kink()?, 1.0, 0.0, &MomentOptions::default())?;
        Ok(m.mean.abs() + m.variance.abs())
    }));
    out.push(run("fcs.finite_volume_zero_time", 1e-9, || {
        let bx = BoxMaps::new(kink()?, 20.0)?;
        let r = psi_finite(&bx, &Theory::FreeFermion, 0.0, &[0.2], &FiniteOptions { tail_tol: 1e-4, ..Default::default() })?;
        Ok(r.points[0].ln_psi.norm())
    }));
    out.push(run("fcs.fourier_identity", 1e-8, || {
        Ok(max_norm([(1.0, 2.0), (2.0, 0.7), (0.5, -1.0)].iter().map(|&(g, p)| {
            let cf = fourier_identity_closed_form(g, p);
            (fourier_identity_quadrature(g, p) - cf).norm() / cf.abs().max(1.0)
        })))
    }));

    out.push(run("ldf.vanishes_at_zero", 0.0, || Ok(ldf(2.0, 1.0, 1.0, C64::new(0.0, 0.0))?.total.norm())));
    out.push(run("ldf.pole_flagged", 0.0, || {
        flagged(ldf(2.0, 1.0, 1.0, C64::new(0.0, 1.0)), |e| matches!(e, Error::PoleHit { .. }))
    }));
    out.push(run("ldf.fluctuation_symmetry", 1e-12, || {
        let l = C64::new(0.7, 0.3);
        Ok((ldf(2.0, 1.0, 1.0, l)?.total - ldf(2.0, 1.0, 1.0, -l - C64::i())?.total).norm())
    }));
    out.push(run("ldf.levitov_lesovik", 1e-8, || Ok((ldf(1.0, 2.0, 1.0, C64::new(0.3, 0.0))?.total - levitov_lesovik(1.0, 2.0, 0.3)).norm())));
    out.push(run("ldf.levy_khintchine", 1e-8, || Ok((ldf(2.0, 1.0, 0.5, C64::new(0.4, 0.0))?.total - levy_khintchine(2.0, 1.0, 0.5, 0.4)).norm())));
    out.push(run("ldf.rate_vanishes_at_drift", 1e-14, || {
        let drift = PI / 12.0 * (1.0 / 4.0 - 1.0);
        Ok(rate_function(2.0, 1.0, 1.0, drift).rate.abs())
    }));
    out.push(run("ldf.gallavotti_cohen", 1e-10, || {
        let sig: Vec<f64> = (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect();
        Ok(ldf_table(2.0, 1.0, 1.0, &[C64::new(0.3, 0.1)], &sig)?.gallavotti_cohen_defect)
    }));
    out.push(run("ldf.vanishing_central_charge", 0.0, || {
        Ok((rate_function(2.0, 1.0, 0.0, 3.0).rate - 6.0).abs() + (rate_function(2.0, 1.0, 0.0, -3.0).rate - 3.0).abs())
    }));
    out.push(run("ldf.loglog_slope", 1e-12, || {
        let xs = [40.0, 80.0, 160.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 / x).collect();
        Ok((loglog_slope(&xs, &ys) + 1.0).abs())
    }));

    out.push(run("config.half_width_limit", 0.0, || {
        let r = RunConfig::from_toml("schema = \"weldfcs/1\"\n[profile]\nhalf_width = 11.0\n[experiment]\nl = [40.0]\n");
        flagged(r, |e| matches!(e, Error::ConfigInvalid { key, .. } if key == "profile.half_width"))
    }));
    out.push(run("config.unknown_key", 0.0, || {
        flagged(RunConfig::from_toml("schema = \"weldfcs/1\"\n[numerics]\nbogus = 1\n"), |e| e.is_config())
    }));
    out.push(run("cache.sha256_key", 0.0, || {
        Ok(if Cache::key("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad" { 0.0 } else { 1.0 })
    }));

    out
}
