use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{RunConfig, Volume};
use crate::cylinder_weld::{realspace_crosscheck, CylinderOptions};
use crate::error::{Error, Result};
use crate::fcs::{
    box_problem, ldf_table, levitov_lesovik, levy_khintchine, loglog_slope, longtime_approach, moments_closed_form,
    moments_from_pipeline, psi_finite, psi_finite_by_s, psi_infinite, psi_infinite_by_s, solve_mover, thermodynamic_sweep,
    FcsPoint, InfiniteOptions,
};
use crate::profile::BoxMaps;
use crate::torus_weld::{assemble_k, residual_diagnostics, solve_with};

/// A CSV table: file name, header and rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table { name: name.into(), header: header.iter().map(|s| s.to_string()).collect(), rows: vec![] }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

/// Everything a command produces; cached as a unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Output {
    pub result: Value,
    pub tables: Vec<Table>,
    pub summary: Vec<String>,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize")
}

fn first_l(cfg: &RunConfig) -> Result<f64> {
    cfg.experiment.l.first().copied().ok_or_else(|| Error::config("experiment.l", "needs at least one box size"))
}

pub fn weld_torus(cfg: &RunConfig) -> Result<Output> {
    let l = first_l(cfg)?;
    let (s, t) = (cfg.experiment.s, cfg.experiment.t[0]);
    let bx = BoxMaps::new(cfg.kink()?, l)?;
    let pb = box_problem(&bx, s, t, &cfg.finite())?;
    let blocks = assemble_k(&pb)?;
    let sol = solve_with(&pb, &blocks)?;
    let diag = residual_diagnostics(&pb, &blocks, &sol);
    let (stokes_1, stokes_2) = sol.stokes_defects(pb.opts.derivative_tol)?;
    let mut table = Table::new("weld_torus.csv", &["y", "re_xprime", "im_xprime", "re_sx", "im_sx"]);
    for ((y, d), sx) in sol.grid.points().iter().zip(&sol.xprime).zip(&sol.sx) {
        table.push(vec![num(*y), num(d.re), num(d.im), num(sx.re), num(sx.im)]);
    }
    let summary = vec![
        format!("torus welding L = {l}, s = {s}, t = {t}, N = {}", sol.n),
        format!("tau0 = {}  tau_hat = {}", sol.tau, sol.tau_hat),
        format!("cond = {:.3e}  residual = {:.3e}  tail = {:.3e}", sol.stats.cond, sol.stats.rel_residual, sol.stats.tail),
        format!(
            "boundary {:.3e} / {:.3e}  integrability {:.3e}  b-cycle {:.3e}  Schwarzian identities {:.3e} / {:.3e}",
            diag.boundary_1, diag.boundary_2, diag.integrability, diag.b_cycle, stokes_1, stokes_2
        ),
    ];
    let result = json!({
        "l": l, "s": s, "t": t, "n": sol.n, "m": sol.grid.m,
        "tau0": to_value(&sol.tau), "tau_hat": to_value(&sol.tau_hat),
        "stats": to_value(&sol.stats), "diagnostics": to_value(&diag),
        "schwarzian_identity_defects": [stokes_1, stokes_2],
    });
    Ok(Output { result, tables: vec![table], summary })
}

pub fn weld_cylinder(cfg: &RunConfig) -> Result<Output> {
    let kink = cfg.kink()?;
    let e = &cfg.experiment;
    let (s, t) = (e.s, e.t[0]);
    let sol = solve_mover(&kink, e.mover, s, t, &cfg.infinite())?;
    let cc = realspace_crosscheck(&sol, 128);
    let (lo, _) = kink.g_support(e.mover, s, t);
    let g = kink.gamma();
    let rate = sol.decay_rate(lo - 3.0 * g, lo - 0.5 * g);
    let mut table = Table::new("weld_cylinder.csv", &["y", "re_xprime", "im_xprime", "re_sx", "im_sx"]);
    for ((y, d), sx) in sol.grid.points().iter().zip(&sol.xprime).zip(&sol.sx) {
        table.push(vec![num(*y), num(d.re), num(d.im), num(sx.re), num(sx.im)]);
    }
    let probes: Vec<Value> = e.probes.iter().map(|&y| json!({"y": y, "xprime": to_value(&sol.xprime_at(y))})).collect();
    let summary = vec![
        format!("cylinder welding mover = {:?}, s = {s}, t = {t}, gamma = {g}", e.mover),
        format!("p_max = {}  N = {}  window = {:?}", sol.p_max, sol.n, sol.window()),
        format!("cond = {:.3e}  residual = {:.3e}  tail = {:.3e}", sol.stats.cond, sol.stats.rel_residual, sol.stats.tail),
        format!("real-space defects {:.3e} / {:.3e}  decay rate {rate:.6} (2 pi / gamma = {:.6})", cc.defect_1, cc.defect_2, 2.0 * std::f64::consts::PI / g),
    ];
    let result = json!({
        "mover": to_value(&e.mover), "s": s, "t": t, "gamma": g, "p_max": sol.p_max, "n": sol.n,
        "window": [sol.window().0, sol.window().1], "kappa": to_value(&sol.kappa),
        "stats": to_value(&sol.stats), "crosscheck": to_value(&cc), "decay_rate": rate, "probes": probes,
    });
    Ok(Output { result, tables: vec![table], summary })
}

const FCS_HEADER: [&str; 8] =
    ["t", "lambda", "re_lnpsi", "im_lnpsi", "re_lnpsi_plus", "im_lnpsi_plus", "re_lnpsi_minus", "im_lnpsi_minus"];

fn fcs_row(t: f64, p: &FcsPoint) -> Vec<String> {
    vec![
        num(t),
        num(p.lambda),
        num(p.ln_psi.re),
        num(p.ln_psi.im),
        num(p.ln_psi_plus.re),
        num(p.ln_psi_plus.im),
        num(p.ln_psi_minus.re),
        num(p.ln_psi_minus.im),
    ]
}

pub fn fcs(cfg: &RunConfig) -> Result<Output> {
    let kink = cfg.kink()?;
    let e = &cfg.experiment;
    let c = cfg.theory.central_charge();
    let mut tables = vec![];
    let mut summary = vec![];
    let mut infinite = vec![];
    let mut finite = vec![];
    if e.volume != Volume::Finite {
        let mut table = Table::new("fcs.csv", &FCS_HEADER);
        for &t in &e.t {
            let r = if e.by_s {
                psi_infinite_by_s(&kink, c, t, &e.lambda, &cfg.infinite())?
            } else {
                psi_infinite(&kink, c, t, &e.lambda, &cfg.infinite())?
            };
            for p in &r.points {
                table.push(fcs_row(t, p));
            }
            summary.push(format!("infinite volume t = {t}: {} points, s-error {:.2e}, {} nodes", r.points.len(), r.s_error, r.s_nodes));
            infinite.push(r);
        }
        tables.push(table);
    }
    if e.volume != Volume::Infinite {
        for &l in &e.l {
            let bx = BoxMaps::new(kink.clone(), l)?;
            let mut table = Table::new(&format!("fcs_finite_L{l}.csv"), &FCS_HEADER);
            for &t in &e.t {
                let r = if e.by_s {
                    psi_finite_by_s(&bx, &cfg.theory, t, &e.lambda, &cfg.finite())?
                } else {
                    psi_finite(&bx, &cfg.theory, t, &e.lambda, &cfg.finite())?
                };
                for p in &r.points {
                    let mut row = vec![num(t), num(p.lambda), num(p.ln_psi.re), num(p.ln_psi.im)];
                    row.extend(std::iter::repeat(String::new()).take(4));
                    table.push(row);
                }
                summary.push(format!("finite volume L = {l} t = {t}: N = {}, s-error {:.2e}", r.n, r.s_error));
                finite.push(to_value(&r));
            }
            tables.push(table);
        }
    }
    let result = json!({ "infinite": to_value(&infinite), "finite": finite });
    Ok(Output { result, tables, summary })
}

pub fn moments(cfg: &RunConfig) -> Result<Output> {
    let kink = cfg.kink()?;
    let c = cfg.theory.central_charge();
    let mut table = Table::new(
        "moments.csv",
        &["t", "mean_closed", "mean_pipeline", "mean_rel_diff", "var_closed", "var_pipeline", "var_rel_diff"],
    );
    let mut rows = vec![];
    let mut summary = vec![];
    for &t in &cfg.experiment.t {
        let cf = moments_closed_form(&kink, c, t, &cfg.moments())?;
        let pl = moments_from_pipeline(&kink, c, t, cfg.numerics.stencil_h, &cfg.infinite())?;
        let rel = |a: f64, b: f64| if a == 0.0 && b == 0.0 { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
        let (dm, dv) = (rel(cf.mean, pl.moments.mean), rel(cf.variance, pl.moments.variance));
        table.push(vec![num(t), num(cf.mean), num(pl.moments.mean), num(dm), num(cf.variance), num(pl.moments.variance), num(dv)]);
        summary.push(format!(
            "t = {t}: mean {:.10} vs {:.10} (rel {dm:.2e}); variance {:.10} vs {:.10} (rel {dv:.2e})",
            cf.mean, pl.moments.mean, cf.variance, pl.moments.variance
        ));
        rows.push(json!({"t": t, "closed_form": to_value(&cf), "pipeline": to_value(&pl), "mean_rel_diff": dm, "variance_rel_diff": dv}));
    }
    Ok(Output { result: json!({ "moments": rows }), tables: vec![table], summary })
}

pub fn ldf(cfg: &RunConfig) -> Result<Output> {
    let p = &cfg.profile;
    let c = cfg.theory.central_charge();
    let e = &cfg.experiment;
    let lambdas: Vec<C64> = e.lambda.iter().map(|&l| C64::new(l, 0.0)).collect();
    let table = ldf_table(p.beta_left, p.beta_right, c, &lambdas, &e.sigma)?;
    let mut xi = Table::new(
        "ldf_xi.csv",
        &["lambda", "re_xi_plus", "im_xi_plus", "re_xi_minus", "im_xi_minus", "re_xi", "im_xi", "lk_defect", "ll_defect"],
    );
    let mut checks = vec![];
    for pt in &table.xi {
        let l = pt.lambda.re;
        let lk = (levy_khintchine(p.beta_left, p.beta_right, c, l) - pt.total).norm();
        let ll = if c == 1.0 { Some((levitov_lesovik(p.beta_left, p.beta_right, l) - pt.total).norm()) } else { None };
        xi.push(vec![
            num(l),
            num(pt.plus.re),
            num(pt.plus.im),
            num(pt.minus.re),
            num(pt.minus.im),
            num(pt.total.re),
            num(pt.total.im),
            num(lk),
            ll.map(num).unwrap_or_default(),
        ]);
        checks.push(json!({"lambda": l, "levy_khintchine_defect": lk, "levitov_lesovik_defect": ll}));
    }
    let mut rate = Table::new("ldf_rate.csv", &["sigma", "nu", "rate", "asymptotic_defect"]);
    for r in &table.rate {
        rate.push(vec![num(r.sigma), num(r.nu), num(r.rate), num(r.asymptotic_defect)]);
    }
    let mut summary = vec![
        format!("Gallavotti-Cohen defect {:.3e}", table.gallavotti_cohen_defect),
        format!("fluctuation-relation defect {:.3e}", table.fluctuation_defect),
        format!("min curvature of I {:.4e}", table.min_curvature),
    ];
    let mut tables = vec![xi, rate];
    let mut longtime = Value::Null;
    if let Some(l) = e.longtime_lambda {
        let kink = cfg.kink()?;
        let r = longtime_approach(&kink, c, &e.t, l, &cfg.infinite())?;
        let mut lt = Table::new("ldf_longtime.csv", &["t", "defect_plus", "defect_minus"]);
        for row in &r.rows {
            lt.push(vec![num(row.t), num(row.defect_plus), num(row.defect_minus)]);
            summary.push(format!("t = {}: |lnPsi+/t - Xi+| = {:.3e}, |lnPsi-/t - Xi-| = {:.3e}", row.t, row.defect_plus, row.defect_minus));
        }
        tables.push(lt);
        longtime = to_value(&r);
    }
    let result = json!({ "table": to_value(&table), "checks": checks, "longtime": longtime });
    Ok(Output { result, tables, summary })
}

pub fn converge(cfg: &RunConfig) -> Result<Output> {
    let kink = cfg.kink()?;
    let e = &cfg.experiment;
    let t = e.t[0];
    let sweep = thermodynamic_sweep(&kink, &cfg.theory, t, e.s, &e.l, &e.probes, &cfg.infinite(), &cfg.finite())?;
    let mut lt = Table::new("converge_l.csv", &["l", "n", "xprime_error", "re_lnpsi", "im_lnpsi", "lnpsi_defect"]);
    for r in &sweep.rows {
        lt.push(vec![num(r.l), num(r.n as f64), num(r.xprime_error), num(r.ln_psi.re), num(r.ln_psi.im), num(r.ln_psi_defect)]);
    }
    let base = cfg.infinite();
    let p0 = solve_mover(&kink, e.mover, e.s, t, &base)?.p_max;
    let mut sols = vec![];
    for &m in &e.resolution {
        let opts = InfiniteOptions {
            cylinder: CylinderOptions { p_max: Some(p0 * m), max_refinements: 0, tail_tol: 1.0, ..base.cylinder },
            ..base
        };
        sols.push((p0 * m, solve_mover(&kink, e.mover, e.s, t, &opts)?));
    }
    let mut rt = Table::new("converge_p.csv", &["p_max", "n", "xprime_change"]);
    let mut res = vec![];
    if let Some((_, finest)) = sols.last() {
        for (pm, sol) in &sols {
            let d = e.probes.iter().map(|&y| (sol.xprime_at(y) - finest.xprime_at(y)).norm()).fold(0.0, f64::max);
            rt.push(vec![num(*pm), num(sol.n as f64), num(d)]);
            res.push(json!({"p_max": pm, "n": sol.n, "xprime_change": d}));
        }
    }
    let (ps, ds): (Vec<f64>, Vec<f64>) = res
        .iter()
        .filter_map(|r| Some((r["p_max"].as_f64()?, r["xprime_change"].as_f64()?)))
        .filter(|(_, d)| *d > 0.0)
        .unzip();
    let p_slope = if ps.len() >= 2 { Some(loglog_slope(&ps, &ds)) } else { None };
    let summary = vec![
        format!("L-sweep X' error slope {:.4} over L = {:?}", sweep.slope, e.l),
        format!("lnPsi defects {:?}, decreasing: {}", sweep.rows.iter().map(|r| r.ln_psi_defect).collect::<Vec<_>>(), sweep.defect_decreasing),
        format!("resolution sweep changes {:?}", ds),
    ];
    let result = json!({ "l_sweep": to_value(&sweep), "resolution_sweep": res, "resolution_slope": p_slope });
    Ok(Output { result, tables: vec![lt, rt], summary })
}
