use num_complex::Complex64 as C64;
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use weldfcs::characters::{small_tau_ratio, Theory};
use weldfcs::fcs::{ldf, rate_function};
use weldfcs::profile::{KinkMaps, Mover, Shape, TemperatureProfile};

#[derive(Deserialize)]
#[serde(default)]
struct ProfileArgs {
    beta_left: f64,
    beta_right: f64,
    center: f64,
    half_width: f64,
    bump_alpha: f64,
    v: f64,
    t: f64,
    x_min: f64,
    x_max: f64,
    points: usize,
}

impl Default for ProfileArgs {
    fn default() -> Self {
        ProfileArgs { beta_left: 2.0, beta_right: 1.0, center: 0.0, half_width: 1.0, bump_alpha: 2.0, v: 1.0, t: 2.0, x_min: -6.0, x_max: 6.0, points: 241 }
    }
}

#[derive(Deserialize)]
#[serde(default)]
struct RateArgs {
    beta_left: f64,
    beta_right: f64,
    c: f64,
    lambda_min: f64,
    lambda_max: f64,
    sigma_min: f64,
    sigma_max: f64,
    points: usize,
}

impl Default for RateArgs {
    fn default() -> Self {
        RateArgs { beta_left: 2.0, beta_right: 1.0, c: 1.0, lambda_min: -0.9, lambda_max: 1.9, sigma_min: -3.0, sigma_max: 3.0, points: 121 }
    }
}

#[derive(Deserialize)]
struct CharacterArgs {
    theory: Theory,
    tau0: [f64; 2],
    tau_hat: [f64; 2],
}

fn parse<T: for<'de> Deserialize<'de>>(args: &str) -> Result<T, String> {
    serde_json::from_str(if args.trim().is_empty() { "{}" } else { args }).map_err(|e| e.to_string())
}

fn grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

fn pair(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn profile_curves_json(args: &str) -> Result<String, String> {
    let a: ProfileArgs = parse(args)?;
    let p = TemperatureProfile::new(a.beta_left, a.beta_right, a.center, a.half_width, Shape::Bump { alpha: a.bump_alpha })
        .map_err(|e| e.to_string())?;
    let k = KinkMaps::new(p, a.v).map_err(|e| e.to_string())?;
    let xs = grid(a.x_min, a.x_max, a.points);
    let beta: Vec<f64> = xs.iter().map(|&x| p.beta(x)).collect();
    let h: Vec<f64> = xs.iter().map(|&x| k.h(x)).collect();
    let xi_plus: Vec<f64> = xs.iter().map(|&y| k.xi(Mover::Plus, a.t, y)).collect();
    let xi_minus: Vec<f64> = xs.iter().map(|&y| k.xi(Mover::Minus, a.t, y)).collect();
    Ok(json!({
        "x": xs, "beta": beta, "h": h, "xi_plus": xi_plus, "xi_minus": xi_minus,
        "gamma": k.gamma(), "beta0": k.beta0(), "t": a.t,
    })
    .to_string())
}

pub fn large_deviations_json(args: &str) -> Result<String, String> {
    let a: RateArgs = parse(args)?;
    let mut lambda = vec![];
    let mut xi = vec![];
    for l in grid(a.lambda_min, a.lambda_max, a.points) {
        if let Ok(r) = ldf(a.beta_left, a.beta_right, a.c, C64::new(l, 0.0)) {
            lambda.push(l);
            xi.push(json!({"plus": pair(r.plus), "minus": pair(r.minus), "total": pair(r.total)}));
        }
    }
    let sigma = grid(a.sigma_min, a.sigma_max, a.points);
    let rate: Vec<f64> = sigma.iter().map(|&s| rate_function(a.beta_left, a.beta_right, a.c, s).rate).collect();
    Ok(json!({ "lambda": lambda, "xi": xi, "sigma": sigma, "rate": rate }).to_string())
}

pub fn character_ratio_json(args: &str) -> Result<String, String> {
    let a: CharacterArgs = parse(args)?;
    a.theory.validate().map_err(|e| e.to_string())?;
    let r = small_tau_ratio(&a.theory, C64::new(a.tau_hat[0], a.tau_hat[1]), C64::new(a.tau0[0], a.tau0[1]))
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "ln_exact": r.ln_exact.map(pair),
        "ln_leading": pair(r.ln_leading),
        "ln_surrogate": pair(r.ln_surrogate),
        "rel_diff": r.rel_diff,
        "infeasible": r.infeasible.map(|e| e.to_string()),
    })
    .to_string())
}

/// beta(x), h(x) and the two xi weights on a uniform grid.
#[wasm_bindgen]
pub fn profile_curves(args: &str) -> Result<String, String> {
    profile_curves_json(args)
}

/// Long-time rates Xi(lambda) and the rate function I(sigma).
#[wasm_bindgen]
pub fn large_deviations(args: &str) -> Result<String, String> {
    large_deviations_json(args)
}

/// ln chi(tau_hat)/chi(tau0): exact series, modular leading form and linear surrogate.
#[wasm_bindgen]
pub fn character_ratio(args: &str) -> Result<String, String> {
    character_ratio_json(args)
}
