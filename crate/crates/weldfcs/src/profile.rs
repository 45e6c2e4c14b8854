use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ode::{dopri5, OdeOptions};
use crate::quad::gauss_legendre;

const PANELS: usize = 64;
const PANEL_ORDER: usize = 20;

/// Interpolant used on the kink support.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// phi(u) = 1 / (1 + exp(alpha/u - alpha/(1-u))), a C-infinity step flat at both ends.
    Bump { alpha: f64 },
}

impl Default for Shape {
    fn default() -> Self {
        Shape::Bump { alpha: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mover {
    Plus,
    Minus,
}

impl Mover {
    pub fn sign(self) -> f64 {
        match self {
            Mover::Plus => 1.0,
            Mover::Minus => -1.0,
        }
    }

    pub fn both() -> [Mover; 2] {
        [Mover::Plus, Mover::Minus]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureProfile {
    pub beta_left: f64,
    pub beta_right: f64,
    pub center: f64,
    pub half_width: f64,
    pub shape: Shape,
}

impl TemperatureProfile {
    pub fn new(beta_left: f64, beta_right: f64, center: f64, half_width: f64, shape: Shape) -> Result<Self> {
        let pos = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        pos("beta_left", beta_left)?;
        pos("beta_right", beta_right)?;
        pos("half_width", half_width)?;
        if !center.is_finite() {
            return Err(Error::config("center", "must be finite"));
        }
        let Shape::Bump { alpha } = shape;
        pos("bump_alpha", alpha)?;
        Ok(TemperatureProfile { beta_left, beta_right, center, half_width, shape })
    }

    /// beta_L = 2, beta_R = 1, a = 0, delta = 1, alpha = 2.
    pub fn default_kink() -> Self {
        TemperatureProfile { beta_left: 2.0, beta_right: 1.0, center: 0.0, half_width: 1.0, shape: Shape::default() }
    }

    pub fn delta_beta(&self) -> f64 {
        self.beta_right - self.beta_left
    }

    pub fn support(&self) -> (f64, f64) {
        (self.center - self.half_width, self.center + self.half_width)
    }

    /// Harmonic mean 2 / (1/beta_L + 1/beta_R).
    pub fn beta0(&self) -> f64 {
        2.0 / (1.0 / self.beta_left + 1.0 / self.beta_right)
    }

    /// (phi, dphi/du, d2phi/du2) on the unit interval.
    pub fn phi_derivs(&self, u: f64) -> (f64, f64, f64) {
        if u <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        if u >= 1.0 {
            return (1.0, 0.0, 0.0);
        }
        let Shape::Bump { alpha } = self.shape;
        let v = 1.0 - u;
        let w = alpha * (1.0 / u - 1.0 / v);
        let w1 = -alpha * (1.0 / (u * u) + 1.0 / (v * v));
        let w2 = 2.0 * alpha * (1.0 / (u * u * u) - 1.0 / (v * v * v));
        let e = (-w.abs()).exp();
        let phi = if w > 0.0 { e / (1.0 + e) } else { 1.0 / (1.0 + e) };
        let pq = e / ((1.0 + e) * (1.0 + e));
        if pq == 0.0 {
            return (phi, 0.0, 0.0);
        }
        let d1 = -pq * w1;
        let d2 = (1.0 - 2.0 * phi) * pq * w1 * w1 - pq * w2;
        (phi, d1, d2)
    }

    fn unit(&self, x: f64) -> f64 {
        (x - (self.center - self.half_width)) / (2.0 * self.half_width)
    }

    pub fn beta(&self, x: f64) -> f64 {
        self.beta_left + self.delta_beta() * self.phi_derivs(self.unit(x)).0
    }

    /// (beta, beta', beta'').
    pub fn beta_derivs(&self, x: f64) -> (f64, f64, f64) {
        let (p, p1, p2) = self.phi_derivs(self.unit(x));
        let d = 2.0 * self.half_width;
        let db = self.delta_beta();
        (self.beta_left + db * p, db * p1 / d, db * p2 / (d * d))
    }

    /// Schwarzian of h, where h' = beta0 / beta: -beta''/beta + (beta'/beta)^2 / 2.
    pub fn sh(&self, x: f64) -> f64 {
        let (b, b1, b2) = self.beta_derivs(x);
        -b2 / b + 0.5 * (b1 / b) * (b1 / b)
    }
}

/// Infinite-volume maps H(x) = \int_{a-delta}^x 1/beta, h = beta0 (H - H(0)) and the fields xi.
#[derive(Clone, Debug)]
pub struct KinkMaps {
    pub profile: TemperatureProfile,
    pub v: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
    gx: Vec<f64>,
    gw: Vec<f64>,
    h_at_zero: f64,
}

impl KinkMaps {
    pub fn new(profile: TemperatureProfile, v: f64) -> Result<Self> {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::config("v", format!("must be positive and finite, got {v}")));
        }
        let (lo, hi) = profile.support();
        let (gx, gw) = gauss_legendre(PANEL_ORDER);
        let edges: Vec<f64> = (0..=PANELS).map(|i| lo + (hi - lo) * i as f64 / PANELS as f64).collect();
        let mut maps = KinkMaps { profile, v, edges, cum: vec![0.0], gx, gw, h_at_zero: 0.0 };
        let mut cum = vec![0.0];
        for i in 0..PANELS {
            let last = *cum.last().unwrap();
            cum.push(last + maps.panel_integral(maps.edges[i], maps.edges[i + 1]));
        }
        maps.cum = cum;
        maps.h_at_zero = maps.big_h(0.0);
        Ok(maps)
    }

    fn panel_integral(&self, a: f64, b: f64) -> f64 {
        let (m, r) = (0.5 * (a + b), 0.5 * (b - a));
        self.gx.iter().zip(&self.gw).map(|(x, w)| w / self.profile.beta(m + r * x)).sum::<f64>() * r
    }

    pub fn beta0(&self) -> f64 {
        self.profile.beta0()
    }

    pub fn gamma(&self) -> f64 {
        self.v * self.beta0()
    }

    /// H(x) = \int_{a-delta}^x dy / beta(y).
    pub fn big_h(&self, x: f64) -> f64 {
        let (lo, hi) = self.profile.support();
        if x <= lo {
            return (x - lo) / self.profile.beta_left;
        }
        let total = self.cum[PANELS];
        if x >= hi {
            return total + (x - hi) / self.profile.beta_right;
        }
        let i = (((x - lo) / (hi - lo) * PANELS as f64) as usize).min(PANELS - 1);
        self.cum[i] + self.panel_integral(self.edges[i], x)
    }

    pub fn big_h_inv(&self, y: f64) -> f64 {
        let (lo, hi) = self.profile.support();
        let total = self.cum[PANELS];
        if y <= 0.0 {
            return lo + y * self.profile.beta_left;
        }
        if y >= total {
            return hi + (y - total) * self.profile.beta_right;
        }
        let i = self.cum.partition_point(|&c| c <= y).clamp(1, PANELS) - 1;
        let frac = (y - self.cum[i]) / (self.cum[i + 1] - self.cum[i]);
        let mut x = self.edges[i] + frac * (self.edges[i + 1] - self.edges[i]);
        for _ in 0..60 {
            let dx = (self.big_h(x) - y) * self.profile.beta(x);
            x = (x - dx).clamp(lo, hi);
            if dx.abs() <= 1e-15 * (1.0 + x.abs()) {
                break;
            }
        }
        x
    }

    pub fn h(&self, x: f64) -> f64 {
        self.beta0() * (self.big_h(x) - self.h_at_zero)
    }

    pub fn h_inv(&self, y: f64) -> f64 {
        self.big_h_inv(y / self.beta0() + self.h_at_zero)
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        self.beta0() / self.profile.beta(x)
    }

    /// xi^+_t(y) = gamma beta(x + vt) / beta(x) - gamma at x = h^{-1}(y); xi^-_t(y) = xi^+_{-t}(-y).
    pub fn xi(&self, mover: Mover, t: f64, y: f64) -> f64 {
        let (tt, yy) = match mover {
            Mover::Plus => (t, y),
            Mover::Minus => (-t, -y),
        };
        let x = self.h_inv(yy);
        self.gamma() * (self.profile.beta(x + self.v * tt) / self.profile.beta(x) - 1.0)
    }

    /// Support of xi^pm_t in the y variable.
    pub fn xi_support(&self, mover: Mover, t: f64) -> (f64, f64) {
        let (lo, hi) = self.profile.support();
        let tt = mover.sign() * t;
        let vt = self.v * tt;
        let (ylo, yhi) = (self.h(lo - vt.max(0.0)), self.h(hi - vt.min(0.0)));
        match mover {
            Mover::Plus => (ylo, yhi),
            Mover::Minus => (-yhi, -ylo),
        }
    }

    /// Plateau value of xi^pm_t for vt >= 2 delta.
    pub fn plateau(&self, mover: Mover) -> f64 {
        let p = &self.profile;
        match mover {
            Mover::Plus => self.gamma() * p.delta_beta() / p.beta_left,
            Mover::Minus => -self.gamma() * p.delta_beta() / p.beta_right,
        }
    }

    /// Flow in the x chart, dx/ds = -v beta(x + vt), integrated with DOPRI5.
    pub fn flow_x(&self, xs: &[f64], s: f64, t: f64, opts: OdeOptions) -> Result<Vec<f64>> {
        let (v, p) = (self.v, self.profile);
        dopri5(
            |_, x, d| {
                for (di, xi) in d.iter_mut().zip(x) {
                    *di = -v * p.beta(xi + v * t);
                }
            },
            0.0,
            s,
            xs,
            opts,
        )
    }

    /// g^+_{s,t} = f^+_{s,t} + gamma s on the points `ys`.
    fn g_plus(&self, s: f64, t: f64, ys: &[f64], opts: OdeOptions) -> Result<Vec<f64>> {
        let (lo, hi) = self.profile.support();
        let (v, p) = (self.v, &self.profile);
        // Where both x and x + vt stay on one side of the kink along the path, g = id exactly.
        let meets = |x: f64| {
            let w = x + v * t;
            let speed = if w < lo {
                p.beta_left
            } else if w > hi {
                p.beta_right
            } else {
                return true;
            };
            let ws = w - v * speed * s;
            let (a, b) = (w.min(ws), w.max(ws));
            let (a, b) = (a.min(a - v * t), b.max(b - v * t));
            !(b < lo && speed == p.beta_left || a > hi && speed == p.beta_right)
        };
        let active: Vec<usize> = (0..ys.len()).filter(|&i| meets(self.h_inv(ys[i]))).collect();
        let xs: Vec<f64> = active.iter().map(|&i| self.h_inv(ys[i])).collect();
        let xf = self.flow_x(&xs, s, t, opts)?;
        let gs = self.gamma() * s;
        let mut out = ys.to_vec();
        for (&i, x) in active.iter().zip(&xf) {
            out[i] = self.h(*x) + gs;
        }
        Ok(out)
    }

    /// Shifted line diffeomorphism g^pm_{s,t}(y), identity outside a bounded interval.
    pub fn g(&self, mover: Mover, s: f64, t: f64, ys: &[f64], opts: OdeOptions) -> Result<Vec<f64>> {
        match mover {
            Mover::Plus => self.g_plus(s, t, ys, opts),
            Mover::Minus => {
                let neg: Vec<f64> = ys.iter().map(|y| -y).collect();
                Ok(self.g_plus(-s, -t, &neg, opts)?.iter().map(|g| -g).collect())
            }
        }
    }

    /// Closed-form flow x_s = H^{-1}(H(x + vt) - vs) - vt, used as an oracle.
    pub fn g_closed(&self, mover: Mover, s: f64, t: f64, y: f64) -> f64 {
        let (s, t, y, sg) = match mover {
            Mover::Plus => (s, t, y, 1.0),
            Mover::Minus => (-s, -t, -y, -1.0),
        };
        let x = self.h_inv(y);
        let xs = self.big_h_inv(self.big_h(x + self.v * t) - self.v * s) - self.v * t;
        sg * (self.h(xs) + self.gamma() * s)
    }

    /// Support of g^pm_{s,t} - id in y (conservative enclosure).
    pub fn g_support(&self, mover: Mover, s_max: f64, t: f64) -> (f64, f64) {
        let (lo, hi) = self.xi_support(mover, t);
        let p = &self.profile;
        let spread = self.gamma() * s_max.abs() * p.beta_left.max(p.beta_right) / p.beta_left.min(p.beta_right);
        (lo - spread, hi + spread)
    }
}

/// Finite-volume data: the periodised profile beta_L on [-3L/4, L/4] and the circle map h_L.
#[derive(Clone, Debug)]
pub struct BoxMaps {
    pub kink: KinkMaps,
    pub l: f64,
    c0: f64,
    period_h: f64,
}

impl BoxMaps {
    pub fn new(kink: KinkMaps, l: f64) -> Result<Self> {
        let (lo, hi) = kink.profile.support();
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::config("L", format!("must be positive and finite, got {l}")));
        }
        if lo < -l / 4.0 || hi > l / 4.0 {
            return Err(Error::BoxTooSmall { lo, hi, l });
        }
        let c0 = kink.big_h(-l / 4.0);
        let period_h = 2.0 * (kink.big_h(l / 4.0) - c0);
        Ok(BoxMaps { kink, l, c0, period_h })
    }

    pub fn v(&self) -> f64 {
        self.kink.v
    }

    /// beta_{0,L} = L / (2 \int_{-L/4}^{L/4} 1/beta).
    pub fn beta0(&self) -> f64 {
        self.l / self.period_h
    }

    pub fn gamma(&self) -> f64 {
        self.kink.v * self.beta0()
    }

    /// tau_0 = i gamma_L / L.
    pub fn tau0(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(0.0, self.gamma() / self.l)
    }

    fn reduce(&self, x: f64) -> (f64, f64) {
        let k = ((x + 0.75 * self.l) / self.l).floor();
        (x - k * self.l, k)
    }

    /// Periodised profile with (beta_L, beta_L', beta_L'').
    pub fn beta_derivs(&self, x: f64) -> (f64, f64, f64) {
        let (xr, _) = self.reduce(x);
        let p = &self.kink.profile;
        if xr >= -self.l / 4.0 {
            p.beta_derivs(xr)
        } else {
            let (b, b1, b2) = p.beta_derivs(-xr - self.l / 2.0);
            (b, -b1, b2)
        }
    }

    pub fn beta(&self, x: f64) -> f64 {
        self.beta_derivs(x).0
    }

    pub fn sh(&self, x: f64) -> f64 {
        let (b, b1, b2) = self.beta_derivs(x);
        -b2 / b + 0.5 * (b1 / b) * (b1 / b)
    }

    pub fn big_h(&self, x: f64) -> f64 {
        let (xr, k) = self.reduce(x);
        let base = if xr >= -self.l / 4.0 {
            self.kink.big_h(xr) - self.c0
        } else {
            -(self.kink.big_h(-xr - self.l / 2.0) - self.c0)
        };
        base + k * self.period_h
    }

    pub fn big_h_inv(&self, y: f64) -> f64 {
        let k = ((y + 0.5 * self.period_h) / self.period_h).floor();
        let yr = y - k * self.period_h;
        let x = if yr >= 0.0 {
            self.kink.big_h_inv(yr + self.c0)
        } else {
            -self.kink.big_h_inv(-yr + self.c0) - self.l / 2.0
        };
        x + k * self.l
    }

    pub fn h(&self, x: f64) -> f64 {
        self.beta0() * self.big_h(x) - self.l / 4.0
    }

    pub fn h_inv(&self, y: f64) -> f64 {
        self.big_h_inv((y + self.l / 4.0) / self.beta0())
    }

    pub fn h_prime(&self, x: f64) -> f64 {
        self.beta0() / self.beta(x)
    }

    /// xi_{t,L}(y) = zeta_{t,L}(y) - gamma_L.
    pub fn xi(&self, t: f64, y: f64) -> f64 {
        let x = self.h_inv(y);
        self.gamma() * (self.beta(x + self.v() * t) / self.beta(x) - 1.0)
    }

    pub fn flow_x(&self, xs: &[f64], s: f64, t: f64, opts: OdeOptions) -> Result<Vec<f64>> {
        let v = self.v();
        dopri5(
            |_, x, d| {
                for (di, xi) in d.iter_mut().zip(x) {
                    *di = -v * self.beta(xi + v * t);
                }
            },
            0.0,
            s,
            xs,
            opts,
        )
    }

    /// f_{s,t,L}(y) on the points `ys`.
    pub fn f(&self, s: f64, t: f64, ys: &[f64], opts: OdeOptions) -> Result<Vec<f64>> {
        let xs: Vec<f64> = ys.iter().map(|&y| self.h_inv(y)).collect();
        Ok(self.flow_x(&xs, s, t, opts)?.iter().map(|&x| self.h(x)).collect())
    }

    /// g_{s,t,L} = f_{s,t,L} + gamma_L s.
    pub fn g(&self, s: f64, t: f64, ys: &[f64], opts: OdeOptions) -> Result<Vec<f64>> {
        let gs = self.gamma() * s;
        Ok(self.f(s, t, ys, opts)?.iter().map(|f| f + gs).collect())
    }

    /// Frame origin that maps the infinite-volume kink onto its finite-volume copy.
    pub fn origin(&self, mover: Mover) -> f64 {
        let a = self.kink.profile.support().0;
        let o_plus = self.h(a) - self.kink.h(a);
        match mover {
            Mover::Plus => o_plus,
            Mover::Minus => -o_plus - self.l / 2.0,
        }
    }
}

/// Flow of a general field in the y chart: dy/ds = -zeta(y).
pub fn flow_field<Z: Fn(f64) -> f64>(zeta: Z, s: f64, ys: &[f64], opts: OdeOptions) -> Result<Vec<f64>> {
    dopri5(
        |_, y, d| {
            for (di, yi) in d.iter_mut().zip(y) {
                *di = -zeta(*yi);
            }
        },
        0.0,
        s,
        ys,
        opts,
    )
}
