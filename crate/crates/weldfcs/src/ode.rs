use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { atol: 1e-12, rtol: 1e-12, max_steps: 200_000 }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Dormand–Prince 5(4) integration of y' = f(t, y) from t0 to t1 with one shared step for all components.
pub fn dopri5<F>(mut f: F, t0: f64, t1: f64, y0: &[f64], opts: OdeOptions) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    if t1 == t0 || n == 0 {
        return Ok(y);
    }
    let dir = (t1 - t0).signum();
    let span = (t1 - t0).abs();
    let mut t = t0;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    f(t, &y, &mut k[0]);
    let scale0 = y.iter().map(|v| opts.atol + opts.rtol * v.abs()).collect::<Vec<_>>();
    let d0 = k[0].iter().zip(&scale0).map(|(a, s)| (a / s).abs()).fold(0.0, f64::max);
    let mut h = if d0 > 0.0 { (0.01 / d0).min(span) } else { span };
    h = h.max(span * 1e-8).min(span);
    let mut steps = 0;
    while (t1 - t) * dir > 0.0 {
        steps += 1;
        if steps > opts.max_steps || h < span * 1e-15 {
            return Err(Error::StepSizeUnderflow { s: t });
        }
        let hh = h.min((t1 - t).abs()) * dir;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += hh * A[s][j] * kj[i];
                }
                tmp[i] = acc;
            }
            f(t + C[s] * hh, &tmp, &mut k[s]);
        }
        let mut err: f64 = 0.0;
        for i in 0..n {
            let mut y5 = y[i];
            let mut e = 0.0;
            for s in 0..7 {
                y5 += hh * B5[s] * k[s][i];
                e += hh * (B5[s] - B4[s]) * k[s][i];
            }
            let sc = opts.atol + opts.rtol * y[i].abs().max(y5.abs());
            err = err.max((e / sc).abs());
        }
        if err <= 1.0 {
            t += hh;
            for i in 0..n {
                let mut y5 = y[i];
                for s in 0..7 {
                    y5 += hh * B5[s] * k[s][i];
                }
                y[i] = y5;
            }
            let last = k[6].clone();
            k[0].copy_from_slice(&last);
        }
        let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h = hh.abs() * fac;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_decay_to_tolerance() {
        let y = dopri5(|_, y, d| d[0] = -y[0], 0.0, 2.0, &[1.0], OdeOptions::default()).unwrap();
        assert!((y[0] - (-2.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn backward_integration() {
        let y = dopri5(|t, _, d| d[0] = t.cos(), 1.0, -0.5, &[1.0f64.sin()], OdeOptions::default()).unwrap();
        assert!((y[0] - (-0.5f64).sin()).abs() < 1e-11);
    }

    proptest! {
        #[test]
        fn logistic_flow_matches_closed_form(y0 in 0.05f64..0.95, t1 in -2.0f64..2.0) {
            let y = dopri5(|_, y, d| d[0] = y[0] * (1.0 - y[0]), 0.0, t1, &[y0], OdeOptions::default()).unwrap();
            let exact = y0 * t1.exp() / (1.0 - y0 + y0 * t1.exp());
            prop_assert!((y[0] - exact).abs() < 1e-10);
        }
    }
}
