use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of terms in any q-series.
pub const TERM_CAP: usize = 20_000;

const SERIES_EPS: f64 = 1e-17;

/// Below this value of max(Im tau, Im(-1/tau)) neither series is evaluated.
pub const MIN_SERIES_IM: f64 = 1e-3;

/// Model whose vacuum-sector character enters the finite-volume ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Theory {
    FreeFermion,
    FreeBoson { radius: f64 },
    CentralCharge { c: f64 },
}

impl Default for Theory {
    fn default() -> Self {
        Theory::FreeFermion
    }
}

impl Theory {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Theory::FreeBoson { radius } if !(radius.is_finite() && radius > 0.0) => {
                Err(Error::config("theory.radius", format!("must be positive, got {radius}")))
            }
            Theory::CentralCharge { c } if !(c.is_finite() && c > 0.0) => {
                Err(Error::config("theory.c", format!("must be positive, got {c}")))
            }
            _ => Ok(()),
        }
    }

    pub fn central_charge(&self) -> f64 {
        match *self {
            Theory::CentralCharge { c } => c,
            _ => 1.0,
        }
    }
}

fn check_tau(tau: C64) -> Result<()> {
    if !(tau.im > 0.0) || !tau.re.is_finite() {
        return Err(Error::InvalidArgument(format!("Im tau must be positive, got {tau}")));
    }
    Ok(())
}

/// sum_{n>=1} Log(1 - q^n).
fn ln_euler(tau: C64, cap: usize) -> Result<C64> {
    let q = (C64::i() * 2.0 * PI * tau).exp();
    let mut qn = q;
    let mut s = C64::new(0.0, 0.0);
    for _ in 0..cap {
        if qn.norm() < SERIES_EPS {
            return Ok(s);
        }
        s += (C64::new(1.0, 0.0) - qn).ln();
        qn *= q;
    }
    Err(Error::NotConverged { terms: cap })
}

/// ln eta(tau) = 2 pi i tau / 24 + sum Log(1 - q^n).
fn ln_eta(tau: C64, cap: usize) -> Result<C64> {
    Ok(C64::new(0.0, 2.0 * PI / 24.0) * tau + ln_euler(tau, cap)?)
}

/// sum_{k in Z} exp(i pi a k^2) for Im a > 0.
fn theta3(a: C64, cap: usize) -> Result<C64> {
    let mut s = C64::new(1.0, 0.0);
    for k in 1..=cap {
        let term = (C64::new(0.0, PI * (k * k) as f64) * a).exp();
        if term.norm() < SERIES_EPS {
            return Ok(s);
        }
        s += 2.0 * term;
    }
    Err(Error::NotConverged { terms: cap })
}

/// q^{-1/24} prod_{n>=1} (1 + q^{n-1/2})^2, as a logarithm.
fn ln_fermion_product(tau: C64, cap: usize) -> Result<C64> {
    let q = (C64::i() * 2.0 * PI * tau).exp();
    let mut qn = (C64::i() * PI * tau).exp();
    let mut s = C64::new(0.0, -2.0 * PI / 24.0) * tau;
    for _ in 0..cap {
        if qn.norm() < SERIES_EPS {
            return Ok(s);
        }
        s += 2.0 * (C64::new(1.0, 0.0) + qn).ln();
        qn *= q;
    }
    Err(Error::NotConverged { terms: cap })
}

/// Direct q-series for ln chi, without modular transformation.
pub fn ln_character_direct(theory: &Theory, tau: C64, cap: usize) -> Result<C64> {
    check_tau(tau)?;
    match *theory {
        Theory::FreeFermion => ln_fermion_product(tau, cap),
        Theory::FreeBoson { radius } => {
            let lattice = theta3(tau * (2.0 / (radius * radius)), cap)?;
            Ok(C64::new(0.0, -2.0 * PI / 24.0) * tau + lattice.ln() - ln_euler(tau, cap)?)
        }
        Theory::CentralCharge { .. } => Err(Error::SeriesInfeasible { im_tau: tau.im }),
    }
}

/// S-transformed series for ln chi, accurate for small |tau|.
pub fn ln_character_modular(theory: &Theory, tau: C64, cap: usize) -> Result<C64> {
    check_tau(tau)?;
    let dual = -1.0 / tau;
    match *theory {
        Theory::FreeFermion => ln_fermion_product(dual, cap),
        Theory::FreeBoson { radius } => {
            let r2 = radius * radius;
            let th = theta3(-r2 / (2.0 * tau), cap)?;
            Ok(C64::new(0.5 * (r2 / 2.0).ln(), 0.0) + th.ln() - ln_eta(dual, cap)?)
        }
        Theory::CentralCharge { .. } => Err(Error::SeriesInfeasible { im_tau: tau.im }),
    }
}

/// ln chi(tau), choosing the faster-converging of the direct and S-transformed series.
pub fn ln_character(theory: &Theory, tau: C64) -> Result<C64> {
    check_tau(tau)?;
    let dual_im = (-1.0 / tau).im;
    if tau.im.max(dual_im) < MIN_SERIES_IM || matches!(theory, Theory::CentralCharge { .. }) {
        return Err(Error::SeriesInfeasible { im_tau: tau.im });
    }
    if tau.im >= dual_im {
        ln_character_direct(theory, tau, TERM_CAP)
    } else {
        ln_character_modular(theory, tau, TERM_CAP)
    }
}

pub fn character(theory: &Theory, tau: C64) -> Result<C64> {
    Ok(ln_character(theory, tau)?.exp())
}

/// Leading small-tau behaviour ln chi(tau) ~ i pi c / (12 tau).
pub fn ln_character_leading(c: f64, tau: C64) -> C64 {
    C64::new(0.0, PI * c / 12.0) / tau
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SmallTauRatio {
    /// ln(chi(tau_hat) / chi(tau0)) from the series, when feasible.
    pub ln_exact: Option<C64>,
    /// i pi c / 12 (1/tau_hat - 1/tau0).
    pub ln_leading: C64,
    /// -i pi c / 12 (tau_hat - tau0) / tau0^2.
    pub ln_surrogate: C64,
    /// |exact/surrogate - 1|.
    pub rel_diff: Option<f64>,
    /// Set when the series could not be evaluated.
    #[serde(skip)]
    pub infeasible: Option<Error>,
}

impl SmallTauRatio {
    /// Best available value of ln(chi(tau_hat)/chi(tau0)).
    pub fn ln_ratio(&self) -> C64 {
        self.ln_exact.unwrap_or(self.ln_leading)
    }
}

pub fn small_tau_ratio(theory: &Theory, tau_hat: C64, tau0: C64) -> Result<SmallTauRatio> {
    check_tau(tau_hat)?;
    check_tau(tau0)?;
    let c = theory.central_charge();
    let ln_leading = ln_character_leading(c, tau_hat) - ln_character_leading(c, tau0);
    let ln_surrogate = C64::new(0.0, -PI * c / 12.0) * (tau_hat - tau0) / (tau0 * tau0);
    let exact = ln_character(theory, tau_hat).and_then(|a| Ok(a - ln_character(theory, tau0)?));
    Ok(match exact {
        Ok(e) => SmallTauRatio {
            ln_exact: Some(e),
            ln_leading,
            ln_surrogate,
            rel_diff: Some(((e - ln_surrogate).exp() - 1.0).norm()),
            infeasible: None,
        },
        Err(err @ Error::SeriesInfeasible { .. }) => SmallTauRatio {
            ln_exact: None,
            ln_leading,
            ln_surrogate,
            rel_diff: None,
            infeasible: Some(err),
        },
        Err(e) => return Err(e),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn boson(r: f64) -> Theory {
        Theory::FreeBoson { radius: r }
    }

    /// Fermion trace over the CAR Fock space: occupation of NS levels n - 1/2 with
    /// two species, summed level by level as a polynomial in q^{1/2}.
    fn fermion_fock_trace(tau: C64, max_level: usize) -> C64 {
        let mut coeff = vec![0.0f64; max_level + 1];
        coeff[0] = 1.0;
        for _species in 0..2 {
            for k in (1..=max_level).step_by(2) {
                for j in (k..=max_level).rev() {
                    coeff[j] += coeff[j - k];
                }
            }
        }
        let q_half = (C64::i() * PI * tau).exp();
        let sum: C64 = coeff.iter().enumerate().map(|(j, c)| *c * q_half.powu(j as u32)).sum();
        (C64::new(0.0, -2.0 * PI / 24.0) * tau).exp() * sum
    }

    #[test]
    fn self_dual_boson_equals_fermion_fock_trace_at_tau_i() {
        let tau = C64::new(0.0, 1.0);
        let b = character(&boson(2f64.sqrt()), tau).unwrap();
        let f = fermion_fock_trace(tau, 60);
        assert!((b / f - 1.0).norm() < 1e-13);
    }

    #[test]
    fn vacuum_dominates_as_q_vanishes() {
        let tau = C64::new(0.1, 8.0);
        let q = (C64::i() * 2.0 * PI * tau).exp();
        for th in [Theory::FreeFermion, boson(1.3)] {
            let chi = character(&th, tau).unwrap();
            let lead = q.powf(-1.0 / 24.0);
            assert!((chi / lead - 1.0).norm() < 1e-10);
        }
    }

    #[test]
    fn direct_series_converges_at_small_im_tau() {
        let tau = C64::new(0.0, 0.05);
        for th in [Theory::FreeFermion, boson(1.0)] {
            let direct = ln_character_direct(&th, tau, TERM_CAP).unwrap();
            let modular = ln_character_modular(&th, tau, TERM_CAP).unwrap();
            assert!(direct.is_finite());
            assert!((direct - modular).norm() < 1e-10);
        }
        assert!(matches!(ln_character_direct(&boson(1.0), tau, 10), Err(Error::NotConverged { .. })));
    }

    #[test]
    fn equal_arguments_give_unit_ratio() {
        let tau = C64::new(0.0, 0.05);
        let r = small_tau_ratio(&boson(1.0), tau, tau).unwrap();
        assert_eq!(r.ln_exact, Some(C64::new(0.0, 0.0)));
        assert_eq!(r.ln_surrogate, C64::new(0.0, 0.0));
    }

    #[test]
    fn modular_leading_form_matches_series_at_small_tau() {
        let tau0 = C64::new(0.0, 0.05);
        let tau_hat = tau0 + C64::new(1e-4, 1e-4);
        let r = small_tau_ratio(&boson(1.0), tau_hat, tau0).unwrap();
        let exact = r.ln_exact.unwrap();
        assert!((exact - r.ln_leading).norm() < 1e-12);
        let d = tau_hat - tau0;
        let second = C64::new(0.0, PI / 12.0) * d * d / (tau0 * tau0 * tau0);
        let gap = exact - r.ln_surrogate;
        assert!((gap - second).norm() < 0.05 * second.norm());
    }

    #[test]
    fn log_character_minus_leading_stays_bounded() {
        let vals: Vec<f64> = [0.1, 0.05, 0.02]
            .iter()
            .map(|&e| (ln_character(&boson(1.0), C64::new(0.0, e)).unwrap() - 2.0 * PI / (24.0 * e)).norm())
            .collect();
        assert!(vals.iter().all(|v| (*v - 0.5 * 2f64.ln()).abs() < 1e-6), "{vals:?}");
    }

    #[test]
    fn central_charge_only_is_flagged() {
        let th = Theory::CentralCharge { c: 2.0 };
        let r = small_tau_ratio(&th, C64::new(0.001, 0.05), C64::new(0.0, 0.05)).unwrap();
        assert!(r.ln_exact.is_none() && matches!(r.infeasible, Some(Error::SeriesInfeasible { .. })));
        assert_eq!(r.ln_ratio(), r.ln_leading);
    }

    #[test]
    fn validation_names_keys() {
        assert!(matches!(boson(-1.0).validate(), Err(Error::ConfigInvalid { key, .. }) if key == "theory.radius"));
        assert!(matches!(Theory::CentralCharge { c: 0.0 }.validate(), Err(Error::ConfigInvalid { key, .. }) if key == "theory.c"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn self_dual_boson_equals_fermion(re in -0.5f64..0.5, im in 0.05f64..2.0) {
            let tau = C64::new(re, im);
            let b = character(&boson(2f64.sqrt()), tau).unwrap();
            let f = character(&Theory::FreeFermion, tau).unwrap();
            prop_assert!((b / f - 1.0).norm() < 1e-12);
        }

        #[test]
        fn character_positive_on_imaginary_axis(t in 0.02f64..5.0, r in 0.5f64..3.0) {
            for th in [Theory::FreeFermion, boson(r)] {
                let chi = character(&th, C64::new(0.0, t)).unwrap();
                prop_assert!(chi.re > 0.0 && chi.im.abs() < 1e-12 * chi.re);
            }
        }
    }
}
