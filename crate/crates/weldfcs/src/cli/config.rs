use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::characters::Theory;
use crate::cylinder_weld::CylinderOptions;
use crate::error::{Error, Result};
use crate::fcs::{FiniteOptions, InfiniteOptions, MomentOptions, PathOptions};
use crate::ode::OdeOptions;
use crate::profile::{KinkMaps, Mover, Shape, TemperatureProfile};

pub const SCHEMA: &str = "weldfcs/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub profile: ProfileBlock,
    #[serde(default)]
    pub theory: Theory,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub experiment: Experiment,
    #[serde(default)]
    pub io: IoBlock,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileBlock {
    pub beta_left: f64,
    pub beta_right: f64,
    pub center: f64,
    pub half_width: f64,
    pub bump_alpha: f64,
    pub v: f64,
}

impl Default for ProfileBlock {
    fn default() -> Self {
        ProfileBlock { beta_left: 2.0, beta_right: 1.0, center: 0.0, half_width: 1.0, bump_alpha: 2.0, v: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub pad: f64,
    pub p_max: Option<f64>,
    pub p_growth: f64,
    pub max_refinements: usize,
    pub tail_tol: f64,
    pub cond_max: f64,
    pub residual_tol: f64,
    pub s_nodes: usize,
    pub s_max_nodes: usize,
    pub s_tol: f64,
    pub ode_atol: f64,
    pub ode_rtol: f64,
    pub ode_max_steps: usize,
    pub box_p_max: f64,
    pub box_tail_tol: f64,
    pub box_cond_max: f64,
    pub box_derivative_tol: f64,
    pub moment_p_cut: f64,
    pub moment_p_neg: f64,
    pub moment_p_panel: f64,
    pub stencil_h: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        let c = CylinderOptions::default();
        let p = PathOptions::default();
        let o = OdeOptions::default();
        let f = FiniteOptions::default();
        let m = MomentOptions::default();
        Numerics {
            pad: c.pad,
            p_max: c.p_max,
            p_growth: c.growth,
            max_refinements: c.max_refinements,
            tail_tol: c.tail_tol,
            cond_max: c.cond_max,
            residual_tol: c.residual_tol,
            s_nodes: p.initial,
            s_max_nodes: p.max,
            s_tol: p.tol,
            ode_atol: o.atol,
            ode_rtol: o.rtol,
            ode_max_steps: o.max_steps,
            box_p_max: f.p_max,
            box_tail_tol: f.tail_tol,
            box_cond_max: f.cond_max,
            box_derivative_tol: f.derivative_tol,
            moment_p_cut: m.p_cut,
            moment_p_neg: m.p_neg,
            moment_p_panel: m.p_panel,
            stencil_h: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Volume {
    Infinite,
    Finite,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Experiment {
    /// Times for fcs, moments and the long-time study.
    pub t: Vec<f64>,
    /// Real counting parameters.
    pub lambda: Vec<f64>,
    /// Interpret `lambda` as flow times s = lambda / Delta beta.
    pub by_s: bool,
    pub volume: Volume,
    /// Box sizes for finite volume and the convergence sweep.
    pub l: Vec<f64>,
    /// Flow time and mover for the welding commands.
    pub s: f64,
    pub mover: Mover,
    /// Probe points for X' tables and the convergence sweep.
    pub probes: Vec<f64>,
    /// Rate-function grid.
    pub sigma: Vec<f64>,
    /// Counting parameter of the long-time study; omitted when empty.
    pub longtime_lambda: Option<f64>,
    /// Cutoff multipliers of the resolution sweep.
    pub resolution: Vec<f64>,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            t: vec![2.0],
            lambda: vec![-0.2, -0.1, 0.0, 0.1, 0.2],
            by_s: false,
            volume: Volume::Infinite,
            l: vec![40.0],
            s: 0.2,
            mover: Mover::Plus,
            probes: (0..13).map(|j| -4.0 + 0.5 * j as f64).collect(),
            sigma: (0..=20).map(|k| -5.0 + 0.5 * k as f64).collect(),
            longtime_lambda: None,
            resolution: vec![1.0, 1.5, 2.25],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoBlock {
    pub output_dir: String,
    pub cache_dir: Option<String>,
    pub formats: Vec<Format>,
}

impl Default for IoBlock {
    fn default() -> Self {
        IoBlock { output_dir: "weldfcs-out".into(), cache_dir: None, formats: vec![Format::Json, Format::Csv] }
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be positive and finite, got {v}")))
    }
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be finite, got {v}")))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = msg
                .split('`')
                .nth(1)
                .filter(|_| msg.contains("unknown field") || msg.contains("missing field"))
                .unwrap_or("config")
                .to_string();
            Error::config(&key, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(Error::config("schema", format!("expected \"{SCHEMA}\", got \"{}\"", self.schema)));
        }
        let p = &self.profile;
        positive("profile.beta_left", p.beta_left)?;
        positive("profile.beta_right", p.beta_right)?;
        positive("profile.half_width", p.half_width)?;
        positive("profile.bump_alpha", p.bump_alpha)?;
        positive("profile.v", p.v)?;
        finite("profile.center", p.center)?;
        self.theory.validate()?;
        let n = &self.numerics;
        for (k, v) in [
            ("numerics.pad", n.pad),
            ("numerics.tail_tol", n.tail_tol),
            ("numerics.cond_max", n.cond_max),
            ("numerics.residual_tol", n.residual_tol),
            ("numerics.s_tol", n.s_tol),
            ("numerics.ode_atol", n.ode_atol),
            ("numerics.ode_rtol", n.ode_rtol),
            ("numerics.box_p_max", n.box_p_max),
            ("numerics.box_tail_tol", n.box_tail_tol),
            ("numerics.box_cond_max", n.box_cond_max),
            ("numerics.box_derivative_tol", n.box_derivative_tol),
            ("numerics.moment_p_cut", n.moment_p_cut),
            ("numerics.moment_p_neg", n.moment_p_neg),
            ("numerics.moment_p_panel", n.moment_p_panel),
            ("numerics.stencil_h", n.stencil_h),
        ] {
            positive(k, v)?;
        }
        if let Some(pm) = n.p_max {
            positive("numerics.p_max", pm)?;
        }
        if !(n.p_growth > 1.0 && n.p_growth.is_finite()) {
            return Err(Error::config("numerics.p_growth", "must exceed 1"));
        }
        if n.s_nodes == 0 || n.s_max_nodes < 2 * n.s_nodes {
            return Err(Error::config("numerics.s_nodes", "need s_nodes > 0 and s_max_nodes >= 2 s_nodes"));
        }
        if n.ode_max_steps == 0 {
            return Err(Error::config("numerics.ode_max_steps", "must be positive"));
        }
        let e = &self.experiment;
        if e.t.is_empty() {
            return Err(Error::config("experiment.t", "needs at least one time"));
        }
        for &t in &e.t {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::config("experiment.t", format!("times must be non-negative, got {t}")));
            }
        }
        for &l in &e.lambda {
            finite("experiment.lambda", l)?;
        }
        for &s in &e.sigma {
            finite("experiment.sigma", s)?;
        }
        for &x in &e.probes {
            finite("experiment.probes", x)?;
        }
        finite("experiment.s", e.s)?;
        for &r in &e.resolution {
            positive("experiment.resolution", r)?;
        }
        let (lo, hi) = (p.center - p.half_width, p.center + p.half_width);
        for &l in &e.l {
            positive("experiment.l", l)?;
            if lo < -l / 4.0 || hi > l / 4.0 {
                return Err(Error::config(
                    "profile.half_width",
                    format!("kink [{lo}, {hi}] must fit in [-L/4, L/4] for L = {l}; need half_width <= L/4 - |center|"),
                ));
            }
        }
        if !e.by_s && e.volume != Volume::Finite && p.beta_left == p.beta_right && e.lambda.iter().any(|l| *l != 0.0) {
            return Err(Error::config("experiment.by_s", "beta_left equals beta_right; set by_s = true and give flow times"));
        }
        Ok(())
    }

    pub fn temperature_profile(&self) -> Result<TemperatureProfile> {
        let p = &self.profile;
        TemperatureProfile::new(p.beta_left, p.beta_right, p.center, p.half_width, Shape::Bump { alpha: p.bump_alpha })
    }

    pub fn kink(&self) -> Result<KinkMaps> {
        KinkMaps::new(self.temperature_profile()?, self.profile.v)
    }

    pub fn ode(&self) -> OdeOptions {
        let n = &self.numerics;
        OdeOptions { atol: n.ode_atol, rtol: n.ode_rtol, max_steps: n.ode_max_steps }
    }

    pub fn path(&self) -> PathOptions {
        let n = &self.numerics;
        PathOptions { initial: n.s_nodes, max: n.s_max_nodes, tol: n.s_tol }
    }

    pub fn cylinder(&self) -> CylinderOptions {
        let n = &self.numerics;
        CylinderOptions {
            pad: n.pad,
            p_max: n.p_max,
            tail_tol: n.tail_tol,
            cond_max: n.cond_max,
            residual_tol: n.residual_tol,
            growth: n.p_growth,
            max_refinements: n.max_refinements,
        }
    }

    pub fn infinite(&self) -> InfiniteOptions {
        InfiniteOptions { cylinder: self.cylinder(), path: self.path(), ode: self.ode() }
    }

    pub fn finite(&self) -> FiniteOptions {
        let n = &self.numerics;
        FiniteOptions {
            p_max: n.box_p_max,
            tail_tol: n.box_tail_tol,
            cond_max: n.box_cond_max,
            residual_tol: n.residual_tol,
            derivative_tol: n.box_derivative_tol,
            path: self.path(),
            ode: self.ode(),
        }
    }

    pub fn moments(&self) -> MomentOptions {
        let n = &self.numerics;
        MomentOptions { p_cut: n.moment_p_cut, p_neg: n.moment_p_neg, p_panel: n.moment_p_panel }
    }
}
