//! Solver configuration and its flat key/value file form.
//!
//! Config files are flat TOML: one `key = value` per line, no tables.
//! Unknown keys are rejected; missing keys take the defaults of
//! [`SolverConfig::default`]. Gradients use Sobel kernels normalised by
//! 1/8 (intensity per pixel step), which sets the scale of `lambda`, `mu`
//! and `s`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smoothing applied to the closed-form illumination estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IlluminationProx {
    Identity,
    Gaussian { sigma: f64 },
    /// Guided filter of the estimate, guided by the previous illumination.
    Guided { radius: usize, regularization: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// The final reflectance, clamped to the unit range.
    #[default]
    Reflectance,
    /// Reflectance times the gamma-adjusted final illumination.
    Relit,
}

impl OutputMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputMode::Reflectance => "reflectance",
            OutputMode::Relit => "relit",
        }
    }
}

impl std::str::FromStr for OutputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reflectance" => Ok(OutputMode::Reflectance),
            "relit" => Ok(OutputMode::Relit),
            other => Err(Error::config(
                "output_mode",
                format!("expected `reflectance` or `relit`, got `{other}`"),
            )),
        }
    }
}

/// Lightweight variants share the solver and differ only in depth and
/// refinement cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Standard,
    Small,
    Tiny,
}

/// Model weights, stage count, surrogate selections and solver tolerances.
/// One config is shared by every stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Reflectance proximal weight.
    pub beta: f64,
    /// Illumination proximal weight.
    pub gamma: f64,
    /// Illumination smoothness weight.
    pub lambda: f64,
    /// Texture-consistency weight.
    pub mu: f64,
    /// Diffusion sensitivity.
    pub s: f64,
    /// Width of the quadratic core of the smoothed l1 term; its gradient is
    /// `1/huber_delta`-Lipschitz.
    pub huber_delta: f64,
    /// Illumination floor.
    pub epsilon: f64,
    pub stages: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub prox_illum: IlluminationProx,
    pub shrink_tau: f64,
    pub gw_sigma: f64,
    pub gw_mu: f64,
    /// Number of trailing stages over which ISIC is reported and tuned.
    pub isic_last_n: usize,
    /// Weight of the final stage inside the ISIC window (others weigh 1).
    pub isic_final_weight: f64,
    pub output_mode: OutputMode,
    /// Illumination is raised to `1/relit_gamma` in relit mode.
    pub relit_gamma: f64,
    /// Keep going when a linear solve misses its tolerance.
    pub best_effort: bool,
}

const DEFAULT_GUIDED_RADIUS: usize = 2;
const DEFAULT_GUIDED_REG: f64 = 1e-3;

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            beta: 0.05,
            gamma: 0.05,
            lambda: 0.1,
            mu: 0.01,
            s: 0.1,
            huber_delta: 0.01,
            epsilon: 1e-4,
            stages: 3,
            cg_tol: 1e-8,
            cg_max_iter: 500,
            prox_illum: IlluminationProx::Guided {
                radius: DEFAULT_GUIDED_RADIUS,
                regularization: DEFAULT_GUIDED_REG,
            },
            shrink_tau: 0.02,
            gw_sigma: 0.0,
            gw_mu: 0.0,
            isic_last_n: 2,
            isic_final_weight: 1.0,
            output_mode: OutputMode::Reflectance,
            relit_gamma: 2.2,
            best_effort: false,
        }
    }
}

impl SolverConfig {
    pub fn preset(p: Preset) -> Self {
        let base = Self::default();
        match p {
            Preset::Standard => base,
            Preset::Small => Self { stages: 2, ..base },
            Preset::Tiny => Self {
                stages: 1,
                prox_illum: IlluminationProx::Gaussian { sigma: 1.0 },
                ..base
            },
        }
    }

    /// `L_S`, the Lipschitz constant of the smoothed l1 gradient.
    pub fn lipschitz(&self) -> f64 {
        1.0 / self.huber_delta
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        }
        fn non_negative(key: &str, v: f64) -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be non-negative and finite, got {v}")))
            }
        }
        fn finite(key: &str, v: f64) -> Result<()> {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite, got {v}")))
            }
        }
        positive("beta", self.beta)?;
        positive("gamma", self.gamma)?;
        non_negative("lambda", self.lambda)?;
        non_negative("mu", self.mu)?;
        positive("s", self.s)?;
        positive("huber_delta", self.huber_delta)?;
        if !(self.epsilon > 0.0 && self.epsilon < 0.1) {
            return Err(Error::config(
                "epsilon",
                format!("must lie in (0, 0.1), got {}", self.epsilon),
            ));
        }
        if self.stages == 0 {
            return Err(Error::config("stages", "must be at least 1"));
        }
        positive("cg_tol", self.cg_tol)?;
        if self.cg_max_iter == 0 {
            return Err(Error::config("cg_max_iter", "must be at least 1"));
        }
        match self.prox_illum {
            IlluminationProx::Identity => {}
            IlluminationProx::Gaussian { sigma } => positive("gaussian_sigma", sigma)?,
            IlluminationProx::Guided { regularization, .. } => {
                positive("guided_reg", regularization)?
            }
        }
        non_negative("shrink_tau", self.shrink_tau)?;
        finite("gw_sigma", self.gw_sigma)?;
        finite("gw_mu", self.gw_mu)?;
        if self.isic_last_n == 0 {
            return Err(Error::config("isic_last_n", "must be at least 1"));
        }
        non_negative("isic_final_weight", self.isic_final_weight)?;
        positive("relit_gamma", self.relit_gamma)?;
        Ok(())
    }
}

/// Input/output keys that may sit alongside the solver keys in a config
/// file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IoSettings {
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub trace_dir: Option<PathBuf>,
}

/// On-disk schema: every key optional, no nesting.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    input: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace_dir: Option<PathBuf>,
    output_mode: Option<String>,
    beta: Option<f64>,
    gamma: Option<f64>,
    lambda: Option<f64>,
    mu: Option<f64>,
    s: Option<f64>,
    huber_delta: Option<f64>,
    epsilon: Option<f64>,
    stages: Option<usize>,
    cg_tol: Option<f64>,
    cg_max_iter: Option<usize>,
    prox_illum: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gaussian_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    guided_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    guided_reg: Option<f64>,
    shrink_tau: Option<f64>,
    gw_sigma: Option<f64>,
    gw_mu: Option<f64>,
    isic_last_n: Option<usize>,
    isic_final_weight: Option<f64>,
    relit_gamma: Option<f64>,
    best_effort: Option<bool>,
}

/// Parses a flat config document into a validated solver config plus any
/// io keys it carries.
pub fn parse_config(text: &str) -> Result<(SolverConfig, IoSettings)> {
    let flat: FlatConfig = toml::from_str(text).map_err(|e| {
        let msg = e.message().to_string();
        let key = msg
            .split('`')
            .nth(1)
            .filter(|_| msg.contains("unknown field"))
            .unwrap_or("<document>")
            .to_string();
        Error::config(key, msg)
    })?;

    let d = SolverConfig::default();
    let mode = flat.prox_illum.as_deref().unwrap_or("guided");
    if mode != "gaussian" && flat.gaussian_sigma.is_some() {
        return Err(Error::config("gaussian_sigma", "only valid with prox_illum = \"gaussian\""));
    }
    if mode != "guided" {
        for (key, present) in [
            ("guided_radius", flat.guided_radius.is_some()),
            ("guided_reg", flat.guided_reg.is_some()),
        ] {
            if present {
                return Err(Error::config(key, "only valid with prox_illum = \"guided\""));
            }
        }
    }
    let prox_illum = match mode {
        "guided" => IlluminationProx::Guided {
            radius: flat.guided_radius.unwrap_or(DEFAULT_GUIDED_RADIUS),
            regularization: flat.guided_reg.unwrap_or(DEFAULT_GUIDED_REG),
        },
        "gaussian" => IlluminationProx::Gaussian {
            sigma: flat.gaussian_sigma.unwrap_or(1.0),
        },
        "identity" => IlluminationProx::Identity,
        other => {
            return Err(Error::config(
                "prox_illum",
                format!("expected `identity`, `gaussian` or `guided`, got `{other}`"),
            ))
        }
    };

    let cfg = SolverConfig {
        beta: flat.beta.unwrap_or(d.beta),
        gamma: flat.gamma.unwrap_or(d.gamma),
        lambda: flat.lambda.unwrap_or(d.lambda),
        mu: flat.mu.unwrap_or(d.mu),
        s: flat.s.unwrap_or(d.s),
        huber_delta: flat.huber_delta.unwrap_or(d.huber_delta),
        epsilon: flat.epsilon.unwrap_or(d.epsilon),
        stages: flat.stages.unwrap_or(d.stages),
        cg_tol: flat.cg_tol.unwrap_or(d.cg_tol),
        cg_max_iter: flat.cg_max_iter.unwrap_or(d.cg_max_iter),
        prox_illum,
        shrink_tau: flat.shrink_tau.unwrap_or(d.shrink_tau),
        gw_sigma: flat.gw_sigma.unwrap_or(d.gw_sigma),
        gw_mu: flat.gw_mu.unwrap_or(d.gw_mu),
        isic_last_n: flat.isic_last_n.unwrap_or(d.isic_last_n),
        isic_final_weight: flat.isic_final_weight.unwrap_or(d.isic_final_weight),
        output_mode: match flat.output_mode.as_deref() {
            Some(m) => m.parse()?,
            None => d.output_mode,
        },
        relit_gamma: flat.relit_gamma.unwrap_or(d.relit_gamma),
        best_effort: flat.best_effort.unwrap_or(d.best_effort),
    };
    cfg.validate()?;
    Ok((
        cfg,
        IoSettings {
            input: flat.input,
            output: flat.output,
            trace_dir: flat.trace_dir,
        },
    ))
}

/// Renders a config as a flat document that [`parse_config`] reads back.
pub fn render_config(cfg: &SolverConfig) -> String {
    let (prox, gaussian_sigma, guided_radius, guided_reg) = match cfg.prox_illum {
        IlluminationProx::Identity => ("identity", None, None, None),
        IlluminationProx::Gaussian { sigma } => ("gaussian", Some(sigma), None, None),
        IlluminationProx::Guided {
            radius,
            regularization,
        } => ("guided", None, Some(radius), Some(regularization)),
    };
    let flat = FlatConfig {
        output_mode: Some(cfg.output_mode.as_str().to_string()),
        beta: Some(cfg.beta),
        gamma: Some(cfg.gamma),
        lambda: Some(cfg.lambda),
        mu: Some(cfg.mu),
        s: Some(cfg.s),
        huber_delta: Some(cfg.huber_delta),
        epsilon: Some(cfg.epsilon),
        stages: Some(cfg.stages),
        cg_tol: Some(cfg.cg_tol),
        cg_max_iter: Some(cfg.cg_max_iter),
        prox_illum: Some(prox.to_string()),
        gaussian_sigma,
        guided_radius,
        guided_reg,
        shrink_tau: Some(cfg.shrink_tau),
        gw_sigma: Some(cfg.gw_sigma),
        gw_mu: Some(cfg.gw_mu),
        isic_last_n: Some(cfg.isic_last_n),
        isic_final_weight: Some(cfg.isic_final_weight),
        relit_gamma: Some(cfg.relit_gamma),
        best_effort: Some(cfg.best_effort),
        ..Default::default()
    };
    toml::to_string(&flat).expect("flat config always serializes")
}
