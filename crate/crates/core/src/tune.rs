//! Training-free parameter tuning.
//!
//! The objective is no-reference. Per image:
//!
//! ```text
//! isic / n  +  EXPOSURE_WEIGHT * |mean(out) - 0.5|
//!           +  GRADIENT_WEIGHT * max(0, 1 - ||∇out||_1 / ||∇in||_1)
//! ```
//!
//! where `isic` is the windowed ISIC of the run and `n` the number of
//! samples. ISIC alone is minimised by flat outputs; the exposure and
//! gradient terms rule those out. The objective is averaged over the image
//! set and minimised by a deterministic multiplicative coordinate search.

use rayon::prelude::*;

use crate::config::SolverConfig;
use crate::diffops::sobel_grad;
use crate::error::{Error, Result};
use crate::image::MultiChannelImage;
use crate::pipeline::run_pipeline;

pub const EXPOSURE_WEIGHT: f64 = 1.0;
pub const GRADIENT_WEIGHT: f64 = 1.0;

fn gradient_l1(img: &MultiChannelImage) -> f64 {
    img.planes()
        .iter()
        .map(|p| {
            let g = sobel_grad(p);
            g.gx.abs_sum() + g.gy.abs_sum()
        })
        .sum()
}

fn image_objective(img: &MultiChannelImage, cfg: &SolverConfig) -> Result<f64> {
    let res = run_pipeline(img, cfg)?;
    let n = (img.height() * img.width() * img.channels()) as f64;
    let exposure = (res.output.mean() - 0.5).abs();
    let g_in = gradient_l1(img);
    let preserve = if g_in > 0.0 {
        (1.0 - gradient_l1(&res.output) / g_in).max(0.0)
    } else {
        0.0
    };
    Ok(res.final_isic / n + EXPOSURE_WEIGHT * exposure + GRADIENT_WEIGHT * preserve)
}

/// Mean tuning objective over an image set; images run concurrently.
pub fn tuning_objective(images: &[MultiChannelImage], cfg: &SolverConfig) -> Result<f64> {
    if images.is_empty() {
        return Err(Error::config("inputs", "tuning needs at least one image"));
    }
    let values = images
        .par_iter()
        .map(|img| image_objective(img, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// The tuned coordinates, in search order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TunedParam {
    Beta,
    Gamma,
    Lambda,
    Mu,
    S,
    ShrinkTau,
}

impl TunedParam {
    pub const ALL: [TunedParam; 6] = [
        TunedParam::Beta,
        TunedParam::Gamma,
        TunedParam::Lambda,
        TunedParam::Mu,
        TunedParam::S,
        TunedParam::ShrinkTau,
    ];

    fn slot(self, cfg: &mut SolverConfig) -> &mut f64 {
        match self {
            TunedParam::Beta => &mut cfg.beta,
            TunedParam::Gamma => &mut cfg.gamma,
            TunedParam::Lambda => &mut cfg.lambda,
            TunedParam::Mu => &mut cfg.mu,
            TunedParam::S => &mut cfg.s,
            TunedParam::ShrinkTau => &mut cfg.shrink_tau,
        }
    }

    /// Value tried when growing a coordinate that currently sits at zero.
    fn seed(self) -> f64 {
        match self {
            TunedParam::Lambda => 0.01,
            TunedParam::Mu => 1e-3,
            TunedParam::ShrinkTau => 5e-3,
            _ => 1e-3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TuneOutcome {
    pub config: SolverConfig,
    pub objective: f64,
    pub initial_objective: f64,
    pub evaluations: usize,
}

/// Multiplicative coordinate search over [`TunedParam::ALL`].
///
/// Each coordinate is tried at `x * step` and `x / step`; the first strict
/// improvement is kept. After a sweep without improvement the step shrinks
/// to its square root, and the search ends when the step drops below 1.05
/// or the evaluation budget (including the initial one) is spent. Candidates
/// the objective rejects (`None`) are skipped.
pub fn coordinate_search(
    cfg0: &SolverConfig,
    budget: usize,
    mut objective: impl FnMut(&SolverConfig) -> Option<f64>,
) -> Option<TuneOutcome> {
    let budget = budget.max(1);
    let initial = objective(cfg0)?;
    let mut best = cfg0.clone();
    let mut best_value = initial;
    let mut evaluations = 1;
    let mut step: f64 = 2.0;

    'search: while evaluations < budget && step >= 1.05 {
        let mut improved = false;
        for param in TunedParam::ALL {
            for grow in [true, false] {
                if evaluations >= budget {
                    break 'search;
                }
                let mut cand = best.clone();
                let slot = param.slot(&mut cand);
                let current = *slot;
                *slot = match (current == 0.0, grow) {
                    (true, true) => param.seed(),
                    (true, false) => continue,
                    (false, true) => current * step,
                    (false, false) => current / step,
                };
                if cand.validate().is_err() {
                    continue;
                }
                evaluations += 1;
                match objective(&cand) {
                    Some(v) if v < best_value => {
                        log::debug!("tune: {param:?} {current} -> {:?}, objective {v:.6e}", cand);
                        best = cand;
                        best_value = v;
                        improved = true;
                        break;
                    }
                    Some(_) => {}
                    None => log::warn!("tune: candidate with {param:?} changed from {current} failed; discarded"),
                }
            }
        }
        if !improved {
            step = step.sqrt();
        }
    }

    Some(TuneOutcome {
        config: best,
        objective: best_value,
        initial_objective: initial,
        evaluations,
    })
}

/// Tunes `cfg0` on `images` within `budget` pipeline-set evaluations.
pub fn tune_params_report(
    images: &[MultiChannelImage],
    cfg0: &SolverConfig,
    budget: usize,
) -> Result<TuneOutcome> {
    cfg0.validate()?;
    if budget == 0 {
        return Err(Error::config("budget", "must be at least 1"));
    }
    // the starting point must evaluate, so surface its error directly
    tuning_objective(images, cfg0)?;
    let outcome = coordinate_search(cfg0, budget, |cfg| match tuning_objective(images, cfg) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("tune: candidate failed: {e}");
            None
        }
    });
    Ok(outcome.expect("initial configuration evaluated successfully above"))
}

pub fn tune_params(
    images: &[MultiChannelImage],
    cfg0: &SolverConfig,
    budget: usize,
) -> Result<SolverConfig> {
    Ok(tune_params_report(images, cfg0, budget)?.config)
}
