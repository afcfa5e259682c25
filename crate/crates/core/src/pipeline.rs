//! The K-stage unfolding engine.
//!
//! Each stage alternates an illumination half-step and a reflectance
//! half-step:
//!
//! ```text
//! L_hat_k = argmin of the illumination quadratic at (R_{k-1}, L_{k-1})
//! L_k     = refine(L_hat_k, L_{k-1})
//! R_hat_k = argmin of the reflectance quadratic at (L_k, R_{k-1}, R_{k-2})
//! R_k     = rk2(R_hat_k, L_k)
//! ```
//!
//! `R_{-1}` is taken to be `R_0`.

use rayon::prelude::*;

use crate::cg::{linear_solve_cg, CgReport};
use crate::config::{OutputMode, SolverConfig};
use crate::diffops::sobel_grad;
use crate::error::{dims_error, Error, Result};
use crate::image::{broadcast_mul, clamp_unit, decompose_init, MultiChannelImage, Plane, RetinexPair};
use crate::model::{illumination_model_value, objective_energy, reflectance_model_value};
use crate::stage::{refine_illumination, rk2_compose, solve_illumination, GateParams, ReflectanceSystem};

/// Values of a half-step's quadratic sub-objective before (at the previous
/// iterate) and after (at the closed-form solution).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfStep {
    pub before: f64,
    pub after: f64,
}

impl HalfStep {
    /// `after <= before`, up to rounding in the evaluation of the two
    /// values.
    pub fn descends(&self) -> bool {
        self.after <= self.before + 1e-12 * (1.0 + self.before.abs())
    }
}

#[derive(Debug, Clone)]
pub struct StageTrace {
    /// 1-based.
    pub stage_index: usize,
    pub l_hat: Plane,
    pub l: Plane,
    pub r_hat: MultiChannelImage,
    pub r: MultiChannelImage,
    pub energy: f64,
    /// Absent on the first stage.
    pub isic: Option<f64>,
    /// Illumination solve first, then one report per reflectance channel.
    pub cg_reports: Vec<CgReport>,
    pub gate: f64,
    pub illumination_step: HalfStep,
    /// Summed over channels.
    pub reflectance_step: HalfStep,
}

impl StageTrace {
    pub fn descends(&self) -> bool {
        self.illumination_step.descends() && self.reflectance_step.descends()
    }

    pub fn illumination_report(&self) -> &CgReport {
        &self.cg_reports[0]
    }

    pub fn reflectance_reports(&self) -> &[CgReport] {
        &self.cg_reports[1..]
    }
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub output: MultiChannelImage,
    pub traces: Vec<StageTrace>,
    pub final_isic: f64,
    pub final_pair: RetinexPair,
}

impl PipelineResult {
    pub fn energy_trace(&self) -> Vec<f64> {
        self.traces.iter().map(|t| t.energy).collect()
    }

    pub fn isic_trace(&self) -> Vec<f64> {
        self.traces.iter().filter_map(|t| t.isic).collect()
    }
}

/// Inter-stage consistency of the relit image:
///
/// ```text
/// ||R_k ⊙ L_{k-1} - R_k ⊙ L_k||_2 + ||∇(R_{k-1} ⊙ L_k) - ∇(R_k ⊙ L_k)||_1
/// ```
///
/// The gradient term sums both Sobel components over all channels.
pub fn isic_metric(
    r_k: &MultiChannelImage,
    r_prev: &MultiChannelImage,
    l_k: &Plane,
    l_prev: &Plane,
) -> Result<f64> {
    if r_k.dims() != r_prev.dims() {
        return Err(dims_error(r_k.dims(), r_prev.dims()));
    }
    for l in [l_k, l_prev] {
        if l.dims() != (r_k.height(), r_k.width()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", r_k.height(), r_k.width()),
                found: format!("{}x{}", l.height(), l.width()),
            });
        }
    }
    let dl = l_prev.sub(l_k);
    let mut first = 0.0;
    let mut second = 0.0;
    for (rk, rp) in r_k.planes().iter().zip(r_prev.planes()) {
        first += rk.mul(&dl).norm_sq();
        // ∇ is linear, so ∇(a) - ∇(b) = ∇(a - b)
        let g = sobel_grad(&rp.sub(rk).mul(l_k));
        second += g.gx.abs_sum() + g.gy.abs_sum();
    }
    Ok(first.sqrt() + second)
}

fn check_converged(rep: &CgReport, stage: usize, solve: &'static str, cfg: &SolverConfig) -> Result<()> {
    if rep.converged {
        return Ok(());
    }
    if cfg.best_effort {
        log::warn!(
            "stage {stage}: {solve} solve stopped at relative residual {:e} after {} iterations",
            rep.relative_residual,
            rep.iterations
        );
        return Ok(());
    }
    Err(Error::NotConverged {
        stage,
        solve,
        residual: rep.relative_residual,
        iterations: rep.iterations,
    })
}

/// Weighted mean of the ISIC values in the trailing window.
pub fn windowed_isic(traces: &[StageTrace], cfg: &SolverConfig) -> f64 {
    let k = traces.len();
    let start = k.saturating_sub(cfg.isic_last_n);
    let mut num = 0.0;
    let mut den = 0.0;
    for t in &traces[start..] {
        if let Some(v) = t.isic {
            let w = if t.stage_index == k { cfg.isic_final_weight } else { 1.0 };
            num += w * v;
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

pub fn run_pipeline(input: &MultiChannelImage, cfg: &SolverConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    if !input.is_finite() {
        return Err(Error::Numerical {
            context: "input image contains non-finite samples".into(),
            iteration: 0,
        });
    }
    let init = decompose_init(input, cfg.epsilon)?;
    let r_cap = 1.0 / cfg.epsilon;
    let mut r_prev2 = init.reflectance.clone();
    let mut r_prev = init.reflectance;
    let mut l_prev = init.illumination;
    let mut traces = Vec::with_capacity(cfg.stages);

    for k in 1..=cfg.stages {
        let (l_hat, l_rep) = solve_illumination(&r_prev, &l_prev, input, cfg)?;
        check_converged(&l_rep, k, "illumination", cfg)?;
        let illumination_step = HalfStep {
            before: illumination_model_value(&l_prev, &r_prev, &l_prev, input, cfg),
            after: illumination_model_value(&l_hat, &r_prev, &l_prev, input, cfg),
        };
        let l = refine_illumination(&l_hat, &l_prev, cfg);

        let solved = input
            .planes()
            .par_iter()
            .enumerate()
            .map(|(c, ic)| {
                let rp = r_prev.plane(c);
                let sys = ReflectanceSystem::new(&l, rp, r_prev2.plane(c), ic, cfg)?;
                let (r_hat, rep) =
                    linear_solve_cg(&sys.operator, &sys.rhs, rp, cfg.cg_tol, cfg.cg_max_iter)?;
                let before = reflectance_model_value(rp, &l, rp, ic, &sys.terms, cfg);
                let after = reflectance_model_value(&r_hat, &l, rp, ic, &sys.terms, cfg);
                Ok((r_hat, rep, before, after))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut cg_reports = vec![l_rep];
        let mut r_hat_planes = Vec::with_capacity(solved.len());
        let mut reflectance_step = HalfStep {
            before: 0.0,
            after: 0.0,
        };
        for (r_hat, rep, before, after) in solved {
            check_converged(&rep, k, "reflectance", cfg)?;
            cg_reports.push(rep);
            r_hat_planes.push(r_hat);
            reflectance_step.before += before;
            reflectance_step.after += after;
        }
        let r_hat = MultiChannelImage::from_planes(r_hat_planes)?;

        let rk2 = rk2_compose(&r_hat, &l, GateParams::from(cfg), cfg)?;
        let r = rk2.reflectance.map(|v| v.clamp(0.0, r_cap));
        if !r.is_finite() || !l.is_finite() {
            return Err(Error::Numerical {
                context: format!("stage {k} produced non-finite values"),
                iteration: 0,
            });
        }

        let pair = RetinexPair {
            reflectance: r.clone(),
            illumination: l.clone(),
        };
        let energy = objective_energy(&pair, input, cfg)?;
        let isic = if k > 1 {
            Some(isic_metric(&r, &r_prev, &l, &l_prev)?)
        } else {
            None
        };
        log::debug!(
            "stage {k}: energy {energy:.6e}, cg iterations L={} R={:?}, gate {:.4}",
            cg_reports[0].iterations,
            cg_reports[1..].iter().map(|r| r.iterations).collect::<Vec<_>>(),
            rk2.gate
        );

        traces.push(StageTrace {
            stage_index: k,
            l_hat,
            l: l.clone(),
            r_hat,
            r: r.clone(),
            energy,
            isic,
            cg_reports,
            gate: rk2.gate,
            illumination_step,
            reflectance_step,
        });

        r_prev2 = std::mem::replace(&mut r_prev, r);
        l_prev = l;
    }

    let final_pair = RetinexPair {
        reflectance: r_prev,
        illumination: l_prev,
    };
    let output = match cfg.output_mode {
        OutputMode::Reflectance => clamp_unit(&final_pair.reflectance),
        OutputMode::Relit => {
            let exponent = 1.0 / cfg.relit_gamma;
            let adj = final_pair.illumination.map(|v| v.powf(exponent));
            clamp_unit(&broadcast_mul(&final_pair.reflectance, &adj))
        }
    };
    let final_isic = windowed_isic(&traces, cfg);
    Ok(PipelineResult {
        output,
        traces,
        final_isic,
        final_pair,
    })
}
