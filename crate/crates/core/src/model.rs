//! The restoration objective and the fields it is assembled from.
//!
//! ```text
//! E(R, L) = 1/2 ||I - R ⊙ L||^2 + mu * H(A(I) - A(R)) + lambda/2 ||w ⊙ ∇L||^2
//! ```
//!
//! `H` is the Huber-smoothed l1 norm with core width `delta`; its gradient is
//! `1/delta`-Lipschitz, which is the `L_S` used by the reflectance system.
//! `w = exp(-|∇L|)`.

use crate::config::SolverConfig;
use crate::diffops::{
    diffusion_field, diffusion_gram, frozen_aggregate, frozen_aggregate_adjoint, grad_magnitude,
    neighbor_differences, sobel_grad, DiffusionGram, LinearOperator, Scaled, WINDOW,
};
use crate::error::{Error, Result};
use crate::image::{dims_str, MultiChannelImage, Plane, RetinexPair};

#[inline]
fn huber(v: f64, delta: f64) -> f64 {
    let a = v.abs();
    if a <= delta {
        v * v / (2.0 * delta)
    } else {
        a - 0.5 * delta
    }
}

pub fn huber_value(x: &Plane, delta: f64) -> f64 {
    x.data().iter().map(|&v| huber(v, delta)).sum()
}

pub fn huber_grad(x: &Plane, delta: f64) -> Plane {
    x.map(|v| if v.abs() <= delta { v / delta } else { v.signum() })
}

/// `w = exp(-|∇L|)`, in `(0, 1]`.
pub fn illum_weight(l: &Plane) -> Plane {
    grad_magnitude(&sobel_grad(l)).map(|m| (-m).exp())
}

/// `mu * L_S * sum_j N_j^T c_j(R_prev)^2 N_j`.
pub fn assemble_qa(r_prev: &Plane, cfg: &SolverConfig) -> Result<Scaled<DiffusionGram>> {
    let field = diffusion_field(r_prev, cfg.s)?;
    Ok(Scaled(cfg.mu * cfg.lipschitz(), diffusion_gram(&field.coeffs)))
}

/// Everything the reflectance half-step of one channel needs, computed once.
///
/// `c1` are the conductances of `R_{k-1}`, `c2` those of `R_{k-2}`, and
/// `slope` is `S_L(A(I) - A(R_{k-2}))`, the point at which the smoothed l1
/// term is linearised.
#[derive(Debug, Clone)]
pub struct ReflectanceTerms {
    pub c1: Vec<Plane>,
    pub c2: Vec<Plane>,
    pub slope: Plane,
    pub r_prev2: Plane,
}

impl ReflectanceTerms {
    pub fn new(r_prev: &Plane, r_prev2: &Plane, input: &Plane, cfg: &SolverConfig) -> Result<Self> {
        r_prev.check_dims(r_prev2)?;
        r_prev.check_dims(input)?;
        let f1 = diffusion_field(r_prev, cfg.s)?;
        let f2 = diffusion_field(r_prev2, cfg.s)?;
        let fi = diffusion_field(input, cfg.s)?;
        let slope = huber_grad(&fi.aggregate.sub(&f2.aggregate), cfg.huber_delta);
        Ok(Self {
            c1: f1.coeffs,
            c2: f2.coeffs,
            slope,
            r_prev2: r_prev2.clone(),
        })
    }

    pub fn qa(&self, cfg: &SolverConfig) -> Scaled<DiffusionGram> {
        Scaled(cfg.mu * cfg.lipschitz(), diffusion_gram(&self.c1))
    }

    /// `Q_b = mu L_S G(c1, c2) R_{k-2} + mu A_{c1}^T slope`.
    pub fn qb(&self, cfg: &SolverConfig) -> Plane {
        let (h, w) = self.slope.dims();
        if cfg.mu == 0.0 {
            return Plane::zeros(h, w);
        }
        let cross = DiffusionGram::cross(&self.c1, &self.c2).apply(&self.r_prev2);
        let mut out = cross.scale(cfg.mu * cfg.lipschitz());
        out.axpy(cfg.mu, &frozen_aggregate_adjoint(&self.c1, &self.slope));
        out
    }

    /// Value of the linearised texture term at `r`, up to a constant:
    /// `mu * ( -<slope, A_{c1} r> + L_S/2 sum_j ||c1_j N_j r - c2_j N_j R_{k-2}||^2 )`.
    fn texture_model(&self, r: &Plane, cfg: &SolverConfig) -> f64 {
        if cfg.mu == 0.0 {
            return 0.0;
        }
        let inv = 1.0 / WINDOW as f64;
        let dr = neighbor_differences(r);
        let d2 = neighbor_differences(&self.r_prev2);
        let mut quad = 0.0;
        for k in 0..WINDOW {
            for i in 0..r.len() {
                let v = inv
                    * (self.c1[k].data()[i] * dr[k].data()[i]
                        - self.c2[k].data()[i] * d2[k].data()[i]);
                quad += v * v;
            }
        }
        let lin = self.slope.dot(&frozen_aggregate(&self.c1, r));
        cfg.mu * (0.5 * cfg.lipschitz() * quad - lin)
    }
}

/// Stand-alone `Q_b` for one channel.
pub fn assemble_qb(
    r_prev: &Plane,
    r_prev2: &Plane,
    input: &Plane,
    cfg: &SolverConfig,
) -> Result<Plane> {
    Ok(ReflectanceTerms::new(r_prev, r_prev2, input, cfg)?.qb(cfg))
}

/// Quadratic illumination sub-objective with channel-averaged fidelity:
///
/// ```text
/// 1/(2C) sum_c ||I_c - R_c ⊙ L||^2 + gamma/2 ||L - L_prev||^2 + lambda/2 ||w ⊙ ∇L||^2
/// ```
///
/// with `w` built from `L_prev`. The illumination solve returns its exact
/// minimiser.
pub fn illumination_model_value(
    l: &Plane,
    reflectance: &MultiChannelImage,
    l_prev: &Plane,
    input: &MultiChannelImage,
    cfg: &SolverConfig,
) -> f64 {
    let nc = input.channels() as f64;
    let fid: f64 = input
        .planes()
        .iter()
        .zip(reflectance.planes())
        .map(|(i, r)| i.sub(&r.mul(l)).norm_sq())
        .sum();
    let prox = l.sub(l_prev).norm_sq();
    let w2 = illum_weight(l_prev).map(|v| v * v);
    let g = sobel_grad(l);
    let smooth = g.gx.mul(&g.gx).add(&g.gy.mul(&g.gy)).dot(&w2);
    0.5 * fid / nc + 0.5 * cfg.gamma * prox + 0.5 * cfg.lambda * smooth
}

/// Quadratic reflectance sub-objective of one channel: fidelity, proximal
/// term, and the smoothed l1 texture term replaced by its frozen-coefficient
/// quadratic model. The reflectance solve returns its exact minimiser.
pub fn reflectance_model_value(
    r: &Plane,
    l: &Plane,
    r_prev: &Plane,
    input: &Plane,
    terms: &ReflectanceTerms,
    cfg: &SolverConfig,
) -> f64 {
    0.5 * input.sub(&r.mul(l)).norm_sq()
        + 0.5 * cfg.beta * r.sub(r_prev).norm_sq()
        + terms.texture_model(r, cfg)
}

/// Explicit part of the restoration objective, summed over channels.
pub fn objective_energy(
    pair: &RetinexPair,
    input: &MultiChannelImage,
    cfg: &SolverConfig,
) -> Result<f64> {
    let r = &pair.reflectance;
    let l = &pair.illumination;
    if r.dims() != input.dims() || (l.height(), l.width()) != (input.height(), input.width()) {
        return Err(Error::shape(dims_str(input.dims()), dims_str(r.dims())));
    }
    let mut fid = 0.0;
    let mut tex = 0.0;
    for (ic, rc) in input.planes().iter().zip(r.planes()) {
        fid += ic.sub(&rc.mul(l)).norm_sq();
        if cfg.mu != 0.0 {
            let ai = diffusion_field(ic, cfg.s)?.aggregate;
            let ar = diffusion_field(rc, cfg.s)?.aggregate;
            tex += huber_value(&ai.sub(&ar), cfg.huber_delta);
        }
    }
    let w = illum_weight(l);
    let g = sobel_grad(l);
    let smooth = g.gx.mul(&w).norm_sq() + g.gy.mul(&w).norm_sq();
    Ok(0.5 * fid + cfg.mu * tex + 0.5 * cfg.lambda * smooth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pseudo(h: usize, w: usize, seed: u64) -> Plane {
        let mut s = seed;
        Plane::from_fn(h, w, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn huber_examples() {
        let d = 0.05;
        assert_eq!(huber_value(&Plane::zeros(3, 3), d), 0.0);
        let at = |v: f64| huber_value(&Plane::filled(1, 1, v), d);
        assert!((at(d) - d / 2.0).abs() < 1e-16);
        assert!((at(3.0 * d) - 2.5 * d).abs() < 1e-16);
        assert!((at(-3.0 * d) - 2.5 * d).abs() < 1e-16);

        let g = huber_grad(&Plane::from_vec(1, 4, vec![0.0, d, -d, 4.0 * d]).unwrap(), d);
        assert_eq!(g.data(), &[0.0, 1.0, -1.0, 1.0]);
    }

    #[test]
    fn huber_grad_is_bounded_and_lipschitz() {
        let d = 0.1;
        let u = pseudo(5, 5, 3).map(|v| 0.6 * v - 0.3);
        let v = pseudo(5, 5, 4).map(|v| 0.6 * v - 0.3);
        let gu = huber_grad(&u, d);
        let gv = huber_grad(&v, d);
        assert!(gu.max_abs() <= 1.0);
        assert!(gu.sub(&gv).norm() <= u.sub(&v).norm() / d + 1e-15);
    }

    #[test]
    fn illum_weight_examples() {
        let w = illum_weight(&Plane::filled(4, 4, 0.3));
        assert!(w.data().iter().all(|&v| v == 1.0));
        // ramp of slope ln 2 has |∇L| = ln 2 away from the border
        let ramp = Plane::from_fn(5, 6, |_, c| c as f64 * 2f64.ln());
        assert!((illum_weight(&ramp).get(2, 2) - 0.5).abs() < 1e-15);
        let unit = Plane::from_fn(5, 6, |_, c| c as f64);
        assert!((illum_weight(&unit).get(2, 3) - (-1f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn qa_zero_when_mu_zero() {
        let cfg = SolverConfig {
            mu: 0.0,
            ..SolverConfig::default()
        };
        let qa = assemble_qa(&pseudo(5, 5, 1), &cfg).unwrap();
        assert_eq!(qa.apply(&pseudo(5, 5, 2)).max_abs(), 0.0);
    }

    #[test]
    fn qa_annihilates_constants() {
        let cfg = SolverConfig::default();
        let qa = assemble_qa(&Plane::filled(5, 5, 0.4), &cfg).unwrap();
        assert!(qa.apply(&Plane::filled(5, 5, 0.9)).max_abs() < 1e-14);
    }

    #[test]
    fn qb_zero_cases() {
        let cfg = SolverConfig::default();
        let c = Plane::filled(6, 6, 0.35);
        assert!(assemble_qb(&c, &c, &c, &cfg).unwrap().max_abs() < 1e-14);
        let zero_mu = SolverConfig {
            mu: 0.0,
            ..cfg
        };
        let qb = assemble_qb(&pseudo(6, 6, 1), &pseudo(6, 6, 2), &pseudo(6, 6, 3), &zero_mu).unwrap();
        assert_eq!(qb.max_abs(), 0.0);
    }

    #[test]
    fn energy_vanishes_on_exact_constant_decomposition() {
        let cfg = SolverConfig::default();
        let img = MultiChannelImage::from_planes(vec![pseudo(6, 6, 1), pseudo(6, 6, 2), pseudo(6, 6, 3)]).unwrap();
        let pair = RetinexPair {
            reflectance: img.clone(),
            illumination: Plane::filled(6, 6, 1.0),
        };
        assert!(objective_energy(&pair, &img, &cfg).unwrap().abs() < 1e-24);
    }

    #[test]
    fn energy_isolates_fidelity() {
        let cfg = SolverConfig {
            mu: 0.0,
            lambda: 0.0,
            ..SolverConfig::default()
        };
        let img = MultiChannelImage::from_planes(vec![pseudo(5, 4, 1), pseudo(5, 4, 2), pseudo(5, 4, 3)]).unwrap();
        let r = MultiChannelImage::from_planes(vec![pseudo(5, 4, 4), pseudo(5, 4, 5), pseudo(5, 4, 6)]).unwrap();
        let l = pseudo(5, 4, 7);
        let pair = RetinexPair {
            reflectance: r.clone(),
            illumination: l.clone(),
        };
        let expected: f64 = (0..3)
            .map(|c| 0.5 * img.plane(c).sub(&r.plane(c).mul(&l)).norm_sq())
            .sum();
        assert_eq!(objective_energy(&pair, &img, &cfg).unwrap(), expected);
    }

    #[test]
    fn energy_rejects_mismatch() {
        let cfg = SolverConfig::default();
        let img = MultiChannelImage::zeros(4, 4, 3);
        let pair = RetinexPair {
            reflectance: MultiChannelImage::zeros(4, 5, 3),
            illumination: Plane::filled(4, 5, 1.0),
        };
        assert!(objective_energy(&pair, &img, &cfg).is_err());
    }
}
