//! One unfolded stage.
//!
//! Illumination: exact minimisation of the quadratic illumination
//! sub-objective (a CG solve), then a classical smoother in place of a
//! learned refinement. Reflectance: exact minimisation of the
//! frozen-coefficient quadratic model, then a two-evaluation gated
//! Runge–Kutta composition of a wavelet-shrinkage surrogate.

use rayon::prelude::*;

use crate::cg::{linear_solve_cg, CgReport};
use crate::config::{IlluminationProx, SolverConfig};
use crate::diffops::{neighbor_differences, weighted_laplacian, Scaled, ShiftedOperator, WINDOW};
use crate::error::Result;
use crate::filters::{gaussian_blur, guided_filter};
use crate::image::{MultiChannelImage, Plane};
use crate::model::{illum_weight, ReflectanceTerms};
use crate::wavelet::{band_shrink, dwt2, idwt2};

/// Closed-form illumination estimate.
///
/// Solves
///
/// ```text
/// (mean_c R_c^2 + gamma + lambda D^T w^2 D) L = mean_c(R_c ⊙ I_c) + gamma L_prev
/// ```
///
/// with `w = exp(-|∇L_prev|)`, warm-started at `L_prev`.
pub fn solve_illumination(
    r_prev: &MultiChannelImage,
    l_prev: &Plane,
    input: &MultiChannelImage,
    cfg: &SolverConfig,
) -> Result<(Plane, CgReport)> {
    let nc = input.channels() as f64;
    let (h, w) = l_prev.dims();
    let mut r2 = Plane::zeros(h, w);
    let mut ri = Plane::zeros(h, w);
    for (r, i) in r_prev.planes().iter().zip(input.planes()) {
        r.check_dims(l_prev)?;
        r2.axpy(1.0 / nc, &r.mul(r));
        ri.axpy(1.0 / nc, &r.mul(i));
    }
    let weight = illum_weight(l_prev);
    let smooth = weighted_laplacian(&weight.mul(&weight))?;
    let op = ShiftedOperator {
        shift: r2.map(|v| v + cfg.gamma),
        parts: vec![Box::new(Scaled(cfg.lambda, smooth))],
    };
    let mut rhs = ri;
    rhs.axpy(cfg.gamma, l_prev);
    linear_solve_cg(&op, &rhs, l_prev, cfg.cg_tol, cfg.cg_max_iter)
}

/// Smooths the illumination estimate and puts it back into `[eps, 1]`.
pub fn refine_illumination(l_hat: &Plane, l_prev: &Plane, cfg: &SolverConfig) -> Plane {
    let smoothed = match cfg.prox_illum {
        IlluminationProx::Identity => l_hat.clone(),
        IlluminationProx::Gaussian { sigma } => gaussian_blur(l_hat, sigma),
        IlluminationProx::Guided {
            radius,
            regularization,
        } => guided_filter(l_hat, l_prev, radius, regularization),
    };
    smoothed.clamp(cfg.epsilon, 1.0)
}

/// The reflectance system of one channel.
pub struct ReflectanceSystem {
    pub terms: ReflectanceTerms,
    pub operator: ShiftedOperator,
    pub rhs: Plane,
}

impl ReflectanceSystem {
    /// `(L^2 + beta + Q_a) R = L ⊙ I + beta R_prev + Q_b`
    pub fn new(
        l: &Plane,
        r_prev: &Plane,
        r_prev2: &Plane,
        input: &Plane,
        cfg: &SolverConfig,
    ) -> Result<Self> {
        l.check_dims(r_prev)?;
        let terms = ReflectanceTerms::new(r_prev, r_prev2, input, cfg)?;
        let operator = ShiftedOperator {
            shift: l.map(|v| v * v + cfg.beta),
            parts: vec![Box::new(terms.qa(cfg))],
        };
        let mut rhs = l.mul(input);
        rhs.axpy(cfg.beta, r_prev);
        rhs.axpy(1.0, &terms.qb(cfg));
        Ok(Self {
            terms,
            operator,
            rhs,
        })
    }
}

/// Closed-form reflectance estimate of one channel, warm-started at
/// `R_prev`.
pub fn solve_reflectance(
    l: &Plane,
    r_prev: &Plane,
    r_prev2: &Plane,
    input: &Plane,
    cfg: &SolverConfig,
) -> Result<(Plane, CgReport)> {
    let sys = ReflectanceSystem::new(l, r_prev, r_prev2, input, cfg)?;
    linear_solve_cg(&sys.operator, &sys.rhs, r_prev, cfg.cg_tol, cfg.cg_max_iter)
}

/// 3x3 local mean and RMS deviation from the centre, both built from
/// neighbour differences so that a constant plane gives exactly
/// `(value, 0)`.
fn local_stats(x: &Plane) -> (Plane, Plane) {
    let diffs = neighbor_differences(x);
    let inv = 1.0 / WINDOW as f64;
    let mut mean_off = Plane::zeros(x.height(), x.width());
    let mut sq = Plane::zeros(x.height(), x.width());
    for d in &diffs {
        mean_off.axpy(inv, d);
        sq.axpy(inv, &d.mul(d));
    }
    (x.add(&mean_off), sq.map(f64::sqrt))
}

/// Wavelet-shrinkage refinement with illumination-conditioned modulation,
/// returned as an update direction.
///
/// ```text
/// R'    = IDWT(shrink(DWT(R_hat), tau))
/// sigma = m_L / (m_L + d_L)            (local 3x3 mean / deviation of L)
/// shift = (1 - sigma) ⊙ mean3(R')
/// F     = (R' + sigma ⊙ R' + shift) / 2 - R_hat
/// ```
///
/// Where illumination varies locally the modulation pulls the reflectance
/// toward its local mean; on a constant `L` it is the identity.
pub fn fvss_surrogate(r_hat: &Plane, l: &Plane, cfg: &SolverConfig) -> Result<Plane> {
    r_hat.check_dims(l)?;
    let shrunk = if cfg.shrink_tau == 0.0 {
        r_hat.clone()
    } else {
        idwt2(&band_shrink(&dwt2(r_hat), cfg.shrink_tau)?)?
    };
    let (m_l, d_l) = local_stats(l);
    let sigma = m_l.zip_map(&d_l, |m, d| if m + d > 0.0 { m / (m + d) } else { 1.0 });
    let (m_r, _) = local_stats(&shrunk);
    let shift = sigma.zip_map(&m_r, |s, m| (1.0 - s) * m);
    let modulated = sigma.mul(&shrunk).add(&shift);
    Ok(shrunk.add(&modulated).scale(0.5).sub(r_hat))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateParams {
    pub sigma_g: f64,
    pub mu_g: f64,
}

impl From<&SolverConfig> for GateParams {
    fn from(cfg: &SolverConfig) -> Self {
        Self {
            sigma_g: cfg.gw_sigma,
            mu_g: cfg.gw_mu,
        }
    }
}

impl GateParams {
    /// Two-class softmax of the gate logit, kept strictly inside `(0, 1)`.
    pub fn gate(&self, disagreement: f64) -> f64 {
        let z = self.sigma_g * disagreement + self.mu_g;
        (1.0 / (1.0 + (-z).exp())).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }
}

#[derive(Debug, Clone)]
pub struct Rk2Output {
    pub reflectance: MultiChannelImage,
    pub gate: f64,
}

/// `R = R_hat + g F(R_hat) + (1 - g) F(R_hat + F(R_hat))`, with `g` the
/// logistic of the mean disagreement between the two increments.
pub fn rk2_compose(
    r_hat: &MultiChannelImage,
    l: &Plane,
    gate: GateParams,
    cfg: &SolverConfig,
) -> Result<Rk2Output> {
    let increments = r_hat
        .planes()
        .par_iter()
        .map(|rc| {
            let first = fvss_surrogate(rc, l, cfg)?;
            let second = fvss_surrogate(&rc.add(&first), l, cfg)?;
            Ok((first, second))
        })
        .collect::<Result<Vec<_>>>()?;

    let count = (r_hat.channels() * l.len()) as f64;
    let disagreement = increments
        .iter()
        .map(|(a, b)| a.sub(b).abs_sum())
        .sum::<f64>()
        / count;
    let g = gate.gate(disagreement);

    let planes = r_hat
        .planes()
        .iter()
        .zip(&increments)
        .map(|(rc, (first, second))| {
            let mut out = rc.clone();
            out.axpy(g, first);
            out.axpy(1.0 - g, second);
            out
        })
        .collect();
    Ok(Rk2Output {
        reflectance: MultiChannelImage::from_planes(planes)?,
        gate: g,
    })
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

    fn rgb(h: usize, w: usize, seed: u64) -> MultiChannelImage {
        MultiChannelImage::from_planes((0..3).map(|c| pseudo(h, w, seed + c)).collect()).unwrap()
    }

    #[test]
    fn illumination_scalar_case() {
        let cfg = SolverConfig {
            gamma: 1.0,
            ..SolverConfig::default()
        };
        let r = MultiChannelImage::from_planes(vec![Plane::filled(1, 1, 1.0); 3]).unwrap();
        let i = MultiChannelImage::from_planes(vec![Plane::filled(1, 1, 0.5); 3]).unwrap();
        let (l, rep) = solve_illumination(&r, &Plane::filled(1, 1, 0.5), &i, &cfg).unwrap();
        assert!((l.get(0, 0) - 0.5).abs() < 1e-12);
        assert!(rep.converged);

        // a case where the answer differs from the warm start
        let i = MultiChannelImage::from_planes(vec![Plane::filled(1, 1, 0.9); 3]).unwrap();
        let (l, _) = solve_illumination(&r, &Plane::filled(1, 1, 0.5), &i, &cfg).unwrap();
        assert!((l.get(0, 0) - 0.7).abs() < 1e-12);
    }

    #[test]
    fn illumination_degenerate_fidelity() {
        let cfg = SolverConfig {
            lambda: 0.0,
            ..SolverConfig::default()
        };
        let r = MultiChannelImage::zeros(5, 5, 3);
        let l_prev = pseudo(5, 5, 8).map(|v| v.max(0.01));
        let (l, _) = solve_illumination(&r, &l_prev, &rgb(5, 5, 1), &cfg).unwrap();
        assert!(l.sub(&l_prev).max_abs() < 1e-12);
    }

    #[test]
    fn reflectance_scalar_cases() {
        let cfg = SolverConfig {
            mu: 0.0,
            beta: 1.0,
            ..SolverConfig::default()
        };
        let one = |v| Plane::filled(1, 1, v);
        let (r, _) = solve_reflectance(&one(1.0), &one(0.4), &one(0.4), &one(0.6), &cfg).unwrap();
        assert!((r.get(0, 0) - 0.5).abs() < 1e-12);

        let r_prev = pseudo(4, 4, 3);
        let (r, _) =
            solve_reflectance(&Plane::zeros(4, 4), &r_prev, &r_prev, &pseudo(4, 4, 4), &cfg).unwrap();
        assert!(r.sub(&r_prev).max_abs() < 1e-12);
    }

    #[test]
    fn refine_modes_preserve_constants() {
        let c = Plane::filled(6, 6, 0.37);
        let prev = pseudo(6, 6, 2).map(|v| v.max(0.01));
        for prox in [
            IlluminationProx::Identity,
            IlluminationProx::Gaussian { sigma: 1.2 },
            IlluminationProx::Guided {
                radius: 2,
                regularization: 1e-3,
            },
        ] {
            let cfg = SolverConfig {
                prox_illum: prox,
                ..SolverConfig::default()
            };
            assert!(refine_illumination(&c, &prev, &cfg).sub(&c).max_abs() < 1e-14);
        }
        let cfg = SolverConfig {
            prox_illum: IlluminationProx::Identity,
            ..SolverConfig::default()
        };
        let wild = Plane::from_vec(1, 3, vec![-0.5, 0.5, 1.5]).unwrap();
        assert_eq!(refine_illumination(&wild, &wild, &cfg).data(), &[1e-4, 0.5, 1.0]);
    }

    #[test]
    fn surrogate_identity_cases() {
        let cfg = SolverConfig {
            shrink_tau: 0.0,
            ..SolverConfig::default()
        };
        let r = pseudo(6, 7, 1);
        let f = fvss_surrogate(&r, &Plane::filled(6, 7, 0.4), &cfg).unwrap();
        assert_eq!(f.max_abs(), 0.0);

        // constant reflectance has no detail to shrink
        let cfg = SolverConfig {
            shrink_tau: 0.3,
            ..SolverConfig::default()
        };
        let f = fvss_surrogate(&Plane::filled(6, 6, 0.5), &Plane::filled(6, 6, 0.2), &cfg).unwrap();
        assert!(f.max_abs() < 1e-15);
    }

    #[test]
    fn gate_limits() {
        let g = GateParams {
            sigma_g: 0.0,
            mu_g: 0.0,
        };
        assert_eq!(g.gate(123.0), 0.5);
        let hi = GateParams {
            sigma_g: 0.0,
            mu_g: 1e3,
        };
        assert!(hi.gate(0.0) < 1.0 && hi.gate(0.0) > 0.999);
        let lo = GateParams {
            sigma_g: 0.0,
            mu_g: -1e3,
        };
        assert!(lo.gate(0.0) > 0.0);
    }

    #[test]
    fn rk2_identity_surrogate() {
        let cfg = SolverConfig {
            shrink_tau: 0.0,
            ..SolverConfig::default()
        };
        let r = rgb(5, 5, 11);
        let out = rk2_compose(&r, &Plane::filled(5, 5, 0.3), GateParams::from(&cfg), &cfg).unwrap();
        assert_eq!(out.reflectance, r);
    }

    #[test]
    fn rk2_heun_weighting() {
        let cfg = SolverConfig {
            shrink_tau: 0.1,
            ..SolverConfig::default()
        };
        let r = rgb(6, 6, 21);
        let l = pseudo(6, 6, 30).map(|v| 0.1 + 0.8 * v);
        let out = rk2_compose(&r, &l, GateParams { sigma_g: 0.0, mu_g: 0.0 }, &cfg).unwrap();
        assert_eq!(out.gate, 0.5);
        for c in 0..3 {
            let f1 = fvss_surrogate(r.plane(c), &l, &cfg).unwrap();
            let f2 = fvss_surrogate(&r.plane(c).add(&f1), &l, &cfg).unwrap();
            let mut expected = r.plane(c).clone();
            expected.axpy(0.5, &f1);
            expected.axpy(0.5, &f2);
            assert_eq!(out.reflectance.plane(c), &expected);
        }
    }
}
