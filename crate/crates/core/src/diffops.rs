//! Discrete differential machinery on planes.
//!
//! Gradients are 3x3 Sobel responses scaled by 1/8, so a unit ramp has
//! gradient 1. The diffusion aggregate follows Perona–Malik over the full
//! 3x3 window (self offset included, window count 9):
//!
//! ```text
//! A(X)_i = 1/9 * sum_j c(|X_j - X_i|) * (X_j - X_i),   c(m) = exp(-(m/s)^2)
//! ```
//!
//! The quadratic blocks of the solver are exposed as [`LinearOperator`]s in
//! Gram form (`D^T W D`), which keeps every system symmetric positive
//! semi-definite.

use crate::error::{Error, Result};
use crate::image::{reflect, Plane};

/// Number of samples in the 3x3 diffusion window.
pub const WINDOW: usize = 9;

/// The nine `(dr, dc)` offsets of the 3x3 window, row-major. Index 4 is the
/// centre.
pub const OFFSETS: [(isize, isize); WINDOW] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 0),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

const SOBEL_X: [f64; WINDOW] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
const SOBEL_Y: [f64; WINDOW] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];
const SOBEL_NORM: f64 = 1.0 / 8.0;

/// Precomputed mirrored row/column indices for offsets -1, 0, +1.
struct Neighbours {
    rows: [Vec<usize>; 3],
    cols: [Vec<usize>; 3],
}

impl Neighbours {
    fn new(height: usize, width: usize) -> Self {
        let table = |n: usize| {
            [-1isize, 0, 1].map(|d| (0..n).map(|i| reflect(i as isize + d, n)).collect())
        };
        Self {
            rows: table(height),
            cols: table(width),
        }
    }

    #[inline]
    fn index(&self, width: usize, r: usize, c: usize, k: usize) -> usize {
        let (dr, dc) = OFFSETS[k];
        self.rows[(dr + 1) as usize][r] * width + self.cols[(dc + 1) as usize][c]
    }
}

/// Correlates `x` with an antisymmetric 3x3 kernel (`k[8 - i] = -k[i]`)
/// under mirror boundary. Opposite taps are differenced first so constant
/// planes give exact zeros.
fn correlate3(x: &Plane, kernel: &[f64; WINDOW], scale: f64) -> Plane {
    let (h, w) = x.dims();
    let nb = Neighbours::new(h, w);
    let src = x.data();
    let mut out = Plane::zeros(h, w);
    let dst = out.data_mut();
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (k, &kv) in kernel.iter().enumerate().take(WINDOW / 2) {
                if kv != 0.0 {
                    acc += kv * (src[nb.index(w, r, c, k)] - src[nb.index(w, r, c, WINDOW - 1 - k)]);
                }
            }
            dst[r * w + c] = scale * acc;
        }
    }
    out
}

/// Exact adjoint of [`correlate3`] (mirror reads become scatter-adds).
fn correlate3_adjoint(y: &Plane, kernel: &[f64; WINDOW], scale: f64) -> Plane {
    let (h, w) = y.dims();
    let nb = Neighbours::new(h, w);
    let src = y.data();
    let mut out = Plane::zeros(h, w);
    let dst = out.data_mut();
    for r in 0..h {
        for c in 0..w {
            let v = scale * src[r * w + c];
            for (k, &kv) in kernel.iter().enumerate() {
                if kv != 0.0 {
                    dst[nb.index(w, r, c, k)] += kv * v;
                }
            }
        }
    }
    out
}

/// Horizontal and vertical Sobel responses.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub gx: Plane,
    pub gy: Plane,
}

pub fn sobel_grad(x: &Plane) -> GradientPair {
    GradientPair {
        gx: correlate3(x, &SOBEL_X, SOBEL_NORM),
        gy: correlate3(x, &SOBEL_Y, SOBEL_NORM),
    }
}

/// `D^T g` for the stacked Sobel map `D = (Dx, Dy)`.
pub fn sobel_grad_adjoint(g: &GradientPair) -> Plane {
    let mut out = correlate3_adjoint(&g.gx, &SOBEL_X, SOBEL_NORM);
    out.axpy(1.0, &correlate3_adjoint(&g.gy, &SOBEL_Y, SOBEL_NORM));
    out
}

pub fn grad_magnitude(g: &GradientPair) -> Plane {
    g.gx.zip_map(&g.gy, f64::hypot)
}

pub(crate) fn check_sensitivity(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::config("s", format!("diffusion sensitivity must be positive, got {s}")))
    }
}

#[inline]
fn pm(m: f64, s: f64) -> f64 {
    let t = m / s;
    (-t * t).exp()
}

/// Perona–Malik conductance `exp(-(m/s)^2)`.
pub fn pm_coeff(mag: &Plane, s: f64) -> Result<Plane> {
    check_sensitivity(s)?;
    Ok(mag.map(|m| pm(m, s)))
}

/// Per-offset neighbour differences, their conductances and the aggregate
/// `A(X)` of one plane.
#[derive(Debug, Clone)]
pub struct DiffusionField {
    pub aggregate: Plane,
    pub coeffs: Vec<Plane>,
    pub neighbor_diffs: Vec<Plane>,
}

pub fn diffusion_field(x: &Plane, s: f64) -> Result<DiffusionField> {
    check_sensitivity(s)?;
    let neighbor_diffs = neighbor_differences(x);
    let coeffs: Vec<Plane> = neighbor_diffs
        .iter()
        .map(|d| d.map(|v| pm(v.abs(), s)))
        .collect();
    let aggregate = weighted_aggregate(&coeffs, &neighbor_diffs);
    Ok(DiffusionField {
        aggregate,
        coeffs,
        neighbor_diffs,
    })
}

/// `X_j - X_i` for each of the nine offsets `j` around `i`.
pub fn neighbor_differences(x: &Plane) -> Vec<Plane> {
    let (h, w) = x.dims();
    let nb = Neighbours::new(h, w);
    let src = x.data();
    (0..WINDOW)
        .map(|k| {
            let mut d = Plane::zeros(h, w);
            let dst = d.data_mut();
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    dst[i] = src[nb.index(w, r, c, k)] - src[i];
                }
            }
            d
        })
        .collect()
}

fn weighted_aggregate(coeffs: &[Plane], diffs: &[Plane]) -> Plane {
    let mut agg = Plane::zeros(diffs[0].height(), diffs[0].width());
    for (c, d) in coeffs.iter().zip(diffs) {
        for ((a, &cv), &dv) in agg.data_mut().iter_mut().zip(c.data()).zip(d.data()) {
            *a += cv * dv;
        }
    }
    agg.scale(1.0 / WINDOW as f64)
}

/// `N^T` of the per-offset difference map scaled by 1/9: each plane `y[k]`
/// is scattered back to both endpoints of its difference.
fn neighbor_adjoint(y: &[Plane]) -> Plane {
    let (h, w) = y[0].dims();
    let nb = Neighbours::new(h, w);
    let mut out = Plane::zeros(h, w);
    let dst = out.data_mut();
    let inv = 1.0 / WINDOW as f64;
    for (k, yk) in y.iter().enumerate() {
        let src = yk.data();
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let v = inv * src[i];
                dst[nb.index(w, r, c, k)] += v;
                dst[i] -= v;
            }
        }
    }
    out
}

/// Aggregate with frozen conductances: `A_c(x) = sum_k c_k ⊙ N_k x`.
pub fn frozen_aggregate(coeffs: &[Plane], x: &Plane) -> Plane {
    weighted_aggregate(coeffs, &neighbor_differences(x))
}

/// Adjoint of [`frozen_aggregate`]: `A_c^T y = sum_k N_k^T (c_k ⊙ y)`.
pub fn frozen_aggregate_adjoint(coeffs: &[Plane], y: &Plane) -> Plane {
    let weighted: Vec<Plane> = coeffs.iter().map(|c| c.mul(y)).collect();
    neighbor_adjoint(&weighted)
}

/// Symmetric linear map on planes.
pub trait LinearOperator: Send + Sync {
    fn apply(&self, x: &Plane) -> Plane;
}

/// The identically-zero operator.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroOperator;

impl LinearOperator for ZeroOperator {
    fn apply(&self, x: &Plane) -> Plane {
        Plane::zeros(x.height(), x.width())
    }
}

/// `x -> D^T (w2 ⊙ D x)` with `D` the stacked Sobel gradient.
#[derive(Debug, Clone)]
pub struct WeightedLaplacian {
    w2: Plane,
}

impl LinearOperator for WeightedLaplacian {
    fn apply(&self, x: &Plane) -> Plane {
        let g = sobel_grad(x);
        sobel_grad_adjoint(&GradientPair {
            gx: g.gx.mul(&self.w2),
            gy: g.gy.mul(&self.w2),
        })
    }
}

pub fn weighted_laplacian(w2: &Plane) -> Result<WeightedLaplacian> {
    if let Some(v) = w2.data().iter().find(|v| v.is_nan() || **v < 0.0) {
        return Err(Error::config("w2", format!("weights must be non-negative, got {v}")));
    }
    Ok(WeightedLaplacian { w2: w2.clone() })
}

/// `x -> sum_k N_k^T (weights_k ⊙ N_k x)`, the Gram operator of the
/// per-offset difference map under diagonal weights.
#[derive(Debug, Clone)]
pub struct DiffusionGram {
    weights: Vec<Plane>,
}

impl DiffusionGram {
    /// Weights are the elementwise products `a_k ⊙ b_k`. With `a = b` this is
    /// the symmetric Gram; with different sets it is the cross term used on
    /// the right-hand side of the reflectance system.
    pub fn cross(a: &[Plane], b: &[Plane]) -> Self {
        Self {
            weights: a.iter().zip(b).map(|(x, y)| x.mul(y)).collect(),
        }
    }
}

impl LinearOperator for DiffusionGram {
    fn apply(&self, x: &Plane) -> Plane {
        let diffs = neighbor_differences(x);
        let inv = 1.0 / WINDOW as f64;
        let weighted: Vec<Plane> = diffs
            .iter()
            .zip(&self.weights)
            .map(|(d, wk)| d.zip_map(wk, |dv, wv| inv * dv * wv))
            .collect();
        neighbor_adjoint(&weighted)
    }
}

pub fn diffusion_gram(coeffs: &[Plane]) -> DiffusionGram {
    assert_eq!(coeffs.len(), WINDOW, "diffusion gram needs nine coefficient planes");
    DiffusionGram::cross(coeffs, coeffs)
}

/// `k * A`.
pub struct Scaled<A>(pub f64, pub A);

impl<A: LinearOperator> LinearOperator for Scaled<A> {
    fn apply(&self, x: &Plane) -> Plane {
        if self.0 == 0.0 {
            return Plane::zeros(x.height(), x.width());
        }
        self.1.apply(x).scale(self.0)
    }
}

/// `diag(shift) + sum(parts)`: the assembled left-hand side of a stage
/// system.
pub struct ShiftedOperator {
    pub shift: Plane,
    pub parts: Vec<Box<dyn LinearOperator>>,
}

impl LinearOperator for ShiftedOperator {
    fn apply(&self, x: &Plane) -> Plane {
        let mut out = self.shift.mul(x);
        for p in &self.parts {
            out.axpy(1.0, &p.apply(x));
        }
        out
    }
}
