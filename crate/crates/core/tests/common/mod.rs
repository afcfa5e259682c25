#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use retinex_unfold::{MultiChannelImage, Plane, SolverConfig};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn plane(rng: &mut StdRng, h: usize, w: usize, lo: f64, hi: f64) -> Plane {
    Plane::from_fn(h, w, |_, _| rng.random_range(lo..hi))
}

pub fn image(rng: &mut StdRng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> MultiChannelImage {
    MultiChannelImage::from_planes((0..c).map(|_| plane(rng, h, w, lo, hi)).collect()).unwrap()
}

pub fn vec_of(p: &Plane) -> DVector<f64> {
    DVector::from_column_slice(p.data())
}

pub fn plane_of(v: &DVector<f64>, h: usize, w: usize) -> Plane {
    Plane::from_vec(h, w, v.iter().copied().collect()).unwrap()
}

/// Whole-sample mirror: -1 -> 1, n -> n-2.
pub fn mirror(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Dense Sobel derivative matrices (x then y), scaled by 1/8.
pub fn sobel_dense(h: usize, w: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = h * w;
    let kx = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
    let mut dx = DMatrix::zeros(n, n);
    let mut dy = DMatrix::zeros(n, n);
    for r in 0..h {
        for c in 0..w {
            for a in 0..3 {
                for b in 0..3 {
                    let rr = mirror(r as isize + a as isize - 1, h);
                    let cc = mirror(c as isize + b as isize - 1, w);
                    dx[(r * w + c, rr * w + cc)] += kx[a][b] / 8.0;
                    dy[(r * w + c, rr * w + cc)] += kx[b][a] / 8.0;
                }
            }
        }
    }
    (dx, dy)
}

/// Neighbour-difference matrices `x -> x_j - x_i` for the nine 3x3 offsets
/// in row-major order.
pub fn neighbor_dense(h: usize, w: usize) -> Vec<DMatrix<f64>> {
    let n = h * w;
    let mut out = Vec::new();
    for dr in -1isize..=1 {
        for dc in -1isize..=1 {
            let mut m = DMatrix::zeros(n, n);
            for r in 0..h {
                for c in 0..w {
                    let i = r * w + c;
                    let j = mirror(r as isize + dr, h) * w + mirror(c as isize + dc, w);
                    m[(i, j)] += 1.0;
                    m[(i, i)] -= 1.0;
                }
            }
            out.push(m);
        }
    }
    out
}

pub fn conductance(d: f64, s: f64) -> f64 {
    (-(d / s).powi(2)).exp()
}

/// Conductances `c_k = exp(-((N_k x)/s)^2)` as vectors.
pub fn conductances(n: &[DMatrix<f64>], x: &DVector<f64>, s: f64) -> Vec<DVector<f64>> {
    n.iter().map(|nk| (nk * x).map(|d| conductance(d, s))).collect()
}

/// `A(x) = (1/9) sum_k c_k(x) ⊙ N_k x`.
pub fn aggregate_dense(n: &[DMatrix<f64>], x: &DVector<f64>, s: f64) -> DVector<f64> {
    let mut out = DVector::zeros(x.len());
    for nk in n {
        let d = nk * x;
        out += d.map(|v| conductance(v, s) * v) / 9.0;
    }
    out
}

/// `sum_k (N_k/9)^T diag(a_k b_k) (N_k/9)`.
pub fn gram_dense(n: &[DMatrix<f64>], a: &[DVector<f64>], b: &[DVector<f64>]) -> DMatrix<f64> {
    let dim = n[0].nrows();
    let mut g = DMatrix::zeros(dim, dim);
    for k in 0..n.len() {
        let nk = &n[k] / 9.0;
        let wk = DMatrix::from_diagonal(&a[k].component_mul(&b[k]));
        g += nk.transpose() * wk * &nk;
    }
    g
}

pub fn huber_prime(v: f64, delta: f64) -> f64 {
    if v.abs() <= delta {
        v / delta
    } else {
        v.signum()
    }
}

/// `w = exp(-|∇l|)` squared, as a diagonal.
pub fn illum_weight_sq_dense(dx: &DMatrix<f64>, dy: &DMatrix<f64>, l: &DVector<f64>) -> DVector<f64> {
    let gx = dx * l;
    let gy = dy * l;
    DVector::from_iterator(l.len(), gx.iter().zip(gy.iter()).map(|(a, b)| (-2.0 * a.hypot(*b)).exp()))
}

pub fn max_abs_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, x: &DVector<f64>, step: f64) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|k| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[k] += step;
            m[k] -= step;
            (f(&p) - f(&m)) / (2.0 * step)
        }),
    )
}

/// Dense illumination system `a l = b` and the objective it minimises.
pub struct IllumProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub r: Vec<DVector<f64>>,
    pub i: Vec<DVector<f64>>,
    pub lp: DVector<f64>,
    pub w2: DVector<f64>,
    pub dx: DMatrix<f64>,
    pub dy: DMatrix<f64>,
}

impl IllumProblem {
    pub fn new(r: &MultiChannelImage, lp: &Plane, input: &MultiChannelImage, cfg: &SolverConfig) -> Self {
        let (h, w) = lp.dims();
        let (dx, dy) = sobel_dense(h, w);
        let lpv = vec_of(lp);
        let w2 = illum_weight_sq_dense(&dx, &dy, &lpv);
        let rv: Vec<_> = r.planes().iter().map(vec_of).collect();
        let iv: Vec<_> = input.planes().iter().map(vec_of).collect();
        let nc = rv.len() as f64;
        let mut diag = DVector::from_element(h * w, cfg.gamma);
        let mut b = &lpv * cfg.gamma;
        for (rc, ic) in rv.iter().zip(&iv) {
            diag += rc.component_mul(rc) / nc;
            b += rc.component_mul(ic) / nc;
        }
        let wd = DMatrix::from_diagonal(&w2);
        let a = DMatrix::from_diagonal(&diag)
            + (dx.transpose() * &wd * &dx + dy.transpose() * &wd * &dy) * cfg.lambda;
        Self {
            a,
            b,
            r: rv,
            i: iv,
            lp: lpv,
            w2,
            dx,
            dy,
        }
    }

    pub fn objective(&self, l: &DVector<f64>, cfg: &SolverConfig) -> f64 {
        let nc = self.r.len() as f64;
        let fid: f64 = self
            .r
            .iter()
            .zip(&self.i)
            .map(|(rc, ic)| (ic - rc.component_mul(l)).norm_squared())
            .sum();
        let gx = &self.dx * l;
        let gy = &self.dy * l;
        let smooth: f64 = (0..l.len()).map(|k| self.w2[k] * (gx[k] * gx[k] + gy[k] * gy[k])).sum();
        0.5 * fid / nc + 0.5 * cfg.gamma * (l - &self.lp).norm_squared() + 0.5 * cfg.lambda * smooth
    }
}

/// Dense reflectance system of one channel and its quadratic model.
pub struct ReflProblem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub n: Vec<DMatrix<f64>>,
    pub c1: Vec<DVector<f64>>,
    pub c2: Vec<DVector<f64>>,
    pub slope: DVector<f64>,
    pub l: DVector<f64>,
    pub i: DVector<f64>,
    pub rp: DVector<f64>,
    pub r2: DVector<f64>,
}

impl ReflProblem {
    pub fn new(l: &Plane, rp: &Plane, r2: &Plane, input: &Plane, cfg: &SolverConfig) -> Self {
        let (h, w) = l.dims();
        let n = neighbor_dense(h, w);
        let (lv, rpv, r2v, iv) = (vec_of(l), vec_of(rp), vec_of(r2), vec_of(input));
        let c1 = conductances(&n, &rpv, cfg.s);
        let c2 = conductances(&n, &r2v, cfg.s);
        let slope = (aggregate_dense(&n, &iv, cfg.s) - aggregate_dense(&n, &r2v, cfg.s))
            .map(|v| huber_prime(v, cfg.huber_delta));
        let ls = 1.0 / cfg.huber_delta;
        let mut a_c1 = DMatrix::zeros(h * w, h * w);
        for (nk, ck) in n.iter().zip(&c1) {
            a_c1 += DMatrix::from_diagonal(ck) * nk / 9.0;
        }
        let a = DMatrix::from_diagonal(&lv.map(|v| v * v + cfg.beta)) + gram_dense(&n, &c1, &c1) * (cfg.mu * ls);
        let b = lv.component_mul(&iv)
            + &rpv * cfg.beta
            + gram_dense(&n, &c1, &c2) * &r2v * (cfg.mu * ls)
            + a_c1.transpose() * &slope * cfg.mu;
        Self {
            a,
            b,
            n,
            c1,
            c2,
            slope,
            l: lv,
            i: iv,
            rp: rpv,
            r2: r2v,
        }
    }

    pub fn objective(&self, r: &DVector<f64>, cfg: &SolverConfig) -> f64 {
        let ls = 1.0 / cfg.huber_delta;
        let mut quad = 0.0;
        let mut lin = 0.0;
        for k in 0..9 {
            let dr = &self.n[k] * r / 9.0;
            let d2 = &self.n[k] * &self.r2 / 9.0;
            quad += (self.c1[k].component_mul(&dr) - self.c2[k].component_mul(&d2)).norm_squared();
            lin += self.slope.dot(&self.c1[k].component_mul(&dr));
        }
        0.5 * (&self.i - self.l.component_mul(r)).norm_squared()
            + 0.5 * cfg.beta * (r - &self.rp).norm_squared()
            + cfg.mu * (0.5 * ls * quad - lin)
    }
}
