//! Full-reference quality metrics on unit-range images.

use crate::error::{dims_error, Error, Result};
use crate::image::{MultiChannelImage, Plane};

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_pair(a: &MultiChannelImage, b: &MultiChannelImage) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(dims_error(a.dims(), b.dims()));
    }
    Ok(())
}

/// `-10 log10(MSE)`, kept within `[0, 99]`.
pub fn psnr(a: &MultiChannelImage, b: &MultiChannelImage) -> Result<f64> {
    check_pair(a, b)?;
    let n = (a.height() * a.width() * a.channels()) as f64;
    let mse = a.sub(b)?.norm_sq() / n;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((-10.0 * mse.log10()).clamp(0.0, PSNR_CAP))
}

fn ssim_kernel() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let x = i as f64 - half;
            (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let total: f64 = g.iter().sum();
    g.into_iter().map(|v| v / total).collect()
}

/// Separable weighted mean over every fully contained window.
fn filter_valid(x: &Plane, k: &[f64]) -> Plane {
    let n = k.len();
    let (h, w) = x.dims();
    let (oh, ow) = (h + 1 - n, w + 1 - n);
    let rows = Plane::from_fn(h, ow, |r, c| (0..n).map(|j| k[j] * x.get(r, c + j)).sum());
    Plane::from_fn(oh, ow, |r, c| (0..n).map(|i| k[i] * rows.get(r + i, c)).sum())
}

fn ssim_plane(x: &Plane, y: &Plane, k: &[f64]) -> (f64, usize) {
    let mx = filter_valid(x, k);
    let my = filter_valid(y, k);
    let sxx = filter_valid(&x.mul(x), k);
    let syy = filter_valid(&y.mul(y), k);
    let sxy = filter_valid(&x.mul(y), k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx.data()[i], my.data()[i]);
        let vx = sxx.data()[i] - ux * ux;
        let vy = syy.data()[i] - uy * uy;
        let cov = sxy.data()[i] - ux * uy;
        total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    (total, mx.len())
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5), averaged
/// over channels and valid window positions.
pub fn ssim(a: &MultiChannelImage, b: &MultiChannelImage) -> Result<f64> {
    check_pair(a, b)?;
    if a.height().min(a.width()) < SSIM_WINDOW {
        return Err(Error::TooSmall(format!(
            "ssim needs both dimensions >= {SSIM_WINDOW}, got {}x{}",
            a.height(),
            a.width()
        )));
    }
    let k = ssim_kernel();
    let (sum, count) = a
        .planes()
        .iter()
        .zip(b.planes())
        .map(|(x, y)| ssim_plane(x, y, &k))
        .fold((0.0, 0), |acc, v| (acc.0 + v.0, acc.1 + v.1));
    Ok(sum / count as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub psnr: f64,
    pub ssim: f64,
    pub energy_trace: Vec<f64>,
    pub isic_trace: Vec<f64>,
    pub runtime_ms: f64,
}

impl MetricsReport {
    /// Compares `restored` to `reference`; traces are left empty.
    pub fn compare(restored: &MultiChannelImage, reference: &MultiChannelImage) -> Result<Self> {
        Ok(Self {
            psnr: psnr(restored, reference)?,
            ssim: ssim(restored, reference)?,
            energy_trace: Vec::new(),
            isic_trace: Vec::new(),
            runtime_ms: 0.0,
        })
    }

    /// `key=value` lines.
    pub fn render(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:.12e}")).collect::<Vec<_>>().join(",");
        format!(
            "psnr={:.6}\nssim={:.6}\nenergy_trace={}\nisic_trace={}\nruntime_ms={:.3}\n",
            self.psnr,
            self.ssim,
            list(&self.energy_trace),
            list(&self.isic_trace),
            self.runtime_ms
        )
    }
}
