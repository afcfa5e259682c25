//! Local smoothing used as the illumination refinement: Gaussian blur and
//! the guided filter. Both read across borders by mirror reflection, so
//! every window holds the same number of samples.

use crate::image::{reflect, Plane};

fn convolve_rows(x: &Plane, kernel: &[f64]) -> Plane {
    let (h, w) = x.dims();
    let r = (kernel.len() / 2) as isize;
    let idx: Vec<Vec<usize>> = (0..w)
        .map(|c| (-r..=r).map(|d| reflect(c as isize + d, w)).collect())
        .collect();
    Plane::from_fn(h, w, |row, c| {
        let base = &x.data()[row * w..(row + 1) * w];
        kernel.iter().zip(&idx[c]).map(|(k, &j)| k * base[j]).sum()
    })
}

fn convolve_cols(x: &Plane, kernel: &[f64]) -> Plane {
    let (h, w) = x.dims();
    let r = (kernel.len() / 2) as isize;
    let idx: Vec<Vec<usize>> = (0..h)
        .map(|row| (-r..=r).map(|d| reflect(row as isize + d, h)).collect())
        .collect();
    Plane::from_fn(h, w, |row, c| {
        kernel
            .iter()
            .zip(&idx[row])
            .map(|(k, &j)| k * x.get(j, c))
            .sum()
    })
}

fn separable(x: &Plane, kernel: &[f64]) -> Plane {
    convolve_cols(&convolve_rows(x, kernel), kernel)
}

/// Mean over the `(2 radius + 1)^2` window around each sample.
pub fn box_mean(x: &Plane, radius: usize) -> Plane {
    let n = 2 * radius + 1;
    separable(x, &vec![1.0 / n as f64; n])
}

pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

pub fn gaussian_blur(x: &Plane, sigma: f64) -> Plane {
    separable(x, &gaussian_kernel(sigma))
}

/// Guided filter of `input` steered by `guide`.
pub fn guided_filter(input: &Plane, guide: &Plane, radius: usize, regularization: f64) -> Plane {
    let mean_i = box_mean(guide, radius);
    let mean_p = box_mean(input, radius);
    let corr_ip = box_mean(&guide.mul(input), radius);
    let corr_ii = box_mean(&guide.mul(guide), radius);

    let var_i = corr_ii.zip_map(&mean_i, |c, m| (c - m * m).max(0.0));
    let cov_ip = corr_ip.sub(&mean_i.mul(&mean_p));
    let a = cov_ip.zip_map(&var_i, |c, v| c / (v + regularization));
    let b = mean_p.sub(&a.mul(&mean_i));

    box_mean(&a, radius).mul(guide).add(&box_mean(&b, radius))
}

/// Anisotropic total variation: sum of absolute forward differences.
pub fn total_variation(x: &Plane) -> f64 {
    let (h, w) = x.dims();
    let mut tv = 0.0;
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                tv += (x.get(r, c + 1) - x.get(r, c)).abs();
            }
            if r + 1 < h {
                tv += (x.get(r + 1, c) - x.get(r, c)).abs();
            }
        }
    }
    tv
}
