#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use retinex_unfold::{MultiChannelImage, Plane};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_retinex-unfold")
}

/// Deterministic outdoor-like scene: a sky-to-ground gradient, a few
/// shaded discs, fine texture and a falloff from a point light.
pub fn scene(seed: u64, h: usize, w: usize) -> MultiChannelImage {
    let mut g = StdRng::seed_from_u64(seed);
    let mut rgb = |lo: f64, hi: f64| [g.random_range(lo..hi), g.random_range(lo..hi), g.random_range(lo..hi)];
    let ground = rgb(0.3, 0.9);
    let sky = rgb(0.2, 1.0);
    let discs: Vec<_> = (0..6)
        .map(|_| {
            let c = rgb(0.05, 1.0);
            let geo = rgb(0.0, 1.0);
            (geo[0], geo[1], 0.08 + 0.22 * geo[2], c)
        })
        .collect();
    let misc = rgb(0.0, 1.0);
    let freq = 6.0 + 14.0 * misc[0];
    let light = (misc[1], misc[2]);
    let planes = (0..3)
        .map(|c| {
            Plane::from_fn(h, w, |r, col| {
                let (y, x) = (r as f64 / h as f64, col as f64 / w as f64);
                let mut v = ground[c] * (1.0 - y) + sky[c] * y;
                for (cx, cy, rad, colour) in &discs {
                    let d = (x - cx).hypot(y - cy);
                    if d < *rad {
                        v = colour[c] * (1.0 - 0.3 * d / rad);
                    }
                }
                let tau = std::f64::consts::TAU;
                v *= 0.9 + 0.1 * (freq * tau * x).sin() * (freq * tau * y).cos();
                let shade = 1.0 - 0.4 * (x - light.0).hypot(y - light.1);
                (v * shade).clamp(0.0, 1.0)
            })
        })
        .collect();
    MultiChannelImage::from_planes(planes).unwrap()
}

/// `clip(x^gamma + n)` with `n ~ N(0, sigma^2)`.
pub fn darken(img: &MultiChannelImage, gamma: f64, sigma: f64, seed: u64) -> MultiChannelImage {
    let mut g = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut out = img.map(|v| v.powf(gamma));
    for c in 0..out.channels() {
        for v in out.plane_mut(c).data_mut() {
            *v = (*v + noise.sample(&mut g)).clamp(0.0, 1.0);
        }
    }
    out
}
