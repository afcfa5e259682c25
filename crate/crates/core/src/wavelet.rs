//! Single-level orthonormal 2D Haar transform and detail-band shrinkage.
//!
//! For each 2x2 block `[a b; c d]`:
//!
//! ```text
//! ll = (a + b + c + d) / 2     hl = (a + b - c - d) / 2
//! lh = (a - b + c - d) / 2     hh = (a - b - c + d) / 2
//! ```
//!
//! Odd dimensions are mirror-padded by one sample before analysis; the
//! bands remember the original size and synthesis crops back to it.

use crate::error::{Error, Result};
use crate::image::{reflect, Plane};

#[derive(Debug, Clone, PartialEq)]
pub struct WaveletBands {
    pub ll: Plane,
    pub lh: Plane,
    pub hl: Plane,
    pub hh: Plane,
    /// Size of the analysed plane before padding.
    pub source_dims: (usize, usize),
}

impl WaveletBands {
    pub fn energy(&self) -> f64 {
        self.ll.norm_sq() + self.lh.norm_sq() + self.hl.norm_sq() + self.hh.norm_sq()
    }
}

pub fn dwt2(x: &Plane) -> WaveletBands {
    let (h, w) = x.dims();
    let (bh, bw) = (h.div_ceil(2), w.div_ceil(2));
    let mut ll = Plane::zeros(bh, bw);
    let mut lh = Plane::zeros(bh, bw);
    let mut hl = Plane::zeros(bh, bw);
    let mut hh = Plane::zeros(bh, bw);
    let px = |r: usize, c: usize| x.get(reflect(r as isize, h), reflect(c as isize, w));
    for i in 0..bh {
        for j in 0..bw {
            let (r, c) = (2 * i, 2 * j);
            let a = px(r, c);
            let b = px(r, c + 1);
            let cc = px(r + 1, c);
            let d = px(r + 1, c + 1);
            ll.set(i, j, 0.5 * (a + b + cc + d));
            hl.set(i, j, 0.5 * (a + b - cc - d));
            lh.set(i, j, 0.5 * (a - b + cc - d));
            hh.set(i, j, 0.5 * (a - b - cc + d));
        }
    }
    WaveletBands {
        ll,
        lh,
        hl,
        hh,
        source_dims: (h, w),
    }
}

pub fn idwt2(b: &WaveletBands) -> Result<Plane> {
    let dims = b.ll.dims();
    for band in [&b.lh, &b.hl, &b.hh] {
        b.ll.check_dims(band)?;
    }
    let (h, w) = b.source_dims;
    if h.div_ceil(2) != dims.0 || w.div_ceil(2) != dims.1 {
        return Err(Error::shape(
            format!("bands of {}x{}", h.div_ceil(2), w.div_ceil(2)),
            format!("bands of {}x{}", dims.0, dims.1),
        ));
    }
    let mut out = Plane::zeros(h, w);
    for i in 0..dims.0 {
        for j in 0..dims.1 {
            let (s, v, u, t) = (b.ll.get(i, j), b.hl.get(i, j), b.lh.get(i, j), b.hh.get(i, j));
            let block = [
                0.5 * (s + v + u + t),
                0.5 * (s + v - u - t),
                0.5 * (s - v + u - t),
                0.5 * (s - v - u + t),
            ];
            for (k, val) in block.into_iter().enumerate() {
                let (r, c) = (2 * i + k / 2, 2 * j + k % 2);
                if r < h && c < w {
                    out.set(r, c, val);
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn soft_threshold(v: f64, tau: f64) -> f64 {
    v.signum() * (v.abs() - tau).max(0.0)
}

/// Soft-thresholds the three detail bands; `ll` passes through untouched.
pub fn band_shrink(b: &WaveletBands, tau: f64) -> Result<WaveletBands> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::config("shrink_tau", format!("must be non-negative, got {tau}")));
    }
    let shrink = |p: &Plane| p.map(|v| soft_threshold(v, tau));
    Ok(WaveletBands {
        ll: b.ll.clone(),
        lh: shrink(&b.lh),
        hl: shrink(&b.hl),
        hh: shrink(&b.hh),
        source_dims: b.source_dims,
    })
}
