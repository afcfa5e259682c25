//! Image containers and elementwise algebra.
//!
//! A [`Plane`] is a single row-major `f64` field. A [`MultiChannelImage`]
//! stores its channels planar, one [`Plane`] each. Every neighbourhood read
//! at a border goes through [`reflect`], which mirrors indices across the
//! edge without repeating the edge sample (index `-1` reads `1`, index `n`
//! reads `n - 2`).

use crate::error::{Error, Result};

/// Maps a possibly out-of-range index onto `0..n` by mirror reflection.
///
/// Works for offsets of any size (the reflected signal is periodic with
/// period `2(n - 1)`). A length-one axis always maps to `0`.
#[inline]
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    if (0..n).contains(&i) {
        return i as usize;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// A single real-valued image plane, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    /// Builds a plane from row-major data, rejecting bad lengths and
    /// non-finite values.
    pub fn from_vec(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("non-empty plane", format!("{height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} samples", height * width),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                context: format!("plane construction (non-finite sample at index {pos})"),
                iteration: 0,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(height > 0 && width > 0, "plane dimensions must be positive");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.width + c] = v;
    }

    /// Reads with mirror boundary handling.
    #[inline]
    pub fn at(&self, r: isize, c: isize) -> f64 {
        self.get(reflect(r, self.height), reflect(c, self.width))
    }

    pub fn same_dims(&self, other: &Plane) -> bool {
        self.dims() == other.dims()
    }

    pub(crate) fn check_dims(&self, other: &Plane) -> Result<()> {
        if self.same_dims(other) {
            Ok(())
        } else {
            Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", other.height, other.width),
            ))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; panics on mismatched dimensions.
    pub fn zip_map(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        assert!(self.same_dims(other), "plane dimension mismatch");
        Plane {
            height: self.height,
            width: self.width,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn add(&self, other: &Plane) -> Plane {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Plane) -> Plane {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Plane) -> Plane {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Plane {
        self.map(|v| k * v)
    }

    /// `self += k * other`
    pub fn axpy(&mut self, k: f64, other: &Plane) {
        assert!(self.same_dims(other), "plane dimension mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += k * b;
        }
    }

    pub fn dot(&self, other: &Plane) -> f64 {
        assert!(self.same_dims(other), "plane dimension mismatch");
        self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.len() as f64
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Plane {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `H x W x C` image with planar channel storage, `C` in `{1, 3}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    planes: Vec<Plane>,
}

impl MultiChannelImage {
    pub fn from_planes(planes: Vec<Plane>) -> Result<Self> {
        match planes.len() {
            1 | 3 => {}
            n => {
                return Err(Error::shape("1 or 3 channels", format!("{n} channels")));
            }
        }
        for p in &planes[1..] {
            planes[0].check_dims(p)?;
        }
        Ok(Self { planes })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self {
            planes: vec![Plane::zeros(height, width); channels],
        }
    }

    /// Builds an image from interleaved (`HWC`) samples.
    pub fn from_interleaved(
        height: usize,
        width: usize,
        channels: usize,
        samples: &[f64],
    ) -> Result<Self> {
        if samples.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} samples", height * width * channels),
                format!("{} samples", samples.len()),
            ));
        }
        let planes = (0..channels)
            .map(|ch| {
                Plane::from_vec(
                    height,
                    width,
                    samples.iter().skip(ch).step_by(channels).copied().collect(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_planes(planes)
    }

    pub fn to_interleaved(&self) -> Vec<f64> {
        let n = self.height() * self.width();
        let c = self.channels();
        let mut out = Vec::with_capacity(n * c);
        for i in 0..n {
            for p in &self.planes {
                out.push(p.data()[i]);
            }
        }
        out
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.planes[0].height()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.planes[0].width()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.planes.len()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), self.channels())
    }

    pub fn planes(&self) -> &[Plane] {
        &self.planes
    }

    pub fn plane(&self, ch: usize) -> &Plane {
        &self.planes[ch]
    }

    pub fn plane_mut(&mut self, ch: usize) -> &mut Plane {
        &mut self.planes[ch]
    }

    pub fn into_planes(self) -> Vec<Plane> {
        self.planes
    }

    pub fn map_planes(&self, f: impl Fn(&Plane) -> Plane) -> MultiChannelImage {
        MultiChannelImage {
            planes: self.planes.iter().map(f).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Copy) -> MultiChannelImage {
        self.map_planes(|p| p.map(f))
    }

    pub fn norm_sq(&self) -> f64 {
        self.planes.iter().map(Plane::norm_sq).sum()
    }

    pub fn mean(&self) -> f64 {
        self.planes.iter().map(Plane::sum).sum::<f64>()
            / (self.height() * self.width() * self.channels()) as f64
    }

    pub fn is_finite(&self) -> bool {
        self.planes.iter().all(Plane::is_finite)
    }

    /// Per-pixel maximum over channels.
    pub fn channel_max(&self) -> Plane {
        let mut out = self.planes[0].clone();
        for p in &self.planes[1..] {
            out = out.zip_map(p, f64::max);
        }
        out
    }

    pub fn sub(&self, other: &MultiChannelImage) -> Result<MultiChannelImage> {
        if self.dims() != other.dims() {
            return Err(Error::shape(dims_str(self.dims()), dims_str(other.dims())));
        }
        Ok(MultiChannelImage {
            planes: self
                .planes
                .iter()
                .zip(&other.planes)
                .map(|(a, b)| a.sub(b))
                .collect(),
        })
    }
}

impl From<Plane> for MultiChannelImage {
    fn from(p: Plane) -> Self {
        MultiChannelImage { planes: vec![p] }
    }
}

pub(crate) fn dims_str((h, w, c): (usize, usize, usize)) -> String {
    format!("{h}x{w}x{c}")
}

/// Coupled reflectance / illumination estimate. Illumination is a single
/// plane broadcast over the reflectance channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RetinexPair {
    pub reflectance: MultiChannelImage,
    pub illumination: Plane,
}

impl RetinexPair {
    /// `R ⊙ L` with `L` broadcast over channels.
    pub fn compose(&self) -> MultiChannelImage {
        broadcast_mul(&self.reflectance, &self.illumination)
    }
}

pub(crate) fn broadcast_mul(a: &MultiChannelImage, b: &Plane) -> MultiChannelImage {
    a.map_planes(|p| p.mul(b))
}

/// Max-channel initialization: `L0 = max(max_c I_c, eps)`, `R0 = I / L0`.
pub fn decompose_init(input: &MultiChannelImage, epsilon: f64) -> Result<RetinexPair> {
    if !(epsilon > 0.0 && epsilon < 0.1) {
        return Err(Error::config("epsilon", format!("must lie in (0, 0.1), got {epsilon}")));
    }
    let illumination = input.channel_max().map(|v| v.max(epsilon));
    let reflectance = input.map_planes(|p| p.zip_map(&illumination, |i, l| i / l));
    Ok(RetinexPair {
        reflectance,
        illumination,
    })
}

/// Elementwise product. `b` may be single-channel, in which case it is
/// broadcast over the channels of `a`.
pub fn hadamard(a: &MultiChannelImage, b: &MultiChannelImage) -> Result<MultiChannelImage> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::shape(dims_str(a.dims()), dims_str(b.dims())));
    }
    match (a.channels(), b.channels()) {
        (_, 1) => Ok(broadcast_mul(a, b.plane(0))),
        (ca, cb) if ca == cb => Ok(MultiChannelImage {
            planes: a
                .planes
                .iter()
                .zip(&b.planes)
                .map(|(x, y)| x.mul(y))
                .collect(),
        }),
        _ => Err(Error::shape(dims_str(a.dims()), dims_str(b.dims()))),
    }
}

pub fn clamp_unit(x: &MultiChannelImage) -> MultiChannelImage {
    x.map(|v| v.clamp(0.0, 1.0))
}
