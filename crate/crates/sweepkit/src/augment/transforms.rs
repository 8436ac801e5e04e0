//! The six shortlisted transforms: optical distortion, the three median
//! filters in gamma/scaled spaces, random resize-and-pad, and the stochastic
//! affine transform.
//!
//! Each stochastic transform has a deterministic core (`*_with`) that takes
//! the drawn values explicitly; the public entry point draws them from the
//! caller's [`Rng`] in a documented order and delegates. The cores double as
//! oracle hooks for tests.

use crate::error::{Error, Result};
use crate::imgcore::{
    clamp_round_u8, crop, median_filter, pad_zero, remap, resize, Image, Lut, ResizeMode, Rng,
};

/// Distortion limit for optical distortion; the drawn factor is
/// `delta_k ~ U(-limit, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdParams {
    pub distortion_limit: f64,
}

impl OdParams {
    pub fn new(distortion_limit: f64) -> Result<Self> {
        if !(distortion_limit > 0.0 && distortion_limit <= 1.0) {
            return Err(Error::invalid(format!(
                "distortion limit must be in (0, 1], got {distortion_limit}"
            )));
        }
        Ok(OdParams { distortion_limit })
    }
}

impl Default for OdParams {
    fn default() -> Self {
        OdParams {
            distortion_limit: 0.5,
        }
    }
}

/// Exponent of the gamma lookup table; < 1 compresses (lightens),
/// > 1 extends (darkens).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub gamma: f64,
}

impl GammaParams {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::invalid(format!("gamma must be > 0, got {gamma}")));
        }
        Ok(GammaParams { gamma })
    }
}

/// Scale limit for the resize-and-pad transform; content shrinks to
/// roughly `[1/scale_limit, 1]` of the frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RspaParams {
    pub scale_limit: f64,
}

impl RspaParams {
    pub fn new(scale_limit: f64) -> Result<Self> {
        if scale_limit < 1.0 {
            return Err(Error::invalid(format!(
                "scale limit must be >= 1, got {scale_limit}"
            )));
        }
        Ok(RspaParams { scale_limit })
    }
}

impl Default for RspaParams {
    fn default() -> Self {
        RspaParams { scale_limit: 1.3 }
    }
}

/// Limits for the stochastic affine transform: translation and scaling as
/// fractions of the image size, rotation in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatParams {
    pub translation_limit: f64,
    pub scaling_limit: f64,
    pub rotation_limit: f64,
}

impl SatParams {
    pub fn new(translation_limit: f64, scaling_limit: f64, rotation_limit: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&translation_limit) {
            return Err(Error::invalid("translation limit must be in [0, 1)"));
        }
        if !(0.0..1.0).contains(&scaling_limit) {
            return Err(Error::invalid("scaling limit must be in [0, 1)"));
        }
        if rotation_limit < 0.0 {
            return Err(Error::invalid("rotation limit must be >= 0"));
        }
        Ok(SatParams {
            translation_limit,
            scaling_limit,
            rotation_limit,
        })
    }
}

impl Default for SatParams {
    fn default() -> Self {
        SatParams {
            translation_limit: 0.16,
            scaling_limit: 0.16,
            rotation_limit: 4.0,
        }
    }
}

// ---------------------------------------------------------------------------
// T1: optical distortion
// ---------------------------------------------------------------------------

/// Optical distortion: draws `delta_k ~ U(-limit, 0)` and contracts every
/// coordinate toward the image center by `1 + delta_k`.
pub fn optical_distortion(img: &Image, params: &OdParams, rng: &mut Rng) -> Image {
    let delta_k = rng.uniform(-params.distortion_limit, 0.0);
    optical_distortion_with(img, delta_k)
}

/// Deterministic core with the drawn distortion factor fixed.
///
/// Builds `map_x(u, v) = (u - cx) * (1 + delta_k) + cx` (and `map_y`
/// likewise) with `cx = floor(w / 2)`, `cy = floor(h / 2)`, then remaps
/// with floored source indices.
pub fn optical_distortion_with(img: &Image, delta_k: f64) -> Image {
    let (h, w, _) = img.dims();
    let cx = (w / 2) as f64;
    let cy = (h / 2) as f64;
    let factor = 1.0 + delta_k;
    let mut map_x = vec![0.0; h * w];
    let mut map_y = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let i = r * w + c;
            map_x[i] = (c as f64 - cx) * factor + cx;
            map_y[i] = (r as f64 - cy) * factor + cy;
        }
    }
    remap(img, &map_x, &map_y).expect("maps match image dimensions")
}

// ---------------------------------------------------------------------------
// T2-T4: median filters in transformed spaces
// ---------------------------------------------------------------------------

/// Build the gamma lookup table `lut[i] = round(255 * (i / 255)^gamma)`.
pub fn gamma_lut(gamma: f64) -> Lut {
    let mut table = [0u8; 256];
    for (i, slot) in table.iter_mut().enumerate() {
        *slot = clamp_round_u8(255.0 * (i as f64 / 255.0).powf(gamma));
    }
    Lut::new(table)
}

/// Apply the gamma lookup table to every pixel.
pub fn gamma_transform(img: &Image, params: &GammaParams) -> Image {
    crate::imgcore::apply_lut(img, &gamma_lut(params.gamma))
}

const FILTER_KERNEL: usize = 5;
const GCSM_GAMMA: f64 = 0.6;
const GESM_GAMMA: f64 = 2.6;
const GESM_FACTOR: f64 = 1.53;
const GESM_SCALE: f64 = 0.75;
const DSSM_SCALE: f64 = 0.8;

/// Median filter in gamma-compressed space: gamma 0.6, then a 5x5 median.
/// The output stays in compressed space; no inverse gamma is applied.
pub fn gcsm(img: &Image) -> Image {
    gcsm_with(img, GCSM_GAMMA, FILTER_KERNEL).expect("defaults are valid")
}

/// [`gcsm`] with explicit gamma and kernel.
pub fn gcsm_with(img: &Image, gamma: f64, kernel: usize) -> Result<Image> {
    let compressed = gamma_transform(img, &GammaParams::new(gamma)?);
    median_filter(&compressed, kernel)
}

fn shrunk_dims(h: usize, w: usize, scale: f64) -> (usize, usize) {
    // degenerate targets clamp to 1
    let sh = ((h as f64 * scale).floor() as usize).max(1);
    let sw = ((w as f64 * scale).floor() as usize).max(1);
    (sh, sw)
}

/// Median filter in gamma-extended space: multiply by 1.53 (saturating),
/// gamma 2.6, shrink to 75%, 5x5 median, resize back.
pub fn gesm(img: &Image) -> Image {
    gesm_with(img, GESM_FACTOR, GESM_GAMMA, GESM_SCALE, FILTER_KERNEL).expect("defaults are valid")
}

/// [`gesm`] with explicit multiply factor, gamma, shrink scale and kernel.
pub fn gesm_with(img: &Image, factor: f64, gamma: f64, scale: f64, kernel: usize) -> Result<Image> {
    let (h, w, c) = img.dims();
    let lit: Vec<u8> = img
        .data()
        .iter()
        .map(|&v| clamp_round_u8(v as f64 * factor))
        .collect();
    let lit = Image::new(h, w, c, lit).expect("dimensions preserved");
    let extended = gamma_transform(&lit, &GammaParams::new(gamma)?);
    let (sh, sw) = shrunk_dims(h, w, scale);
    let small = resize(&extended, sh, sw, ResizeMode::Bilinear)?;
    let filtered = median_filter(&small, kernel)?;
    resize(&filtered, h, w, ResizeMode::Bilinear)
}

/// Median filter in down-scaled space: shrink to 80%, 5x5 median, resize back.
pub fn dssm(img: &Image) -> Image {
    dssm_with(img, DSSM_SCALE, FILTER_KERNEL).expect("defaults are valid")
}

/// [`dssm`] with explicit shrink scale and kernel.
pub fn dssm_with(img: &Image, scale: f64, kernel: usize) -> Result<Image> {
    let (h, w, _) = img.dims();
    let (sh, sw) = shrunk_dims(h, w, scale);
    let small = resize(img, sh, sw, ResizeMode::Bilinear)?;
    let filtered = median_filter(&small, kernel)?;
    resize(&filtered, h, w, ResizeMode::Bilinear)
}

// ---------------------------------------------------------------------------
// T5: random resize and pad
// ---------------------------------------------------------------------------

/// Random resize-and-pad on a square `l x l` image.
///
/// Draws, in order, `len ~ floor(U(l, len_max))` with `len_max =
/// floor(l * scale_limit)`, then pad offsets `x1, y1 ~ floor(U(0, rem))`
/// with `rem = len_max - len`.
pub fn rspa(img: &Image, params: &RspaParams, rng: &mut Rng) -> Result<Image> {
    let (h, w, _) = img.dims();
    if h != w {
        return Err(Error::invalid(format!("rspa requires a square image, got {h}x{w}")));
    }
    let len_max = ((h as f64) * params.scale_limit).floor() as usize;
    let len = rng.uniform(h as f64, len_max as f64).floor() as usize;
    let rem = len_max - len;
    let x1 = rng.uniform(0.0, rem as f64).floor() as usize;
    let y1 = rng.uniform(0.0, rem as f64).floor() as usize;
    rspa_with(img, len_max, len, x1, y1)
}

/// Deterministic core: resize to `len x len`, pad to `len_max x len_max`
/// with top/bottom margins `(x1, x2)` and left/right margins `(y1, y2)`
/// where `x2 = len_max - len - x1` (and `y2` likewise), then resize back.
pub fn rspa_with(img: &Image, len_max: usize, len: usize, x1: usize, y1: usize) -> Result<Image> {
    let (h, w, _) = img.dims();
    if h != w {
        return Err(Error::invalid(format!("rspa requires a square image, got {h}x{w}")));
    }
    if len == 0 || len > len_max {
        return Err(Error::invalid(format!("len {len} out of range [1, {len_max}]")));
    }
    let rem = len_max - len;
    if x1 > rem || y1 > rem {
        return Err(Error::invalid("pad offsets exceed the remaining margin"));
    }
    let (x2, y2) = (rem - x1, rem - y1);
    let resized = resize(img, len, len, ResizeMode::Bilinear)?;
    let padded = pad_zero(&resized, y1, y2, x1, x2)?;
    resize(&padded, h, w, ResizeMode::Bilinear)
}

// ---------------------------------------------------------------------------
// T6: stochastic affine transform
// ---------------------------------------------------------------------------

/// Stochastic affine transform: random translation, rotation, scaling.
///
/// Draws, in order, `dx, dy ~ U(-T, T)`, `dr ~ U(-R, R)` degrees, and
/// `ds ~ U(1 - S, 1 + S)`.
pub fn sat(img: &Image, params: &SatParams, rng: &mut Rng) -> Image {
    let t = params.translation_limit;
    let dx = rng.uniform(-t, t);
    let dy = rng.uniform(-t, t);
    let r = params.rotation_limit;
    let dr = rng.uniform(-r, r);
    let s = params.scaling_limit;
    let ds = rng.uniform(1.0 - s, 1.0 + s);
    sat_with(img, dx, dy, dr, ds)
}

/// Deterministic core with all four draws fixed.
///
/// Stage 1 copies pixel `(r, c)` from `(r + dy*h, c + dx*w)` when that
/// source is in bounds, 0 otherwise. Stage 2 inverse-maps each destination
/// through a rotation of `dr` degrees about `(floor(h/2), floor(w/2))` with
/// floored source indices, 0 where out of bounds. Stage 3 resizes to
/// `floor(ds*h) x floor(ds*w)` and center-crops (`ds > 1`) or zero-pads
/// (`ds < 1`) back to the input size.
pub fn sat_with(img: &Image, dx: f64, dy: f64, dr_degrees: f64, ds: f64) -> Image {
    let (h, w, c) = img.dims();

    // stage 1: translation onto a zero canvas
    let shift_x = dx * w as f64;
    let shift_y = dy * h as f64;
    let mut translated = vec![0u8; h * w * c];
    for r in 0..h {
        let sy = (r as f64 + shift_y).floor();
        for col in 0..w {
            let sx = (col as f64 + shift_x).floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let (sx, sy) = (sx as usize, sy as usize);
                for ch in 0..c {
                    translated[(r * w + col) * c + ch] = img.get(sy, sx, ch);
                }
            }
        }
    }
    let translated = Image::new(h, w, c, translated).expect("dimensions preserved");

    // stage 2: rotation by inverse mapping
    let theta = dr_degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cx = (w / 2) as f64;
    let cy = (h / 2) as f64;
    let mut rotated = vec![0u8; h * w * c];
    for r in 0..h {
        for col in 0..w {
            let rx = col as f64 - cx;
            let ry = r as f64 - cy;
            let sx = (rx * cos + ry * sin + cx).floor();
            let sy = (-rx * sin + ry * cos + cy).floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let (sx, sy) = (sx as usize, sy as usize);
                for ch in 0..c {
                    rotated[(r * w + col) * c + ch] = translated.get(sy, sx, ch);
                }
            }
        }
    }
    let rotated = Image::new(h, w, c, rotated).expect("dimensions preserved");

    // stage 3: scaling, then crop or pad back to the input size
    let nh = ((ds * h as f64).floor() as usize).max(1);
    let nw = ((ds * w as f64).floor() as usize).max(1);
    if nh == h && nw == w {
        return rotated;
    }
    let scaled = resize(&rotated, nh, nw, ResizeMode::Bilinear).expect("valid target");
    if nh >= h && nw >= w {
        let top = (nh - h) / 2;
        let left = (nw - w) / 2;
        crop(&scaled, top, left, h, w).expect("window fits")
    } else {
        let top = (h - nh.min(h)) / 2;
        let left = (w - nw.min(w)) / 2;
        let inner = if nh > h || nw > w {
            // mixed case from floor effects: trim the oversized axis first
            crop(&scaled, 0, 0, nh.min(h), nw.min(w)).expect("window fits")
        } else {
            scaled
        };
        let (ih, iw, _) = inner.dims();
        pad_zero(&inner, left, w - iw - left, top, h - ih - top).expect("margins valid")
    }
}
