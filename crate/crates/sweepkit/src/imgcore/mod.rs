//! Deterministic low-level image primitives shared by every transform.
//!
//! All operations are pure functions of their inputs: no hidden state, no
//! ambient randomness (stochastic callers pass an explicit [`Rng`]). Pixel
//! math follows one rounding rule throughout the crate: real-valued results
//! are rounded half-up (`floor(x + 0.5)`) and clamped to `[0, 255]`.

mod rng;

pub use rng::{derive_seed, Rng};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Interpolation mode for [`resize`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

/// An `H x W x C` unsigned 8-bit image, row-major and channel-interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    /// Build an image from raw interleaved bytes.
    ///
    /// Requires `height >= 1`, `width >= 1`, `channels` 1 or 3, and
    /// `data.len() == height * width * channels`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::invalid(format!(
                "data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    /// Constant-valued image.
    pub fn filled(height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        Image::new(height, width, channels, vec![value; height * width * channels])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: u8) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }
}

/// A 256-entry lookup table indexed by input pixel value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lut {
    table: [u8; 256],
}

impl Lut {
    pub fn new(table: [u8; 256]) -> Self {
        Lut { table }
    }

    /// The identity mapping.
    pub fn identity() -> Self {
        let mut table = [0u8; 256];
        for (i, slot) in table.iter_mut().enumerate() {
            *slot = i as u8;
        }
        Lut { table }
    }

    #[inline]
    pub fn map(&self, v: u8) -> u8 {
        self.table[v as usize]
    }

    pub fn table(&self) -> &[u8; 256] {
        &self.table
    }
}

/// Round half-up, then clamp to `[0, 255]`.
#[inline]
pub fn clamp_round_u8(x: f64) -> u8 {
    let v = (x + 0.5).floor();
    if v <= 0.0 {
        0
    } else if v >= 255.0 {
        255
    } else {
        v as u8
    }
}

/// Resize to `new_h x new_w`.
///
/// Bilinear sampling uses half-pixel source centers,
/// `src = (dst + 0.5) * (old / new) - 0.5`, clamped to the valid range;
/// each channel interpolates independently and the result is rounded
/// half-up. Nearest picks `floor((dst + 0.5) * old / new)` clamped.
pub fn resize(img: &Image, new_h: usize, new_w: usize, mode: ResizeMode) -> Result<Image> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::invalid("resize target must be at least 1x1"));
    }
    let (h, w, c) = img.dims();
    let scale_y = h as f64 / new_h as f64;
    let scale_x = w as f64 / new_w as f64;
    let mut out = vec![0u8; new_h * new_w * c];
    match mode {
        ResizeMode::Bilinear => {
            for r in 0..new_h {
                let sy = ((r as f64 + 0.5) * scale_y - 0.5).clamp(0.0, (h - 1) as f64);
                let y0 = sy.floor() as usize;
                let y1 = (y0 + 1).min(h - 1);
                let fy = sy - y0 as f64;
                for col in 0..new_w {
                    let sx = ((col as f64 + 0.5) * scale_x - 0.5).clamp(0.0, (w - 1) as f64);
                    let x0 = sx.floor() as usize;
                    let x1 = (x0 + 1).min(w - 1);
                    let fx = sx - x0 as f64;
                    for ch in 0..c {
                        let v00 = img.get(y0, x0, ch) as f64;
                        let v01 = img.get(y0, x1, ch) as f64;
                        let v10 = img.get(y1, x0, ch) as f64;
                        let v11 = img.get(y1, x1, ch) as f64;
                        let v = (1.0 - fy) * ((1.0 - fx) * v00 + fx * v01)
                            + fy * ((1.0 - fx) * v10 + fx * v11);
                        out[(r * new_w + col) * c + ch] = clamp_round_u8(v);
                    }
                }
            }
        }
        ResizeMode::Nearest => {
            for r in 0..new_h {
                let sy = (((r as f64 + 0.5) * scale_y).floor() as usize).min(h - 1);
                for col in 0..new_w {
                    let sx = (((col as f64 + 0.5) * scale_x).floor() as usize).min(w - 1);
                    for ch in 0..c {
                        out[(r * new_w + col) * c + ch] = img.get(sy, sx, ch);
                    }
                }
            }
        }
    }
    Image::new(new_h, new_w, c, out)
}

/// Pad with zero-valued margins on each side.
pub fn pad_zero(img: &Image, left: usize, right: usize, top: usize, bottom: usize) -> Result<Image> {
    let (h, w, c) = img.dims();
    let out_h = h + top + bottom;
    let out_w = w + left + right;
    let mut out = vec![0u8; out_h * out_w * c];
    for r in 0..h {
        let src = (r * w) * c;
        let dst = ((r + top) * out_w + left) * c;
        out[dst..dst + w * c].copy_from_slice(&img.data()[src..src + w * c]);
    }
    Image::new(out_h, out_w, c, out)
}

/// Extract the `out_h x out_w` window whose top-left corner is `(top, left)`.
pub fn crop(img: &Image, top: usize, left: usize, out_h: usize, out_w: usize) -> Result<Image> {
    let (h, w, c) = img.dims();
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("crop window must be at least 1x1"));
    }
    if top + out_h > h || left + out_w > w {
        return Err(Error::invalid(format!(
            "crop window {}x{} at ({},{}) exceeds {}x{}",
            out_h, out_w, top, left, h, w
        )));
    }
    let mut out = vec![0u8; out_h * out_w * c];
    for r in 0..out_h {
        let src = ((r + top) * w + left) * c;
        let dst = (r * out_w) * c;
        out[dst..dst + out_w * c].copy_from_slice(&img.data()[src..src + out_w * c]);
    }
    Image::new(out_h, out_w, c, out)
}

/// Gather pixels through per-pixel source coordinates.
///
/// `map_x[r * w + c]` is the real-valued source column and `map_y` the
/// source row for output pixel `(r, c)`. Source indices are floored; any
/// out-of-bounds source yields 0 in every channel.
pub fn remap(img: &Image, map_x: &[f64], map_y: &[f64]) -> Result<Image> {
    let (h, w, c) = img.dims();
    if map_x.len() != h * w || map_y.len() != h * w {
        return Err(Error::invalid(format!(
            "map length {}/{} does not match image {}x{}",
            map_x.len(),
            map_y.len(),
            h,
            w
        )));
    }
    let mut out = vec![0u8; h * w * c];
    for r in 0..h {
        for col in 0..w {
            let i = r * w + col;
            let sx = map_x[i].floor();
            let sy = map_y[i].floor();
            if sx >= 0.0 && sy >= 0.0 && (sx as usize) < w && (sy as usize) < h {
                let (sx, sy) = (sx as usize, sy as usize);
                for ch in 0..c {
                    out[i * c + ch] = img.get(sy, sx, ch);
                }
            }
        }
    }
    Image::new(h, w, c, out)
}

/// Replace every pixel value `v` with `lut[v]`, per channel.
pub fn apply_lut(img: &Image, lut: &Lut) -> Image {
    let (h, w, c) = img.dims();
    let data = img.data().iter().map(|&v| lut.map(v)).collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

/// Reflect-101 border index: mirror without repeating the edge pixel.
#[inline]
fn reflect101(mut i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * (n - 1) - i;
        } else {
            return i as usize;
        }
    }
}

/// Median filter with a `kernel x kernel` window and reflect-101 borders.
///
/// The median of the `k*k` gathered values is the element at index
/// `floor(k*k / 2)` of the sorted window.
pub fn median_filter(img: &Image, kernel: usize) -> Result<Image> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(Error::invalid(format!(
            "median kernel must be odd and >= 1, got {kernel}"
        )));
    }
    if kernel == 1 {
        return Ok(img.clone());
    }
    let (h, w, c) = img.dims();
    let half = (kernel / 2) as isize;
    let mid = (kernel * kernel) / 2;
    let mut out = vec![0u8; h * w * c];
    let mut window = vec![0u8; kernel * kernel];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut n = 0;
                for dy in -half..=half {
                    let sy = reflect101(r as isize + dy, h);
                    for dx in -half..=half {
                        let sx = reflect101(col as isize + dx, w);
                        window[n] = img.get(sy, sx, ch);
                        n += 1;
                    }
                }
                let (_, m, _) = window.select_nth_unstable(mid);
                out[(r * w + col) * c + ch] = *m;
            }
        }
    }
    Image::new(h, w, c, out)
}
