//! Simple registry transforms spanning flips, crops, quantization, blurs and
//! channel distortions. Definitions here are authoritative for this crate;
//! they do not chase pixel parity with any third-party library.

use crate::error::Result;
use crate::imgcore::{clamp_round_u8, crop, resize, Image, ResizeMode, Rng};

/// Mirror columns.
pub fn hflip(img: &Image) -> Image {
    let (h, w, c) = img.dims();
    let mut out = vec![0u8; h * w * c];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                out[(r * w + col) * c + ch] = img.get(r, w - 1 - col, ch);
            }
        }
    }
    Image::new(h, w, c, out).expect("dimensions preserved")
}

/// Mirror rows.
pub fn vflip(img: &Image) -> Image {
    let (h, w, c) = img.dims();
    let mut out = vec![0u8; h * w * c];
    for r in 0..h {
        let src = ((h - 1 - r) * w) * c;
        let dst = (r * w) * c;
        out[dst..dst + w * c].copy_from_slice(&img.data()[src..src + w * c]);
    }
    Image::new(h, w, c, out).expect("dimensions preserved")
}

/// Swap rows and columns; output is `w x h`.
pub fn transpose(img: &Image) -> Image {
    let (h, w, c) = img.dims();
    let mut out = vec![0u8; h * w * c];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                out[(col * h + r) * c + ch] = img.get(r, col, ch);
            }
        }
    }
    Image::new(w, h, c, out).expect("dimensions preserved")
}

/// Rotate 90 degrees clockwise; output is `w x h`.
pub fn rotate90(img: &Image) -> Image {
    let (h, w, c) = img.dims();
    let mut out = vec![0u8; h * w * c];
    for r in 0..w {
        for col in 0..h {
            for ch in 0..c {
                out[(r * h + col) * c + ch] = img.get(h - 1 - col, r, ch);
            }
        }
    }
    Image::new(w, h, c, out).expect("dimensions preserved")
}

fn crop_dims(h: usize, w: usize, frac: f64) -> (usize, usize) {
    let ch = ((h as f64 * frac).floor() as usize).clamp(1, h);
    let cw = ((w as f64 * frac).floor() as usize).clamp(1, w);
    (ch, cw)
}

/// Crop the central `frac` window and resize back to the input size.
pub fn center_crop_resize(img: &Image, frac: f64) -> Result<Image> {
    let (h, w, _) = img.dims();
    let (ch, cw) = crop_dims(h, w, frac);
    let window = crop(img, (h - ch) / 2, (w - cw) / 2, ch, cw)?;
    resize(&window, h, w, ResizeMode::Bilinear)
}

/// Crop a random `frac` window (offsets drawn top then left) and resize back.
pub fn random_crop_resize(img: &Image, frac: f64, rng: &mut Rng) -> Result<Image> {
    let (h, w, _) = img.dims();
    let (ch, cw) = crop_dims(h, w, frac);
    let top = rng.below((h - ch + 1) as u64) as usize;
    let left = rng.below((w - cw + 1) as u64) as usize;
    let window = crop(img, top, left, ch, cw)?;
    resize(&window, h, w, ResizeMode::Bilinear)
}

/// Zero out one random square hole of side `floor(frac * min(h, w))`
/// (offsets drawn top then left).
pub fn cutout(img: &Image, frac: f64, rng: &mut Rng) -> Image {
    let (h, w, c) = img.dims();
    let side = ((h.min(w) as f64 * frac).floor() as usize).clamp(1, h.min(w));
    let top = rng.below((h - side + 1) as u64) as usize;
    let left = rng.below((w - side + 1) as u64) as usize;
    let mut out = img.clone();
    for r in top..top + side {
        for col in left..left + side {
            for ch in 0..c {
                out.set(r, col, ch, 0);
            }
        }
    }
    out
}

/// Shrink to `scale` of the input size bilinearly and resize back.
pub fn downscale_upscale(img: &Image, scale: f64) -> Result<Image> {
    let (h, w, _) = img.dims();
    let sh = ((h as f64 * scale).floor() as usize).max(1);
    let sw = ((w as f64 * scale).floor() as usize).max(1);
    let small = resize(img, sh, sw, ResizeMode::Bilinear)?;
    resize(&small, h, w, ResizeMode::Bilinear)
}

/// Keep the top `bits` bits of every pixel value.
pub fn posterize(img: &Image, bits: u32) -> Image {
    let bits = bits.clamp(1, 8);
    let mask = (0xFFu16 << (8 - bits)) as u8;
    let (h, w, c) = img.dims();
    let data = img.data().iter().map(|&v| v & mask).collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

/// Mean filter with a `kernel x kernel` window and reflect-101 borders.
pub fn box_blur(img: &Image, kernel: usize) -> Result<Image> {
    if kernel % 2 == 0 || kernel == 0 {
        return Err(crate::error::Error::invalid(format!(
            "box kernel must be odd and >= 1, got {kernel}"
        )));
    }
    let (h, w, c) = img.dims();
    let half = (kernel / 2) as isize;
    let count = (kernel * kernel) as f64;
    let reflect = |mut i: isize, n: usize| -> usize {
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
    };
    let mut out = vec![0u8; h * w * c];
    for r in 0..h {
        for col in 0..w {
            for ch in 0..c {
                let mut sum = 0u32;
                for dy in -half..=half {
                    let sy = reflect(r as isize + dy, h);
                    for dx in -half..=half {
                        let sx = reflect(col as isize + dx, w);
                        sum += img.get(sy, sx, ch) as u32;
                    }
                }
                out[(r * w + col) * c + ch] = clamp_round_u8(sum as f64 / count);
            }
        }
    }
    Image::new(h, w, c, out)
}

/// Add per-value noise drawn `U(-limit, limit)` in row-major,
/// channel-interleaved order.
pub fn uniform_noise(img: &Image, limit: f64, rng: &mut Rng) -> Image {
    let (h, w, c) = img.dims();
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_round_u8(v as f64 + rng.uniform(-limit, limit)))
        .collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

/// Apply a random channel permutation; identity for single-channel images.
pub fn channel_shuffle(img: &Image, rng: &mut Rng) -> Image {
    let (h, w, c) = img.dims();
    if c == 1 {
        return img.clone();
    }
    let mut perm: Vec<usize> = (0..c).collect();
    rng.shuffle(&mut perm);
    let mut out = vec![0u8; h * w * c];
    for i in 0..h * w {
        for (ch, &src) in perm.iter().enumerate() {
            out[i * c + ch] = img.data()[i * c + src];
        }
    }
    Image::new(h, w, c, out).expect("dimensions preserved")
}

/// Map every value to `255 - v`.
pub fn invert(img: &Image) -> Image {
    let (h, w, c) = img.dims();
    let data = img.data().iter().map(|&v| 255 - v).collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

/// Add a constant shift, clamped.
pub fn brightness_shift(img: &Image, shift: f64) -> Image {
    let (h, w, c) = img.dims();
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_round_u8(v as f64 + shift))
        .collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

/// Scale contrast about the mid-point: `(v - 128) * factor + 128`, clamped.
pub fn contrast_scale(img: &Image, factor: f64) -> Image {
    let (h, w, c) = img.dims();
    let data = img
        .data()
        .iter()
        .map(|&v| clamp_round_u8((v as f64 - 128.0) * factor + 128.0))
        .collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}
