//! Dataset synthesis and file formats: the procedural shapes dataset,
//! CIFAR-10 binary records, binary PPM/PGM images, and the
//! directory-plus-manifest dataset layout.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::{derive_seed, Image, Rng};

// ---------------------------------------------------------------------------
// Procedural shapes dataset
// ---------------------------------------------------------------------------

#[derive(Clone, Copy)]
enum ShapeKind {
    Square,
    Circle,
    Triangle,
    Frame,
    Cross,
}

const SHAPES: [ShapeKind; 5] = [
    ShapeKind::Square,
    ShapeKind::Circle,
    ShapeKind::Triangle,
    ShapeKind::Frame,
    ShapeKind::Cross,
];

const PALETTE: [[u8; 3]; 10] = [
    [230, 60, 60],
    [60, 200, 70],
    [70, 90, 230],
    [235, 220, 80],
    [200, 80, 210],
    [70, 210, 210],
    [240, 240, 240],
    [240, 150, 60],
    [120, 230, 150],
    [160, 160, 245],
];

const GRAYS: [u8; 10] = [235, 200, 170, 140, 110, 250, 215, 185, 155, 125];

fn shape_hit(kind: ShapeKind, dy: f64, dx: f64, radius: f64) -> bool {
    match kind {
        ShapeKind::Square => dy.abs() <= radius && dx.abs() <= radius,
        ShapeKind::Circle => dy * dy + dx * dx <= radius * radius,
        ShapeKind::Triangle => {
            // upward-pointing filled triangle
            let t = (dy + radius) / (2.0 * radius);
            (0.0..=1.0).contains(&t) && dx.abs() <= t * radius
        }
        ShapeKind::Frame => {
            let m = dy.abs().max(dx.abs());
            m <= radius && m >= 0.55 * radius
        }
        ShapeKind::Cross => {
            dy.abs().max(dx.abs()) <= radius && (dy.abs() <= radius / 3.0 || dx.abs() <= radius / 3.0)
        }
    }
}

/// Procedurally drawn colored geometric shapes: class `k` pairs shape
/// `k % 5` with a palette color, drawn over dim background noise with a
/// small jitter in position and size. Labels round-robin over classes, so
/// counts are balanced within one. Deterministic per seed.
pub fn gen_shapes_dataset(
    n: usize,
    num_classes: usize,
    dims: (usize, usize, usize),
    seed: u64,
) -> Result<LabeledDataset> {
    let (h, w, c) = dims;
    if num_classes < 2 {
        return Err(Error::invalid("shapes dataset needs at least 2 classes"));
    }
    if n < num_classes {
        return Err(Error::invalid("need at least one sample per class"));
    }
    if num_classes > SHAPES.len() * PALETTE.len() {
        return Err(Error::invalid(format!(
            "at most {} shape/color classes available",
            SHAPES.len() * PALETTE.len()
        )));
    }
    if h < 8 || w < 8 {
        return Err(Error::invalid("shapes need at least 8x8 images"));
    }

    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % num_classes;
        // injective (shape, color) assignment with distinct colors for the
        // first 10 classes, so classes stay separable under heavy
        // geometric augmentation
        let color_idx = label % PALETTE.len();
        let kind = SHAPES[(label % SHAPES.len() + label / PALETTE.len()) % SHAPES.len()];
        let mut rng = Rng::new(derive_seed(seed, "shapes", i as u64));

        let jitter = (h.min(w) / 10).max(1) as f64;
        let cy = h as f64 / 2.0 + rng.uniform(-jitter, jitter);
        let cx = w as f64 / 2.0 + rng.uniform(-jitter, jitter);
        let radius = h.min(w) as f64 * rng.uniform(0.28, 0.36);

        let mut data = vec![0u8; h * w * c];
        for px in data.iter_mut() {
            *px = rng.below(40) as u8;
        }
        for r in 0..h {
            for col in 0..w {
                if shape_hit(kind, r as f64 - cy, col as f64 - cx, radius) {
                    let at = (r * w + col) * c;
                    if c == 3 {
                        data[at..at + 3].copy_from_slice(&PALETTE[color_idx]);
                    } else {
                        data[at] = GRAYS[color_idx];
                    }
                }
            }
        }
        images.push(Image::new(h, w, c, data)?);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, num_classes)
}

// ---------------------------------------------------------------------------
// CIFAR-10 binary format
// ---------------------------------------------------------------------------

const CIFAR_RECORD: usize = 3073;
const CIFAR_SIDE: usize = 32;
const CIFAR_PLANE: usize = CIFAR_SIDE * CIFAR_SIDE;

/// Parse CIFAR-10 binary records: 1 label byte then 3072 pixel bytes in
/// planar R,G,B row-major 32x32 order, converted to interleaved images.
pub fn load_cifar10_binary(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.is_empty() || bytes.len() % CIFAR_RECORD != 0 {
        return Err(Error::format(format!(
            "file length {} is not a positive multiple of {CIFAR_RECORD}",
            bytes.len()
        )));
    }
    let count = bytes.len() / CIFAR_RECORD;
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for rec in bytes.chunks_exact(CIFAR_RECORD) {
        let label = rec[0];
        if label > 9 {
            return Err(Error::format(format!("label byte {label} exceeds 9")));
        }
        let mut data = vec![0u8; CIFAR_PLANE * 3];
        for i in 0..CIFAR_PLANE {
            data[i * 3] = rec[1 + i];
            data[i * 3 + 1] = rec[1 + CIFAR_PLANE + i];
            data[i * 3 + 2] = rec[1 + 2 * CIFAR_PLANE + i];
        }
        images.push(Image::new(CIFAR_SIDE, CIFAR_SIDE, 3, data)?);
        labels.push(label as usize);
    }
    LabeledDataset::new(images, labels, 10)
}

/// Write a dataset as CIFAR-10 binary records; requires 32x32x3 images and
/// labels below 10.
pub fn save_cifar10_binary(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    if ds.dims() != (CIFAR_SIDE, CIFAR_SIDE, 3) {
        return Err(Error::invalid("CIFAR-10 binary requires 32x32x3 images"));
    }
    if ds.labels().iter().any(|&l| l > 9) {
        return Err(Error::invalid("CIFAR-10 binary requires labels in [0, 9]"));
    }
    let mut bytes = Vec::with_capacity(ds.len() * CIFAR_RECORD);
    for (img, label) in ds.iter() {
        bytes.push(label as u8);
        let data = img.data();
        for plane in 0..3 {
            for i in 0..CIFAR_PLANE {
                bytes.push(data[i * 3 + plane]);
            }
        }
    }
    fs::write(path.as_ref(), bytes)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PPM (P6) / PGM (P5)
// ---------------------------------------------------------------------------

/// Write a binary netpbm image: P6 for 3-channel, P5 for single-channel.
pub fn save_netpbm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let (h, w, c) = img.dims();
    let magic = if c == 3 { "P6" } else { "P5" };
    let mut out = Vec::with_capacity(img.data().len() + 32);
    write!(&mut out, "{magic}\n{w} {h}\n255\n").expect("header writes");
    out.extend_from_slice(img.data());
    fs::write(path.as_ref(), out)?;
    Ok(())
}

fn netpbm_token(bytes: &[u8], at: &mut usize) -> Result<usize> {
    // skip whitespace and '#' comment lines
    loop {
        while *at < bytes.len() && bytes[*at].is_ascii_whitespace() {
            *at += 1;
        }
        if *at < bytes.len() && bytes[*at] == b'#' {
            while *at < bytes.len() && bytes[*at] != b'\n' {
                *at += 1;
            }
        } else {
            break;
        }
    }
    let start = *at;
    while *at < bytes.len() && bytes[*at].is_ascii_digit() {
        *at += 1;
    }
    if start == *at {
        return Err(Error::format("netpbm header: expected an integer"));
    }
    std::str::from_utf8(&bytes[start..*at])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::format("netpbm header: bad integer"))
}

/// Read a binary P6 (3-channel) or P5 (single-channel) netpbm image with
/// maxval 255.
pub fn load_netpbm(path: impl AsRef<Path>) -> Result<Image> {
    let bytes = fs::read(path.as_ref())?;
    if bytes.len() < 2 {
        return Err(Error::format("netpbm file too short"));
    }
    let channels = match &bytes[..2] {
        b"P6" => 3,
        b"P5" => 1,
        _ => return Err(Error::format("not a binary P5/P6 netpbm file")),
    };
    let mut at = 2;
    let w = netpbm_token(&bytes, &mut at)?;
    let h = netpbm_token(&bytes, &mut at)?;
    let maxval = netpbm_token(&bytes, &mut at)?;
    if maxval != 255 {
        return Err(Error::format(format!("unsupported maxval {maxval}")));
    }
    // exactly one whitespace byte separates the header from pixel data
    if at >= bytes.len() || !bytes[at].is_ascii_whitespace() {
        return Err(Error::format("netpbm header not terminated"));
    }
    at += 1;
    let expected = h * w * channels;
    if bytes.len() - at != expected {
        return Err(Error::format(format!(
            "netpbm payload is {} bytes, expected {expected}",
            bytes.len() - at
        )));
    }
    Image::new(h, w, channels, bytes[at..].to_vec())
}

// ---------------------------------------------------------------------------
// Dataset directory: images + labels manifest
// ---------------------------------------------------------------------------

/// Manifest file name inside a dataset directory.
pub const MANIFEST_NAME: &str = "labels.txt";

/// Write every image as a numbered netpbm file plus a `labels.txt`
/// manifest of `filename,label` lines.
pub fn save_dataset_dir(ds: &LabeledDataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let ext = if ds.dims().2 == 3 { "ppm" } else { "pgm" };
    let mut manifest = String::new();
    for (i, (img, label)) in ds.iter().enumerate() {
        let name = format!("{i:06}.{ext}");
        save_netpbm(img, dir.join(&name))?;
        manifest.push_str(&format!("{name},{label}\n"));
    }
    fs::write(dir.join(MANIFEST_NAME), manifest)?;
    Ok(())
}

/// Load a dataset directory written by [`save_dataset_dir`] (or assembled
/// by hand: netpbm files plus a manifest). The class count defaults to
/// `max label + 1` unless given.
pub fn load_dataset_dir(dir: impl AsRef<Path>, num_classes: Option<usize>) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join(MANIFEST_NAME))?;
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in manifest.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (name, label) = line.split_once(',').ok_or_else(|| {
            Error::format(format!("manifest line {}: expected `filename,label`", lineno + 1))
        })?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::format(format!("manifest line {}: bad label", lineno + 1)))?;
        images.push(load_netpbm(dir.join(name.trim()))?);
        labels.push(label);
    }
    if images.is_empty() {
        return Err(Error::format("manifest lists no samples"));
    }
    let k = num_classes.unwrap_or_else(|| labels.iter().max().unwrap() + 1);
    LabeledDataset::new(images, labels, k.max(2))
}
