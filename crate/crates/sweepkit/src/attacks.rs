//! Trigger synthesis and dataset poisoning: solid-square patches, blended
//! watermarks, and norm-bounded perturbation triggers, with single-target
//! and all-to-all label maps.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::{clamp_round_u8, derive_seed, Image, Rng};
use crate::model::{Classifier, TinyClassifier};

/// Norm bounding a perturbation trigger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    /// Count of nonzero pixel positions.
    L0,
    /// Euclidean norm of all offsets.
    L2,
}

/// The trigger pattern an attack stamps onto samples.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerSpec {
    /// Overwrite the `size x size` bottom-right block with a color.
    SolidSquare { size: usize, color: Vec<u8> },
    /// Blend a full-frame mask: `round((1 - alpha) * img + alpha * mask)`.
    Watermark { mask: Image, alpha: f64 },
    /// Add signed per-value offsets, clamped to `[0, 255]`.
    Perturbation {
        /// One offset per image byte, row-major, channel-interleaved.
        pattern: Vec<i16>,
        height: usize,
        width: usize,
        channels: usize,
        norm: NormKind,
        budget: f64,
    },
}

impl TriggerSpec {
    /// Check the trigger against the images it will be applied to.
    pub fn validate(&self, dims: (usize, usize, usize)) -> Result<()> {
        let (h, w, c) = dims;
        match self {
            TriggerSpec::SolidSquare { size, color } => {
                if *size == 0 || *size > h.min(w) {
                    return Err(Error::invalid(format!(
                        "square size {size} does not fit a {h}x{w} image"
                    )));
                }
                if color.len() != c {
                    return Err(Error::invalid(format!(
                        "square color has {} channels, image has {c}",
                        color.len()
                    )));
                }
            }
            TriggerSpec::Watermark { mask, alpha } => {
                if mask.dims() != dims {
                    return Err(Error::invalid("watermark mask dimensions do not match"));
                }
                if !(*alpha > 0.0 && *alpha <= 1.0) {
                    return Err(Error::invalid("watermark alpha must be in (0, 1]"));
                }
            }
            TriggerSpec::Perturbation {
                pattern,
                height,
                width,
                channels,
                norm,
                budget,
            } => {
                if (*height, *width, *channels) != dims {
                    return Err(Error::invalid("perturbation dimensions do not match"));
                }
                if pattern.len() != h * w * c {
                    return Err(Error::invalid("perturbation pattern length mismatch"));
                }
                match norm {
                    NormKind::L0 => {
                        let nonzero = nonzero_positions(pattern, c);
                        if nonzero as f64 > *budget {
                            return Err(Error::invalid(format!(
                                "L0 pattern touches {nonzero} pixels, budget {budget}"
                            )));
                        }
                    }
                    NormKind::L2 => {
                        let norm2 = l2_norm(pattern);
                        if norm2 > *budget + 1e-9 {
                            return Err(Error::invalid(format!(
                                "L2 pattern norm {norm2:.3} exceeds budget {budget}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

fn nonzero_positions(pattern: &[i16], channels: usize) -> usize {
    pattern
        .chunks(channels)
        .filter(|px| px.iter().any(|&v| v != 0))
        .count()
}

fn l2_norm(pattern: &[i16]) -> f64 {
    pattern
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}

/// How poisoned samples are relabeled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum LabelMap {
    SingleTarget { target: usize },
    /// Class `i` maps to `(i + 1) mod K`.
    AllToAll,
}

impl LabelMap {
    pub fn apply(&self, label: usize, num_classes: usize) -> usize {
        match self {
            LabelMap::SingleTarget { target } => *target,
            LabelMap::AllToAll => (label + 1) % num_classes,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if let LabelMap::SingleTarget { target } = self {
            if *target >= num_classes {
                return Err(Error::invalid(format!(
                    "target {target} out of range for {num_classes} classes"
                )));
            }
        }
        Ok(())
    }
}

/// Whether an attack is used to search for policies or to validate them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackRole {
    Search,
    Validation,
}

/// One attack: a trigger, a label map, a poisoning ratio and its role.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackInstance {
    pub name: String,
    pub trigger: TriggerSpec,
    pub labels: LabelMap,
    pub poison_ratio: f64,
    pub role: AttackRole,
}

impl AttackInstance {
    pub fn new(
        name: impl Into<String>,
        trigger: TriggerSpec,
        labels: LabelMap,
        poison_ratio: f64,
        role: AttackRole,
    ) -> Result<Self> {
        if !(poison_ratio > 0.0 && poison_ratio < 1.0) {
            return Err(Error::invalid(format!(
                "poison ratio must be in (0, 1), got {poison_ratio}"
            )));
        }
        Ok(AttackInstance {
            name: name.into(),
            trigger,
            labels,
            poison_ratio,
            role,
        })
    }
}

/// Stamp the trigger onto one image.
pub fn apply_trigger(img: &Image, spec: &TriggerSpec) -> Result<Image> {
    spec.validate(img.dims())?;
    let (h, w, c) = img.dims();
    match spec {
        TriggerSpec::SolidSquare { size, color } => {
            let mut out = img.clone();
            for r in h - size..h {
                for col in w - size..w {
                    for ch in 0..c {
                        out.set(r, col, ch, color[ch]);
                    }
                }
            }
            Ok(out)
        }
        TriggerSpec::Watermark { mask, alpha } => {
            let data = img
                .data()
                .iter()
                .zip(mask.data())
                .map(|(&v, &m)| clamp_round_u8((1.0 - alpha) * v as f64 + alpha * m as f64))
                .collect();
            Image::new(h, w, c, data)
        }
        TriggerSpec::Perturbation { pattern, .. } => {
            let data = img
                .data()
                .iter()
                .zip(pattern)
                .map(|(&v, &p)| (v as i32 + p as i32).clamp(0, 255) as u8)
                .collect();
            Image::new(h, w, c, data)
        }
    }
}

/// Deterministic text-like watermark tile: rows of short horizontal
/// strokes arranged in a glyph grid, white on black.
pub fn watermark_mask(dims: (usize, usize, usize), seed: u64) -> Image {
    let (h, w, c) = dims;
    let mut out = vec![0u8; h * w * c];
    let cell = 6; // glyph cell in pixels
    for r in 0..h {
        for col in 0..w {
            let (gy, gx) = (r / cell, col / cell);
            let (iy, ix) = (r % cell, col % cell);
            // per-glyph stroke pattern from the seed
            let mut rng = Rng::new(derive_seed(seed, "glyph", (gy * 131 + gx) as u64));
            let rows_mask = rng.next_u64();
            // strokes occupy interior rows, skip the cell border
            let lit = iy >= 1
                && iy + 1 < cell
                && ix >= 1
                && ix + 1 < cell
                && (rows_mask >> (iy % 60)) & 1 == 1
                && !(ix == cell / 2 && (rows_mask >> ((iy + 7) % 60)) & 1 == 1);
            if lit {
                for ch in 0..c {
                    out[(r * w + col) * c + ch] = 255;
                }
            }
        }
    }
    Image::new(h, w, c, out).expect("valid dimensions")
}

/// Options for the model-guided perturbation trigger.
pub struct GradientTriggerOpts<'a> {
    pub model: &'a TinyClassifier,
    pub batch: &'a LabeledDataset,
    pub target: usize,
    pub iterations: usize,
    /// L2 length of each normalized descent step, as a fraction of the
    /// budget.
    pub step_fraction: f64,
}

impl<'a> GradientTriggerOpts<'a> {
    pub fn new(model: &'a TinyClassifier, batch: &'a LabeledDataset, target: usize) -> Self {
        GradientTriggerOpts {
            model,
            batch,
            target,
            iterations: 30,
            step_fraction: 0.2,
        }
    }
}

/// Generate a norm-bounded perturbation trigger.
///
/// Without a model, the pattern is a seeded random draw projected onto the
/// norm ball: L2 scales to the budget, L0 keeps the budget-many
/// largest-magnitude pixel positions inside the bottom-right quadrant.
/// With a model, the pattern descends the model's cross-entropy toward the
/// target class over a clean batch for a fixed iteration count, projecting
/// onto the ball each step.
pub fn make_perturbation_trigger(
    norm: NormKind,
    budget: f64,
    dims: (usize, usize, usize),
    rng: &mut Rng,
    grad: Option<&GradientTriggerOpts>,
) -> Result<TriggerSpec> {
    if budget <= 0.0 {
        return Err(Error::invalid("perturbation budget must be > 0"));
    }
    let (h, w, c) = dims;
    let len = h * w * c;

    let mut real: Vec<f64> = match norm {
        NormKind::L2 => {
            let mut v: Vec<f64> = (0..len).map(|_| rng.uniform(-1.0, 1.0)).collect();
            concentrate_l2(&mut v, budget);
            v
        }
        NormKind::L0 => {
            // draw candidate offsets only inside the bottom-right quadrant
            let mut v = vec![0.0; len];
            for r in h / 2..h {
                for col in w / 2..w {
                    for ch in 0..c {
                        v[(r * w + col) * c + ch] = rng.uniform(-128.0, 128.0);
                    }
                }
            }
            project(&mut v, NormKind::L0, budget, c, w);
            v
        }
    };

    if let Some(opts) = grad {
        if opts.target >= opts.model.num_classes() {
            return Err(Error::invalid("gradient trigger target out of range"));
        }
        let step = budget * opts.step_fraction;
        for _ in 0..opts.iterations {
            let patched: Vec<Image> = opts
                .batch
                .images()
                .iter()
                .map(|img| add_real_pattern(img, &real))
                .collect();
            let refs: Vec<&Image> = patched.iter().collect();
            let grad_vec = opts.model.input_gradient(&refs, opts.target)?;
            let norm2 = grad_vec.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm2 <= 0.0 {
                break;
            }
            // normalized descent step toward the target class
            for (p, g) in real.iter_mut().zip(&grad_vec) {
                *p -= step * g / norm2;
            }
            project(&mut real, norm, budget, c, w);
        }
        if norm == NormKind::L2 {
            concentrate_l2(&mut real, budget);
        }
    }

    // integer offsets truncate toward zero, so projections still hold
    let pattern: Vec<i16> = real.iter().map(|&v| v.trunc().clamp(-255.0, 255.0) as i16).collect();
    let spec = TriggerSpec::Perturbation {
        pattern,
        height: h,
        width: w,
        channels: c,
        norm,
        budget,
    };
    spec.validate(dims)?;
    Ok(spec)
}

/// Integer offsets need per-entry magnitudes of a few counts to be
/// learnable, so small budgets concentrate onto the largest-magnitude
/// entries before scaling the L2 norm to the budget exactly.
fn concentrate_l2(pattern: &mut [f64], budget: f64) {
    let len = pattern.len();
    let target_entries = (((budget / 8.0).powi(2)).ceil() as usize).clamp(1, len);
    if target_entries < len {
        let mut order: Vec<usize> = (0..len).collect();
        order.sort_by(|&a, &b| {
            pattern[b]
                .abs()
                .partial_cmp(&pattern[a].abs())
                .unwrap()
                .then(a.cmp(&b))
        });
        for &i in &order[target_entries..] {
            pattern[i] = 0.0;
        }
    }
    let n = pattern.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        let scale = budget / n;
        for x in pattern.iter_mut() {
            *x *= scale;
        }
    }
}

fn add_real_pattern(img: &Image, pattern: &[f64]) -> Image {
    let (h, w, c) = img.dims();
    let data = img
        .data()
        .iter()
        .zip(pattern)
        .map(|(&v, &p)| (v as f64 + p).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(h, w, c, data).expect("dimensions preserved")
}

fn project(pattern: &mut [f64], norm: NormKind, budget: f64, channels: usize, _width: usize) {
    match norm {
        NormKind::L2 => {
            let n: f64 = pattern.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > budget && n > 0.0 {
                let scale = budget / n;
                for v in pattern.iter_mut() {
                    *v *= scale;
                }
            }
        }
        NormKind::L0 => {
            let keep = budget.floor() as usize;
            let positions = pattern.len() / channels;
            let mut scored: Vec<(usize, f64)> = (0..positions)
                .map(|i| {
                    let score = (0..channels)
                        .map(|ch| pattern[i * channels + ch].abs())
                        .fold(0.0f64, f64::max);
                    (i, score)
                })
                .filter(|&(_, s)| s > 0.0)
                .collect();
            scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let kept: std::collections::HashSet<usize> =
                scored.iter().take(keep).map(|&(i, _)| i).collect();
            for i in 0..positions {
                if !kept.contains(&i) {
                    for ch in 0..channels {
                        pattern[i * channels + ch] = 0.0;
                    }
                }
            }
        }
    }
}

/// Poison `floor(ratio * N)` samples chosen uniformly without replacement:
/// stamp the trigger and rewrite the label. Returns the poisoned copy and
/// the chosen indices in ascending order.
pub fn poison_dataset(
    ds: &LabeledDataset,
    inst: &AttackInstance,
    rng: &mut Rng,
) -> Result<(LabeledDataset, Vec<usize>)> {
    inst.trigger.validate(ds.dims())?;
    inst.labels.validate(ds.num_classes())?;
    let count = (inst.poison_ratio * ds.len() as f64).floor() as usize;
    if count < 1 {
        return Err(Error::invalid(format!(
            "ratio {} of {} samples poisons nothing",
            inst.poison_ratio,
            ds.len()
        )));
    }
    let mut pool: Vec<usize> = (0..ds.len()).collect();
    for i in 0..count {
        let j = i + rng.below((pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    let mut chosen = pool[..count].to_vec();
    chosen.sort_unstable();

    let replacements: Result<Vec<(usize, Image, usize)>> = chosen
        .par_iter()
        .map(|&i| {
            let img = apply_trigger(ds.image(i), &inst.trigger)?;
            let label = inst.labels.apply(ds.label(i), ds.num_classes());
            Ok((i, img, label))
        })
        .collect();
    let poisoned = ds.with_replaced(replacements?)?;
    Ok((poisoned, chosen))
}

/// The desk-scale attack database: eight instances mirroring the usual
/// benchmark mix — trojan watermarks and squares, BadNets squares in
/// single-target and all-to-all modes, and L0/L2 perturbation triggers.
/// Three instances are search, five are validation; perturbation attacks
/// poison 5%, everything else 10%. Target labels wrap into `[0, K)`.
pub fn attack_db_default(dims: (usize, usize, usize), num_classes: usize) -> Result<Vec<AttackInstance>> {
    if num_classes < 2 {
        return Err(Error::invalid("attack database needs at least 2 classes"));
    }
    let (h, w, c) = dims;
    if h.min(w) < 8 {
        return Err(Error::invalid("attack database needs images of at least 8x8"));
    }
    let target = |t: usize| LabelMap::SingleTarget {
        target: t % num_classes,
    };
    let white = vec![255u8; c];
    let magenta: Vec<u8> = if c == 3 { vec![255, 0, 255] } else { vec![255] };
    let cyan: Vec<u8> = if c == 3 { vec![0, 255, 255] } else { vec![200] };

    let l2_budget = 11.0 * ((h * w * c) as f64).sqrt();
    let l0_budget = ((h * w) as f64 / 42.0).floor().max(4.0);
    let mut l2_rng = Rng::new(derive_seed(0x5EED_AB1E, "l2-trigger", 0));
    let mut l0_rng = Rng::new(derive_seed(0x5EED_AB1E, "l0-trigger", 0));

    let instances = vec![
        AttackInstance::new(
            "trojan-wm-val",
            TriggerSpec::Watermark {
                mask: watermark_mask(dims, 1001),
                alpha: 0.2,
            },
            target(7),
            0.10,
            AttackRole::Validation,
        )?,
        AttackInstance::new(
            "trojan-wm-search",
            TriggerSpec::Watermark {
                mask: watermark_mask(dims, 2002),
                alpha: 0.2,
            },
            target(0),
            0.10,
            AttackRole::Search,
        )?,
        AttackInstance::new(
            "trojan-sq-val-a",
            TriggerSpec::SolidSquare {
                size: 5,
                color: magenta,
            },
            target(7),
            0.10,
            AttackRole::Validation,
        )?,
        AttackInstance::new(
            "trojan-sq-val-b",
            TriggerSpec::SolidSquare { size: 5, color: cyan },
            target(0),
            0.10,
            AttackRole::Validation,
        )?,
        AttackInstance::new(
            "badnets-a2a",
            TriggerSpec::SolidSquare {
                size: 5,
                color: white.clone(),
            },
            LabelMap::AllToAll,
            0.10,
            AttackRole::Validation,
        )?,
        AttackInstance::new(
            "badnets-single",
            TriggerSpec::SolidSquare {
                size: 5,
                color: white,
            },
            target(33),
            0.10,
            AttackRole::Validation,
        )?,
        AttackInstance::new(
            "l2-invisible",
            make_perturbation_trigger(NormKind::L2, l2_budget, dims, &mut l2_rng, None)?,
            target(3),
            0.05,
            AttackRole::Search,
        )?,
        AttackInstance::new(
            "l0-invisible",
            make_perturbation_trigger(NormKind::L0, l0_budget, dims, &mut l0_rng, None)?,
            target(4),
            0.05,
            AttackRole::Search,
        )?,
    ];
    Ok(instances)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> Image {
        let mut rng = Rng::new(seed);
        let data: Vec<u8> = (0..h * w * c).map(|_| rng.below(256) as u8).collect();
        Image::new(h, w, c, data).unwrap()
    }

    fn shapes_like_dataset(n: usize, k: usize, seed: u64) -> LabeledDataset {
        let images = (0..n).map(|i| random_image(8, 8, 3, seed + i as u64)).collect();
        let labels = (0..n).map(|i| i % k).collect();
        LabeledDataset::new(images, labels, k).unwrap()
    }

    #[test]
    fn solid_square_overwrites_bottom_right() {
        let img = random_image(32, 32, 3, 1);
        let spec = TriggerSpec::SolidSquare {
            size: 5,
            color: vec![255, 255, 255],
        };
        let out = apply_trigger(&img, &spec).unwrap();
        for r in 0..32 {
            for c in 0..32 {
                let in_block = r >= 27 && c >= 27;
                for ch in 0..3 {
                    if in_block {
                        assert_eq!(out.get(r, c, ch), 255);
                    } else {
                        assert_eq!(out.get(r, c, ch), img.get(r, c, ch));
                    }
                }
            }
        }
        // idempotent
        assert_eq!(apply_trigger(&out, &spec).unwrap(), out);
        // too large for the image
        let huge = TriggerSpec::SolidSquare {
            size: 33,
            color: vec![255, 255, 255],
        };
        assert!(apply_trigger(&img, &huge).is_err());
    }

    #[test]
    fn watermark_blend_limits() {
        let img = random_image(12, 12, 3, 2);
        let mask = watermark_mask((12, 12, 3), 7);
        let spec = TriggerSpec::Watermark {
            mask: mask.clone(),
            alpha: 1e-9,
        };
        assert_eq!(apply_trigger(&img, &spec).unwrap(), img);
        let full = TriggerSpec::Watermark { mask: mask.clone(), alpha: 1.0 };
        assert_eq!(apply_trigger(&img, &full).unwrap(), mask);
        let bad = TriggerSpec::Watermark { mask, alpha: 0.0 };
        assert!(apply_trigger(&img, &bad).is_err());
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let img = random_image(8, 8, 3, 3);
        let spec = TriggerSpec::Perturbation {
            pattern: vec![0; 8 * 8 * 3],
            height: 8,
            width: 8,
            channels: 3,
            norm: NormKind::L2,
            budget: 1.0,
        };
        assert_eq!(apply_trigger(&img, &spec).unwrap(), img);
    }

    #[test]
    fn l2_trigger_respects_budget() {
        let mut rng = Rng::new(4);
        for budget in [10.0, 150.0, 443.0] {
            let spec = make_perturbation_trigger(NormKind::L2, budget, (32, 32, 3), &mut rng, None).unwrap();
            if let TriggerSpec::Perturbation { pattern, .. } = &spec {
                assert!(l2_norm(pattern) <= budget);
                assert!(pattern.iter().any(|&v| v != 0));
            } else {
                panic!("wrong trigger kind");
            }
        }
        assert!(make_perturbation_trigger(NormKind::L2, 0.0, (8, 8, 1), &mut rng, None).is_err());
    }

    #[test]
    fn l0_trigger_respects_budget_and_region() {
        let mut rng = Rng::new(5);
        let spec = make_perturbation_trigger(NormKind::L0, 24.0, (32, 32, 3), &mut rng, None).unwrap();
        if let TriggerSpec::Perturbation { pattern, .. } = &spec {
            assert!(nonzero_positions(pattern, 3) <= 24);
            assert!(nonzero_positions(pattern, 3) > 0);
            // all inside the bottom-right quadrant
            for (i, px) in pattern.chunks(3).enumerate() {
                if px.iter().any(|&v| v != 0) {
                    let (r, c) = (i / 32, i % 32);
                    assert!(r >= 16 && c >= 16, "offset at ({r},{c})");
                }
            }
        } else {
            panic!("wrong trigger kind");
        }
    }

    #[test]
    fn all_to_all_and_single_target_maps() {
        assert_eq!(LabelMap::AllToAll.apply(3, 10), 4);
        assert_eq!(LabelMap::AllToAll.apply(9, 10), 0);
        assert_eq!(LabelMap::SingleTarget { target: 7 }.apply(2, 10), 7);
        assert!(LabelMap::SingleTarget { target: 10 }.validate(10).is_err());
    }

    #[test]
    fn poison_selects_exact_count_deterministically() {
        let ds = shapes_like_dataset(1000, 10, 100);
        let inst = AttackInstance::new(
            "badnets",
            TriggerSpec::SolidSquare {
                size: 5,
                color: vec![255, 255, 255],
            },
            LabelMap::SingleTarget { target: 0 },
            0.10,
            AttackRole::Validation,
        )
        .unwrap();
        let (poisoned_a, idx_a) = poison_dataset(&ds, &inst, &mut Rng::new(9)).unwrap();
        let (poisoned_b, idx_b) = poison_dataset(&ds, &inst, &mut Rng::new(9)).unwrap();
        assert_eq!(idx_a.len(), 100);
        assert_eq!(idx_a, idx_b);
        assert_eq!(poisoned_a, poisoned_b);
        assert_eq!(poisoned_a.len(), ds.len());

        // labels changed exactly on chosen non-target samples
        let changed = (0..ds.len())
            .filter(|&i| poisoned_a.label(i) != ds.label(i))
            .count();
        let collisions = idx_a.iter().filter(|&&i| ds.label(i) == 0).count();
        assert_eq!(changed + collisions, 100);

        // too small a ratio is rejected
        let tiny = shapes_like_dataset(5, 2, 7);
        let mut inst_small = inst.clone();
        inst_small.poison_ratio = 0.1;
        assert!(poison_dataset(&tiny, &inst_small, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn a2a_poisoning_shifts_labels_by_one() {
        let ds = shapes_like_dataset(50, 10, 200);
        let inst = AttackInstance::new(
            "a2a",
            TriggerSpec::SolidSquare {
                size: 3,
                color: vec![255, 255, 255],
            },
            LabelMap::AllToAll,
            0.5,
            AttackRole::Validation,
        )
        .unwrap();
        let (poisoned, idx) = poison_dataset(&ds, &inst, &mut Rng::new(1)).unwrap();
        for &i in &idx {
            assert_eq!(poisoned.label(i), (ds.label(i) + 1) % 10);
        }
    }

    #[test]
    fn default_db_structure() {
        let db = attack_db_default((32, 32, 3), 10).unwrap();
        assert_eq!(db.len(), 8);
        let search = db.iter().filter(|a| a.role == AttackRole::Search).count();
        assert_eq!(search, 3);
        assert_eq!(db.len() - search, 5);
        for inst in &db {
            let expected = if matches!(inst.trigger, TriggerSpec::Perturbation { .. }) {
                0.05
            } else {
                0.10
            };
            assert_eq!(inst.poison_ratio, expected, "{}", inst.name);
            inst.trigger.validate((32, 32, 3)).unwrap();
            inst.labels.validate(10).unwrap();
        }
        // deterministic
        let again = attack_db_default((32, 32, 3), 10).unwrap();
        assert_eq!(db, again);
    }

    #[test]
    fn watermark_mask_is_deterministic_and_textured() {
        let a = watermark_mask((32, 32, 3), 5);
        let b = watermark_mask((32, 32, 3), 5);
        assert_eq!(a, b);
        let lit = a.data().iter().filter(|&&v| v == 255).count();
        assert!(lit > 0 && lit < a.data().len());
        assert_ne!(a, watermark_mask((32, 32, 3), 6));
    }
}
