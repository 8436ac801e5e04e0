//! Clean accuracy (ACC) and attack success rate (ASR).
//!
//! ACC is the fraction of clean samples whose (optionally preprocessed)
//! prediction equals the true label. ASR patches every evaluation sample
//! with the attack trigger and counts predictions equal to the attack's
//! mapped label; for single-target attacks, samples already belonging to
//! the target class are excluded. Both are exact ratios of sample counts.
//!
//! Stochastic preprocessing draws once per sample from a generator seeded
//! by `(run seed, sample index)`, so parallel and serial evaluation are
//! bit-identical.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{apply_trigger, AttackInstance, LabelMap};
use crate::augment::{apply_policy, Policy, Registry};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::{derive_seed, Image, Rng};
use crate::model::Classifier;

/// Exact evaluation counts plus the derived ACC/ASR ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: f64,
    pub asr: f64,
    pub n_clean: usize,
    pub n_clean_correct: usize,
    pub n_triggered: usize,
    pub n_attack_success: usize,
    /// Row-major `K x K` clean-evaluation counts: `confusion[true * K + predicted]`.
    pub confusion: Vec<u32>,
    pub num_classes: usize,
}

fn preprocess_sample(
    img: &Image,
    preprocess: Option<&Policy>,
    registry: &Registry,
    seed: u64,
    index: usize,
) -> Result<Image> {
    match preprocess {
        None => Ok(img.clone()),
        Some(policy) => {
            let mut rng = Rng::new(derive_seed(seed, "preprocess", index as u64));
            apply_policy(policy, img, registry, &mut rng)
        }
    }
}

/// Fraction of samples predicted as their true label.
pub fn accuracy<M: Classifier>(
    model: &M,
    ds: &LabeledDataset,
    preprocess: Option<&Policy>,
    registry: &Registry,
    seed: u64,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::invalid("accuracy over an empty dataset"));
    }
    let correct: Result<Vec<bool>> = (0..ds.len())
        .into_par_iter()
        .map(|i| {
            let img = preprocess_sample(ds.image(i), preprocess, registry, seed, i)?;
            Ok(model.predict(&img)? == ds.label(i))
        })
        .collect();
    let correct = correct?;
    Ok(correct.iter().filter(|&&c| c).count() as f64 / ds.len() as f64)
}

/// Fraction of trigger-patched samples predicted as the attack's mapped
/// label. Single-target attacks exclude samples whose true label already
/// equals the target.
pub fn attack_success_rate<M: Classifier>(
    model: &M,
    clean_ds: &LabeledDataset,
    inst: &AttackInstance,
    preprocess: Option<&Policy>,
    registry: &Registry,
    seed: u64,
) -> Result<f64> {
    if clean_ds.is_empty() {
        return Err(Error::invalid("attack success rate over an empty dataset"));
    }
    let included: Vec<usize> = match inst.labels {
        LabelMap::SingleTarget { target } => (0..clean_ds.len())
            .filter(|&i| clean_ds.label(i) != target)
            .collect(),
        LabelMap::AllToAll => (0..clean_ds.len()).collect(),
    };
    if included.is_empty() {
        return Err(Error::invalid(
            "target-class exclusion removed every evaluation sample",
        ));
    }
    let hits: Result<Vec<bool>> = included
        .par_iter()
        .map(|&i| {
            let patched = apply_trigger(clean_ds.image(i), &inst.trigger)?;
            let img = preprocess_sample(&patched, preprocess, registry, seed, i)?;
            let desired = inst.labels.apply(clean_ds.label(i), clean_ds.num_classes());
            Ok(model.predict(&img)? == desired)
        })
        .collect();
    let hits = hits?;
    Ok(hits.iter().filter(|&&h| h).count() as f64 / included.len() as f64)
}

/// Evaluate ACC (clean) and ASR (trigger-patched) with a shared optional
/// preprocessing policy, collecting the clean confusion counts.
pub fn evaluate<M: Classifier>(
    model: &M,
    clean_ds: &LabeledDataset,
    inst: &AttackInstance,
    preprocess: Option<&Policy>,
    registry: &Registry,
    seed: u64,
) -> Result<EvalReport> {
    if clean_ds.is_empty() {
        return Err(Error::invalid("evaluation over an empty dataset"));
    }
    let k = clean_ds.num_classes();

    let clean_preds: Result<Vec<usize>> = (0..clean_ds.len())
        .into_par_iter()
        .map(|i| {
            let img = preprocess_sample(clean_ds.image(i), preprocess, registry, seed, i)?;
            model.predict(&img)
        })
        .collect();
    let clean_preds = clean_preds?;
    let mut confusion = vec![0u32; k * k];
    let mut n_clean_correct = 0;
    for (i, &pred) in clean_preds.iter().enumerate() {
        let truth = clean_ds.label(i);
        confusion[truth * k + pred] += 1;
        if pred == truth {
            n_clean_correct += 1;
        }
    }

    let included: Vec<usize> = match inst.labels {
        LabelMap::SingleTarget { target } => (0..clean_ds.len())
            .filter(|&i| clean_ds.label(i) != target)
            .collect(),
        LabelMap::AllToAll => (0..clean_ds.len()).collect(),
    };
    if included.is_empty() {
        return Err(Error::invalid(
            "target-class exclusion removed every evaluation sample",
        ));
    }
    let hits: Result<Vec<bool>> = included
        .par_iter()
        .map(|&i| {
            let patched = apply_trigger(clean_ds.image(i), &inst.trigger)?;
            let img = preprocess_sample(&patched, preprocess, registry, seed, i)?;
            let desired = inst.labels.apply(clean_ds.label(i), k);
            Ok(model.predict(&img)? == desired)
        })
        .collect();
    let n_attack_success = hits?.iter().filter(|&&h| h).count();

    Ok(EvalReport {
        acc: n_clean_correct as f64 / clean_ds.len() as f64,
        asr: n_attack_success as f64 / included.len() as f64,
        n_clean: clean_ds.len(),
        n_clean_correct,
        n_triggered: included.len(),
        n_attack_success,
        confusion,
        num_classes: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{AttackRole, TriggerSpec};
    use crate::augment::registry_default;

    /// Fixed-output classifier for metric arithmetic tests.
    struct ConstantModel {
        class: usize,
        k: usize,
    }

    impl Classifier for ConstantModel {
        fn num_classes(&self) -> usize {
            self.k
        }
        fn predict(&self, _img: &Image) -> Result<usize> {
            Ok(self.class)
        }
    }

    /// Predicts the label stored in pixel (0, 0, 0).
    struct OracleModel {
        k: usize,
    }

    impl Classifier for OracleModel {
        fn num_classes(&self) -> usize {
            self.k
        }
        fn predict(&self, img: &Image) -> Result<usize> {
            Ok(img.get(0, 0, 0) as usize % self.k)
        }
    }

    fn balanced_dataset(n: usize, k: usize) -> LabeledDataset {
        let images = (0..n)
            .map(|i| {
                let mut img = Image::filled(8, 8, 1, 100).unwrap();
                img.set(0, 0, 0, (i % k) as u8);
                img
            })
            .collect();
        let labels = (0..n).map(|i| i % k).collect();
        LabeledDataset::new(images, labels, k).unwrap()
    }

    fn square_attack(target: usize) -> AttackInstance {
        AttackInstance::new(
            "badnets",
            TriggerSpec::SolidSquare {
                size: 3,
                color: vec![255],
            },
            LabelMap::SingleTarget { target },
            0.1,
            AttackRole::Validation,
        )
        .unwrap()
    }

    #[test]
    fn oracle_model_scores_full_accuracy() {
        let reg = registry_default();
        let ds = balanced_dataset(40, 4);
        let model = OracleModel { k: 4 };
        assert_eq!(accuracy(&model, &ds, None, &reg, 0).unwrap(), 1.0);
    }

    #[test]
    fn constant_model_scores_one_over_k() {
        let reg = registry_default();
        let ds = balanced_dataset(40, 4);
        let model = ConstantModel { class: 2, k: 4 };
        assert_eq!(accuracy(&model, &ds, None, &reg, 0).unwrap(), 0.25);
    }

    #[test]
    fn constant_target_model_has_full_asr() {
        let reg = registry_default();
        let ds = balanced_dataset(40, 4);
        let model = ConstantModel { class: 1, k: 4 };
        let asr = attack_success_rate(&model, &ds, &square_attack(1), None, &reg, 0).unwrap();
        assert_eq!(asr, 1.0);
    }

    #[test]
    fn single_target_excludes_target_class_samples() {
        let reg = registry_default();
        let ds = balanced_dataset(40, 4);
        let model = OracleModel { k: 4 };
        // oracle predicts the embedded true label, so no patched sample is
        // ever predicted as the target (its own class was excluded)
        let asr = attack_success_rate(&model, &ds, &square_attack(3), None, &reg, 0).unwrap();
        assert_eq!(asr, 0.0);
        let report = evaluate(&model, &ds, &square_attack(3), None, &reg, 0).unwrap();
        assert_eq!(report.n_triggered, 30);
        assert_eq!(report.n_clean, 40);
    }

    #[test]
    fn exclusion_emptying_the_set_is_an_error() {
        let reg = registry_default();
        let images = (0..4).map(|_| Image::filled(8, 8, 1, 7).unwrap()).collect();
        let ds = LabeledDataset::new(images, vec![1; 4], 3).unwrap();
        let model = ConstantModel { class: 1, k: 3 };
        assert!(attack_success_rate(&model, &ds, &square_attack(1), None, &reg, 0).is_err());
    }

    #[test]
    fn deterministic_identity_preprocess_matches_bare_metrics() {
        let reg = registry_default();
        let ds = balanced_dataset(30, 3);
        let model = OracleModel { k: 3 };
        // gamma 1 with kernel 1 is the identity transform
        let mut step = crate::augment::PolicyStep {
            id: "GCSM".to_string(),
            params: Default::default(),
        };
        step.params.insert("gamma".to_string(), 1.0);
        step.params.insert("kernel".to_string(), 1.0);
        let identity = Policy::new(vec![step]);
        let bare = accuracy(&model, &ds, None, &reg, 5).unwrap();
        let pre = accuracy(&model, &ds, Some(&identity), &reg, 5).unwrap();
        assert_eq!(bare, pre);
    }

    #[test]
    fn ratios_are_exact_counts() {
        let reg = registry_default();
        let ds = balanced_dataset(40, 4);
        let model = ConstantModel { class: 0, k: 4 };
        let report = evaluate(&model, &ds, &square_attack(0), None, &reg, 0).unwrap();
        assert_eq!(report.acc * report.n_clean as f64, report.n_clean_correct as f64);
        assert_eq!(
            report.asr * report.n_triggered as f64,
            report.n_attack_success as f64
        );
        let total: u32 = report.confusion.iter().sum();
        assert_eq!(total as usize, report.n_clean);
    }

    #[test]
    fn stochastic_preprocess_is_seed_deterministic() {
        let reg = registry_default();
        let ds = balanced_dataset(20, 4);
        let model = OracleModel { k: 4 };
        let policy = Policy::from_ids(["SAT"]);
        let a = accuracy(&model, &ds, Some(&policy), &reg, 9).unwrap();
        let b = accuracy(&model, &ds, Some(&policy), &reg, 9).unwrap();
        assert_eq!(a, b);
    }
}
