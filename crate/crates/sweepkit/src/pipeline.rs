//! The two-stage defense pipeline as an artifact: run configuration,
//! dataset/attack materialization, infected-model preparation, the
//! `defend` operation producing a [`DefendedModel`], and the versioned
//! report schema.
//!
//! One master seed determines everything: sub-seeds for data synthesis,
//! poisoning, training, sweeping and defending all derive from it, so a
//! full pipeline run is byte-reproducible.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attacks::{
    attack_db_default, make_perturbation_trigger, poison_dataset, watermark_mask, AttackInstance,
    AttackRole, LabelMap, NormKind, TriggerSpec,
};
use crate::augment::{apply_policy, transform_dataset, Policy, Registry};
use crate::data::{gen_shapes_dataset, load_cifar10_binary, load_dataset_dir};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::{derive_seed, Image, Rng};
use crate::model::{TinyClassifier, TrainConfig};
use crate::sweep::{AttackCase, DefenseReport, SweepConfig};

/// Run-config schema version.
pub const RUN_CONFIG_VERSION: u32 = 1;
/// Report schema version.
pub const REPORT_VERSION: u32 = 1;

/// Where evaluation data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetConfig {
    /// Procedural shapes dataset, synthesized from the master seed.
    Shapes {
        n_train: usize,
        n_test: usize,
        classes: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    /// CIFAR-10 binary files.
    Cifar10 { train_path: String, test_path: String },
    /// Directories of netpbm images with `labels.txt` manifests.
    Dir {
        train_dir: String,
        test_dir: String,
        #[serde(default)]
        classes: Option<usize>,
    },
}

/// Trigger generator: enough to materialize a [`TriggerSpec`] for any
/// image dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TriggerGen {
    SolidSquare { size: usize, color: Vec<u8> },
    Watermark { alpha: f64, seed: u64 },
    Perturbation { norm: NormKind, budget: f64, seed: u64 },
}

/// A serializable attack description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub name: String,
    pub trigger: TriggerGen,
    pub labels: LabelMap,
    pub poison_ratio: f64,
    pub role: AttackRole,
}

impl AttackSpec {
    /// Build the concrete attack for the given image dimensions.
    pub fn materialize(&self, dims: (usize, usize, usize)) -> Result<AttackInstance> {
        let trigger = match &self.trigger {
            TriggerGen::SolidSquare { size, color } => TriggerSpec::SolidSquare {
                size: *size,
                color: color.clone(),
            },
            TriggerGen::Watermark { alpha, seed } => TriggerSpec::Watermark {
                mask: watermark_mask(dims, *seed),
                alpha: *alpha,
            },
            TriggerGen::Perturbation { norm, budget, seed } => {
                let mut rng = Rng::new(derive_seed(*seed, "trigger", 0));
                make_perturbation_trigger(*norm, *budget, dims, &mut rng, None)?
            }
        };
        trigger.validate(dims)?;
        AttackInstance::new(
            self.name.clone(),
            trigger,
            self.labels,
            self.poison_ratio,
            self.role,
        )
    }
}

/// Which attacks a run exercises.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttacksConfig {
    /// The built-in eight-instance database.
    Default,
    List { attacks: Vec<AttackSpec> },
}

/// Everything a run needs: data source, attacks, training and sweep
/// parameters, and the master seed all sub-seeds derive from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub version: u32,
    pub seed: u64,
    pub dataset: DatasetConfig,
    pub attacks: AttacksConfig,
    pub train: TrainConfig,
    pub sweep: SweepConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: RUN_CONFIG_VERSION,
            seed: 42,
            dataset: DatasetConfig::Shapes {
                n_train: 2000,
                n_test: 400,
                classes: 10,
                height: 32,
                width: 32,
                channels: 3,
            },
            attacks: AttacksConfig::Default,
            train: TrainConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::format(format!("run config JSON: {e}")))?;
        if cfg.version != RUN_CONFIG_VERSION {
            return Err(Error::format(format!(
                "unsupported run config version {}",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Override the master seed (the `--seed` flag).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(canonical.as_bytes());
        hash.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Training config with a seed derived from the master seed.
    pub fn train_config(&self, purpose: &str, index: u64) -> TrainConfig {
        let mut cfg = self.train.clone();
        cfg.seed = derive_seed(self.seed, purpose, index);
        cfg
    }

    /// Sweep config with its seed derived from the master seed.
    pub fn sweep_config(&self) -> SweepConfig {
        let mut cfg = self.sweep.clone();
        cfg.seed = derive_seed(self.seed, "sweep", 0);
        cfg
    }

    /// Materialize `(train, test)` datasets.
    pub fn load_datasets(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match &self.dataset {
            DatasetConfig::Shapes {
                n_train,
                n_test,
                classes,
                height,
                width,
                channels,
            } => {
                let dims = (*height, *width, *channels);
                let train = gen_shapes_dataset(*n_train, *classes, dims, derive_seed(self.seed, "data-train", 0))?;
                let test = gen_shapes_dataset(*n_test, *classes, dims, derive_seed(self.seed, "data-test", 0))?;
                Ok((train, test))
            }
            DatasetConfig::Cifar10 { train_path, test_path } => Ok((
                load_cifar10_binary(train_path)?,
                load_cifar10_binary(test_path)?,
            )),
            DatasetConfig::Dir {
                train_dir,
                test_dir,
                classes,
            } => {
                let train = load_dataset_dir(train_dir, *classes)?;
                let test = load_dataset_dir(test_dir, *classes)?;
                Ok((train, test))
            }
        }
    }

    /// Materialize the attack list for the given image dimensions.
    pub fn materialize_attacks(
        &self,
        dims: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Vec<AttackInstance>> {
        match &self.attacks {
            AttacksConfig::Default => attack_db_default(dims, num_classes),
            AttacksConfig::List { attacks } => {
                attacks.iter().map(|spec| spec.materialize(dims)).collect()
            }
        }
    }
}

/// One attack prepared for the sweep: its poisoned training run's output.
#[derive(Debug, Clone)]
pub struct PreparedAttack {
    pub instance: AttackInstance,
    pub model: TinyClassifier,
    pub poison_indices: Vec<usize>,
}

/// Poison the clean training set with one attack and train its infected
/// model. Sub-seeds derive from the master seed and the attack index.
pub fn prepare_attack(
    cfg: &RunConfig,
    train_clean: &LabeledDataset,
    instance: &AttackInstance,
    index: u64,
) -> Result<PreparedAttack> {
    let mut rng = Rng::new(derive_seed(cfg.seed, "poison", index));
    let (poisoned, poison_indices) = poison_dataset(train_clean, instance, &mut rng)?;
    let train_cfg = cfg.train_config("train-infected", index);
    let model = TinyClassifier::train(&poisoned, &train_cfg)?;
    Ok(PreparedAttack {
        instance: instance.clone(),
        model,
        poison_indices,
    })
}

/// Prepare every attack in parallel (deterministic: seeds are per-index).
pub fn prepare_attacks(
    cfg: &RunConfig,
    train_clean: &LabeledDataset,
    instances: &[AttackInstance],
) -> Result<Vec<PreparedAttack>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(j, inst)| prepare_attack(cfg, train_clean, inst, j as u64))
        .collect()
}

/// Split prepared attacks into sweep search/validation cases. Evaluation
/// draws from the clean test set; fine-tuning pools from the clean
/// training set.
pub fn sweep_cases(
    prepared: &[PreparedAttack],
    test_clean: &LabeledDataset,
    train_clean: &LabeledDataset,
) -> (Vec<AttackCase<TinyClassifier>>, Vec<AttackCase<TinyClassifier>>) {
    let mut search = Vec::new();
    let mut validation = Vec::new();
    for p in prepared {
        let case = AttackCase {
            name: p.instance.name.clone(),
            model: p.model.clone(),
            attack: p.instance.clone(),
            eval_clean: test_clean.clone(),
            finetune_clean: train_clean.clone(),
        };
        match p.instance.role {
            AttackRole::Search => search.push(case),
            AttackRole::Validation => validation.push(case),
        }
    }
    (search, validation)
}

/// Reproducibility record attached to every defended model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub version: u32,
    pub master_seed: u64,
    pub config_digest: String,
}

/// A fine-tuned model bound to its mandatory inference policy.
#[derive(Debug, Clone)]
pub struct DefendedModel {
    pub model: TinyClassifier,
    pub finetune_policy: Policy,
    pub inference_policy: Policy,
    pub provenance: Provenance,
}

/// Stage 1 + stage 2: fine-tune the infected model on `P_f`-transformed
/// clean samples, then bind `P_i` as the mandatory inference preprocessor.
pub fn defend(
    infected: &TinyClassifier,
    clean: &LabeledDataset,
    pf: &Policy,
    pi: &Policy,
    registry: &Registry,
    cfg: &RunConfig,
) -> Result<DefendedModel> {
    if pf.is_empty() || pi.is_empty() {
        return Err(Error::config("defense policies must be non-empty"));
    }
    pf.validate(registry)?;
    pi.validate(registry)?;
    let sweep_cfg = cfg.sweep_config();
    let cap = ((clean.len() as f64) * 0.8).floor() as usize;
    let count = sweep_cfg.finetune_samples.min(cap).max(1);
    let subset = clean.subsample(count, derive_seed(cfg.seed, "defend-set", 0))?;
    let transformed = transform_dataset(
        &subset,
        pf,
        registry,
        derive_seed(cfg.seed, "defend-transform", 0),
        "sample",
    )?;
    let train_cfg = cfg.train_config("defend-train", 0);
    let model = infected.fine_tune(&transformed, sweep_cfg.finetune_epochs, &train_cfg)?;
    Ok(DefendedModel {
        model,
        finetune_policy: pf.clone(),
        inference_policy: pi.clone(),
        provenance: Provenance {
            version: RUN_CONFIG_VERSION,
            master_seed: cfg.seed,
            config_digest: cfg.digest(),
        },
    })
}

/// Preprocess with the bound inference policy (seeded per sample), then
/// predict with the fine-tuned model.
pub fn defended_predict(
    dm: &DefendedModel,
    img: &Image,
    registry: &Registry,
    sample_seed: u64,
) -> Result<usize> {
    let mut rng = Rng::new(sample_seed);
    let preprocessed = apply_policy(&dm.inference_policy, img, registry, &mut rng)?;
    use crate::model::Classifier;
    dm.model.predict(&preprocessed)
}

const DEFENDED_MODEL_FILE: &str = "model.bin";
const DEFENDED_PF_FILE: &str = "finetune_policy.json";
const DEFENDED_PI_FILE: &str = "inference_policy.json";
const DEFENDED_PROVENANCE_FILE: &str = "provenance.json";

impl DefendedModel {
    /// Write the defended model directory: weights, both policies,
    /// provenance.
    pub fn save_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        self.model.save(dir.join(DEFENDED_MODEL_FILE))?;
        std::fs::write(dir.join(DEFENDED_PF_FILE), self.finetune_policy.to_json())?;
        std::fs::write(dir.join(DEFENDED_PI_FILE), self.inference_policy.to_json())?;
        let provenance = serde_json::to_string_pretty(&self.provenance).expect("serializes");
        std::fs::write(dir.join(DEFENDED_PROVENANCE_FILE), provenance)?;
        Ok(())
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let model = TinyClassifier::load(dir.join(DEFENDED_MODEL_FILE))?;
        let finetune_policy =
            Policy::from_json(&std::fs::read_to_string(dir.join(DEFENDED_PF_FILE))?)?;
        let inference_policy =
            Policy::from_json(&std::fs::read_to_string(dir.join(DEFENDED_PI_FILE))?)?;
        let provenance: Provenance =
            serde_json::from_str(&std::fs::read_to_string(dir.join(DEFENDED_PROVENANCE_FILE))?)
                .map_err(|e| Error::format(format!("provenance JSON: {e}")))?;
        Ok(DefendedModel {
            model,
            finetune_policy,
            inference_policy,
            provenance,
        })
    }
}

/// The end-of-run report: per-attack baseline vs defended metrics plus the
/// policies and the config digest that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub config_digest: String,
    pub seed: u64,
    pub pf: Policy,
    pub pi: Policy,
    pub attacks: Vec<DefenseReport>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: RunReport =
            serde_json::from_str(text).map_err(|e| Error::format(format!("report JSON: {e}")))?;
        if report.version != REPORT_VERSION {
            return Err(Error::format(format!(
                "unsupported report version {}",
                report.version
            )));
        }
        Ok(report)
    }
}

/// Render the run report as aligned text tables.
pub fn render_report_text(report: &RunReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("config digest: {}\n", report.config_digest));
    out.push_str(&format!("master seed:   {}\n", report.seed));
    out.push_str(&format!("P_f: {}\n", report.pf.ids().join(" -> ")));
    out.push_str(&format!("P_i: {}\n\n", report.pi.ids().join(" -> ")));
    out.push_str(&crate::sweep::render_validation_text(&report.attacks));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_version_gate() {
        let cfg = RunConfig::default();
        let json = cfg.to_json();
        assert_eq!(RunConfig::from_json(&json).unwrap(), cfg);

        let mut wrong = cfg.clone();
        wrong.version = 2;
        assert!(RunConfig::from_json(&serde_json::to_string(&wrong).unwrap()).is_err());
    }

    #[test]
    fn digest_changes_with_any_field() {
        let base = RunConfig::default();
        let d0 = base.digest();
        assert_eq!(d0, base.digest());

        let mut seeded = base.clone();
        seeded.seed = 43;
        assert_ne!(d0, seeded.digest());

        let mut swept = base.clone();
        swept.sweep.eps_asr = 0.02;
        assert_ne!(d0, swept.digest());

        let mut trained = base.clone();
        trained.train.epochs = 31;
        assert_ne!(d0, trained.digest());
    }

    #[test]
    fn attack_spec_materializes_for_dims() {
        let spec = AttackSpec {
            name: "square".to_string(),
            trigger: TriggerGen::SolidSquare {
                size: 3,
                color: vec![255, 255, 255],
            },
            labels: LabelMap::SingleTarget { target: 1 },
            poison_ratio: 0.1,
            role: AttackRole::Search,
        };
        let inst = spec.materialize((16, 16, 3)).unwrap();
        assert_eq!(inst.name, "square");

        let wm = AttackSpec {
            name: "wm".to_string(),
            trigger: TriggerGen::Watermark { alpha: 0.2, seed: 9 },
            labels: LabelMap::AllToAll,
            poison_ratio: 0.1,
            role: AttackRole::Validation,
        };
        let a = wm.materialize((16, 16, 3)).unwrap();
        let b = wm.materialize((16, 16, 3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn shapes_config_loads_deterministically() {
        let mut cfg = RunConfig::default();
        cfg.dataset = DatasetConfig::Shapes {
            n_train: 40,
            n_test: 20,
            classes: 4,
            height: 16,
            width: 16,
            channels: 3,
        };
        let (train_a, test_a) = cfg.load_datasets().unwrap();
        let (train_b, test_b) = cfg.load_datasets().unwrap();
        assert_eq!(train_a, train_b);
        assert_eq!(test_a, test_b);
        assert_eq!(train_a.len(), 40);
        assert_eq!(test_a.len(), 20);
        // train and test draws differ
        assert_ne!(train_a.image(0), test_a.image(0));
    }
}
