//! Heuristic policy search: shortlist augmentation functions by per-attack
//! accuracy, build the fine-tuning policy `P_f` from the top entries by
//! average attack success rate, fine-tune each attack's infected model on
//! `P_f`-transformed clean data, enumerate every non-empty subset of `P_f`
//! as an inference-policy candidate, qualify subsets whose average ASR
//! beats the `P_f` baseline by more than `eps_asr`, and pick the qualified
//! subset with the lowest ASR as `P_i`. A validation pass then checks the
//! chosen policies against held-out attacks.
//!
//! All functions are generic over the classifier so the search logic can be
//! exercised against deterministic mock models.

use serde::{Deserialize, Serialize};

use crate::attacks::AttackInstance;
use crate::augment::{transform_dataset, Policy, PolicyStep, Registry};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::derive_seed;
use crate::metrics::{accuracy, attack_success_rate, evaluate, EvalReport};
use crate::model::{Classifier, TrainConfig, TunableClassifier};

/// Search parameters; thresholds follow the reference configuration
/// (`eps_acc = 0.7`, `eps_asr = 0.01`, `n = 6`, 200 evaluation samples,
/// 5 fine-tuning epochs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// A function joins the shortlist only if per-attack ACC exceeds this.
    pub eps_acc: f64,
    /// A subset qualifies only if it beats the baseline ASR by more than this.
    pub eps_asr: f64,
    /// Number of shortlisted functions composing `P_f`.
    pub n: usize,
    /// Evaluation samples per attack (clean and triggered).
    pub eval_samples: usize,
    /// Clean samples transformed for fine-tuning; capped at 80% of the
    /// available pool.
    pub finetune_samples: usize,
    pub finetune_epochs: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            eps_acc: 0.7,
            eps_asr: 0.01,
            n: 6,
            eval_samples: 200,
            finetune_samples: 10_000,
            finetune_epochs: 5,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self, registry_size: usize) -> Result<()> {
        if !(self.eps_acc > 0.0 && self.eps_acc < 1.0) {
            return Err(Error::invalid("eps_acc must be in (0, 1)"));
        }
        if !(self.eps_asr > 0.0 && self.eps_asr < 1.0) {
            return Err(Error::invalid("eps_asr must be in (0, 1)"));
        }
        if self.n == 0 || self.n > registry_size {
            return Err(Error::invalid(format!(
                "n must be in [1, {registry_size}], got {}",
                self.n
            )));
        }
        if self.eval_samples == 0 || self.finetune_samples == 0 || self.finetune_epochs == 0 {
            return Err(Error::invalid("sample counts and epochs must be >= 1"));
        }
        Ok(())
    }
}

/// One attack's materials for the search: its infected model, the attack
/// itself, clean evaluation samples, and a clean pool for fine-tuning.
#[derive(Debug, Clone)]
pub struct AttackCase<M> {
    pub name: String,
    pub model: M,
    pub attack: AttackInstance,
    pub eval_clean: LabeledDataset,
    pub finetune_clean: LabeledDataset,
}

/// Per-attack ACC/ASR measured for one candidate function or policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerAttackEval {
    pub name: String,
    pub acc: f64,
    pub asr: f64,
}

/// A shortlisted function with its per-attack measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub id: String,
    pub per_attack: Vec<PerAttackEval>,
    pub avg_asr: f64,
}

/// One evaluated subset of `P_f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetEval {
    pub ids: Vec<String>,
    /// Bit `i` set means step `i` of `P_f` is included.
    pub mask: u64,
    pub avg_asr: f64,
    pub qualified: bool,
}

/// Baseline vs defended measurements for one attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefenseReport {
    pub name: String,
    pub baseline: EvalReport,
    pub defended: EvalReport,
}

/// Chosen inference policy plus the evaluation trail behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiSelection {
    pub pi: Policy,
    /// Mean ASR of the fine-tuned models under `P_f` preprocessing.
    pub avg_base: f64,
    pub subsets: Vec<SubsetEval>,
    /// True when no subset qualified and `P_i` fell back to `P_f`.
    pub fallback: bool,
}

/// Sweep report schema version.
pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// The serializable outcome of a full sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: u32,
    pub seed: u64,
    /// No-transform ACC/ASR of the original infected search models.
    pub search_baseline: Vec<PerAttackEval>,
    pub shortlist: Vec<ShortlistEntry>,
    pub pf: Policy,
    /// True when the shortlist had fewer than `n` entries.
    pub pf_deficient: bool,
    pub avg_base: f64,
    pub subsets: Vec<SubsetEval>,
    pub pi: Policy,
    pub pi_fallback: bool,
    pub validation: Vec<DefenseReport>,
}

/// Full sweep outputs: the report plus the fine-tuned models.
#[derive(Debug, Clone)]
pub struct SweepOutcome<M> {
    pub report: SweepReport,
    pub finetuned_search: Vec<M>,
    pub finetuned_validation: Vec<M>,
}

fn single_step_policy(id: &str) -> Policy {
    Policy::new(vec![PolicyStep {
        id: id.to_string(),
        params: Default::default(),
    }])
}

/// Step 1: measure every registry function on every search attack, keep
/// functions whose ACC strictly exceeds `eps_acc` on all of them, and sort
/// ascending by average ASR (ties by id).
pub fn shortlist<M: Classifier>(
    registry: &Registry,
    cases: &[AttackCase<M>],
    cfg: &SweepConfig,
) -> Result<Vec<ShortlistEntry>> {
    if cases.is_empty() {
        return Err(Error::invalid("shortlist needs a non-empty search set"));
    }
    let mut entries = Vec::new();
    for (f_idx, f) in registry.iter().enumerate() {
        let policy = single_step_policy(f.id());
        let fn_seed = derive_seed(cfg.seed, "shortlist", f_idx as u64);
        let mut per_attack = Vec::with_capacity(cases.len());
        let mut all_pass = true;
        for (j, case) in cases.iter().enumerate() {
            let acc = accuracy(
                &case.model,
                &case.eval_clean,
                Some(&policy),
                registry,
                derive_seed(fn_seed, "acc", j as u64),
            )?;
            let asr = attack_success_rate(
                &case.model,
                &case.eval_clean,
                &case.attack,
                Some(&policy),
                registry,
                derive_seed(fn_seed, "asr", j as u64),
            )?;
            all_pass &= acc > cfg.eps_acc;
            per_attack.push(PerAttackEval {
                name: case.name.clone(),
                acc,
                asr,
            });
        }
        if all_pass {
            let avg_asr = per_attack.iter().map(|e| e.asr).sum::<f64>() / per_attack.len() as f64;
            entries.push(ShortlistEntry {
                id: f.id().to_string(),
                per_attack,
                avg_asr,
            });
        }
    }
    entries.sort_by(|a, b| {
        a.avg_asr
            .partial_cmp(&b.avg_asr)
            .expect("ASR is finite")
            .then_with(|| a.id.cmp(&b.id))
    });
    Ok(entries)
}

/// Order ids canonically: geometric (affine/advanced) functions before
/// intensity (compression/noise) functions, ties by id.
pub fn canonical_order(registry: &Registry, ids: &[String]) -> Vec<String> {
    let mut ordered = ids.to_vec();
    ordered.sort_by_key(|id| {
        let geometric = registry
            .get(id)
            .map(|f| f.category().is_geometric())
            .unwrap_or(false);
        (!geometric, id.clone())
    });
    ordered
}

/// Step 2a: `P_f` is the top-`n` shortlist entries combined in canonical
/// order. When the shortlist is smaller than `n`, all available entries are
/// used and the deficiency is flagged.
pub fn build_pf(registry: &Registry, entries: &[ShortlistEntry], n: usize) -> (Policy, bool) {
    let take = n.min(entries.len());
    let ids: Vec<String> = entries[..take].iter().map(|e| e.id.clone()).collect();
    let ordered = canonical_order(registry, &ids);
    (Policy::from_ids(ordered), entries.len() < n)
}

fn finetune_case<M: TunableClassifier>(
    case: &AttackCase<M>,
    pf: &Policy,
    registry: &Registry,
    cfg: &SweepConfig,
    tag: &str,
    index: usize,
) -> Result<M> {
    let pool = &case.finetune_clean;
    // desk scaling: never consume more than 80% of the clean pool
    let cap = ((pool.len() as f64) * 0.8).floor() as usize;
    let count = cfg.finetune_samples.min(cap).max(1);
    let subset = pool.subsample(count, derive_seed(cfg.seed, &format!("{tag}-set"), index as u64))?;
    let transformed = transform_dataset(
        &subset,
        pf,
        registry,
        derive_seed(cfg.seed, &format!("{tag}-transform"), index as u64),
        "sample",
    )?;
    let train_cfg = TrainConfig::default()
        .with_seed(derive_seed(cfg.seed, &format!("{tag}-train"), index as u64));
    case.model.fine_tuned(&transformed, cfg.finetune_epochs, &train_cfg)
}

/// Step 2b: fine-tune each search attack's infected model on
/// `P_f`-transformed clean samples. Original models are unchanged.
pub fn finetune_per_attack<M: TunableClassifier>(
    cases: &[AttackCase<M>],
    pf: &Policy,
    registry: &Registry,
    cfg: &SweepConfig,
) -> Result<Vec<M>> {
    if pf.is_empty() {
        return Err(Error::config("fine-tuning policy has no steps"));
    }
    cases
        .iter()
        .enumerate()
        .map(|(j, case)| finetune_case(case, pf, registry, cfg, "finetune", j))
        .collect()
}

/// Step 2c: enumerate all `2^|P_f| - 1` non-empty subsets (bit `i` of the
/// mask selects step `i`, order inherited from `P_f`), qualify subsets whose
/// average ASR is lower than the `P_f` baseline by strictly more than
/// `eps_asr`, and pick the qualified subset with the lowest average ASR
/// (ties to the lowest mask). Falls back to `P_f` when nothing qualifies.
pub fn select_pi<M: Classifier>(
    pf: &Policy,
    finetuned: &[M],
    cases: &[AttackCase<M>],
    registry: &Registry,
    cfg: &SweepConfig,
) -> Result<PiSelection> {
    if pf.is_empty() {
        return Err(Error::config("fine-tuning policy has no steps"));
    }
    if finetuned.len() != cases.len() {
        return Err(Error::invalid("one fine-tuned model per attack case required"));
    }
    if cases.is_empty() {
        return Err(Error::invalid("select_pi needs a non-empty search set"));
    }

    let mut base_sum = 0.0;
    for (j, case) in cases.iter().enumerate() {
        base_sum += attack_success_rate(
            &finetuned[j],
            &case.eval_clean,
            &case.attack,
            Some(pf),
            registry,
            derive_seed(cfg.seed, "pi-base", j as u64),
        )?;
    }
    let avg_base = base_sum / cases.len() as f64;

    let steps = pf.len();
    let mut subsets = Vec::with_capacity((1usize << steps) - 1);
    let mut best: Option<(f64, u64, Policy)> = None;
    for mask in 1u64..(1u64 << steps) {
        let chosen: Vec<PolicyStep> = pf
            .steps
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, s)| s.clone())
            .collect();
        let candidate = Policy::new(chosen);
        let mask_seed = derive_seed(cfg.seed, "pi-subset", mask);
        let mut sum = 0.0;
        for (j, case) in cases.iter().enumerate() {
            sum += attack_success_rate(
                &finetuned[j],
                &case.eval_clean,
                &case.attack,
                Some(&candidate),
                registry,
                derive_seed(mask_seed, "case", j as u64),
            )?;
        }
        let avg_asr = sum / cases.len() as f64;
        let qualified = avg_base - avg_asr > cfg.eps_asr;
        if qualified && best.as_ref().map_or(true, |(b, _, _)| avg_asr < *b) {
            best = Some((avg_asr, mask, candidate.clone()));
        }
        subsets.push(SubsetEval {
            ids: candidate.ids().iter().map(|s| s.to_string()).collect(),
            mask,
            avg_asr,
            qualified,
        });
    }

    let (pi, fallback) = match best {
        Some((_, _, policy)) => (policy, false),
        None => (pf.clone(), true),
    };
    Ok(PiSelection {
        pi,
        avg_base,
        subsets,
        fallback,
    })
}

/// Validation: fine-tune each held-out attack's model with `P_f`, then
/// compare no-defense baseline metrics against `P_i`-preprocessed metrics.
/// An empty validation set yields an empty report list.
pub fn validate<M: TunableClassifier>(
    pf: &Policy,
    pi: &Policy,
    cases: &[AttackCase<M>],
    registry: &Registry,
    cfg: &SweepConfig,
) -> Result<Vec<DefenseReport>> {
    Ok(validate_with_models(pf, pi, cases, registry, cfg)?.0)
}

fn validate_with_models<M: TunableClassifier>(
    pf: &Policy,
    pi: &Policy,
    cases: &[AttackCase<M>],
    registry: &Registry,
    cfg: &SweepConfig,
) -> Result<(Vec<DefenseReport>, Vec<M>)> {
    if pf.is_empty() || pi.is_empty() {
        return Err(Error::config("validation needs non-empty policies"));
    }
    let mut reports = Vec::with_capacity(cases.len());
    let mut models = Vec::with_capacity(cases.len());
    for (j, case) in cases.iter().enumerate() {
        let tuned = finetune_case(case, pf, registry, cfg, "val-finetune", j)?;
        let baseline = evaluate(
            &case.model,
            &case.eval_clean,
            &case.attack,
            None,
            registry,
            derive_seed(cfg.seed, "val-baseline", j as u64),
        )?;
        let defended = evaluate(
            &tuned,
            &case.eval_clean,
            &case.attack,
            Some(pi),
            registry,
            derive_seed(cfg.seed, "val-defended", j as u64),
        )?;
        reports.push(DefenseReport {
            name: case.name.clone(),
            baseline,
            defended,
        });
        models.push(tuned);
    }
    Ok((reports, models))
}

/// The complete search: shortlist, `P_f`, per-attack fine-tuning, `P_i`
/// selection, validation. Evaluation sets are subsampled once to
/// `cfg.eval_samples` and reused throughout, and the whole run is a pure
/// function of `(registry, cases, cfg.seed)`.
pub fn run_sweep<M: TunableClassifier>(
    registry: &Registry,
    search: &[AttackCase<M>],
    validation: &[AttackCase<M>],
    cfg: &SweepConfig,
) -> Result<SweepOutcome<M>> {
    cfg.validate(registry.len())?;
    if search.is_empty() {
        return Err(Error::invalid("sweep needs a non-empty search set"));
    }

    let trim = |cases: &[AttackCase<M>], tag: &str| -> Result<Vec<AttackCase<M>>> {
        cases
            .iter()
            .enumerate()
            .map(|(j, case)| {
                let eval_clean = case
                    .eval_clean
                    .subsample(cfg.eval_samples, derive_seed(cfg.seed, tag, j as u64))?;
                Ok(AttackCase {
                    eval_clean,
                    ..case.clone()
                })
            })
            .collect()
    };
    let search = trim(search, "eval-set-search")?;
    let validation = trim(validation, "eval-set-validation")?;

    let mut search_baseline = Vec::with_capacity(search.len());
    for (j, case) in search.iter().enumerate() {
        let report = evaluate(
            &case.model,
            &case.eval_clean,
            &case.attack,
            None,
            registry,
            derive_seed(cfg.seed, "search-baseline", j as u64),
        )?;
        search_baseline.push(PerAttackEval {
            name: case.name.clone(),
            acc: report.acc,
            asr: report.asr,
        });
    }

    let entries = shortlist(registry, &search, cfg)?;
    let (pf, pf_deficient) = build_pf(registry, &entries, cfg.n);
    if pf.is_empty() {
        return Err(Error::invalid(
            "no augmentation function passed the accuracy threshold",
        ));
    }
    let finetuned_search = finetune_per_attack(&search, &pf, registry, cfg)?;
    let selection = select_pi(&pf, &finetuned_search, &search, registry, cfg)?;
    let (validation_reports, finetuned_validation) =
        validate_with_models(&pf, &selection.pi, &validation, registry, cfg)?;

    Ok(SweepOutcome {
        report: SweepReport {
            version: SWEEP_SCHEMA_VERSION,
            seed: cfg.seed,
            search_baseline,
            shortlist: entries,
            pf,
            pf_deficient,
            avg_base: selection.avg_base,
            subsets: selection.subsets,
            pi: selection.pi,
            pi_fallback: selection.fallback,
            validation: validation_reports,
        },
        finetuned_search,
        finetuned_validation,
    })
}

/// Render the shortlist as an aligned text table: one row per function,
/// average ASR first, then per-attack ASR/ACC columns.
pub fn render_shortlist_text(report: &SweepReport) -> String {
    let mut out = String::new();
    let attacks: Vec<&str> = report
        .search_baseline
        .iter()
        .map(|e| e.name.as_str())
        .collect();
    out.push_str(&format!("{:<16}{:>8}", "Function", "AvgASR"));
    for name in &attacks {
        out.push_str(&format!("  {:>18}{:>7}", format!("{name} ASR"), "ACC"));
    }
    out.push('\n');

    let baseline_avg = report.search_baseline.iter().map(|e| e.asr).sum::<f64>()
        / report.search_baseline.len().max(1) as f64;
    out.push_str(&format!("{:<16}{:>8.3}", "Baseline", baseline_avg));
    for e in &report.search_baseline {
        out.push_str(&format!("  {:>18.3}{:>7.3}", e.asr, e.acc));
    }
    out.push('\n');

    for entry in &report.shortlist {
        out.push_str(&format!("{:<16}{:>8.3}", entry.id, entry.avg_asr));
        for e in &entry.per_attack {
            out.push_str(&format!("  {:>18.3}{:>7.3}", e.asr, e.acc));
        }
        out.push('\n');
    }
    out
}

/// Render validation results as an aligned text table with baseline and
/// defended ACC/ASR columns.
pub fn render_validation_text(reports: &[DefenseReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<20}{:>10}{:>10}{:>14}{:>10}\n",
        "Attack", "Base ACC", "Base ASR", "Defended ACC", "ASR"
    ));
    for r in reports {
        out.push_str(&format!(
            "{:<20}{:>10.3}{:>10.3}{:>14.3}{:>10.3}\n",
            r.name, r.baseline.acc, r.baseline.asr, r.defended.acc, r.defended.asr
        ));
    }
    out
}
