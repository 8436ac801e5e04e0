//! The `sweepkit` command line: `gen-data`, `poison`, `train`, `sweep`,
//! `defend`, `eval` and `report` subcommands, all driven by a RunConfig
//! JSON (`--config`), an optional `--seed` override and an `--out`
//! directory.
//!
//! Exit codes: 0 on success, 1 on validation/configuration errors,
//! 2 on IO/format errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

use crate::attacks::AttackInstance;
use crate::augment::{registry_default, Policy};
use crate::data::{load_dataset_dir, save_dataset_dir};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::imgcore::derive_seed;
use crate::metrics::{accuracy, evaluate};
use crate::model::TinyClassifier;
use crate::pipeline::{
    defend, prepare_attacks, render_report_text, sweep_cases, DatasetConfig, DefendedModel,
    RunConfig, RunReport, REPORT_VERSION,
};
use crate::sweep::{render_shortlist_text, render_validation_text, run_sweep, SweepReport};

#[derive(Parser)]
#[command(name = "sweepkit", version, about = "Data-augmentation defense pipeline against backdoored classifiers")]
struct Cli {
    /// Print progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// RunConfig JSON path.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Master-seed override; all sub-seeds derive from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the configured dataset into train/ and test/ directories.
    GenData {
        #[command(flatten)]
        common: Common,
    },
    /// Poison a dataset directory with one attack from the configured database.
    Poison {
        #[command(flatten)]
        common: Common,
        /// Clean dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Attack name (defaults to the first configured attack).
        #[arg(long)]
        attack: Option<String>,
    },
    /// Train a classifier on a dataset directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// Training dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Optional held-out dataset directory for a final accuracy figure.
        #[arg(long)]
        test: Option<PathBuf>,
    },
    /// Run the full policy search over the configured attack database.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Fine-tune an infected model with P_f and bind P_i for inference.
    Defend {
        #[command(flatten)]
        common: Common,
        /// Infected model file.
        #[arg(long)]
        model: PathBuf,
        /// Clean dataset directory for fine-tuning samples.
        #[arg(long)]
        data: PathBuf,
        /// Fine-tuning policy JSON.
        #[arg(long)]
        pf: PathBuf,
        /// Inference policy JSON.
        #[arg(long)]
        pi: PathBuf,
    },
    /// Compare baseline vs defended ACC/ASR on a held-out dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Baseline (infected) model file.
        #[arg(long)]
        model: PathBuf,
        /// Defended model directory produced by `defend`.
        #[arg(long)]
        defended: PathBuf,
        /// Held-out dataset directory.
        #[arg(long)]
        data: PathBuf,
        /// Attack name (defaults to the first configured attack).
        #[arg(long)]
        attack: Option<String>,
    },
    /// Render a report or sweep-result JSON as aligned text tables.
    Report {
        /// report.json or sweep_result.json path.
        #[arg(long)]
        input: PathBuf,
        /// Optional file to write the rendered text to.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    crate::init_threads_from_env();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

fn vlog(verbose: bool, message: impl AsRef<str>) {
    if verbose {
        eprintln!("[sweepkit] {}", message.as_ref());
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg = cfg.with_seed(seed);
    }
    Ok(cfg)
}

fn configured_classes(cfg: &RunConfig) -> Option<usize> {
    match &cfg.dataset {
        DatasetConfig::Shapes { classes, .. } => Some(*classes),
        DatasetConfig::Cifar10 { .. } => Some(10),
        DatasetConfig::Dir { classes, .. } => *classes,
    }
}

fn load_dir_dataset(cfg: &RunConfig, dir: &Path) -> Result<LabeledDataset> {
    load_dataset_dir(dir, configured_classes(cfg))
}

fn pick_attack(
    cfg: &RunConfig,
    ds: &LabeledDataset,
    name: Option<&str>,
) -> Result<AttackInstance> {
    let attacks = cfg.materialize_attacks(ds.dims(), ds.num_classes())?;
    match name {
        None => attacks
            .into_iter()
            .next()
            .ok_or_else(|| Error::config("no attacks configured")),
        Some(name) => attacks
            .into_iter()
            .find(|a| a.name == name)
            .ok_or_else(|| Error::config(format!("attack `{name}` not in the configured database"))),
    }
}

fn write_json(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let verbose = cli.verbose;
    match cli.command {
        Command::GenData { common } => {
            let cfg = load_config(&common)?;
            vlog(verbose, "synthesizing datasets");
            let (train, test) = cfg.load_datasets()?;
            save_dataset_dir(&train, common.out.join("train"))?;
            save_dataset_dir(&test, common.out.join("test"))?;
            write_json(&common.out.join("config.json"), &cfg.to_json())?;
            vlog(
                verbose,
                format!("wrote {} train and {} test samples", train.len(), test.len()),
            );
            Ok(())
        }
        Command::Poison { common, data, attack } => {
            let cfg = load_config(&common)?;
            let clean = load_dir_dataset(&cfg, &data)?;
            let instance = pick_attack(&cfg, &clean, attack.as_deref())?;
            vlog(verbose, format!("poisoning with `{}`", instance.name));
            let mut rng =
                crate::imgcore::Rng::new(derive_seed(cfg.seed, "poison", 0));
            let (poisoned, indices) = crate::attacks::poison_dataset(&clean, &instance, &mut rng)?;
            save_dataset_dir(&poisoned, &common.out)?;
            let summary = serde_json::json!({
                "attack": instance.name,
                "poisoned_count": indices.len(),
                "indices": indices,
            });
            write_json(
                &common.out.join("poison.json"),
                &serde_json::to_string_pretty(&summary).expect("serializes"),
            )?;
            Ok(())
        }
        Command::Train { common, data, test } => {
            let cfg = load_config(&common)?;
            let train_ds = load_dir_dataset(&cfg, &data)?;
            vlog(verbose, format!("training on {} samples", train_ds.len()));
            let model = TinyClassifier::train(&train_ds, &cfg.train_config("train", 0))?;
            std::fs::create_dir_all(&common.out)?;
            model.save(common.out.join("model.bin"))?;
            let registry = registry_default();
            let mut summary = serde_json::json!({
                "train_samples": train_ds.len(),
            });
            if let Some(test_dir) = test {
                let test_ds = load_dir_dataset(&cfg, &test_dir)?;
                let acc = accuracy(&model, &test_ds, None, &registry, derive_seed(cfg.seed, "train-eval", 0))?;
                summary["test_acc"] = serde_json::json!(acc);
                vlog(verbose, format!("held-out accuracy {acc:.3}"));
            }
            write_json(
                &common.out.join("train_report.json"),
                &serde_json::to_string_pretty(&summary).expect("serializes"),
            )?;
            Ok(())
        }
        Command::Sweep { common } => {
            let cfg = load_config(&common)?;
            let registry = registry_default();
            let (train, test) = cfg.load_datasets()?;
            let attacks = cfg.materialize_attacks(train.dims(), train.num_classes())?;
            vlog(verbose, format!("preparing {} infected models", attacks.len()));
            let prepared = prepare_attacks(&cfg, &train, &attacks)?;
            let (search, validation) = sweep_cases(&prepared, &test, &train);
            vlog(
                verbose,
                format!("sweeping: {} search / {} validation attacks", search.len(), validation.len()),
            );
            let outcome = run_sweep(&registry, &search, &validation, &cfg.sweep_config())?;

            std::fs::create_dir_all(common.out.join("models"))?;
            for p in &prepared {
                p.model
                    .save(common.out.join("models").join(format!("{}.infected.bin", p.instance.name)))?;
            }
            write_json(
                &common.out.join("sweep_result.json"),
                &serde_json::to_string_pretty(&outcome.report).expect("serializes"),
            )?;
            std::fs::write(
                common.out.join("shortlist.txt"),
                render_shortlist_text(&outcome.report),
            )?;
            std::fs::write(
                common.out.join("validation.txt"),
                render_validation_text(&outcome.report.validation),
            )?;
            write_json(&common.out.join("policies").join("pf.json"), &outcome.report.pf.to_json())?;
            write_json(&common.out.join("policies").join("pi.json"), &outcome.report.pi.to_json())?;
            vlog(
                verbose,
                format!(
                    "P_f = [{}], P_i = [{}]{}",
                    outcome.report.pf.ids().join(", "),
                    outcome.report.pi.ids().join(", "),
                    if outcome.report.pi_fallback { " (fallback)" } else { "" }
                ),
            );
            Ok(())
        }
        Command::Defend { common, model, data, pf, pi } => {
            let cfg = load_config(&common)?;
            let registry = registry_default();
            let infected = TinyClassifier::load(&model)?;
            let clean = load_dir_dataset(&cfg, &data)?;
            let pf = Policy::from_json(&std::fs::read_to_string(&pf)?)?;
            let pi = Policy::from_json(&std::fs::read_to_string(&pi)?)?;
            vlog(verbose, "fine-tuning the infected model");
            let defended = defend(&infected, &clean, &pf, &pi, &registry, &cfg)?;
            defended.save_dir(&common.out)?;
            Ok(())
        }
        Command::Eval { common, model, defended, data, attack } => {
            let cfg = load_config(&common)?;
            let registry = registry_default();
            let baseline_model = TinyClassifier::load(&model)?;
            let defended = DefendedModel::load_dir(&defended)?;
            let test = load_dir_dataset(&cfg, &data)?;
            let instance = pick_attack(&cfg, &test, attack.as_deref())?;
            vlog(verbose, format!("evaluating `{}`", instance.name));
            let baseline = evaluate(
                &baseline_model,
                &test,
                &instance,
                None,
                &registry,
                derive_seed(cfg.seed, "eval-baseline", 0),
            )?;
            let defended_report = evaluate(
                &defended.model,
                &test,
                &instance,
                Some(&defended.inference_policy),
                &registry,
                derive_seed(cfg.seed, "eval-defended", 0),
            )?;
            let report = RunReport {
                version: REPORT_VERSION,
                config_digest: cfg.digest(),
                seed: cfg.seed,
                pf: defended.finetune_policy.clone(),
                pi: defended.inference_policy.clone(),
                attacks: vec![crate::sweep::DefenseReport {
                    name: instance.name.clone(),
                    baseline,
                    defended: defended_report,
                }],
            };
            write_json(&common.out.join("report.json"), &report.to_json())?;
            let text = render_report_text(&report);
            std::fs::write(common.out.join("report.txt"), &text)?;
            print!("{text}");
            Ok(())
        }
        Command::Report { input, out } => {
            let text = std::fs::read_to_string(&input)?;
            let rendered = if let Ok(report) = RunReport::from_json(&text) {
                render_report_text(&report)
            } else {
                let sweep: SweepReport = serde_json::from_str(&text)
                    .map_err(|e| Error::format(format!("not a report or sweep result: {e}")))?;
                let mut s = render_shortlist_text(&sweep);
                s.push('\n');
                s.push_str(&render_validation_text(&sweep.validation));
                s
            };
            if let Some(path) = out {
                if let Some(parent) = path.parent() {
                    std::fs::create_dir_all(parent)?;
                }
                std::fs::write(&path, &rendered)?;
            }
            print!("{rendered}");
            Ok(())
        }
    }
}
