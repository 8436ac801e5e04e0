//! Run the full heuristic policy search at desk scale: build the attack
//! database, train an infected model per attack, shortlist transforms,
//! derive the fine-tuning and inference policies, and validate them on the
//! held-out attacks.
//!
//! ```sh
//! cargo run --release --example policy_search
//! ```

use sweepkit::augment::registry_default;
use sweepkit::pipeline::{prepare_attacks, sweep_cases, DatasetConfig, RunConfig};
use sweepkit::sweep::{render_shortlist_text, render_validation_text, run_sweep};

fn main() -> sweepkit::Result<()> {
    sweepkit::init_threads_from_env();
    let mut cfg = RunConfig::default();
    cfg.seed = 7;
    cfg.dataset = DatasetConfig::Shapes {
        n_train: 400,
        n_test: 160,
        classes: 4,
        height: 16,
        width: 16,
        channels: 3,
    };
    cfg.train.epochs = 18;
    cfg.train.batch_size = 8;
    cfg.train.hidden = (128, 64);
    cfg.sweep.eval_samples = 60;
    cfg.sweep.finetune_samples = 300;

    let registry = registry_default();
    let (train, test) = cfg.load_datasets()?;
    let attacks = cfg.materialize_attacks(train.dims(), train.num_classes())?;
    println!("training {} infected models ...", attacks.len());
    let prepared = prepare_attacks(&cfg, &train, &attacks)?;
    let (search, validation) = sweep_cases(&prepared, &test, &train);

    println!(
        "searching policies over {} functions, {} search / {} validation attacks ...",
        registry.len(),
        search.len(),
        validation.len()
    );
    let outcome = run_sweep(&registry, &search, &validation, &cfg.sweep_config())?;
    let report = &outcome.report;

    println!("\n{}", render_shortlist_text(report));
    println!(
        "P_f = [{}]{}",
        report.pf.ids().join(", "),
        if report.pf_deficient { " (shortlist smaller than n)" } else { "" }
    );
    println!(
        "P_i = [{}]{} (baseline avg ASR under P_f: {:.3})",
        report.pi.ids().join(", "),
        if report.pi_fallback { " (fallback to P_f: no subset qualified)" } else { "" },
        report.avg_base
    );
    let qualified = report.subsets.iter().filter(|s| s.qualified).count();
    println!(
        "{} of {} non-empty subsets qualified\n",
        qualified,
        report.subsets.len()
    );
    println!("{}", render_validation_text(&report.validation));
    Ok(())
}
