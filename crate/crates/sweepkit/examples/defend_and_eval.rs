//! The two-stage defense end to end: train a backdoored model, fine-tune
//! it on policy-transformed clean data (stage 1), bind the inference
//! policy (stage 2), and compare baseline vs defended metrics.
//!
//! ```sh
//! cargo run --release --example defend_and_eval
//! ```

use sweepkit::attacks::{poison_dataset, AttackInstance, AttackRole, LabelMap, TriggerSpec};
use sweepkit::augment::{registry_default, Policy};
use sweepkit::data::gen_shapes_dataset;
use sweepkit::imgcore::Rng;
use sweepkit::metrics::evaluate;
use sweepkit::model::{TinyClassifier, TrainConfig};
use sweepkit::pipeline::{defend, RunConfig};

fn main() -> sweepkit::Result<()> {
    sweepkit::init_threads_from_env();
    let dims = (32, 32, 3);
    let train = gen_shapes_dataset(2000, 10, dims, 11)?;
    let test = gen_shapes_dataset(400, 10, dims, 12)?;
    let attack = AttackInstance::new(
        "badnets-single",
        TriggerSpec::SolidSquare {
            size: 5,
            color: vec![255, 255, 255],
        },
        LabelMap::SingleTarget { target: 0 },
        0.10,
        AttackRole::Validation,
    )?;

    println!("implanting the backdoor (10% poisoning, 30 epochs) ...");
    let (poisoned, _) = poison_dataset(&train, &attack, &mut Rng::new(1))?;
    let infected = TinyClassifier::train(
        &poisoned,
        &TrainConfig {
            epochs: 30,
            seed: 5,
            ..TrainConfig::default()
        },
    )?;

    let registry = registry_default();
    let baseline = evaluate(&infected, &test, &attack, None, &registry, 100)?;
    println!(
        "baseline: ACC {:.3}  ASR {:.3}",
        baseline.acc, baseline.asr
    );

    // stage 1 fine-tunes with all six shortlisted transforms; stage 2
    // preprocesses every inference sample with the lighter subset
    let pf = Policy::from_ids(["OD", "RSPA", "SAT", "DSSM", "GCSM", "GESM"]);
    let pi = Policy::from_ids(["SAT", "DSSM", "GCSM"]);
    let mut run_cfg = RunConfig::default();
    run_cfg.seed = 77;
    run_cfg.sweep.finetune_samples = 1600;
    run_cfg.sweep.finetune_epochs = 5;
    run_cfg.train.batch_size = 8;

    println!(
        "defending: fine-tune 5 epochs on P_f = [{}], bind P_i = [{}] ...",
        pf.ids().join(", "),
        pi.ids().join(", ")
    );
    let defended = defend(&infected, &train, &pf, &pi, &registry, &run_cfg)?;
    let result = evaluate(
        &defended.model,
        &test,
        &attack,
        Some(&defended.inference_policy),
        &registry,
        101,
    )?;
    println!(
        "defended: ACC {:.3}  ASR {:.3}   (config digest {})",
        result.acc,
        result.asr,
        &defended.provenance.config_digest[..12]
    );
    Ok(())
}
