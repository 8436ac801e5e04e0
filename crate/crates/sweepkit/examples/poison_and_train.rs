//! Poison a synthetic dataset with a square trigger, train a classifier on
//! it, and measure clean accuracy and attack success rate.
//!
//! ```sh
//! cargo run --release --example poison_and_train
//! ```

use sweepkit::attacks::{poison_dataset, AttackInstance, AttackRole, LabelMap, TriggerSpec};
use sweepkit::augment::registry_default;
use sweepkit::data::gen_shapes_dataset;
use sweepkit::imgcore::Rng;
use sweepkit::metrics::evaluate;
use sweepkit::model::{TinyClassifier, TrainConfig};

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
    let (poisoned, indices) = poison_dataset(&train, &attack, &mut Rng::new(1))?;
    println!(
        "poisoned {} of {} training samples (10%)",
        indices.len(),
        train.len()
    );

    let cfg = TrainConfig {
        epochs: 30,
        seed: 5,
        ..TrainConfig::default()
    };
    println!("training for {} epochs ...", cfg.epochs);
    let model = TinyClassifier::train(&poisoned, &cfg)?;

    let registry = registry_default();
    let report = evaluate(&model, &test, &attack, None, &registry, 100)?;
    println!(
        "clean ACC {:.3} ({} / {})",
        report.acc, report.n_clean_correct, report.n_clean
    );
    println!(
        "attack success rate {:.3} ({} / {} trigger-patched samples)",
        report.asr, report.n_attack_success, report.n_triggered
    );
    Ok(())
}
