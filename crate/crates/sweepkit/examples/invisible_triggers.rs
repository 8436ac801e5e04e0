//! Synthesize norm-bounded perturbation triggers, with and without
//! model-gradient guidance, and compare the backdoors they implant.
//!
//! ```sh
//! cargo run --release --example invisible_triggers
//! ```

use sweepkit::attacks::{
    make_perturbation_trigger, poison_dataset, AttackInstance, AttackRole, GradientTriggerOpts,
    LabelMap, NormKind, TriggerSpec,
};
use sweepkit::augment::registry_default;
use sweepkit::data::gen_shapes_dataset;
use sweepkit::imgcore::Rng;
use sweepkit::metrics::attack_success_rate;
use sweepkit::model::{TinyClassifier, TrainConfig};

fn describe(spec: &TriggerSpec) -> String {
    match spec {
        TriggerSpec::Perturbation { pattern, norm, budget, channels, .. } => {
            let l2: f64 = pattern.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
            let touched = pattern
                .chunks(*channels)
                .filter(|px| px.iter().any(|&v| v != 0))
                .count();
            format!("{norm:?} budget {budget}: L2 {l2:.1}, {touched} pixels touched")
        }
        _ => "not a perturbation".to_string(),
    }
}

fn main() -> sweepkit::Result<()> {
    sweepkit::init_threads_from_env();
    let dims = (16, 16, 3);
    let train = gen_shapes_dataset(1500, 10, dims, 21)?;
    let test = gen_shapes_dataset(300, 10, dims, 22)?;
    let cfg = TrainConfig {
        epochs: 20,
        batch_size: 16,
        hidden: (128, 64),
        seed: 9,
        ..TrainConfig::default()
    };
    println!("training the clean reference model ...");
    let clean = TinyClassifier::train(&train, &cfg)?;
    let registry = registry_default();
    let target = 2usize;

    for (name, norm, budget, guided) in [
        ("L0 random", NormKind::L0, 6.0, false),
        ("L2 random", NormKind::L2, 150.0, false),
        ("L2 gradient-guided", NormKind::L2, 150.0, true),
    ] {
        let batch = train.subsample(64, 5)?;
        let opts = GradientTriggerOpts::new(&clean, &batch, target);
        let mut rng = Rng::new(31);
        let trigger = make_perturbation_trigger(
            norm,
            budget,
            dims,
            &mut rng,
            if guided { Some(&opts) } else { None },
        )?;
        println!("{name}: {}", describe(&trigger));

        let inst = AttackInstance::new(
            name,
            trigger,
            LabelMap::SingleTarget { target },
            0.10,
            AttackRole::Search,
        )?;
        let (poisoned, _) = poison_dataset(&train, &inst, &mut Rng::new(3))?;
        let infected = TinyClassifier::train(&poisoned, &cfg)?;
        let asr = attack_success_rate(&infected, &test, &inst, None, &registry, 1)?;
        println!("  post-poisoning ASR {asr:.3}");
    }
    Ok(())
}
