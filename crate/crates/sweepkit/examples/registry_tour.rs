//! Print every function in the default augmentation registry with its
//! category, parameters and stochasticity.
//!
//! ```sh
//! cargo run --example registry_tour
//! ```

use sweepkit::augment::registry_default;

fn main() {
    let registry = registry_default();
    println!("{} registered augmentation functions\n", registry.len());
    println!("{:<16}{:<14}{:<8}parameters", "id", "category", "draws");
    for f in registry.iter() {
        let params: Vec<String> = f
            .defaults()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        println!(
            "{:<16}{:<14}{:<8}{}",
            f.id(),
            format!("{:?}", f.category()),
            if f.stochastic() { "rng" } else { "-" },
            if params.is_empty() { "-".to_string() } else { params.join(", ") }
        );
    }
}
