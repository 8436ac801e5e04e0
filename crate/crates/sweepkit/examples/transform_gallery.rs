//! Apply each shortlisted transform (and a few basics) to one synthetic
//! sample and write the results as netpbm images.
//!
//! ```sh
//! cargo run --release --example transform_gallery [OUT_DIR]
//! ```

use sweepkit::augment::registry_default;
use sweepkit::data::{gen_shapes_dataset, save_netpbm};
use sweepkit::imgcore::Rng;

fn main() -> sweepkit::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/transform_gallery".to_string());
    std::fs::create_dir_all(&out)?;

    let ds = gen_shapes_dataset(10, 10, (32, 32, 3), 7)?;
    let sample = ds.image(3);
    save_netpbm(sample, format!("{out}/original.ppm"))?;

    let registry = registry_default();
    for id in ["OD", "GCSM", "GESM", "DSSM", "RSPA", "SAT", "HFlip", "Posterize", "Cutout"] {
        let f = registry.get(id).expect("default registry id");
        let mut rng = Rng::new(42);
        let transformed = f.apply(sample, &mut rng)?;
        save_netpbm(&transformed, format!("{out}/{id}.ppm"))?;
        println!("wrote {out}/{id}.ppm");
    }
    println!("gallery complete: {out}");
    Ok(())
}
