//! Round-trip the on-disk dataset formats: CIFAR-10 binary records and
//! netpbm directories with a labels manifest.
//!
//! ```sh
//! cargo run --release --example dataset_formats [OUT_DIR]
//! ```

use sweepkit::data::{
    gen_shapes_dataset, load_cifar10_binary, load_dataset_dir, save_cifar10_binary,
    save_dataset_dir,
};

fn main() -> sweepkit::Result<()> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "target/dataset_formats".to_string());
    std::fs::create_dir_all(&out)?;

    let ds = gen_shapes_dataset(50, 10, (32, 32, 3), 3)?;

    // CIFAR-10 binary: 3073-byte records, planar RGB
    let bin_a = format!("{out}/shapes_a.bin");
    let bin_b = format!("{out}/shapes_b.bin");
    save_cifar10_binary(&ds, &bin_a)?;
    let loaded = load_cifar10_binary(&bin_a)?;
    save_cifar10_binary(&loaded, &bin_b)?;
    let identical = std::fs::read(&bin_a)? == std::fs::read(&bin_b)?;
    println!(
        "CIFAR-10 binary: {} records, round trip byte-identical: {identical}",
        loaded.len()
    );

    // netpbm directory with labels.txt manifest
    let dir = format!("{out}/ppm_dataset");
    save_dataset_dir(&ds, &dir)?;
    let reloaded = load_dataset_dir(&dir, Some(10))?;
    println!(
        "netpbm dir: {} files under {dir}, reload equal: {}",
        reloaded.len(),
        reloaded == ds
    );
    Ok(())
}
