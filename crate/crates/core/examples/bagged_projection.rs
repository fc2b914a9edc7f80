//! Denoises a noisy crop by fitting decoders to tiles at several scales and averaging.

use speckle_pgd::bagging::{bagged_project, BagSpec};
use speckle_pgd::decoder::DecoderConfig;
use speckle_pgd::io::read_pgm;
use speckle_pgd::measurement::SceneImage;
use speckle_pgd::metrics::psnr;
use speckle_pgd::rng::{normal_vec, RngSpec};

fn main() -> speckle_pgd::error::Result<()> {
    let clean = read_pgm(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/cameraman32.pgm"))?;
    let noise = normal_vec(&mut RngSpec::new(3, 0).rng(), clean.len());
    let noisy = SceneImage::clamped(32, 32, clean.pixels().iter().zip(&noise).map(|(p, z)| p + 0.1 * z).collect())?;

    let spec = BagSpec::auto(32, 32);
    let cfg = DecoderConfig::default().with_channels(vec![64; 4]);
    let est = bagged_project(&noisy, &spec, &cfg, RngSpec::new(4, 0))?;
    println!("noisy input: {:.2} dB", psnr(&noisy, &clean)?);
    for (patch, scale) in spec.patch_sizes.iter().zip(&est.per_scale) {
        println!("{:>2}x{:<2} tiles: {:.2} dB", patch.0, patch.1, psnr(scale, &clean)?);
    }
    println!("bagged:      {:.2} dB", psnr(&est.average, &clean)?);
    Ok(())
}
