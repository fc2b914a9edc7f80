//! Fits the untrained decoder to a natural crop and to iid noise with the same budget.
//! The natural image is fit far better, which is what makes the decoder a useful prior.

use speckle_pgd::decoder::{fit_decoder, DecoderConfig};
use speckle_pgd::io::read_pgm;
use speckle_pgd::measurement::SceneImage;
use speckle_pgd::rng::RngSpec;

fn main() -> speckle_pgd::error::Result<()> {
    use rand::Rng;
    let iterations: usize = std::env::args().nth(1).map_or(500, |s| s.parse().expect("iteration count"));
    let crop = read_pgm(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/cameraman32.pgm"))?;
    let mut r = RngSpec::new(1, 0).rng();
    let noise = SceneImage::new(32, 32, (0..1024).map(|_| r.random_range(0.0..1.0)).collect())?;

    let cfg = DecoderConfig::new(32, 32);
    println!("{} parameters", cfg.parameter_count());
    for (name, target) in [("cameraman", &crop), ("noise", &noise)] {
        let fit = fit_decoder(target, &cfg, iterations, RngSpec::new(7, 0))?;
        println!("{name:>10}: loss {:.3e} -> {:.3e}", fit.losses[0], fit.losses.last().unwrap());
    }
    Ok(())
}
