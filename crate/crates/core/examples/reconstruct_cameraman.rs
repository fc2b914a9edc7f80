//! Simulates multilook speckle measurements of a 32×32 crop and recovers it with PGD.
//!
//! `cargo run --release --example reconstruct_cameraman -- [looks] [iterations]`

use speckle_pgd::decoder::DecoderConfig;
use speckle_pgd::io::read_pgm;
use speckle_pgd::measurement::{generate_looks, init_estimate, make_sensing, Ensemble};
use speckle_pgd::metrics::psnr;
use speckle_pgd::pgd::{pgd_run_with, PgdConfig};
use speckle_pgd::rng::{streams, RngSpec};

fn main() -> speckle_pgd::error::Result<()> {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("integer argument"));
    let looks = args.next().unwrap_or(32);
    let iterations = args.next().unwrap_or(20);

    let truth = read_pgm(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/cameraman32.pgm"))?;
    let n = truth.len();
    let a = make_sensing(n / 2, n, Ensemble::HaarRows, RngSpec::new(0, streams::SENSING))?;
    let data = generate_looks(&truth, &a, looks, 1.0, 0.0, false, RngSpec::new(0, streams::LOOKS))?;
    let init = init_estimate(&a, &data, 32, 32)?;
    println!("m={} n={n} L={looks}, initial PSNR {:.2} dB", a.m(), psnr(&init, &truth)?);

    let mut cfg = PgdConfig::default();
    cfg.iterations = iterations;
    cfg.decoder = DecoderConfig::default().with_channels(vec![32; 4]);
    let (x, traj) = pgd_run_with(&data, &a, 32, 32, &cfg, Some(&truth), &mut |rec, _| {
        println!(
            "{:>3} {:<9} nll {:>12.4} dx {:.4} psnr {:.2}",
            rec.iteration,
            rec.inverse_mode.as_str(),
            rec.nll,
            rec.dx_inf,
            rec.psnr.unwrap_or(f64::NAN)
        );
        Ok(())
    })?;
    println!("final PSNR {:.2} dB, {} NS fallbacks", psnr(&x, &truth)?, traj.ns_fallbacks);
    Ok(())
}
