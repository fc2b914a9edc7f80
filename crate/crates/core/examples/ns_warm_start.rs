//! How far the scene can move before a Newton-Schulz warm start stops converging.

use speckle_pgd::checks::ns_warm_start_converges;
use speckle_pgd::measurement::{make_sensing, Ensemble};
use speckle_pgd::rng::RngSpec;

fn main() -> speckle_pgd::error::Result<()> {
    let (m, n, trials) = (128, 256, 10);
    let a = make_sensing(m, n, Ensemble::HaarRows, RngSpec::new(0, 1))?;
    for delta in [0.05, 0.10, 0.12, 0.15, 0.20] {
        let mut ok = 0;
        for t in 0..trials {
            ok += ns_warm_start_converges(&a, delta, RngSpec::new(t, 2))? as usize;
        }
        println!("delta {delta:.2}: {ok}/{trials} converged");
    }
    Ok(())
}
