//! Monte-Carlo MSE of the maximum-likelihood estimate over a generator with k parameters,
//! as the number of looks grows.

use speckle_pgd::theory::{sweep_mse, SweepConfig};

fn main() -> speckle_pgd::error::Result<()> {
    let mut cfg = SweepConfig::looks_sweep(64, 32, 4, vec![1, 4, 16, 64]);
    cfg.trials = 5;
    for row in sweep_mse(&cfg)? {
        println!("L={:>3}: median MSE {:.3e} (q1 {:.3e}, q3 {:.3e})", row.looks, row.median, row.q1, row.q3);
    }
    Ok(())
}
