//! Times one block-form Newton-Schulz step against full inversions.
//!
//! `cargo run --release --example inversion_bench -- [m]`

use speckle_pgd::bench::bench_inversion;
use speckle_pgd::rng::RngSpec;

fn main() -> speckle_pgd::error::Result<()> {
    let m: usize = std::env::args().nth(1).map_or(256, |s| s.parse().expect("matrix size"));
    let row = bench_inversion(m, 3, 2048, RngSpec::new(0, 0))?;
    println!("m={m}: NS step {:.4}s", row.ns_step);
    if let (Some(d), Some(s)) = (row.dense_inverse, row.speedup_vs_dense()) {
        println!("dense 2m x 2m inverse {d:.4}s ({s:.1}x)");
    }
    if let (Some(e), Some(s)) = (row.exact_block_inverse, row.speedup_vs_exact()) {
        println!("complex LU inverse {e:.4}s ({s:.1}x)");
    }
    Ok(())
}
