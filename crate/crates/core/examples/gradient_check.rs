//! Compares every hand-written gradient with central finite differences.

use speckle_pgd::checks::gradcheck_suite;

fn main() -> speckle_pgd::error::Result<()> {
    for r in gradcheck_suite(0)? {
        println!("{:<5} {:<55} {:.2e}", if r.passed() { "ok" } else { "FAIL" }, r.name, r.value);
    }
    Ok(())
}
