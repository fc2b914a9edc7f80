//! Randomized checks of the matrix lemmas behind the error bound.

use speckle_pgd::rng::RngSpec;
use speckle_pgd::theory::lemma_checks;

fn main() -> speckle_pgd::error::Result<()> {
    let report = lemma_checks(200, 100, RngSpec::new(0, 0))?;
    report.write_text(std::io::stdout())?;
    println!("{}", if report.ok() { "all lemmas hold" } else { "some lemma failed" });
    Ok(())
}
