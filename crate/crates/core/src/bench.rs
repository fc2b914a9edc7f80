//! Wall-clock comparison of one Newton-Schulz step against exact inversion.

use std::time::Instant;

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{dense_inverse, exact_inverse_block, newton_schulz_step_block, BlockHermitian, RealMatrix};
use crate::rng::{normal_vec, RngSpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    /// Best-of-reps seconds for one block-form NS step.
    pub ns_step: f64,
    /// Dense LU inverse of the real 2m×2m embedding; `None` when skipped.
    pub dense_inverse: Option<f64>,
    /// Complex LU inverse of `U + iV`; `None` when skipped.
    pub exact_block_inverse: Option<f64>,
}

impl BenchRow {
    pub fn speedup_vs_dense(&self) -> Option<f64> {
        self.dense_inverse.map(|d| d / self.ns_step)
    }

    pub fn speedup_vs_exact(&self) -> Option<f64> {
        self.exact_block_inverse.map(|d| d / self.ns_step)
    }
}

/// A well-conditioned Hermitian positive definite `4√m·I + H` with `H` iid Gaussian
/// Hermitian, built in O(m²).
pub fn bench_matrix(m: usize, rng: RngSpec) -> BlockHermitian {
    let mut r = rng.rng();
    let g = normal_vec(&mut r, 2 * m * m);
    let (gr, gi) = g.split_at(m * m);
    let scale = (m as f64).sqrt();
    let u = RealMatrix::from_fn(m, m, |i, j| {
        let s = 0.5 * (gr[i * m + j] + gr[j * m + i]);
        if i == j { 4.0 * scale + s } else { s }
    });
    let v = RealMatrix::from_fn(m, m, |i, j| 0.5 * (gi[i * m + j] - gi[j * m + i]));
    BlockHermitian { u, v }
}

fn best_of<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut best = f64::INFINITY;
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        std::hint::black_box(f()?);
        best = best.min(t.elapsed().as_secs_f64());
    }
    Ok(best)
}

/// Times the three inversions at size `m`; exact baselines are skipped when
/// `m > max_exact_m`.
pub fn bench_inversion(m: usize, reps: usize, max_exact_m: usize, rng: RngSpec) -> Result<BenchRow> {
    let b = bench_matrix(m, rng);
    // the diagonal-inverse start is a valid NS initial guess for this diagonally dominant B
    let diag = 1.0 / b.u[(0, 0)].max(1.0);
    let m0 = BlockHermitian {
        u: RealMatrix::identity(m).scaled(diag),
        v: RealMatrix::zeros(m, m),
    };
    let ns_step = best_of(reps, || Ok(newton_schulz_step_block(&m0, &b)))?;
    let (dense, exact) = if m <= max_exact_m {
        let e = b.embed();
        (
            Some(best_of(reps, || dense_inverse(&e))?),
            Some(best_of(reps, || exact_inverse_block(&b))?),
        )
    } else {
        (None, None)
    };
    Ok(BenchRow {
        m,
        ns_step,
        dense_inverse: dense,
        exact_block_inverse: exact,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bench_matrix_is_hermitian_and_invertible() {
        let b = bench_matrix(16, RngSpec::new(1, 1));
        assert!(b.is_hermitian(0.0));
        let inv = exact_inverse_block(&b).unwrap();
        assert!(b.residual(&inv) < 1e-12);
    }

    #[test]
    fn small_bench_runs() {
        let row = bench_inversion(8, 1, 8, RngSpec::new(0, 0)).unwrap();
        assert!(row.ns_step > 0.0 && row.dense_inverse.is_some());
        assert!(bench_inversion(8, 1, 4, RngSpec::new(0, 0)).unwrap().dense_inverse.is_none());
    }
}
