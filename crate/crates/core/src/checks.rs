//! Finite-difference and self-consistency checks of every hand-derived gradient.
//!
//! These back the `gradcheck` subcommand and are reused by the test suites.

use rand::Rng;
use serde::Serialize;

use crate::decoder::{decoder_loss_grads, DecoderConfig, DecoderParams, LatentInput};
use crate::error::Result;
use crate::linalg::ns_step_with_residual;
use crate::likelihood::{build_covariance, covariance_matrix, grad_nll_fast, grad_nll_full, grad_nll_real, nll_complex, nll_real, ColumnCache};
use crate::measurement::{generate_looks, make_sensing, Ensemble, LookSet, SceneImage, SensingMatrix};
use crate::rng::RngSpec;

/// Central differences of `f` at `x` with step `h`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let up = f(&probe)?;
        probe[j] = x[j] - h;
        let down = f(&probe)?;
        probe[j] = x[j];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

/// `‖a - b‖₂ / ‖b‖₂`.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    let den: f64 = b.iter().map(|q| q * q).sum();
    (num / den).sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
}

impl CheckResult {
    pub fn new(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
        }
    }

    pub fn passed(&self) -> bool {
        self.value < self.threshold
    }
}

/// A random positive scene, sensing matrix and look set.
pub fn random_instance(
    n: usize,
    m: usize,
    looks: usize,
    ensemble: Ensemble,
    sigma_z: f64,
    rng: RngSpec,
) -> Result<(Vec<f64>, SensingMatrix, LookSet)> {
    let mut r = rng.child(0).rng();
    let x: Vec<f64> = (0..n).map(|_| r.random_range(0.2..1.0)).collect();
    let a = make_sensing(m, n, ensemble, rng.child(1))?;
    let scene = SceneImage::new(1, n, x.clone())?;
    let ls = generate_looks(&scene, &a, looks, 1.0, sigma_z, ensemble.is_real(), rng.child(2))?;
    Ok((x, a, ls))
}

pub const FD_STEP: f64 = 1e-5;

/// Complex likelihood: full and fast gradients against central differences, and
/// against each other.
pub fn complex_gradient_checks(n: usize, m: usize, looks: usize, rng: RngSpec) -> Result<[CheckResult; 3]> {
    let (x, a, ls) = random_instance(n, m, looks, Ensemble::GaussianComplex, 0.1, rng)?;
    let state = build_covariance(&x, &a, ls.sigma_w, ls.sigma_z)?;
    let full = grad_nll_full(&x, &ls, &state, &ColumnCache::new(&a))?;
    let fast = grad_nll_fast(&x, &ls, &state, &a)?;
    let fd = central_differences(&x, FD_STEP, |p| nll_complex(p, &ls, &a))?;
    Ok([
        CheckResult::new(format!("complex full gradient vs FD (n={n}, m={m}, L={looks})"), relative_l2(&full, &fd), 1e-6),
        CheckResult::new(format!("complex fast gradient vs FD (n={n}, m={m}, L={looks})"), relative_l2(&fast, &fd), 1e-6),
        CheckResult::new("complex fast vs full gradient (max abs)", max_abs_diff(&fast, &full), 1e-10),
    ])
}

pub fn real_gradient_check(n: usize, m: usize, looks: usize, rng: RngSpec) -> Result<CheckResult> {
    let (x, a, ls) = random_instance(n, m, looks, Ensemble::GaussianReal, 0.1, rng)?;
    let g = grad_nll_real(&x, &ls, &a)?;
    let fd = central_differences(&x, FD_STEP, |p| nll_real(p, &ls, &a))?;
    Ok(CheckResult::new(
        format!("real gradient vs FD (n={n}, m={m}, L={looks})"),
        relative_l2(&g, &fd),
        1e-6,
    ))
}

/// Decoder backward pass on an 8×8 output with four channels per block, as relative L2
/// error against central differences.
pub fn decoder_gradient_check(kernel: usize, rng: RngSpec) -> Result<CheckResult> {
    let cfg = DecoderConfig::new(8, 8).with_channels(vec![4; 4]).with_kernel(kernel);
    let mut params = DecoderParams::init(&cfg, rng.child(0));
    let mut r = rng.child(1).rng();
    for layer in 0..params.layers() {
        params.bias_mut(layer).iter_mut().for_each(|b| *b = r.random_range(-0.1..0.1));
    }
    let u = LatentInput::sample(&cfg, rng.child(2));
    let target = SceneImage::new(8, 8, (0..64).map(|_| r.random_range(0.0..1.0)).collect())?;
    let (_, grads) = decoder_loss_grads(&params, &u, &target, &cfg)?;
    // a step can straddle a ReLU kink, so take the better of two step sizes
    let mut value = f64::INFINITY;
    for h in [1e-4, 1e-6] {
        let fd = central_differences(&params.data, h, |p| {
            let mut q = params.clone();
            q.data.copy_from_slice(p);
            Ok(decoder_loss_grads(&q, &u, &target, &cfg)?.0)
        })?;
        value = value.min(relative_l2(&grads.data, &fd));
    }
    Ok(CheckResult::new(format!("decoder {kernel}x{kernel} gradient vs FD"), value, 1e-6))
}

/// Upper bound on Newton-Schulz steps before a warm start counts as failed.
pub const NS_MAX_STEPS: usize = 60;

/// Whether Newton-Schulz, warm-started at the exact inverse for a scene `x ~ U[0.001, 1]`,
/// converges (`‖I - BM‖_F < 1e-10`) for the covariance at `x + δ·s` with random signs `s`.
/// Noise-free covariance, `σ_w = 1`.
pub fn ns_warm_start_converges(a: &SensingMatrix, delta: f64, rng: RngSpec) -> Result<bool> {
    let mut r = rng.rng();
    let x: Vec<f64> = (0..a.n()).map(|_| r.random_range(0.001..=1.0)).collect();
    let moved: Vec<f64> = x
        .iter()
        .map(|v| if r.random_bool(0.5) { v + delta } else { v - delta })
        .collect();
    let mut m = build_covariance(&x, a, 1.0, 0.0)?.binv;
    let b = covariance_matrix(&moved, a, 1.0, 0.0)?;
    for _ in 0..NS_MAX_STEPS {
        let (next, res) = ns_step_with_residual(&m, &b);
        let norm = res.embedded_frobenius();
        if norm < 1e-10 {
            return Ok(true);
        }
        if !norm.is_finite() || norm > 1e8 {
            return Ok(false);
        }
        m = next;
    }
    Ok(b.residual(&m) < 1e-10)
}

/// Everything the `gradcheck` subcommand runs.
pub fn gradcheck_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let root = RngSpec::new(seed, 0x400);
    let mut out = Vec::new();
    out.extend(complex_gradient_checks(12, 6, 2, root.child(0))?);
    out.push(real_gradient_check(16, 8, 4, root.child(1))?);
    out.push(decoder_gradient_check(1, root.child(2))?);
    out.push(decoder_gradient_check(3, root.child(3))?);
    Ok(out)
}
