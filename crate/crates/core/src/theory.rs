//! Scaling experiments on the real-valued model and Monte-Carlo checks of the matrix
//! lemmas behind them.
//!
//! The image model here is a linear generator `θ ↦ offset + Sθ` whose embedding `S` has
//! orthonormal block-constant columns, so it is exactly 1-Lipschitz and the maximum
//! likelihood estimate over its range is a small smooth problem.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::nll_and_grad_real;
use crate::linalg::{dense_inverse, spectral_bounds, symmetric_eigenvalues, RealMatrix};
use crate::measurement::{generate_looks, make_sensing, Ensemble, LookSet, SceneImage, SensingMatrix};
use crate::rng::{normal_vec, RngSpec};

/// `x = offset + Sθ` with `S` block-constant: parameter `j` drives the `n/k` coordinates
/// `[j·n/k, (j+1)·n/k)` with weight `1/√(n/k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzGenerator {
    pub n: usize,
    pub k: usize,
    pub offset: f64,
    pub x_min: f64,
    pub x_max: f64,
}

impl LipschitzGenerator {
    /// Defaults `x_min = 0.25`, `x_max = 1`, offset at the midpoint.
    pub fn new(n: usize, k: usize) -> Result<Self> {
        Self::with_range(n, k, 0.625, 0.25, 1.0)
    }

    pub fn with_range(n: usize, k: usize, offset: f64, x_min: f64, x_max: f64) -> Result<Self> {
        if k == 0 || n == 0 || !n.is_multiple_of(k) {
            return Err(Error::shape(format!("k={k} must divide n={n}")));
        }
        if !(x_min > 0.0 && x_max > x_min) {
            return Err(Error::Config("need 0 < x_min < x_max".into()));
        }
        Ok(Self {
            n,
            k,
            offset,
            x_min,
            x_max,
        })
    }

    fn block(&self) -> usize {
        self.n / self.k
    }

    fn weight(&self) -> f64 {
        1.0 / (self.block() as f64).sqrt()
    }

    /// Radius `x_max·√(n/k)` of the parameter ball.
    pub fn domain_radius(&self) -> f64 {
        self.x_max * (self.block() as f64).sqrt()
    }

    /// The n×k embedding.
    pub fn embedding(&self) -> RealMatrix {
        let (b, s) = (self.block(), self.weight());
        RealMatrix::from_fn(self.n, self.k, |i, j| if i / b == j { s } else { 0.0 })
    }

    pub fn eval(&self, theta: &[f64]) -> Vec<f64> {
        let (b, s) = (self.block(), self.weight());
        (0..self.n).map(|i| self.offset + s * theta[i / b]).collect()
    }

    /// `Sᵀ g`.
    pub fn pullback(&self, grad_x: &[f64]) -> Vec<f64> {
        let s = self.weight();
        grad_x.chunks(self.block()).map(|c| s * c.iter().sum::<f64>()).collect()
    }

    /// Box of parameters whose image stays in `[x_min, x_max]`.
    pub fn theta_bounds(&self) -> (f64, f64) {
        let s = self.weight();
        ((self.x_min - self.offset) / s, (self.x_max - self.offset) / s)
    }

    pub fn project(&self, theta: &mut [f64]) {
        let (lo, hi) = self.theta_bounds();
        theta.iter_mut().for_each(|t| *t = t.clamp(lo, hi));
    }

    pub fn sample_theta(&self, rng: RngSpec) -> Vec<f64> {
        let (lo, hi) = self.theta_bounds();
        let mut r = rng.rng();
        (0..self.k).map(|_| r.random_range(lo..hi)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MleOptions {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    /// Stop when a step moves θ by less than this (Euclidean).
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_step")]
    pub initial_step: f64,
}

fn default_restarts() -> usize {
    5
}

fn default_max_iters() -> usize {
    500
}

fn default_tol() -> f64 {
    1e-10
}

fn default_step() -> f64 {
    1.0
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            restarts: default_restarts(),
            max_iters: default_max_iters(),
            tol: default_tol(),
            initial_step: default_step(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleResult {
    pub theta: Vec<f64>,
    pub x: Vec<f64>,
    pub nll: f64,
    /// Gradient steps taken by the winning start.
    pub iterations: usize,
}

/// `f(gen(θ))` and its gradient in θ; singular covariances count as +∞.
fn objective(theta: &[f64], looks: &LookSet, a: &SensingMatrix, g: &LipschitzGenerator) -> Result<(f64, Vec<f64>)> {
    match nll_and_grad_real(&g.eval(theta), looks, a, true) {
        Ok((f, gx)) => Ok((f, g.pullback(&gx))),
        Err(Error::Singular { .. }) => Ok((f64::INFINITY, vec![0.0; theta.len()])),
        Err(e) => Err(e),
    }
}

fn descend(
    mut theta: Vec<f64>,
    looks: &LookSet,
    a: &SensingMatrix,
    g: &LipschitzGenerator,
    opt: &MleOptions,
) -> Result<MleResult> {
    g.project(&mut theta);
    let (mut f, mut grad) = objective(&theta, looks, a, g)?;
    let mut step = opt.initial_step;
    let mut iterations = 0;
    while iterations < opt.max_iters && f.is_finite() {
        iterations += 1;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, d)| t - step * d).collect();
            g.project(&mut cand);
            let moved: f64 = cand.iter().zip(&theta).map(|(c, t)| (c - t) * (c - t)).sum();
            let (fc, gc) = objective(&cand, looks, a, g)?;
            // sufficient decrease for a projected step
            if fc <= f - 0.5 * moved / step {
                accepted = Some((cand, fc, gc, moved.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc, moved)) = accepted else { break };
        theta = cand;
        f = fc;
        grad = gc;
        step *= 2.0;
        if moved < opt.tol {
            break;
        }
    }
    Ok(MleResult {
        x: g.eval(&theta),
        theta,
        nll: f,
        iterations,
    })
}

/// Maximum likelihood over the generator's range by projected gradient descent in θ.
///
/// The first start is θ = 0 (the offset image, projected into range); the remaining
/// `restarts - 1` are uniform in the feasible box. The lowest final likelihood wins.
pub fn mle_solve_real(
    looks: &LookSet,
    a: &SensingMatrix,
    g: &LipschitzGenerator,
    opt: &MleOptions,
    rng: RngSpec,
) -> Result<MleResult> {
    if a.n() != g.n {
        return Err(Error::shape("generator and sensing matrix disagree on n"));
    }
    let mut best: Option<MleResult> = None;
    for r in 0..opt.restarts.max(1) {
        let start = if r == 0 {
            vec![0.0; g.k]
        } else {
            g.sample_theta(rng.child(r as u64))
        };
        let res = descend(start, looks, a, g, opt)?;
        if best.as_ref().is_none_or(|b| res.nll < b.nll) {
            best = Some(res);
        }
    }
    let best = best.expect("at least one start");
    if !best.nll.is_finite() {
        return Err(Error::Singular {
            condition: f64::INFINITY,
        });
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n: Vec<usize>,
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub looks: Vec<usize>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub sigma_z: f64,
    #[serde(default)]
    pub mle: MleOptions,
}

fn default_trials() -> usize {
    5
}

impl SweepConfig {
    /// Look sweep at fixed `n`, `m`, `k`.
    pub fn looks_sweep(n: usize, m: usize, k: usize, looks: Vec<usize>) -> Self {
        Self {
            n: vec![n],
            m: vec![m],
            k: vec![k],
            looks,
            trials: default_trials(),
            seed: 0,
            sigma_z: 0.0,
            mle: MleOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [&self.n, &self.m, &self.k, &self.looks].iter().any(|v| v.is_empty() || v.contains(&0)) {
            return Err(Error::Config("sweep grids must be non-empty and positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("sweep needs at least one trial per cell".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub looks: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    /// Trials whose solver failed; excluded from the statistics.
    pub failures: usize,
    /// Log-log slope of `MSE - plateau` against L for this (n, m, k), the plateau being
    /// the median at the largest L.
    pub l_slope: Option<f64>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One Monte-Carlo trial. The scene and `A` depend on `(n, m, k, trial)` only and the
/// looks for `L` are the first `L` of one fixed sequence, so cells differing only in `L`
/// are paired.
pub fn sweep_trial(n: usize, m: usize, k: usize, looks: usize, trial: usize, cfg: &SweepConfig) -> Result<f64> {
    let g = LipschitzGenerator::new(n, k)?;
    let base = RngSpec::new(cfg.seed, crate::rng::streams::THEORY).path(&[n as u64, m as u64, k as u64, trial as u64]);
    let x_o = g.eval(&g.sample_theta(base.child(0)));
    let a = make_sensing(m, n, Ensemble::GaussianReal, base.child(1))?;
    let scene = SceneImage::new(1, n, x_o.clone())?;
    let ls = generate_looks(&scene, &a, looks, 1.0, cfg.sigma_z, true, base.child(2))?;
    let est = mle_solve_real(&ls, &a, &g, &cfg.mle, base.child(3))?;
    Ok(est.x.iter().zip(&x_o).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / n as f64)
}

/// Median and quartile MSE for every grid cell with `m ≤ n` and `k | n`.
pub fn sweep_mse(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n {
        for &m in &cfg.m {
            for &k in &cfg.k {
                if m > n || n % k != 0 {
                    continue;
                }
                let start = rows.len();
                for &l in &cfg.looks {
                    let mut mses = Vec::with_capacity(cfg.trials);
                    let mut failures = 0;
                    for t in 0..cfg.trials {
                        match sweep_trial(n, m, k, l, t, cfg) {
                            Ok(v) if v.is_finite() => mses.push(v),
                            Ok(_) | Err(Error::Singular { .. }) | Err(Error::NonFinite { .. }) => failures += 1,
                            Err(e) => return Err(e),
                        }
                    }
                    mses.sort_by(f64::total_cmp);
                    rows.push(SweepRow {
                        n,
                        m,
                        k,
                        looks: l,
                        median: quantile(&mses, 0.5),
                        q1: quantile(&mses, 0.25),
                        q3: quantile(&mses, 0.75),
                        failures,
                        l_slope: None,
                    });
                }
                let slope = plateau_slope(&rows[start..]);
                rows[start..].iter_mut().for_each(|r| r.l_slope = slope);
            }
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log(median - plateau)` on `log L`, using the cells below the
/// largest L whose excess over the plateau is positive.
fn plateau_slope(rows: &[SweepRow]) -> Option<f64> {
    let last = rows.iter().max_by_key(|r| r.looks)?;
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.looks < last.looks && r.median > last.median)
        .map(|r| ((r.looks as f64).ln(), (r.median - last.median).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let np = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / np;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / np;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[SweepRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::from(e).at(path.display().to_string()))?;
    w.write_record(["n", "m", "k", "L", "median_mse", "q1_mse", "q3_mse", "failures", "l_slope"])?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.k.to_string(),
            r.looks.to_string(),
            r.median.to_string(),
            r.q1.to_string(),
            r.q3.to_string(),
            r.failures.to_string(),
            r.l_slope.map(|s| s.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// `max |λ(B⁻¹ - C⁻¹)|` and the bound `σ_max(B - C) / (σ_min(B) σ_min(C))`.
pub fn inverse_difference_bound(b: &RealMatrix, c: &RealMatrix) -> Result<(f64, f64)> {
    let diff = dense_inverse(b)?.sub(&dense_inverse(c)?).symmetrized();
    let eig = symmetric_eigenvalues(&diff)?;
    let worst = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let (_, smax) = spectral_bounds(&b.sub(c))?;
    let (bmin, _) = spectral_bounds(b)?;
    let (cmin, _) = spectral_bounds(c)?;
    Ok((worst, smax / (bmin * cmin)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaCount {
    pub name: String,
    pub passed: usize,
    pub trials: usize,
    pub required: usize,
}

impl LemmaCount {
    pub fn ok(&self) -> bool {
        self.passed >= self.required
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub eigen_bound: LemmaCount,
    pub singular_band: LemmaCount,
    /// Relative Frobenius error of `(1/L) Σ w wᵀ` against the identity.
    pub covariance_rel_error: f64,
    pub covariance_looks: usize,
}

impl LemmaReport {
    pub fn ok(&self) -> bool {
        self.eigen_bound.ok() && self.singular_band.ok() && self.covariance_rel_error < COVARIANCE_TOLERANCE
    }

    pub fn write_text(&self, mut out: impl Write) -> std::io::Result<()> {
        for c in [&self.eigen_bound, &self.singular_band] {
            writeln!(
                out,
                "{}: {}/{} passed (need {}) {}",
                c.name,
                c.passed,
                c.trials,
                c.required,
                if c.ok() { "PASS" } else { "FAIL" }
            )?;
        }
        writeln!(
            out,
            "sample covariance at L={}: relative error {:.4} (need < {}) {}",
            self.covariance_looks,
            self.covariance_rel_error,
            COVARIANCE_TOLERANCE,
            if self.covariance_rel_error < COVARIANCE_TOLERANCE { "PASS" } else { "FAIL" }
        )
    }
}

pub const COVARIANCE_TOLERANCE: f64 = 0.05;
const LEMMA_DIM: usize = 8;
const BAND_M: usize = 32;
const BAND_N: usize = 64;
const BAND_T: f64 = 3.0;
const COVARIANCE_DIM: usize = 16;
const COVARIANCE_LOOKS: usize = 10_000;

fn random_symmetric(rng: RngSpec, n: usize) -> RealMatrix {
    let g = RealMatrix::new(n, n, normal_vec(&mut rng.rng(), n * n)).expect("finite draws");
    g.add(&g.transpose()).scaled(0.5)
}

/// Runs the eigenvalue-bound lemma on `eigen_trials` random symmetric pairs, the
/// Gaussian singular-value band (t = 3) on `band_trials` matrices, and the sample
/// covariance of 10⁴ standard normal vectors.
pub fn lemma_checks(eigen_trials: usize, band_trials: usize, rng: RngSpec) -> Result<LemmaReport> {
    if eigen_trials == 0 || band_trials == 0 {
        return Err(Error::Config("lemma checks need at least one trial".into()));
    }
    let mut passed = 0;
    for t in 0..eigen_trials {
        let r = rng.path(&[0, t as u64]);
        let b = random_symmetric(r.child(0), LEMMA_DIM);
        let c = random_symmetric(r.child(1), LEMMA_DIM);
        let (worst, bound) = inverse_difference_bound(&b, &c)?;
        if worst <= bound * (1.0 + 1e-9) {
            passed += 1;
        }
    }
    let eigen_bound = LemmaCount {
        name: "inverse-difference eigenvalue bound".into(),
        passed,
        trials: eigen_trials,
        required: eigen_trials,
    };

    let (lo, hi) = (
        (BAND_N as f64).sqrt() - (BAND_M as f64).sqrt() - BAND_T,
        (BAND_N as f64).sqrt() + (BAND_M as f64).sqrt() + BAND_T,
    );
    let mut passed = 0;
    for t in 0..band_trials {
        let a = make_sensing(BAND_M, BAND_N, Ensemble::GaussianReal, rng.path(&[1, t as u64]))?;
        let (smin, smax) = spectral_bounds(&a.re)?;
        if smin >= lo && smax <= hi {
            passed += 1;
        }
    }
    let singular_band = LemmaCount {
        name: format!("Gaussian {BAND_M}x{BAND_N} singular-value band (t={BAND_T})"),
        passed,
        trials: band_trials,
        required: (band_trials * 95).div_ceil(100),
    };

    let d = COVARIANCE_DIM;
    let mut acc = vec![0.0; d * d];
    let mut r = rng.path(&[2]).rng();
    for _ in 0..COVARIANCE_LOOKS {
        let w = normal_vec(&mut r, d);
        for i in 0..d {
            for j in 0..d {
                acc[i * d + j] += w[i] * w[j];
            }
        }
    }
    let l = COVARIANCE_LOOKS as f64;
    let err: f64 = (0..d * d)
        .map(|idx| {
            let target = if idx / d == idx % d { 1.0 } else { 0.0 };
            (acc[idx] / l - target).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    Ok(LemmaReport {
        eigen_bound,
        singular_band,
        covariance_rel_error: err / (d as f64).sqrt(),
        covariance_looks: COVARIANCE_LOOKS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::Look;

    #[test]
    fn scalar_mle_is_root_mean_square() {
        let g = LipschitzGenerator::with_range(1, 1, 0.0, 0.01, 10.0).unwrap();
        let a = SensingMatrix::real(RealMatrix::identity(1));
        let looks = LookSet::new(
            vec![Look::new(vec![1.0], vec![0.0]).unwrap(), Look::new(vec![3f64.sqrt()], vec![0.0]).unwrap()],
            1.0,
            0.0,
            true,
        )
        .unwrap();
        let res = mle_solve_real(&looks, &a, &g, &MleOptions::default(), RngSpec::new(0, 0)).unwrap();
        assert!((res.x[0] - 2f64.sqrt()).abs() < 1e-6, "{}", res.x[0]);
    }

    #[test]
    fn no_steps_returns_offset() {
        let g = LipschitzGenerator::new(16, 4).unwrap();
        let a = make_sensing(8, 16, Ensemble::GaussianReal, RngSpec::new(1, 1)).unwrap();
        let x = SceneImage::constant(1, 16, 0.5).unwrap();
        let looks = generate_looks(&x, &a, 2, 1.0, 0.0, true, RngSpec::new(1, 2)).unwrap();
        let opt = MleOptions {
            restarts: 1,
            max_iters: 0,
            ..MleOptions::default()
        };
        let res = mle_solve_real(&looks, &a, &g, &opt, RngSpec::new(0, 0)).unwrap();
        assert!(res.x.iter().all(|v| *v == 0.625));
    }

    #[test]
    fn generator_is_isometric() {
        let g = LipschitzGenerator::new(12, 3).unwrap();
        let s = g.embedding();
        let (smin, smax) = spectral_bounds(&s).unwrap();
        assert!((smin - 1.0).abs() < 1e-12 && (smax - 1.0).abs() < 1e-12);
        let th = [0.1, -0.2, 0.3];
        let direct = s.matvec(&th);
        for (x, d) in g.eval(&th).iter().zip(&direct) {
            assert!((x - 0.625 - d).abs() < 1e-15);
        }
        assert!((g.domain_radius() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn diagonal_lemma_example() {
        let b = RealMatrix::from_diag(&[1.0, 2.0]);
        let c = RealMatrix::from_diag(&[2.0, 1.0]);
        let (worst, bound) = inverse_difference_bound(&b, &c).unwrap();
        assert!((worst - 0.5).abs() < 1e-12);
        assert!((bound - 1.0).abs() < 1e-12);
        let (worst, _) = inverse_difference_bound(&b, &b).unwrap();
        assert_eq!(worst, 0.0);
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5), 3.0);
        assert_eq!(quantile(&v, 0.25), 2.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn plateau_slope_of_power_law() {
        let rows: Vec<SweepRow> = [1usize, 4, 16, 64, 1 << 20]
            .iter()
            .map(|&l| SweepRow {
                n: 1,
                m: 1,
                k: 1,
                looks: l,
                median: 0.01 + 1.0 / l as f64,
                q1: 0.0,
                q3: 0.0,
                failures: 0,
                l_slope: None,
            })
            .collect();
        let s = plateau_slope(&rows).unwrap();
        assert!((s + 1.0).abs() < 1e-3, "{s}");
    }
}
