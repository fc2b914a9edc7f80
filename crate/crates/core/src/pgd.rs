//! Projected gradient descent on the multilook likelihood.
//!
//! Each outer iteration refreshes the inverse covariance (exactly on the first iteration
//! and after large moves, otherwise by Newton-Schulz from the previous inverse), takes a
//! gradient step, clamps to [0, 1] and projects with [`bagged_project`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bagging::{bagged_project, BagSpec, BaggedEstimate};
use crate::decoder::DecoderConfig;
use crate::error::{Error, Result};
use crate::likelihood::{
    grad_nll_fast, nll_and_grad_real, nll_at_state, refresh_inverse, CovarianceState, InverseMode,
};
use crate::measurement::{init_estimate, LookSet, SceneImage, SensingMatrix};
use crate::metrics::{psnr, ssim};
use crate::rng::{streams, RngSpec};

/// Look count at or below which the small default step size applies.
pub const SMALL_LOOK_COUNT: usize = 8;

/// Outer iterations when a configuration does not say.
pub const DEFAULT_ITERATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PgdConfig {
    /// Outer iterations.
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    /// Likelihood step size; `None` picks 0.01 for at most 8 looks and 0.1 otherwise.
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default = "default_delta_x")]
    pub delta_x: f64,
    #[serde(default = "default_ns_steps")]
    pub ns_steps: usize,
    /// Always invert exactly (control runs).
    #[serde(default)]
    pub exact_inverse: bool,
    /// Empty means [`BagSpec::auto`] for the image size.
    #[serde(default)]
    pub bag: BagSpec,
    #[serde(default)]
    pub decoder: DecoderConfig,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    DEFAULT_ITERATIONS
}

impl Default for PgdConfig {
    fn default() -> Self {
        Self::new(DEFAULT_ITERATIONS, BagSpec::default(), DecoderConfig::default())
    }
}

fn default_delta_x() -> f64 {
    0.12
}

fn default_ns_steps() -> usize {
    1
}

impl PgdConfig {
    pub fn new(iterations: usize, bag: BagSpec, decoder: DecoderConfig) -> Self {
        Self {
            iterations,
            mu: None,
            delta_x: default_delta_x(),
            ns_steps: default_ns_steps(),
            exact_inverse: false,
            bag,
            decoder,
            seed: 0,
        }
    }

    pub fn step_size(&self, looks: usize) -> f64 {
        self.mu.unwrap_or(if looks <= SMALL_LOOK_COUNT { 0.01 } else { 0.1 })
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::Config("at least one outer iteration is required".into()));
        }
        if let Some(mu) = self.mu {
            if !(mu >= 0.0 && mu.is_finite()) {
                return Err(Error::Config("step size must be finite and non-negative".into()));
            }
        }
        if !(self.delta_x > 0.0) {
            return Err(Error::Config("delta_x must be positive".into()));
        }
        self.decoder.resized(height, width).validate()?;
        self.bag.validate(height, width)
    }

    /// Fills every implicit choice (step size, bag scales, decoder output size) with the
    /// value a run on an `height × width` image with `looks` looks will use.
    pub fn resolved(&self, height: usize, width: usize, looks: usize) -> Self {
        Self {
            mu: Some(self.step_size(looks)),
            bag: if self.bag.is_empty() {
                BagSpec::auto(height, width)
            } else {
                self.bag.clone()
            },
            decoder: self.decoder.resized(height, width),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 1-based outer iteration.
    pub iteration: usize,
    pub inverse_mode: InverseMode,
    /// Likelihood at the iterate entering the step.
    pub nll: f64,
    /// `‖x_t - x_{t-1}‖_∞` (0 on the first iteration).
    pub dx_inf: f64,
    /// Quality of the iterate leaving the step, when ground truth is known.
    pub psnr: Option<f64>,
    pub ssim: Option<f64>,
    /// Wall time since the start of the run.
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    /// Newton-Schulz steps that diverged and were redone exactly.
    pub ns_fallbacks: usize,
}

/// Everything carried between outer iterations.
#[derive(Debug, Clone)]
pub struct PgdState {
    pub t: usize,
    pub x: SceneImage,
    prev_x: Option<Vec<f64>>,
    cov: Option<CovarianceState>,
}

impl PgdState {
    /// Back-projection start point.
    pub fn init(a: &SensingMatrix, looks: &LookSet, height: usize, width: usize) -> Result<Self> {
        Ok(Self::from_estimate(init_estimate(a, looks, height, width)?))
    }

    pub fn from_estimate(x: SceneImage) -> Self {
        Self {
            t: 0,
            x,
            prev_x: None,
            cov: None,
        }
    }

    pub fn covariance(&self) -> Option<&CovarianceState> {
        self.cov.as_ref()
    }
}

pub struct StepOutput {
    pub record: IterationRecord,
    pub projection: BaggedEstimate,
    /// The clamped gradient step that was projected.
    pub gradient_step: SceneImage,
    pub ns_fallback: bool,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Likelihood value and gradient at the current iterate, refreshing the inverse for
/// complex looks. Returns the mode used and whether a diverged NS step was redone.
fn likelihood_step(
    state: &mut PgdState,
    looks: &LookSet,
    a: &SensingMatrix,
    cfg: &PgdConfig,
    dx_inf: f64,
) -> Result<(f64, Vec<f64>, InverseMode, bool)> {
    let x = state.x.pixels();
    if looks.real_valued {
        let (nll, grad) = nll_and_grad_real(x, looks, a, true)?;
        return Ok((nll, grad, InverseMode::Exact, false));
    }
    let (sw, sz) = (looks.sigma_w, looks.sigma_z);
    let ns_steps = if cfg.exact_inverse { 0 } else { cfg.ns_steps };
    let mut fallback = false;
    let cov = match refresh_inverse(state.cov.as_ref(), x, a, sw, sz, dx_inf, cfg.delta_x, ns_steps) {
        Ok(c) => c,
        Err(Error::Diverged { .. }) => {
            fallback = true;
            refresh_inverse(None, x, a, sw, sz, f64::INFINITY, cfg.delta_x, 0)?
        }
        Err(e) => return Err(e),
    };
    let nll = nll_at_state(&cov, looks)?;
    let grad = grad_nll_fast(x, looks, &cov, a)?;
    let mode = cov.mode;
    state.cov = Some(cov);
    Ok((nll, grad, mode, fallback))
}

/// One outer iteration with an already [resolved](PgdConfig::resolved) configuration.
/// `truth`, when given, is used for PSNR/SSIM of the new iterate.
pub fn pgd_step(
    state: &mut PgdState,
    looks: &LookSet,
    a: &SensingMatrix,
    cfg: &PgdConfig,
    truth: Option<&SceneImage>,
    started: Instant,
) -> Result<StepOutput> {
    let (h, w) = (state.x.height(), state.x.width());
    let t = state.t + 1;
    let dx_inf = match &state.prev_x {
        Some(p) => max_abs_diff(state.x.pixels(), p),
        None => f64::INFINITY,
    };
    let (nll, grad, mode, ns_fallback) = likelihood_step(state, looks, a, cfg, dx_inf)?;
    if !nll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite {
            context: "in the likelihood gradient".into(),
        });
    }
    let mu = cfg.step_size(looks.count());
    let stepped: Vec<f64> = state
        .x
        .pixels()
        .iter()
        .zip(&grad)
        .map(|(x, g)| x - mu * g)
        .collect();
    let gradient_step = SceneImage::clamped(h, w, stepped)?;
    let rng = RngSpec::new(cfg.seed, streams::DECODER).child(t as u64);
    let projection = bagged_project(&gradient_step, &cfg.bag, &cfg.decoder, rng)?;
    let next = projection.average.clone();
    let (psnr_v, ssim_v) = match truth {
        Some(gt) => {
            let s = if h >= 11 && w >= 11 { Some(ssim(&next, gt)?) } else { None };
            (Some(psnr(&next, gt)?), s)
        }
        None => (None, None),
    };
    let prev = std::mem::replace(&mut state.x, next);
    state.prev_x = Some(prev.into_pixels());
    state.t = t;
    Ok(StepOutput {
        record: IterationRecord {
            iteration: t,
            inverse_mode: mode,
            nll,
            dx_inf: if dx_inf.is_finite() { dx_inf } else { 0.0 },
            psnr: psnr_v,
            ssim: ssim_v,
            seconds: started.elapsed().as_secs_f64(),
        },
        projection,
        gradient_step,
        ns_fallback,
    })
}

/// Runs `cfg.iterations` outer iterations from the back-projection start point.
///
/// `observer` sees every record together with the new iterate (used for logging and
/// checkpoints); an error from it stops the run.
pub fn pgd_run_with(
    looks: &LookSet,
    a: &SensingMatrix,
    height: usize,
    width: usize,
    cfg: &PgdConfig,
    truth: Option<&SceneImage>,
    observer: &mut dyn FnMut(&IterationRecord, &SceneImage) -> Result<()>,
) -> Result<(SceneImage, Trajectory)> {
    let cfg = &cfg.resolved(height, width, looks.count());
    cfg.validate(height, width)?;
    if let Some(gt) = truth {
        if (gt.height(), gt.width()) != (height, width) {
            return Err(Error::shape("ground truth does not match the image shape"));
        }
    }
    let started = Instant::now();
    let mut state = PgdState::init(a, looks, height, width)?;
    let mut traj = Trajectory::default();
    for t in 1..=cfg.iterations {
        let out = pgd_step(&mut state, looks, a, cfg, truth, started)
            .map_err(|e| e.at(format!("outer iteration {t}")))?;
        traj.ns_fallbacks += out.ns_fallback as usize;
        observer(&out.record, &state.x)?;
        traj.records.push(out.record);
    }
    Ok((state.x, traj))
}

pub fn pgd_run(
    looks: &LookSet,
    a: &SensingMatrix,
    height: usize,
    width: usize,
    cfg: &PgdConfig,
    truth: Option<&SceneImage>,
) -> Result<(SceneImage, Trajectory)> {
    pgd_run_with(looks, a, height, width, cfg, truth, &mut |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::fit_decoder;
    use crate::measurement::{generate_looks, make_sensing, Ensemble};

    fn setup(l: usize) -> (SceneImage, SensingMatrix, LookSet) {
        let truth = SceneImage::new(8, 8, (0..64).map(|i| 0.2 + 0.6 * ((i % 8) as f64 / 7.0)).collect()).unwrap();
        let a = make_sensing(32, 64, Ensemble::HaarRows, RngSpec::new(1, streams::SENSING)).unwrap();
        let looks = generate_looks(&truth, &a, l, 1.0, 0.0, false, RngSpec::new(1, streams::LOOKS)).unwrap();
        (truth, a, looks)
    }

    fn small_cfg(t: usize) -> PgdConfig {
        PgdConfig::new(t, BagSpec::single(8, 8, 30), DecoderConfig::new(8, 8).with_channels(vec![4; 4]))
    }

    #[test]
    fn default_step_sizes() {
        let cfg = small_cfg(1);
        assert_eq!(cfg.step_size(8), 0.01);
        assert_eq!(cfg.step_size(9), 0.1);
        let r = cfg.resolved(8, 8, 32);
        assert_eq!(r.mu, Some(0.1));
        assert_eq!((r.decoder.out_h, r.decoder.out_w), (8, 8));
        assert_eq!(PgdConfig::default().resolved(32, 32, 1).bag, BagSpec::auto(32, 32));
    }

    #[test]
    fn zero_step_single_patch_is_fit_of_init() {
        let (_, a, looks) = setup(4);
        let mut cfg = small_cfg(1);
        cfg.mu = Some(0.0);
        let (x, traj) = pgd_run(&looks, &a, 8, 8, &cfg, None).unwrap();
        let x0 = init_estimate(&a, &looks, 8, 8).unwrap();
        let rng = RngSpec::new(0, streams::DECODER).child(1).path(&[0, 0, 0]);
        let fit = fit_decoder(&x0, &cfg.decoder, 30, rng).unwrap();
        assert_eq!(x, fit.output);
        assert_eq!(traj.records[0].inverse_mode, InverseMode::Exact);
    }

    #[test]
    fn gating_follows_move_size() {
        let (_, a, looks) = setup(4);
        let cfg = small_cfg(3);
        let started = Instant::now();
        let mut state = PgdState::init(&a, &looks, 8, 8).unwrap();
        let first = pgd_step(&mut state, &looks, &a, &cfg, None, started).unwrap();
        assert_eq!(first.record.inverse_mode, InverseMode::Exact);
        // move 0.05 in sup norm away from the point whose inverse is held, then 0.2
        let held = state.cov.as_ref().unwrap().x.clone();
        let moved = held.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.05 } else { -0.05 });
        state.x = SceneImage::new(8, 8, moved.collect()).unwrap();
        state.prev_x = Some(held);
        let small = pgd_step(&mut state, &looks, &a, &cfg, None, started).unwrap();
        assert!((small.record.dx_inf - 0.05).abs() < 1e-12);
        assert_eq!(small.record.inverse_mode, InverseMode::NsApprox);
        assert!(!small.ns_fallback);
        state.prev_x = Some(state.x.pixels().iter().map(|v| v + 0.2).collect());
        let large = pgd_step(&mut state, &looks, &a, &cfg, None, started).unwrap();
        assert_eq!(large.record.inverse_mode, InverseMode::Exact);
    }

    #[test]
    fn iterates_stay_in_open_unit_interval() {
        let (truth, a, looks) = setup(16);
        let (_, traj) = pgd_run_with(&looks, &a, 8, 8, &small_cfg(2), Some(&truth), &mut |_, x| {
            assert!(x.pixels().iter().all(|v| *v > 0.0 && *v < 1.0));
            Ok(())
        })
        .unwrap();
        assert!(traj.records.iter().all(|r| r.psnr.is_some() && r.ssim.is_none()));
    }
}
