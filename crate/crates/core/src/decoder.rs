//! Untrained convolutional decoder used as the image-model projector.
//!
//! Three blocks of (bilinear ×2 upsample → convolution → ReLU) followed by an output
//! convolution and a sigmoid. The latent input is a fixed iid N(0, 1) tensor with
//! `channels[0]` channels at one eighth of the output resolution. Gradients are computed
//! by a hand-written reverse pass over that fixed graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gemm_slices;
use crate::measurement::SceneImage;
use crate::rng::{normal_vec, RngSpec};

/// Number of upsampling blocks; the latent is `out / 2^UPSAMPLING_BLOCKS`.
pub const UPSAMPLING_BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoderConfig {
    /// Output size; inside a bagged projection it is set per patch scale.
    #[serde(default)]
    pub out_h: usize,
    #[serde(default)]
    pub out_w: usize,
    /// Channels of the data cube entering each of the four blocks; `channels[0]` is the
    /// latent channel count.
    #[serde(default = "default_channels")]
    pub channels: Vec<usize>,
    /// Convolution size, 1 or 3.
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    #[serde(default)]
    pub adam: AdamSettings,
}

fn default_channels() -> Vec<usize> {
    vec![128; 4]
}

fn default_kernel() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamSettings {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamSettings {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self::new(0, 0)
    }
}

impl DecoderConfig {
    pub fn new(out_h: usize, out_w: usize) -> Self {
        Self {
            out_h,
            out_w,
            channels: default_channels(),
            kernel: default_kernel(),
            adam: AdamSettings::default(),
        }
    }

    pub fn with_channels(mut self, channels: Vec<usize>) -> Self {
        self.channels = channels;
        self
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = kernel;
        self
    }

    /// Same architecture at a different output size.
    pub fn resized(&self, out_h: usize, out_w: usize) -> Self {
        Self {
            out_h,
            out_w,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let f = 1 << UPSAMPLING_BLOCKS;
        if self.out_h == 0 || self.out_w == 0 || !self.out_h.is_multiple_of(f) || !self.out_w.is_multiple_of(f) {
            return Err(Error::shape(format!(
                "decoder output {}x{} must be a positive multiple of {f}",
                self.out_h, self.out_w
            )));
        }
        if self.channels.len() != 4 || self.channels.contains(&0) {
            return Err(Error::Config("decoder needs four positive channel counts".into()));
        }
        if self.kernel != 1 && self.kernel != 3 {
            return Err(Error::Config("decoder kernel must be 1 or 3".into()));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("Adam learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn latent_h(&self) -> usize {
        self.out_h >> UPSAMPLING_BLOCKS
    }

    pub fn latent_w(&self) -> usize {
        self.out_w >> UPSAMPLING_BLOCKS
    }

    fn layer_shapes(&self) -> Vec<LayerShape> {
        let c = &self.channels;
        let mut shapes: Vec<LayerShape> = (0..3)
            .map(|i| LayerShape {
                c_in: c[i],
                c_out: c[i + 1],
                k: self.kernel,
            })
            .collect();
        shapes.push(LayerShape {
            c_in: c[3],
            c_out: 1,
            k: self.kernel,
        });
        shapes
    }

    /// Total number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        self.layer_shapes().iter().map(LayerShape::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerShape {
    c_in: usize,
    c_out: usize,
    k: usize,
}

impl LayerShape {
    fn weight_len(&self) -> usize {
        self.c_out * self.c_in * self.k * self.k
    }

    fn len(&self) -> usize {
        self.weight_len() + self.c_out
    }

    fn fan_in(&self) -> usize {
        self.c_in * self.k * self.k
    }
}

/// All kernels and biases, flattened layer by layer as `[weights (c_out × c_in·k²), bias]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderParams {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    pub data: Vec<f64>,
}

impl DecoderParams {
    pub fn zeros(config: &DecoderConfig) -> Self {
        let shapes = config.layer_shapes();
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut total = 0;
        for s in &shapes {
            offsets.push(total);
            total += s.len();
        }
        Self {
            shapes,
            offsets,
            data: vec![0.0; total],
        }
    }

    /// Weights uniform in ±√(6 / fan_in), biases zero.
    pub fn init(config: &DecoderConfig, rng: RngSpec) -> Self {
        let mut p = Self::zeros(config);
        let mut r = rng.rng();
        for layer in 0..p.shapes.len() {
            let bound = (6.0 / p.shapes[layer].fan_in() as f64).sqrt();
            for w in p.weight_mut(layer) {
                *w = r.random_range(-bound..bound);
            }
        }
        p
    }

    pub fn layers(&self) -> usize {
        self.shapes.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn weight(&self, layer: usize) -> &[f64] {
        let o = self.offsets[layer];
        &self.data[o..o + self.shapes[layer].weight_len()]
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut [f64] {
        let o = self.offsets[layer];
        let len = self.shapes[layer].weight_len();
        &mut self.data[o..o + len]
    }

    pub fn bias(&self, layer: usize) -> &[f64] {
        let o = self.offsets[layer] + self.shapes[layer].weight_len();
        &self.data[o..o + self.shapes[layer].c_out]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let o = self.offsets[layer] + self.shapes[layer].weight_len();
        let len = self.shapes[layer].c_out;
        &mut self.data[o..o + len]
    }

    fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let o = self.offsets[layer];
        let s = self.shapes[layer];
        self.data[o..o + s.len()].split_at_mut(s.weight_len())
    }

    fn check(&self, config: &DecoderConfig) -> Result<()> {
        if self.shapes != config.layer_shapes() {
            return Err(Error::shape("decoder parameters do not match the configuration"));
        }
        Ok(())
    }
}

/// Latent input tensor `channels[0] × out_h/8 × out_w/8`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentInput {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

impl LatentInput {
    pub fn sample(config: &DecoderConfig, rng: RngSpec) -> Self {
        let (c, h, w) = (config.channels[0], config.latent_h(), config.latent_w());
        Self {
            channels: c,
            h,
            w,
            data: normal_vec(&mut rng.rng(), c * h * w),
        }
    }

    fn check(&self, config: &DecoderConfig) -> Result<()> {
        if (self.channels, self.h, self.w) != (config.channels[0], config.latent_h(), config.latent_w())
            || self.data.len() != self.channels * self.h * self.w
        {
            return Err(Error::shape("latent input does not match the configuration"));
        }
        Ok(())
    }
}

/// First/second moment estimates for Adam.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub settings: AdamSettings,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(settings: AdamSettings, len: usize) -> Self {
        Self {
            settings,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut [f64], grads: &[f64]) {
        let s = self.settings;
        self.step += 1;
        let bc1 = 1.0 - s.beta1.powi(self.step as i32);
        let bc2 = 1.0 - s.beta2.powi(self.step as i32);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g + s.weight_decay * *p;
            *m = s.beta1 * *m + (1.0 - s.beta1) * g;
            *v = s.beta2 * *v + (1.0 - s.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= s.lr * m_hat / (v_hat.sqrt() + s.eps);
        }
    }
}

/// Interpolation taps for ×2 bilinear upsampling along one axis, with pixel centers
/// uniformly covering the input extent (no corner alignment).
fn upsample_taps(n_in: usize) -> Vec<(usize, f64, usize, f64)> {
    (0..2 * n_in)
        .map(|o| {
            let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let frac = src - i0 as f64;
            (i0, 1.0 - frac, i1, frac)
        })
        .collect()
}

/// Upsamples a `c × h × w` tensor to `c × 2h × 2w`.
pub fn upsample2(input: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (th, tw) = (upsample_taps(h), upsample_taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let mut rows = vec![0.0; h * ow];
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        let plane = &input[ch * h * w..(ch + 1) * h * w];
        for r in 0..h {
            let src = &plane[r * w..(r + 1) * w];
            for (x, &(i0, w0, i1, w1)) in tw.iter().enumerate() {
                rows[r * ow + x] = w0 * src[i0] + w1 * src[i1];
            }
        }
        let dst = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for (y, &(i0, w0, i1, w1)) in th.iter().enumerate() {
            for x in 0..ow {
                dst[y * ow + x] = w0 * rows[i0 * ow + x] + w1 * rows[i1 * ow + x];
            }
        }
    }
    out
}

/// Adjoint of [`upsample2`]: maps a `c × 2h × 2w` gradient back to `c × h × w`.
fn upsample2_backward(grad: &[f64], c: usize, h: usize, w: usize) -> Vec<f64> {
    let (th, tw) = (upsample_taps(h), upsample_taps(w));
    let (oh, ow) = (2 * h, 2 * w);
    let mut rows = vec![0.0; h * ow];
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        rows.iter_mut().for_each(|v| *v = 0.0);
        let g = &grad[ch * oh * ow..(ch + 1) * oh * ow];
        for (y, &(i0, w0, i1, w1)) in th.iter().enumerate() {
            for x in 0..ow {
                rows[i0 * ow + x] += w0 * g[y * ow + x];
                rows[i1 * ow + x] += w1 * g[y * ow + x];
            }
        }
        let dst = &mut out[ch * h * w..(ch + 1) * h * w];
        for r in 0..h {
            for (x, &(i0, w0, i1, w1)) in tw.iter().enumerate() {
                dst[r * w + i0] += w0 * rows[r * ow + x];
                dst[r * w + i1] += w1 * rows[r * ow + x];
            }
        }
    }
    out
}

/// Column matrix `(c·k²) × (h·w)` for a same-padded k×k convolution.
fn im2col(input: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![0.0; c * k * k * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            dst[y * w + x] = input[(ch * h + sy as usize) * w + sx as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im(cols: &[f64], c: usize, h: usize, w: usize, k: usize) -> Vec<f64> {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut out = vec![0.0; c * hw];
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            out[(ch * h + sy as usize) * w + sx as usize] += src[y * w + x];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Same-padded convolution of a `c_in × h × w` tensor. Returns the output and the
/// column matrix (the input itself for 1×1 kernels) for reuse in the backward pass.
pub fn conv2d(
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
) -> (Vec<f64>, Vec<f64>) {
    let c_out = bias.len();
    let hw = h * w;
    let cols = if k == 1 {
        input.to_vec()
    } else {
        im2col(input, c_in, h, w, k)
    };
    let mut out = vec![0.0; c_out * hw];
    for (plane, b) in out.chunks_mut(hw).zip(bias) {
        plane.iter_mut().for_each(|v| *v = *b);
    }
    gemm_slices(c_out, c_in * k * k, hw, 1.0, weight, false, &cols, false, 1.0, &mut out);
    (out, cols)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one forward pass.
struct Tape {
    /// Column matrices feeding each convolution.
    cols: Vec<Vec<f64>>,
    /// Pre-activation outputs of the three hidden convolutions.
    pre: Vec<Vec<f64>>,
    /// Spatial size at which each convolution runs.
    sizes: Vec<(usize, usize)>,
    output: Vec<f64>,
}

fn forward_tape(params: &DecoderParams, u: &LatentInput) -> Tape {
    let mut h = u.data.clone();
    let (mut hh, mut ww) = (u.h, u.w);
    let mut cols = Vec::with_capacity(4);
    let mut pre = Vec::with_capacity(3);
    let mut sizes = Vec::with_capacity(4);
    for layer in 0..3 {
        let s = params.shapes[layer];
        let up = upsample2(&h, s.c_in, hh, ww);
        hh *= 2;
        ww *= 2;
        let (z, c) = conv2d(&up, params.weight(layer), params.bias(layer), s.c_in, hh, ww, s.k);
        h = z.iter().map(|v| v.max(0.0)).collect();
        cols.push(c);
        pre.push(z);
        sizes.push((hh, ww));
    }
    let s = params.shapes[3];
    let (z, c) = conv2d(&h, params.weight(3), params.bias(3), s.c_in, hh, ww, s.k);
    cols.push(c);
    sizes.push((hh, ww));
    Tape {
        cols,
        pre,
        sizes,
        output: z.into_iter().map(sigmoid).collect(),
    }
}

/// Runs the decoder; the result lies strictly inside (0, 1).
pub fn decoder_forward(params: &DecoderParams, u: &LatentInput, config: &DecoderConfig) -> Result<SceneImage> {
    config.validate()?;
    params.check(config)?;
    u.check(config)?;
    let tape = forward_tape(params, u);
    SceneImage::new(config.out_h, config.out_w, tape.output)
}

fn backward(params: &DecoderParams, tape: &Tape, target: &[f64], grads: &mut DecoderParams) -> f64 {
    let n = target.len() as f64;
    let out = &tape.output;
    let loss = out.iter().zip(target).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / n;
    // dL/dz through the sigmoid
    let mut delta: Vec<f64> = out
        .iter()
        .zip(target)
        .map(|(o, t)| 2.0 * (o - t) / n * o * (1.0 - o))
        .collect();
    grads.data.iter_mut().for_each(|g| *g = 0.0);
    for layer in (0..4).rev() {
        let s = params.shapes[layer];
        let (h, w) = tape.sizes[layer];
        let hw = h * w;
        let ck = s.c_in * s.k * s.k;
        {
            let (gw, gb) = grads.layer_mut(layer);
            gemm_slices(s.c_out, hw, ck, 1.0, &delta, false, &tape.cols[layer], true, 0.0, gw);
            for (b, plane) in gb.iter_mut().zip(delta.chunks(hw)) {
                *b = plane.iter().sum();
            }
        }
        if layer == 0 {
            break;
        }
        // gradient w.r.t. the convolution input
        let mut dcols = vec![0.0; ck * hw];
        gemm_slices(ck, s.c_out, hw, 1.0, params.weight(layer), true, &delta, false, 0.0, &mut dcols);
        let mut dinput = if s.k == 1 {
            dcols
        } else {
            col2im(&dcols, s.c_in, h, w, s.k)
        };
        // the input of layer `layer` is relu(pre[layer-1]) for layer 3, or the upsampled
        // relu(pre[layer-1]) for layers 1 and 2
        let prev = &tape.pre[layer - 1];
        let (ph, pw) = tape.sizes[layer - 1];
        if layer < 3 {
            dinput = upsample2_backward(&dinput, s.c_in, ph, pw);
        }
        for (d, z) in dinput.iter_mut().zip(prev) {
            if *z <= 0.0 {
                *d = 0.0;
            }
        }
        delta = dinput;
    }
    loss
}

/// Mean squared error against `target` and its exact gradient.
pub fn decoder_loss_grads(
    params: &DecoderParams,
    u: &LatentInput,
    target: &SceneImage,
    config: &DecoderConfig,
) -> Result<(f64, DecoderParams)> {
    config.validate()?;
    params.check(config)?;
    u.check(config)?;
    if (target.height(), target.width()) != (config.out_h, config.out_w) {
        return Err(Error::shape("target does not match the decoder output size"));
    }
    let tape = forward_tape(params, u);
    let mut grads = DecoderParams::zeros(config);
    let loss = backward(params, &tape, target.pixels(), &mut grads);
    Ok((loss, grads))
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: DecoderParams,
    pub latent: LatentInput,
    pub output: SceneImage,
    pub losses: Vec<f64>,
}

/// Fits a freshly initialized decoder to `target` with `iters` Adam steps.
///
/// The latent input comes from `rng.child(0)` and the initial weights from
/// `rng.child(1)`, so the result is fully determined by its arguments.
pub fn fit_decoder(target: &SceneImage, config: &DecoderConfig, iters: usize, rng: RngSpec) -> Result<FitResult> {
    config.validate()?;
    if iters == 0 {
        return Err(Error::Config("decoder fit needs at least one iteration".into()));
    }
    if (target.height(), target.width()) != (config.out_h, config.out_w) {
        return Err(Error::shape(format!(
            "target {}x{} does not match decoder output {}x{}",
            target.height(),
            target.width(),
            config.out_h,
            config.out_w
        )));
    }
    let latent = LatentInput::sample(config, rng.child(0));
    let mut params = DecoderParams::init(config, rng.child(1));
    let mut grads = DecoderParams::zeros(config);
    let mut adam = AdamState::new(config.adam, params.len());
    let mut losses = Vec::with_capacity(iters);
    for it in 0..iters {
        let tape = forward_tape(&params, &latent);
        let loss = backward(&params, &tape, target.pixels(), &mut grads);
        if !loss.is_finite() || grads.data.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("in decoder fit at iteration {it}"),
            });
        }
        losses.push(loss);
        adam.update(&mut params.data, &grads.data);
    }
    let tape = forward_tape(&params, &latent);
    let output = SceneImage::new(config.out_h, config.out_w, tape.output)?;
    Ok(FitResult {
        params,
        latent,
        output,
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> DecoderConfig {
        DecoderConfig::new(8, 8).with_channels(vec![4, 4, 4, 4])
    }

    #[test]
    fn zero_params_give_half() {
        let cfg = tiny();
        let p = DecoderParams::zeros(&cfg);
        let u = LatentInput::sample(&cfg, RngSpec::new(1, 1));
        let out = decoder_forward(&p, &u, &cfg).unwrap();
        assert!(out.pixels().iter().all(|v| *v == 0.5));
    }

    #[test]
    fn upsample_preserves_constants() {
        let up = upsample2(&[0.3; 4], 1, 2, 2);
        assert_eq!(up.len(), 16);
        assert!(up.iter().all(|v| (v - 0.3).abs() < 1e-15));
    }

    #[test]
    fn upsample_backward_is_adjoint() {
        let (c, h, w) = (2, 3, 2);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.37).sin()).collect();
        let g: Vec<f64> = (0..c * 4 * h * w).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = upsample2(&x, c, h, w).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&upsample2_backward(&g, c, h, w)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn im2col_backward_is_adjoint() {
        let (c, h, w) = (2, 4, 3);
        let x: Vec<f64> = (0..c * h * w).map(|i| (i as f64 * 0.29).sin()).collect();
        let g: Vec<f64> = (0..c * 9 * h * w).map(|i| (i as f64 * 0.13).cos()).collect();
        let lhs: f64 = im2col(&x, c, h, w, 3).iter().zip(&g).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&g, c, h, w, 3)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn identity_1x1_conv() {
        let (c, h, w) = (3, 2, 2);
        let x: Vec<f64> = (0..c * h * w).map(|i| i as f64).collect();
        let mut weight = vec![0.0; c * c];
        for i in 0..c {
            weight[i * c + i] = 1.0;
        }
        let (y, _) = conv2d(&x, &weight, &[0.0; 3], c, h, w, 1);
        assert_eq!(x, y);
    }

    #[test]
    fn parameter_count_formula() {
        let cfg = DecoderConfig::new(32, 32);
        assert_eq!(cfg.parameter_count(), 3 * (128 * 128 + 128) + 128 + 1);
        let cfg = tiny().with_kernel(3);
        assert_eq!(cfg.parameter_count(), 3 * (4 * 4 * 9 + 4) + 4 * 9 + 1);
        assert_eq!(DecoderParams::zeros(&cfg).len(), cfg.parameter_count());
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(DecoderConfig::new(12, 8).validate().is_err());
        assert!(tiny().with_kernel(2).validate().is_err());
        let cfg = tiny();
        let t = SceneImage::constant(16, 8, 0.5).unwrap();
        assert!(matches!(fit_decoder(&t, &cfg, 1, RngSpec::new(0, 0)), Err(Error::BadShape(_))));
    }

    #[test]
    fn loss_zero_at_own_output() {
        let cfg = tiny();
        let p = DecoderParams::init(&cfg, RngSpec::new(3, 1));
        let u = LatentInput::sample(&cfg, RngSpec::new(3, 2));
        let out = decoder_forward(&p, &u, &cfg).unwrap();
        let (loss, grads) = decoder_loss_grads(&p, &u, &out, &cfg).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grads.data.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn constant_target_fits_quickly() {
        let cfg = tiny();
        let t = SceneImage::constant(8, 8, 0.5).unwrap();
        let fit = fit_decoder(&t, &cfg, 200, RngSpec::new(9, 0)).unwrap();
        assert!(*fit.losses.last().unwrap() < 1e-6, "{:?}", fit.losses.last());
    }

    fn finite_difference_check(kernel: usize) {
        let cfg = tiny().with_kernel(kernel);
        let mut p = DecoderParams::init(&cfg, RngSpec::new(5, 1));
        for b in 0..4 {
            p.bias_mut(b).iter_mut().for_each(|v| *v = 0.05);
        }
        let u = LatentInput::sample(&cfg, RngSpec::new(5, 2));
        let t = SceneImage::new(8, 8, (0..64).map(|i| (i as f64 / 64.0).sqrt()).collect()).unwrap();
        let (_, g) = decoder_loss_grads(&p, &u, &t, &cfg).unwrap();
        let h = 1e-5;
        for i in 0..p.len() {
            let mut q = p.clone();
            q.data[i] += h;
            let lp = decoder_loss_grads(&q, &u, &t, &cfg).unwrap().0;
            q.data[i] -= 2.0 * h;
            let lm = decoder_loss_grads(&q, &u, &t, &cfg).unwrap().0;
            let fd = (lp - lm) / (2.0 * h);
            let err = (g.data[i] - fd).abs() / fd.abs().max(g.data[i].abs()).max(1e-7);
            assert!(err < 1e-4, "param {i}: analytic {} fd {fd}", g.data[i]);
        }
    }

    #[test]
    fn gradients_match_finite_differences_1x1() {
        finite_difference_check(1);
    }

    #[test]
    fn gradients_match_finite_differences_3x3() {
        finite_difference_check(3);
    }
}
