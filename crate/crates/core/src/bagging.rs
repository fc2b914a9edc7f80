//! Multi-scale patch projection.
//!
//! For each patch scale the image is cut into non-overlapping tiles, a fresh decoder is
//! fitted to every tile, and the fitted tiles are put back together. The projection is
//! the plain average of the per-scale reassemblies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{fit_decoder, DecoderConfig, UPSAMPLING_BLOCKS};
use crate::error::{Error, Result};
use crate::measurement::SceneImage;
use crate::rng::RngSpec;

/// Patch scales and the decoder iteration budget used at each one.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BagSpec {
    /// `(height, width)` per scale.
    pub patch_sizes: Vec<(usize, usize)>,
    /// Adam iterations per scale; same length as `patch_sizes`.
    pub iterations: Vec<usize>,
}

impl BagSpec {
    /// Three square scales with budgets growing with patch size.
    pub fn squares(sizes: [usize; 3], iterations: [usize; 3]) -> Self {
        Self {
            patch_sizes: sizes.iter().map(|&s| (s, s)).collect(),
            iterations: iterations.to_vec(),
        }
    }

    /// One patch covering the whole image.
    pub fn single(height: usize, width: usize, iterations: usize) -> Self {
        Self {
            patch_sizes: vec![(height, width)],
            iterations: vec![iterations],
        }
    }

    /// Scales `(H/4, W/4)`, `(H/2, W/2)` and `(H, W)`, keeping those a decoder can
    /// produce, with budgets in the ratio 2:3:4 (100, 150, 200 iterations).
    pub fn auto(height: usize, width: usize) -> Self {
        let f = 1 << UPSAMPLING_BLOCKS;
        let mut spec = Self::default();
        for (div, iters) in [(4, 100), (2, 150), (1, 200)] {
            let (h, w) = (height / div, width / div);
            if h * div == height && w * div == width && h > 0 && w > 0 && h % f == 0 && w % f == 0 {
                spec.patch_sizes.push((h, w));
                spec.iterations.push(iters);
            }
        }
        spec
    }

    pub fn is_empty(&self) -> bool {
        self.patch_sizes.is_empty()
    }

    pub fn scales(&self) -> usize {
        self.patch_sizes.len()
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.patch_sizes.is_empty() || self.patch_sizes.len() != self.iterations.len() {
            return Err(Error::Config(
                "bag spec needs one iteration budget per patch size".into(),
            ));
        }
        let f = 1 << UPSAMPLING_BLOCKS;
        for &(h, w) in &self.patch_sizes {
            if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
                return Err(Error::shape(format!("patch {h}x{w} is not a positive multiple of {f}")));
            }
            if !height.is_multiple_of(h) || !width.is_multiple_of(w) {
                return Err(Error::shape(format!(
                    "patch {h}x{w} does not tile a {height}x{width} image"
                )));
            }
        }
        if self.iterations.contains(&0) {
            return Err(Error::Config("decoder iteration budgets must be positive".into()));
        }
        Ok(())
    }
}

/// Tiles of an image in row-major tile order.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub patches: Vec<SceneImage>,
}

impl PatchGrid {
    pub fn get(&self, r: usize, c: usize) -> &SceneImage {
        &self.patches[r * self.cols + c]
    }
}

/// Cuts `image` into `h × w` tiles; tile `(r, c)` covers rows `[r·h, (r+1)·h)`.
pub fn partition(image: &SceneImage, h: usize, w: usize) -> Result<PatchGrid> {
    let (ih, iw) = (image.height(), image.width());
    if h == 0 || w == 0 || ih % h != 0 || iw % w != 0 {
        return Err(Error::shape(format!("{h}x{w} patches do not tile a {ih}x{iw} image")));
    }
    let (rows, cols) = (ih / h, iw / w);
    let px = image.pixels();
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut data = Vec::with_capacity(h * w);
            for y in r * h..(r + 1) * h {
                data.extend_from_slice(&px[y * iw + c * w..y * iw + (c + 1) * w]);
            }
            patches.push(SceneImage::new(h, w, data)?);
        }
    }
    Ok(PatchGrid {
        rows,
        cols,
        patch_h: h,
        patch_w: w,
        patches,
    })
}

pub fn reassemble(grid: &PatchGrid) -> Result<SceneImage> {
    let (h, w) = (grid.patch_h, grid.patch_w);
    if grid.patches.len() != grid.rows * grid.cols
        || grid.patches.iter().any(|p| p.height() != h || p.width() != w)
    {
        return Err(Error::shape("patch grid is inconsistent"));
    }
    let iw = grid.cols * w;
    let mut data = vec![0.0; grid.rows * h * iw];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let p = grid.get(r, c).pixels();
            for y in 0..h {
                data[(r * h + y) * iw + c * w..(r * h + y) * iw + (c + 1) * w]
                    .copy_from_slice(&p[y * w..(y + 1) * w]);
            }
        }
    }
    SceneImage::new(grid.rows * h, iw, data)
}

#[derive(Debug, Clone)]
pub struct BaggedEstimate {
    pub average: SceneImage,
    pub per_scale: Vec<SceneImage>,
}

/// Fits one decoder per tile at every scale and averages the reassembled scales.
///
/// The fit for tile `(r, c)` at scale `k` draws from `rng.path(&[k, r, c])`, so the result
/// does not depend on how the fits are scheduled.
pub fn bagged_project(
    noisy: &SceneImage,
    spec: &BagSpec,
    decoder: &DecoderConfig,
    rng: RngSpec,
) -> Result<BaggedEstimate> {
    spec.validate(noisy.height(), noisy.width())?;
    let mut per_scale = Vec::with_capacity(spec.scales());
    for (k, (&(h, w), &iters)) in spec.patch_sizes.iter().zip(&spec.iterations).enumerate() {
        let grid = partition(noisy, h, w)?;
        let cfg = decoder.resized(h, w);
        let cols = grid.cols;
        let fitted: Vec<SceneImage> = grid
            .patches
            .par_iter()
            .enumerate()
            .map(|(i, patch)| {
                let (r, c) = (i / cols, i % cols);
                fit_decoder(patch, &cfg, iters, rng.path(&[k as u64, r as u64, c as u64]))
                    .map(|fit| fit.output)
                    .map_err(|e| e.at(format!("scale {k} patch ({r}, {c})")))
            })
            .collect::<Result<_>>()?;
        per_scale.push(reassemble(&PatchGrid {
            patches: fitted,
            ..grid
        })?);
    }
    let k = per_scale.len() as f64;
    let mut avg = vec![0.0; noisy.len()];
    for est in &per_scale {
        for (a, v) in avg.iter_mut().zip(est.pixels()) {
            *a += v;
        }
    }
    avg.iter_mut().for_each(|a| *a /= k);
    Ok(BaggedEstimate {
        average: SceneImage::new(noisy.height(), noisy.width(), avg)?,
        per_scale,
    })
}
