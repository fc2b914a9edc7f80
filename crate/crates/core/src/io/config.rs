//! JSON run configuration for `reconstruct`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::pgd::PgdConfig;

/// Everything needed to replay a reconstruction from a measurement container.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Image height; with `width` unset both default to a square `√n × √n`.
    #[serde(default)]
    pub height: Option<usize>,
    #[serde(default)]
    pub width: Option<usize>,
    #[serde(default)]
    pub pgd: PgdConfig,
    /// Optional reference image for per-iteration PSNR/SSIM.
    #[serde(default)]
    pub ground_truth: Option<PathBuf>,
    /// Write `iter_NNNN.pgm` every this many iterations.
    #[serde(default)]
    pub checkpoint_every: Option<usize>,
    /// Fill the trajectory `seconds` column (makes the CSV run-dependent).
    #[serde(default)]
    pub record_wall_time: bool,
}

impl RunConfig {
    /// Image shape for `n` pixels.
    pub fn image_shape(&self, n: usize) -> Result<(usize, usize)> {
        let (h, w) = match (self.height, self.width) {
            (Some(h), Some(w)) => (h, w),
            (Some(h), None) if h > 0 && n.is_multiple_of(h) => (h, n / h),
            (None, Some(w)) if w > 0 && n.is_multiple_of(w) => (n / w, w),
            (None, None) => {
                let s = (n as f64).sqrt().round() as usize;
                (s, s)
            }
            _ => (0, 0),
        };
        if h * w != n || n == 0 {
            return Err(Error::Config(format!(
                "cannot infer an image shape for {n} pixels; set height and width"
            )));
        }
        Ok((h, w))
    }

    /// A copy with every default spelled out.
    pub fn resolved(&self, n: usize, looks: usize) -> Result<Self> {
        let (h, w) = self.image_shape(n)?;
        let pgd = self.pgd.resolved(h, w, looks);
        pgd.validate(h, w)?;
        if self.checkpoint_every == Some(0) {
            return Err(Error::Config("checkpoint_every must be positive".into()));
        }
        Ok(Self {
            height: Some(h),
            width: Some(w),
            pgd,
            ..self.clone()
        })
    }
}

pub fn read_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::from(e).at(path.display().to_string()))
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_bytes(path.as_ref(), s.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"pgd": {"iterations": 3}}"#).is_ok());
        assert!(serde_json::from_str::<RunConfig>(r#"{"pgd": {"iteration": 3}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"colour": true}"#).is_err());
    }

    #[test]
    fn resolution_is_a_fixed_point() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        let r = cfg.resolved(1024, 4).unwrap();
        assert_eq!((r.height, r.width), (Some(32), Some(32)));
        assert_eq!(r.pgd.mu, Some(0.01));
        assert_eq!(r.pgd.bag.patch_sizes, vec![(8, 8), (16, 16), (32, 32)]);
        let text = serde_json::to_string(&r).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.resolved(1024, 4).unwrap(), r);
    }

    #[test]
    fn shape_inference() {
        let cfg = RunConfig::default();
        assert!(cfg.image_shape(24).is_err());
        let cfg = RunConfig {
            height: Some(4),
            ..RunConfig::default()
        };
        assert_eq!(cfg.image_shape(24).unwrap(), (4, 6));
    }
}
