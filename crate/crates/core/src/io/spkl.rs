//! SPKL1 measurement container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "SPKL1\0"  u8 version  u8 flags(bit0 = complex)
//! u32 m  u32 n  u32 L  f64 σ_w  f64 σ_z
//! A row-major: (re, im) f64 pairs, or re only when not complex
//! L looks of m (re, im) f64 pairs
//! ```

use std::path::Path;

use super::{read_bytes, write_bytes};
use crate::error::{Error, Result};
use crate::linalg::RealMatrix;
use crate::measurement::{Ensemble, Look, LookSet, SensingMatrix};

pub const SPKL_MAGIC: &[u8; 6] = b"SPKL1\0";
pub const SPKL_VERSION: u8 = 1;
const FLAG_COMPLEX: u8 = 1;

/// A sensing matrix with the looks measured through it.
#[derive(Debug, Clone, PartialEq)]
pub struct Spkl1 {
    pub a: SensingMatrix,
    pub looks: LookSet,
}

impl Spkl1 {
    pub fn new(a: SensingMatrix, looks: LookSet) -> Result<Self> {
        if looks.count() == 0 || looks.m() != a.m() {
            return Err(Error::shape("looks do not match the sensing matrix"));
        }
        if looks.real_valued && !a.is_real() {
            return Err(Error::shape("real-valued looks with a complex sensing matrix"));
        }
        Ok(Self { a, looks })
    }

    pub fn is_complex(&self) -> bool {
        !self.looks.real_valued
    }
}

pub fn encode_spkl(c: &Spkl1) -> Vec<u8> {
    let (m, n, l) = (c.a.m(), c.a.n(), c.looks.count());
    let complex = c.is_complex();
    let per_entry = if complex { 16 } else { 8 };
    let mut out = Vec::with_capacity(40 + m * n * per_entry + l * m * 16);
    out.extend_from_slice(SPKL_MAGIC);
    out.push(SPKL_VERSION);
    out.push(if complex { FLAG_COMPLEX } else { 0 });
    for v in [m, n, l] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.looks.sigma_w.to_le_bytes());
    out.extend_from_slice(&c.looks.sigma_z.to_le_bytes());
    for (re, im) in c.a.re.as_slice().iter().zip(c.a.im.as_slice()) {
        out.extend_from_slice(&re.to_le_bytes());
        if complex {
            out.extend_from_slice(&im.to_le_bytes());
        }
    }
    for look in &c.looks.looks {
        for (re, im) in look.re.iter().zip(&look.im) {
            out.extend_from_slice(&re.to_le_bytes());
            out.extend_from_slice(&im.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < len {
            return Err(Error::Corrupt {
                offset: self.bytes.len() as u64,
                reason: format!("truncated while reading {what} (needed {len} bytes at {})", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        let mut a = [0u8; 8];
        a.copy_from_slice(b);
        Ok(f64::from_le_bytes(a))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(8)
            .ok_or_else(|| Error::Corrupt {
                offset: self.pos as u64,
                reason: format!("{what} size overflows"),
            })?;
        Ok(self
            .take(len, what)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }
}

fn split_pairs(v: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
    v.chunks_exact(2).map(|p| (p[0], p[1])).unzip()
}

/// Parses a container. Truncation and bad headers give [`Error::Corrupt`] with the byte
/// offset at which reading failed.
pub fn decode_spkl(bytes: &[u8]) -> Result<Spkl1> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(6, "magic")? != SPKL_MAGIC {
        return Err(Error::Corrupt {
            offset: 0,
            reason: "bad magic".into(),
        });
    }
    let version = c.u8("version")?;
    if version != SPKL_VERSION {
        return Err(Error::Corrupt {
            offset: 6,
            reason: format!("unsupported version {version}"),
        });
    }
    let flags = c.u8("flags")?;
    if flags & !FLAG_COMPLEX != 0 {
        return Err(Error::Corrupt {
            offset: 7,
            reason: format!("unknown flag bits {flags:#04x}"),
        });
    }
    let complex = flags & FLAG_COMPLEX != 0;
    let m = c.u32("m")?;
    let n = c.u32("n")?;
    let l = c.u32("look count")?;
    let sigma_w = c.f64("sigma_w")?;
    let sigma_z = c.f64("sigma_z")?;
    if m == 0 || n == 0 || l == 0 {
        return Err(Error::Corrupt {
            offset: 8,
            reason: "zero dimension".into(),
        });
    }
    let data_start = c.pos as u64;
    let mn = m.checked_mul(n).ok_or_else(|| Error::Corrupt {
        offset: 8,
        reason: "matrix size overflows".into(),
    })?;
    let (re, im) = if complex {
        split_pairs(c.f64s(2 * mn, "sensing matrix")?)
    } else {
        (c.f64s(mn, "sensing matrix")?, vec![0.0; mn])
    };
    let mut looks = Vec::with_capacity(l.min(1 << 16));
    for i in 0..l {
        let (yr, yi) = split_pairs(c.f64s(2 * m, &format!("look {i}"))?);
        looks.push(Look::new(yr, yi).map_err(|e| Error::Corrupt {
            offset: c.pos as u64,
            reason: e.to_string(),
        })?);
    }
    if c.pos != bytes.len() {
        return Err(Error::Corrupt {
            offset: c.pos as u64,
            reason: format!("{} trailing bytes", bytes.len() - c.pos),
        });
    }
    let to_corrupt = |e: Error| Error::Corrupt {
        offset: data_start,
        reason: e.to_string(),
    };
    let re = RealMatrix::new(m, n, re).map_err(to_corrupt)?;
    let im = RealMatrix::new(m, n, im).map_err(to_corrupt)?;
    let mut a = SensingMatrix::from_parts(Ensemble::GaussianComplex, re, im)?;
    a.ensemble = infer_ensemble(&a, complex);
    let looks = LookSet::new(looks, sigma_w, sigma_z, !complex).map_err(|e| Error::Corrupt {
        offset: 8,
        reason: e.to_string(),
    })?;
    Spkl1::new(a, looks)
}

/// The container does not record the ensemble; orthonormal rows are labelled Haar.
fn infer_ensemble(a: &SensingMatrix, complex: bool) -> Ensemble {
    let haar = a.row_orthonormality_error() < 1e-10;
    match (complex, haar) {
        (true, true) => Ensemble::HaarRows,
        (true, false) => Ensemble::GaussianComplex,
        (false, true) => Ensemble::HaarRowsReal,
        (false, false) => Ensemble::GaussianReal,
    }
}

pub fn read_spkl(path: impl AsRef<Path>) -> Result<Spkl1> {
    let path = path.as_ref();
    decode_spkl(&read_bytes(path)?).map_err(|e| e.at(path.display().to_string()))
}

pub fn write_spkl(path: impl AsRef<Path>, c: &Spkl1) -> Result<()> {
    write_bytes(path.as_ref(), &encode_spkl(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{generate_looks, make_sensing, SceneImage};
    use crate::rng::RngSpec;

    fn sample(ensemble: Ensemble) -> Spkl1 {
        let x = SceneImage::new(2, 4, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).unwrap();
        let a = make_sensing(3, 8, ensemble, RngSpec::new(2, 1)).unwrap();
        let looks = generate_looks(&x, &a, 2, 1.0, 0.1, ensemble.is_real(), RngSpec::new(2, 2)).unwrap();
        Spkl1::new(a, looks).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for e in [Ensemble::HaarRows, Ensemble::GaussianReal, Ensemble::GaussianComplex, Ensemble::HaarRowsReal] {
            let c = sample(e);
            let bytes = encode_spkl(&c);
            let back = decode_spkl(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(encode_spkl(&back), bytes);
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_spkl(&sample(Ensemble::GaussianReal));
        assert_eq!(&bytes[..6], b"SPKL1\0");
        assert_eq!(bytes[6], 1);
        assert_eq!(bytes[7], 0);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        // header 36 bytes, real A 3·8·8, two looks of 3 pairs
        assert_eq!(bytes.len(), 36 + 3 * 8 * 8 + 2 * 3 * 16);
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_spkl(&sample(Ensemble::HaarRows));
        for cut in [3, 7, 20, 40, bytes.len() - 1] {
            match decode_spkl(&bytes[..cut]) {
                Err(Error::Corrupt { offset, .. }) => assert_eq!(offset, cut as u64),
                other => panic!("cut {cut}: {other:?}"),
            }
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_spkl(&bad), Err(Error::Corrupt { offset: 0, .. })));
    }
}
