//! Forward model: sensing ensembles, multilook speckle measurements and the
//! back-projection initializer.
//!
//! Look ℓ is `y_ℓ = A diag(x) w_ℓ + z_ℓ`. In complex mode the real and imaginary parts of
//! every speckle entry are independent N(0, σ_w²), so the stacked look `[Re y; Im y]`
//! has covariance exactly equal to the embedding of `σ_z² I + σ_w² A X² A^H`, the
//! matrix the likelihood is written in terms of.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, RealMatrix};
use crate::rng::{normal_vec, RngSpec};

/// A grayscale image with pixels in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl SceneImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Config(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Builds an image by clamping arbitrary finite values into [0, 1].
    pub fn clamped(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "while clamping an image".into(),
            });
        }
        Self::new(height, width, values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.width + c]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn mse(&self, other: &Self) -> Result<f64> {
        if !self.same_shape(other) {
            return Err(Error::shape("images differ in shape"));
        }
        let n = self.len() as f64;
        Ok(self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ensemble {
    /// iid N(0, 1) real entries.
    GaussianReal,
    /// iid CN(0, 1) entries: real and imaginary parts each N(0, 1/2).
    GaussianComplex,
    /// First m rows of a Haar-distributed unitary matrix.
    HaarRows,
    /// First m rows of a Haar-distributed real orthogonal matrix.
    HaarRowsReal,
}

impl Ensemble {
    pub fn is_real(self) -> bool {
        matches!(self, Ensemble::GaussianReal | Ensemble::HaarRowsReal)
    }
}

/// An m×n sensing matrix `A = re + i·im`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub ensemble: Ensemble,
    pub re: RealMatrix,
    pub im: RealMatrix,
}

impl SensingMatrix {
    pub fn from_parts(ensemble: Ensemble, re: RealMatrix, im: RealMatrix) -> Result<Self> {
        if (re.rows(), re.cols()) != (im.rows(), im.cols()) {
            return Err(Error::shape("real and imaginary parts differ in shape"));
        }
        Ok(Self { ensemble, re, im })
    }

    /// A real matrix with zero imaginary part.
    pub fn real(re: RealMatrix) -> Self {
        let im = RealMatrix::zeros(re.rows(), re.cols());
        Self {
            ensemble: Ensemble::GaussianReal,
            re,
            im,
        }
    }

    pub fn m(&self) -> usize {
        self.re.rows()
    }

    pub fn n(&self) -> usize {
        self.re.cols()
    }

    pub fn is_real(&self) -> bool {
        self.im.as_slice().iter().all(|v| *v == 0.0)
    }

    /// `‖A A^H - I‖_∞` (max entry modulus).
    pub fn row_orthonormality_error(&self) -> f64 {
        let m = self.m();
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for k in 0..m {
                let (ar, ai) = (self.re.row(i), self.im.row(i));
                let (br, bi) = (self.re.row(k), self.im.row(k));
                let re = dot(ar, br) + dot(ai, bi);
                let im = dot(ai, br) - dot(ar, bi);
                let target = if i == k { 1.0 } else { 0.0 };
                worst = worst.max((re - target).hypot(im));
            }
        }
        worst
    }

    /// `conj(A)ᵀ y` for a complex m-vector given as planes.
    pub fn adjoint_apply(&self, y_re: &[f64], y_im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        // conj(A)ᵀ y = (Arᵀ - i Aiᵀ)(yr + i yi)
        let ar_yr = self.re.matvec_t(y_re);
        let ai_yi = self.im.matvec_t(y_im);
        let ar_yi = self.re.matvec_t(y_im);
        let ai_yr = self.im.matvec_t(y_re);
        let re = ar_yr.iter().zip(&ai_yi).map(|(a, b)| a + b).collect();
        let im = ar_yi.iter().zip(&ai_yr).map(|(a, b)| a - b).collect();
        (re, im)
    }
}

pub fn make_sensing(m: usize, n: usize, ensemble: Ensemble, rng: RngSpec) -> Result<SensingMatrix> {
    if m == 0 || m > n {
        return Err(Error::shape(format!("sensing needs 1 <= m <= n, got m={m}, n={n}")));
    }
    let mut r = rng.rng();
    let (re, im) = match ensemble {
        Ensemble::GaussianReal => (normal_vec(&mut r, m * n), vec![0.0; m * n]),
        Ensemble::GaussianComplex => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let re = normal_vec(&mut r, m * n).into_iter().map(|v| v * s).collect();
            let im = normal_vec(&mut r, m * n).into_iter().map(|v| v * s).collect();
            (re, im)
        }
        Ensemble::HaarRows => {
            let re = normal_vec(&mut r, m * n);
            let im = normal_vec(&mut r, m * n);
            orthonormalize_rows(m, n, re, Some(im))
        }
        Ensemble::HaarRowsReal => {
            let re = normal_vec(&mut r, m * n);
            let (re, _) = orthonormalize_rows(m, n, re, None);
            (re, vec![0.0; m * n])
        }
    };
    SensingMatrix::from_parts(ensemble, RealMatrix::new(m, n, re)?, RealMatrix::new(m, n, im)?)
}

/// Gram-Schmidt with one reorthogonalization pass over the rows of a Gaussian matrix.
///
/// The resulting rows have a positive-diagonal triangular factor, which fixes the phase
/// ambiguity of the factorization and makes the row set Haar distributed.
fn orthonormalize_rows(
    m: usize,
    n: usize,
    mut re: Vec<f64>,
    mut im: Option<Vec<f64>>,
) -> (Vec<f64>, Vec<f64>) {
    for i in 0..m {
        for _pass in 0..2 {
            for k in 0..i {
                // coefficient <row_k, row_i> = Σ conj(q_k) v_i
                let (qk_re, vi_re) = (&re[k * n..(k + 1) * n], &re[i * n..(i + 1) * n]);
                let mut c_re = dot(qk_re, vi_re);
                let mut c_im = 0.0;
                if let Some(im) = im.as_ref() {
                    let (qk_im, vi_im) = (&im[k * n..(k + 1) * n], &im[i * n..(i + 1) * n]);
                    c_re += dot(qk_im, vi_im);
                    c_im = dot(qk_re, vi_im) - dot(qk_im, vi_re);
                }
                // v_i -= c q_k
                for j in 0..n {
                    let (qr, qi) = (re[k * n + j], im.as_ref().map_or(0.0, |v| v[k * n + j]));
                    re[i * n + j] -= c_re * qr - c_im * qi;
                    if let Some(im) = im.as_mut() {
                        im[i * n + j] -= c_re * qi + c_im * qr;
                    }
                }
            }
        }
        let mut norm2 = dot(&re[i * n..(i + 1) * n], &re[i * n..(i + 1) * n]);
        if let Some(im) = im.as_ref() {
            norm2 += dot(&im[i * n..(i + 1) * n], &im[i * n..(i + 1) * n]);
        }
        let inv = 1.0 / norm2.sqrt();
        re[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= inv);
        if let Some(im) = im.as_mut() {
            im[i * n..(i + 1) * n].iter_mut().for_each(|v| *v *= inv);
        }
    }
    let im = im.unwrap_or_else(|| vec![0.0; m * n]);
    (re, im)
}

/// One complex measurement vector as real/imaginary planes.
#[derive(Debug, Clone, PartialEq)]
pub struct Look {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Look {
    pub fn new(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != im.len() {
            return Err(Error::shape("look planes differ in length"));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "in look vector".into(),
            });
        }
        Ok(Self { re, im })
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn stacked(&self) -> Vec<f64> {
        stack_real(&self.re, &self.im)
    }
}

/// L measurement vectors of one static scene.
#[derive(Debug, Clone, PartialEq)]
pub struct LookSet {
    pub looks: Vec<Look>,
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub real_valued: bool,
}

impl LookSet {
    pub fn new(looks: Vec<Look>, sigma_w: f64, sigma_z: f64, real_valued: bool) -> Result<Self> {
        let m = looks.first().map_or(0, Look::len);
        if looks.iter().any(|l| l.len() != m) {
            return Err(Error::shape("looks differ in length"));
        }
        if !(sigma_w >= 0.0 && sigma_z >= 0.0) {
            return Err(Error::Config("noise levels must be non-negative".into()));
        }
        if real_valued && looks.iter().any(|l| l.im.iter().any(|v| *v != 0.0)) {
            return Err(Error::Config("real-valued look set has imaginary parts".into()));
        }
        Ok(Self {
            looks,
            sigma_w,
            sigma_z,
            real_valued,
        })
    }

    pub fn count(&self) -> usize {
        self.looks.len()
    }

    pub fn m(&self) -> usize {
        self.looks.first().map_or(0, Look::len)
    }
}

/// `[Re y; Im y]`.
pub fn stack_real(re: &[f64], im: &[f64]) -> Vec<f64> {
    re.iter().chain(im).copied().collect()
}

/// Draws L looks of `x` through `A`. Look ℓ uses stream `rng.child(ℓ)`.
pub fn generate_looks(
    x: &SceneImage,
    a: &SensingMatrix,
    looks: usize,
    sigma_w: f64,
    sigma_z: f64,
    real_valued: bool,
    rng: RngSpec,
) -> Result<LookSet> {
    if a.n() != x.len() {
        return Err(Error::shape(format!(
            "sensing matrix has {} columns but image has {} pixels",
            a.n(),
            x.len()
        )));
    }
    if looks == 0 {
        return Err(Error::shape("need at least one look"));
    }
    if real_valued && !a.is_real() {
        return Err(Error::shape("real-valued looks need a real sensing matrix"));
    }
    let (m, n) = (a.m(), a.n());
    let mut out = Vec::with_capacity(looks);
    for l in 0..looks {
        let mut r = rng.child(l as u64).rng();
        let draw = |len: usize, sigma: f64, r: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..len)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(r);
                    sigma * g
                })
                .collect()
        };
        let w_re = draw(n, sigma_w, &mut r);
        let w_im = if real_valued { vec![0.0; n] } else { draw(n, sigma_w, &mut r) };
        let z_re = draw(m, sigma_z, &mut r);
        let z_im = if real_valued { vec![0.0; m] } else { draw(m, sigma_z, &mut r) };
        let g_re: Vec<f64> = x.pixels().iter().zip(&w_re).map(|(p, w)| p * w).collect();
        let g_im: Vec<f64> = x.pixels().iter().zip(&w_im).map(|(p, w)| p * w).collect();
        let mut y_re = a.re.matvec(&g_re);
        let mut y_im = vec![0.0; m];
        if !real_valued {
            let ai_gi = a.im.matvec(&g_im);
            let ar_gi = a.re.matvec(&g_im);
            let ai_gr = a.im.matvec(&g_re);
            for i in 0..m {
                y_re[i] -= ai_gi[i];
                y_im[i] = ar_gi[i] + ai_gr[i];
            }
        }
        for i in 0..m {
            y_re[i] += z_re[i];
            y_im[i] += z_im[i];
        }
        out.push(Look::new(y_re, y_im)?);
    }
    LookSet::new(out, sigma_w, sigma_z, real_valued)
}

/// Back-projection start point: pixel j is the look-average of `|conj(A)ᵀ y_ℓ|_j`, clipped
/// to [0, 1].
pub fn init_estimate(a: &SensingMatrix, looks: &LookSet, height: usize, width: usize) -> Result<SceneImage> {
    if looks.m() != a.m() {
        return Err(Error::shape("look length does not match sensing rows"));
    }
    if height * width != a.n() {
        return Err(Error::shape("image shape does not match sensing columns"));
    }
    let mut acc = vec![0.0; a.n()];
    for look in &looks.looks {
        let (re, im) = a.adjoint_apply(&look.re, &look.im);
        for (s, (r, i)) in acc.iter_mut().zip(re.iter().zip(&im)) {
            *s += r.hypot(*i);
        }
    }
    let l = looks.count() as f64;
    SceneImage::clamped(height, width, acc.into_iter().map(|v| v / l).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scene_rejects_out_of_range() {
        assert!(SceneImage::new(1, 2, vec![0.5, 1.5]).is_err());
        assert!(SceneImage::new(1, 2, vec![0.5]).is_err());
        assert!(SceneImage::new(1, 2, vec![0.0, 1.0]).is_ok());
    }

    #[test]
    fn haar_scalar_has_unit_modulus() {
        let a = make_sensing(1, 1, Ensemble::HaarRows, RngSpec::new(3, 1)).unwrap();
        let z = a.re[(0, 0)].hypot(a.im[(0, 0)]);
        assert!((z - 1.0).abs() < 1e-14);
    }

    #[test]
    fn haar_rows_orthonormal() {
        let a = make_sensing(4, 8, Ensemble::HaarRows, RngSpec::new(5, 1)).unwrap();
        assert!(a.row_orthonormality_error() < 1e-10);
        let a = make_sensing(5, 9, Ensemble::HaarRowsReal, RngSpec::new(5, 1)).unwrap();
        assert!(a.is_real());
        assert!(a.row_orthonormality_error() < 1e-10);
    }

    #[test]
    fn bad_shape_when_m_exceeds_n() {
        assert!(matches!(
            make_sensing(5, 4, Ensemble::GaussianReal, RngSpec::new(0, 0)),
            Err(Error::BadShape(_))
        ));
    }

    #[test]
    fn zero_noise_gives_zero_looks() {
        let x = SceneImage::constant(2, 2, 0.7).unwrap();
        let a = make_sensing(2, 4, Ensemble::GaussianComplex, RngSpec::new(1, 1)).unwrap();
        let ls = generate_looks(&x, &a, 3, 0.0, 0.0, false, RngSpec::new(1, 2)).unwrap();
        assert!(ls
            .looks
            .iter()
            .all(|l| l.re.iter().chain(&l.im).all(|v| *v == 0.0)));
    }

    #[test]
    fn real_scalar_pass_through() {
        let x = SceneImage::new(1, 1, vec![0.5]).unwrap();
        let a = SensingMatrix::real(RealMatrix::identity(1));
        let rng = RngSpec::new(42, 9);
        let ls = generate_looks(&x, &a, 1, 1.0, 0.0, true, rng).unwrap();
        let w: f64 = StandardNormal.sample(&mut rng.child(0).rng());
        assert_eq!(ls.looks[0].re[0], 0.5 * w);
        assert_eq!(ls.looks[0].im[0], 0.0);
    }

    #[test]
    fn stack_real_examples() {
        assert_eq!(stack_real(&[1.0], &[2.0]), vec![1.0, 2.0]);
        assert_eq!(stack_real(&[0.0, 0.0], &[0.0, 0.0]), vec![0.0; 4]);
    }

    #[test]
    fn init_estimate_modulus_then_clip() {
        let a = SensingMatrix::real(RealMatrix::identity(1));
        let ls = LookSet::new(vec![Look::new(vec![3.0], vec![4.0]).unwrap()], 1.0, 0.0, false).unwrap();
        let x0 = init_estimate(&a, &ls, 1, 1).unwrap();
        assert_eq!(x0.pixels(), &[1.0]);

        let zero = LookSet::new(vec![Look::new(vec![0.0; 2], vec![0.0; 2]).unwrap(); 3], 1.0, 0.0, false).unwrap();
        let a = make_sensing(2, 4, Ensemble::HaarRows, RngSpec::new(0, 0)).unwrap();
        assert!(init_estimate(&a, &zero, 2, 2).unwrap().pixels().iter().all(|v| *v == 0.0));
    }
}
