//! Multilook negative log-likelihood, its gradient, and inverse-covariance upkeep.
//!
//! With `B(x) = σ_z² I + σ_w² A X² A^H` (an m×m Hermitian matrix held as `U + iV`),
//! the complex cost is
//!
//! ```text
//! f_L(x) = log det [[U, -V], [V, U]] + (1/L) Σ_ℓ ỹ_ℓᵀ [[U, -V], [V, U]]⁻¹ ỹ_ℓ
//! ```
//!
//! with `ỹ = [Re y; Im y]`. The real-valued variant replaces the embedding by the real
//! covariance `σ_z² I + σ_w² A X² Aᵀ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    dot, exact_inverse_block, gemm_slices, ns_step_with_residual, BlockHermitian, Cholesky,
    ComplexLu, RealMatrix,
};
use crate::measurement::{LookSet, SensingMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMode {
    Exact,
    NsApprox,
}

impl InverseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InverseMode::Exact => "exact",
            InverseMode::NsApprox => "ns-approx",
        }
    }
}

/// Covariance at one estimate together with its (exact or approximate) inverse.
#[derive(Debug, Clone)]
pub struct CovarianceState {
    pub x: Vec<f64>,
    pub sigma_w: f64,
    pub sigma_z: f64,
    pub b: BlockHermitian,
    pub binv: BlockHermitian,
    pub mode: InverseMode,
    /// Embedded residual `‖I - B·B⁻¹‖_F` after the last Newton-Schulz step.
    pub ns_residual: Option<f64>,
}

/// Per-pixel stacked columns `ã⁺ = [Re a; Im a]` and `ã⁻ = [-Im a; Re a]`, stored as
/// the rows of two n×2m matrices.
#[derive(Debug, Clone)]
pub struct ColumnCache {
    pub plus: RealMatrix,
    pub minus: RealMatrix,
}

impl ColumnCache {
    pub fn new(a: &SensingMatrix) -> Self {
        let (m, n) = (a.m(), a.n());
        let plus = RealMatrix::from_fn(n, 2 * m, |j, i| {
            if i < m {
                a.re[(i, j)]
            } else {
                a.im[(i - m, j)]
            }
        });
        let minus = RealMatrix::from_fn(n, 2 * m, |j, i| {
            if i < m {
                -a.im[(i, j)]
            } else {
                a.re[(i - m, j)]
            }
        });
        Self { plus, minus }
    }
}

fn check_shapes(x: &[f64], a: &SensingMatrix) -> Result<()> {
    if x.len() != a.n() {
        return Err(Error::shape(format!(
            "estimate has {} pixels, sensing matrix has {} columns",
            x.len(),
            a.n()
        )));
    }
    Ok(())
}

fn check_looks(looks: &LookSet, a: &SensingMatrix) -> Result<()> {
    if looks.count() == 0 {
        return Err(Error::shape("empty look set"));
    }
    if looks.m() != a.m() {
        return Err(Error::shape(format!(
            "looks have length {}, sensing matrix has {} rows",
            looks.m(),
            a.m()
        )));
    }
    Ok(())
}

/// `σ_z² I + σ_w² A X² A^H` as `U + iV`.
pub fn covariance_matrix(x: &[f64], a: &SensingMatrix, sigma_w: f64, sigma_z: f64) -> Result<BlockHermitian> {
    check_shapes(x, a)?;
    let (m, n) = (a.m(), a.n());
    // G = A·diag(x)
    let scale_cols = |mat: &RealMatrix| -> Vec<f64> {
        let mut g = mat.as_slice().to_vec();
        for row in g.chunks_mut(n) {
            for (v, xj) in row.iter_mut().zip(x) {
                *v *= xj;
            }
        }
        g
    };
    let gr = scale_cols(&a.re);
    let gi = scale_cols(&a.im);
    let s2 = sigma_w * sigma_w;
    let mut u = vec![0.0; m * m];
    let mut v = vec![0.0; m * m];
    // U = σ_w² (Gr Grᵀ + Gi Giᵀ), V = σ_w² (Gi Grᵀ - Gr Giᵀ)
    gemm_slices(m, n, m, s2, &gr, false, &gr, true, 0.0, &mut u);
    let complex = !a.is_real();
    if complex {
        gemm_slices(m, n, m, s2, &gi, false, &gi, true, 1.0, &mut u);
        gemm_slices(m, n, m, s2, &gi, false, &gr, true, 0.0, &mut v);
        gemm_slices(m, n, m, -s2, &gr, false, &gi, true, 1.0, &mut v);
    }
    let mut u = RealMatrix::new(m, m, u)?.symmetrized();
    let v = RealMatrix::new(m, m, v)?;
    let v = v.sub(&v.transpose()).scaled(0.5);
    let z2 = sigma_z * sigma_z;
    for i in 0..m {
        u[(i, i)] += z2;
    }
    BlockHermitian::new(u, v)
}

/// Builds `B(x)` and its exact inverse.
pub fn build_covariance(x: &[f64], a: &SensingMatrix, sigma_w: f64, sigma_z: f64) -> Result<CovarianceState> {
    if sigma_w <= 0.0 {
        return Err(Error::Config("sigma_w must be positive".into()));
    }
    let b = covariance_matrix(x, a, sigma_w, sigma_z)?;
    let binv = exact_inverse_block(&b)?;
    Ok(CovarianceState {
        x: x.to_vec(),
        sigma_w,
        sigma_z,
        b,
        binv,
        mode: InverseMode::Exact,
        ns_residual: None,
    })
}

/// Exact complex negative log-likelihood `f_L(x)`.
pub fn nll_complex(x: &[f64], looks: &LookSet, a: &SensingMatrix) -> Result<f64> {
    check_looks(looks, a)?;
    let b = covariance_matrix(x, a, looks.sigma_w, looks.sigma_z)?;
    let lu = ComplexLu::factor(&b)?;
    // Reject near-singular covariances the same way the inverse does.
    lu.inverse(b.norm1())?;
    let log_det = 2.0 * lu.log_abs_det();
    let mut quad = 0.0;
    for look in &looks.looks {
        let y: Vec<Complex64> = look
            .re
            .iter()
            .zip(&look.im)
            .map(|(r, i)| Complex64::new(*r, *i))
            .collect();
        let z = lu.solve(&y);
        // ỹᵀ B̃⁻¹ ỹ = Re(y^H B⁻¹ y)
        quad += y.iter().zip(&z).map(|(yi, zi)| (yi.conj() * zi).re).sum::<f64>();
    }
    Ok(log_det + quad / looks.count() as f64)
}

/// Negative log-likelihood at the state's estimate: the quadratic term uses the state's
/// inverse, the log-determinant a fresh factorization of `B`.
pub fn nll_at_state(state: &CovarianceState, looks: &LookSet) -> Result<f64> {
    let lu = ComplexLu::factor(&state.b)?;
    let log_det = 2.0 * lu.log_abs_det();
    let mut quad = 0.0;
    for look in &looks.looks {
        let (zr, zi) = state.binv.apply(&look.re, &look.im);
        quad += dot(&look.re, &zr) + dot(&look.im, &zi);
    }
    Ok(log_det + quad / looks.count() as f64)
}

/// Gradient of `f_L` written with the stacked columns `ã⁺`, `ã⁻` and the full 2m×2m
/// inverse embedding.
pub fn grad_nll_full(
    x: &[f64],
    looks: &LookSet,
    state: &CovarianceState,
    cache: &ColumnCache,
) -> Result<Vec<f64>> {
    let n = x.len();
    let two_m = 2 * state.binv.dim();
    if cache.plus.rows() != n || cache.plus.cols() != two_m {
        return Err(Error::shape("column cache does not match the estimate/inverse"));
    }
    if looks.m() * 2 != two_m {
        return Err(Error::shape("look length does not match the inverse"));
    }
    let e = state.binv.embed();
    let s2 = state.sigma_w * state.sigma_w;
    // Q± = ã±ᵀ B⁻¹ (n × 2m)
    let mut q_plus = vec![0.0; n * two_m];
    let mut q_minus = vec![0.0; n * two_m];
    gemm_slices(n, two_m, two_m, 1.0, cache.plus.as_slice(), false, e.as_slice(), false, 0.0, &mut q_plus);
    gemm_slices(n, two_m, two_m, 1.0, cache.minus.as_slice(), false, e.as_slice(), false, 0.0, &mut q_minus);
    let stacked: Vec<Vec<f64>> = looks.looks.iter().map(|l| l.stacked()).collect();
    let l = looks.count() as f64;
    let mut grad = vec![0.0; n];
    for j in 0..n {
        let qp = &q_plus[j * two_m..(j + 1) * two_m];
        let qm = &q_minus[j * two_m..(j + 1) * two_m];
        let trace_term = dot(qp, cache.plus.row(j)) + dot(qm, cache.minus.row(j));
        let data_term: f64 = stacked
            .iter()
            .map(|y| {
                let p = dot(qp, y);
                let q = dot(qm, y);
                p * p + q * q
            })
            .sum();
        grad[j] = 2.0 * x[j] * s2 * trace_term - 2.0 * x[j] * s2 / l * data_term;
    }
    Ok(grad)
}

/// Gradient of `f_L` through the complex inverse `U + iV`:
/// `4 x_j σ_w² Re(a_jᴴ (U+iV) a_j) - (2 x_j σ_w² / L) Σ_ℓ |a_jᴴ (U+iV) y_ℓ|²`.
pub fn grad_nll_fast(
    x: &[f64],
    looks: &LookSet,
    state: &CovarianceState,
    a: &SensingMatrix,
) -> Result<Vec<f64>> {
    check_shapes(x, a)?;
    check_looks(looks, a)?;
    let (m, n) = (a.m(), a.n());
    if state.binv.dim() != m {
        return Err(Error::shape("inverse does not match the sensing matrix"));
    }
    let mu = state.binv.u.as_slice();
    let mv = state.binv.v.as_slice();
    let (ar, ai) = (a.re.as_slice(), a.im.as_slice());
    // W = (U + iV) A
    let mut wr = vec![0.0; m * n];
    let mut wi = vec![0.0; m * n];
    gemm_slices(m, m, n, 1.0, mu, false, ar, false, 0.0, &mut wr);
    gemm_slices(m, m, n, -1.0, mv, false, ai, false, 1.0, &mut wr);
    gemm_slices(m, m, n, 1.0, mu, false, ai, false, 0.0, &mut wi);
    gemm_slices(m, m, n, 1.0, mv, false, ar, false, 1.0, &mut wi);
    // Re(conj(a_j)ᵀ w_j) accumulated row by row
    let mut diag = vec![0.0; n];
    for i in 0..m {
        let row = i * n..(i + 1) * n;
        for (((d, a_r), a_i), (w_r, w_i)) in diag
            .iter_mut()
            .zip(&ar[row.clone()])
            .zip(&ai[row.clone()])
            .zip(wr[row.clone()].iter().zip(&wi[row]))
        {
            *d += a_r * w_r + a_i * w_i;
        }
    }
    let mut data = vec![0.0; n];
    for look in &looks.looks {
        let (zr, zi) = state.binv.apply(&look.re, &look.im);
        let (pr, pi) = a.adjoint_apply(&zr, &zi);
        for (d, (r, i)) in data.iter_mut().zip(pr.iter().zip(&pi)) {
            *d += r * r + i * i;
        }
    }
    let s2 = state.sigma_w * state.sigma_w;
    let l = looks.count() as f64;
    Ok((0..n)
        .map(|j| 4.0 * x[j] * s2 * diag[j] - 2.0 * x[j] * s2 / l * data[j])
        .collect())
}

fn real_covariance(x: &[f64], a: &SensingMatrix, sigma_w: f64, sigma_z: f64) -> Result<Cholesky> {
    if !a.is_real() {
        return Err(Error::shape("real likelihood needs a real sensing matrix"));
    }
    let b = covariance_matrix(x, a, sigma_w, sigma_z)?;
    Cholesky::factor(&b.u)
}

fn check_real_looks(looks: &LookSet, a: &SensingMatrix) -> Result<()> {
    check_looks(looks, a)?;
    if !looks.real_valued {
        return Err(Error::shape("real likelihood needs a real-valued look set"));
    }
    Ok(())
}

/// Real-valued negative log-likelihood
/// `log det(σ_z² I + σ_w² A X² Aᵀ) + (1/L) Σ yᵀ (·)⁻¹ y`.
pub fn nll_real(x: &[f64], looks: &LookSet, a: &SensingMatrix) -> Result<f64> {
    Ok(nll_and_grad_real(x, looks, a, false)?.0)
}

/// Gradient of [`nll_real`]:
/// `2 x_j σ_w² [a_jᵀ C⁻¹ a_j - (1/L) Σ (a_jᵀ C⁻¹ y_ℓ)²]`.
pub fn grad_nll_real(x: &[f64], looks: &LookSet, a: &SensingMatrix) -> Result<Vec<f64>> {
    Ok(nll_and_grad_real(x, looks, a, true)?.1)
}

/// Value and (optionally) gradient of the real likelihood sharing one factorization.
pub fn nll_and_grad_real(
    x: &[f64],
    looks: &LookSet,
    a: &SensingMatrix,
    with_grad: bool,
) -> Result<(f64, Vec<f64>)> {
    check_shapes(x, a)?;
    check_real_looks(looks, a)?;
    let chol = real_covariance(x, a, looks.sigma_w, looks.sigma_z)?;
    let l = looks.count() as f64;
    let solved: Vec<Vec<f64>> = looks.looks.iter().map(|y| chol.solve(&y.re)).collect();
    let quad: f64 = looks
        .looks
        .iter()
        .zip(&solved)
        .map(|(y, s)| dot(&y.re, s))
        .sum();
    let value = chol.log_det() + quad / l;
    if !with_grad {
        return Ok((value, Vec::new()));
    }
    let (m, n) = (a.m(), a.n());
    let cinv = chol.inverse();
    let mut w = vec![0.0; m * n];
    gemm_slices(m, m, n, 1.0, cinv.as_slice(), false, a.re.as_slice(), false, 0.0, &mut w);
    let mut diag = vec![0.0; n];
    for i in 0..m {
        for ((d, av), wv) in diag.iter_mut().zip(a.re.row(i)).zip(&w[i * n..(i + 1) * n]) {
            *d += av * wv;
        }
    }
    let mut data = vec![0.0; n];
    for s in &solved {
        let p = a.re.matvec_t(s);
        for (d, v) in data.iter_mut().zip(&p) {
            *d += v * v;
        }
    }
    let s2 = looks.sigma_w * looks.sigma_w;
    let grad = (0..n)
        .map(|j| 2.0 * x[j] * s2 * (diag[j] - data[j] / l))
        .collect();
    Ok((value, grad))
}

/// Rebuilds the covariance at `x_new` and refreshes its inverse.
///
/// The inverse is recomputed exactly when there is no previous state or when
/// `delta_inf > delta_x`; otherwise `ns_steps` Newton-Schulz steps are taken from the
/// previous inverse. A step whose residual grows returns [`Error::Diverged`].
#[allow(clippy::too_many_arguments)]
pub fn refresh_inverse(
    prev: Option<&CovarianceState>,
    x_new: &[f64],
    a: &SensingMatrix,
    sigma_w: f64,
    sigma_z: f64,
    delta_inf: f64,
    delta_x: f64,
    ns_steps: usize,
) -> Result<CovarianceState> {
    let prev = match prev {
        Some(p) if delta_inf <= delta_x && ns_steps > 0 => p,
        _ => return build_covariance(x_new, a, sigma_w, sigma_z),
    };
    if prev.binv.dim() != a.m() {
        return Err(Error::shape("previous inverse does not match the sensing matrix"));
    }
    let b = covariance_matrix(x_new, a, sigma_w, sigma_z)?;
    let mut m = prev.binv.clone();
    let mut residual = f64::NAN;
    for _ in 0..ns_steps {
        let (next, r) = ns_step_with_residual(&m, &b);
        let before = r.embedded_frobenius();
        // I - B M_next = (I - B M)²
        let after = r.mul(&r).embedded_frobenius();
        if !after.is_finite() || after > before {
            return Err(Error::Diverged { before, after });
        }
        m = next;
        residual = after;
    }
    Ok(CovarianceState {
        x: x_new.to_vec(),
        sigma_w,
        sigma_z,
        b,
        binv: m,
        mode: InverseMode::NsApprox,
        ns_residual: Some(residual),
    })
}
