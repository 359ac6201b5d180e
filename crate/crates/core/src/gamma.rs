//! The Γ-function: the unique tail-averaging index, `φ_t`, `Γ_t`, and the
//! supergradient core `Θ̂` used by the factorization bound, its certificate
//! and the g-scaling gradients.

use crate::error::{GmespError, Result};
use crate::linalg::{numerical_rank, sym_eigen, Mat, Vector};

/// Weight factor `1 + ε` applied to the null-space block of `β̂`.
pub const BETA_EPS: f64 = 1e-8;

/// Evaluation of `Γ_t` at a PSD matrix.
#[derive(Debug, Clone)]
pub struct GammaEval {
    /// The unique index `ı̂ ∈ [0, t)`.
    pub ihat: usize,
    /// Tail average `δ̂`.
    pub delta: f64,
    /// `Γ_t(X) = Σ_{ℓ≤ı̂} log ω_ℓ + (t − ı̂) log δ̂`.
    pub value: f64,
    /// Descending eigenvalues `ω` (negative rounding noise clamped to 0).
    pub omega: Vector,
    /// Eigenvectors matching `omega`.
    pub vectors: Mat,
    /// Numerical rank of `X`.
    pub rank: usize,
    /// Inverse-spectrum weights `β̂`.
    pub beta: Vector,
    /// `Θ̂ = Σ β̂_ℓ u_ℓ u_ℓᵀ`.
    pub theta: Mat,
}

/// Returns `(ı̂, δ̂)`: the unique `i ∈ [0, t)` with
/// `ω_i > (1/(t−i)) Σ_{ℓ>i} ω_ℓ ≥ ω_{i+1}` (with `ω_0 = +∞`), and that average.
pub fn nikolov_index(omega: &[f64], t: usize) -> Result<(usize, f64)> {
    let k = omega.len();
    if t == 0 || t > k {
        return Err(GmespError::InvariantViolation(format!("need 0 < t <= {k}, got {t}")));
    }
    // suffix sums: tail[i] = Σ_{j ≥ i} omega[j] (0-based), i.e. Σ_{ℓ > i} ω_ℓ
    let mut tail = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tail[j] = tail[j + 1] + omega[j];
    }
    let mut best: Option<(usize, f64, f64)> = None;
    for i in 0..t {
        let avg = tail[i] / (t - i) as f64;
        let upper_ok = i == 0 || omega[i - 1] > avg;
        let lower_ok = avg >= omega[i];
        if upper_ok && lower_ok {
            return finish(i, avg, tail[i]);
        }
        // violation measure, for the rounding fallback below
        let viol = (if upper_ok { 0.0 } else { avg - omega[i - 1] }).max(0.0)
            + (omega[i] - avg).max(0.0);
        if best.map_or(true, |(_, _, v)| viol < v) {
            best = Some((i, avg, viol));
        }
    }
    // Exact arithmetic always finds an index; floating-point ties can break
    // both strict checks by an ulp, in which case the least-violating index wins.
    let (i, avg, _) = best.expect("t > 0");
    finish(i, avg, tail[i])
}

fn finish(i: usize, avg: f64, tail: f64) -> Result<(usize, f64)> {
    if !(tail > 0.0) {
        return Err(GmespError::DegenerateSpectrum(format!(
            "tail sum beyond index {i} is {tail:e}"
        )));
    }
    Ok((i, avg))
}

/// `Γ_t(X)` for PSD `X`, with the supergradient core `Θ̂`.
pub fn gamma_value(x: &Mat, t: usize) -> Result<GammaEval> {
    let spec = sym_eigen(x)?;
    let omega = spec.values.map(|v| v.max(0.0));
    let (ihat, delta) = nikolov_index(omega.as_slice(), t)?;
    let value = omega.iter().take(ihat).map(|w| w.ln()).sum::<f64>() + (t - ihat) as f64 * delta.ln();
    let rank = numerical_rank(omega.as_slice()).max(t);
    let k = omega.len();
    let beta = Vector::from_fn(k, |l, _| {
        if l < ihat {
            1.0 / omega[l]
        } else if l < rank {
            1.0 / delta
        } else {
            (1.0 + BETA_EPS) / delta
        }
    });
    let mut scaled = spec.vectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= beta[j];
    }
    let theta = crate::linalg::symmetrize(&(scaled * spec.vectors.transpose()));
    Ok(GammaEval { ihat, delta, value, omega, vectors: spec.vectors, rank, beta, theta })
}

/// `FᵀDiag(x)F`.
pub fn factor_product(f: &Mat, x: &Vector) -> Mat {
    let mut fx = f.clone();
    for (i, mut row) in fx.row_iter_mut().enumerate() {
        row *= x[i];
    }
    crate::linalg::symmetrize(&(f.transpose() * fx))
}

/// `diag(F Θ F ᵀ)`.
pub fn diag_sandwich(f: &Mat, theta: &Mat) -> Vector {
    let ft = f * theta;
    Vector::from_fn(f.nrows(), |i, _| ft.row(i).dot(&f.row(i)))
}

/// Supergradient `d = diag(F Θ̂ Fᵀ)` of `x ↦ Γ_t(FᵀDiag(x)F)`.
pub fn gamma_supergradient(f: &Mat, x: &Vector, t: usize) -> Result<Vector> {
    let ge = gamma_value(&factor_product(f, x), t)?;
    Ok(diag_sandwich(f, &ge.theta))
}
