//! Dense symmetric linear algebra: eigen-decomposition with a fixed ordering
//! contract, log-determinants, PSD projection, the factorizations used by the
//! relaxations, and a small dense LP kernel.

mod eigen;
mod lp;

pub use lp::{lp_maximize, LinearProgram, LpSolution};

use crate::error::{GmespError, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Dense real matrix (symmetric unless stated otherwise).
pub type Mat = DMatrix<f64>;
/// Dense real vector.
pub type Vector = DVector<f64>;

/// Eigenvalues `λ_i > RANK_TOL · max(1, λ_1)` count toward the numerical rank.
pub const RANK_TOL: f64 = 1e-9;

/// Relative tolerance for positive definiteness: `λ_n > PD_TOL · λ_1`.
pub const PD_TOL: f64 = 1e-12;
/// Symmetry tolerance: `|M_ij − M_ji| ≤ SYM_TOL · (1 + |M_ij|)`.
pub const SYM_TOL: f64 = 1e-10;

/// Checks that `m` is square, finite and symmetric within [`SYM_TOL`].
pub fn check_symmetric(m: &Mat) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(GmespError::InvariantViolation(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let a = m[(i, j)];
            if !a.is_finite() {
                return Err(GmespError::InvariantViolation(format!(
                    "non-finite entry at ({i},{j})"
                )));
            }
            if j > i && (a - m[(j, i)]).abs() > SYM_TOL * (1.0 + a.abs()) {
                return Err(GmespError::InvariantViolation(format!(
                    "matrix not symmetric at ({i},{j}): {a} vs {}",
                    m[(j, i)]
                )));
            }
        }
    }
    Ok(())
}

/// Returns `(M + Mᵀ)/2`.
pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Eigen-decomposition `M = Φ Diag(λ) Φᵀ` with eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    /// Eigenvalues, `λ_1 ≥ … ≥ λ_n`.
    pub values: Vector,
    /// Orthonormal eigenvectors, column `i` pairs with `values[i]`.
    pub vectors: Mat,
}

impl Spectrum {
    /// Numerical rank under [`RANK_TOL`].
    pub fn rank(&self) -> usize {
        numerical_rank(self.values.as_slice())
    }

    /// `Φ Diag(λ) Φᵀ`.
    pub fn reconstruct(&self) -> Mat {
        self.reconstruct_with(|l| l)
    }

    /// `Φ Diag(f(λ)) Φᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(f64) -> f64) -> Mat {
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= f(self.values[j]);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }

    /// Largest eigenvalue.
    pub fn max(&self) -> f64 {
        self.values[0]
    }

    /// Smallest eigenvalue.
    pub fn min(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Number of entries of a descending spectrum above `RANK_TOL · max(1, λ_1)`.
pub fn numerical_rank(desc: &[f64]) -> usize {
    if desc.is_empty() {
        return 0;
    }
    let thr = RANK_TOL * desc[0].max(1.0);
    desc.iter().filter(|&&l| l > thr).count()
}

/// Symmetric eigen-decomposition with descending eigenvalues.
///
/// Ties are ordered by the solver's original column index, so the output is
/// deterministic for a given input.
pub fn sym_eigen(m: &Mat) -> Result<Spectrum> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(GmespError::InvariantViolation("sym_eigen: non-square input".into()));
    }
    if n == 0 {
        return Ok(Spectrum { values: Vector::zeros(0), vectors: Mat::zeros(0, 0) });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(GmespError::InvariantViolation("sym_eigen: non-finite entry".into()));
    }
    let sym = symmetrize(m);
    // row-major copy for the QL kernel (symmetric, so storage order is moot)
    let flat: Vec<f64> = sym.iter().copied().collect();
    let (vals, vecs) = eigen::tridiag_ql(&flat, n)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let values = Vector::from_iterator(n, order.iter().map(|&i| vals[i]));
    let vectors = Mat::from_fn(n, n, |r, j| vecs[r * n + order[j]]);
    let spec = Spectrum { values, vectors };
    let scale = sym.amax().max(f64::MIN_POSITIVE);
    let resid = (spec.reconstruct() - &sym).amax();
    if resid > 1e-8 * scale.max(1.0) {
        return Err(GmespError::EigenFailure(format!(
            "reconstruction residual {resid:e} exceeds tolerance (n = {n})"
        )));
    }
    Ok(spec)
}

/// `ldet M = Σ log λ_i` for positive definite `M` (requires `λ_n > 1e-12 · λ_1`).
pub fn ldet_psd(m: &Mat) -> Result<f64> {
    let spec = sym_eigen(m)?;
    if spec.values.is_empty() {
        return Ok(0.0);
    }
    let (hi, lo) = (spec.max(), spec.min());
    if !(lo > 0.0 && lo > PD_TOL * hi) {
        return Err(GmespError::NearSingular(format!(
            "ldet of matrix with eigenvalue range [{lo:e}, {hi:e}]"
        )));
    }
    Ok(spec.values.iter().map(|l| l.ln()).sum())
}

/// Log-determinant through a Cholesky factorization; `None` if `M` is not
/// numerically positive definite. Used inside solvers as a domain test.
pub fn ldet_chol(m: &Mat) -> Option<(f64, Cholesky<f64, Dyn>)> {
    let ch = Cholesky::new(symmetrize(m))?;
    let l = ch.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        s += 2.0 * d.ln();
    }
    Some((s, ch))
}

/// Inverse of a symmetric positive definite matrix.
pub fn inverse_spd(m: &Mat) -> Result<Mat> {
    let (_, ch) = ldet_chol(m)
        .ok_or_else(|| GmespError::NearSingular("matrix is not positive definite".into()))?;
    Ok(symmetrize(&ch.inverse()))
}

/// Euclidean (Frobenius-nearest) projection onto the PSD cone.
pub fn project_psd(m: &Mat) -> Result<Mat> {
    let spec = sym_eigen(m)?;
    if spec.values.iter().all(|&l| l >= 0.0) {
        return Ok(symmetrize(m));
    }
    Ok(spec.reconstruct_with(|l| l.max(0.0)))
}

/// Principal submatrix `M[S, S]`.
pub fn principal_submatrix(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])])
}

/// Block-diagonal `I_k ⊗ M`.
pub fn kron_identity(m: &Mat, k: usize) -> Mat {
    let (r, c) = m.shape();
    let mut out = Mat::zeros(k * r, k * c);
    for b in 0..k {
        out.view_mut((b * r, b * c), (r, c)).copy_from(m);
    }
    out
}

/// The factorizations of a PSD covariance matrix used by the bounds:
/// `C = FFᵀ`, `I − C/λ_max = HHᵀ` and (for `C ≻ 0`) `C/λ_min − I = GGᵀ`.
#[derive(Debug, Clone)]
pub struct FactorSet {
    /// `n × r` factor `ΦΛ^{1/2}` restricted to the nonzero spectrum.
    pub f: Mat,
    /// `n × p` factor of `I − C/λ_max`.
    pub h: Mat,
    /// `n × q` factor of `C/λ_min − I`, present only when `C ≻ 0`.
    pub g: Option<Mat>,
    /// Numerical rank of `C`.
    pub r: usize,
    /// Column count of `H`.
    pub p: usize,
    /// Column count of `G` (0 when absent).
    pub q: usize,
    /// `λ_max(C)`.
    pub lambda_max: f64,
    /// `λ_min(C)`.
    pub lambda_min: f64,
    /// The spectrum the factors were built from.
    pub spectrum: Spectrum,
}

/// Builds `n × k` matrix `Φ_{·J} Diag(w_J)^{1/2}` for the columns `J` where `w > thr`.
fn scaled_columns(spec: &Spectrum, w: &[f64], thr: f64) -> Mat {
    let cols: Vec<usize> = (0..w.len()).filter(|&j| w[j] > thr).collect();
    let n = spec.vectors.nrows();
    let mut out = Mat::zeros(n, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        out.set_column(k, &(spec.vectors.column(j) * w[j].sqrt()));
    }
    out
}

/// Computes [`FactorSet`] for a PSD matrix.
pub fn factor_set(c: &Mat) -> Result<FactorSet> {
    let spec = sym_eigen(c)?;
    let lmax = spec.max();
    let lmin = spec.min();
    let r = spec.rank();
    let thr = RANK_TOL * lmax.max(1.0);
    let f = scaled_columns(&spec, spec.values.as_slice(), thr);
    let hw: Vec<f64> = spec.values.iter().map(|&l| 1.0 - l / lmax).collect();
    let h = scaled_columns(&spec, &hw, RANK_TOL);
    let g = if lmin > 0.0 && lmin > PD_TOL * lmax {
        let gw: Vec<f64> = spec.values.iter().map(|&l| l / lmin - 1.0).collect();
        Some(scaled_columns(&spec, &gw, RANK_TOL))
    } else {
        None
    };
    let p = h.ncols();
    let q = g.as_ref().map_or(0, |g| g.ncols());
    Ok(FactorSet { f, h, g, r, p, q, lambda_max: lmax, lambda_min: lmin, spectrum: spec })
}

/// Sum of the `t` largest log-eigenvalues of a descending spectrum.
pub fn top_logs(desc: &[f64], t: usize) -> f64 {
    desc.iter().take(t).map(|l| l.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut ChaCha8Rng, n: usize) -> Mat {
        let a = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        symmetrize(&a)
    }

    #[test]
    fn identity_spectrum() {
        let s = sym_eigen(&Mat::identity(3, 3)).unwrap();
        assert!(s.values.iter().all(|&l| (l - 1.0).abs() < 1e-14));
    }

    #[test]
    fn two_by_two_closed_form() {
        let m = Mat::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let s = sym_eigen(&m).unwrap();
        assert!((s.values[0] - (3.0 + 5f64.sqrt())).abs() < 1e-12);
        assert!((s.values[1] - (3.0 - 5f64.sqrt())).abs() < 1e-12);
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..1000 {
            let n = 1 + trial % 50;
            let m = random_sym(&mut rng, n);
            let s = sym_eigen(&m).unwrap();
            let orth = (&s.vectors * s.vectors.transpose() - Mat::identity(n, n)).amax();
            assert!(orth <= 1e-8, "orthonormality {orth}");
            let rec = (s.reconstruct() - &m).amax();
            assert!(rec <= 1e-8 * m.amax(), "reconstruction {rec}");
            for i in 1..n {
                assert!(s.values[i - 1] >= s.values[i]);
            }
        }
    }

    #[test]
    fn ldet_examples() {
        assert_eq!(ldet_psd(&Mat::identity(5, 5)).unwrap(), 0.0);
        let d = Mat::from_diagonal(&Vector::from_vec(vec![2.0, 8.0]));
        assert!((ldet_psd(&d).unwrap() - 16f64.ln()).abs() < 1e-14);
        assert!(matches!(
            ldet_psd(&Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]))),
            Err(GmespError::NearSingular(_))
        ));
    }

    #[test]
    fn ldet_kron_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = Mat::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let m = &q.transpose() * &q + Mat::identity(4, 4);
        let base = ldet_psd(&m).unwrap();
        for k in 1..4 {
            let lifted = ldet_psd(&kron_identity(&m, k)).unwrap();
            assert!((lifted - k as f64 * base).abs() <= 1e-9);
        }
    }

    #[test]
    fn project_psd_examples() {
        let d = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -1.0]));
        let p = project_psd(&d).unwrap();
        assert!((p - Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0]))).amax() < 1e-14);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(2..8);
            let q = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let psd = &q * q.transpose();
            assert!((project_psd(&psd).unwrap() - &psd).amax() <= 1e-8);
            let m = random_sym(&mut rng, n);
            let pm = project_psd(&m).unwrap();
            // idempotent
            assert!((project_psd(&pm).unwrap() - &pm).amax() <= 1e-10);
            // nearest: no sampled PSD matrix is closer
            let dist = (&pm - &m).norm();
            for _ in 0..100 {
                let b = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
                let cand = &b * b.transpose();
                assert!(dist <= (&cand - &m).norm() + 1e-12);
            }
            // 1-Lipschitz
            let m2 = random_sym(&mut rng, n);
            let pm2 = project_psd(&m2).unwrap();
            assert!((&pm - &pm2).norm() <= (&m - &m2).norm() + 1e-12);
        }
    }

    #[test]
    fn factor_reconstructions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in 2..9 {
            let q = Mat::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let c = q.transpose() * &q;
            let fs = factor_set(&c).unwrap();
            assert!((&fs.f * fs.f.transpose() - &c).amax() <= 1e-8 * c.amax().max(1.0));
            let ih = Mat::identity(n, n) - &c / fs.lambda_max;
            assert!((&fs.h * fs.h.transpose() - ih).amax() <= 1e-8);
            let g = fs.g.as_ref().unwrap();
            let ig = &c / fs.lambda_min - Mat::identity(n, n);
            assert!((g * g.transpose() - &ig).amax() <= 1e-8 * ig.amax().max(1.0));
            assert!(fs.p >= n - 1);
        }
        // rank-deficient input: no G, F has r columns
        let v = Vector::from_vec(vec![1.0, -1.0, 1.0]);
        let c = &v * v.transpose();
        let fs = factor_set(&c).unwrap();
        assert_eq!(fs.r, 1);
        assert_eq!(fs.f.ncols(), 1);
        assert!(fs.g.is_none());
        assert_eq!(fs.p, 2);
    }
}
