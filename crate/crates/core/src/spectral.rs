//! Spectral and Lagrangian spectral upper bounds.

use crate::error::{GmespError, Result};
use crate::instance::Instance;
use crate::linalg::{sym_eigen, top_logs, Mat, Vector};
use serde::Serialize;

/// Default subgradient iteration count.
pub const DEFAULT_ITERS: usize = 200;

/// Outcome of the Lagrangian spectral bound.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralBoundResult {
    /// Smallest `v(π)` over the visited multipliers.
    pub value: f64,
    /// Multipliers attaining `value` (empty when `m = 0`).
    pub pi: Vec<f64>,
    /// Index set of size `s − t` achieving the inner minimum at `pi`.
    pub k_set: Vec<usize>,
    /// Number of `v(π)` evaluations.
    pub evaluations: usize,
}

/// `Σ_{ℓ≤t} log λ_ℓ(C)`.
pub fn spectral_bound(c: &Mat, t: usize) -> Result<f64> {
    let spec = sym_eigen(c)?;
    if t == 0 || t > c.nrows() {
        return Err(GmespError::InvariantViolation(format!("t = {t} out of range")));
    }
    let lt = spec.values[t - 1];
    if !(lt > 1e-12 * spec.values[0].abs().max(1.0)) {
        return Err(GmespError::RankDeficient(format!("λ_t(C) = {lt:e}")));
    }
    Ok(top_logs(spec.values.as_slice(), t))
}

/// `v(π)` with its subgradient and minimizing index set.
pub fn lagrangian_value(inst: &Instance, pi: &Vector) -> Result<(f64, Vector, Vec<usize>)> {
    let n = inst.n();
    let (s, t) = (inst.s, inst.t);
    let scores: Vector = inst.a.transpose() * pi;
    let d = scores.map(|v| (-0.5 * v).exp());
    let m = Mat::from_fn(n, n, |i, j| d[i] * inst.cov[(i, j)] * d[j]);
    let spec = sym_eigen(&m)?;
    let lt = spec.values[t - 1];
    if !(lt > 1e-12 * spec.values[0].abs().max(1.0)) {
        return Err(GmespError::RankDeficient(format!("λ_t(DCD) = {lt:e}")));
    }
    // s − t smallest scores, ties to the smallest index
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut k_set: Vec<usize> = order[..s - t].to_vec();
    k_set.sort_unstable();
    let value = top_logs(spec.values.as_slice(), t) + pi.dot(&inst.b)
        - k_set.iter().map(|&j| scores[j]).sum::<f64>();
    // weights w_j = Σ_{ℓ≤t} u_{jℓ}²
    let w = Vector::from_fn(n, |j, _| (0..t).map(|l| spec.vectors[(j, l)].powi(2)).sum());
    let mut k_ind = Vector::zeros(n);
    for &j in &k_set {
        k_ind[j] = 1.0;
    }
    let grad = &inst.b - &inst.a * (w + k_ind);
    Ok((value, grad, k_set))
}

/// Lagrangian spectral bound: projected subgradient descent on `v(π)` from
/// `pi0` with steps `c/√k` along the normalized subgradient,
/// `c = 1/(1 + ‖b‖∞)`. Every visited value is a valid bound; the smallest is
/// returned. With `m = 0` this is the spectral bound.
pub fn lagrangian_spectral_bound(inst: &Instance, pi0: Option<&Vector>, iters: usize) -> Result<SpectralBoundResult> {
    let m = inst.m();
    let mut pi = match pi0 {
        Some(p) if p.len() == m => p.map(|v| v.max(0.0)),
        Some(p) => {
            return Err(GmespError::InvariantViolation(format!("π₀ has length {}, expected {m}", p.len())))
        }
        None => Vector::zeros(m),
    };
    let (mut best_v, mut g, mut best_k) = lagrangian_value(inst, &pi)?;
    let mut best_pi = pi.clone();
    let mut evaluations = 1;
    if m > 0 {
        let step0 = 1.0 / (1.0 + inst.b.amax());
        for k in 1..=iters {
            let gn = g.norm();
            if gn == 0.0 {
                break;
            }
            let step = step0 / (k as f64).sqrt();
            pi = (&pi - &g * (step / gn)).map(|v| v.max(0.0));
            let (v, gk, ks) = lagrangian_value(inst, &pi)?;
            evaluations += 1;
            if v < best_v {
                best_v = v;
                best_pi = pi.clone();
                best_k = ks;
            }
            g = gk;
        }
    }
    Ok(SpectralBoundResult { value: best_v, pi: best_pi.iter().copied().collect(), k_set: best_k, evaluations })
}
