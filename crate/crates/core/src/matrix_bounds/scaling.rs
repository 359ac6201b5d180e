//! Scaling searches for the glinx bound: the scalar factor `γ` (o-scaling)
//! and the per-variable factors `Υ` (g-scaling). Both treat the optimal
//! relaxation value as a convex function of the log-factors and use the
//! envelope gradient at the solver's primal point.

use super::{solve_relaxation, RegionSpec, RelaxSolution, RelaxationKind, ScalingState, SolveOptions};
use crate::error::{GmespError, Result};
use crate::fact_bounds::{MAX_LOG_SCALE, MAX_LOG_STEP};
use crate::instance::Instance;
use crate::linalg::{inverse_spd, sym_eigen, symmetrize, Mat, Vector};

/// Outcome of the `γ` search.
#[derive(Debug, Clone)]
pub struct GammaSearch {
    /// Best factor found.
    pub gamma: f64,
    /// Relaxation solved at that factor.
    pub solution: RelaxSolution,
    /// `(γ, bound, derivative)` for every evaluation, in order.
    pub history: Vec<(f64, f64, f64)>,
}

/// Outcome of the `Υ` search.
#[derive(Debug, Clone)]
pub struct UpsilonSearch {
    /// Best factors found.
    pub upsilon: Vector,
    /// Relaxation solved at those factors.
    pub solution: RelaxSolution,
    /// Bound at every evaluation, in order (NaN for a failed inner solve).
    pub history: Vec<f64>,
}

/// `d/dψ` of the o-scaled glinx value at `X` with `γ = exp(ψ)`:
/// `½(L⁻¹ • (X − I) + n − t)`, `L = γCXC + I − X`, `t = tr X`.
pub fn gamma_derivative(c: &Mat, x: &Mat, gamma: f64) -> Result<f64> {
    let n = c.nrows();
    let eye = Mat::identity(n, n);
    let l = symmetrize(&(c * x * c * gamma + &eye - x));
    let li = inverse_spd(&l)?;
    Ok(0.5 * (li.dot(&(x - &eye)) + n as f64 - x.trace()))
}

/// Gradient in `ψ = log Υ` of the g-scaled glinx value at `X`:
/// `2 (K S)_ii − 2 X_ii` with `K = DCD`, `S = sym(L⁻¹ K X)`.
pub fn gscaled_gradient(c: &Mat, x: &Mat, upsilon: &Vector) -> Result<Vector> {
    let n = c.nrows();
    let k = Mat::from_fn(n, n, |i, j| upsilon[i] * c[(i, j)] * upsilon[j]);
    let l = symmetrize(&(&k * x * &k + Mat::identity(n, n) - x));
    let p = inverse_spd(&l)?;
    let s = symmetrize(&(p * &k * x));
    let ks = &k * s;
    Ok(Vector::from_fn(n, |i, _| 2.0 * ks[(i, i)] - 2.0 * x[(i, i)]))
}

fn solve_at(inst: &Instance, region: &RegionSpec, scaling: ScalingState, opts: &SolveOptions) -> Result<RelaxSolution> {
    solve_relaxation(inst, RelaxationKind::Glinx, region, &scaling, opts)
}

/// Minimizes the glinx bound over `γ`: starts at `ψ₀ = −2 log λ_t(C)`,
/// brackets the sign change of the envelope derivative by doubling steps,
/// then refines by safeguarded secant steps. Returns the best bound seen.
pub fn optimize_gamma(inst: &Instance, region: &RegionSpec, opts: &SolveOptions, max_evals: usize) -> Result<GammaSearch> {
    let spec = sym_eigen(&inst.cov)?;
    let lt = spec.values[inst.t - 1];
    let psi0 = if lt > 1e-12 { -2.0 * lt.ln() } else { 0.0 };
    let mut history = Vec::new();
    let mut best: Option<(f64, RelaxSolution)> = None;
    let eval = |psi: f64, history: &mut Vec<(f64, f64, f64)>, best: &mut Option<(f64, RelaxSolution)>| -> Result<f64> {
        let gamma = psi.exp();
        let sol = solve_at(inst, region, ScalingState::o(gamma), opts)?;
        let der = gamma_derivative(&inst.cov, &sol.point.xmat, gamma)?;
        let val = sol.report.bound();
        history.push((gamma, val, der));
        if best.as_ref().map_or(true, |(_, b)| val < b.report.bound()) {
            *best = Some((gamma, sol));
        }
        Ok(der)
    };
    let max_evals = max_evals.max(2);
    let d0 = eval(psi0, &mut history, &mut best)?;
    let dir = if d0 > 0.0 { -1.0 } else { 1.0 };
    let (mut a, mut da) = (psi0, d0);
    let mut step = 1.0;
    let mut bracket = None;
    while history.len() < max_evals && d0 != 0.0 {
        let b = a + dir * step;
        let db = eval(b, &mut history, &mut best)?;
        if db.signum() != da.signum() || db == 0.0 {
            bracket = Some(if a < b { (a, da, b, db) } else { (b, db, a, da) });
            break;
        }
        a = b;
        da = db;
        step *= 2.0;
    }
    if let Some((mut lo, mut dlo, mut hi, mut dhi)) = bracket {
        while history.len() < max_evals && hi - lo > 1e-6 {
            let mut p = if dhi != dlo { lo - dlo * (hi - lo) / (dhi - dlo) } else { 0.5 * (lo + hi) };
            let w = hi - lo;
            if !(p > lo + 0.05 * w && p < hi - 0.05 * w) {
                p = 0.5 * (lo + hi);
            }
            let dp = eval(p, &mut history, &mut best)?;
            if dp.abs() < 1e-7 {
                break;
            }
            if dp.signum() == dlo.signum() {
                lo = p;
                dlo = dp;
            } else {
                hi = p;
                dhi = dp;
            }
        }
    }
    let (gamma, solution) = best.ok_or_else(|| GmespError::Internal("no γ evaluated".into()))?;
    Ok(GammaSearch { gamma, solution, history })
}

/// Minimizes the g-scaled glinx bound over `ψ = log Υ` by BFGS with Armijo
/// backtracking, starting from `Υ = γ^{1/4} e`. Returns the best bound seen.
pub fn optimize_upsilon_glinx(
    inst: &Instance,
    region: &RegionSpec,
    opts: &SolveOptions,
    gamma0: f64,
    max_evals: usize,
) -> Result<UpsilonSearch> {
    let n = inst.n();
    let mut history = Vec::new();
    let mut best: Option<(Vector, RelaxSolution)> = None;
    let eval = |psi: &Vector,
                    history: &mut Vec<f64>,
                    best: &mut Option<(Vector, RelaxSolution)>|
     -> Result<(f64, Vector)> {
        let ups = psi.map(f64::exp);
        let sol = solve_at(inst, region, ScalingState::g(ups.clone()), opts)?;
        let g = gscaled_gradient(&inst.cov, &sol.point.xmat, &ups)?;
        let val = sol.report.bound();
        history.push(val);
        if best.as_ref().map_or(true, |(_, b)| val < b.report.bound()) {
            *best = Some((ups, sol));
        }
        Ok((val, g))
    };
    let mut psi = Vector::from_element(n, 0.25 * gamma0.ln());
    let (mut f, mut g) = eval(&psi, &mut history, &mut best)?;
    let mut hinv = Mat::identity(n, n);
    while history.len() < max_evals && g.amax() > 1e-6 {
        let mut dir = -(&hinv * &g);
        if dir.dot(&g) >= 0.0 {
            hinv = Mat::identity(n, n);
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        // trust region in log-space; a failed inner solve rejects the trial
        let mut step = (MAX_LOG_STEP / dir.amax()).min(1.0);
        let mut accepted = None;
        while history.len() < max_evals && step >= 1e-6 {
            let cand = &psi + &dir * step;
            if cand.amax() <= MAX_LOG_SCALE {
                match eval(&cand, &mut history, &mut best) {
                    Ok((fc, gc)) if fc <= f + 1e-4 * step * slope => {
                        accepted = Some((cand, fc, gc));
                        break;
                    }
                    Ok(_) => {}
                    // count failed solves against the budget too
                    Err(_) => history.push(f64::NAN),
                }
            }
            step *= 0.5;
        }
        let Some((cand, fc, gc)) = accepted else { break };
        let sv = &cand - &psi;
        let yv = &gc - &g;
        let sy = sv.dot(&yv);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let eye = Mat::identity(n, n);
            let left = &eye - &sv * yv.transpose() * rho;
            let right = &eye - &yv * sv.transpose() * rho;
            hinv = &left * &hinv * &right + &sv * sv.transpose() * rho;
        }
        if (f - fc).abs() < 1e-10 * (1.0 + f.abs()) {
            break;
        }
        psi = cand;
        f = fc;
        g = gc;
    }
    let (upsilon, solution) = best.ok_or_else(|| GmespError::Internal("no Υ evaluated".into()))?;
    Ok(UpsilonSearch { upsilon, solution, history })
}
