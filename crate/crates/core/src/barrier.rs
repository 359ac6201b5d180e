//! Interior-point machinery shared by the relaxation solvers: a linear
//! presolve that finds fixed variables, implicit equality rows and a strictly
//! interior starting point, and a damped-Newton log-barrier path follower on
//! an affine subspace.

use crate::error::{GmespError, Result};
use crate::instance::Instance;
use crate::linalg::{sym_eigen, LinearProgram, Mat, Vector};

/// Tolerance below which an LP range is considered a single point.
pub const FIX_TOL: f64 = 1e-9;

/// Result of the linear presolve over `{eᵀx = s, Ax ≤ b, l ≤ x ≤ c}`.
#[derive(Debug, Clone)]
pub struct Presolved {
    /// A point with maximal uniform slack in every non-fixed bound and row.
    pub x0: Vector,
    /// `Some(v)` for coordinates that take the same value `v` on the polytope.
    pub fixed: Vec<Option<f64>>,
    /// Rows of `A` that hold with equality on the whole polytope.
    pub eq_rows: Vec<usize>,
    /// Remaining rows (strictly satisfiable).
    pub ineq_rows: Vec<usize>,
    /// The uniform slack achieved by `x0`.
    pub margin: f64,
}

impl Presolved {
    /// Indices of coordinates not fixed by the presolve.
    pub fn free(&self) -> Vec<usize> {
        (0..self.fixed.len()).filter(|&j| self.fixed[j].is_none()).collect()
    }
}

fn snap(v: f64) -> f64 {
    if v.abs() <= FIX_TOL {
        0.0
    } else if (v - 1.0).abs() <= FIX_TOL {
        1.0
    } else {
        v
    }
}

/// Presolves the linear part of an instance.
pub fn presolve(inst: &Instance) -> Result<Presolved> {
    let n = inst.n();
    let s = inst.s as f64;
    let (l, c) = (&inst.lower, &inst.upper);
    let mut fixed: Vec<Option<f64>> = (0..n).map(|j| (c[j] - l[j] <= FIX_TOL).then(|| l[j])).collect();
    let mut eq_rows = Vec::new();
    let mut ineq_rows = Vec::new();
    if inst.m() == 0 {
        let sl: f64 = (0..n).filter(|&j| fixed[j].is_none()).map(|j| l[j]).sum::<f64>()
            + fixed.iter().flatten().sum::<f64>();
        let su: f64 = (0..n).filter(|&j| fixed[j].is_none()).map(|j| c[j]).sum::<f64>()
            + fixed.iter().flatten().sum::<f64>();
        if sl > s + FIX_TOL || su < s - FIX_TOL {
            return Err(GmespError::Infeasible(format!("budget {s} outside [{sl}, {su}]")));
        }
        let theta = if su - sl > FIX_TOL { (s - sl) / (su - sl) } else { 0.0 };
        let mut x0 = l.clone();
        for j in 0..n {
            if fixed[j].is_none() {
                if theta <= FIX_TOL || theta >= 1.0 - FIX_TOL {
                    fixed[j] = Some(if theta >= 0.5 { c[j] } else { l[j] });
                }
                x0[j] = l[j] + theta * (c[j] - l[j]);
            }
            if let Some(v) = fixed[j] {
                x0[j] = v;
            }
        }
        let margin = if fixed.iter().all(|f| f.is_some()) { 1.0 } else { theta.min(1.0 - theta) };
        return Ok(Presolved { x0, fixed, eq_rows, ineq_rows, margin });
    }
    // range of every coordinate
    for j in 0..n {
        if fixed[j].is_some() {
            continue;
        }
        let mut e = Vector::zeros(n);
        e[j] = 1.0;
        let hi = LinearProgram::budget(&e, l, c, s, &inst.a, &inst.b).solve()?.value;
        let lo = -LinearProgram::budget(&(-&e), l, c, s, &inst.a, &inst.b).solve()?.value;
        if hi - lo <= FIX_TOL {
            fixed[j] = Some(snap(0.5 * (hi + lo)));
        }
    }
    let fl = Vector::from_fn(n, |j, _| fixed[j].unwrap_or(l[j]));
    let fc = Vector::from_fn(n, |j, _| fixed[j].unwrap_or(c[j]));
    for i in 0..inst.m() {
        let row: Vector = inst.a.row(i).transpose();
        let lo = -LinearProgram::budget(&(-&row), &fl, &fc, s, &inst.a, &inst.b).solve()?.value;
        if lo >= inst.b[i] - FIX_TOL * (1.0 + inst.b[i].abs()) {
            eq_rows.push(i);
        } else {
            ineq_rows.push(i);
        }
    }
    // max ε s.t. slack ≥ ε in every free bound and inequality row
    let free: Vec<usize> = (0..n).filter(|&j| fixed[j].is_none()).collect();
    let nv = n + 1;
    let mut obj = Vector::zeros(nv);
    obj[n] = 1.0;
    let mut lower = Vector::zeros(nv);
    let mut upper = Vector::zeros(nv);
    for j in 0..n {
        lower[j] = fl[j];
        upper[j] = fc[j];
    }
    upper[n] = 1.0;
    let mut a_eq = Mat::zeros(1 + eq_rows.len(), nv);
    let mut b_eq = Vector::zeros(1 + eq_rows.len());
    for j in 0..n {
        a_eq[(0, j)] = 1.0;
    }
    b_eq[0] = s;
    for (k, &i) in eq_rows.iter().enumerate() {
        for j in 0..n {
            a_eq[(k + 1, j)] = inst.a[(i, j)];
        }
        b_eq[k + 1] = inst.b[i];
    }
    let nle = ineq_rows.len() + 2 * free.len();
    let mut a_le = Mat::zeros(nle, nv);
    let mut b_le = Vector::zeros(nle);
    let mut r = 0;
    for &i in &ineq_rows {
        for j in 0..n {
            a_le[(r, j)] = inst.a[(i, j)];
        }
        a_le[(r, n)] = 1.0;
        b_le[r] = inst.b[i];
        r += 1;
    }
    for &j in &free {
        a_le[(r, j)] = -1.0;
        a_le[(r, n)] = 1.0;
        b_le[r] = -l[j];
        r += 1;
        a_le[(r, j)] = 1.0;
        a_le[(r, n)] = 1.0;
        b_le[r] = c[j];
        r += 1;
    }
    let sol = LinearProgram { c: obj, lower, upper, a_eq, b_eq, a_le, b_le }.solve()?;
    let margin = sol.x[n];
    if !free.is_empty() && margin <= FIX_TOL {
        return Err(GmespError::NearSingular(format!("presolve found no interior point (margin {margin:e})")));
    }
    let x0 = Vector::from_fn(n, |j, _| fixed[j].unwrap_or(sol.x[j]));
    Ok(Presolved { x0, fixed, eq_rows, ineq_rows, margin })
}

/// Orthonormal basis (columns) of the null space of the rows of `e`.
pub fn null_space(e: &Mat, dim: usize) -> Result<Mat> {
    if e.nrows() == 0 {
        return Ok(Mat::identity(dim, dim));
    }
    let ete = e.transpose() * e;
    let spec = sym_eigen(&ete)?;
    let thr = 1e-10 * spec.max().max(1.0);
    let cols: Vec<usize> = (0..dim).filter(|&j| spec.values[j] <= thr).collect();
    let mut t = Mat::zeros(dim, cols.len());
    for (k, &j) in cols.iter().enumerate() {
        t.set_column(k, &spec.vectors.column(j));
    }
    Ok(t)
}

/// A smooth concave function plus a `μ`-weighted concave barrier, maximized
/// over an open convex domain.
pub trait BarrierProblem {
    /// `f(u) + μ·φ(u)`, or `None` outside the domain.
    fn value(&self, u: &Vector, mu: f64) -> Option<f64>;
    /// Value, gradient and Hessian of `f + μφ`, or `None` outside the domain.
    fn derivs(&self, u: &Vector, mu: f64) -> Option<(f64, Vector, Mat)>;
}

/// Barrier path parameters.
#[derive(Debug, Clone)]
pub struct PathOptions {
    /// Initial barrier weight.
    pub mu0: f64,
    /// Reduction factor per stage.
    pub factor: f64,
    /// Final barrier weight.
    pub mu_min: f64,
    /// Newton steps allowed per stage.
    pub max_newton: usize,
}

impl Default for PathOptions {
    fn default() -> Self {
        PathOptions { mu0: 1.0, factor: 5.0, mu_min: 1e-9, max_newton: 200 }
    }
}

/// End point of the barrier path.
#[derive(Debug, Clone)]
pub struct PathResult {
    /// Final iterate.
    pub u: Vector,
    /// Final barrier weight.
    pub mu: f64,
    /// Total Newton steps.
    pub newton_steps: usize,
    /// Whether every stage met its Newton-decrement tolerance.
    pub converged: bool,
}

/// Solves `(−H) d = g` with a Levenberg-style shift if `−H` is not
/// numerically positive definite.
fn newton_direction(h: &Mat, g: &Vector) -> Option<Vector> {
    let neg = -h;
    let scale = neg.diagonal().amax().max(1e-300);
    let mut shift = 0.0;
    for _ in 0..30 {
        let mut m = neg.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += shift;
        }
        if let Some(ch) = m.cholesky() {
            let d = ch.solve(g);
            if d.iter().all(|v| v.is_finite()) {
                return Some(d);
            }
        }
        shift = if shift == 0.0 { 1e-14 * scale } else { shift * 10.0 };
    }
    None
}

/// Follows the barrier path from a strictly interior `u0`, moving only along
/// the columns of `basis` (so equality constraints satisfied by `u0` persist).
pub fn path_follow<P: BarrierProblem>(p: &P, u0: &Vector, basis: &Mat, opts: &PathOptions) -> Result<PathResult> {
    let mut u = u0.clone();
    if p.value(&u, opts.mu0).is_none() {
        return Err(GmespError::Internal("barrier start point outside the domain".into()));
    }
    let mut mu = opts.mu0;
    let mut steps = 0;
    let mut converged = true;
    let bt = basis.transpose();
    loop {
        let last = mu <= opts.mu_min;
        // centering measured by the scaled decrement λ² = gᵀ(−H)⁻¹g / μ;
        // the last stage is pushed to machine precision so that the barrier
        // multipliers μ/slack are accurate
        let tol = if last { 1e-20 } else { 1e-3 };
        let mut stage_ok = false;
        let mut prev = f64::INFINITY;
        let mut stalls = 0;
        for _ in 0..opts.max_newton {
            let (f, g, h) = p
                .derivs(&u, mu)
                .ok_or_else(|| GmespError::Internal("iterate left the barrier domain".into()))?;
            if basis.ncols() == 0 {
                stage_ok = true;
                break;
            }
            let gz = &bt * g;
            let hz = &bt * h * basis;
            let hz = (&hz + hz.transpose()) * 0.5;
            let dz = newton_direction(&hz, &gz)
                .ok_or_else(|| GmespError::NearSingular("singular Newton system".into()))?;
            let dec = gz.dot(&dz);
            if !(dec.is_finite()) {
                return Err(GmespError::NearSingular("non-finite Newton decrement".into()));
            }
            let lam2 = dec.max(0.0) / mu;
            if lam2 <= tol {
                stage_ok = true;
                break;
            }
            // (damped steps shrink λ² slowly; only a stall near zero is rounding)
            if lam2 < 1e-6 && lam2 > 0.5 * prev {
                stalls += 1;
                if stalls >= 3 {
                    // rounding floor reached
                    stage_ok = lam2 <= 1e-8 || dec <= 1e-12 * (1.0 + f.abs());
                    break;
                }
            }
            prev = lam2;
            let du = basis * dz;
            let mut alpha = 1.0;
            let mut accepted = false;
            if lam2 < 0.25 {
                // inside the quadratic region the full step stays interior
                let un = &u + &du;
                if p.value(&un, mu).is_some() {
                    u = un;
                    accepted = true;
                }
            }
            while !accepted && alpha > 1e-16 {
                let un = &u + &du * alpha;
                if let Some(fv) = p.value(&un, mu) {
                    if fv >= f + 1e-4 * alpha * dec {
                        u = un;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            steps += 1;
            if !accepted {
                // no ascent possible at machine precision: the stage is centered
                stage_ok = lam2 <= 1e-8 || dec <= 1e-12 * (1.0 + f.abs());
                break;
            }
        }
        converged &= stage_ok;
        if last {
            break;
        }
        mu = (mu / opts.factor).max(opts.mu_min);
    }
    Ok(PathResult { u, mu, newton_steps: steps, converged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::random_instance;

    /// maximize Σ log(1 + x_i) − ½‖x‖² + μ Σ log x_i on {Σ x = 1}.
    struct Toy;
    impl BarrierProblem for Toy {
        fn value(&self, u: &Vector, mu: f64) -> Option<f64> {
            if u.iter().any(|&v| v <= 0.0) {
                return None;
            }
            Some(u.iter().map(|&v| (1.0 + v).ln() - 0.5 * v * v + mu * v.ln()).sum())
        }
        fn derivs(&self, u: &Vector, mu: f64) -> Option<(f64, Vector, Mat)> {
            let f = self.value(u, mu)?;
            let g = u.map(|v| 1.0 / (1.0 + v) - v + mu / v);
            let h = Mat::from_diagonal(&u.map(|v| -1.0 / (1.0 + v).powi(2) - 1.0 - mu / (v * v)));
            Some((f, g, h))
        }
    }

    #[test]
    fn toy_problem_reaches_symmetric_optimum() {
        let e = Mat::from_element(1, 3, 1.0);
        let basis = null_space(&e, 3).unwrap();
        assert_eq!(basis.ncols(), 2);
        let u0 = Vector::from_vec(vec![0.6, 0.3, 0.1]);
        let r = path_follow(&Toy, &u0, &basis, &PathOptions::default()).unwrap();
        assert!(r.converged);
        for v in r.u.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn presolve_plain_instance() {
        let inst = random_instance(6, 3, 2, 0, 1).unwrap();
        let p = presolve(&inst).unwrap();
        assert!(p.fixed.iter().all(|f| f.is_none()));
        assert!((p.x0.sum() - 3.0).abs() < 1e-12);
        assert!((p.margin - 0.5).abs() < 1e-12);
    }

    #[test]
    fn presolve_detects_fixings_and_equalities() {
        let inst = random_instance(5, 2, 1, 0, 2).unwrap();
        // x0 + x1 ≤ 0 forces both to zero; x2 + x3 ≤ 1 is an ordinary row
        let a = Mat::from_row_slice(2, 5, &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let b = Vector::from_vec(vec![0.0, 1.0]);
        let inst = inst.with_constraints(a, b).unwrap();
        let p = presolve(&inst).unwrap();
        assert_eq!(p.fixed[0], Some(0.0));
        assert_eq!(p.fixed[1], Some(0.0));
        // x2 + x3 + x4 = 2 with x2 + x3 ≤ 1 forces x4 = 1 and x2 + x3 = 1
        assert_eq!(p.fixed[4], Some(1.0));
        assert_eq!(p.eq_rows, vec![0, 1]);
        assert!((p.margin - 0.5).abs() < 1e-9);
        assert!((p.x0.sum() - 2.0).abs() < 1e-9);
    }
}
