//! Problem data: the covariance matrix, cardinalities, side constraints and
//! variable boxes; exact objective evaluation; an enumeration oracle; the
//! binary-to-projector lift; Kronecker lifting; reduction by deleting
//! variables; and a seeded random generator.

mod io;

pub use io::{load_instance, parse_instance_json, read_matrix_file, InstanceFile, MatrixData};

use crate::error::{GmespError, Result};
use crate::linalg::{check_symmetric, kron_identity, principal_submatrix, sym_eigen, Mat, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Feasibility tolerance for `Ax ≤ b` on binary points.
pub const ROW_TOL: f64 = 1e-9;
/// Default enumeration guard of [`brute_force`].
pub const BRUTE_FORCE_MAX_N: usize = 25;

/// A constrained generalized maximum-entropy sampling instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// PSD covariance matrix `C` (n × n).
    pub cov: Mat,
    /// Number of selected variables.
    pub s: usize,
    /// Number of eigenvalues in the objective.
    pub t: usize,
    /// Side-constraint matrix `A` (m × n, possibly m = 0).
    pub a: Mat,
    /// Side-constraint right-hand side `b`.
    pub b: Vector,
    /// Lower box `l ∈ {0,1}ⁿ`.
    pub lower: Vector,
    /// Upper box `c ∈ {0,1}ⁿ`.
    pub upper: Vector,
}

/// A feasible binary selection with its objective value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinarySolution {
    /// Sorted support `S(x)`.
    pub support: Vec<usize>,
    /// `Σ_{ℓ≤t} log λ_ℓ(C_{S,S})`.
    pub value: f64,
}

impl BinarySolution {
    /// Indicator vector of the support.
    pub fn indicator(&self, n: usize) -> Vector {
        let mut x = Vector::zeros(n);
        for &i in &self.support {
            x[i] = 1.0;
        }
        x
    }
}

/// A relaxation point `(x, X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxPoint {
    /// Fractional selection.
    pub x: Vector,
    /// Matrix variable.
    pub xmat: Mat,
}

impl Instance {
    /// Unconstrained instance with default boxes `0 ≤ x ≤ e`.
    pub fn new(cov: Mat, s: usize, t: usize) -> Result<Self> {
        let n = cov.nrows();
        let inst = Instance {
            cov,
            s,
            t,
            a: Mat::zeros(0, n),
            b: Vector::zeros(0),
            lower: Vector::zeros(n),
            upper: Vector::from_element(n, 1.0),
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builder: attaches side constraints `Ax ≤ b`.
    pub fn with_constraints(mut self, a: Mat, b: Vector) -> Result<Self> {
        self.a = a;
        self.b = b;
        self.validate()?;
        Ok(self)
    }

    /// Builder: attaches boxes `l ≤ x ≤ c`.
    pub fn with_bounds(mut self, lower: Vector, upper: Vector) -> Result<Self> {
        self.lower = lower;
        self.upper = upper;
        self.validate()?;
        Ok(self)
    }

    /// Number of variables.
    pub fn n(&self) -> usize {
        self.cov.nrows()
    }

    /// Number of side constraints.
    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// True when the boxes are the defaults and there are no side constraints.
    pub fn is_plain(&self) -> bool {
        self.m() == 0 && self.lower.iter().all(|&v| v == 0.0) && self.upper.iter().all(|&v| v == 1.0)
    }

    /// Checks every instance invariant.
    pub fn validate(&self) -> Result<()> {
        check_symmetric(&self.cov)?;
        let n = self.n();
        let bad = |msg: String| Err(GmespError::InvariantViolation(msg));
        if n == 0 {
            return bad("empty covariance matrix".into());
        }
        if self.a.ncols() != n || self.b.len() != self.a.nrows() {
            return bad(format!(
                "side constraints are {}x{} with {} right-hand sides, expected m x {n}",
                self.a.nrows(),
                self.a.ncols(),
                self.b.len()
            ));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return bad("box bounds have wrong length".into());
        }
        for j in 0..n {
            let (l, c) = (self.lower[j], self.upper[j]);
            if !(l == 0.0 || l == 1.0) || !(c == 0.0 || c == 1.0) || l > c {
                return bad(format!("box [{l}, {c}] at {j} is not a binary interval"));
            }
        }
        if !(self.t >= 1 && self.t <= self.s && self.s < n) {
            return bad(format!("need 0 < t <= s < n, got t={}, s={}, n={n}", self.t, self.s));
        }
        let (sl, sc) = (self.lower.sum(), self.upper.sum());
        if sl > self.s as f64 || sc < self.s as f64 {
            return Err(GmespError::Infeasible(format!(
                "box sums [{sl}, {sc}] exclude s = {}",
                self.s
            )));
        }
        let spec = sym_eigen(&self.cov)?;
        if spec.min() < -1e-9 * spec.max().abs().max(1.0) {
            return bad(format!("covariance not PSD (λ_min = {:e})", spec.min()));
        }
        let r = spec.rank();
        if self.t > r {
            return Err(GmespError::RankDeficient(format!("t = {} exceeds rank(C) = {r}", self.t)));
        }
        Ok(())
    }

    /// `Ax ≤ b` within [`ROW_TOL`] and boxes, for a 0/1 vector.
    pub fn is_feasible_binary(&self, x: &Vector) -> bool {
        let n = self.n();
        if x.len() != n || (x.sum() - self.s as f64).abs() > 1e-9 {
            return false;
        }
        if (0..n).any(|j| x[j] < self.lower[j] || x[j] > self.upper[j]) {
            return false;
        }
        let ax = &self.a * x;
        (0..self.m()).all(|i| ax[i] <= self.b[i] + ROW_TOL * (1.0 + self.b[i].abs()))
    }

    /// Objective of a support set, `None` if `C_{S,S}` has rank below `t`.
    pub fn objective(&self, support: &[usize]) -> Option<f64> {
        top_t_logdet(&self.cov, support, self.t).ok()
    }
}

/// `Σ_{ℓ=1..t} log λ_ℓ(C_{S,S})`.
pub fn top_t_logdet(c: &Mat, support: &[usize], t: usize) -> Result<f64> {
    if support.len() < t || t == 0 {
        return Err(GmespError::RankDeficient(format!(
            "|S| = {} < t = {t}",
            support.len()
        )));
    }
    let spec = sym_eigen(&principal_submatrix(c, support))?;
    let lt = spec.values[t - 1];
    if !(lt > 1e-12 * spec.max().max(1.0)) {
        return Err(GmespError::RankDeficient(format!("λ_t(C_SS) = {lt:e}")));
    }
    Ok(spec.values.iter().take(t).map(|l| l.ln()).sum())
}

/// Calls `f` on every `k`-subset of `pool` in lexicographic order.
fn for_each_subset(pool: &[usize], k: usize, prefix: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if k == 0 {
        f(prefix);
        return;
    }
    if pool.len() < k {
        return;
    }
    for i in 0..=(pool.len() - k) {
        prefix.push(pool[i]);
        for_each_subset(&pool[i + 1..], k - 1, prefix, f);
        prefix.pop();
    }
}

/// Better-of two candidates: larger value, then lexicographically smaller support.
fn better(a: Option<BinarySolution>, b: Option<BinarySolution>) -> Option<BinarySolution> {
    match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.value > a.value || (b.value == a.value && b.support < a.support) {
                Some(b)
            } else {
                Some(a)
            }
        }
    }
}

/// Exact maximizer over all feasible binary points (enumeration), with `n ≤ 25`.
pub fn brute_force(inst: &Instance) -> Result<BinarySolution> {
    brute_force_with_guard(inst, BRUTE_FORCE_MAX_N)
}

/// [`brute_force`] with an explicit enumeration guard.
pub fn brute_force_with_guard(inst: &Instance, max_n: usize) -> Result<BinarySolution> {
    let n = inst.n();
    if n > max_n {
        return Err(GmespError::TooLarge(format!("n = {n} exceeds enumeration guard {max_n}")));
    }
    let forced: Vec<usize> = (0..n).filter(|&j| inst.lower[j] == 1.0).collect();
    let free: Vec<usize> = (0..n).filter(|&j| inst.lower[j] == 0.0 && inst.upper[j] == 1.0).collect();
    if forced.len() > inst.s || forced.len() + free.len() < inst.s {
        return Err(GmespError::Infeasible("boxes admit no selection of size s".into()));
    }
    let k = inst.s - forced.len();
    // Split on the first free element chosen so the work parallelizes while the
    // reduction stays deterministic.
    let eval = |chosen: &[usize]| -> Option<BinarySolution> {
        let mut support: Vec<usize> = forced.iter().chain(chosen.iter()).copied().collect();
        support.sort_unstable();
        let mut x = Vector::zeros(n);
        for &i in &support {
            x[i] = 1.0;
        }
        if !inst.is_feasible_binary(&x) {
            return None;
        }
        inst.objective(&support).map(|value| BinarySolution { support, value })
    };
    let best = if k == 0 {
        eval(&[])
    } else {
        (0..=(free.len() - k))
            .into_par_iter()
            .map(|i| {
                let mut local = None;
                let mut prefix = vec![free[i]];
                for_each_subset(&free[i + 1..], k - 1, &mut prefix, &mut |sub| {
                    local = better(local.take(), eval(sub));
                });
                local
            })
            .reduce(|| None, better)
    };
    best.ok_or_else(|| GmespError::Infeasible("no feasible binary point of rank >= t".into()))
}

/// Builds `X̂ = V̂_{·T} V̂_{·T}ᵀ` from the top-`t` eigenvectors of `Diag(x̂) C Diag(x̂)`.
pub fn binary_to_projector(inst: &Instance, x: &Vector) -> Result<RelaxPoint> {
    let n = inst.n();
    let d = Mat::from_diagonal(x);
    let m = &d * &inst.cov * &d;
    let spec = sym_eigen(&m)?;
    let t = inst.t;
    let lt = spec.values[t - 1];
    if !(lt > 1e-12 * spec.max().max(1.0)) {
        return Err(GmespError::RankDeficient(format!("λ_t(Diag(x)CDiag(x)) = {lt:e}")));
    }
    let v = spec.vectors.columns(0, t).into_owned();
    let mut xmat = &v * v.transpose();
    // rows outside the support are exactly zero
    for i in 0..n {
        if x[i] == 0.0 {
            for j in 0..n {
                xmat[(i, j)] = 0.0;
                xmat[(j, i)] = 0.0;
            }
        }
    }
    Ok(RelaxPoint { x: x.clone(), xmat: crate::linalg::symmetrize(&xmat) })
}

/// `k` disjoint copies: `C ← I_k ⊗ C`, `s ← ks`, `t ← kt`, `A ← I_k ⊗ A`, `b` stacked.
pub fn kron_lift(inst: &Instance, k: usize) -> Result<Instance> {
    if k == 0 {
        return Err(GmespError::InvariantViolation("lift factor must be >= 1".into()));
    }
    let stack = |v: &Vector| Vector::from_iterator(k * v.len(), (0..k).flat_map(|_| v.iter().copied()));
    let out = Instance {
        cov: kron_identity(&inst.cov, k),
        s: k * inst.s,
        t: k * inst.t,
        a: kron_identity(&inst.a, k),
        b: stack(&inst.b),
        lower: stack(&inst.lower),
        upper: stack(&inst.upper),
    };
    out.validate()?;
    Ok(out)
}

/// Deletes the variables in `f0` (rows/columns of `C`, columns of `A`, box entries).
///
/// Returns the reduced instance and the map from reduced to original indices.
pub fn reduce(inst: &Instance, f0: &[usize]) -> Result<(Instance, Vec<usize>)> {
    let n = inst.n();
    if f0.iter().any(|&j| j >= n) {
        return Err(GmespError::InvariantViolation("index out of range in F0".into()));
    }
    if f0.iter().any(|&j| inst.lower[j] == 1.0) {
        return Err(GmespError::Infeasible("cannot delete a variable fixed to one".into()));
    }
    let keep: Vec<usize> = (0..n).filter(|j| !f0.contains(j)).collect();
    let out = Instance {
        cov: principal_submatrix(&inst.cov, &keep),
        s: inst.s,
        t: inst.t,
        a: Mat::from_fn(inst.m(), keep.len(), |i, j| inst.a[(i, keep[j])]),
        b: inst.b.clone(),
        lower: Vector::from_iterator(keep.len(), keep.iter().map(|&j| inst.lower[j])),
        upper: Vector::from_iterator(keep.len(), keep.iter().map(|&j| inst.upper[j])),
    };
    out.validate()?;
    Ok((out, keep))
}

/// Seeded random covariance `C = QᵀQ`, `Q` standard normal `n × n`.
pub fn random_covariance(n: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = Mat::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    crate::linalg::symmetrize(&(q.transpose() * q))
}

/// Seeded random instance. With `m > 0`, `A` is standard normal and
/// `b = A x₀ + slack` for a random feasible `s`-subset `x₀` and uniform slack
/// in `[0, 0.5)`, so the instance is feasible and the rows tend to bind.
pub fn random_instance(n: usize, s: usize, t: usize, m: usize, seed: u64) -> Result<Instance> {
    let cov = random_covariance(n, seed);
    let inst = Instance::new(cov, s, t)?;
    if m == 0 {
        return Ok(inst);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe);
    let a = Mat::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let mut x0 = Vector::zeros(n);
    for &i in idx.iter().take(s) {
        x0[i] = 1.0;
    }
    let b = &a * &x0 + Vector::from_fn(m, |_, _| rng.gen_range(0.0..0.5));
    inst.with_constraints(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small4() -> Mat {
        Mat::from_row_slice(4, 4, &[4., 2., 1., 1., 2., 2., 1., 0., 1., 1., 1., 0., 1., 0., 0., 2.])
    }

    #[test]
    fn top_t_examples() {
        assert_eq!(top_t_logdet(&Mat::identity(4, 4), &[0, 2], 2).unwrap(), 0.0);
        let v = top_t_logdet(&small4(), &[0, 1], 1).unwrap();
        assert!((v - (3.0 + 5f64.sqrt()).ln()).abs() < 1e-12);
        let z = Mat::zeros(3, 3);
        assert!(matches!(top_t_logdet(&z, &[0, 1], 1), Err(GmespError::RankDeficient(_))));
    }

    #[test]
    fn brute_force_diagonal() {
        let c = Mat::from_diagonal(&Vector::from_vec(vec![5., 4., 3., 2.]));
        let inst = Instance::new(c, 2, 1).unwrap();
        let sol = brute_force(&inst).unwrap();
        assert!((sol.value - 5f64.ln()).abs() < 1e-12);
        // every pair containing index 0 ties; lexicographic tie-break picks {0,1}
        assert_eq!(sol.support, vec![0, 1]);
    }

    /// Independent enumeration in reverse (colex from the top) order.
    fn reverse_oracle(inst: &Instance) -> f64 {
        let n = inst.n();
        let mut best = f64::NEG_INFINITY;
        for mask in (0u32..(1 << n)).rev() {
            if mask.count_ones() as usize != inst.s {
                continue;
            }
            let sup: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
            let x = Vector::from_fn(n, |i, _| f64::from(mask >> i & 1));
            if !inst.is_feasible_binary(&x) {
                continue;
            }
            let sub = principal_submatrix(&inst.cov, &sup);
            let mut ev: Vec<f64> = sub.symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
            if ev[inst.t - 1] > 1e-10 {
                best = best.max(ev.iter().take(inst.t).map(|v| v.ln()).sum());
            }
        }
        best
    }

    #[test]
    fn brute_force_double_entry() {
        for seed in 0..20u64 {
            let n = 4 + (seed as usize % 5);
            let s = 2 + (seed as usize % (n - 2));
            let t = 1 + (seed as usize % s);
            let m = if seed % 2 == 0 { 0 } else { 2 };
            let inst = random_instance(n, s, t, m, seed).unwrap();
            let bf = brute_force(&inst).unwrap();
            assert!((bf.value - reverse_oracle(&inst)).abs() < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn projector_properties() {
        for seed in 0..10u64 {
            let inst = random_instance(7, 4, 1 + seed as usize % 4, 0, seed).unwrap();
            let x = Vector::from_vec(vec![1., 0., 1., 1., 0., 1., 0.]);
            let p = binary_to_projector(&inst, &x).unwrap();
            assert!((&p.xmat * &p.xmat - &p.xmat).amax() < 1e-10);
            assert!((p.xmat.trace() - inst.t as f64).abs() < 1e-10);
            for i in 0..7 {
                assert!(p.xmat.row(i).norm() <= x[i] + 1e-10);
            }
            if inst.t == inst.s {
                assert!((&p.xmat - Mat::from_diagonal(&x)).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn kron_and_reduce() {
        let inst = random_instance(5, 3, 2, 2, 4).unwrap();
        assert_eq!(kron_lift(&inst, 1).unwrap(), inst);
        let l2 = kron_lift(&inst, 2).unwrap();
        assert_eq!((l2.n(), l2.s, l2.t, l2.m()), (10, 6, 4, 4));
        let bf = brute_force(&inst).unwrap();
        assert!((brute_force(&l2).unwrap().value - 2.0 * bf.value).abs() < 1e-8);

        let (same, map) = reduce(&inst, &[]).unwrap();
        assert_eq!(same, inst);
        assert_eq!(map, vec![0, 1, 2, 3, 4]);
        for seed in 0..10u64 {
            let inst = random_instance(8, 3, 2, (seed % 2) as usize * 2, seed).unwrap();
            let (red, map) = reduce(&inst, &[0]).unwrap();
            let mut boxed = inst.clone();
            boxed.upper[0] = 0.0;
            let a = brute_force(&red);
            let b = brute_force(&boxed);
            match (a, b) {
                (Ok(a), Ok(b)) => {
                    assert!((a.value - b.value).abs() < 1e-12);
                    let mapped: Vec<usize> = a.support.iter().map(|&i| map[i]).collect();
                    assert_eq!(mapped, b.support);
                }
                (Err(_), Err(_)) => {}
                _ => panic!("oracle disagreement at seed {seed}"),
            }
        }
    }

    #[test]
    fn validation_errors() {
        let c = Mat::identity(3, 3);
        assert!(Instance::new(c.clone(), 3, 1).is_err());
        assert!(Instance::new(c.clone(), 2, 3).is_err());
        let r1 = Mat::from_element(3, 3, 1.0);
        assert!(matches!(Instance::new(r1, 2, 2), Err(GmespError::RankDeficient(_))));
        let inst = Instance::new(c, 2, 1).unwrap();
        let bad = inst.with_bounds(Vector::from_vec(vec![1., 1., 1.]), Vector::from_element(3, 1.0));
        assert!(matches!(bad, Err(GmespError::Infeasible(_))));
    }
}
