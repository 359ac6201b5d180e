//! Matrix-variable relaxations — glinx, companion glinx, GNLP-Id and its
//! companion — over toggleable feasible regions, with o-/g-scaling for glinx,
//! dual certificates, duality-gap variable fixing and the analytic SOC-gap
//! bound.

pub mod problem;
pub mod scaling;

pub use scaling::{
    gamma_derivative, gscaled_gradient, optimize_gamma, optimize_upsilon_glinx, GammaSearch, UpsilonSearch,
};

use crate::barrier::{null_space, path_follow, presolve, PathOptions};
use crate::budget::budget_dual;
use crate::error::{GmespError, Result};
use crate::instance::{Instance, RelaxPoint};
use crate::linalg::{
    factor_set, inverse_spd, ldet_chol, principal_submatrix, project_psd, sym_eigen, symmetrize, Mat, Vector,
};
use crate::report::{BoundKind, BoundReport, ScalingUsed};
use problem::{LdetTerm, Layout, MatrixProblem, RowBarrier};
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// Residual tolerance for certificates.
pub const CERT_TOL: f64 = 1e-6;

/// The three matrix relaxation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelaxationKind {
    /// `½ ldet(CXC + I − X)`.
    Glinx,
    /// `ldet(I − HᵀXH) + t log λ_max`.
    GnlpId,
    /// `ldet(I + GᵀXG) + t log λ_min`.
    GnlpComp,
}

impl RelaxationKind {
    /// Matching report kind.
    pub fn bound_kind(self) -> BoundKind {
        match self {
            RelaxationKind::Glinx => BoundKind::Glinx,
            RelaxationKind::GnlpId => BoundKind::GnlpId,
            RelaxationKind::GnlpComp => BoundKind::GnlpComp,
        }
    }
}

/// Upper bound on `X`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UpperBound {
    /// `X ⪯ Diag(x)`.
    DiagX,
    /// `X ⪯ I`.
    Identity,
}

/// Which constraints of the relaxation region are active. Always on:
/// `0 ⪯ X`, `tr X = t`, `eᵀx = s`, `l ≤ x ≤ c`, `Ax ≤ b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RegionSpec {
    /// Row-norm constraints `‖X_i·‖₂ ≤ x_i`.
    pub soc_rows: bool,
    /// `X ⪯ Diag(x)` or `X ⪯ I`.
    pub diag_dominance: UpperBound,
}

impl RegionSpec {
    /// All constraints (`P`).
    pub const FULL: RegionSpec = RegionSpec { soc_rows: true, diag_dominance: UpperBound::DiagX };
    /// Without row-norm constraints (`P^∧`), the default.
    pub const NO_SOC: RegionSpec = RegionSpec { soc_rows: false, diag_dominance: UpperBound::DiagX };
    /// Row norms with `X ⪯ I` (`P^⊂`).
    pub const IDENTITY_CAP: RegionSpec = RegionSpec { soc_rows: true, diag_dominance: UpperBound::Identity };

    /// Command-line name.
    pub fn name(&self) -> &'static str {
        match (self.soc_rows, self.diag_dominance) {
            (true, UpperBound::DiagX) => "full",
            (false, UpperBound::DiagX) => "no-soc",
            (true, UpperBound::Identity) => "identity-cap",
            (false, UpperBound::Identity) => "identity-no-soc",
        }
    }

    /// Parses a command-line name.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::FULL),
            "no-soc" => Some(Self::NO_SOC),
            "identity-cap" => Some(Self::IDENTITY_CAP),
            "identity-no-soc" => Some(RegionSpec { soc_rows: false, diag_dominance: UpperBound::Identity }),
            _ => None,
        }
    }

    /// Whether the region ties the rows of `X` to `x` (so `x_i = 0` forces `X_i· = 0`).
    pub fn links_rows(&self) -> bool {
        self.soc_rows || self.diag_dominance == UpperBound::DiagX
    }
}

impl Default for RegionSpec {
    fn default() -> Self {
        Self::NO_SOC
    }
}

/// Scaling parameters: `γ` (o-scaling) and `Υ` (g-scaling).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingState {
    /// Scalar factor, `γ = exp(ψ)`.
    pub gamma: f64,
    /// Per-variable factors.
    pub upsilon: Option<Vector>,
}

impl Default for ScalingState {
    fn default() -> Self {
        ScalingState { gamma: 1.0, upsilon: None }
    }
}

impl ScalingState {
    /// o-scaling with factor `γ`.
    pub fn o(gamma: f64) -> Self {
        ScalingState { gamma, upsilon: None }
    }

    /// g-scaling with factors `Υ`.
    pub fn g(upsilon: Vector) -> Self {
        ScalingState { gamma: 1.0, upsilon: Some(upsilon) }
    }

    /// `ψ = log γ`.
    pub fn psi(&self) -> f64 {
        self.gamma.ln()
    }

    /// Report form.
    pub fn used(&self) -> ScalingUsed {
        match &self.upsilon {
            Some(u) => ScalingUsed { mode: "g".into(), gamma: None, upsilon: Some(u.iter().copied().collect()) },
            None if self.gamma != 1.0 => ScalingUsed { mode: "o".into(), gamma: Some(self.gamma), upsilon: None },
            None => ScalingUsed::none(),
        }
    }
}

/// Which primal constraint the matrix `Z` prices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualForm {
    /// `Diag(x) − X ⪰ 0`: `diag(Z)` enters the x-stationarity row.
    DiagX,
    /// `I − X ⪰ 0`: `tr Z` enters the objective.
    Identity,
}

/// A dual-feasible point of a matrix relaxation.
#[derive(Debug, Clone)]
pub struct MatrixDualPoint {
    /// Relaxation family.
    pub kind: RelaxationKind,
    /// Constraint priced by `Z`.
    pub form: DualForm,
    /// `Θ ≻ 0`.
    pub theta: Mat,
    /// Multipliers of `x ≥ l`.
    pub upsilon: Vector,
    /// Multipliers of `x ≤ c`.
    pub nu: Vector,
    /// SOC multipliers, `‖W_i·‖ ≤ η_i`.
    pub eta: Vector,
    /// Multipliers of `Ax ≤ b`.
    pub pi: Vector,
    /// Multiplier of `eᵀx = s`.
    pub tau: f64,
    /// Multiplier of `tr X = t`.
    pub xi: f64,
    /// `Z ⪰ 0`.
    pub z: Mat,
    /// `Ω ⪰ 0`.
    pub omega: Mat,
    /// SOC matrix multiplier.
    pub w: Mat,
    /// Dual objective value: a valid upper bound.
    pub objective: f64,
}

impl MatrixDualPoint {
    /// Duality-gap fixings against a lower bound.
    pub fn fixings(&self, inst: &Instance, lb: f64) -> (Vec<usize>, Vec<usize>) {
        fix_variables(inst, &self.upsilon, &self.nu, self.objective, lb)
    }
}

/// Residual report of a dual point.
#[derive(Debug, Clone, Serialize)]
pub struct DualCheck {
    /// Max-norm residual of the matrix stationarity equation.
    pub matrix_residual: f64,
    /// Max-norm residual of the vector stationarity equation.
    pub vector_residual: f64,
    /// `λ_min(Θ)`.
    pub theta_min_eig: f64,
    /// `λ_min(Z)`.
    pub z_min_eig: f64,
    /// `λ_min(Ω)`.
    pub omega_min_eig: f64,
    /// `max_i (‖W_i·‖ − η_i)`.
    pub soc_violation: f64,
    /// Most negative entry among `υ, ν, η, π`.
    pub sign_violation: f64,
    /// Dual objective recomputed from the multipliers.
    pub objective: f64,
    /// Names of violated conditions.
    pub violations: Vec<String>,
}

impl DualCheck {
    /// Whether every condition holds within tolerance.
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// The objective of a relaxation in a fixed scaling.
#[derive(Debug, Clone)]
pub struct ObjectiveData {
    /// Family.
    pub kind: RelaxationKind,
    /// `√γ·D C D` for glinx (`D = Diag(Υ)`), `C` otherwise.
    pub cmat: Mat,
    /// `ψ_i = log Υ_i` (zeros without g-scaling).
    pub psi: Vector,
    /// `H` (GNLP-Id) or `G` (companion); empty for glinx.
    pub factor: Mat,
    /// Constant offset (`−(t/2) log γ`, `t log λ_max` or `t log λ_min`).
    pub constant: f64,
    /// `t`.
    pub t: usize,
}

impl ObjectiveData {
    /// Objective data for an instance, family and scaling.
    pub fn new(inst: &Instance, kind: RelaxationKind, scaling: &ScalingState) -> Result<Self> {
        let n = inst.n();
        let t = inst.t;
        if !(scaling.gamma > 0.0 && scaling.gamma.is_finite()) {
            return Err(GmespError::InvariantViolation(format!("γ = {} must be positive", scaling.gamma)));
        }
        match kind {
            RelaxationKind::Glinx => {
                let mut cmat = inst.cov.clone() * scaling.gamma.sqrt();
                let mut psi = Vector::zeros(n);
                if let Some(u) = &scaling.upsilon {
                    if u.len() != n || u.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                        return Err(GmespError::InvariantViolation("Υ must be a positive n-vector".into()));
                    }
                    cmat = Mat::from_fn(n, n, |i, j| u[i] * cmat[(i, j)] * u[j]);
                    psi = u.map(|v| v.ln());
                }
                Ok(ObjectiveData {
                    kind,
                    cmat,
                    psi,
                    factor: Mat::zeros(n, 0),
                    constant: -0.5 * t as f64 * scaling.psi(),
                    t,
                })
            }
            RelaxationKind::GnlpId | RelaxationKind::GnlpComp => {
                if scaling.gamma != 1.0 || scaling.upsilon.is_some() {
                    return Err(GmespError::InvariantViolation("scaling applies to glinx only".into()));
                }
                let fs = factor_set(&inst.cov)?;
                let (factor, constant) = if kind == RelaxationKind::GnlpId {
                    (fs.h, t as f64 * fs.lambda_max.ln())
                } else {
                    let g = fs.g.ok_or_else(|| {
                        GmespError::RankDeficient("the companion bound needs a positive definite C".into())
                    })?;
                    (g, t as f64 * fs.lambda_min.ln())
                };
                Ok(ObjectiveData { kind, cmat: inst.cov.clone(), psi: Vector::zeros(n), factor, constant, t })
            }
        }
    }

    /// Argument of the log-determinant at `X`.
    pub fn ldet_argument(&self, x: &Mat) -> Mat {
        match self.kind {
            RelaxationKind::Glinx => {
                let n = x.nrows();
                symmetrize(&(&self.cmat * x * &self.cmat + Mat::identity(n, n) - x))
            }
            RelaxationKind::GnlpId => {
                let p = self.factor.ncols();
                symmetrize(&(Mat::identity(p, p) - self.factor.transpose() * x * &self.factor))
            }
            RelaxationKind::GnlpComp => {
                let q = self.factor.ncols();
                symmetrize(&(Mat::identity(q, q) + self.factor.transpose() * x * &self.factor))
            }
        }
    }

    /// Objective value at `X`.
    pub fn value(&self, x: &Mat) -> Result<f64> {
        let arg = self.ldet_argument(x);
        let (ld, _) = ldet_chol(&arg)
            .ok_or_else(|| GmespError::NearSingular("objective matrix is not positive definite".into()))?;
        let lin = -2.0 * (0..x.nrows()).map(|i| self.psi[i] * x[(i, i)]).sum::<f64>();
        Ok(match self.kind {
            RelaxationKind::Glinx => 0.5 * ld + lin + self.constant,
            _ => ld + self.constant,
        })
    }

    /// The dual matrix `Θ̂` paired with `X`.
    pub fn theta(&self, x: &Mat) -> Result<Mat> {
        let inv = inverse_spd(&self.ldet_argument(x))?;
        Ok(match self.kind {
            RelaxationKind::Glinx => inv * 0.5,
            _ => inv,
        })
    }

    /// `N(Θ)`, the negated X-gradient of the objective's Fenchel bound:
    /// `−KΘK + Θ + 2Diag(ψ)`, `HΘHᵀ` or `−GΘGᵀ`.
    pub fn n_matrix(&self, theta: &Mat) -> Mat {
        match self.kind {
            RelaxationKind::Glinx => {
                let mut m = theta - &self.cmat * theta * &self.cmat;
                for i in 0..m.nrows() {
                    m[(i, i)] += 2.0 * self.psi[i];
                }
                symmetrize(&m)
            }
            RelaxationKind::GnlpId => symmetrize(&(&self.factor * theta * self.factor.transpose())),
            RelaxationKind::GnlpComp => symmetrize(&(-(&self.factor * theta * self.factor.transpose()))),
        }
    }

    /// Conjugate part of the dual objective, constant included:
    /// `−½ldet(2Θ) + trΘ − n/2` or `−ldet Θ + tr Θ − p`.
    pub fn conjugate(&self, theta: &Mat) -> Result<f64> {
        let p = theta.nrows() as f64;
        let tr = theta.trace();
        let base = match self.kind {
            RelaxationKind::Glinx => {
                let (ld, _) = ldet_chol(&(theta * 2.0))
                    .ok_or_else(|| GmespError::CertificateFailure("Θ is not positive definite".into()))?;
                -0.5 * ld + tr - 0.5 * p
            }
            _ => {
                let (ld, _) = ldet_chol(theta)
                    .ok_or_else(|| GmespError::CertificateFailure("Θ is not positive definite".into()))?;
                -ld + tr - p
            }
        };
        Ok(base + self.constant)
    }
}

/// `½(ldet(γCXC + I − X) − t log γ)` with `t = tr X`.
pub fn eval_glinx(c: &Mat, x: &Mat, gamma: f64) -> Result<f64> {
    let n = c.nrows();
    let arg = symmetrize(&(c * x * c * gamma + Mat::identity(n, n) - x));
    let (ld, _) = ldet_chol(&arg).ok_or_else(|| GmespError::NearSingular("γCXC + I − X is not positive definite".into()))?;
    Ok(0.5 * (ld - x.trace() * gamma.ln()))
}

/// `½ ldet(C⁻¹(I − X)C⁻¹ + X) + ldet C` (requires `C ≻ 0`).
pub fn eval_companion_glinx(c: &Mat, x: &Mat) -> Result<f64> {
    let n = c.nrows();
    let (ldc, _) = ldet_chol(c).ok_or_else(|| GmespError::NearSingular("C is not positive definite".into()))?;
    let ci = inverse_spd(c)?;
    let arg = symmetrize(&(&ci * (Mat::identity(n, n) - x) * &ci + x));
    let (ld, _) = ldet_chol(&arg).ok_or_else(|| GmespError::NearSingular("companion argument is singular".into()))?;
    Ok(0.5 * ld + ldc)
}

/// GNLP-Id (`kind = GnlpId`) or its companion at `X`, with `t = tr X`.
pub fn eval_gnlp(c: &Mat, x: &Mat, kind: RelaxationKind) -> Result<f64> {
    let t = x.trace();
    let fs = factor_set(c)?;
    let (fac, lam) = match kind {
        RelaxationKind::GnlpId => (fs.h, fs.lambda_max),
        RelaxationKind::GnlpComp => (
            fs.g.ok_or_else(|| GmespError::RankDeficient("companion needs C ≻ 0".into()))?,
            fs.lambda_min,
        ),
        RelaxationKind::Glinx => return Err(GmespError::InvariantViolation("use eval_glinx".into())),
    };
    let k = fac.ncols();
    let sign = if kind == RelaxationKind::GnlpId { -1.0 } else { 1.0 };
    let arg = symmetrize(&(Mat::identity(k, k) + fac.transpose() * x * &fac * sign));
    let (ld, _) = ldet_chol(&arg).ok_or_else(|| GmespError::NearSingular("GNLP argument is singular".into()))?;
    Ok(ld + t * lam.ln())
}

/// `½ ldet(DCDXDCD + I − X) − 2 Σ log(Υ_i) X_ii` with `D = Diag(Υ)`.
pub fn eval_gscaled_glinx(c: &Mat, x: &Mat, upsilon: &Vector) -> Result<f64> {
    let n = c.nrows();
    let k = Mat::from_fn(n, n, |i, j| upsilon[i] * c[(i, j)] * upsilon[j]);
    let arg = symmetrize(&(&k * x * &k + Mat::identity(n, n) - x));
    let (ld, _) = ldet_chol(&arg).ok_or_else(|| GmespError::NearSingular("scaled argument is singular".into()))?;
    Ok(0.5 * ld - 2.0 * (0..n).map(|i| upsilon[i].ln() * x[(i, i)]).sum::<f64>())
}

/// Solver options for the matrix relaxations.
#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Barrier path parameters.
    pub path: PathOptions,
    /// Use the LP dual (with side-constraint multipliers) in certificates.
    pub dual_lp: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { path: PathOptions::default(), dual_lp: true }
    }
}

/// Solution of a matrix relaxation.
#[derive(Debug, Clone)]
pub struct RelaxSolution {
    /// Approximate maximizer.
    pub point: RelaxPoint,
    /// Primal and certified values.
    pub report: BoundReport,
    /// The certificate.
    pub dual: MatrixDualPoint,
}

/// Problem assembly shared by the solver and the certifier.
struct Assembly {
    jset: Vec<usize>,
    collapse: bool,
    form: DualForm,
    needs_lp: bool,
}

fn assemble(inst: &Instance, region: &RegionSpec, fixed: &[Option<f64>]) -> Assembly {
    let n = inst.n();
    let collapse = inst.t == inst.s && region.links_rows();
    let jset: Vec<usize> = if region.links_rows() {
        (0..n).filter(|&i| fixed[i] != Some(0.0)).collect()
    } else {
        (0..n).collect()
    };
    let form = if collapse || region.diag_dominance == UpperBound::DiagX { DualForm::DiagX } else { DualForm::Identity };
    let needs_lp = (0..n).any(|i| fixed[i] == Some(0.0) && inst.upper[i] > 0.0);
    Assembly { jset, collapse, form, needs_lp }
}

fn select_columns(m: &Mat, cols: &[usize]) -> Mat {
    Mat::from_fn(m.nrows(), cols.len(), |i, a| m[(i, cols[a])])
}

/// Solves a relaxation by the barrier path and certifies the result.
pub fn solve_relaxation(
    inst: &Instance,
    kind: RelaxationKind,
    region: &RegionSpec,
    scaling: &ScalingState,
    opts: &SolveOptions,
) -> Result<RelaxSolution> {
    let start = Instant::now();
    inst.validate()?;
    let n = inst.n();
    let (s, t) = (inst.s as f64, inst.t as f64);
    let od = ObjectiveData::new(inst, kind, scaling)?;
    let pre = presolve(inst)?;
    let asm = assemble(inst, region, &pre.fixed);
    let lay = Layout::new(n, asm.jset.clone());
    let nj = lay.nj();
    let dim = lay.dim();
    let e_j = Mat::from_fn(n, nj, |i, a| if lay.jset[a] == i { 1.0 } else { 0.0 });

    let obj = match kind {
        RelaxationKind::Glinx => LdetTerm {
            weight: 0.5,
            m0: Mat::identity(n, n),
            parts: vec![(1.0, select_columns(&od.cmat, &lay.jset)), (-1.0, e_j.clone())],
            xdiag: false,
        },
        RelaxationKind::GnlpId | RelaxationKind::GnlpComp => {
            let k = od.factor.ncols();
            let coef = if kind == RelaxationKind::GnlpId { -1.0 } else { 1.0 };
            LdetTerm {
                weight: 1.0,
                m0: Mat::identity(k, k),
                parts: vec![(coef, od.factor.transpose() * &e_j)],
                xdiag: false,
            }
        }
    };
    let mut lin = Vector::zeros(dim);
    for a in 0..nj {
        lin[lay.v_pos(a, a)] = -2.0 * od.psi[lay.jset[a]];
    }
    let eye = Mat::identity(nj, nj);
    let mut barriers =
        vec![LdetTerm { weight: 1.0, m0: Mat::zeros(nj, nj), parts: vec![(1.0, eye.clone())], xdiag: false }];
    if !asm.collapse {
        barriers.push(match region.diag_dominance {
            UpperBound::DiagX => LdetTerm { weight: 1.0, m0: Mat::zeros(nj, nj), parts: vec![(-1.0, eye.clone())], xdiag: true },
            UpperBound::Identity => LdetTerm { weight: 1.0, m0: eye.clone(), parts: vec![(-1.0, eye.clone())], xdiag: false },
        });
    }
    let soc = region.soc_rows && !asm.collapse;
    let boxes: Vec<(usize, f64, f64)> =
        (0..n).filter(|&i| pre.fixed[i].is_none()).map(|i| (i, inst.lower[i], inst.upper[i])).collect();
    let rows: Vec<RowBarrier> = pre
        .ineq_rows
        .iter()
        .map(|&i| RowBarrier { a: inst.a.row(i).transpose(), b: inst.b[i] })
        .collect();
    let problem = MatrixProblem { lay: lay.clone(), obj, lin, constant: od.constant, ldet_barriers: barriers, soc, boxes, rows };

    // equality constraints on u
    let mut eqs: Vec<Vector> = Vec::new();
    let mut unit = |pos: &[(usize, f64)]| {
        let mut r = Vector::zeros(dim);
        for &(p, v) in pos {
            r[p] += v;
        }
        eqs.push(r);
    };
    unit(&(0..n).map(|i| (i, 1.0)).collect::<Vec<_>>());
    for i in 0..n {
        if pre.fixed[i].is_some() {
            unit(&[(i, 1.0)]);
        }
    }
    for &r in &pre.eq_rows {
        unit(&(0..n).map(|j| (j, inst.a[(r, j)])).collect::<Vec<_>>());
    }
    unit(&(0..nj).map(|a| (lay.v_pos(a, a), 1.0)).collect::<Vec<_>>());
    if asm.collapse {
        for a in 0..nj {
            for b in (a + 1)..nj {
                unit(&[(lay.v_pos(a, b), 1.0)]);
            }
            unit(&[(lay.v_pos(a, a), 1.0), (lay.jset[a], -1.0)]);
        }
    }
    let emat = Mat::from_fn(eqs.len(), dim, |r, c| eqs[r][c]);
    let basis = null_space(&emat, dim)?;

    // strictly interior start
    let mut u0 = Vector::zeros(dim);
    for i in 0..n {
        u0[i] = pre.x0[i];
    }
    let y0 = if region.links_rows() {
        Mat::from_diagonal(&Vector::from_fn(nj, |a, _| {
            let xi = pre.x0[lay.jset[a]];
            if asm.collapse { xi } else { xi * t / s }
        }))
    } else {
        Mat::identity(nj, nj) * (t / nj as f64)
    };
    lay.set_y(&mut u0, &y0);

    let path = path_follow(&problem, &u0, &basis, &opts.path)?;
    let u = path.u;
    let mu = path.mu;
    let x = Vector::from_fn(n, |i, _| u[i]);
    let xmat = lay.x_full(&u);
    let primal = problem
        .objective(&u)
        .ok_or_else(|| GmespError::NearSingular("final iterate outside the objective domain".into()))?;
    let y = lay.y_of(&u);

    // barrier multipliers
    let z_jj = if asm.collapse {
        None
    } else {
        let slack = match region.diag_dominance {
            UpperBound::DiagX => Mat::from_diagonal(&Vector::from_fn(nj, |a, _| x[lay.jset[a]])) - &y,
            UpperBound::Identity => Mat::identity(nj, nj) - &y,
        };
        Some(inverse_spd(&symmetrize(&slack))? * mu)
    };
    let mut w = Mat::zeros(n, n);
    if soc {
        let q = problem.soc_slacks(&u, &y);
        for (a, &i) in lay.jset.iter().enumerate() {
            let lam = mu / q[a];
            for j in 0..n {
                w[(i, j)] = 2.0 * lam * xmat[(i, j)];
            }
        }
    }
    let dual = build_certificate(inst, &od, &asm, &xmat, z_jj, w, opts.dual_lp || asm.needs_lp)?;
    let mut diagnostics = vec![format!("barrier mu_final={mu:e} newton_steps={}", path.newton_steps)];
    let check = check_dual(inst, &od, &dual, CERT_TOL)?;
    let certified = if check.passed() {
        Some(dual.objective)
    } else {
        diagnostics.push(format!("certificate check failed: {}", check.violations.join("; ")));
        None
    };
    let report = BoundReport {
        kind: kind.bound_kind(),
        region: Some(region.name().to_string()),
        scaling: scaling.used(),
        primal,
        certified,
        gap: None,
        iterations: path.newton_steps,
        wall_time: start.elapsed().as_secs_f64(),
        converged: path.converged,
        diagnostics,
    };
    Ok(RelaxSolution { point: RelaxPoint { x, xmat }, report, dual })
}

/// Builds a dual point from a primal matrix `X̂`, the barrier estimate of
/// `Z_JJ` (or `None` when `X = Diag(x)` is forced) and the SOC multiplier `W`.
fn build_certificate(
    inst: &Instance,
    od: &ObjectiveData,
    asm: &Assembly,
    xmat: &Mat,
    z_jj: Option<Mat>,
    mut w: Mat,
    use_lp: bool,
) -> Result<MatrixDualPoint> {
    let n = inst.n();
    let t = inst.t as f64;
    let jset = &asm.jset;
    let kset: Vec<usize> = (0..n).filter(|i| !jset.contains(i)).collect();
    let theta = od.theta(xmat)?;
    let nmat = od.n_matrix(&theta);
    let wsym = symmetrize(&w);
    let base = &nmat + &wsym;
    let base_jj = principal_submatrix(&base, jset);
    let mut zj = match z_jj {
        Some(z) => project_psd(&symmetrize(&z))?,
        None => {
            let lmax = sym_eigen(&base_jj)?.max();
            Mat::identity(jset.len(), jset.len()) * lmax - &base_jj
        }
    };
    if !kset.is_empty() && asm.form == DualForm::DiagX {
        let alpha = 1e-8 * zj.amax().max(1.0);
        for a in 0..jset.len() {
            zj[(a, a)] += alpha;
        }
    }
    let m_jj = &zj + &base_jj;
    let lam_j = sym_eigen(&m_jj)?.min();
    let mut z = Mat::zeros(n, n);
    for (a, &i) in jset.iter().enumerate() {
        for (b, &j) in jset.iter().enumerate() {
            z[(i, j)] = zj[(a, b)];
        }
    }
    if !kset.is_empty() {
        let base_kk = principal_submatrix(&base, &kset);
        match asm.form {
            DualForm::DiagX => {
                let base_kj = Mat::from_fn(kset.len(), jset.len(), |k, a| base[(kset[k], jset[a])]);
                let zinv = inverse_spd(&zj)?;
                let schur = symmetrize(&(&base_kj * zinv * base_kj.transpose()));
                let need_psd = sym_eigen(&schur)?.max().max(0.0) * (1.0 + 1e-9) + 1e-12;
                let need_eig = lam_j - sym_eigen(&base_kk)?.min();
                let rho = need_psd.max(need_eig);
                for (k, &i) in kset.iter().enumerate() {
                    for (a, &j) in jset.iter().enumerate() {
                        z[(i, j)] = -base_kj[(k, a)];
                        z[(j, i)] = -base_kj[(k, a)];
                    }
                    z[(i, i)] = rho;
                }
            }
            DualForm::Identity => {
                // rows of W at indices with x_i = 0 absorb the coupling for free
                for &i in &kset {
                    for &j in jset {
                        w[(i, j)] = -2.0 * nmat[(i, j)];
                    }
                    for &j in &kset {
                        w[(i, j)] = -nmat[(i, j)] + if i == j { lam_j } else { 0.0 };
                    }
                }
            }
        }
    }
    let wsym = symmetrize(&w);
    let m = &z + &nmat + &wsym;
    let xi = -lam_j + 1e-12 * m.amax().max(1.0);
    let omega = &m + Mat::identity(n, n) * xi;
    let eta = Vector::from_fn(n, |i, _| w.row(i).norm());
    let mut d = eta.clone();
    if asm.form == DualForm::DiagX {
        d += z.diagonal();
    }
    let bd = budget_dual(inst, &d, use_lp)?;
    let mut objective = od.conjugate(&theta)? + xi * t + bd.value;
    if asm.form == DualForm::Identity {
        objective += z.trace();
    }
    Ok(MatrixDualPoint {
        kind: od.kind,
        form: asm.form,
        theta,
        upsilon: bd.upsilon,
        nu: bd.nu,
        eta,
        pi: bd.pi,
        tau: bd.tau,
        xi,
        z,
        omega,
        w,
        objective,
    })
}

/// Certifies a primal point: builds `Θ̂` from `X̂`, completes the dual with
/// the supplied `Ẑ` (projected onto the PSD cone; zero if absent), and checks
/// every residual.
pub fn certify(
    inst: &Instance,
    kind: RelaxationKind,
    region: &RegionSpec,
    scaling: &ScalingState,
    point: &RelaxPoint,
    z_hat: Option<&Mat>,
    dual_lp: bool,
) -> Result<MatrixDualPoint> {
    let od = ObjectiveData::new(inst, kind, scaling)?;
    let pre = presolve(inst)?;
    let asm = assemble(inst, region, &pre.fixed);
    let nj = asm.jset.len();
    let z_jj = if asm.collapse {
        None
    } else {
        Some(match z_hat {
            Some(z) => principal_submatrix(z, &asm.jset),
            None => Mat::zeros(nj, nj),
        })
    };
    let w = Mat::zeros(inst.n(), inst.n());
    let dp = build_certificate(inst, &od, &asm, &point.xmat, z_jj, w, dual_lp || asm.needs_lp)?;
    let check = check_dual(inst, &od, &dp, CERT_TOL)?;
    if !check.passed() {
        return Err(GmespError::CertificateFailure(check.violations.join("; ")));
    }
    Ok(dp)
}

/// Recomputes every residual, cone membership and the objective of a dual
/// point (with `tol` for pass/fail).
pub fn check_dual(inst: &Instance, od: &ObjectiveData, dp: &MatrixDualPoint, tol: f64) -> Result<DualCheck> {
    let n = inst.n();
    let mut violations = Vec::new();
    let nmat = od.n_matrix(&dp.theta);
    let wsym = symmetrize(&dp.w);
    let rmat = &wsym - &dp.omega + &dp.z + &nmat + Mat::identity(n, n) * dp.xi;
    let matrix_residual = rmat.amax();
    let mut rvec = &dp.upsilon - &dp.nu - inst.a.transpose() * &dp.pi - Vector::from_element(n, dp.tau) + &dp.eta;
    if dp.form == DualForm::DiagX {
        rvec += dp.z.diagonal();
    }
    let vector_residual = rvec.amax();
    let theta_min_eig = sym_eigen(&dp.theta)?.min();
    let z_min_eig = sym_eigen(&dp.z)?.min();
    let omega_min_eig = sym_eigen(&dp.omega)?.min();
    let soc_violation = (0..n).map(|i| dp.w.row(i).norm() - dp.eta[i]).fold(f64::NEG_INFINITY, f64::max);
    let sign_violation = [&dp.upsilon, &dp.nu, &dp.eta, &dp.pi]
        .iter()
        .flat_map(|v| v.iter().copied())
        .map(|v| -v)
        .fold(0.0, f64::max);
    if matrix_residual > tol {
        violations.push(format!("matrix stationarity residual {matrix_residual:e}"));
    }
    if vector_residual > tol {
        violations.push(format!("vector stationarity residual {vector_residual:e}"));
    }
    if !(theta_min_eig > 0.0) {
        violations.push(format!("Theta not positive definite (min eig {theta_min_eig:e})"));
    }
    let zscale = dp.z.amax().max(1.0);
    if z_min_eig < -tol * zscale {
        violations.push(format!("Z not PSD (min eig {z_min_eig:e})"));
    }
    let oscale = dp.omega.amax().max(1.0);
    if omega_min_eig < -tol * oscale {
        violations.push(format!("Omega not PSD (min eig {omega_min_eig:e})"));
    }
    if soc_violation > tol {
        violations.push(format!("row norm of W exceeds eta by {soc_violation:e}"));
    }
    if sign_violation > tol {
        violations.push(format!("negative multiplier {:e}", -sign_violation));
    }
    let mut objective = od.conjugate(&dp.theta)?
        + dp.nu.dot(&inst.upper)
        - dp.upsilon.dot(&inst.lower)
        + dp.pi.dot(&inst.b)
        + dp.tau * inst.s as f64
        + dp.xi * inst.t as f64;
    if dp.form == DualForm::Identity {
        objective += dp.z.trace();
    }
    Ok(DualCheck {
        matrix_residual,
        vector_residual,
        theta_min_eig,
        z_min_eig,
        omega_min_eig,
        soc_violation,
        sign_violation,
        objective,
        violations,
    })
}

/// Duality-gap fixing: with `ζ` a dual bound and `LB` a feasible value,
/// free `j` with `ζ − LB < υ_j` must be 0 and with `ζ − LB < ν_j` must be 1
/// in every solution better than `LB`. Strictness margin 1e-9.
pub fn fix_variables(inst: &Instance, upsilon: &Vector, nu: &Vector, zeta: f64, lb: f64) -> (Vec<usize>, Vec<usize>) {
    let gap = zeta - lb;
    let mut f0 = Vec::new();
    let mut f1 = Vec::new();
    for j in 0..inst.n() {
        if inst.lower[j] >= inst.upper[j] {
            continue;
        }
        if upsilon[j] > gap + 1e-9 {
            f0.push(j);
        } else if nu[j] > gap + 1e-9 {
            f1.push(j);
        }
    }
    (f0, f1)
}

/// Analytic bound on the loss from dropping the row-norm constraints at
/// `γ = 1/λ_t(C)²` (no side constraints).
pub fn soc_gap_bound(c: &Mat, s: usize, t: usize) -> Result<f64> {
    let n = c.nrows();
    let spec = sym_eigen(c)?;
    let lt = spec.values[t - 1];
    if !(lt > 1e-12 * spec.values[0].abs().max(1.0)) {
        return Err(GmespError::RankDeficient(format!("λ_t(C) = {lt:e}")));
    }
    let tn = t as f64 / n as f64;
    let g = |u: f64| (1.0 + tn * (u * u - 1.0)).sqrt();
    let kappa: Vec<f64> = spec.values.iter().map(|l| l.max(0.0) / lt).collect();
    let head: f64 = (0..t - 1).map(|i| (kappa[i] / g(kappa[i])).ln()).sum();
    let tail: f64 = (t..n).map(|i| (1.0 / g(kappa[i])).ln()).sum();
    Ok((head + tail) / (1.0 + 4.0 * (s - t) as f64 / n as f64))
}
