//! Small dense linear programs: a two-phase tableau simplex with Bland's
//! anti-cycling rule, returning a basic optimal solution and its duals.

use super::{Mat, Vector};
use crate::error::{GmespError, Result};

const PIVOT_TOL: f64 = 1e-11;
const FEAS_TOL: f64 = 1e-8;

/// `maximize cᵀx  s.t.  A_eq x = b_eq,  A_le x ≤ b_le,  lower ≤ x ≤ upper`
/// with finite bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    /// Objective coefficients.
    pub c: Vector,
    /// Lower bounds.
    pub lower: Vector,
    /// Upper bounds.
    pub upper: Vector,
    /// Equality rows (may have zero rows).
    pub a_eq: Mat,
    /// Equality right-hand side.
    pub b_eq: Vector,
    /// Inequality rows (may have zero rows).
    pub a_le: Mat,
    /// Inequality right-hand side.
    pub b_le: Vector,
}

/// Optimal basic solution with a dual certificate satisfying
/// `c = A_eqᵀ y_eq + A_leᵀ y_le + z_upper − z_lower`.
#[derive(Debug, Clone)]
pub struct LpSolution {
    /// Primal vertex.
    pub x: Vector,
    /// Objective value `cᵀx`.
    pub value: f64,
    /// Free multipliers of the equality rows.
    pub y_eq: Vector,
    /// Nonnegative multipliers of the inequality rows.
    pub y_le: Vector,
    /// Nonnegative multipliers of `x ≤ upper`.
    pub z_upper: Vector,
    /// Nonnegative multipliers of `x ≥ lower`.
    pub z_lower: Vector,
}

impl LinearProgram {
    /// LP over `{eᵀx = s, l ≤ x ≤ u, Ax ≤ b}`.
    pub fn budget(c: &Vector, l: &Vector, u: &Vector, s: f64, a: &Mat, b: &Vector) -> Self {
        let n = c.len();
        LinearProgram {
            c: c.clone(),
            lower: l.clone(),
            upper: u.clone(),
            a_eq: Mat::from_element(1, n, 1.0),
            b_eq: Vector::from_element(1, s),
            a_le: a.clone(),
            b_le: b.clone(),
        }
    }

    /// Solves the program with the tableau simplex.
    pub fn solve(&self) -> Result<LpSolution> {
        let n = self.c.len();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(GmespError::InvariantViolation("LP bound length mismatch".into()));
        }
        for j in 0..n {
            if !(self.lower[j] <= self.upper[j] + FEAS_TOL) {
                return Err(GmespError::Infeasible(format!("empty bound interval at {j}")));
            }
        }
        Tableau::build(self).run(self)
    }
}

/// Maximizes `cᵀx` over `{eᵀx = s, l ≤ x ≤ u, Ax ≤ b}` and returns an optimal vertex.
///
/// With no inequality rows the greedy rule is used: coordinates are raised to
/// their upper bounds in order of decreasing `c` (ties to the smaller index)
/// until the budget is spent, the last one possibly fractionally.
pub fn lp_maximize(c: &Vector, l: &Vector, u: &Vector, s: f64, a: &Mat, b: &Vector) -> Result<Vector> {
    if a.nrows() == 0 {
        return greedy_budget(c, l, u, s);
    }
    Ok(LinearProgram::budget(c, l, u, s, a, b).solve()?.x)
}

/// Greedy maximizer of `cᵀx` over `{eᵀx = s, l ≤ x ≤ u}`.
pub fn greedy_budget(c: &Vector, l: &Vector, u: &Vector, s: f64) -> Result<Vector> {
    let n = c.len();
    let sl: f64 = l.sum();
    let su: f64 = u.sum();
    if sl > s + FEAS_TOL || su < s - FEAS_TOL || (0..n).any(|j| l[j] > u[j] + FEAS_TOL) {
        return Err(GmespError::Infeasible(format!(
            "budget {s} outside [{sl}, {su}] or empty box"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| c[b].partial_cmp(&c[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut x = l.clone();
    let mut budget = s - sl;
    for &j in &order {
        if budget <= 0.0 {
            break;
        }
        let inc = (u[j] - l[j]).min(budget);
        x[j] += inc;
        budget -= inc;
    }
    Ok(x)
}

/// Row kinds of the standard form.
#[derive(Clone, Copy, PartialEq)]
enum RowKind {
    Eq(usize),
    Le(usize),
    Upper(usize),
}

struct Tableau {
    /// Constraint rows, each of length `ncols + 1` (last entry = rhs).
    rows: Vec<Vec<f64>>,
    kinds: Vec<RowKind>,
    /// Sign applied to the row so that its rhs is nonnegative.
    signs: Vec<f64>,
    basis: Vec<usize>,
    ncols: usize,
    nvars: usize,
    first_art: usize,
    /// Column index of the natural slack of each row (if any).
    slack_of: Vec<Option<usize>>,
    /// Row owning each artificial column.
    art_rows: Vec<usize>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.c.len();
        let u: Vec<f64> = (0..n).map(|j| (lp.upper[j] - lp.lower[j]).max(0.0)).collect();
        let mut kinds = Vec::new();
        let mut coeffs: Vec<Vec<f64>> = Vec::new();
        let mut rhs = Vec::new();
        let shift = |row: &[f64], b: f64| b - (0..n).map(|j| row[j] * lp.lower[j]).sum::<f64>();
        for i in 0..lp.a_eq.nrows() {
            let row: Vec<f64> = lp.a_eq.row(i).iter().copied().collect();
            rhs.push(shift(&row, lp.b_eq[i]));
            coeffs.push(row);
            kinds.push(RowKind::Eq(i));
        }
        for i in 0..lp.a_le.nrows() {
            let row: Vec<f64> = lp.a_le.row(i).iter().copied().collect();
            rhs.push(shift(&row, lp.b_le[i]));
            coeffs.push(row);
            kinds.push(RowKind::Le(i));
        }
        for j in 0..n {
            let mut row = vec![0.0; n];
            row[j] = 1.0;
            coeffs.push(row);
            rhs.push(u[j]);
            kinds.push(RowKind::Upper(j));
        }
        let nrows = kinds.len();
        // columns: n structural, one slack per inequality row, one artificial
        // per row whose slack cannot start basic.
        let mut slack_of = vec![None; nrows];
        let mut col = n;
        for (r, k) in kinds.iter().enumerate() {
            if !matches!(k, RowKind::Eq(_)) {
                slack_of[r] = Some(col);
                col += 1;
            }
        }
        let first_art = col;
        let mut signs = vec![1.0; nrows];
        let mut needs_art = vec![false; nrows];
        for r in 0..nrows {
            if rhs[r] < 0.0 {
                signs[r] = -1.0;
            }
            needs_art[r] = slack_of[r].is_none() || signs[r] < 0.0;
        }
        let nart = needs_art.iter().filter(|&&b| b).count();
        let ncols = first_art + nart;
        let mut rows = Vec::with_capacity(nrows);
        let mut basis = Vec::with_capacity(nrows);
        let mut art = first_art;
        let mut art_rows = Vec::with_capacity(nart);
        for r in 0..nrows {
            let mut row = vec![0.0; ncols + 1];
            for j in 0..n {
                row[j] = signs[r] * coeffs[r][j];
            }
            if let Some(sc) = slack_of[r] {
                row[sc] = signs[r];
            }
            row[ncols] = signs[r] * rhs[r];
            if needs_art[r] {
                row[art] = 1.0;
                art_rows.push(r);
                basis.push(art);
                art += 1;
            } else {
                basis.push(slack_of[r].unwrap());
            }
            rows.push(row);
        }
        Tableau { rows, kinds, signs, basis, ncols, nvars: n, first_art, slack_of, art_rows }
    }

    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, pv) in row.iter_mut().zip(&pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
        self.basis[r] = col;
    }

    /// Maximizes `cost · column-vector` over the current tableau with Bland's rule.
    /// Columns `>= limit` are never allowed to enter.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> Result<()> {
        let max_iter = 50 * (self.ncols + self.rows.len()) + 1000;
        for _ in 0..max_iter {
            // reduced costs d_j = cost_j − c_Bᵀ B⁻¹ a_j
            let mut enter = None;
            for j in 0..limit {
                if self.basis.contains(&j) {
                    continue;
                }
                let mut d = cost[j];
                for (r, row) in self.rows.iter().enumerate() {
                    d -= cost[self.basis[r]] * row[j];
                }
                if d > PIVOT_TOL {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[col];
                if a > PIVOT_TOL {
                    let ratio = row[self.ncols] / a;
                    leave = match leave {
                        None => Some((r, ratio)),
                        Some((lr, lratio)) => {
                            if ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                            {
                                Some((r, ratio))
                            } else {
                                Some((lr, lratio))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(GmespError::Internal("LP unbounded under finite bounds".into()));
            };
            self.pivot(r, col);
        }
        Err(GmespError::MaxIterations("simplex pivot cap reached".into()))
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution> {
        let n = self.nvars;
        // Phase I: maximize −Σ artificials.
        let mut cost1 = vec![0.0; self.ncols];
        for c in cost1.iter_mut().skip(self.first_art) {
            *c = -1.0;
        }
        self.optimize(&cost1, self.ncols)?;
        let infeas: f64 = self
            .basis
            .iter()
            .zip(&self.rows)
            .filter(|(b, _)| **b >= self.first_art)
            .map(|(_, row)| row[self.ncols])
            .sum();
        if infeas > FEAS_TOL {
            return Err(GmespError::Infeasible(format!("LP phase I residual {infeas:e}")));
        }
        // Drive zero-level artificials out of the basis where possible.
        for r in 0..self.rows.len() {
            if self.basis[r] >= self.first_art {
                if let Some(col) = (0..self.first_art)
                    .find(|&j| !self.basis.contains(&j) && self.rows[r][j].abs() > 1e-9)
                {
                    self.pivot(r, col);
                }
            }
        }
        // Phase II.
        let mut cost2 = vec![0.0; self.ncols];
        cost2[..n].copy_from_slice(lp.c.as_slice());
        self.optimize(&cost2, self.first_art)?;

        let mut w = vec![0.0; self.ncols];
        for (r, &b) in self.basis.iter().enumerate() {
            w[b] = self.rows[r][self.ncols];
        }
        let x = Vector::from_iterator(n, (0..n).map(|j| lp.lower[j] + w[j].max(0.0)));
        let x = Vector::from_iterator(n, (0..n).map(|j| x[j].min(lp.upper[j])));

        // Duals from the final basis: Bᵀ y = c_B over the signed standard-form rows.
        let m = self.rows.len();
        let column = |j: usize, r: usize| -> f64 {
            // original (unpivoted) signed standard-form column entries
            let kind = self.kinds[r];
            let s = self.signs[r];
            if j < n {
                s * match kind {
                    RowKind::Eq(i) => lp.a_eq[(i, j)],
                    RowKind::Le(i) => lp.a_le[(i, j)],
                    RowKind::Upper(k) => f64::from(u8::from(k == j)),
                }
            } else if j < self.first_art {
                if self.slack_of[r] == Some(j) {
                    s
                } else {
                    0.0
                }
            } else {
                // artificial columns are unit vectors in their own row
                f64::from(u8::from(self.art_rows[j - self.first_art] == r))
            }
        };
        let bmat = Mat::from_fn(m, m, |r, k| column(self.basis[k], r));
        let cb = Vector::from_iterator(m, self.basis.iter().map(|&b| cost2[b]));
        let y = bmat
            .transpose()
            .lu()
            .solve(&cb)
            .ok_or_else(|| GmespError::Internal("singular simplex basis".into()))?;
        let mut y_eq = Vector::zeros(lp.a_eq.nrows());
        let mut y_le = Vector::zeros(lp.a_le.nrows());
        let mut z_upper = Vector::zeros(n);
        for r in 0..m {
            let v = y[r] * self.signs[r];
            match self.kinds[r] {
                RowKind::Eq(i) => y_eq[i] = v,
                RowKind::Le(i) => y_le[i] = v.max(0.0),
                RowKind::Upper(j) => z_upper[j] = v.max(0.0),
            }
        }
        // z_lower from stationarity: c = A_eqᵀy_eq + A_leᵀy_le + z_upper − z_lower
        let resid = lp.a_eq.transpose() * &y_eq + lp.a_le.transpose() * &y_le + &z_upper - &lp.c;
        let z_lower = resid.map(|v| v.max(0.0));
        let value = lp.c.dot(&x);
        Ok(LpSolution { x, value, y_eq, y_le, z_upper, z_lower })
    }
}
