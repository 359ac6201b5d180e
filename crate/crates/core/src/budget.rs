//! Dual solutions of `max { dᵀx : eᵀx = s, Ax ≤ b, l ≤ x ≤ c }`.
//!
//! Every certificate in the crate ends in this linear program: the
//! x-stationarity row `ν − υ + Aᵀπ + τe = d` leaves the multipliers
//! `(τ, ν, υ, π)` free, and the cheapest choice is the LP dual. Without side
//! constraints (or when `π := 0` is accepted) the greedy closed form applies.

use crate::error::Result;
use crate::instance::Instance;
use crate::linalg::{LinearProgram, Vector};

/// Multipliers with `ν − υ + Aᵀπ + τe = d`, `ν, υ, π ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetDual {
    /// Multiplier of `eᵀx = s`.
    pub tau: f64,
    /// Multipliers of `x ≤ c`.
    pub nu: Vector,
    /// Multipliers of `x ≥ l`.
    pub upsilon: Vector,
    /// Multipliers of `Ax ≤ b`.
    pub pi: Vector,
    /// `νᵀc − υᵀl + πᵀb + τs`.
    pub value: f64,
}

impl BudgetDual {
    /// Max-norm residual of `ν − υ + Aᵀπ + τe − d`.
    pub fn residual(&self, inst: &Instance, d: &Vector) -> f64 {
        let r = &self.nu - &self.upsilon + inst.a.transpose() * &self.pi + Vector::from_element(d.len(), self.tau) - d;
        r.amax()
    }
}

fn objective(inst: &Instance, tau: f64, nu: &Vector, ups: &Vector, pi: &Vector) -> f64 {
    nu.dot(&inst.upper) - ups.dot(&inst.lower) + pi.dot(&inst.b) + tau * inst.s as f64
}

/// Closed-form dual with `π = 0`: sort the free coordinates (`l < c`) by
/// decreasing score, spend the budget greedily and put `τ` at the score of
/// the first coordinate left at its lower bound; `ν = (d − τ)₊`,
/// `υ = (τ − d)₊`.
pub fn closed_form_dual(inst: &Instance, d: &Vector) -> BudgetDual {
    let n = inst.n();
    let (l, c) = (&inst.lower, &inst.upper);
    let mut free: Vec<usize> = (0..n).filter(|&j| l[j] < c[j]).collect();
    free.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let budget = (inst.s as f64 - l.sum()).round().max(0.0) as usize;
    let tau = if free.is_empty() {
        0.0
    } else if budget == 0 {
        d[free[0]]
    } else if budget >= free.len() {
        d[*free.last().expect("nonempty")]
    } else {
        d[free[budget]]
    };
    let nu = d.map(|v| (v - tau).max(0.0));
    let ups = d.map(|v| (tau - v).max(0.0));
    let pi = Vector::zeros(inst.m());
    let value = objective(inst, tau, &nu, &ups, &pi);
    BudgetDual { tau, nu, upsilon: ups, pi, value }
}

/// Exact LP dual including the side constraints.
pub fn lp_dual(inst: &Instance, d: &Vector) -> Result<BudgetDual> {
    let sol = LinearProgram::budget(d, &inst.lower, &inst.upper, inst.s as f64, &inst.a, &inst.b).solve()?;
    let tau = sol.y_eq[0];
    let clamp = |v: Vector| v.map(|e| e.max(0.0));
    let (nu, ups, pi) = (clamp(sol.z_upper), clamp(sol.z_lower), clamp(sol.y_le));
    let value = objective(inst, tau, &nu, &ups, &pi);
    Ok(BudgetDual { tau, nu, upsilon: ups, pi, value })
}

/// LP dual when `use_lp` and there are side constraints, closed form otherwise.
pub fn budget_dual(inst: &Instance, d: &Vector, use_lp: bool) -> Result<BudgetDual> {
    if use_lp && inst.m() > 0 {
        lp_dual(inst, d)
    } else {
        Ok(closed_form_dual(inst, d))
    }
}
