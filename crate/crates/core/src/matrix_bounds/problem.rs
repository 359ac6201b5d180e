//! Barrier formulation of the matrix relaxations.
//!
//! Variables are `u = (x, v)` where `x ∈ ℝⁿ` and `v` holds the upper triangle
//! of `Y ∈ 𝕊^{|J|}`, the restriction of `X` to the active index set `J` (rows
//! and columns of `X` outside `J` are identically zero). All objective and
//! barrier pieces are log-determinants of affine matrix functions
//! `M(u) = M₀ + Σ_α c_α K_α Y K_αᵀ (+ Diag(x_J))`, plus per-row SOC logs,
//! box logs and side-constraint logs.

use crate::barrier::BarrierProblem;
use crate::linalg::{Mat, Vector};

/// Index bookkeeping for `u = (x, vech(Y))`.
#[derive(Debug, Clone)]
pub struct Layout {
    /// Number of `x` coordinates.
    pub n: usize,
    /// Active indices (rows/columns of `X` carried by `Y`).
    pub jset: Vec<usize>,
    /// `(a, b)` with `a ≤ b` for each `v` coordinate.
    pub pairs: Vec<(usize, usize)>,
    /// `index[a][b]` = position of `Y_ab` within `v`.
    pub index: Vec<Vec<usize>>,
}

impl Layout {
    /// Layout for the given active set.
    pub fn new(n: usize, jset: Vec<usize>) -> Self {
        let nj = jset.len();
        let mut pairs = Vec::with_capacity(nj * (nj + 1) / 2);
        let mut index = vec![vec![0; nj]; nj];
        for a in 0..nj {
            for b in a..nj {
                index[a][b] = pairs.len();
                index[b][a] = pairs.len();
                pairs.push((a, b));
            }
        }
        Layout { n, jset, pairs, index }
    }

    /// `|J|`.
    pub fn nj(&self) -> usize {
        self.jset.len()
    }

    /// Length of `v`.
    pub fn nv(&self) -> usize {
        self.pairs.len()
    }

    /// Length of `u`.
    pub fn dim(&self) -> usize {
        self.n + self.nv()
    }

    /// `Y` from `u`.
    pub fn y_of(&self, u: &Vector) -> Mat {
        let nj = self.nj();
        Mat::from_fn(nj, nj, |a, b| u[self.n + self.index[a][b]])
    }

    /// Writes `Y` into `u`.
    pub fn set_y(&self, u: &mut Vector, y: &Mat) {
        for (k, &(a, b)) in self.pairs.iter().enumerate() {
            u[self.n + k] = 0.5 * (y[(a, b)] + y[(b, a)]);
        }
    }

    /// Full `n × n` matrix `X = E Y Eᵀ`.
    pub fn x_full(&self, u: &Vector) -> Mat {
        let y = self.y_of(u);
        let mut x = Mat::zeros(self.n, self.n);
        for (a, &i) in self.jset.iter().enumerate() {
            for (b, &j) in self.jset.iter().enumerate() {
                x[(i, j)] = y[(a, b)];
            }
        }
        x
    }

    /// Position of `v_(ab)` within `u`.
    pub fn v_pos(&self, a: usize, b: usize) -> usize {
        self.n + self.index[a][b]
    }

    /// `(p, q)` index pairs making up the symmetric unit direction of `v_k`.
    fn unit(&self, k: usize) -> ([(usize, usize); 2], usize) {
        let (a, b) = self.pairs[k];
        if a == b {
            ([(a, a), (a, a)], 1)
        } else {
            ([(a, b), (b, a)], 2)
        }
    }
}

/// `weight · ldet(M₀ + Σ_α c_α K_α Y K_αᵀ + [Diag(x_J)])`.
#[derive(Debug, Clone)]
pub struct LdetTerm {
    /// Multiplier of the log-determinant.
    pub weight: f64,
    /// Constant part (`p × p`).
    pub m0: Mat,
    /// `(c_α, K_α)` with `K_α` of size `p × |J|`.
    pub parts: Vec<(f64, Mat)>,
    /// Whether `Diag(x_J)` is added (requires `p = |J|`).
    pub xdiag: bool,
}

impl LdetTerm {
    /// The matrix argument at `(x, Y)`.
    pub fn matrix(&self, lay: &Layout, u: &Vector, y: &Mat) -> Mat {
        let mut m = self.m0.clone();
        for (c, k) in &self.parts {
            m += (k * y * k.transpose()) * *c;
        }
        if self.xdiag {
            for (a, &i) in lay.jset.iter().enumerate() {
                m[(a, a)] += u[i];
            }
        }
        m
    }

    /// Value, or `None` if the argument is not positive definite.
    pub fn value(&self, lay: &Layout, u: &Vector, y: &Mat) -> Option<f64> {
        let m = self.matrix(lay, u, y);
        let ch = m.cholesky()?;
        let ld: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        ld.is_finite().then(|| self.weight * ld)
    }

    /// Adds `scale ·` (value, gradient, Hessian); returns `None` outside the domain.
    pub fn accumulate(&self, lay: &Layout, u: &Vector, y: &Mat, scale: f64, g: &mut Vector, h: &mut Mat) -> Option<f64> {
        let m = self.matrix(lay, u, y);
        let ch = m.cholesky()?;
        let ld: f64 = ch.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        if !ld.is_finite() {
            return None;
        }
        let p = ch.inverse();
        let p = (&p + p.transpose()) * 0.5;
        let w = self.weight * scale;
        let n = lay.n;
        let nv = lay.nv();
        // cross products V_αβ = K_αᵀ P K_β
        let kp: Vec<Mat> = self.parts.iter().map(|(_, k)| k.transpose() * &p).collect();
        let np = self.parts.len();
        let mut vmat: Vec<Vec<Mat>> = vec![Vec::with_capacity(np); np];
        for a in 0..np {
            for b in 0..np {
                vmat[a].push(&kp[a] * &self.parts[b].1);
            }
        }
        // gradient in v: Σ_α c_α tr(S_α B_k), S_α = V_αα
        let mut s_sum = Mat::zeros(lay.nj(), lay.nj());
        for a in 0..np {
            s_sum += &vmat[a][a] * self.parts[a].0;
        }
        for k in 0..nv {
            let (a, b) = lay.pairs[k];
            let gk = if a == b { s_sum[(a, a)] } else { s_sum[(a, b)] + s_sum[(b, a)] };
            g[n + k] += w * gk;
        }
        // Hessian vv: −Σ_αβ c_α c_β tr(B₁ V_αβ B₂ V_βα)
        for a in 0..np {
            for b in 0..np {
                let coef = -w * self.parts[a].0 * self.parts[b].0;
                let v = &vmat[a][b];
                for k1 in 0..nv {
                    let (u1, c1) = lay.unit(k1);
                    for k2 in k1..nv {
                        let (u2, c2) = lay.unit(k2);
                        let mut acc = 0.0;
                        for &(pp, qq) in &u1[..c1] {
                            for &(rr, ss) in &u2[..c2] {
                                acc += v[(qq, rr)] * v[(pp, ss)];
                            }
                        }
                        h[(n + k1, n + k2)] += coef * acc;
                        if k2 != k1 {
                            h[(n + k2, n + k1)] += coef * acc;
                        }
                    }
                }
            }
        }
        if self.xdiag {
            let nj = lay.nj();
            for a in 0..nj {
                let ia = lay.jset[a];
                g[ia] += w * p[(a, a)];
                for b in 0..nj {
                    h[(ia, lay.jset[b])] -= w * p[(a, b)] * p[(a, b)];
                }
                // mixed x/v: −Σ_β c_β Σ_{(p,q)∈B} r_q r_p, r = K_βᵀ P e_a
                for (bi, (cb, _)) in self.parts.iter().enumerate() {
                    let r = kp[bi].column(a);
                    for k in 0..nv {
                        let (pa, pb) = lay.pairs[k];
                        let val = if pa == pb { r[pa] * r[pa] } else { 2.0 * r[pa] * r[pb] };
                        let e = -w * cb * val;
                        h[(ia, n + k)] += e;
                        h[(n + k, ia)] += e;
                    }
                }
            }
        }
        Some(w * ld)
    }
}

/// Linear constraint `b − aᵀx > 0` barrier row.
#[derive(Debug, Clone)]
pub struct RowBarrier {
    /// Row of `A`.
    pub a: Vector,
    /// Right-hand side.
    pub b: f64,
}

/// The full barrier problem of a matrix relaxation.
#[derive(Debug, Clone)]
pub struct MatrixProblem {
    /// Variable layout.
    pub lay: Layout,
    /// Objective log-determinant term.
    pub obj: LdetTerm,
    /// Linear objective coefficients over `u` (may be all zero).
    pub lin: Vector,
    /// Constant objective offset.
    pub constant: f64,
    /// Log-determinant barriers.
    pub ldet_barriers: Vec<LdetTerm>,
    /// Whether the per-row SOC barriers over `J` are active.
    pub soc: bool,
    /// `(i, l_i, c_i)` for free coordinates.
    pub boxes: Vec<(usize, f64, f64)>,
    /// Side-constraint rows kept as inequalities.
    pub rows: Vec<RowBarrier>,
}

impl MatrixProblem {
    /// Objective value (no barrier).
    pub fn objective(&self, u: &Vector) -> Option<f64> {
        let y = self.lay.y_of(u);
        Some(self.obj.value(&self.lay, u, &y)? + self.lin.dot(u) + self.constant)
    }

    /// `q_a = x_{J_a}² − ‖Y_a·‖²` for the SOC rows.
    pub fn soc_slacks(&self, u: &Vector, y: &Mat) -> Vec<f64> {
        self.lay
            .jset
            .iter()
            .enumerate()
            .map(|(a, &i)| u[i] * u[i] - y.row(a).norm_squared())
            .collect()
    }

    fn linear_barrier_value(&self, u: &Vector) -> Option<f64> {
        let mut acc = 0.0;
        for &(i, l, c) in &self.boxes {
            let (s1, s2) = (u[i] - l, c - u[i]);
            if !(s1 > 0.0 && s2 > 0.0) {
                return None;
            }
            acc += s1.ln() + s2.ln();
        }
        for r in &self.rows {
            let sl = r.b - r.a.dot(&u.rows(0, self.lay.n));
            if !(sl > 0.0) {
                return None;
            }
            acc += sl.ln();
        }
        Some(acc)
    }
}

impl BarrierProblem for MatrixProblem {
    fn value(&self, u: &Vector, mu: f64) -> Option<f64> {
        let y = self.lay.y_of(u);
        let mut acc = self.obj.value(&self.lay, u, &y)? + self.lin.dot(u) + self.constant;
        for t in &self.ldet_barriers {
            acc += mu * t.value(&self.lay, u, &y)?;
        }
        if self.soc {
            for q in self.soc_slacks(u, &y) {
                if !(q > 0.0) {
                    return None;
                }
                acc += mu * q.ln();
            }
        }
        Some(acc + mu * self.linear_barrier_value(u)?)
    }

    fn derivs(&self, u: &Vector, mu: f64) -> Option<(f64, Vector, Mat)> {
        let lay = &self.lay;
        let dim = lay.dim();
        let n = lay.n;
        let y = lay.y_of(u);
        let mut g = self.lin.clone();
        let mut h = Mat::zeros(dim, dim);
        let mut f = self.obj.accumulate(lay, u, &y, 1.0, &mut g, &mut h)? + self.lin.dot(u) + self.constant;
        for t in &self.ldet_barriers {
            f += t.accumulate(lay, u, &y, mu, &mut g, &mut h)?;
        }
        if self.soc {
            let nj = lay.nj();
            for a in 0..nj {
                let i = lay.jset[a];
                let q = u[i] * u[i] - y.row(a).norm_squared();
                if !(q > 0.0) {
                    return None;
                }
                f += mu * q.ln();
                // ∇q over the touched coordinates
                let mut idx = Vec::with_capacity(nj + 1);
                let mut dq = Vec::with_capacity(nj + 1);
                idx.push(i);
                dq.push(2.0 * u[i]);
                for b in 0..nj {
                    idx.push(lay.v_pos(a, b));
                    dq.push(-2.0 * y[(a, b)]);
                }
                for (p1, &i1) in idx.iter().enumerate() {
                    g[i1] += mu * dq[p1] / q;
                    for (p2, &i2) in idx.iter().enumerate() {
                        h[(i1, i2)] -= mu * dq[p1] * dq[p2] / (q * q);
                    }
                }
                h[(i, i)] += mu * 2.0 / q;
                for b in 0..nj {
                    let pb = lay.v_pos(a, b);
                    h[(pb, pb)] -= mu * 2.0 / q;
                }
            }
        }
        for &(i, l, c) in &self.boxes {
            let (s1, s2) = (u[i] - l, c - u[i]);
            if !(s1 > 0.0 && s2 > 0.0) {
                return None;
            }
            f += mu * (s1.ln() + s2.ln());
            g[i] += mu * (1.0 / s1 - 1.0 / s2);
            h[(i, i)] -= mu * (1.0 / (s1 * s1) + 1.0 / (s2 * s2));
        }
        for r in &self.rows {
            let sl = r.b - r.a.dot(&u.rows(0, n));
            if !(sl > 0.0) {
                return None;
            }
            f += mu * sl.ln();
            for j in 0..n {
                if r.a[j] == 0.0 {
                    continue;
                }
                g[j] -= mu * r.a[j] / sl;
                for k in 0..n {
                    h[(j, k)] -= mu * r.a[j] * r.a[k] / (sl * sl);
                }
            }
        }
        Some((f, g, h))
    }
}
