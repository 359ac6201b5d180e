//! Exact branch-and-bound: best-bound-first search over relaxation bounds,
//! duality-gap fixing at every node, down-branching by deleting the variable
//! and up-branching through the lower box, with a greedy + 1-swap local search
//! for incumbents.

use crate::error::{GmespError, Result};
use crate::fact_bounds::{ddgfact_bound, ddgfact_gscaled_bound, optimize_upsilon_fact, FactOptions};
use crate::instance::{brute_force, reduce, BinarySolution, Instance};
use crate::linalg::{lp_maximize, Vector};
use crate::matrix_bounds::{
    fix_variables, optimize_gamma, optimize_upsilon_glinx, solve_relaxation, RegionSpec, RelaxationKind,
    ScalingState, SolveOptions,
};
use crate::report::BoundKind;
use crate::spectral::{lagrangian_spectral_bound, spectral_bound, DEFAULT_ITERS};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

/// Scaling applied to the node bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScaleMode {
    /// No scaling.
    None,
    /// Optimized scalar factor (glinx only).
    O,
    /// Optimized per-variable factors (glinx and DDGFact).
    G,
}

impl ScaleMode {
    /// Parses `none`, `o` or `g`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(ScaleMode::None),
            "o" => Some(ScaleMode::O),
            "g" => Some(ScaleMode::G),
            _ => None,
        }
    }
}

/// Search options.
#[derive(Debug, Clone)]
pub struct BnbOptions {
    /// Bound used at every node.
    pub kind: BoundKind,
    /// Region for the matrix relaxations.
    pub region: RegionSpec,
    /// Scaling of the node bounds.
    pub scale: ScaleMode,
    /// Node budget.
    pub max_nodes: usize,
    /// Optimality tolerance on `bound − incumbent`.
    pub tol: f64,
    /// Exact LP pricing of the side constraints in certificates.
    pub dual_lp: bool,
    /// Heuristic restarts at the root.
    pub restarts: usize,
    /// Seed of the heuristic restarts.
    pub seed: u64,
    /// Nodes with at most this many completions are enumerated.
    pub enumerate_below: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            kind: BoundKind::Glinx,
            region: RegionSpec::default(),
            scale: ScaleMode::None,
            max_nodes: 10_000,
            tol: 1e-6,
            dual_lp: true,
            restarts: 3,
            seed: 0,
            enumerate_below: 8,
        }
    }
}

/// A search node: a reduced instance with its own boxes.
#[derive(Debug, Clone)]
pub struct Node {
    /// Node identifier (creation order).
    pub id: usize,
    /// Instance with the down-fixed variables deleted.
    pub inst: Instance,
    /// Map from node indices to root indices.
    pub map: Vec<usize>,
    /// Bound inherited from the parent.
    pub parent_bound: f64,
    /// Depth in the tree.
    pub depth: usize,
    /// Scalar factor inherited as a warm start.
    pub gamma: Option<f64>,
    /// Per-variable factors (node indices) inherited as a warm start.
    pub upsilon: Option<Vector>,
}

/// Search statistics.
#[derive(Debug, Clone, Serialize)]
pub struct SearchStats {
    /// Nodes evaluated.
    pub nodes: usize,
    /// Variables fixed by the duality-gap rule.
    pub fixings: usize,
    /// Incumbent value.
    pub incumbent: Option<f64>,
    /// Incumbent support (root indices).
    pub support: Option<Vec<usize>>,
    /// Certified global upper bound.
    pub bound: f64,
    /// Whether optimality was proven.
    pub optimal: bool,
    /// Deepest node.
    pub max_depth: usize,
    /// Nodes whose bound exceeded the parent's (logged, not assumed).
    pub monotonicity_breaks: usize,
    /// Wall time in seconds.
    pub wall_time: f64,
    /// Progress lines, one per evaluated node.
    #[serde(skip)]
    pub log: Vec<String>,
}

/// Down and up children of `node` on its variable `j` (node index).
pub fn branch(node: &Node, j: usize, next_id: &mut usize) -> Result<(Node, Node)> {
    if node.inst.lower[j] != 0.0 || node.inst.upper[j] != 1.0 {
        return Err(GmespError::InvariantViolation(format!("variable {j} is not free")));
    }
    let (dinst, keep) = delete(&node.inst, &[j])?;
    let down = Node {
        id: *next_id,
        inst: dinst,
        map: keep.iter().map(|&k| node.map[k]).collect(),
        parent_bound: node.parent_bound,
        depth: node.depth + 1,
        gamma: node.gamma,
        upsilon: node.upsilon.as_ref().map(|u| Vector::from_iterator(keep.len(), keep.iter().map(|&k| u[k]))),
    };
    let mut uinst = node.inst.clone();
    uinst.lower[j] = 1.0;
    let up = Node { id: *next_id + 1, inst: uinst, depth: node.depth + 1, ..node.clone() };
    *next_id += 2;
    Ok((down, up))
}

/// Deletes the variables `f0`, or closes their upper boxes when deletion
/// would leave no more than `s` variables.
fn delete(inst: &Instance, f0: &[usize]) -> Result<(Instance, Vec<usize>)> {
    if inst.n() - f0.len() > inst.s {
        return reduce(inst, f0);
    }
    if f0.iter().any(|&j| inst.lower[j] == 1.0) {
        return Err(GmespError::Infeasible("cannot delete a variable fixed to one".into()));
    }
    let mut out = inst.clone();
    for &j in f0 {
        out.upper[j] = 0.0;
    }
    Ok((out, (0..inst.n()).collect()))
}

fn violation(inst: &Instance, support: &[usize]) -> f64 {
    let mut x = Vector::zeros(inst.n());
    for &i in support {
        x[i] = 1.0;
    }
    let ax = &inst.a * x;
    (0..inst.m()).map(|i| (ax[i] - inst.b[i]).max(0.0)).sum()
}

/// 1-swaps that reduce the total row violation until the set is feasible
/// or no swap helps.
fn repair(inst: &Instance, mut set: Vec<usize>) -> Option<Vec<usize>> {
    let mut v = violation(inst, &set);
    while v > 0.0 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..set.len() {
            if inst.lower[set[a]] == 1.0 {
                continue;
            }
            for j in 0..inst.n() {
                if inst.upper[j] == 0.0 || set.contains(&j) {
                    continue;
                }
                let mut cand = set.clone();
                cand[a] = j;
                let w = violation(inst, &cand);
                if w < best.map_or(v, |b| b.0) {
                    best = Some((w, a, j));
                }
            }
        }
        if let Some((w, a, j)) = best {
            set[a] = j;
            v = w;
            continue;
        }
        // no single swap helps: try pairs
        let (w, cand) = best_pair_swap(inst, &set, v)?;
        set = cand;
        v = w;
    }
    set.sort_unstable();
    Some(set)
}

fn best_pair_swap(inst: &Instance, set: &[usize], v: f64) -> Option<(f64, Vec<usize>)> {
    let out: Vec<usize> = (0..inst.n()).filter(|&j| inst.upper[j] == 1.0 && !set.contains(&j)).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for a in 0..set.len() {
        for b in a + 1..set.len() {
            if inst.lower[set[a]] == 1.0 || inst.lower[set[b]] == 1.0 {
                continue;
            }
            for (p, &i) in out.iter().enumerate() {
                for &j in &out[p + 1..] {
                    let mut cand = set.to_vec();
                    cand[a] = i;
                    cand[b] = j;
                    let w = violation(inst, &cand);
                    if w < best.as_ref().map_or(v, |b| b.0) {
                        best = Some((w, cand));
                    }
                }
            }
        }
    }
    best
}

fn value_of(inst: &Instance, support: &[usize]) -> Option<f64> {
    let mut sorted = support.to_vec();
    sorted.sort_unstable();
    let mut x = Vector::zeros(inst.n());
    for &i in &sorted {
        x[i] = 1.0;
    }
    if !inst.is_feasible_binary(&x) {
        return None;
    }
    inst.objective(&sorted)
}

/// Greedy score of a partial set: the top-`t` log-determinant, or the full
/// log-determinant while `|S| < t`.
fn partial_score(inst: &Instance, set: &[usize]) -> f64 {
    let t = inst.t.min(set.len());
    if t == 0 {
        return 0.0;
    }
    crate::instance::top_t_logdet(&inst.cov, set, t).unwrap_or(f64::NEG_INFINITY)
}

/// Whether some `x` in the LP relaxation has `x_S = 1`.
fn completable(inst: &Instance, set: &[usize]) -> bool {
    if inst.m() == 0 {
        return true;
    }
    let mut l = inst.lower.clone();
    for &i in set {
        l[i] = 1.0;
    }
    lp_maximize(&Vector::zeros(inst.n()), &l, &inst.upper, inst.s as f64, &inst.a, &inst.b).is_ok()
}

/// 1-swap local search to a local optimum (feasible supports only).
fn local_search(inst: &Instance, mut best: BinarySolution) -> BinarySolution {
    let n = inst.n();
    loop {
        let mut improved = false;
        'outer: for a in 0..best.support.len() {
            let i = best.support[a];
            if inst.lower[i] == 1.0 {
                continue;
            }
            for j in 0..n {
                if inst.upper[j] == 0.0 || best.support.contains(&j) {
                    continue;
                }
                let mut cand = best.support.clone();
                cand[a] = j;
                if let Some(v) = value_of(inst, &cand) {
                    if v > best.value + 1e-12 {
                        cand.sort_unstable();
                        best = BinarySolution { support: cand, value: v };
                        improved = true;
                        break 'outer;
                    }
                }
            }
        }
        if !improved {
            return best;
        }
    }
}

/// Greedy construction (largest score increment among completable
/// candidates) from an optional seed element, followed by 1-swap search.
fn greedy_from(inst: &Instance, first: Option<usize>) -> Option<BinarySolution> {
    let n = inst.n();
    let mut set: Vec<usize> = (0..n).filter(|&i| inst.lower[i] == 1.0).collect();
    if let Some(f) = first {
        if !set.contains(&f) && inst.upper[f] == 1.0 {
            set.push(f);
        }
    }
    while set.len() < inst.s {
        // best completable candidate, else best overall (repaired below)
        let mut best: Option<(f64, usize)> = None;
        let mut fallback: Option<(f64, usize)> = None;
        for j in 0..n {
            if inst.upper[j] == 0.0 || set.contains(&j) {
                continue;
            }
            let mut cand = set.clone();
            cand.push(j);
            let sc = partial_score(inst, &cand);
            if fallback.map_or(true, |(b, _)| sc > b) {
                fallback = Some((sc, j));
            }
            if best.map_or(true, |(b, _)| sc > b) && completable(inst, &cand) {
                best = Some((sc, j));
            }
        }
        set.push(best.or(fallback)?.1);
    }
    let set = repair(inst, set)?;
    let v = value_of(inst, &set)?;
    Some(local_search(inst, BinarySolution { support: set, value: v }))
}

/// Greedy + 1-swap heuristic, best over `restarts` seeded random first picks
/// (the first run is purely greedy).
pub fn heuristic_lb(inst: &Instance, restarts: usize, seed: u64) -> Result<BinarySolution> {
    inst.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..inst.n()).filter(|&i| inst.upper[i] == 1.0).collect();
    order.shuffle(&mut rng);
    let mut best: Option<BinarySolution> = greedy_from(inst, None);
    for &f in order.iter().take(restarts) {
        if let Some(c) = greedy_from(inst, Some(f)) {
            if best.as_ref().map_or(true, |b| c.value > b.value) {
                best = Some(c);
            }
        }
    }
    best.ok_or_else(|| GmespError::Infeasible("heuristic found no feasible selection".into()))
}

/// Outcome of one node evaluation.
struct NodeEval {
    bound: f64,
    x: Option<Vector>,
    multipliers: Option<(Vector, Vector)>,
    gamma: Option<f64>,
    upsilon: Option<Vector>,
}

fn evaluate(node: &Node, opts: &BnbOptions) -> Result<NodeEval> {
    let inst = &node.inst;
    let none = |bound: f64| NodeEval { bound, x: None, multipliers: None, gamma: None, upsilon: None };
    match opts.kind {
        BoundKind::Spectral => Ok(none(spectral_bound(&inst.cov, inst.t)?)),
        BoundKind::LagrangianSpectral => Ok(none(lagrangian_spectral_bound(inst, None, DEFAULT_ITERS)?.value)),
        BoundKind::Ddgfact => {
            let fo = FactOptions { dual_lp: opts.dual_lp, ..FactOptions::default() };
            if opts.scale == ScaleMode::G {
                let (sol, u) = match &node.upsilon {
                    Some(u) => (ddgfact_gscaled_bound(inst, u, &fo)?, u.clone()),
                    None => {
                        let r = optimize_upsilon_fact(inst, &Vector::from_element(inst.n(), 1.0), 30, &fo)?;
                        (r.solution, r.upsilon)
                    }
                };
                Ok(NodeEval {
                    bound: sol.report.bound(),
                    x: Some(sol.point.x.clone()),
                    multipliers: None,
                    gamma: None,
                    upsilon: Some(u),
                })
            } else {
                let r = ddgfact_bound(inst, &fo)?;
                Ok(NodeEval {
                    bound: r.dual.objective,
                    x: Some(r.x),
                    multipliers: Some((r.dual.upsilon, r.dual.nu)),
                    gamma: None,
                    upsilon: None,
                })
            }
        }
        BoundKind::Glinx | BoundKind::GnlpId | BoundKind::GnlpComp => {
            let kind = match opts.kind {
                BoundKind::Glinx => RelaxationKind::Glinx,
                BoundKind::GnlpId => RelaxationKind::GnlpId,
                _ => RelaxationKind::GnlpComp,
            };
            let so = SolveOptions { dual_lp: opts.dual_lp, ..SolveOptions::default() };
            let (sol, gamma, upsilon) = match (kind, opts.scale) {
                // the scaling search runs where no factor is inherited; children
                // reuse the parent's factors (any factor gives a valid bound)
                (RelaxationKind::Glinx, ScaleMode::O) => match node.gamma {
                    Some(g) => (solve_relaxation(inst, kind, &opts.region, &ScalingState::o(g), &so)?, Some(g), None),
                    None => {
                        let g = optimize_gamma(inst, &opts.region, &so, 12)?;
                        (g.solution, Some(g.gamma), None)
                    }
                },
                (RelaxationKind::Glinx, ScaleMode::G) => match (&node.upsilon, node.gamma) {
                    (Some(u), g) => {
                        let sol = solve_relaxation(inst, kind, &opts.region, &ScalingState::g(u.clone()), &so)?;
                        (sol, g, Some(u.clone()))
                    }
                    (None, _) => {
                        let g0 = optimize_gamma(inst, &opts.region, &so, 12)?.gamma;
                        let u = optimize_upsilon_glinx(inst, &opts.region, &so, g0, 12)?;
                        (u.solution, Some(g0), Some(u.upsilon))
                    }
                },
                _ => (solve_relaxation(inst, kind, &opts.region, &ScalingState::default(), &so)?, None, None),
            };
            let certified = sol.report.certified;
            Ok(NodeEval {
                bound: certified.unwrap_or(f64::INFINITY),
                x: Some(sol.point.x),
                multipliers: certified.map(|_| (sol.dual.upsilon, sol.dual.nu)),
                gamma,
                upsilon,
            })
        }
    }
}

/// Number of ways to complete a node, capped at `cap + 1`.
fn completions(inst: &Instance, cap: usize) -> usize {
    let free = (0..inst.n()).filter(|&i| inst.lower[i] == 0.0 && inst.upper[i] == 1.0).count();
    let forced = inst.lower.sum() as usize;
    if forced > inst.s || forced + free < inst.s {
        return 0;
    }
    let k = inst.s - forced;
    let mut c: usize = 1;
    for i in 0..k {
        c = c * (free - i) / (i + 1);
        if c > cap {
            return cap + 1;
        }
    }
    c
}

#[derive(Debug)]
struct Queued(f64, usize, Node);

impl PartialEq for Queued {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Queued {
    // larger bound first, then older node
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(o.1.cmp(&self.1))
    }
}

/// Outcome of a search, proven or not.
#[derive(Debug, Clone)]
pub struct BnbOutcome {
    /// Best solution found.
    pub solution: Option<BinarySolution>,
    /// Statistics.
    pub stats: SearchStats,
}

fn offer(inc: &mut Option<BinarySolution>, cand: BinarySolution) -> bool {
    if inc.as_ref().map_or(true, |b| cand.value > b.value) {
        *inc = Some(cand);
        true
    } else {
        false
    }
}

fn lift(node: &Node, sol: &BinarySolution) -> BinarySolution {
    let mut support: Vec<usize> = sol.support.iter().map(|&i| node.map[i]).collect();
    support.sort_unstable();
    BinarySolution { support, value: sol.value }
}

/// Rounds a relaxation point to the `s` largest entries (respecting the node
/// boxes) and polishes it by local search on the root instance.
fn round(root: &Instance, node: &Node, x: &Vector) -> Option<BinarySolution> {
    let inst = &node.inst;
    let mut idx: Vec<usize> = (0..inst.n()).filter(|&i| inst.upper[i] == 1.0).collect();
    idx.sort_by(|&a, &b| {
        (inst.lower[b] as u8).cmp(&(inst.lower[a] as u8)).then(x[b].total_cmp(&x[a])).then(a.cmp(&b))
    });
    if idx.len() < inst.s {
        return None;
    }
    let mut sup: Vec<usize> = idx[..inst.s].iter().map(|&i| node.map[i]).collect();
    sup.sort_unstable();
    let v = value_of(root, &sup)?;
    Some(local_search(root, BinarySolution { support: sup, value: v }))
}

/// Runs the search and returns whatever it found within the node budget.
pub fn search(inst: &Instance, opts: &BnbOptions) -> Result<BnbOutcome> {
    let start = Instant::now();
    inst.validate()?;
    let mut incumbent = heuristic_lb(inst, opts.restarts, opts.seed).ok();
    let mut stats = SearchStats {
        nodes: 0,
        fixings: 0,
        incumbent: None,
        support: None,
        bound: f64::INFINITY,
        optimal: false,
        max_depth: 0,
        monotonicity_breaks: 0,
        wall_time: 0.0,
        log: Vec::new(),
    };
    let mut heap = BinaryHeap::new();
    let root = Node {
        id: 0,
        inst: inst.clone(),
        map: (0..inst.n()).collect(),
        parent_bound: f64::INFINITY,
        depth: 0,
        gamma: None,
        upsilon: None,
    };
    let mut next_id = 1;
    heap.push(Queued(f64::INFINITY, 0, root));
    let lb = |inc: &Option<BinarySolution>| inc.as_ref().map_or(f64::NEG_INFINITY, |b| b.value);
    while let Some(Queued(pb, _, mut node)) = heap.pop() {
        if pb <= lb(&incumbent) + opts.tol {
            // best-first: every remaining node is dominated too
            heap.clear();
            break;
        }
        if stats.nodes >= opts.max_nodes {
            heap.push(Queued(pb, node.id, node));
            break;
        }
        stats.nodes += 1;
        stats.max_depth = stats.max_depth.max(node.depth);
        // a node with a single completion is always evaluated directly
        let small = opts.enumerate_below.max(1);
        let ways = completions(&node.inst, small);
        if ways == 0 {
            continue;
        }
        if ways <= small {
            if let Ok(best) = brute_force(&node.inst) {
                offer(&mut incumbent, lift(&node, &best));
            }
            stats.log.push(format!(
                "node={} depth={} bound=enumerated incumbent={} fixed0={} fixed1={}",
                node.id,
                node.depth,
                lb(&incumbent),
                inst.n() - node.inst.n(),
                node.inst.lower.sum() as usize
            ));
            continue;
        }
        let ev = match evaluate(&node, opts) {
            Ok(ev) => ev,
            // no selection of rank ≥ t (or no feasible point) in this node
            Err(GmespError::Infeasible(_) | GmespError::RankDeficient(_) | GmespError::DegenerateSpectrum(_)) => {
                continue
            }
            Err(e) => return Err(e),
        };
        if ev.bound > node.parent_bound + 1e-9 {
            stats.monotonicity_breaks += 1;
        }
        let bound = ev.bound.min(node.parent_bound);
        if let Some(x) = &ev.x {
            if let Some(r) = round(inst, &node, x) {
                offer(&mut incumbent, r);
            }
        }
        let inc = lb(&incumbent);
        let mut fixed0 = Vec::new();
        let mut fixed1 = Vec::new();
        if let (Some((ups, nu)), true) = (&ev.multipliers, inc.is_finite()) {
            let (f0, f1) = fix_variables(&node.inst, ups, nu, ev.bound, inc);
            fixed0 = f0;
            fixed1 = f1;
        }
        stats.log.push(format!(
            "node={} depth={} bound={} incumbent={} fixed0={} fixed1={}",
            node.id,
            node.depth,
            bound,
            inc,
            inst.n() - node.inst.n() + fixed0.len(),
            node.inst.lower.sum() as usize + fixed1.len()
        ));
        log::info!("{}", stats.log.last().expect("pushed"));
        if bound <= inc + opts.tol {
            continue;
        }
        node.parent_bound = bound;
        node.gamma = ev.gamma.or(node.gamma);
        if ev.upsilon.is_some() {
            node.upsilon = ev.upsilon.clone();
        }
        let mut x = ev.x.clone();
        if !fixed0.is_empty() || !fixed1.is_empty() {
            stats.fixings += fixed0.len() + fixed1.len();
            for &j in &fixed1 {
                node.inst.lower[j] = 1.0;
            }
            if node.inst.lower.sum() > node.inst.s as f64 {
                continue;
            }
            if !fixed0.is_empty() {
                let (r, keep) = match delete(&node.inst, &fixed0) {
                    Ok(v) => v,
                    Err(_) => continue,
                };
                node.map = keep.iter().map(|&k| node.map[k]).collect();
                node.upsilon =
                    node.upsilon.as_ref().map(|u| Vector::from_iterator(keep.len(), keep.iter().map(|&k| u[k])));
                x = x.map(|x| Vector::from_iterator(keep.len(), keep.iter().map(|&k| x[k])));
                node.inst = r;
            }
            if completions(&node.inst, small) <= small {
                // re-queue so the (now small) node is enumerated
                heap.push(Queued(bound, node.id, node));
                continue;
            }
        }
        let free: Vec<usize> =
            (0..node.inst.n()).filter(|&i| node.inst.lower[i] == 0.0 && node.inst.upper[i] == 1.0).collect();
        let j = match &x {
            Some(x) => *free
                .iter()
                .min_by(|&&a, &&b| (x[a] - 0.5).abs().total_cmp(&(x[b] - 0.5).abs()).then(a.cmp(&b)))
                .expect("node has free variables"),
            None => free[0],
        };
        let (down, up) = branch(&node, j, &mut next_id)?;
        heap.push(Queued(bound, down.id, down));
        heap.push(Queued(bound, up.id, up));
    }
    let inc = lb(&incumbent);
    let open = heap.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max);
    stats.optimal = heap.is_empty();
    stats.bound = if stats.optimal { inc } else { open.max(inc) };
    stats.incumbent = incumbent.as_ref().map(|b| b.value);
    stats.support = incumbent.as_ref().map(|b| b.support.clone());
    stats.wall_time = start.elapsed().as_secs_f64();
    Ok(BnbOutcome { solution: incumbent, stats })
}

/// Solves to proven optimality (`bound − incumbent ≤ tol`) within the node
/// budget; `BudgetExhausted` otherwise (use [`search`] for the partial result).
pub fn solve_bnb(inst: &Instance, opts: &BnbOptions) -> Result<(BinarySolution, SearchStats)> {
    let out = search(inst, opts)?;
    match (out.solution, out.stats.optimal) {
        (Some(s), true) => Ok((s, out.stats)),
        (None, true) => Err(GmespError::Infeasible("no feasible selection of rank >= t".into())),
        (s, false) => Err(GmespError::BudgetExhausted(format!(
            "{} nodes; incumbent {:?}, bound {}",
            out.stats.nodes,
            s.map(|s| s.value),
            out.stats.bound
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::random_instance;
    use crate::linalg::Mat;

    #[test]
    fn heuristic_is_feasible_and_below_optimum() {
        for seed in 0..10u64 {
            let inst = random_instance(8, 4, 2, (seed % 2) as usize * 2, seed).unwrap();
            let h = heuristic_lb(&inst, 3, seed).unwrap();
            let opt = brute_force(&inst).unwrap();
            assert!(h.value <= opt.value + 1e-12);
            assert!(inst.is_feasible_binary(&h.indicator(8)));
        }
    }

    #[test]
    fn heuristic_diagonal() {
        let c = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 5.0, 3.0, 4.0, 2.0]));
        let inst = Instance::new(c, 3, 3).unwrap();
        let h = heuristic_lb(&inst, 0, 0).unwrap();
        assert_eq!(h.support, vec![1, 2, 3]);
    }

    #[test]
    fn children_partition_parent() {
        let inst = random_instance(7, 3, 2, 0, 1).unwrap();
        let root = Node {
            id: 0,
            inst: inst.clone(),
            map: (0..7).collect(),
            parent_bound: f64::INFINITY,
            depth: 0,
            gamma: None,
            upsilon: None,
        };
        let mut id = 1;
        let (d, u) = branch(&root, 2, &mut id).unwrap();
        let a = lift(&d, &brute_force(&d.inst).unwrap());
        let b = lift(&u, &brute_force(&u.inst).unwrap());
        let opt = brute_force(&inst).unwrap();
        assert_eq!(a.value.max(b.value), opt.value);
    }

    #[test]
    fn matches_brute_force() {
        let kinds = [BoundKind::Glinx, BoundKind::Ddgfact, BoundKind::GnlpId, BoundKind::GnlpComp, BoundKind::Spectral];
        for seed in 0..20u64 {
            let n = 7 + (seed % 4) as usize;
            let inst = random_instance(n, 4, 2 + (seed % 2) as usize, (seed % 3 == 0) as usize * 2, seed).unwrap();
            let kind = kinds[(seed % 5) as usize];
            let opts = BnbOptions { kind, enumerate_below: 1, ..BnbOptions::default() };
            let (s, st) = solve_bnb(&inst, &opts).unwrap();
            let opt = brute_force(&inst).unwrap();
            assert!((s.value - opt.value).abs() < 1e-9, "seed {seed} {kind}: {} {}", s.value, opt.value);
            assert!(st.optimal && st.nodes >= 1 && st.log.len() <= st.nodes);
        }
    }

    #[test]
    fn t_equals_s() {
        for seed in 0..3u64 {
            let inst = random_instance(8, 3, 3, 0, seed).unwrap();
            let opts = BnbOptions { kind: BoundKind::Glinx, enumerate_below: 1, ..BnbOptions::default() };
            let (s, _) = solve_bnb(&inst, &opts).unwrap();
            assert!((s.value - brute_force(&inst).unwrap().value).abs() < 1e-9);
        }
    }

    #[test]
    fn six_var_instance_in_few_nodes() {
        let c = Mat::from_row_slice(
            6,
            6,
            &[
                217., 220., 156., 110., 106., 230., 220., 249., 191., 96., 99., 256., 156., 191., 154., 58., 64., 194.,
                110., 96., 58., 72., 66., 104., 106., 99., 64., 66., 62., 106., 230., 256., 194., 104., 106., 264.,
            ],
        );
        let inst = Instance::new(c, 4, 3).unwrap();
        assert!((heuristic_lb(&inst, 3, 0).unwrap().value - 11.67922).abs() < 1e-5);
        let opts = BnbOptions { enumerate_below: 0, ..BnbOptions::default() };
        let (s, st) = solve_bnb(&inst, &opts).unwrap();
        assert_eq!(s.support.len(), 4);
        assert!((s.value - 11.67922).abs() < 1e-5);
        assert!(st.nodes <= 100, "{}", st.nodes);
        assert!(st.log[0].starts_with("node=0 depth=0 bound="));
    }

    #[test]
    fn fixings_keep_the_optimum() {
        for seed in 0..8u64 {
            let inst = random_instance(8, 4, 2, (seed % 2) as usize * 2, seed).unwrap();
            let opt = brute_force(&inst).unwrap();
            let root = Node {
                id: 0,
                inst: inst.clone(),
                map: (0..8).collect(),
                parent_bound: f64::INFINITY,
                depth: 0,
                gamma: None,
                upsilon: None,
            };
            for kind in [BoundKind::Glinx, BoundKind::Ddgfact, BoundKind::GnlpComp] {
                let ev = evaluate(&root, &BnbOptions { kind, ..BnbOptions::default() }).unwrap();
                let (ups, nu) = ev.multipliers.unwrap();
                let (f0, f1) = fix_variables(&inst, &ups, &nu, ev.bound, opt.value - 1e-9);
                assert!(f0.iter().all(|j| !opt.support.contains(j)), "{kind} {seed}");
                assert!(f1.iter().all(|j| opt.support.contains(j)), "{kind} {seed}");
            }
        }
    }

    #[test]
    fn budget_exhaustion_reports_partial() {
        let inst = random_instance(10, 5, 3, 0, 3).unwrap();
        let opts = BnbOptions { kind: BoundKind::Spectral, max_nodes: 1, restarts: 0, enumerate_below: 0, ..BnbOptions::default() };
        let out = search(&inst, &opts).unwrap();
        if !out.stats.optimal {
            assert!(out.stats.bound >= out.stats.incumbent.unwrap_or(f64::NEG_INFINITY));
            assert!(matches!(solve_bnb(&inst, &opts), Err(GmespError::BudgetExhausted(_))));
        }
    }
}
