//! Branch-and-bound solver for constant-modulus quantized precoding.
//!
//! After triangularizing the augmented channel, the objective
//! `||R x||^2 / Re{x^H z}^2` is searched over a `B`-level tree whose root
//! fixes the last entry `x_B` and whose leaves fix `x_1`. A node at level `L`
//! carries the partial symbol vector `(x_L, ..., x_B)`. For each candidate
//! child the numerator is bounded from below (exact past and present terms
//! plus an optional eigenvalue bound on the future) and the denominator from
//! above (triangle inequality plus the best possible future correlation).
//! Subtrees whose bound exceeds the incumbent radius are pruned.
//!
//! The traversal is depth-first, best-first, with radius reduction at every
//! improving leaf. Four optional accelerations can be toggled independently
//! through [`TrickConfig`]; none of them changes the optimum.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::quantized_wf_indices;
use crate::error::{PrecodeError, Result};
use crate::model::{cmqp_objective, quantize_indices, PrecodeResult, PrecodingProblem, SearchStats, TransmitAlphabet};
use crate::numerics::{
    back_substitute_leading, min_eigenvalue_hermitian, qr_decompose, sorted_qr, ComplexMatrix, Permutation, C64,
    EIGEN_TOL, SINGULAR_TOL,
};

/// Smallest eigenvalue for which the future-cost eigenbound is used.
pub const EIGENBOUND_FLOOR: f64 = 1e-10;

/// Optional accelerations. The depth-first traversal with radius reduction
/// is always on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TrickConfig {
    /// Start from the quantized Wiener-filter vector as incumbent.
    pub radius_init: bool,
    /// Triangularize with the sorted (min-norm pivoted) QR.
    pub sorted_qr: bool,
    /// Lower-bound the future numerator with the eigenvalue bound.
    pub eigen_future: bool,
    /// Only branch on half of the root alphabet (x and -x are equivalent).
    pub preprune: bool,
}

impl TrickConfig {
    pub const fn all_on() -> Self {
        TrickConfig {
            radius_init: true,
            sorted_qr: true,
            eigen_future: true,
            preprune: true,
        }
    }

    pub const fn all_off() -> Self {
        TrickConfig {
            radius_init: false,
            sorted_qr: false,
            eigen_future: false,
            preprune: false,
        }
    }

    /// All 16 on/off combinations, bit `k` of the index enabling trick `k`.
    pub fn all_combinations() -> impl Iterator<Item = TrickConfig> {
        (0u8..16).map(|bits| TrickConfig {
            radius_init: bits & 1 != 0,
            sorted_qr: bits & 2 != 0,
            eigen_future: bits & 4 != 0,
            preprune: bits & 8 != 0,
        })
    }
}

impl Default for TrickConfig {
    fn default() -> Self {
        Self::all_on()
    }
}

/// The triangularized instance and the per-level quantities the search reads.
///
/// Vectors indexed by level use position `L - 1` for level `L`.
#[derive(Debug, Clone)]
pub struct TriangularizedProblem {
    pub r: ComplexMatrix,
    pub perm: Permutation,
    /// MRT vector in permuted order.
    pub z: Vec<C64>,
    /// Alphabet indices of the entrywise quantized `z`.
    pub mrt_quantized: Vec<usize>,
    /// Entry `L - 1`: `sum_{l < L} Re{conj(x_mrt_l) z_l}`, the largest
    /// correlation the unfixed entries below level `L` can contribute.
    pub den_future_prefix: Vec<f64>,
    /// Entry `L - 1`: smallest eigenvalue of the Gram matrix of the leading
    /// `(L-1) x (L-1)` block of `R`. Zero when the eigenbound is disabled.
    pub lambda_min: Vec<f64>,
    /// Entry `k`: `R_k^{-1} R[0..k, k]` for the leading `k x k` block, when
    /// that block is nonsingular and the eigenbound is enabled. Lets a child
    /// derive its unconstrained center from its parent's in `O(k)`.
    pub center_weights: Vec<Option<Vec<C64>>>,
    pub alphabet: TransmitAlphabet,
    track_centers: bool,
}

impl TriangularizedProblem {
    pub fn antennas(&self) -> usize {
        self.z.len()
    }
}

/// Triangularizes the augmented channel and precomputes the bound tables.
pub fn prepare(problem: &PrecodingProblem, config: &TrickConfig) -> Result<TriangularizedProblem> {
    let b = problem.antennas();
    let (r, perm) = if config.sorted_qr {
        let (_, r, perm) = sorted_qr(problem.augmented_channel())?;
        (r, perm)
    } else {
        let (_, r) = qr_decompose(problem.augmented_channel())?;
        (r, Permutation::identity(b))
    };
    let alphabet = problem.alphabet().clone();
    let z = perm.gather(problem.z_mrt());
    let mrt_quantized = quantize_indices(&z, &alphabet);

    let mut den_future_prefix = Vec::with_capacity(b);
    let mut acc = 0.0;
    for (zl, &m) in z.iter().zip(&mrt_quantized) {
        den_future_prefix.push(acc);
        acc += (alphabet.point(m).conj() * zl).re;
    }

    let mut lambda_min = vec![0.0; b];
    let mut center_weights = vec![None; b];
    if config.eigen_future {
        for size in 1..b {
            let block = r.leading_block(size);
            lambda_min[size] = min_eigenvalue_hermitian(&block.adjoint().matmul(&block), EIGEN_TOL)?;
            let column: Vec<C64> = (0..size).map(|row| r[(row, size)]).collect();
            center_weights[size] = back_substitute_leading(&r, size, &column, SINGULAR_TOL).ok();
        }
    }

    Ok(TriangularizedProblem {
        r,
        perm,
        z,
        mrt_quantized,
        den_future_prefix,
        lambda_min,
        center_weights,
        alphabet,
        track_centers: config.eigen_future,
    })
}

/// A tree node: the fixed suffix `x_L..x_B` and the running sums needed to
/// cost its children.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchNode {
    /// 1-based; `B + 1` is the virtual root.
    pub level: usize,
    /// Alphabet indices of `x_L, ..., x_B` (first entry is `x_L`).
    pub psv: Vec<usize>,
    /// `p_b = sum_{l >= L} R_{b,l} x_l` for every row `b < L`.
    pub partials: Vec<C64>,
    /// Numerator contribution of the fixed rows.
    pub num_past: f64,
    /// Correlation contribution of the fixed entries.
    pub den_past: f64,
    /// `R_{L-1}^{-1} p`: the unconstrained minimizer of the open rows is its
    /// negation. Only tracked with the eigenbound; `None` when singular.
    pub center: Option<Vec<C64>>,
}

impl SearchNode {
    pub fn root(tp: &TriangularizedProblem) -> Self {
        let b = tp.antennas();
        SearchNode {
            level: b + 1,
            psv: Vec::new(),
            partials: vec![C64::new(0.0, 0.0); b],
            num_past: 0.0,
            den_past: 0.0,
            center: tp.track_centers.then(|| vec![C64::new(0.0, 0.0); b]),
        }
    }

    pub fn is_root(&self) -> bool {
        self.psv.is_empty()
    }

    pub fn is_leaf(&self) -> bool {
        self.level == 1
    }

    /// Fixes `x_{L-1}` to alphabet point `m`.
    pub fn extend(&self, m: usize, tp: &TriangularizedProblem) -> SearchNode {
        let mut child = SearchNode {
            level: 0,
            psv: Vec::new(),
            partials: Vec::new(),
            num_past: 0.0,
            den_past: 0.0,
            center: None,
        };
        self.extend_into(m, tp, &mut child);
        child
    }

    /// Like [`SearchNode::extend`], reusing the buffers of `out`.
    pub fn extend_into(&self, m: usize, tp: &TriangularizedProblem, out: &mut SearchNode) {
        let pos = self.level - 2;
        let x = tp.alphabet.point(m);
        let present = tp.r[(pos, pos)] * x + self.partials[pos];
        out.level = self.level - 1;
        out.partials.clear();
        out.partials
            .extend((0..pos).map(|b| self.partials[b] + tp.r[(b, pos)] * x));
        out.psv.clear();
        out.psv.push(m);
        out.psv.extend_from_slice(&self.psv);
        out.num_past = self.num_past + present.norm_sqr();
        out.den_past = self.den_past + (x.conj() * tp.z[pos]).re;
        if !tp.track_centers {
            out.center = None;
            return;
        }
        match (&self.center, tp.center_weights.get(pos).and_then(Option::as_ref)) {
            (Some(y), Some(w)) => {
                let t = y[pos] + x;
                let buf = out.center.get_or_insert_with(Vec::new);
                buf.clear();
                buf.extend((0..pos).map(|i| y[i] + w[i] * t));
            }
            _ => out.center = child_center(self, m, tp),
        }
    }
}

/// Center `v = R_{L-1}^{-1} b_L` of the child that fixes `x_L = m` below
/// `node`, with `b_L = p[0..L-1] + R[0..L-1, L] x_L`.
///
/// Splitting the parent block as `[[R_{L-1}, r], [0, rho]]`, the parent
/// center `y` gives `v = y[0..L-1] + w (y[L-1] + x_L)` with
/// `w = R_{L-1}^{-1} r`. Without a parent center the triangular system is
/// solved directly.
pub fn child_center(node: &SearchNode, m: usize, tp: &TriangularizedProblem) -> Option<Vec<C64>> {
    let pos = node.level - 2;
    let w = tp.center_weights.get(pos)?.as_ref()?;
    let x = tp.alphabet.point(m);
    match &node.center {
        Some(y) => {
            let t = y[pos] + x;
            Some((0..pos).map(|i| y[i] + w[i] * t).collect())
        }
        None => {
            let b: Vec<C64> = (0..pos).map(|row| node.partials[row] + tp.r[(row, pos)] * x).collect();
            back_substitute_leading(&tp.r, pos, &b, SINGULAR_TOL).ok()
        }
    }
}

/// Squared distance from `v` to its entrywise nearest alphabet vector.
fn alphabet_distance(v: impl Iterator<Item = C64>, alphabet: &TransmitAlphabet) -> f64 {
    v.map(|vi| alphabet.nearest_distance_sqr(vi)).sum()
}

/// Lower bound on the objective of every leaf below child `m` of `node`.
pub fn child_cost(node: &SearchNode, m: usize, tp: &TriangularizedProblem, config: &TrickConfig) -> f64 {
    let pos = node.level - 2;
    let x = tp.alphabet.point(m);
    let present = (tp.r[(pos, pos)] * x + node.partials[pos]).norm_sqr();
    let future = future_numerator_bound(node.level - 1, m, node, tp, config);
    let num = node.num_past + present + future;
    let corr = node.den_past + (x.conj() * tp.z[pos]).re;
    let den = (corr.abs() + tp.den_future_prefix[pos]).powi(2);
    if num == 0.0 {
        0.0
    } else if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Eigenvalue lower bound on the numerator rows `1..L-1` left open after
/// fixing `x_L = m` below `node` (which sits at level `L + 1`).
///
/// With `b_L` the contribution of the fixed entries to those rows and
/// `v = R_{L-1}^{-1} b_L` (see [`child_center`]), every completion satisfies
/// `||R_{L-1} x + b_L||^2 >= lambda_min ||x + v||^2`, and by symmetry of the
/// alphabet the smallest `||x + v||` equals the distance from `v` to its
/// entrywise nearest alphabet vector. Falls back to 0 when disabled, at the
/// last level, or when the leading block is (numerically) singular.
pub fn future_numerator_bound(
    level: usize,
    m: usize,
    node: &SearchNode,
    tp: &TriangularizedProblem,
    config: &TrickConfig,
) -> f64 {
    if !config.eigen_future || level <= 1 {
        return 0.0;
    }
    let open = level - 1;
    let lam = tp.lambda_min[open];
    if lam <= EIGENBOUND_FLOOR {
        return 0.0;
    }
    let pos = level - 1;
    let dist = match (&node.center, tp.center_weights[pos].as_ref()) {
        (Some(y), Some(w)) => {
            let t = y[pos] + tp.alphabet.point(m);
            alphabet_distance((0..pos).map(|i| y[i] + w[i] * t), &tp.alphabet)
        }
        _ => match child_center(node, m, tp) {
            Some(v) => alphabet_distance(v.into_iter(), &tp.alphabet),
            None => return 0.0,
        },
    };
    lam * dist
}

/// Hooks into the traversal, used by tests and diagnostics.
pub trait SearchObserver {
    /// Called for every child cost evaluation (one visited node).
    fn child_evaluated(&mut self, _tp: &TriangularizedProblem, _node: &SearchNode, _m: usize, _cost: f64) {}

    /// Called at every leaf evaluation with the incrementally accumulated
    /// numerator and the exact objective (`inf` for zero correlation).
    fn leaf_reached(&mut self, _tp: &TriangularizedProblem, _leaf: &SearchNode, _exact: f64) {}
}

struct NoObserver;

impl SearchObserver for NoObserver {}

/// Solves the 1-bit precoding problem exactly.
pub fn bb1_solve(problem: &PrecodingProblem, config: &TrickConfig) -> Result<PrecodeResult> {
    bb1_solve_observed(problem, config, &mut NoObserver)
}

pub fn bb1_solve_observed<O: SearchObserver>(
    problem: &PrecodingProblem,
    config: &TrickConfig,
    observer: &mut O,
) -> Result<PrecodeResult> {
    let start = Instant::now();
    let tp = prepare(problem, config)?;

    let b = tp.antennas();
    let mut search = Search {
        tp: &tp,
        config,
        rho: f64::INFINITY,
        incumbent: None,
        stats: SearchStats::default(),
        observer,
        slots: (0..=b).map(|_| SearchNode::root(&tp)).collect(),
        children: vec![Vec::with_capacity(tp.alphabet.len()); b + 1],
    };

    if config.radius_init {
        // Without a usable Wiener filter (N0 = 0 and H H^H singular) the
        // search simply starts from an infinite radius.
        if let Ok(wf) = quantized_wf_indices(problem) {
            let permuted = tp.perm.gather(&wf);
            if let Ok(value) = cmqp_objective(&tp.alphabet.vector(&permuted), &tp.r, &tp.z) {
                search.rho = value;
                search.incumbent = Some(permuted);
            }
        }
    }

    search.slots[b] = SearchNode::root(&tp);
    search.expand(b + 1);

    let Search {
        incumbent, mut stats, ..
    } = search;
    let best = incumbent.ok_or_else(|| {
        PrecodeError::DegenerateInstance("no leaf has nonzero correlation with the MRT vector".into())
    })?;
    stats.wall_time = start.elapsed();
    PrecodeResult::from_indices(problem, tp.perm.scatter(&best), stats)
}

struct Search<'a, O> {
    tp: &'a TriangularizedProblem,
    config: &'a TrickConfig,
    rho: f64,
    /// Best leaf so far, alphabet indices in permuted order.
    incumbent: Option<Vec<usize>>,
    stats: SearchStats,
    observer: &'a mut O,
    /// `slots[L - 1]` holds the current node at level `L`.
    slots: Vec<SearchNode>,
    /// Surviving children per level, reused across expansions.
    children: Vec<Vec<(f64, usize)>>,
}

impl<O: SearchObserver> Search<'_, O> {
    fn expand(&mut self, level: usize) {
        let tp = self.tp;
        let mut children = std::mem::take(&mut self.children[level - 1]);
        children.clear();
        let root_only_half = level == tp.antennas() + 1 && self.config.preprune;
        {
            let node = &self.slots[level - 1];
            for m in 0..tp.alphabet.len() {
                if root_only_half && m >= tp.alphabet.negation_index(m) {
                    continue;
                }
                let cost = child_cost(node, m, tp, self.config);
                self.stats.nodes_visited += 1;
                self.observer.child_evaluated(tp, node, m, cost);
                if cost <= self.rho {
                    children.push((cost, m));
                }
            }
        }
        children.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

        for &(cost, m) in &children {
            // Radius may have shrunk while exploring earlier siblings.
            if cost > self.rho {
                break;
            }
            let (lower, upper) = self.slots.split_at_mut(level - 1);
            upper[0].extend_into(m, tp, &mut lower[level - 2]);
            if level - 1 == 1 {
                self.visit_leaf();
            } else {
                self.expand(level - 1);
            }
        }
        self.children[level - 1] = children;
    }

    fn visit_leaf(&mut self) {
        let tp = self.tp;
        self.stats.leaves_reached += 1;
        let leaf = &self.slots[0];
        let exact = exact_objective(tp, &leaf.psv);
        self.observer.leaf_reached(tp, leaf, exact);
        if exact < self.rho {
            self.rho = exact;
            match &mut self.incumbent {
                Some(best) => best.clone_from(&leaf.psv),
                None => self.incumbent = Some(leaf.psv.clone()),
            }
            self.stats.radius_updates += 1;
        }
    }
}

/// `||R x||^2 / Re{x^H z}^2` evaluated from scratch; `inf` at zero correlation.
fn exact_objective(tp: &TriangularizedProblem, indices: &[usize]) -> f64 {
    let b = indices.len();
    let mut num = 0.0;
    let mut corr = 0.0;
    for i in 0..b {
        let mut row = C64::new(0.0, 0.0);
        for (j, &m) in indices.iter().enumerate().skip(i) {
            row += tp.r[(i, j)] * tp.alphabet.point(m);
        }
        num += row.norm_sqr();
        corr += (tp.alphabet.point(indices[i]).conj() * tp.z[i]).re;
    }
    if corr == 0.0 {
        f64::INFINITY
    } else {
        num / (corr * corr)
    }
}
