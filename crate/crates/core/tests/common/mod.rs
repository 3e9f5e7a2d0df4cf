//! Instance generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use bb1_precoder::bb1::{SearchNode, TriangularizedProblem};
use bb1_precoder::model::{Constellation, PrecodingProblem};
use bb1_precoder::numerics::{ComplexMatrix, C64};
use bb1_precoder::sim::{generate_channel, generate_symbols};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Rayleigh channel with QPSK data.
pub fn rayleigh_instance<R: Rng>(rng: &mut R, users: usize, antennas: usize, n0: f64) -> PrecodingProblem {
    let h = generate_channel(rng, users, antennas);
    let (_, s) = generate_symbols(rng, &Constellation::qpsk(), users);
    PrecodingProblem::new(h, s, n0).unwrap()
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<C64> {
    (0..n)
        .map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Random alphabet indices of length `n`.
pub fn random_indices<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..4)).collect()
}

/// Calls `f` with every index vector of length `n` (4-point alphabet).
pub fn for_each_indices(n: usize, mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; n];
    loop {
        f(&idx);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < 4 {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Objective on the triangular system with all terms summed from scratch.
pub fn triangular_objective(tp: &TriangularizedProblem, indices: &[usize]) -> f64 {
    let x = tp.alphabet.vector(indices);
    let rx = tp.r.mul_vec(&x);
    let num: f64 = rx.iter().map(|v| v.norm_sqr()).sum();
    let corr: f64 = x.iter().zip(&tp.z).map(|(a, b)| (a.conj() * b).re).sum();
    if corr == 0.0 {
        f64::INFINITY
    } else {
        num / (corr * corr)
    }
}

/// Smallest objective over every leaf whose entries `x_L..x_B` equal
/// `suffix` (first entry is `x_L`).
pub fn subtree_minimum(tp: &TriangularizedProblem, suffix: &[usize]) -> f64 {
    let b = tp.antennas();
    let open = b - suffix.len();
    let mut best = f64::INFINITY;
    let mut full = vec![0usize; b];
    full[open..].copy_from_slice(suffix);
    for_each_indices(open, |head| {
        full[..open].copy_from_slice(head);
        best = best.min(triangular_objective(tp, &full));
    });
    best
}

/// Smallest `sum_{rows < L-1} |(R x)_row|^2` over completions of `suffix`,
/// where `suffix` fixes `x_L..x_B`.
pub fn future_numerator_minimum(tp: &TriangularizedProblem, suffix: &[usize]) -> f64 {
    let b = tp.antennas();
    let open = b - suffix.len();
    let mut best = f64::INFINITY;
    let mut full = vec![0usize; b];
    full[open..].copy_from_slice(suffix);
    for_each_indices(open, |head| {
        full[..open].copy_from_slice(head);
        let x = tp.alphabet.vector(&full);
        let rx = tp.r.mul_vec(&x);
        let v: f64 = rx[..open].iter().map(|v| v.norm_sqr()).sum();
        best = best.min(v);
    });
    best
}

/// Node reached from the root by fixing `x_B, x_{B-1}, ...` in turn; `path`
/// lists the choices root first.
pub fn node_at(tp: &TriangularizedProblem, path: &[usize]) -> SearchNode {
    path.iter().fold(SearchNode::root(tp), |node, &m| node.extend(m, tp))
}

pub fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
