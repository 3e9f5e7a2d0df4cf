//! Reference precoders: exhaustive search, quantized Wiener filter and the
//! unquantized Wiener filter.

use std::time::Instant;

use crate::error::{PrecodeError, Result};
use crate::model::{canonicalize_sign, cmqp_objective, quantize_indices, PrecodeResult, PrecodingProblem, SearchStats};
use crate::numerics::{norm_sqr, ComplexVector};

/// Largest antenna count accepted by [`exhaustive_solve`].
pub const MAX_EXHAUSTIVE_ANTENNAS: usize = 14;

/// Enumerates every alphabet vector with `x_B` restricted to one of each
/// `{x, -x}` pair. Order is lexicographic over alphabet indices with `x_B`
/// outermost; the first strict minimum wins.
///
/// The objective is evaluated from the augmented channel directly, without
/// any triangularization. `nodes_visited` and `leaves_reached` both equal the
/// number of evaluated candidates, see [`exhaustive_leaf_count`].
pub fn exhaustive_solve(problem: &PrecodingProblem) -> Result<PrecodeResult> {
    let b = problem.antennas();
    if b > MAX_EXHAUSTIVE_ANTENNAS {
        return Err(PrecodeError::InstanceTooLarge {
            antennas: b,
            max: MAX_EXHAUSTIVE_ANTENNAS,
        });
    }
    let start = Instant::now();
    let alphabet = problem.alphabet();
    let m = alphabet.len();
    let roots: Vec<usize> = (0..m).filter(|&k| k < alphabet.negation_index(k)).collect();

    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut evaluated = 0u64;
    // digits[b - 1] is the outermost (x_B) digit, counted over `roots`.
    let mut digits = vec![0usize; b];
    loop {
        let mut indices = digits.clone();
        indices[b - 1] = roots[digits[b - 1]];
        evaluated += 1;
        let x = alphabet.vector(&indices);
        if let Ok(v) = cmqp_objective(&x, problem.augmented_channel(), problem.z_mrt()) {
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                best = Some((v, indices));
            }
        }
        // Odometer increment with x_1 fastest.
        let mut pos = 0;
        loop {
            if pos == b {
                let (_, indices) = best.ok_or_else(|| {
                    PrecodeError::DegenerateInstance("no candidate has nonzero correlation with the MRT vector".into())
                })?;
                let stats = SearchStats {
                    nodes_visited: evaluated,
                    leaves_reached: evaluated,
                    radius_updates: 0,
                    wall_time: start.elapsed(),
                };
                return PrecodeResult::from_indices(problem, indices, stats);
            }
            let radix = if pos == b - 1 { roots.len() } else { m };
            digits[pos] += 1;
            if digits[pos] < radix {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Candidates evaluated by [`exhaustive_solve`] for the 1-bit alphabet:
/// `2 * 4^(B-1)`.
pub fn exhaustive_leaf_count(antennas: usize) -> u64 {
    2 * 4u64.pow(antennas as u32 - 1)
}

/// Child-cost evaluations of a tree search that never prunes, counted the
/// same way as the branch-and-bound `nodes_visited`: every node of the
/// 4-ary tree below the virtual root, with the root branching halved when
/// `preprune` is set. Equals `16/3 4^(B-1) - 4/3` or `8/3 4^(B-1) - 2/3`.
pub fn exhaustive_tree_node_count(antennas: usize, preprune: bool) -> u64 {
    let full = (4u64.pow(antennas as u32 + 1) - 4) / 3;
    if preprune {
        full / 2
    } else {
        full
    }
}

/// The literature's exhaustive-search reference count `7/3 4^(B-1) - 4/3`.
pub fn reference_exhaustive_count(antennas: usize) -> u64 {
    (7 * 4u64.pow(antennas as u32 - 1) - 4) / 3
}

/// Alphabet indices of the entrywise quantized Wiener-filter vector.
pub fn quantized_wf_indices(problem: &PrecodingProblem) -> Result<Vec<usize>> {
    Ok(quantize_indices(&problem.z_wf()?, problem.alphabet()))
}

/// Quantized Wiener-filter precoder.
pub fn wf_quantized_precoder(problem: &PrecodingProblem) -> Result<PrecodeResult> {
    let start = Instant::now();
    let indices = quantized_wf_indices(problem)?;
    let mut res = PrecodeResult::from_indices(problem, indices, SearchStats::default())?;
    res.stats.wall_time = start.elapsed();
    Ok(res)
}

/// Unquantized Wiener-filter transmit vector at unit power.
#[derive(Debug, Clone, PartialEq)]
pub struct InfiniteResolution {
    pub x: ComplexVector,
    pub beta: f64,
}

/// Wiener filter without DAC quantization, normalized to `||x|| = 1`.
pub fn wf_infinite_precoder(problem: &PrecodingProblem) -> Result<InfiniteResolution> {
    let z = problem.z_wf()?;
    let norm = norm_sqr(&z).sqrt();
    if norm == 0.0 {
        return Err(PrecodeError::DegenerateInstance("Wiener-filter vector is zero".into()));
    }
    let x: ComplexVector = z.iter().map(|v| v / norm).collect();
    let (x, beta) = canonicalize_sign(&x, problem)?;
    Ok(InfiniteResolution { x, beta })
}
