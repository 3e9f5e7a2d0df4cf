//! Problem-domain types and the closed-form quantities of MSE-optimal
//! quantized precoding.
//!
//! A downlink instance is a channel `H` (U x B), a data vector `s` (length U)
//! and a per-user noise variance `N0`. For a candidate transmit vector `x`
//! and precoding factor `beta` the sum MSE is
//! `||s - beta H x||^2 + beta^2 U N0`. Eliminating `beta` and, for a
//! constant-modulus alphabet, folding the noise term into an augmented channel
//! turns the problem into minimizing `||H_aug x||^2 / Re{x^H z_mrt}^2`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{PrecodeError, Result};
use crate::numerics::{inner, norm_sqr, solve_linear, ComplexMatrix, ComplexVector, C64};

/// Tolerance for the constant-modulus and symmetry checks on an alphabet.
const ALPHABET_TOL: f64 = 1e-12;

/// A finite, symmetric, constant-modulus transmit alphabet for `B` antennas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmitAlphabet {
    antennas: usize,
    points: Vec<C64>,
    /// `negation[m]` is the index of `-points[m]`.
    negation: Vec<usize>,
    /// Half-width of the 1-bit QPSK-like grid, when the alphabet is one.
    one_bit_half_width: Option<f64>,
}

impl TransmitAlphabet {
    /// The 1-bit alphabet `{(±1 ± j) / sqrt(2B)}`, ordered as
    /// `x_m = exp(j pi (m/2 - 1/4)) / sqrt(B)` for `m = 1..4`.
    pub fn one_bit(antennas: usize) -> Self {
        let a = (0.5 / antennas as f64).sqrt();
        let points = vec![C64::new(a, a), C64::new(-a, a), C64::new(-a, -a), C64::new(a, -a)];
        TransmitAlphabet {
            antennas,
            points,
            negation: vec![2, 3, 0, 1],
            one_bit_half_width: Some(a),
        }
    }

    /// Validates an arbitrary alphabet: every point must have squared modulus
    /// `1/B` and the set must be closed under negation.
    pub fn new(antennas: usize, points: Vec<C64>) -> Result<Self> {
        if antennas == 0 || points.is_empty() {
            return Err(PrecodeError::InvalidInput("empty alphabet".into()));
        }
        let modulus = 1.0 / antennas as f64;
        if let Some(p) = points.iter().find(|p| (p.norm_sqr() - modulus).abs() > ALPHABET_TOL) {
            return Err(PrecodeError::InvalidInput(format!(
                "alphabet is not constant modulus: |{p}|^2 != 1/{antennas}"
            )));
        }
        let mut negation = Vec::with_capacity(points.len());
        for p in &points {
            match points.iter().position(|q| (q + p).norm() <= ALPHABET_TOL) {
                Some(k) => negation.push(k),
                None => {
                    return Err(PrecodeError::InvalidInput(format!(
                        "alphabet is not symmetric: -({p}) missing"
                    )))
                }
            }
        }
        Ok(TransmitAlphabet {
            antennas,
            points,
            negation,
            one_bit_half_width: None,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, m: usize) -> C64 {
        self.points[m]
    }

    pub fn negation_index(&self, m: usize) -> usize {
        self.negation[m]
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest_index(&self, z: C64) -> usize {
        let mut best = 0;
        let mut best_d = (self.points[0] - z).norm_sqr();
        for (m, p) in self.points.iter().enumerate().skip(1) {
            let d = (p - z).norm_sqr();
            if d < best_d {
                best = m;
                best_d = d;
            }
        }
        best
    }

    /// Squared distance from `z` to its nearest point.
    pub fn nearest_distance_sqr(&self, z: C64) -> f64 {
        match self.one_bit_half_width {
            Some(a) => (z.re.abs() - a).powi(2) + (z.im.abs() - a).powi(2),
            None => (self.points[self.nearest_index(z)] - z).norm_sqr(),
        }
    }

    pub fn vector(&self, indices: &[usize]) -> ComplexVector {
        indices.iter().map(|&m| self.points[m]).collect()
    }
}

/// A labelled data constellation with unit average energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    points: Vec<C64>,
    bits_per_symbol: usize,
}

impl Constellation {
    /// Gray-labelled QPSK: bits `(b0, b1)` map to `((1-2 b0) + j (1-2 b1)) / sqrt(2)`.
    /// The point index is `2 b0 + b1`.
    pub fn qpsk() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        let points = (0..4)
            .map(|idx| {
                let (b0, b1) = ((idx >> 1) & 1, idx & 1);
                C64::new(a * (1 - 2 * b0) as f64, a * (1 - 2 * b1) as f64)
            })
            .collect();
        Constellation {
            points,
            bits_per_symbol: 2,
        }
    }

    /// Builds a constellation whose point `i` carries the `bits_per_symbol`-bit
    /// label `i` (MSB first).
    pub fn new(points: Vec<C64>) -> Result<Self> {
        let n = points.len();
        if n < 2 || !n.is_power_of_two() {
            return Err(PrecodeError::InvalidInput(format!(
                "constellation size {n} is not a power of two >= 2"
            )));
        }
        for i in 0..n {
            for j in i + 1..n {
                if (points[i] - points[j]).norm() < 1e-12 {
                    return Err(PrecodeError::InvalidInput("duplicate constellation point".into()));
                }
            }
        }
        let energy = norm_sqr(&points) / n as f64;
        if (energy - 1.0).abs() > 1e-9 {
            return Err(PrecodeError::InvalidInput(format!(
                "constellation average energy {energy} != 1"
            )));
        }
        Ok(Constellation {
            points,
            bits_per_symbol: n.trailing_zeros() as usize,
        })
    }

    pub fn points(&self) -> &[C64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn symbol(&self, index: usize) -> C64 {
        self.points[index]
    }

    pub fn label(&self, index: usize) -> Vec<u8> {
        (0..self.bits_per_symbol)
            .rev()
            .map(|k| ((index >> k) & 1) as u8)
            .collect()
    }

    pub fn index_from_bits(&self, bits: &[u8]) -> usize {
        assert_eq!(bits.len(), self.bits_per_symbol);
        bits.iter().fold(0, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn modulate(&self, bits: &[u8]) -> C64 {
        self.points[self.index_from_bits(bits)]
    }

    /// Minimum-distance detection.
    pub fn detect(&self, y: C64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (p - y).norm_sqr();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }
}

/// One downlink precoding instance with its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecodingProblem {
    h: ComplexMatrix,
    s: ComplexVector,
    n0: f64,
    alphabet: TransmitAlphabet,
    h_aug: ComplexMatrix,
    z_mrt: ComplexVector,
}

impl PrecodingProblem {
    /// Builds an instance over the 1-bit alphabet.
    pub fn new(h: ComplexMatrix, s: ComplexVector, n0: f64) -> Result<Self> {
        let alphabet = TransmitAlphabet::one_bit(h.cols());
        Self::with_alphabet(h, s, n0, alphabet)
    }

    pub fn with_alphabet(h: ComplexMatrix, s: ComplexVector, n0: f64, alphabet: TransmitAlphabet) -> Result<Self> {
        if s.len() != h.rows() {
            return Err(PrecodeError::DimensionMismatch(format!(
                "data vector has length {}, channel has {} users",
                s.len(),
                h.rows()
            )));
        }
        if alphabet.antennas() != h.cols() {
            return Err(PrecodeError::DimensionMismatch(format!(
                "alphabet is for {} antennas, channel has {}",
                alphabet.antennas(),
                h.cols()
            )));
        }
        if !n0.is_finite() || n0 < 0.0 {
            return Err(PrecodeError::InvalidInput(format!("noise variance {n0} must be >= 0")));
        }
        if !s.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(PrecodeError::InvalidInput("data vector has non-finite entries".into()));
        }
        if norm_sqr(&s) == 0.0 {
            return Err(PrecodeError::DegenerateInstance("data vector is zero".into()));
        }
        let h_aug = augment_channel(&h, n0);
        let z_mrt = mrt_vector(&h, &s);
        Ok(PrecodingProblem {
            h,
            s,
            n0,
            alphabet,
            h_aug,
            z_mrt,
        })
    }

    pub fn users(&self) -> usize {
        self.h.rows()
    }

    pub fn antennas(&self) -> usize {
        self.h.cols()
    }

    pub fn channel(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn data(&self) -> &[C64] {
        &self.s
    }

    pub fn noise_variance(&self) -> f64 {
        self.n0
    }

    pub fn alphabet(&self) -> &TransmitAlphabet {
        &self.alphabet
    }

    pub fn augmented_channel(&self) -> &ComplexMatrix {
        &self.h_aug
    }

    pub fn z_mrt(&self) -> &[C64] {
        &self.z_mrt
    }

    pub fn z_wf(&self) -> Result<ComplexVector> {
        wf_vector(&self.h, &self.s, self.n0)
    }
}

/// Counters collected by a search.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub nodes_visited: u64,
    pub leaves_reached: u64,
    pub radius_updates: u64,
    pub wall_time: Duration,
}

/// A solved instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrecodeResult {
    pub x: ComplexVector,
    /// Alphabet indices of `x`.
    pub indices: Vec<usize>,
    pub beta: f64,
    pub qp_mse: f64,
    pub cmqp_value: f64,
    pub stats: SearchStats,
}

impl PrecodeResult {
    /// Sign-canonicalizes an alphabet vector and fills in the objectives.
    pub fn from_indices(problem: &PrecodingProblem, indices: Vec<usize>, stats: SearchStats) -> Result<Self> {
        let alphabet = problem.alphabet();
        let x = alphabet.vector(&indices);
        let beta = optimal_beta(&x, problem)?;
        let (indices, x, beta) = if beta > 0.0 {
            (indices, x, beta)
        } else if beta < 0.0 {
            let flipped: Vec<usize> = indices.iter().map(|&m| alphabet.negation_index(m)).collect();
            let fx = alphabet.vector(&flipped);
            let fb = optimal_beta(&fx, problem)?;
            (flipped, fx, fb)
        } else {
            return Err(PrecodeError::DegenerateInstance(
                "optimal precoding factor is zero".into(),
            ));
        };
        let qp_mse = qp_objective(&x, beta, problem);
        let cmqp_value = cmqp_objective(&x, problem.augmented_channel(), problem.z_mrt())?;
        Ok(PrecodeResult {
            x,
            indices,
            beta,
            qp_mse,
            cmqp_value,
            stats,
        })
    }
}

/// Stacks `H` over `sqrt(N0 U) I_B`.
pub fn augment_channel(h: &ComplexMatrix, n0: f64) -> ComplexMatrix {
    let (u, b) = (h.rows(), h.cols());
    let diag = (n0 * u as f64).sqrt();
    ComplexMatrix::from_fn(u + b, b, |i, j| {
        if i < u {
            h[(i, j)]
        } else if i - u == j {
            C64::new(diag, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// Maximal-ratio transmission vector `H^H s`.
pub fn mrt_vector(h: &ComplexMatrix, s: &[C64]) -> ComplexVector {
    h.adjoint_mul_vec(s)
}

/// Wiener-filter vector `H^H (H H^H + U N0 I)^{-1} s`.
pub fn wf_vector(h: &ComplexMatrix, s: &[C64], n0: f64) -> Result<ComplexVector> {
    let u = h.rows();
    let mut gram = h.matmul(&h.adjoint());
    for i in 0..u {
        gram[(i, i)] += C64::new(u as f64 * n0, 0.0);
    }
    let w = solve_linear(&gram, s)?;
    Ok(h.adjoint_mul_vec(&w))
}

/// Entrywise nearest alphabet point (ties to the lowest index).
pub fn quantize_to_alphabet(z: &[C64], alphabet: &TransmitAlphabet) -> ComplexVector {
    z.iter().map(|&v| alphabet.point(alphabet.nearest_index(v))).collect()
}

pub fn quantize_indices(z: &[C64], alphabet: &TransmitAlphabet) -> Vec<usize> {
    z.iter().map(|&v| alphabet.nearest_index(v)).collect()
}

/// `Re{x^H H^H s} / (||H x||^2 + N0 U)`; may be negative.
pub fn optimal_beta(x: &[C64], problem: &PrecodingProblem) -> Result<f64> {
    let hx = problem.channel().mul_vec(x);
    let den = norm_sqr(&hx) + problem.noise_variance() * problem.users() as f64;
    if den == 0.0 {
        return Err(PrecodeError::DegenerateInstance(
            "precoding factor denominator is zero".into(),
        ));
    }
    Ok(inner(x, problem.z_mrt()).re / den)
}

/// `||s - beta H x||^2 + beta^2 U N0`.
pub fn qp_objective(x: &[C64], beta: f64, problem: &PrecodingProblem) -> f64 {
    let hx = problem.channel().mul_vec(x);
    let residual: f64 = problem
        .data()
        .iter()
        .zip(&hx)
        .map(|(s, v)| (s - v * beta).norm_sqr())
        .sum();
    residual + beta * beta * problem.users() as f64 * problem.noise_variance()
}

/// `||R x||^2 / Re{x^H z}^2`. `r` may be `R` or any matrix with the same
/// Gram matrix (e.g. the augmented channel).
pub fn cmqp_objective(x: &[C64], r: &ComplexMatrix, z: &[C64]) -> Result<f64> {
    let corr = inner(x, z).re;
    if corr == 0.0 {
        return Err(PrecodeError::ZeroCorrelation);
    }
    Ok(norm_sqr(&r.mul_vec(x)) / (corr * corr))
}

/// Flips `x` if needed so that its optimal precoding factor is positive.
pub fn canonicalize_sign(x: &[C64], problem: &PrecodingProblem) -> Result<(ComplexVector, f64)> {
    let beta = optimal_beta(x, problem)?;
    if beta > 0.0 {
        Ok((x.to_vec(), beta))
    } else if beta < 0.0 {
        Ok((x.iter().map(|v| -v).collect(), -beta))
    } else {
        Err(PrecodeError::DegenerateInstance(
            "optimal precoding factor is zero".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar_problem(h: f64, s: f64, n0: f64) -> PrecodingProblem {
        PrecodingProblem::new(ComplexMatrix::from_real_rows(&[&[h]]).unwrap(), vec![c(s, 0.0)], n0).unwrap()
    }

    #[test]
    fn one_bit_matches_phase_formula() {
        for b in 1..6 {
            let a = TransmitAlphabet::one_bit(b);
            for m in 1..=4 {
                let expected = C64::from_polar(1.0 / (b as f64).sqrt(), PI * (m as f64 / 2.0 - 0.25));
                assert!((a.point(m - 1) - expected).norm() < 1e-15);
                assert!((a.point(a.negation_index(m - 1)) + a.point(m - 1)).norm() < 1e-15);
            }
            let generic = TransmitAlphabet::new(b, a.points().to_vec()).unwrap();
            for k in 0..50 {
                let z = C64::from_polar(0.05 * k as f64, 0.37 * k as f64);
                let d = a.nearest_distance_sqr(z);
                assert!((d - generic.nearest_distance_sqr(z)).abs() < 1e-14);
                assert!((d - (a.point(a.nearest_index(z)) - z).norm_sqr()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn rejects_non_cm_or_asymmetric_alphabet() {
        assert!(TransmitAlphabet::new(1, vec![c(1.0, 0.0), c(-0.5, 0.0)]).is_err());
        assert!(TransmitAlphabet::new(1, vec![c(1.0, 0.0), c(0.0, 1.0)]).is_err());
        assert!(TransmitAlphabet::new(1, vec![c(1.0, 0.0), c(-1.0, 0.0)]).is_ok());
    }

    #[test]
    fn augment_channel_scalar() {
        let h = ComplexMatrix::from_real_rows(&[&[1.0]]).unwrap();
        let ha = augment_channel(&h, 1.0);
        assert_eq!(ha, ComplexMatrix::from_real_rows(&[&[1.0], &[1.0]]).unwrap());
        let ha0 = augment_channel(&h, 0.0);
        assert_eq!(ha0[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn mrt_conjugate_transpose() {
        let h = ComplexMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 1.0)]]).unwrap();
        assert_eq!(mrt_vector(&h, &[c(1.0, 0.0)]), vec![c(1.0, 0.0), c(0.0, -1.0)]);
        assert_eq!(mrt_vector(&h, &[c(0.0, 0.0)]), vec![c(0.0, 0.0); 2]);
    }

    #[test]
    fn wf_scalar() {
        let h = ComplexMatrix::from_real_rows(&[&[1.0]]).unwrap();
        let z = wf_vector(&h, &[c(1.0, 0.0)], 1.0).unwrap();
        assert!((z[0] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn wf_singular_without_noise() {
        // Two users, one antenna: H H^H has rank one.
        let h = ComplexMatrix::from_real_rows(&[&[1.0], &[1.0]]).unwrap();
        let err = wf_vector(&h, &[c(1.0, 0.0), c(1.0, 0.0)], 0.0).unwrap_err();
        assert!(matches!(err, PrecodeError::SingularMatrix { .. }));
    }

    #[test]
    fn quantize_cases_and_ties() {
        let a = TransmitAlphabet::one_bit(1);
        assert_eq!(
            quantize_to_alphabet(&[c(2.0, -1.0)], &a),
            vec![c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)]
        );
        assert_eq!(quantize_indices(&[c(1.0, 0.0)], &a), vec![0]);
        assert_eq!(quantize_indices(&[c(0.0, 0.0)], &a), vec![0]);
    }

    #[test]
    fn beta_examples() {
        // Hx = s with N0 = 0.
        let p = scalar_problem(1.0, FRAC_1_SQRT_2, 0.0);
        let x = vec![c(FRAC_1_SQRT_2, 0.0)];
        assert!((optimal_beta(&x, &p).unwrap() - 1.0).abs() < 1e-15);

        let p = scalar_problem(1.0, 2.0, 0.0);
        let x = vec![c(FRAC_1_SQRT_2, FRAC_1_SQRT_2)];
        let beta = optimal_beta(&x, &p).unwrap();
        assert!((beta - SQRT_2).abs() < 1e-14);
        assert!((qp_objective(&x, beta, &p) - 2.0).abs() < 1e-14);
        // Grid minimization of the 1-D objective agrees with the closed form.
        let grid_best = (0..=40000)
            .map(|k| k as f64 * 1e-4)
            .map(|b| qp_objective(&x, b, &p))
            .fold(f64::INFINITY, f64::min);
        assert!(grid_best >= 2.0 - 1e-12 && grid_best - 2.0 < 1e-7);

        let neg: Vec<C64> = x.iter().map(|v| -v).collect();
        assert_eq!(optimal_beta(&neg, &p).unwrap(), -beta);
        assert_eq!(qp_objective(&x, 0.0, &p), 4.0);
    }

    #[test]
    fn cmqp_two_antenna_example() {
        let h = ComplexMatrix::from_real_rows(&[&[1.0, 1.0]]).unwrap();
        let r = ComplexMatrix::from_real_rows(&[&[1.0, 1.0], &[0.0, 0.0]]).unwrap();
        let z = mrt_vector(&h, &[c(1.0, 0.0)]);
        let x = vec![c(0.5, 0.5), c(0.5, -0.5)];
        assert!((cmqp_objective(&x, &r, &z).unwrap() - 1.0).abs() < 1e-15);
        let x = vec![c(0.5, 0.5), c(0.5, 0.5)];
        assert!((cmqp_objective(&x, &r, &z).unwrap() - 2.0).abs() < 1e-15);
        let x = vec![c(0.5, 0.5), c(-0.5, -0.5)];
        assert_eq!(cmqp_objective(&x, &r, &z), Err(PrecodeError::ZeroCorrelation));
    }

    #[test]
    fn canonicalize_flips_negative_beta() {
        let p = scalar_problem(1.0, 1.0, 0.5);
        let x = vec![c(-FRAC_1_SQRT_2, FRAC_1_SQRT_2)];
        let (x2, b2) = canonicalize_sign(&x, &p).unwrap();
        assert_eq!(x2, vec![c(FRAC_1_SQRT_2, -FRAC_1_SQRT_2)]);
        assert!((b2 + optimal_beta(&x, &p).unwrap()).abs() < 1e-15);
        let (x3, _) = canonicalize_sign(&x2, &p).unwrap();
        assert_eq!(x3, x2);
    }

    #[test]
    fn zero_data_vector_rejected() {
        let h = ComplexMatrix::from_real_rows(&[&[1.0]]).unwrap();
        let err = PrecodingProblem::new(h, vec![c(0.0, 0.0)], 1.0).unwrap_err();
        assert!(matches!(err, PrecodeError::DegenerateInstance(_)));
    }

    #[test]
    fn qpsk_labels_roundtrip() {
        let q = Constellation::qpsk();
        for idx in 0..4 {
            let bits = q.label(idx);
            assert_eq!(q.index_from_bits(&bits), idx);
            let b0 = bits[0] as f64;
            let b1 = bits[1] as f64;
            let expected = c((1.0 - 2.0 * b0) * FRAC_1_SQRT_2, (1.0 - 2.0 * b1) * FRAC_1_SQRT_2);
            assert_eq!(q.modulate(&bits), expected);
            assert_eq!(q.detect(expected * 3.0), idx);
        }
        assert!(Constellation::new(q.points().to_vec()).is_ok());
    }
}
