//! Dense complex linear algebra for the precoders.
//!
//! Only what the search needs: QR with a real nonnegative diagonal (plain and
//! with minimum-norm column pivoting), triangular back-substitution, and the
//! smallest eigenvalue of a small Hermitian Gram matrix.

use std::ops::{Index, IndexMut};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PrecodeError, Result};

pub type C64 = Complex64;

/// Vectors are plain slices of complex numbers; this alias names the role.
pub type ComplexVector = Vec<C64>;

/// Absolute pivot magnitude below which a triangular system is singular.
pub const SINGULAR_TOL: f64 = 1e-12;

/// Default absolute accuracy for `min_eigenvalue_hermitian`.
pub const EIGEN_TOL: f64 = 1e-10;

/// Row-major dense complex matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PrecodeError::DimensionMismatch(format!(
                "matrix must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if data.len() != rows * cols {
            return Err(PrecodeError::DimensionMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !data.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(PrecodeError::InvalidInput("matrix has non-finite entries".into()));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(PrecodeError::DimensionMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Real-valued convenience constructor, mostly for fixtures.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&v| C64::new(v, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> ComplexVector {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn mul_vec(&self, x: &[C64]) -> ComplexVector {
        assert_eq!(x.len(), self.cols, "mul_vec dimension mismatch");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `self^H * y`.
    pub fn adjoint_mul_vec(&self, y: &[C64]) -> ComplexVector {
        assert_eq!(y.len(), self.rows, "adjoint_mul_vec dimension mismatch");
        let mut out = vec![C64::new(0.0, 0.0); self.cols];
        for (i, yi) in y.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += a.conj() * yi;
            }
        }
        out
    }

    pub fn matmul(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, other.rows, "matmul dimension mismatch");
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> ComplexMatrix {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        }
    }

    /// Leading `k x k` block.
    pub fn leading_block(&self, k: usize) -> ComplexMatrix {
        Self::from_fn(k, k, |i, j| self[(i, j)])
    }

    pub fn is_upper_triangular(&self, tol: f64) -> bool {
        (0..self.rows).all(|i| (0..self.cols.min(i)).all(|j| self[(i, j)].norm() <= tol))
    }

    fn swap_columns(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.data.swap(i * self.cols + a, i * self.cols + b);
        }
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[i * self.cols + j]
    }
}

pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Column permutation. Column `i` of `A·P` is column `forward[i]` of `A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    forward: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Permutation {
            forward: (0..n).collect(),
        }
    }

    pub fn from_forward(forward: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; forward.len()];
        for &f in &forward {
            if f >= forward.len() || seen[f] {
                return Err(PrecodeError::InvalidInput(format!("not a permutation: {forward:?}")));
            }
            seen[f] = true;
        }
        Ok(Permutation { forward })
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.forward.iter().enumerate().all(|(i, &f)| i == f)
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.forward.len()];
        for (i, &f) in self.forward.iter().enumerate() {
            inv[f] = i;
        }
        Permutation { forward: inv }
    }

    /// Reorders original-order entries into permuted order: `out[i] = v[forward[i]]`.
    pub fn gather<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.forward.len());
        self.forward.iter().map(|&f| v[f].clone()).collect()
    }

    /// Inverse of `gather`: `out[forward[i]] = v[i]`.
    pub fn scatter<T: Clone>(&self, v: &[T]) -> Vec<T> {
        assert_eq!(v.len(), self.forward.len());
        let mut out = v.to_vec();
        for (i, &f) in self.forward.iter().enumerate() {
            out[f] = v[i].clone();
        }
        out
    }

    pub fn apply_to_columns(&self, a: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(a.cols(), self.forward.len());
        ComplexMatrix::from_fn(a.rows(), a.cols(), |i, j| a[(i, self.forward[j])])
    }
}

/// Thin QR factorization `A = Q R` with `R` carrying a real nonnegative diagonal.
pub fn qr_decompose(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let (q, r, _) = householder_qr(a, false)?;
    Ok((q, r))
}

/// Sorted QR: at every step the remaining column with the smallest residual
/// norm is taken next (ties go to the lowest original column index), so the
/// diagonal of `R` tends to come out ascending. Returns `A P = Q R`.
pub fn sorted_qr(a: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix, Permutation)> {
    householder_qr(a, true)
}

fn householder_qr(a: &ComplexMatrix, pivot: bool) -> Result<(ComplexMatrix, ComplexMatrix, Permutation)> {
    let (m, n) = (a.rows(), a.cols());
    if m < n {
        return Err(PrecodeError::DimensionMismatch(format!(
            "QR needs rows >= cols, got {m}x{n}"
        )));
    }
    let zero = C64::new(0.0, 0.0);
    let mut w = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    // Householder vectors; v acts on rows k.. of step k.
    let mut reflectors: Vec<Option<(Vec<C64>, f64)>> = Vec::with_capacity(n);

    for k in 0..n {
        if pivot {
            let residual = |j: usize| (k..m).map(|i| w[(i, j)].norm_sqr()).sum::<f64>();
            let mut best = k;
            let mut best_norm = residual(k);
            for j in k + 1..n {
                let r = residual(j);
                if r < best_norm || (r == best_norm && perm[j] < perm[best]) {
                    best = j;
                    best_norm = r;
                }
            }
            w.swap_columns(k, best);
            perm.swap(k, best);
        }

        let x: Vec<C64> = (k..m).map(|i| w[(i, k)]).collect();
        let norm = norm_sqr(&x).sqrt();
        if norm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let phase = if x[0].norm() == 0.0 {
            C64::new(1.0, 0.0)
        } else {
            x[0] / x[0].norm()
        };
        let alpha = -phase * norm;
        let mut v = x;
        v[0] -= alpha;
        let vnorm2 = norm_sqr(&v);

        w[(k, k)] = alpha;
        for i in k + 1..m {
            w[(i, k)] = zero;
        }
        for j in k + 1..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * w[(k + t, j)]).sum();
            let scale = dot * (2.0 / vnorm2);
            for (t, vt) in v.iter().enumerate() {
                w[(k + t, j)] -= vt * scale;
            }
        }
        reflectors.push(Some((v, vnorm2)));
    }

    let mut r = ComplexMatrix::from_fn(n, n, |i, j| if i <= j { w[(i, j)] } else { zero });

    // Q = H_1 ... H_n [I_n; 0]
    let mut q = ComplexMatrix::from_fn(m, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { zero });
    for (k, refl) in reflectors.iter().enumerate().rev() {
        let Some((v, vnorm2)) = refl else { continue };
        for j in 0..n {
            let dot: C64 = v.iter().enumerate().map(|(t, vt)| vt.conj() * q[(k + t, j)]).sum();
            if dot == zero {
                continue;
            }
            let scale = dot * (2.0 / vnorm2);
            for (t, vt) in v.iter().enumerate() {
                q[(k + t, j)] -= vt * scale;
            }
        }
    }

    // Absorb diagonal phases into Q so that R_kk = |R_kk|.
    for k in 0..n {
        let d = r[(k, k)];
        let mag = d.norm();
        if mag == 0.0 {
            continue;
        }
        let ph = d / mag;
        for j in k..n {
            r[(k, j)] *= ph.conj();
        }
        r[(k, k)] = C64::new(mag, 0.0);
        for i in 0..m {
            q[(i, k)] *= ph;
        }
    }

    Ok((q, r, Permutation { forward: perm }))
}

/// Solves `R x = b` for upper-triangular `R`.
pub fn back_substitute(r: &ComplexMatrix, b: &[C64]) -> Result<ComplexVector> {
    back_substitute_with_tol(r, b, SINGULAR_TOL)
}

pub fn back_substitute_with_tol(r: &ComplexMatrix, b: &[C64], tol: f64) -> Result<ComplexVector> {
    if r.cols() != r.rows() {
        return Err(PrecodeError::DimensionMismatch(format!(
            "back substitution needs square R, got {}x{}",
            r.rows(),
            r.cols()
        )));
    }
    back_substitute_leading(r, r.rows(), b, tol)
}

/// Back-substitution against the leading `size x size` block of `r`.
pub fn back_substitute_leading(r: &ComplexMatrix, size: usize, b: &[C64], tol: f64) -> Result<ComplexVector> {
    if size > r.rows() || size > r.cols() || b.len() != size {
        return Err(PrecodeError::DimensionMismatch(format!(
            "leading block {size} of a {}x{} matrix with rhs of length {}",
            r.rows(),
            r.cols(),
            b.len()
        )));
    }
    let mut x = vec![C64::new(0.0, 0.0); size];
    for i in (0..size).rev() {
        let pivot = r[(i, i)];
        if pivot.norm() < tol {
            return Err(PrecodeError::SingularMatrix {
                index: i,
                magnitude: pivot.norm(),
            });
        }
        let acc: C64 = (i + 1..size).map(|j| r[(i, j)] * x[j]).sum();
        x[i] = (b[i] - acc) / pivot;
    }
    Ok(x)
}

/// Solves a square system through QR and back-substitution.
pub fn solve_linear(a: &ComplexMatrix, b: &[C64]) -> Result<ComplexVector> {
    if a.rows() != a.cols() {
        return Err(PrecodeError::DimensionMismatch(
            "solve_linear needs a square matrix".into(),
        ));
    }
    let (q, r) = qr_decompose(a)?;
    back_substitute(&r, &q.adjoint_mul_vec(b))
}

/// Smallest eigenvalue of a Hermitian positive semi-definite matrix, clamped
/// to be nonnegative.
///
/// The Hermitian matrix `A + jB` is embedded as the real symmetric
/// `[[A, -B], [B, A]]`, which has the same spectrum with doubled
/// multiplicities, and diagonalized by cyclic Jacobi rotations until the
/// off-diagonal Frobenius mass is below `tol / 100`.
pub fn min_eigenvalue_hermitian(g: &ComplexMatrix, tol: f64) -> Result<f64> {
    let n = g.rows();
    if g.cols() != n {
        return Err(PrecodeError::DimensionMismatch(format!(
            "eigenvalue needs a square matrix, got {}x{}",
            g.rows(),
            g.cols()
        )));
    }
    let scale = g.data.iter().map(|z| z.norm()).fold(1.0_f64, f64::max);
    let mut asym = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            asym = asym.max((g[(i, j)] - g[(j, i)].conj()).norm());
        }
    }
    if asym > tol * scale {
        return Err(PrecodeError::NotHermitian { asymmetry: asym });
    }

    let dim = 2 * n;
    let mut m = vec![0.0_f64; dim * dim];
    for i in 0..n {
        for j in 0..n {
            let h = 0.5 * (g[(i, j)] + g[(j, i)].conj());
            m[i * dim + j] = h.re;
            m[i * dim + n + j] = -h.im;
            m[(n + i) * dim + j] = h.im;
            m[(n + i) * dim + n + j] = h.re;
        }
    }

    let total: f64 = m.iter().map(|v| v * v).sum::<f64>().sqrt();
    let target = (tol * 1e-2).max(f64::EPSILON * total);
    for _sweep in 0..100 {
        let off: f64 = (0..dim)
            .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * dim + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..dim {
            for q in p + 1..dim {
                let apq = m[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * dim + p];
                let aqq = m[q * dim + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                m[p * dim + p] = app - t * apq;
                m[q * dim + q] = aqq + t * apq;
                m[p * dim + q] = 0.0;
                m[q * dim + p] = 0.0;
                for k in 0..dim {
                    if k == p || k == q {
                        continue;
                    }
                    let gk = m[k * dim + p];
                    let hk = m[k * dim + q];
                    let np = gk - s * (hk + gk * tau);
                    let nq = hk + s * (gk - hk * tau);
                    m[k * dim + p] = np;
                    m[p * dim + k] = np;
                    m[k * dim + q] = nq;
                    m[q * dim + k] = nq;
                }
            }
        }
    }

    let min = (0..dim).map(|i| m[i * dim + i]).fold(f64::INFINITY, f64::min);
    Ok(min.max(0.0))
}
