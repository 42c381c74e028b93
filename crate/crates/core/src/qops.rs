//! Dense complex operator algebra on finite-dimensional tensor-product spaces.
//!
//! Every operator is a square [`Operator`] (an `nalgebra` dense complex matrix).
//! Tensor factors are ordered most-significant first, so that the index of a
//! product basis state `|i_1, ..., i_n>` is `((i_1 * d_2 + i_2) * d_3 + ...)`.
//! This is the ordering produced by [`kron`].
//!
//! Vectorization is column stacking: `vec(A X B) = (B^T ⊗ A) vec(X)`.
//! All superoperator matrices in this crate rely on that identity.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type Operator = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QopsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid tensor factor dimensions {0:?}")]
    InvalidDims(Vec<usize>),
    #[error("factor index {index} out of range for {count} factors")]
    FactorOutOfRange { index: usize, count: usize },
    #[error("vector of length {0} cannot be devectorized (not a perfect square)")]
    NotPerfectSquare(usize),
    #[error("operator is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("not a density operator: {0}")]
    NotDensity(String),
}

/// Dimensions of the tensor factors of a composite Hilbert space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HilbertDims {
    dims: Vec<usize>,
}

impl HilbertDims {
    pub fn new(dims: Vec<usize>) -> Result<Self, QopsError> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(QopsError::InvalidDims(dims));
        }
        Ok(Self { dims })
    }

    pub fn factors(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    /// Digits of a flat index, most significant factor first.
    fn digits(&self, mut index: usize, out: &mut [usize]) {
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
    }

    fn compose(&self, digits: &[usize]) -> usize {
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    fn check_factor(&self, index: usize) -> Result<(), QopsError> {
        if index >= self.dims.len() {
            Err(QopsError::FactorOutOfRange { index, count: self.dims.len() })
        } else {
            Ok(())
        }
    }
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    a.kronecker(b)
}

/// Kronecker product of a list of operators, left to right.
pub fn kron_all<'a>(ops: impl IntoIterator<Item = &'a Operator>) -> Operator {
    ops.into_iter()
        .fold(Operator::from_element(1, 1, ONE), |acc, op| acc.kronecker(op))
}

pub fn identity(dim: usize) -> Operator {
    Operator::identity(dim, dim)
}

pub fn zeros(dim: usize) -> Operator {
    Operator::zeros(dim, dim)
}

/// `|i><j|` in dimension `dim`.
pub fn matrix_unit(dim: usize, i: usize, j: usize) -> Operator {
    let mut m = zeros(dim);
    m[(i, j)] = ONE;
    m
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a * b - b * a
}

pub fn anticommutator(a: &Operator, b: &Operator) -> Operator {
    a * b + b * a
}

pub fn trace(x: &Operator) -> C64 {
    x.trace()
}

pub fn fro_norm(x: &Operator) -> f64 {
    x.norm()
}

pub fn hermitian_part(x: &Operator) -> Operator {
    (x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// `‖X − X†‖_F ≤ tol · max(1, ‖X‖_F)`.
pub fn is_hermitian(x: &Operator, tol: f64) -> bool {
    x.is_square() && (x - x.adjoint()).norm() <= tol * x.norm().max(1.0)
}

/// Smallest eigenvalue of the Hermitian part of `x`.
pub fn min_hermitian_eigenvalue(x: &Operator) -> f64 {
    hermitian_part(x)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn trace_norm(x: &Operator) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.singular_values().iter().sum()
}

/// Column-stacking vectorization.
pub fn vectorize(x: &Operator) -> DVector<C64> {
    DVector::from_column_slice(x.as_slice())
}

pub fn devectorize(v: &DVector<C64>) -> Result<Operator, QopsError> {
    let n = v.len();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n {
        return Err(QopsError::NotPerfectSquare(n));
    }
    Ok(Operator::from_column_slice(d, d, v.as_slice()))
}

/// Partial trace keeping the factors listed in `keep` (in ascending order).
pub fn partial_trace(x: &Operator, dims: &HilbertDims, keep: &[usize]) -> Result<Operator, QopsError> {
    if !x.is_square() {
        return Err(QopsError::NotSquare { rows: x.nrows(), cols: x.ncols() });
    }
    if x.nrows() != dims.total() {
        return Err(QopsError::DimensionMismatch { expected: dims.total(), found: x.nrows() });
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    for &k in &keep {
        dims.check_factor(k)?;
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let kept_dims = HilbertDims {
        dims: keep.iter().map(|&k| dims.dims[k]).collect::<Vec<_>>(),
    };
    let traced_dims = HilbertDims {
        dims: traced.iter().map(|&k| dims.dims[k]).collect::<Vec<_>>(),
    };
    let out_dim = if keep.is_empty() { 1 } else { kept_dims.total() };
    let sum_dim = if traced.is_empty() { 1 } else { traced_dims.total() };

    let n = dims.len();
    let mut out = zeros(out_dim);
    let mut row = vec![0usize; n];
    let mut col = vec![0usize; n];
    let mut kd = vec![0usize; keep.len()];
    let mut td = vec![0usize; traced.len()];
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc = ZERO;
            for t in 0..sum_dim {
                if !keep.is_empty() {
                    kept_dims.digits(a, &mut kd);
                    for (slot, &k) in kd.iter().zip(&keep) {
                        row[k] = *slot;
                    }
                    kept_dims.digits(b, &mut kd);
                    for (slot, &k) in kd.iter().zip(&keep) {
                        col[k] = *slot;
                    }
                }
                if !traced.is_empty() {
                    traced_dims.digits(t, &mut td);
                    for (slot, &k) in td.iter().zip(&traced) {
                        row[k] = *slot;
                        col[k] = *slot;
                    }
                }
                acc += x[(dims.compose(&row), dims.compose(&col))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(out)
}

/// Place `op`, acting on the ordered tensor product of `factors`, into the
/// full space described by `dims` (identity on every other factor).
pub fn embed(op: &Operator, dims: &HilbertDims, factors: &[usize]) -> Result<Operator, QopsError> {
    for &f in factors {
        dims.check_factor(f)?;
    }
    let sub = HilbertDims::new(factors.iter().map(|&f| dims.dims[f]).collect())?;
    if op.nrows() != sub.total() || op.ncols() != sub.total() {
        return Err(QopsError::DimensionMismatch { expected: sub.total(), found: op.nrows() });
    }
    let total = dims.total();
    let n = dims.len();
    let mut out = zeros(total);
    let mut rd = vec![0usize; n];
    let mut cd = vec![0usize; n];
    let mut rs = vec![0usize; factors.len()];
    let mut cs = vec![0usize; factors.len()];
    for r in 0..total {
        dims.digits(r, &mut rd);
        for c in 0..total {
            dims.digits(c, &mut cd);
            let spectator_match = (0..n).all(|i| factors.contains(&i) || rd[i] == cd[i]);
            if !spectator_match {
                continue;
            }
            for (j, &f) in factors.iter().enumerate() {
                rs[j] = rd[f];
                cs[j] = cd[f];
            }
            out[(r, c)] = op[(sub.compose(&rs), sub.compose(&cs))];
        }
    }
    Ok(out)
}

/// Density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    op: Operator,
}

impl DensityOperator {
    pub const HERMITIAN_TOL: f64 = 1e-12;
    pub const TRACE_TOL: f64 = 1e-12;
    pub const PSD_TOL: f64 = 1e-10;

    pub fn new(op: Operator) -> Result<Self, QopsError> {
        if !op.is_square() {
            return Err(QopsError::NotSquare { rows: op.nrows(), cols: op.ncols() });
        }
        let herm_defect = (&op - op.adjoint()).norm();
        if herm_defect > Self::HERMITIAN_TOL * op.norm().max(f64::MIN_POSITIVE) {
            return Err(QopsError::NotDensity(format!("hermiticity defect {herm_defect:.3e}")));
        }
        let tr = op.trace();
        if (tr - ONE).norm() > Self::TRACE_TOL {
            return Err(QopsError::NotDensity(format!("trace {tr}")));
        }
        let min_eig = min_hermitian_eigenvalue(&op);
        if min_eig < -Self::PSD_TOL {
            return Err(QopsError::NotDensity(format!("negative eigenvalue {min_eig:.3e}")));
        }
        Ok(Self { op })
    }

    /// Hermitizes and renormalizes before validating.
    pub fn from_approximate(op: &Operator) -> Result<Self, QopsError> {
        let h = hermitian_part(op);
        let tr = h.trace();
        Self::new(h / tr)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { op: identity(dim) / C64::new(dim as f64, 0.0) }
    }

    /// `|psi><psi|` for a normalized copy of `psi`.
    pub fn pure(psi: &DVector<C64>) -> Result<Self, QopsError> {
        let n = psi.norm();
        if n == 0.0 {
            return Err(QopsError::NotDensity("zero state vector".into()));
        }
        let v = psi / C64::new(n, 0.0);
        Self::new(&v * v.adjoint())
    }

    pub fn basis_state(dim: usize, index: usize) -> Self {
        Self { op: matrix_unit(dim, index, index) }
    }

    pub fn dim(&self) -> usize {
        self.op.nrows()
    }

    pub fn as_operator(&self) -> &Operator {
        &self.op
    }

    pub fn into_operator(self) -> Operator {
        self.op
    }

    pub fn purity(&self) -> f64 {
        (&self.op * &self.op).trace().re
    }
}

/// Standard single-mode and qubit operators.
///
/// Qubit basis order is `(|e>, |g>)`: `σz = diag(1, −1)` and `σ₋ = |g><e|`.
pub mod ops {
    use super::*;

    pub fn sigma_minus() -> Operator {
        let mut m = zeros(2);
        m[(1, 0)] = ONE;
        m
    }

    pub fn sigma_plus() -> Operator {
        sigma_minus().adjoint()
    }

    pub fn sigma_x() -> Operator {
        Operator::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn sigma_y() -> Operator {
        Operator::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
    }

    pub fn sigma_z() -> Operator {
        Operator::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    /// Truncated annihilation operator on `dim` Fock levels.
    pub fn annihilation(dim: usize) -> Operator {
        let mut a = zeros(dim);
        for n in 1..dim {
            a[(n - 1, n)] = C64::new((n as f64).sqrt(), 0.0);
        }
        a
    }

    pub fn number(dim: usize) -> Operator {
        Operator::from_diagonal(&DVector::from_fn(dim, |n, _| C64::new(n as f64, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ops::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample(dim: usize, seed: u64) -> Operator {
        // Small deterministic generator, enough for algebraic identities.
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        Operator::from_fn(dim, dim, |_, _| c(next(), next()))
    }

    #[test]
    fn kron_identity_and_diagonal() {
        assert_eq!(kron(&identity(2), &identity(2)), identity(4));
        let z = kron(&sigma_z(), &identity(2));
        let expected = Operator::from_diagonal(&DVector::from_vec(vec![ONE, ONE, -ONE, -ONE]));
        assert_eq!(z, expected);
    }

    #[test]
    fn kron_mixed_product() {
        let (a, b, cc, d) = (sample(2, 1), sample(2, 2), sample(2, 3), sample(2, 4));
        let lhs = kron(&a, &b) * kron(&cc, &d);
        let rhs = kron(&(&a * &cc), &(&b * &d));
        assert!((lhs - rhs).norm() < 1e-13);
    }

    #[test]
    fn kron_index_convention() {
        let a = sample(2, 5);
        let b = sample(3, 6);
        let k = kron(&a, &b);
        for i in 0..2 {
            for j in 0..2 {
                for p in 0..3 {
                    for q in 0..3 {
                        assert_eq!(k[(i * 3 + p, j * 3 + q)], a[(i, j)] * b[(p, q)]);
                    }
                }
            }
        }
    }

    #[test]
    fn partial_trace_product_state() {
        let ra = DensityOperator::from_approximate(&(sample(2, 7) * sample(2, 7).adjoint())).unwrap();
        let rb = DensityOperator::from_approximate(&(sample(3, 8) * sample(3, 8).adjoint())).unwrap();
        let dims = HilbertDims::new(vec![2, 3]).unwrap();
        let x = kron(ra.as_operator(), rb.as_operator());
        let out = partial_trace(&x, &dims, &[1]).unwrap();
        assert!((out - rb.as_operator()).norm() < 1e-14);
        let out = partial_trace(&x, &dims, &[0]).unwrap();
        assert!((out - ra.as_operator()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_over_everything() {
        let x = sample(6, 9);
        let dims = HilbertDims::new(vec![2, 3]).unwrap();
        let out = partial_trace(&x, &dims, &[]).unwrap();
        assert_eq!(out.shape(), (1, 1));
        assert!((out[(0, 0)] - x.trace()).norm() < 1e-14);
    }

    #[test]
    fn partial_trace_bell_state() {
        let s = 1.0 / 2f64.sqrt();
        let psi = DVector::from_vec(vec![c(s, 0.0), ZERO, ZERO, c(s, 0.0)]);
        let rho = DensityOperator::pure(&psi).unwrap();
        let dims = HilbertDims::new(vec![2, 2]).unwrap();
        let out = partial_trace(rho.as_operator(), &dims, &[1]).unwrap();
        assert!((out - identity(2) * c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn partial_trace_rejects_mismatch() {
        let dims = HilbertDims::new(vec![2, 2]).unwrap();
        assert!(matches!(
            partial_trace(&identity(3), &dims, &[0]),
            Err(QopsError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            partial_trace(&identity(4), &dims, &[2]),
            Err(QopsError::FactorOutOfRange { .. })
        ));
    }

    #[test]
    fn partial_trace_three_factors_middle() {
        let (a, b, cc) = (sample(2, 10), sample(3, 11), sample(2, 12));
        let dims = HilbertDims::new(vec![2, 3, 2]).unwrap();
        let x = kron_all([&a, &b, &cc]);
        let out = partial_trace(&x, &dims, &[0, 2]).unwrap();
        let expected = kron(&a, &cc) * b.trace();
        assert!((out - expected).norm() < 1e-12);
    }

    #[test]
    fn cyclic_consistency_on_traced_factor() {
        let x = sample(6, 13);
        let y = sample(3, 14);
        let dims = HilbertDims::new(vec![2, 3]).unwrap();
        let iy = kron(&identity(2), &y);
        let lhs = partial_trace(&(&x * &iy), &dims, &[0]).unwrap();
        let rhs = partial_trace(&(&iy * &x), &dims, &[0]).unwrap();
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn vectorize_column_stacking() {
        let v = vectorize(&identity(2));
        assert_eq!(v.as_slice(), &[ONE, ZERO, ZERO, ONE]);
        let x = sample(3, 15);
        assert_eq!(devectorize(&vectorize(&x)).unwrap(), x);
        assert!(matches!(
            devectorize(&DVector::from_element(5, ONE)),
            Err(QopsError::NotPerfectSquare(5))
        ));
    }

    #[test]
    fn vectorize_sandwich_identity() {
        for seed in 0..5 {
            let (a, x, b) = (sample(3, 20 + seed), sample(3, 30 + seed), sample(3, 40 + seed));
            let lhs = vectorize(&(&a * &x * &b));
            let rhs = kron(&b.transpose(), &a) * vectorize(&x);
            assert!((lhs - rhs).norm() < 1e-13);
        }
    }

    #[test]
    fn trace_norm_examples() {
        assert_eq!(trace_norm(&zeros(3)), 0.0);
        let d = Operator::from_diagonal(&DVector::from_vec(vec![ONE, c(-2.0, 0.0)]));
        assert!((trace_norm(&d) - 3.0).abs() < 1e-14);
        let rho = DensityOperator::from_approximate(&(sample(3, 50) * sample(3, 50).adjoint())).unwrap();
        assert!((trace_norm(rho.as_operator()) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn embed_matches_kron() {
        let dims = HilbertDims::new(vec![2, 3, 2]).unwrap();
        let a = sample(3, 60);
        let e = embed(&a, &dims, &[1]).unwrap();
        assert!((e - kron_all([&identity(2), &a, &identity(2)])).norm() < 1e-15);
        // reversed factor order on a pair
        let p = sample(2, 61);
        let q = sample(2, 62);
        let e = embed(&kron(&p, &q), &dims, &[2, 0]).unwrap();
        assert!((e - kron_all([&q, &identity(3), &p])).norm() < 1e-14);
    }

    #[test]
    fn density_validation() {
        assert!(DensityOperator::new(sigma_z()).is_err());
        assert!(DensityOperator::new(matrix_unit(2, 0, 1)).is_err());
        let rho = DensityOperator::maximally_mixed(4);
        assert!((rho.purity() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pauli_algebra() {
        let comm = commutator(&sigma_x(), &sigma_y());
        assert!((comm - sigma_z() * c(0.0, 2.0)).norm() < 1e-15);
        let a = annihilation(4);
        let n = number(4);
        assert!((a.adjoint() * &a - &n).norm() < 1e-14);
        assert!((commutator(&n, &a.adjoint()) - a.adjoint()).norm() < 1e-14);
    }
}
