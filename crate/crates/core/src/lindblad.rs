//! Lindblad generators, their superoperator matrices, steady states and exact
//! propagation at small dimension.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qops::{
    self, hermitian_part, identity, is_hermitian, vectorize, DensityOperator, HilbertDims,
    Operator, QopsError, C64, I, ZERO,
};

/// Condition number above which a linear solve is refused.
pub const MAX_CONDITION: f64 = 1e12;
/// Second-smallest singular value must exceed this fraction of ‖S‖ for a unique steady state.
pub const UNIQUENESS_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LindbladError {
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error("hamiltonian is not hermitian (defect {0:.3e})")]
    NonHermitianHamiltonian(f64),
    #[error("jump {index} has invalid rate {rate}")]
    InvalidRate { index: usize, rate: f64 },
    #[error("steady state is not unique (second singular value {second:.3e}, threshold {threshold:.3e})")]
    NonUniqueSteadyState { second: f64, threshold: f64 },
    #[error("generator does not relax (spectral gap {gap:.3e})")]
    NotRelaxing { gap: f64 },
    #[error("singular solve: condition {condition:.3e}, nearest eigenvalue of the shifted operator {eigenvalue}")]
    SingularSolve { condition: f64, eigenvalue: C64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub operator: Operator,
    pub rate: f64,
}

impl Jump {
    pub fn new(operator: Operator, rate: f64) -> Self {
        Self { operator, rate }
    }
}

/// `ℒ(ρ) = −i[H, ρ] + Σ rate·𝒟_L(ρ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lindbladian {
    dim: usize,
    hamiltonian: Operator,
    jumps: Vec<Jump>,
}

impl Lindbladian {
    pub const HERMITIAN_TOL: f64 = 1e-12;

    pub fn new(hamiltonian: Operator, jumps: Vec<Jump>) -> Result<Self, LindbladError> {
        if !hamiltonian.is_square() {
            return Err(QopsError::NotSquare { rows: hamiltonian.nrows(), cols: hamiltonian.ncols() }.into());
        }
        let dim = hamiltonian.nrows();
        let defect = (&hamiltonian - hamiltonian.adjoint()).norm();
        if defect > Self::HERMITIAN_TOL * hamiltonian.norm().max(1.0) {
            return Err(LindbladError::NonHermitianHamiltonian(defect));
        }
        for (index, j) in jumps.iter().enumerate() {
            if !(j.rate.is_finite() && j.rate >= 0.0) {
                return Err(LindbladError::InvalidRate { index, rate: j.rate });
            }
            if j.operator.nrows() != dim || j.operator.ncols() != dim {
                return Err(QopsError::DimensionMismatch { expected: dim, found: j.operator.nrows() }.into());
            }
        }
        Ok(Self { dim, hamiltonian, jumps })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, hamiltonian: qops::zeros(dim), jumps: Vec::new() }
    }

    pub fn hamiltonian_only(hamiltonian: Operator) -> Result<Self, LindbladError> {
        Self::new(hamiltonian, Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// True when the generator acts as the zero map (within `tol`).
    pub fn is_zero(&self, tol: f64) -> bool {
        self.hamiltonian.norm() <= tol
            && self.jumps.iter().all(|j| j.rate * j.operator.norm_squared() <= tol)
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let h = &self.hamiltonian;
        let mut out = (h * rho - rho * h) * (-I);
        for j in &self.jumps {
            if j.rate != 0.0 {
                out += dissipator_unchecked(&j.operator, rho) * C64::new(j.rate, 0.0);
            }
        }
        out
    }

    pub fn to_superoperator(&self) -> SuperoperatorMatrix {
        let d = self.dim;
        let id = identity(d);
        let h = &self.hamiltonian;
        let mut s = (id.kronecker(h) - h.transpose().kronecker(&id)) * (-I);
        for j in &self.jumps {
            if j.rate == 0.0 {
                continue;
            }
            let l = &j.operator;
            let ldl = l.adjoint() * l;
            let half = C64::new(0.5, 0.0);
            let term = l.conjugate().kronecker(l) - id.kronecker(&ldl) * half - ldl.transpose().kronecker(&id) * half;
            s += term * C64::new(j.rate, 0.0);
        }
        SuperoperatorMatrix { dim: d, matrix: s }
    }

    /// Sum of two generators on the same space (jump lists are concatenated).
    pub fn plus(&self, other: &Lindbladian) -> Result<Lindbladian, LindbladError> {
        if other.dim != self.dim {
            return Err(QopsError::DimensionMismatch { expected: self.dim, found: other.dim }.into());
        }
        let mut jumps = self.jumps.clone();
        jumps.extend(other.jumps.iter().cloned());
        Lindbladian::new(&self.hamiltonian + &other.hamiltonian, jumps)
    }

    /// The same generator acting on the listed factors of a larger space.
    pub fn embed(&self, dims: &HilbertDims, factors: &[usize]) -> Result<Lindbladian, LindbladError> {
        let h = qops::embed(&self.hamiltonian, dims, factors)?;
        let jumps = self
            .jumps
            .iter()
            .map(|j| Ok(Jump::new(qops::embed(&j.operator, dims, factors)?, j.rate)))
            .collect::<Result<Vec<_>, QopsError>>()?;
        Lindbladian::new(h, jumps)
    }

    /// Generator rescaled by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Lindbladian {
        Lindbladian {
            dim: self.dim,
            hamiltonian: &self.hamiltonian * C64::new(factor, 0.0),
            jumps: self.jumps.iter().map(|j| Jump::new(j.operator.clone(), j.rate * factor)).collect(),
        }
    }
}

fn dissipator_unchecked(l: &Operator, rho: &Operator) -> Operator {
    let ldl = l.adjoint() * l;
    l * rho * l.adjoint() - (&ldl * rho + rho * &ldl) * C64::new(0.5, 0.0)
}

/// `L ρ L† − ½ L†L ρ − ½ ρ L†L`.
pub fn dissipator_apply(l: &Operator, rho: &Operator) -> Result<Operator, LindbladError> {
    if l.shape() != rho.shape() || !l.is_square() {
        return Err(QopsError::DimensionMismatch { expected: l.nrows(), found: rho.nrows() }.into());
    }
    Ok(dissipator_unchecked(l, rho))
}

/// Matrix of a linear map on operators, acting on column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperoperatorMatrix {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl SuperoperatorMatrix {
    pub fn from_matrix(dim: usize, matrix: DMatrix<C64>) -> Result<Self, LindbladError> {
        if matrix.nrows() != dim * dim || matrix.ncols() != dim * dim {
            return Err(QopsError::DimensionMismatch { expected: dim * dim, found: matrix.nrows() }.into());
        }
        Ok(Self { dim, matrix })
    }

    /// Matrix of an arbitrary linear map, column by column.
    pub fn from_map(dim: usize, map: impl Fn(&Operator) -> Operator) -> Self {
        let n = dim * dim;
        let mut matrix = DMatrix::zeros(n, n);
        for col in 0..n {
            let unit = qops::matrix_unit(dim, col % dim, col / dim);
            matrix.set_column(col, &vectorize(&map(&unit)));
        }
        Self { dim, matrix }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        let v = &self.matrix * vectorize(x);
        Operator::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    pub fn eigenvalues(&self) -> Vec<C64> {
        complex_eigenvalues(&self.matrix)
    }
}

pub(crate) fn complex_eigenvalues(m: &DMatrix<C64>) -> Vec<C64> {
    if m.is_empty() {
        return Vec::new();
    }
    match nalgebra::Schur::try_new(m.clone(), f64::EPSILON, 0) {
        Some(schur) => {
            let (_, t) = schur.unpack();
            (0..t.nrows()).map(|i| t[(i, i)]).collect()
        }
        None => Vec::new(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    pub eigenvalues: Vec<C64>,
    /// Eigenvalues within `1e-9·max(1, ‖S‖)` of zero.
    pub multiplicity: usize,
    /// `−max Re λ` over the eigenvalues away from zero.
    pub gap: f64,
    pub second_singular_value: f64,
}

pub fn spectral_report(s: &SuperoperatorMatrix) -> SpectralReport {
    let eigenvalues = s.eigenvalues();
    let zero_tol = 1e-9 * s.norm().max(1.0);
    let multiplicity = eigenvalues.iter().filter(|l| l.norm() <= zero_tol).count();
    let gap = -eigenvalues
        .iter()
        .filter(|l| l.norm() > zero_tol)
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sv: Vec<f64> = s.matrix.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| a.total_cmp(b));
    SpectralReport {
        eigenvalues,
        multiplicity,
        gap: if gap.is_finite() { gap } else { f64::INFINITY },
        second_singular_value: sv.get(1).copied().unwrap_or(f64::INFINITY),
    }
}

/// Unique steady state from the null space of the superoperator matrix.
pub fn steady_state(gen: &Lindbladian) -> Result<(DensityOperator, SpectralReport), LindbladError> {
    steady_state_of(&gen.to_superoperator())
}

pub fn steady_state_of(s: &SuperoperatorMatrix) -> Result<(DensityOperator, SpectralReport), LindbladError> {
    let d = s.dim;
    let norm = s.norm();
    let svd = s.matrix.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let second = order.get(1).map(|&i| svd.singular_values[i]).unwrap_or(f64::INFINITY);
    let threshold = UNIQUENESS_TOL * norm;
    if second <= threshold {
        return Err(LindbladError::NonUniqueSteadyState { second, threshold });
    }
    let null: DVector<C64> = v_t.row(order[0]).adjoint();
    let x = Operator::from_column_slice(d, d, null.as_slice());
    let rho = DensityOperator::from_approximate(&x)?;
    let report = spectral_report(s);
    if !(report.gap > 1e-9 * norm.max(1.0)) {
        return Err(LindbladError::NotRelaxing { gap: report.gap });
    }
    Ok((rho, report))
}

/// `exp(t·S)` for a fixed generator and time step.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    matrix: DMatrix<C64>,
}

impl Propagator {
    pub fn new(s: &SuperoperatorMatrix, t: f64) -> Result<Self, LindbladError> {
        if t < 0.0 {
            return Err(LindbladError::NegativeTime(t));
        }
        let matrix = if t == 0.0 {
            DMatrix::identity(s.matrix.nrows(), s.matrix.ncols())
        } else {
            (&s.matrix * C64::new(t, 0.0)).exp()
        };
        Ok(Self { dim: s.dim, matrix })
    }

    pub fn apply(&self, x: &Operator) -> Operator {
        let v = &self.matrix * vectorize(x);
        Operator::from_column_slice(self.dim, self.dim, v.as_slice())
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }
}

pub fn propagate(gen: &Lindbladian, rho0: &DensityOperator, t: f64) -> Result<DensityOperator, LindbladError> {
    let p = Propagator::new(&gen.to_superoperator(), t)?;
    let out = hermitian_part(&p.apply(rho0.as_operator()));
    Ok(DensityOperator::new(out)?)
}

fn condition_number(m: &DMatrix<C64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

fn nearest_eigenvalue(s: &SuperoperatorMatrix, shift: C64) -> C64 {
    s.eigenvalues()
        .into_iter()
        .map(|l| l + shift)
        .min_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(ZERO)
}

fn lu_solve(m: DMatrix<C64>, b: &DVector<C64>) -> Option<DVector<C64>> {
    m.lu().solve(b)
}

/// Solve `(ℒ + shift)(X) = −rhs`.
///
/// With `shift = 0` the generator is singular; the solve is then carried out on
/// the traceless subspace (rhs must be traceless) and the traceless solution is
/// returned.
pub fn solve_shifted(s: &SuperoperatorMatrix, shift: C64, rhs: &Operator) -> Result<Operator, LindbladError> {
    let d = s.dim;
    if rhs.nrows() != d || rhs.ncols() != d {
        return Err(QopsError::DimensionMismatch { expected: d, found: rhs.nrows() }.into());
    }
    if shift == ZERO {
        let border = identity(d) / C64::new(d as f64, 0.0);
        return solve_bordered(s, &border, rhs, ZERO);
    }
    let n = d * d;
    let m = &s.matrix + DMatrix::identity(n, n) * shift;
    let condition = condition_number(&m);
    if !(condition <= MAX_CONDITION) {
        return Err(LindbladError::SingularSolve { condition, eigenvalue: nearest_eigenvalue(s, shift) });
    }
    let b = -vectorize(rhs);
    let x = lu_solve(m, &b).ok_or(LindbladError::SingularSolve {
        condition,
        eigenvalue: nearest_eigenvalue(s, shift),
    })?;
    Ok(Operator::from_column_slice(d, d, x.as_slice()))
}

/// Solve `ℒ(X) = −(rhs − tr(rhs)·σ)` with `tr X = trace`, where `σ` is a
/// unit-trace operator outside the range of `ℒ` (typically the steady state).
pub fn solve_bordered(
    s: &SuperoperatorMatrix,
    sigma: &Operator,
    rhs: &Operator,
    trace: C64,
) -> Result<Operator, LindbladError> {
    let d = s.dim;
    let n = d * d;
    let mut m = DMatrix::<C64>::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(&s.matrix);
    let sv = vectorize(sigma);
    let iv = vectorize(&identity(d));
    for i in 0..n {
        m[(i, n)] = sv[i];
        m[(n, i)] = iv[i];
    }
    let condition = condition_number(&m);
    if !(condition <= MAX_CONDITION) {
        return Err(LindbladError::SingularSolve { condition, eigenvalue: nearest_eigenvalue(s, ZERO) });
    }
    let mut b = DVector::<C64>::zeros(n + 1);
    b.rows_mut(0, n).copy_from(&(-vectorize(rhs)));
    b[n] = trace;
    let x = lu_solve(m, &b).ok_or(LindbladError::SingularSolve {
        condition,
        eigenvalue: nearest_eigenvalue(s, ZERO),
    })?;
    Ok(Operator::from_column_slice(d, d, &x.as_slice()[..n]))
}

/// Check `tr ℒ(ρ) = 0` and `ℒ(ρ)† = ℒ(ρ†)` for the given generator at `rho`.
pub fn structure_defect(gen: &Lindbladian, rho: &Operator) -> (f64, f64) {
    let out = gen.apply(rho);
    let tr = out.trace().norm();
    let herm = (out.adjoint() - gen.apply(&rho.adjoint())).norm();
    (tr, herm)
}

/// Hermitian check re-exported for generator builders.
pub fn hamiltonian_is_hermitian(h: &Operator) -> bool {
    is_hermitian(h, Lindbladian::HERMITIAN_TOL)
}
