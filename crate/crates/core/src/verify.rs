//! Independent checks of a reduction: invariance-equation residuals, CPTP
//! defects of the embedding, and full-versus-reduced trajectory comparison.

use rayon::prelude::*;
use thiserror::Error;

use crate::lindblad::{LindbladError, Lindbladian, Propagator};
use crate::qops::{self, partial_trace, trace_norm, DensityOperator, Operator, QopsError, C64, I, ONE};
use crate::reduce::{choi_matrix, choi_min_eigenvalue, CompositeModel, ReduceError, ReductionResult};

/// Values below this are treated as exact zeros in scaling fits.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Largest full-space dimension that is propagated densely.
pub const DEFAULT_DIMENSION_CAP: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error("order {0} is not available in this result")]
    OrderUnavailable(usize),
    #[error("full dimension {dim} exceeds the cap {cap}")]
    DimensionCap { dim: usize, cap: usize },
    #[error("scaling fit needs at least {needed} points spanning 1.5 decades, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("only {valid} points above the noise floor; slope undefined")]
    DegenerateFit { valid: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub order: usize,
    /// `max_ρs ‖LHS − RHS‖_F`.
    pub residual_fro: f64,
    /// `residual_fro` divided by the largest individual term norm.
    pub residual_rel: f64,
    pub scale: f64,
}

/// Hermitian matrix-unit basis: `E_ii`, `E_ij + E_ji`, `i(E_ij − E_ji)`.
pub fn hermitian_basis(d: usize) -> Vec<Operator> {
    let mut out = Vec::with_capacity(d * d);
    for i in 0..d {
        out.push(qops::matrix_unit(d, i, i));
        for j in (i + 1)..d {
            let eij = qops::matrix_unit(d, i, j);
            let eji = qops::matrix_unit(d, j, i);
            out.push(&eij + &eji);
            out.push((eij - eji) * I);
        }
    }
    out
}

struct FullOps {
    env: Lindbladian,
    h_int: Operator,
    h_tilde: Operator,
    gen_b: Lindbladian,
}

impl FullOps {
    fn new(model: &CompositeModel) -> Result<Self, VerifyError> {
        let kb = model.num_fast();
        Ok(Self {
            env: model.full_env_generator()?,
            h_int: model.interaction_hamiltonian()?,
            h_tilde: qops::embed(model.h_tilde_b(), model.dims(), &[kb])?,
            gen_b: model.gen_b().embed(model.dims(), &[kb])?,
        })
    }

    fn l_int(&self, x: &Operator) -> Operator {
        (&self.h_int * x - x * &self.h_int) * (-I)
    }

    fn fast_hamiltonian(&self, x: &Operator) -> Operator {
        (&self.h_tilde * x - x * &self.h_tilde) * (-I)
    }
}

/// Residual of the order-`order` invariance equation, maximized over the
/// Hermitian matrix-unit basis of the reduced space.
pub fn invariance_residual(
    model: &CompositeModel,
    result: &ReductionResult,
    order: usize,
) -> Result<ResidualReport, VerifyError> {
    if order > result.order {
        return Err(VerifyError::OrderUnavailable(order));
    }
    let ops = FullOps::new(model)?;
    let emb = &result.embedding;
    let basis = hermitian_basis(model.dim_b());
    let per_basis = basis
        .par_iter()
        .map(|rs| -> Result<(f64, f64), VerifyError> {
            let ls0 = result.l_s0.apply(rs);
            let terms: Vec<Operator> = match order {
                0 => {
                    let k0 = emb.k0(rs);
                    vec![ops.env.apply(&k0), ops.fast_hamiltonian(&k0), -emb.k0(&ls0)]
                }
                1 => {
                    let k0 = emb.k0(rs);
                    let k1 = emb.k1(rs);
                    vec![
                        ops.env.apply(&k1),
                        ops.l_int(&k0),
                        ops.gen_b.apply(&k0),
                        ops.fast_hamiltonian(&k1),
                        -emb.k0(&result.l_s1.apply(rs)),
                        -emb.k1(&ls0),
                    ]
                }
                _ => {
                    let l2 = result.l_s2().ok_or(VerifyError::OrderUnavailable(2))?;
                    let k1 = emb.k1(rs);
                    let k2 = emb.k2(rs)?;
                    vec![
                        ops.env.apply(&k2),
                        ops.l_int(&k1),
                        ops.gen_b.apply(&k1),
                        ops.fast_hamiltonian(&k2),
                        -emb.k0(&l2.apply(rs)),
                        -emb.k1(&result.l_s1.apply(rs)),
                        -emb.k2(&ls0)?,
                    ]
                }
            };
            let scale = terms.iter().map(|t| t.norm()).fold(0.0, f64::max);
            let total = terms.into_iter().reduce(|a, b| a + b).expect("nonempty");
            Ok((total.norm(), scale))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let residual_fro = per_basis.iter().map(|r| r.0).fold(0.0, f64::max);
    let scale = per_basis.iter().map(|r| r.1).fold(0.0, f64::max);
    let residual_rel = if residual_fro == 0.0 { 0.0 } else { residual_fro / scale.max(f64::MIN_POSITIVE) };
    Ok(ResidualReport { order, residual_fro, residual_rel, scale })
}

/// Which form of the embedding a CPTP report refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingForm {
    /// `K_0 + εK_1 (+ ε²K_2)`: trace preserving exactly, positive to order.
    Series,
    /// `(I − iεM + ε²N)·(…)† + ε²K_2^Q`: completely positive exactly, trace preserving to order.
    Kraus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CptpReport {
    pub order: usize,
    pub form: EmbeddingForm,
    pub epsilon_used: f64,
    pub min_choi_eigenvalue: f64,
    /// `max |tr K(ρs) − tr ρs|` over the matrix-unit basis.
    pub trace_defect: f64,
}

impl CptpReport {
    /// `max(0, −λ_min)`.
    pub fn cp_violation(&self) -> f64 {
        (-self.min_choi_eigenvalue).max(0.0)
    }
}

pub fn cptp_check(
    result: &ReductionResult,
    epsilon: f64,
    order: usize,
    form: EmbeddingForm,
) -> Result<CptpReport, VerifyError> {
    if order > result.order {
        return Err(VerifyError::OrderUnavailable(order));
    }
    let emb = &result.embedding;
    let db = emb.dim_b();
    let eval = |rs: &Operator| -> Result<Operator, ReduceError> {
        match form {
            EmbeddingForm::Series => emb.series(rs, epsilon, order),
            EmbeddingForm::Kraus => emb.kraus(rs, epsilon, order),
        }
    };
    let mut images = Vec::with_capacity(db * db);
    let mut trace_defect = 0.0f64;
    for i in 0..db {
        for j in 0..db {
            let img = eval(&qops::matrix_unit(db, i, j))?;
            let expected = if i == j { ONE } else { C64::new(0.0, 0.0) };
            trace_defect = trace_defect.max((img.trace() - expected).norm());
            images.push(img);
        }
    }
    let choi = choi_matrix(
        |e| {
            let (i, j) = unit_index(e);
            images[i * db + j].clone()
        },
        db,
    );
    Ok(CptpReport { order, form, epsilon_used: epsilon, min_choi_eigenvalue: choi_min_eigenvalue(&choi), trace_defect })
}

fn unit_index(e: &Operator) -> (usize, usize) {
    let d = e.nrows();
    for i in 0..d {
        for j in 0..d {
            if e[(i, j)] != C64::new(0.0, 0.0) {
                return (i, j);
            }
        }
    }
    (0, 0)
}

/// CPTP reports for every ε in both embedding forms.
pub fn cptp_order_check(
    result: &ReductionResult,
    epsilons: &[f64],
    order: usize,
) -> Result<Vec<CptpReport>, VerifyError> {
    let mut out = Vec::with_capacity(epsilons.len() * 2);
    for form in [EmbeddingForm::Series, EmbeddingForm::Kraus] {
        let reports = epsilons
            .par_iter()
            .map(|&e| cptp_check(result, e, order, form))
            .collect::<Result<Vec<_>, _>>()?;
        out.extend(reports);
    }
    Ok(out)
}

/// Outcome of fitting `value ∝ ε^p` to a defect that may be identically zero.
#[derive(Debug, Clone, PartialEq)]
pub enum DefectScaling {
    /// Every value is below the noise floor.
    Exact,
    Fitted(ScalingReport),
}

impl DefectScaling {
    pub fn passes(&self, min_exponent: f64) -> bool {
        match self {
            DefectScaling::Exact => true,
            DefectScaling::Fitted(r) => r.fitted_slope >= min_exponent,
        }
    }
}

pub fn defect_scaling(epsilons: &[f64], values: &[f64]) -> Result<DefectScaling, VerifyError> {
    if values.iter().all(|v| v.abs() < NOISE_FLOOR) {
        return Ok(DefectScaling::Exact);
    }
    fit_loglog(epsilons, values).map(DefectScaling::Fitted)
}

/// Trajectory comparison at one ε.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryComparison {
    pub epsilon: f64,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    pub max_error: f64,
    /// `max |tr ρ_full(t) − 1|`.
    pub trace_drift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonOptions {
    pub epsilon: f64,
    pub horizon: f64,
    pub steps: usize,
    pub order: usize,
    /// Start from `ρ̄_A ⊗ ρs0` instead of `K(ρs0)`.
    pub off_manifold: bool,
    pub dimension_cap: usize,
}

/// Propagate the full model from `K(ρs0)` and the reduced model from `ρs0`;
/// the error at time `t` is `‖tr_A ρ_full(t) − tr_A K(ρs(t))‖_1`.
pub fn compare_full_vs_reduced(
    model: &CompositeModel,
    result: &ReductionResult,
    rho_s0: &DensityOperator,
    opts: &ComparisonOptions,
) -> Result<TrajectoryComparison, VerifyError> {
    let dim = model.total_dim();
    if dim > opts.dimension_cap {
        return Err(VerifyError::DimensionCap { dim, cap: opts.dimension_cap });
    }
    if opts.order > result.order {
        return Err(VerifyError::OrderUnavailable(opts.order));
    }
    let eps = opts.epsilon;
    let emb = &result.embedding;
    let full = model.full_generator_at(eps)?.to_superoperator();
    let reduced = result.reduced_generator(eps, opts.order)?.to_superoperator();
    let steps = opts.steps.max(1);
    let dt = opts.horizon / steps as f64;
    let p_full = Propagator::new(&full, dt)?;
    let p_red = Propagator::new(&reduced, dt)?;
    let keep_b = [model.num_fast()];
    let dims = model.dims();

    let mut rho = if opts.off_manifold {
        emb.k0(rho_s0.as_operator())
    } else {
        emb.series(rho_s0.as_operator(), eps, opts.order)?
    };
    let mut rs = rho_s0.as_operator().clone();
    let mut times = Vec::with_capacity(steps + 1);
    let mut errors = Vec::with_capacity(steps + 1);
    let mut trace_drift = 0.0f64;
    for step in 0..=steps {
        if step > 0 {
            rho = p_full.apply(&rho);
            rs = p_red.apply(&rs);
        }
        let image = emb.series(&rs, eps, opts.order)?;
        let diff = partial_trace(&rho, dims, &keep_b)? - partial_trace(&image, dims, &keep_b)?;
        times.push(step as f64 * dt);
        errors.push(trace_norm(&diff));
        trace_drift = trace_drift.max((rho.trace() - ONE).norm());
    }
    let max_error = errors.iter().copied().fold(0.0, f64::max);
    Ok(TrajectoryComparison { epsilon: eps, times, errors, max_error, trace_drift })
}

/// `5 / (ε²·slowest reduced rate)`, capped at `10³`.
pub fn default_horizon(result: &ReductionResult, epsilon: f64) -> f64 {
    let slowest = result
        .second
        .as_ref()
        .map(|s| {
            s.l_s2
                .jumps()
                .iter()
                .filter(|j| j.rate > 0.0)
                .map(|j| j.rate)
                .fold(f64::INFINITY, f64::min)
        })
        .unwrap_or(f64::INFINITY);
    let gap = epsilon * epsilon * slowest;
    if gap.is_finite() && gap > 0.0 {
        (5.0 / gap).min(1e3)
    } else {
        1e3
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub epsilons: Vec<f64>,
    pub errors: Vec<f64>,
    /// Points excluded for lying below the noise floor.
    pub excluded: Vec<usize>,
    pub fitted_slope: f64,
    pub slope_stderr: f64,
    pub intercept: f64,
}

fn fit_loglog(epsilons: &[f64], errors: &[f64]) -> Result<ScalingReport, VerifyError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (i, (&e, &v)) in epsilons.iter().zip(errors).enumerate() {
        if v.abs() < NOISE_FLOOR || e <= 0.0 {
            excluded.push(i);
        } else {
            xs.push(e.ln());
            ys.push(v.abs().ln());
        }
    }
    let n = xs.len();
    if n < 2 {
        return Err(VerifyError::DegenerateFit { valid: n });
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(VerifyError::DegenerateFit { valid: n });
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let ssr: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(ScalingReport {
        epsilons: epsilons.to_vec(),
        errors: errors.to_vec(),
        excluded,
        fitted_slope: slope,
        slope_stderr: stderr,
        intercept,
    })
}

/// Least-squares slope of `log(error)` against `log(ε)`.
///
/// Needs at least four points spanning 1.5 decades; points below
/// [`NOISE_FLOOR`] are excluded and listed in the report.
pub fn epsilon_scaling_fit(epsilons: &[f64], errors: &[f64]) -> Result<ScalingReport, VerifyError> {
    let n = epsilons.len().min(errors.len());
    let positive: Vec<f64> = epsilons.iter().copied().filter(|&e| e > 0.0).collect();
    let span = if positive.is_empty() {
        0.0
    } else {
        let max = positive.iter().copied().fold(f64::MIN, f64::max);
        let min = positive.iter().copied().fold(f64::MAX, f64::min);
        (max / min).log10()
    };
    if n < 4 || span < 1.5 - 1e-9 {
        return Err(VerifyError::InsufficientPoints { needed: 4, got: n });
    }
    fit_loglog(&epsilons[..n], &errors[..n])
}
