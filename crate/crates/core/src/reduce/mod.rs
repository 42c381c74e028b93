//! Adiabatic elimination of the fast environments: reduced generators up to
//! second order and the matching Kraus-form embeddings.

mod choi;
mod embedding;
mod first;
mod k2;
mod model;
mod second;

pub use choi::{choi_matrix, choi_min_eigenvalue};
pub use embedding::KrausEmbedding;
pub use first::{build_k1, solve_first_order, FirstOrderData, FirstOrderTerms, Gauge};
pub use k2::{build_k2, K2Data, K2Diagnostics, K2Single, TAU_MAX};
pub use model::{check_assumption_cb, CbConstant, CompositeModel, FastSubsystem};
pub use second::{solve_second_order, RateCoefficients, SecondOrderData};

use thiserror::Error;

use crate::lindblad::{LindbladError, Lindbladian};
use crate::qops::{QopsError, C64};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReduceError {
    #[error(transparent)]
    Lindblad(#[from] LindbladError),
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("[H̃, B†] is not proportional to B† (residual {residual:.3e})")]
    AssumptionViolated { residual: f64 },
    #[error("commutation constant is not real: {0}")]
    NonRealConstant(C64),
    #[error("the H_s1-cancelling gauge needs a nonzero commutation constant")]
    GaugeUnavailable,
    #[error("environment {k}: steady state is rank deficient and F·ρ̄ = X has no solution (residual {residual:.3e})")]
    RankDeficientSteadyState { k: usize, residual: f64 },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("environment {k}: negative rate for {channel} ({value:.3e})")]
    NegativeRate { k: usize, channel: &'static str, value: f64 },
    #[error("no τ̄ up to {tau_max} makes the second-order kernel completely positive (min eigenvalue {min_eigenvalue:.3e})")]
    TauSearchFailed { tau_max: f64, min_eigenvalue: f64 },
    #[error("order {0} is not available in this result")]
    OrderUnavailable(usize),
    #[error("Kraus-form second-order embedding unavailable: {0}")]
    KrausFormUnavailable(String),
}

/// Everything produced by a reduction to a given order.
#[derive(Debug, Clone)]
pub struct ReductionResult {
    pub order: usize,
    pub gauge: Gauge,
    pub cb: CbConstant,
    pub l_s0: Lindbladian,
    pub l_s1: Lindbladian,
    pub first: FirstOrderData,
    pub second: Option<SecondOrderData>,
    pub embedding: KrausEmbedding,
}

impl ReductionResult {
    pub fn l_s2(&self) -> Option<&Lindbladian> {
        self.second.as_ref().map(|s| &s.l_s2)
    }

    /// `ℒ_s0 + ε ℒ_s1 (+ ε² ℒ_s2)` truncated at `order`.
    pub fn reduced_generator(&self, epsilon: f64, order: usize) -> Result<Lindbladian, ReduceError> {
        if order > self.order {
            return Err(ReduceError::OrderUnavailable(order));
        }
        let mut gen = self.l_s0.clone();
        if order >= 1 {
            gen = gen.plus(&self.l_s1.scaled(epsilon))?;
        }
        if order >= 2 {
            let l2 = self.l_s2().ok_or(ReduceError::OrderUnavailable(2))?;
            gen = gen.plus(&l2.scaled(epsilon * epsilon))?;
        }
        Ok(gen)
    }
}

/// Reduce `model` to the requested order (0, 1 or 2).
///
/// Order 2 requires the H_s1-cancelling gauge and a zero target generator.
pub fn reduce(model: &CompositeModel, order: usize, gauge: Gauge) -> Result<ReductionResult, ReduceError> {
    if order > 2 {
        return Err(ReduceError::OrderUnavailable(order));
    }
    let cb = model.cb();
    let l_s0 = Lindbladian::hamiltonian_only(model.h_tilde_b().clone())?;
    let first = solve_first_order(model, gauge)?;
    let second = if order == 2 { Some(solve_second_order(model, &first)?) } else { None };
    let embedding = KrausEmbedding::new(model, &first, second.as_ref().and_then(|s| s.k2.as_ref()), order)?;
    Ok(ReductionResult {
        order,
        gauge,
        cb,
        l_s0,
        l_s1: first.l_s1.clone(),
        first,
        second,
        embedding,
    })
}
