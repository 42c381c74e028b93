use rayon::prelude::*;

use crate::lindblad::{solve_bordered, solve_shifted, Lindbladian};
use crate::qops::{self, Operator, C64, I, ZERO};

use super::{CompositeModel, ReduceError};

/// Relative tolerance on `‖F·ρ̄ − X‖` when extracting `F` from a rank-deficient `ρ̄`.
pub const EXTRACTION_TOL: f64 = 1e-10;

/// `ρ̄` counts as full rank when its smallest eigenvalue exceeds this fraction of the largest.
pub const FULL_RANK_RATIO: f64 = 1e-10;

/// Free trace component of `X_j = F_j ρ̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gauge {
    /// Traces chosen so that the first-order Hamiltonian correction vanishes.
    CancelHs1,
    /// `tr(F_j ρ̄) = 0`; the first-order Hamiltonian is then nonzero.
    Traceless,
}

impl std::fmt::Display for Gauge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Gauge::CancelHs1 => "cancel-hs1",
            Gauge::Traceless => "traceless",
        })
    }
}

impl std::str::FromStr for Gauge {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cancel-hs1" => Ok(Gauge::CancelHs1),
            "traceless" => Ok(Gauge::Traceless),
            other => Err(format!("unknown gauge '{other}' (expected cancel-hs1 or traceless)")),
        }
    }
}

/// First-order data of one environment. Index 0 ↔ `B† `, index 1 ↔ `B`.
#[derive(Debug, Clone)]
pub struct FirstOrderTerms {
    /// `X_j = F_j ρ̄`.
    pub x: [Operator; 2],
    pub f: [Operator; 2],
    pub z0: C64,
    pub z1: C64,
    pub z2: C64,
    /// `max_j ‖F_j ρ̄ − X_j‖ / ‖X_j‖`.
    pub extraction_residual: f64,
}

#[derive(Debug, Clone)]
pub struct FirstOrderData {
    pub gauge: Gauge,
    pub c: f64,
    pub per_k: Vec<FirstOrderTerms>,
    pub h_s1: Operator,
    pub l_s1: Lindbladian,
}

impl FirstOrderData {
    /// `M = Σ_k F_1^(k) ⊗ B† + F_2^(k) ⊗ B` on the full space.
    pub fn m_operator(&self, model: &CompositeModel) -> Result<Operator, ReduceError> {
        let dims = model.dims();
        let kb = model.num_fast();
        let b = qops::embed(model.coupling_b(), dims, &[kb])?;
        let bs = [b.adjoint(), b];
        let mut m = qops::zeros(model.total_dim());
        for (k, t) in self.per_k.iter().enumerate() {
            for j in 0..2 {
                m += qops::embed(&t.f[j], dims, &[k])? * &bs[j];
            }
        }
        Ok(m)
    }
}

/// Solve `F·ρ̄ = X` in the least-squares sense.
pub(crate) fn extract_right_factor(x: &Operator, rho: &Operator) -> (Operator, f64) {
    let svd = rho.clone().svd(true, true);
    let max_sv = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let pinv = svd
        .pseudo_inverse(1e-13 * max_sv.max(f64::MIN_POSITIVE))
        .expect("both singular bases computed");
    let f = x * pinv;
    let residual = (&f * rho - x).norm() / x.norm().max(f64::MIN_POSITIVE);
    (f, if x.norm() == 0.0 { 0.0 } else { residual })
}

fn is_full_rank(rho: &Operator) -> bool {
    let sv = rho.singular_values();
    let max = sv.max();
    max > 0.0 && sv.min() > FULL_RANK_RATIO * max
}

fn solve_env(model: &CompositeModel, k: usize, gauge: Gauge, c: f64) -> Result<FirstOrderTerms, ReduceError> {
    let s = model.env_superoperator(k);
    let rho = model.rho_bar(k).as_operator();
    let a = &model.fast()[k].coupling_a;
    let ad = a.adjoint();
    let sources = [a * rho, &ad * rho];
    let z0 = sources[0].trace();
    // (ℒ − i c s_j) X_j = −source_j, s_1 = +1, s_2 = −1.
    let shifts = [-I * c, I * c];
    let mut x: [Operator; 2] = [qops::zeros(rho.nrows()), qops::zeros(rho.nrows())];
    for j in 0..2 {
        x[j] = match gauge {
            Gauge::CancelHs1 => solve_shifted(s, shifts[j], &sources[j])?,
            Gauge::Traceless => {
                let projected = &sources[j] - rho * sources[j].trace();
                if c == 0.0 {
                    solve_bordered(s, rho, &projected, ZERO)?
                } else {
                    solve_shifted(s, shifts[j], &projected)?
                }
            }
        };
    }
    let mut f: [Operator; 2] = [qops::zeros(rho.nrows()), qops::zeros(rho.nrows())];
    let mut extraction_residual = 0.0f64;
    // With ρ̄ invertible F = X ρ̄⁻¹ always exists; the residual then only reflects conditioning.
    let full_rank = is_full_rank(rho);
    for j in 0..2 {
        let (fj, r) = extract_right_factor(&x[j], rho);
        if !full_rank && r > EXTRACTION_TOL {
            return Err(ReduceError::RankDeficientSteadyState { k, residual: r });
        }
        extraction_residual = extraction_residual.max(r);
        f[j] = fj;
    }
    let z1 = (&x[0] * &ad).trace();
    let z2 = (&x[1] * a).trace();
    Ok(FirstOrderTerms { x, f, z0, z1, z2, extraction_residual })
}

pub fn solve_first_order(model: &CompositeModel, gauge: Gauge) -> Result<FirstOrderData, ReduceError> {
    let c = model.cb().value;
    if gauge == Gauge::CancelHs1 && c == 0.0 {
        return Err(ReduceError::GaugeUnavailable);
    }
    let per_k = (0..model.num_fast())
        .into_par_iter()
        .map(|k| solve_env(model, k, gauge, c))
        .collect::<Result<Vec<_>, _>>()?;
    let b = model.coupling_b();
    let db = model.dim_b();
    let h_s1 = match gauge {
        Gauge::CancelHs1 => qops::zeros(db),
        Gauge::Traceless => per_k
            .iter()
            .fold(qops::zeros(db), |acc, t| acc + b.adjoint() * t.z0 + b * t.z0.conj()),
    };
    let l_s1 = model
        .gen_b()
        .plus(&Lindbladian::hamiltonian_only(qops::hermitian_part(&h_s1))?)?;
    Ok(FirstOrderData { gauge, c, per_k, h_s1, l_s1 })
}

/// First-order embedding `K_1(ρs) = −i M (ρ̄_A ⊗ ρs) + i (ρ̄_A ⊗ ρs) M†` and `M`.
pub fn build_k1(
    fo: &FirstOrderData,
    model: &CompositeModel,
) -> Result<(impl Fn(&Operator) -> Operator, Operator), ReduceError> {
    let m = fo.m_operator(model)?;
    let rho_a = model.rho_bar_a();
    let md = m.adjoint();
    let mm = m.clone();
    let map = move |rs: &Operator| {
        let r = qops::kron(&rho_a, rs);
        (&mm * &r) * (-I) + (&r * &md) * I
    };
    Ok((map, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::Jump;
    use crate::qops::ops::*;
    use crate::reduce::FastSubsystem;

    fn decay_model(a: Operator, c: f64) -> CompositeModel {
        let gen = Lindbladian::new(qops::zeros(2), vec![Jump::new(sigma_minus(), 1.0)]).unwrap();
        CompositeModel::new(
            vec![FastSubsystem::new(gen, a)],
            annihilation(3),
            number(3) * C64::new(c, 0.0),
            Lindbladian::zero(3),
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn dark_state_annihilates_first_order() {
        let model = decay_model(sigma_minus(), 0.8);
        let fo = solve_first_order(&model, Gauge::CancelHs1).unwrap();
        let t = &fo.per_k[0];
        assert!(t.x[0].norm() < 1e-14);
        assert!(t.z1.norm() < 1e-14);
        assert!(t.z0.norm() < 1e-14);
    }

    #[test]
    fn gauge_unavailable_at_zero_constant() {
        let model = decay_model(sigma_minus(), 0.0);
        assert!(matches!(solve_first_order(&model, Gauge::CancelHs1), Err(ReduceError::GaugeUnavailable)));
        assert!(solve_first_order(&model, Gauge::Traceless).is_ok());
    }

    #[test]
    fn gauge_parsing() {
        assert_eq!("cancel-hs1".parse::<Gauge>().unwrap(), Gauge::CancelHs1);
        assert_eq!("traceless".parse::<Gauge>().unwrap(), Gauge::Traceless);
        assert!("other".parse::<Gauge>().is_err());
        assert_eq!(Gauge::Traceless.to_string(), "traceless");
    }

    #[test]
    fn least_squares_extraction_on_pure_state() {
        let rho = qops::matrix_unit(2, 1, 1);
        let x = qops::matrix_unit(2, 0, 1);
        let (f, r) = extract_right_factor(&x, &rho);
        assert!(r < 1e-14);
        assert!((&f * &rho - &x).norm() < 1e-14);
        let bad = qops::matrix_unit(2, 0, 0);
        assert!(extract_right_factor(&bad, &rho).1 > 0.5);
    }
}
