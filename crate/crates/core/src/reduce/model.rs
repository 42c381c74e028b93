use crate::lindblad::{steady_state, Jump, Lindbladian, SpectralReport, SuperoperatorMatrix};
use crate::qops::{self, commutator, kron_all, DensityOperator, HilbertDims, Operator, C64};

use super::ReduceError;

/// Relative tolerance for `[H̃, B†] = c·B†`.
const CB_TOL: f64 = 1e-10;

/// The real constant `c` with `[H̃_B, B†] = c·B†`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbConstant {
    pub value: f64,
    pub residual: f64,
}

pub fn check_assumption_cb(h_tilde_b: &Operator, b: &Operator) -> Result<CbConstant, ReduceError> {
    if !qops::is_hermitian(h_tilde_b, 1e-12) {
        return Err(ReduceError::InvalidModel("H̃_B is not hermitian".into()));
    }
    if h_tilde_b.shape() != b.shape() {
        return Err(ReduceError::InvalidModel("H̃_B and B have different dimensions".into()));
    }
    let bd = b.adjoint();
    let nb = bd.norm();
    if nb == 0.0 {
        return Err(ReduceError::InvalidModel("coupling operator B is zero".into()));
    }
    let comm = commutator(h_tilde_b, &bd);
    let c = bd.dotc(&comm) / C64::new(nb * nb, 0.0);
    let scale = nb * h_tilde_b.norm().max(1.0);
    let residual = (&comm - &bd * c).norm();
    if residual > CB_TOL * scale {
        return Err(ReduceError::AssumptionViolated { residual });
    }
    if c.im.abs() > CB_TOL * c.norm().max(1.0) {
        return Err(ReduceError::NonRealConstant(c));
    }
    let value = c.re;
    let implied = (commutator(h_tilde_b, b) + b * C64::new(value, 0.0)).norm();
    if implied > CB_TOL * scale {
        return Err(ReduceError::AssumptionViolated { residual: implied });
    }
    Ok(CbConstant { value, residual: residual.max(implied) })
}

/// One fast environment: its generator and its side of the coupling `A ⊗ B† + A† ⊗ B`.
#[derive(Debug, Clone)]
pub struct FastSubsystem {
    pub gen_a: Lindbladian,
    pub coupling_a: Operator,
}

impl FastSubsystem {
    pub fn new(gen_a: Lindbladian, coupling_a: Operator) -> Self {
        Self { gen_a, coupling_a }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct EnvCache {
    pub superop: SuperoperatorMatrix,
    pub rho_bar: DensityOperator,
    pub spectrum: SpectralReport,
}

/// `dρ/dt = Σ_k ℒ_A^(k)(ρ) + ε Σ_k ℒ_int^(k)(ρ) + ε ℒ_B(ρ) − i[H̃_B, ρ]`,
/// tensor factors ordered `[A^(1), …, A^(K), B]`.
#[derive(Debug, Clone)]
pub struct CompositeModel {
    fast: Vec<FastSubsystem>,
    coupling_b: Operator,
    h_tilde_b: Operator,
    gen_b: Lindbladian,
    epsilon: f64,
    cb: CbConstant,
    envs: Vec<EnvCache>,
    dims: HilbertDims,
}

impl CompositeModel {
    pub fn new(
        fast: Vec<FastSubsystem>,
        coupling_b: Operator,
        h_tilde_b: Operator,
        gen_b: Lindbladian,
        epsilon: f64,
    ) -> Result<Self, ReduceError> {
        if fast.is_empty() {
            return Err(ReduceError::InvalidModel("at least one fast environment is required".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ReduceError::InvalidModel(format!("epsilon must be positive, got {epsilon}")));
        }
        let db = coupling_b.nrows();
        if !coupling_b.is_square() || h_tilde_b.shape() != (db, db) || gen_b.dim() != db {
            return Err(ReduceError::InvalidModel("target-space operators have inconsistent dimensions".into()));
        }
        let cb = check_assumption_cb(&h_tilde_b, &coupling_b)?;
        let mut envs = Vec::with_capacity(fast.len());
        let mut factor_dims = Vec::with_capacity(fast.len() + 1);
        for (k, env) in fast.iter().enumerate() {
            let d = env.gen_a.dim();
            if env.coupling_a.shape() != (d, d) {
                return Err(ReduceError::InvalidModel(format!(
                    "environment {k}: coupling operator does not match generator dimension {d}"
                )));
            }
            let superop = env.gen_a.to_superoperator();
            let (rho_bar, spectrum) = steady_state(&env.gen_a)?;
            envs.push(EnvCache { superop, rho_bar, spectrum });
            factor_dims.push(d);
        }
        factor_dims.push(db);
        let dims = HilbertDims::new(factor_dims)?;
        Ok(Self { fast, coupling_b, h_tilde_b, gen_b, epsilon, cb, envs, dims })
    }

    pub fn fast(&self) -> &[FastSubsystem] {
        &self.fast
    }

    pub fn num_fast(&self) -> usize {
        self.fast.len()
    }

    pub fn coupling_b(&self) -> &Operator {
        &self.coupling_b
    }

    pub fn h_tilde_b(&self) -> &Operator {
        &self.h_tilde_b
    }

    pub fn gen_b(&self) -> &Lindbladian {
        &self.gen_b
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, ReduceError> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(ReduceError::InvalidModel(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    pub fn cb(&self) -> CbConstant {
        self.cb
    }

    pub fn dim_b(&self) -> usize {
        self.coupling_b.nrows()
    }

    /// Dimensions `[d_A^(1), …, d_A^(K), d_B]`.
    pub fn dims(&self) -> &HilbertDims {
        &self.dims
    }

    pub fn dims_a(&self) -> HilbertDims {
        HilbertDims::new(self.dims.factors()[..self.fast.len()].to_vec()).expect("validated dims")
    }

    pub fn dim_a(&self) -> usize {
        self.dims_a().total()
    }

    pub fn total_dim(&self) -> usize {
        self.dims.total()
    }

    pub fn rho_bar(&self, k: usize) -> &DensityOperator {
        &self.envs[k].rho_bar
    }

    pub fn env_superoperator(&self, k: usize) -> &SuperoperatorMatrix {
        &self.envs[k].superop
    }

    pub fn spectrum(&self, k: usize) -> &SpectralReport {
        &self.envs[k].spectrum
    }

    /// `ρ̄_A = ⊗_k ρ̄_A^(k)`.
    pub fn rho_bar_a(&self) -> Operator {
        kron_all(self.envs.iter().map(|e| e.rho_bar.as_operator()))
    }

    /// A-space operator that is `op` on the listed environment factors and
    /// `fill(m)` on every other environment factor `m`.
    pub(crate) fn place_a(
        &self,
        op: &Operator,
        factors: &[usize],
        fill: impl Fn(usize) -> Operator,
    ) -> Result<Operator, ReduceError> {
        let dims_a = self.dims_a();
        let placed = qops::embed(op, &dims_a, factors)?;
        let rest: Vec<Operator> = (0..self.fast.len())
            .map(|m| if factors.contains(&m) { qops::identity(dims_a.factors()[m]) } else { fill(m) })
            .collect();
        Ok(placed * kron_all(rest.iter()))
    }

    /// `Σ_k ℒ_A^(k)` acting on the full space.
    pub fn full_env_generator(&self) -> Result<Lindbladian, ReduceError> {
        let mut gen = Lindbladian::zero(self.total_dim());
        for (k, env) in self.fast.iter().enumerate() {
            gen = gen.plus(&env.gen_a.embed(&self.dims, &[k])?)?;
        }
        Ok(gen)
    }

    /// `Σ_k A^(k) ⊗ B† + A^(k)† ⊗ B` on the full space.
    pub fn interaction_hamiltonian(&self) -> Result<Operator, ReduceError> {
        let kb = self.fast.len();
        let b = qops::embed(&self.coupling_b, &self.dims, &[kb])?;
        let bd = b.adjoint();
        let mut h = qops::zeros(self.total_dim());
        for (k, env) in self.fast.iter().enumerate() {
            let a = qops::embed(&env.coupling_a, &self.dims, &[k])?;
            h += &a * &bd + a.adjoint() * &b;
        }
        Ok(h)
    }

    /// Full generator at the model's ε.
    pub fn full_generator(&self) -> Result<Lindbladian, ReduceError> {
        self.full_generator_at(self.epsilon)
    }

    /// Full generator with the coupling scaled by an arbitrary `epsilon ≥ 0`.
    pub fn full_generator_at(&self, epsilon: f64) -> Result<Lindbladian, ReduceError> {
        let kb = self.fast.len();
        let env = self.full_env_generator()?;
        let h_tilde = qops::embed(&self.h_tilde_b, &self.dims, &[kb])?;
        let h_int = self.interaction_hamiltonian()?;
        let gen_b = self.gen_b.embed(&self.dims, &[kb])?.scaled(epsilon);
        let slow = Lindbladian::new(h_tilde + h_int * C64::new(epsilon, 0.0), Vec::<Jump>::new())?;
        Ok(env.plus(&slow)?.plus(&gen_b)?)
    }
}
