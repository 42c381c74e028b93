use crate::qops::{self, kron, Operator, C64, I};

use super::first::FirstOrderData;
use super::k2::K2Data;
use super::{CompositeModel, ReduceError};

/// Evaluates `K(ρs)` either as the truncated series `K_0 + εK_1 + ε²K_2` or in
/// Kraus form `(I − iεM + ε²N)(ρ̄_A ⊗ ρs)(…)† + ε²K_2^Q`.
#[derive(Debug, Clone)]
pub struct KrausEmbedding {
    order: usize,
    dim_b: usize,
    rho_a: Operator,
    m: Operator,
    k2: Option<K2Data>,
}

impl KrausEmbedding {
    pub fn new(
        model: &CompositeModel,
        fo: &FirstOrderData,
        k2: Option<&K2Data>,
        order: usize,
    ) -> Result<Self, ReduceError> {
        Ok(Self {
            order,
            dim_b: model.dim_b(),
            rho_a: model.rho_bar_a(),
            m: fo.m_operator(model)?,
            k2: k2.cloned(),
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn dim_full(&self) -> usize {
        self.rho_a.nrows() * self.dim_b
    }

    pub fn m(&self) -> &Operator {
        &self.m
    }

    pub fn k2_data(&self) -> Option<&K2Data> {
        self.k2.as_ref()
    }

    pub fn k0(&self, rs: &Operator) -> Operator {
        kron(&self.rho_a, rs)
    }

    pub fn k1(&self, rs: &Operator) -> Operator {
        let r = self.k0(rs);
        (&self.m * &r) * (-I) + (&r * self.m.adjoint()) * I
    }

    pub fn k2(&self, rs: &Operator) -> Result<Operator, ReduceError> {
        Ok(self.k2.as_ref().ok_or(ReduceError::OrderUnavailable(2))?.apply(rs))
    }

    fn check_order(&self, order: usize) -> Result<(), ReduceError> {
        if order > self.order || (order == 2 && self.k2.is_none()) {
            Err(ReduceError::OrderUnavailable(order))
        } else {
            Ok(())
        }
    }

    /// `Σ_{h ≤ order} ε^h K_h(ρs)`.
    pub fn series(&self, rs: &Operator, epsilon: f64, order: usize) -> Result<Operator, ReduceError> {
        self.check_order(order)?;
        let mut out = self.k0(rs);
        if order >= 1 {
            out += self.k1(rs) * C64::new(epsilon, 0.0);
        }
        if order >= 2 {
            out += self.k2(rs)? * C64::new(epsilon * epsilon, 0.0);
        }
        Ok(out)
    }

    /// Kraus-form embedding truncated at `order` (completely positive by construction).
    pub fn kraus(&self, rs: &Operator, epsilon: f64, order: usize) -> Result<Operator, ReduceError> {
        self.check_order(order)?;
        let r = self.k0(rs);
        if order == 0 {
            return Ok(r);
        }
        let d = r.nrows();
        let mut e = qops::identity(d) - &self.m * (I * epsilon);
        let mut quadratic = None;
        if order >= 2 {
            let k2 = self.k2.as_ref().ok_or(ReduceError::OrderUnavailable(2))?;
            let n = k2
                .n
                .as_ref()
                .ok_or_else(|| ReduceError::KrausFormUnavailable("U ρ̄ = V has no consistent solution".into()))?;
            e += n * C64::new(epsilon * epsilon, 0.0);
            quadratic = Some(k2.apply_quadratic(rs) * C64::new(epsilon * epsilon, 0.0));
        }
        let mut out = &e * r * e.adjoint();
        if let Some(q) = quadratic {
            out += q;
        }
        Ok(out)
    }
}
