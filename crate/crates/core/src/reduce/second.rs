use crate::lindblad::{Jump, Lindbladian};
use crate::qops::{self, Operator, C64};

use super::first::{FirstOrderData, Gauge};
use super::k2::{build_k2, K2Data};
use super::{CompositeModel, ReduceError};

/// Below this (relative) value a negative rate is treated as rounding and clipped to zero.
pub const NEGATIVE_RATE_TOL: f64 = 1e-8;

/// Per-environment contribution to `ℒ_s2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCoefficients {
    /// Coefficient of `B B†` in the Hamiltonian (`Im z_1`).
    pub h_bbdag: f64,
    /// Coefficient of `B† B` in the Hamiltonian (`Im z_2`).
    pub h_bdagb: f64,
    /// Rate of the `B†` dissipator (`2 Re z_1`).
    pub rate_bdag: f64,
    /// Rate of the `B` dissipator (`2 Re z_2`).
    pub rate_b: f64,
}

#[derive(Debug, Clone)]
pub struct SecondOrderData {
    pub per_k: Vec<RateCoefficients>,
    /// `delta_cross[k][k']` for `k > k'` (zero elsewhere): coefficient of `[B, B†]`.
    pub delta_cross: Vec<Vec<f64>>,
    pub hamiltonian: Operator,
    pub l_s2: Lindbladian,
    /// Present when `c > 0`; the embedding construction is not defined otherwise.
    pub k2: Option<K2Data>,
}

impl SecondOrderData {
    /// Sum of `delta_cross` over `k > k'`.
    pub fn total_cross(&self) -> f64 {
        self.delta_cross.iter().flatten().sum()
    }
}

fn checked_rate(k: usize, channel: &'static str, z: C64) -> Result<f64, ReduceError> {
    let rate = 2.0 * z.re;
    if rate < 0.0 {
        if rate < -NEGATIVE_RATE_TOL * z.norm().max(1.0) {
            return Err(ReduceError::NegativeRate { k, channel, value: rate });
        }
        return Ok(0.0);
    }
    Ok(rate)
}

pub fn solve_second_order(model: &CompositeModel, fo: &FirstOrderData) -> Result<SecondOrderData, ReduceError> {
    if !model.gen_b().is_zero(0.0) {
        return Err(ReduceError::PreconditionViolated(
            "second-order reduction assumes L_s1 = L_B = 0 (the target generator must vanish)".into(),
        ));
    }
    if fo.gauge != Gauge::CancelHs1 {
        return Err(ReduceError::PreconditionViolated(
            "second-order reduction requires the cancel-hs1 gauge".into(),
        ));
    }
    let c = fo.c;
    let b = model.coupling_b();
    let bd = b.adjoint();
    let bbd = b * &bd;
    let bdb = &bd * b;
    let kn = fo.per_k.len();

    let mut per_k = Vec::with_capacity(kn);
    for (k, t) in fo.per_k.iter().enumerate() {
        per_k.push(RateCoefficients {
            h_bbdag: t.z1.im,
            h_bdagb: t.z2.im,
            rate_bdag: checked_rate(k, "B†", t.z1)?,
            rate_b: checked_rate(k, "B", t.z2)?,
        });
    }
    let mut delta_cross = vec![vec![0.0; kn]; kn];
    for k in 0..kn {
        for kp in 0..k {
            delta_cross[k][kp] = -2.0 * (fo.per_k[k].z0 * fo.per_k[kp].z0.conj()).re / c;
        }
    }
    let cross: f64 = delta_cross.iter().flatten().sum();
    let mut h = qops::zeros(model.dim_b());
    for r in &per_k {
        h += &bbd * C64::new(r.h_bbdag, 0.0) + &bdb * C64::new(r.h_bdagb, 0.0);
    }
    h += (&bbd - &bdb) * C64::new(cross, 0.0);
    let h = qops::hermitian_part(&h);
    let rate_bdag: f64 = per_k.iter().map(|r| r.rate_bdag).sum();
    let rate_b: f64 = per_k.iter().map(|r| r.rate_b).sum();
    let l_s2 = Lindbladian::new(h.clone(), vec![Jump::new(bd.clone(), rate_bdag), Jump::new(b.clone(), rate_b)])?;
    let k2 = if c > 0.0 { Some(build_k2(model, fo)?) } else { None };
    Ok(SecondOrderData { per_k, delta_cross, hamiltonian: h, l_s2, k2 })
}
