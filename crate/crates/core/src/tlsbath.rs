//! Microwave resonator coupled to a bath of driven two-level systems (TLSs),
//! in the displaced, rotating frame:
//!
//! `dρ/dt = Σ_k ℒ_Q^(k)(ρ) + g Σ_k [σ₋^(k) a† − σ₊^(k) a, ρ] − i[Δ_c a†a, ρ]`,
//! `ℒ_Q^(k) = −i[Δ_q^(k)/2 σ_z + (g ṽ/Δ_c) σ_x, ·] + Γ₋ 𝒟_{σ₋}`.
//!
//! Identification with the generic model: `A^(k) = iσ₋`, `B = a`,
//! `H̃_B = Δ_c a†a`, `ε = g`. All frequencies are in the same unit (Hz in the
//! CLI). The drive enters only through the product `g ṽ`.

use rayon::prelude::*;
use thiserror::Error;

use crate::lindblad::{Jump, Lindbladian};
use crate::qops::{ops, C64, I};
use crate::reduce::{solve_first_order, CompositeModel, FastSubsystem, Gauge, ReduceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TlsError {
    #[error("resonator detuning Δ_c must be nonzero")]
    ZeroDetuning,
    #[error("closed-form denominator vanishes (|Z| = {0:.3e})")]
    SingularDenominator(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlsBathParams {
    pub g: f64,
    pub gamma_minus: f64,
    pub delta_c: f64,
    pub delta_q: Vec<f64>,
    pub v_tilde: f64,
    pub fock_dim: usize,
}

impl TlsBathParams {
    pub fn validate(&self) -> Result<(), TlsError> {
        if !(self.g > 0.0 && self.g.is_finite()) {
            return Err(TlsError::InvalidParams(format!("g must be positive, got {}", self.g)));
        }
        if !(self.gamma_minus > 0.0 && self.gamma_minus.is_finite()) {
            return Err(TlsError::InvalidParams(format!("gamma_minus must be positive, got {}", self.gamma_minus)));
        }
        if self.fock_dim < 2 {
            return Err(TlsError::InvalidParams("fock_dim must be at least 2".into()));
        }
        if !(self.v_tilde >= 0.0 && self.v_tilde.is_finite()) {
            return Err(TlsError::InvalidParams(format!("v_tilde must be nonnegative, got {}", self.v_tilde)));
        }
        if self.delta_q.is_empty() || self.delta_q.iter().any(|d| !d.is_finite()) {
            return Err(TlsError::InvalidParams("delta_q must be a nonempty list of finite values".into()));
        }
        if self.delta_c == 0.0 {
            return Err(TlsError::ZeroDetuning);
        }
        Ok(())
    }

    /// Effective drive amplitude `g ṽ / Δ_c` on each TLS.
    pub fn drive(&self) -> f64 {
        self.g * self.v_tilde / self.delta_c
    }
}

/// `ℒ_Q = −i[Δ_q/2 σ_z + Ω σ_x, ·] + Γ₋ 𝒟_{σ₋}`; basis `(|e⟩, |g⟩)`.
pub fn qubit_generator(delta_q: f64, drive: f64, gamma_minus: f64) -> Lindbladian {
    let h = ops::sigma_z() * C64::new(delta_q / 2.0, 0.0) + ops::sigma_x() * C64::new(drive, 0.0);
    Lindbladian::new(h, vec![Jump::new(ops::sigma_minus(), gamma_minus)]).expect("hermitian by construction")
}

pub fn build_full_model(p: &TlsBathParams) -> Result<CompositeModel, TlsError> {
    p.validate()?;
    let drive = p.drive();
    let a = ops::sigma_minus() * I;
    let fast = p
        .delta_q
        .iter()
        .map(|&dq| FastSubsystem::new(qubit_generator(dq, drive, p.gamma_minus), a.clone()))
        .collect();
    let b = ops::annihilation(p.fock_dim);
    let h = ops::number(p.fock_dim) * C64::new(p.delta_c, 0.0);
    Ok(CompositeModel::new(fast, b, h, Lindbladian::zero(p.fock_dim), p.g)?)
}

/// Two alternative readings of factors in the closed forms; only [`ClosedFormVariant::RESOLVED`]
/// agrees with the numerical solve, the others are kept for comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClosedFormVariant {
    /// Read the `(Γ₂ + 4Δ_q²)` factor of `W_2` as `(Γ₋² + 4Δ_q²)`; otherwise as `(Γ₋ + 4Δ_q²)`.
    pub w2_gamma_squared: bool,
    /// Divide `W_1` by `conj(Z)`; otherwise by `Z`.
    pub z1_conjugate_denominator: bool,
}

impl ClosedFormVariant {
    /// The reading that agrees with the numerical first-order solve.
    pub const RESOLVED: ClosedFormVariant = ClosedFormVariant { w2_gamma_squared: true, z1_conjugate_denominator: true };
    pub const LITERAL: ClosedFormVariant = ClosedFormVariant { w2_gamma_squared: false, z1_conjugate_denominator: false };

    pub fn all() -> [ClosedFormVariant; 4] {
        [
            Self::RESOLVED,
            ClosedFormVariant { w2_gamma_squared: true, z1_conjugate_denominator: false },
            ClosedFormVariant { w2_gamma_squared: false, z1_conjugate_denominator: true },
            Self::LITERAL,
        ]
    }
}

impl Default for ClosedFormVariant {
    fn default() -> Self {
        Self::RESOLVED
    }
}

/// `(W_1, W_2, Z)` for one TLS; `gv` is the drive product `g ṽ`.
pub fn closed_form_parts(delta_q: f64, delta_c: f64, gamma: f64, gv: f64, variant: ClosedFormVariant) -> (C64, C64, C64) {
    let c = |re: f64, im: f64| C64::new(re, im);
    let (dq, dc, gm) = (delta_q, delta_c, gamma);
    let g2v2 = gv * gv;
    let w1 = c(-4.0 * g2v2, 0.0)
        * (c(0.0, 8.0 * g2v2) + c(gm, dc) * dc * (c(gm, 2.0 * dc).powu(2) + 4.0 * dq * dq));
    let gamma_factor = if variant.w2_gamma_squared { gm * gm } else { gm };
    let w2 = c(0.0, 32.0 * g2v2 * g2v2)
        + c(0.0, 2.0) * c(gm, -dc) * dc.powi(4) * (gamma_factor + 4.0 * dq * dq) * c(gm, -2.0 * (dc + dq))
        - c(4.0 * g2v2 * dc, 0.0)
            * (c(gm.powi(3), -5.0 * gm * gm * dc)
                + c(0.0, 4.0 * dc * (dc * dc + 2.0 * dc * dq - dq * dq))
                + c(4.0 * gm * (-dc * dc + dq * dq), 0.0));
    let z = (8.0 * g2v2 + dc * dc * (gm * gm + 4.0 * dq * dq))
        * (c(16.0 * g2v2 * dc, 8.0 * g2v2 * gm) + dc * dc * c(dc, gm) * (c(gm, -2.0 * dc).powu(2) + 4.0 * dq * dq));
    (w1, w2, z)
}

pub fn closed_form_z_variant(
    delta_q: f64,
    delta_c: f64,
    gamma: f64,
    gv: f64,
    variant: ClosedFormVariant,
) -> Result<(C64, C64), TlsError> {
    if delta_c == 0.0 {
        return Err(TlsError::ZeroDetuning);
    }
    let (w1, w2, z) = closed_form_parts(delta_q, delta_c, gamma, gv, variant);
    if !(z.norm() > 0.0) || !z.norm().is_finite() {
        return Err(TlsError::SingularDenominator(z.norm()));
    }
    let z1 = if variant.z1_conjugate_denominator { w1 / z.conj() } else { w1 / z };
    Ok((z1, w2 / z))
}

/// Closed-form `(z_1, z_2)` of TLS `k`.
pub fn closed_form_z(p: &TlsBathParams, k: usize) -> Result<(C64, C64), TlsError> {
    p.validate()?;
    let dq = *p
        .delta_q
        .get(k)
        .ok_or_else(|| TlsError::InvalidParams(format!("no TLS with index {k}")))?;
    closed_form_z_variant(dq, p.delta_c, p.gamma_minus, p.g * p.v_tilde, ClosedFormVariant::RESOLVED)
}

/// `(z_1, z_2)` of a single TLS from the numerical first-order solve.
pub fn numeric_z(delta_q: f64, delta_c: f64, gamma: f64, gv: f64) -> Result<(C64, C64), TlsError> {
    let p = TlsBathParams {
        g: 1.0,
        gamma_minus: gamma,
        delta_c,
        delta_q: vec![delta_q],
        v_tilde: gv,
        fock_dim: 2,
    };
    let model = build_full_model(&p)?;
    let fo = solve_first_order(&model, Gauge::CancelHs1)?;
    Ok((fo.per_k[0].z1, fo.per_k[0].z2))
}

/// `⟨N⟩ = ṽ² / Δ_c²`.
pub fn photon_number(v_tilde: f64, delta_c: f64) -> Result<f64, TlsError> {
    if delta_c == 0.0 {
        return Err(TlsError::ZeroDetuning);
    }
    Ok(v_tilde * v_tilde / (delta_c * delta_c))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TlsCoefficients {
    pub z1: C64,
    pub z2: C64,
    /// `Im(z_1 + z_2)`.
    pub delta: f64,
    /// `2 Re z_1`.
    pub gamma_adag: f64,
    /// `2 Re z_2`.
    pub gamma_a: f64,
}

impl TlsCoefficients {
    pub fn from_z(z1: C64, z2: C64) -> Self {
        Self { z1, z2, delta: (z1 + z2).im, gamma_adag: 2.0 * z1.re, gamma_a: 2.0 * z2.re }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApplicationCoefficients {
    pub per_k: Vec<TlsCoefficients>,
    /// `g² Σ_k δ^(k)`.
    pub shift: f64,
    /// `g² Σ_k Γ_a^(k)`.
    pub gamma_a: f64,
    /// `g² Σ_k Γ_a†^(k)`.
    pub gamma_adag: f64,
}

impl ApplicationCoefficients {
    fn aggregate(g: f64, per_k: Vec<TlsCoefficients>) -> Self {
        let g2 = g * g;
        let shift = g2 * per_k.iter().map(|c| c.delta).sum::<f64>();
        let gamma_a = g2 * per_k.iter().map(|c| c.gamma_a).sum::<f64>();
        let gamma_adag = g2 * per_k.iter().map(|c| c.gamma_adag).sum::<f64>();
        Self { per_k, shift, gamma_a, gamma_adag }
    }
}

pub fn coefficients(p: &TlsBathParams) -> Result<ApplicationCoefficients, TlsError> {
    p.validate()?;
    let per_k = (0..p.delta_q.len())
        .map(|k| closed_form_z(p, k).map(|(z1, z2)| TlsCoefficients::from_z(z1, z2)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ApplicationCoefficients::aggregate(p.g, per_k))
}

/// Same coefficients from numerical first-order solves.
pub fn coefficients_numeric(p: &TlsBathParams) -> Result<ApplicationCoefficients, TlsError> {
    p.validate()?;
    let gv = p.g * p.v_tilde;
    let per_k = p
        .delta_q
        .iter()
        .map(|&dq| numeric_z(dq, p.delta_c, p.gamma_minus, gv).map(|(z1, z2)| TlsCoefficients::from_z(z1, z2)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ApplicationCoefficients::aggregate(p.g, per_k))
}

/// `n` evenly spaced points on `[lo, hi]` (the midpoint when `n = 1`).
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pub g: f64,
    pub gamma_minus: f64,
    pub delta_c: Vec<f64>,
    pub v_tilde: Vec<f64>,
    /// TLS detunings; the sweep sums over all of them at every grid point.
    pub delta_q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub delta_c: f64,
    pub v_tilde: f64,
    pub n_photons: f64,
    pub shift: f64,
    pub gamma_a: f64,
    pub gamma_adag: f64,
}

/// Rows ordered with `Δ_c` outer and `ṽ` inner.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub n_delta_c: usize,
    pub n_v_tilde: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, i_dc: usize, i_v: usize) -> &SweepRow {
        &self.rows[i_dc * self.n_v_tilde + i_v]
    }

    pub fn all_finite(&self) -> bool {
        self.rows.iter().all(|r| {
            [r.n_photons, r.shift, r.gamma_a, r.gamma_adag].iter().all(|v| v.is_finite())
        })
    }

    /// Largest first difference of `value` along either grid axis, relative to its range.
    pub fn max_relative_step(&self, value: impl Fn(&SweepRow) -> f64) -> f64 {
        let vals: Vec<f64> = self.rows.iter().map(&value).collect();
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let max = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        if !(range > 0.0) {
            return 0.0;
        }
        let mut step = 0.0f64;
        for i in 0..self.n_delta_c {
            for j in 0..self.n_v_tilde {
                let v = vals[i * self.n_v_tilde + j];
                if i + 1 < self.n_delta_c {
                    step = step.max((vals[(i + 1) * self.n_v_tilde + j] - v).abs());
                }
                if j + 1 < self.n_v_tilde {
                    step = step.max((vals[i * self.n_v_tilde + j + 1] - v).abs());
                }
            }
        }
        step / range
    }

    /// Grid points where induced gain exceeds induced loss.
    pub fn gain_dominated(&self) -> Vec<&SweepRow> {
        self.rows.iter().filter(|r| r.gamma_adag > r.gamma_a).collect()
    }
}

pub fn sweep(grid: &SweepGrid) -> Result<SweepTable, TlsError> {
    if grid.delta_c.contains(&0.0) {
        return Err(TlsError::ZeroDetuning);
    }
    if grid.delta_q.is_empty() {
        return Err(TlsError::InvalidParams("delta_q must not be empty".into()));
    }
    let points: Vec<(f64, f64)> = grid
        .delta_c
        .iter()
        .flat_map(|&dc| grid.v_tilde.iter().map(move |&v| (dc, v)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(dc, v)| {
            let p = TlsBathParams {
                g: grid.g,
                gamma_minus: grid.gamma_minus,
                delta_c: dc,
                delta_q: grid.delta_q.clone(),
                v_tilde: v,
                fock_dim: 2,
            };
            let c = coefficients(&p)?;
            Ok(SweepRow {
                delta_c: dc,
                v_tilde: v,
                n_photons: photon_number(v, dc)?,
                shift: c.shift,
                gamma_a: c.gamma_a,
                gamma_adag: c.gamma_adag,
            })
        })
        .collect::<Result<Vec<_>, TlsError>>()?;
    Ok(SweepTable { n_delta_c: grid.delta_c.len(), n_v_tilde: grid.v_tilde.len(), rows })
}

/// Largest relative closed-form/numeric discrepancy over the given rows
/// (`z_1` is skipped when it vanishes identically, i.e. at `ṽ = 0`).
pub fn cross_check(grid: &SweepGrid, rows: &[(usize, usize)]) -> Result<f64, TlsError> {
    let mut worst = 0.0f64;
    for &(i, j) in rows {
        let dc = grid.delta_c[i];
        let gv = grid.g * grid.v_tilde[j];
        for &dq in &grid.delta_q {
            let (c1, c2) = closed_form_z_variant(dq, dc, grid.gamma_minus, gv, ClosedFormVariant::RESOLVED)?;
            let (n1, n2) = numeric_z(dq, dc, grid.gamma_minus, gv)?;
            worst = worst.max(relative_error(c2, n2));
            if gv != 0.0 {
                worst = worst.max(relative_error(c1, n1));
            }
        }
    }
    Ok(worst)
}

pub fn relative_error(a: C64, b: C64) -> f64 {
    let d = (a - b).norm();
    if d == 0.0 {
        0.0
    } else {
        d / b.norm().max(f64::MIN_POSITIVE)
    }
}

/// Worst-case discrepancy of each closed-form reading against numeric solves.
pub fn rank_variants(samples: &[(f64, f64, f64, f64)]) -> Result<Vec<(ClosedFormVariant, f64)>, TlsError> {
    let numeric = samples
        .iter()
        .map(|&(dq, dc, gm, gv)| numeric_z(dq, dc, gm, gv))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::new();
    for variant in ClosedFormVariant::all() {
        let mut worst = 0.0f64;
        for (&(dq, dc, gm, gv), &(n1, n2)) in samples.iter().zip(&numeric) {
            let (c1, c2) = closed_form_z_variant(dq, dc, gm, gv, variant)?;
            worst = worst.max(relative_error(c1, n1)).max(relative_error(c2, n2));
        }
        out.push((variant, worst));
    }
    Ok(out)
}
