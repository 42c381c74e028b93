//! Second-order Kraus embedding `K_2 = K_2^L + K_2^E + K_2^Q`.
//!
//! Index conventions: `h, j ∈ {0, 1}` stand for `B_1 = B†`, `B_2 = B` and
//! `A_1 = A`, `A_2 = A†`; `δ_hj = h − j`.
//!
//! The pieces are stored on the environment space `ℋ_A`:
//! * `p[j][h] = Σ_{k,k'} V_jh^(k,k')` with `ρ̄` on all other factors (`V = U ρ̄`),
//! * `g[h][j]`, the `ℋ_A` factor multiplying `B_h ρs B_j†` in `K_2^Q`,
//!
//! so that
//! `K_2(ρs) = Σ p[j][h] ⊗ B_j†B_h ρs + p[j][h]† ⊗ ρs B_h†B_j + M R M† + Σ g[h][j] ⊗ B_h ρs B_j†`
//! with `R = ρ̄_A ⊗ ρs`.

use std::f64::consts::FRAC_PI_2;

use rayon::prelude::*;

use crate::lindblad::{solve_bordered, solve_shifted, SuperoperatorMatrix};
use crate::qops::{self, kron, HilbertDims, Operator, C64, I, ZERO};

use super::choi::{choi_matrix, choi_min_eigenvalue};
use super::first::{extract_right_factor, FirstOrderData, Gauge};
use super::{CompositeModel, ReduceError};

/// Upper bound of the geometric τ̄ search.
pub const TAU_MAX: f64 = 65536.0;
/// Choi matrices count as PSD down to `−CHOI_TOL · max(1, ‖C‖)`.
pub const CHOI_TOL: f64 = 1e-9;
/// Relative tolerance on `U ρ̄ = V` before the Kraus-form `N` is declared unavailable.
pub const U_EXTRACTION_TOL: f64 = 1e-8;

type Pair = [[Operator; 2]; 2];

fn zero_pair(d: usize) -> Pair {
    [[qops::zeros(d), qops::zeros(d)], [qops::zeros(d), qops::zeros(d)]]
}

/// Per-environment second-order quantities.
#[derive(Debug, Clone)]
pub struct K2Single {
    /// `F̄_hj = Σ_μ [L_μ, F_h] ρ̄ [L_μ, F_j]†`.
    pub fbar: Pair,
    /// Traceless solution of `(ℒ_A + 2icδ_hj) K̄_hj = −𝒮(F̄_hj)`.
    pub kbar: Pair,
    pub b: C64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct K2Diagnostics {
    /// `max ‖ℒ(K̄) + 2icδK̄ + 𝒮(F̄)‖ / ‖F̄‖`.
    pub kbar_residual: f64,
    /// Largest relative residual of the `V` equations and their trace conditions.
    pub u_residual: f64,
    /// `max |tr K_2(ρs)|` over the matrix-unit basis.
    pub trace_defect: f64,
    /// Smallest Choi eigenvalue of the τ̄-regularised kernel at the chosen τ̄.
    pub kernel_min_eigenvalue: f64,
    /// Number of doublings performed from τ̄ = 1.
    pub tau_doublings: u32,
    /// Largest `‖Uρ̄ − V‖/‖V‖`.
    pub u_extraction_residual: f64,
    /// Imaginary parts dropped from `f_1`, `f_2`.
    pub f_imaginary: f64,
}

#[derive(Debug, Clone)]
pub struct K2Data {
    pub tau_bar: f64,
    pub f1: f64,
    pub f2: f64,
    pub per_k: Vec<K2Single>,
    /// `v[k][k'][h][j]` on `ℋ_A^(k) ⊗ ℋ_A^(k')` (on `ℋ_A^(k)` when `k = k'`).
    pub v: Vec<Vec<Pair>>,
    /// `U = V ρ̄⁺`, when the extraction is consistent.
    pub u: Option<Vec<Vec<Pair>>>,
    pub p: Pair,
    pub g: Pair,
    /// `N = Σ U_jh ⊗ B_j†B_h` on the full space, when available.
    pub n: Option<Operator>,
    pub diagnostics: K2Diagnostics,
    bs: [Operator; 2],
    m: Operator,
    rho_a: Operator,
}

impl K2Data {
    /// `K_2(ρs)`.
    pub fn apply(&self, rs: &Operator) -> Operator {
        let r = kron(&self.rho_a, rs);
        let mut out = &self.m * &r * self.m.adjoint();
        for j in 0..2 {
            for h in 0..2 {
                let left = self.bs[j].adjoint() * &self.bs[h];
                out += kron(&self.p[j][h], &(&left * rs)) + kron(&self.p[j][h].adjoint(), &(rs * left.adjoint()));
            }
        }
        out + self.apply_quadratic(rs)
    }

    /// `K_2^Q(ρs)`.
    pub fn apply_quadratic(&self, rs: &Operator) -> Operator {
        let da = self.rho_a.nrows();
        let db = rs.nrows();
        let mut out = qops::zeros(da * db);
        for h in 0..2 {
            for j in 0..2 {
                out += kron(&self.g[h][j], &(&self.bs[h] * rs * self.bs[j].adjoint()));
            }
        }
        out
    }

    pub fn m(&self) -> &Operator {
        &self.m
    }
}

fn commutator_terms(jumps: &[crate::lindblad::Jump], f: &Operator) -> Vec<Operator> {
    jumps
        .iter()
        .map(|j| qops::commutator(&j.operator, f) * C64::new(j.rate.sqrt(), 0.0))
        .collect()
}

fn joint_generator(model: &CompositeModel, k: usize, kp: usize) -> Result<(SuperoperatorMatrix, Operator), ReduceError> {
    if k == kp {
        return Ok((model.env_superoperator(k).clone(), model.rho_bar(k).as_operator().clone()));
    }
    let gk = &model.fast()[k].gen_a;
    let gkp = &model.fast()[kp].gen_a;
    let dims = HilbertDims::new(vec![gk.dim(), gkp.dim()])?;
    let joint = gk.embed(&dims, &[0])?.plus(&gkp.embed(&dims, &[1])?)?;
    let rho = kron(model.rho_bar(k).as_operator(), model.rho_bar(kp).as_operator());
    Ok((joint.to_superoperator(), rho))
}

fn rel(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den.max(f64::MIN_POSITIVE)
    }
}

fn single_env(model: &CompositeModel, fo: &FirstOrderData, k: usize, c: f64) -> Result<(K2Single, f64), ReduceError> {
    let terms = &fo.per_k[k];
    let rho = model.rho_bar(k).as_operator();
    let jumps = model.fast()[k].gen_a.jumps();
    let s = model.env_superoperator(k);
    let comms = [commutator_terms(jumps, &terms.f[0]), commutator_terms(jumps, &terms.f[1])];
    let d = rho.nrows();
    let mut fbar = zero_pair(d);
    for h in 0..2 {
        for j in 0..2 {
            fbar[h][j] = comms[h]
                .iter()
                .zip(&comms[j])
                .fold(qops::zeros(d), |acc, (ch, cj)| acc + ch * rho * cj.adjoint());
        }
    }
    let b = -fbar[1][0].trace() / C64::new(2.0 * c, 0.0);
    let mut kbar = zero_pair(d);
    let mut residual = 0.0f64;
    let gen = &model.fast()[k].gen_a;
    for h in 0..2 {
        for j in 0..2 {
            let delta = h as f64 - j as f64;
            let projected = &fbar[h][j] - rho * fbar[h][j].trace();
            let shift = I * (2.0 * c * delta);
            kbar[h][j] = if delta == 0.0 {
                solve_bordered(s, rho, &fbar[h][j], ZERO)?
            } else {
                solve_shifted(s, shift, &projected)?
            };
            let r = (gen.apply(&kbar[h][j]) + &kbar[h][j] * shift + &projected).norm();
            residual = residual.max(rel(r, fbar[h][j].norm()));
        }
    }
    Ok((K2Single { fbar, kbar, b }, residual))
}

struct PairSolve {
    v: Pair,
    residual: f64,
}

#[allow(clippy::too_many_arguments)]
fn solve_v(
    model: &CompositeModel,
    fo: &FirstOrderData,
    singles: &[K2Single],
    k: usize,
    kp: usize,
    c: f64,
    tau: f64,
) -> Result<PairSolve, ReduceError> {
    let (s, rho_joint) = joint_generator(model, k, kp)?;
    let dj = rho_joint.nrows();
    let a = &model.fast()[k].coupling_a;
    // A_j† for j = 1, 2: A†, A.
    let a_dag_j = [a.adjoint(), a.clone()];
    let tk = &fo.per_k[k];
    let tkp = &fo.per_k[kp];
    let rho_k = model.rho_bar(k).as_operator();
    let mut v = zero_pair(dj);
    let mut residual = 0.0f64;
    for h in 0..2 {
        for j in 0..2 {
            let rhs = if k == kp {
                &a_dag_j[j] * &tk.x[h]
            } else {
                kron(&(&a_dag_j[j] * rho_k), &tkp.x[h])
            };
            let delta = h as f64 - j as f64;
            if delta != 0.0 {
                let shift = I * (2.0 * c * delta);
                v[h][j] = solve_shifted(&s, shift, &(-&rhs))?;
                let r = (SuperoperatorMatrix::apply(&s, &v[h][j]) + &v[h][j] * shift - &rhs).norm();
                residual = residual.max(rel(r, rhs.norm()));
            } else {
                let mut t = if k == kp {
                    -(&tk.f[h] * rho_k * tk.f[h].adjoint()).trace()
                } else {
                    -(tk.x[h].trace() * tkp.x[h].trace().conj())
                };
                if k == kp {
                    let single = &singles[k];
                    let extra = if h == 0 { FRAC_PI_2 } else { FRAC_PI_2 * single.b.norm_sqr() };
                    t -= single.fbar[h][h].trace() * tau + extra;
                }
                v[h][j] = solve_bordered(&s, &rho_joint, &(-&rhs), t)?;
                let projected = &rhs - &rho_joint * rhs.trace();
                let r = (s.apply(&v[h][j]) - &projected).norm();
                residual = residual.max(rel(r, rhs.norm().max(1.0)));
                residual = residual.max((v[h][j].trace() - t).norm() / t.norm().max(1.0));
            }
        }
    }
    Ok(PairSolve { v, residual })
}

/// Choi matrices of the two parts of the τ̄-regularised kernel:
/// `Σ_k Σ_hj ρ̄^[k]K̄_hj ⊗ B_h ρ B_j†` and `Σ_k Σ_h tr F̄_hh ρ̄ ⊗ B_h ρ B_h†`.
fn kernel_chois(
    model: &CompositeModel,
    singles: &[K2Single],
    bs: &[Operator; 2],
) -> Result<(Operator, Operator), ReduceError> {
    let da = model.dim_a();
    let rho_a = model.rho_bar_a();
    let mut placed = zero_pair(da);
    let mut weights = [ZERO, ZERO];
    for (k, single) in singles.iter().enumerate() {
        for h in 0..2 {
            for j in 0..2 {
                placed[h][j] += model.place_a(&single.kbar[h][j], &[k], |m| model.rho_bar(m).as_operator().clone())?;
            }
            weights[h] += single.fbar[h][h].trace();
        }
    }
    let db = model.dim_b();
    let base = choi_matrix(
        |rs| {
            let mut out = qops::zeros(da * db);
            for h in 0..2 {
                for j in 0..2 {
                    out += kron(&placed[h][j], &(&bs[h] * rs * bs[j].adjoint()));
                }
            }
            out
        },
        db,
    );
    let reg = choi_matrix(
        |rs| {
            let mut out = qops::zeros(da * db);
            for h in 0..2 {
                out += kron(&rho_a, &(&bs[h] * rs * bs[h].adjoint())) * weights[h];
            }
            out
        },
        db,
    );
    Ok((base, reg))
}

fn search_tau(base: &Operator, reg: &Operator) -> Result<(f64, f64, u32), ReduceError> {
    let mut tau = 1.0;
    let mut doublings = 0;
    loop {
        let c = base + reg * C64::new(tau, 0.0);
        let min = choi_min_eigenvalue(&c);
        if min >= -CHOI_TOL * c.norm().max(1.0) {
            return Ok((tau, min, doublings));
        }
        if tau >= TAU_MAX {
            return Err(ReduceError::TauSearchFailed { tau_max: TAU_MAX, min_eigenvalue: min });
        }
        tau *= 2.0;
        doublings += 1;
    }
}

/// Build all second-order embedding data.
///
/// Requires the H_s1-cancelling gauge, `ℒ_B = 0` and `c > 0`.
pub fn build_k2(model: &CompositeModel, fo: &FirstOrderData) -> Result<K2Data, ReduceError> {
    if fo.gauge != Gauge::CancelHs1 {
        return Err(ReduceError::PreconditionViolated(
            "the second-order embedding is built in the H_s1-cancelling gauge".into(),
        ));
    }
    if !model.gen_b().is_zero(0.0) {
        return Err(ReduceError::PreconditionViolated("second order requires L_B = 0".into()));
    }
    let c = fo.c;
    if !(c > 0.0) {
        return Err(ReduceError::PreconditionViolated(format!(
            "the second-order embedding requires a positive commutation constant, got {c}"
        )));
    }
    let kn = model.num_fast();
    let dims = model.dims();
    let bfull = model.coupling_b();
    let bs = [bfull.adjoint(), bfull.clone()];

    let singles_res = (0..kn)
        .into_par_iter()
        .map(|k| single_env(model, fo, k, c))
        .collect::<Result<Vec<_>, _>>()?;
    let kbar_residual = singles_res.iter().map(|(_, r)| *r).fold(0.0, f64::max);
    let singles: Vec<K2Single> = singles_res.into_iter().map(|(s, _)| s).collect();

    let (base, reg) = kernel_chois(model, &singles, &bs)?;
    let (tau, kernel_min, doublings) = search_tau(&base, &reg)?;

    let pairs: Vec<(usize, usize)> = (0..kn).flat_map(|k| (0..kn).map(move |kp| (k, kp))).collect();
    let solved = pairs
        .par_iter()
        .map(|&(k, kp)| solve_v(model, fo, &singles, k, kp, c, tau))
        .collect::<Result<Vec<_>, _>>()?;
    let u_residual = solved.iter().map(|s| s.residual).fold(0.0, f64::max);
    let mut v: Vec<Vec<Pair>> = Vec::with_capacity(kn);
    let mut it = solved.into_iter();
    for _ in 0..kn {
        v.push((0..kn).map(|_| it.next().expect("one solve per pair").v).collect());
    }

    let da = model.dim_a();
    let rho_a = model.rho_bar_a();
    let rho_fill = |m: usize| model.rho_bar(m).as_operator().clone();
    let factors = |k: usize, kp: usize| if k == kp { vec![k] } else { vec![k, kp] };

    let mut p = zero_pair(da);
    for k in 0..kn {
        for kp in 0..kn {
            for h in 0..2 {
                for j in 0..2 {
                    p[j][h] += model.place_a(&v[k][kp][h][j], &factors(k, kp), rho_fill)?;
                }
            }
        }
    }

    // U = V ρ̄⁺ and N, for the Kraus form.
    let mut u_extraction_residual = 0.0f64;
    let mut u: Vec<Vec<Pair>> = Vec::with_capacity(kn);
    for k in 0..kn {
        let mut row = Vec::with_capacity(kn);
        for kp in 0..kn {
            let rho_joint = if k == kp {
                model.rho_bar(k).as_operator().clone()
            } else {
                kron(model.rho_bar(k).as_operator(), model.rho_bar(kp).as_operator())
            };
            let mut pair = zero_pair(rho_joint.nrows());
            for h in 0..2 {
                for j in 0..2 {
                    let (uu, r) = extract_right_factor(&v[k][kp][h][j], &rho_joint);
                    u_extraction_residual = u_extraction_residual.max(r);
                    pair[h][j] = uu;
                }
            }
            row.push(pair);
        }
        u.push(row);
    }
    let (u, n) = if u_extraction_residual <= U_EXTRACTION_TOL {
        let b_emb = qops::embed(bfull, dims, &[kn])?;
        let bs_full = [b_emb.adjoint(), b_emb];
        let mut n = qops::zeros(model.total_dim());
        let db = model.dim_b();
        for k in 0..kn {
            for kp in 0..kn {
                for h in 0..2 {
                    for j in 0..2 {
                        let ua = model.place_a(&u[k][kp][h][j], &factors(k, kp), |m| {
                            qops::identity(model.dims().factors()[m])
                        })?;
                        n += kron(&ua, &qops::identity(db)) * (bs_full[j].adjoint() * &bs_full[h]);
                    }
                }
            }
        }
        (Some(u), Some(n))
    } else {
        (None, None)
    };

    // f_1, f_2 from trace preservation.
    let mut mh = [qops::zeros(da), qops::zeros(da)];
    for (k, t) in fo.per_k.iter().enumerate() {
        for h in 0..2 {
            mh[h] += model.place_a(&t.f[h], &[k], |m| qops::identity(model.dims().factors()[m]))?;
        }
    }
    let mut f = [ZERO, ZERO];
    let mut diag_extra = [ZERO, ZERO];
    let mut bsum = ZERO;
    for h in 0..2 {
        f[h] = (&mh[h] * &rho_a * mh[h].adjoint()).trace();
        for single in &singles {
            let extra = if h == 0 { FRAC_PI_2 } else { FRAC_PI_2 * single.b.norm_sqr() };
            let term = single.fbar[h][h].trace() * tau + extra;
            f[h] += term;
            diag_extra[h] += term;
        }
    }
    for single in &singles {
        bsum += single.b;
    }
    let f_imaginary = f[0].im.abs().max(f[1].im.abs());
    let (f1, f2) = (f[0].re, f[1].re);

    let mut g = zero_pair(da);
    for (k, single) in singles.iter().enumerate() {
        for h in 0..2 {
            for j in 0..2 {
                g[h][j] += model.place_a(&single.kbar[h][j], &[k], rho_fill)?;
            }
        }
    }
    g[0][0] += &rho_a * (diag_extra[0] + f1);
    g[1][1] += &rho_a * (diag_extra[1] + f2);
    g[0][1] += &rho_a * (I * bsum.conj());
    g[1][0] += &rho_a * (-I * bsum);

    let m = fo.m_operator(model)?;
    let mut data = K2Data {
        tau_bar: tau,
        f1,
        f2,
        per_k: singles,
        v,
        u,
        p,
        g,
        n,
        diagnostics: K2Diagnostics {
            kbar_residual,
            u_residual,
            trace_defect: 0.0,
            kernel_min_eigenvalue: kernel_min,
            tau_doublings: doublings,
            u_extraction_residual,
            f_imaginary,
        },
        bs,
        m,
        rho_a,
    };
    let db = model.dim_b();
    let mut trace_defect = 0.0f64;
    for i in 0..db {
        for j in 0..db {
            trace_defect = trace_defect.max(data.apply(&qops::matrix_unit(db, i, j)).trace().norm());
        }
    }
    data.diagnostics.trace_defect = trace_defect;
    Ok(data)
}
