use adelim_core::qops::{self, ops, DensityOperator, C64};
use adelim_core::reduce::{check_assumption_cb, reduce, solve_first_order, Gauge};
use adelim_core::tlsbath::*;
use adelim_core::verify::invariance_residual;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn params(delta_q: Vec<f64>, v: f64, fock: usize) -> TlsBathParams {
    TlsBathParams { g: 0.05, gamma_minus: 1.0, delta_c: 0.8, delta_q, v_tilde: v, fock_dim: fock }
}

#[test]
fn undriven_environment_decays_to_ground() {
    let model = build_full_model(&params(vec![0.4], 0.0, 3)).unwrap();
    let ground = DensityOperator::basis_state(2, 1);
    assert!((model.rho_bar(0).as_operator() - ground.as_operator()).norm() < 1e-12);
}

#[test]
fn commutation_constant_is_resonator_detuning() {
    let p = params(vec![0.4], 2.0, 4);
    let cb = check_assumption_cb(&(ops::number(4) * C64::new(p.delta_c, 0.0)), &ops::annihilation(4)).unwrap();
    assert!((cb.value - p.delta_c).abs() < 1e-14);
    let model = build_full_model(&p).unwrap();
    assert!((model.cb().value - p.delta_c).abs() < 1e-14);
}

#[test]
fn three_tls_dimension_bookkeeping() {
    let model = build_full_model(&params(vec![-0.5, 0.1, 0.9], 1.0, 3)).unwrap();
    assert_eq!(model.total_dim(), 24);
    let rho_a = model.rho_bar_a();
    let rho_b = DensityOperator::basis_state(3, 1);
    let joint = qops::kron(&rho_a, rho_b.as_operator());
    let back_b = qops::partial_trace(&joint, model.dims(), &[3]).unwrap();
    assert!((back_b - rho_b.as_operator()).norm() < 1e-14);
    for k in 0..3 {
        let single = qops::partial_trace(&joint, model.dims(), &[k]).unwrap();
        assert!((single - model.rho_bar(k).as_operator()).norm() < 1e-13);
    }
}

#[test]
fn closed_forms_match_numeric_solves() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..25 {
        let dq = rng.gen_range(-3.0..3.0);
        let dc = rng.gen_range(0.2..3.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let gm = rng.gen_range(0.2..3.0);
        let gv = rng.gen_range(0.0..2.0);
        let (c1, c2) = closed_form_z_variant(dq, dc, gm, gv, ClosedFormVariant::RESOLVED).unwrap();
        let (n1, n2) = numeric_z(dq, dc, gm, gv).unwrap();
        assert!(relative_error(c1, n1) <= 1e-9, "z1 {c1} vs {n1}");
        assert!(relative_error(c2, n2) <= 1e-9, "z2 {c2} vs {n2}");
    }
}

#[test]
fn undriven_z2_matches_numeric() {
    let (c1, c2) = closed_form_z_variant(0.7, -1.3, 0.9, 0.0, ClosedFormVariant::RESOLVED).unwrap();
    let (_, n2) = numeric_z(0.7, -1.3, 0.9, 0.0).unwrap();
    assert_eq!(c1, C64::new(0.0, 0.0));
    assert!(relative_error(c2, n2) <= 1e-9);
}

#[test]
fn only_resolved_variant_agrees() {
    let samples = [(0.3, 0.8, 1.0, 0.6), (-1.1, -0.4, 0.5, 1.2), (2.0, 1.5, 2.5, 0.3)];
    let ranked = rank_variants(&samples).unwrap();
    for (variant, err) in ranked {
        if variant == ClosedFormVariant::RESOLVED {
            assert!(err <= 1e-9, "{err}");
        } else {
            assert!(err > 1e-3, "{variant:?} unexpectedly agrees ({err})");
        }
    }
}

#[test]
fn scale_covariance() {
    let (dq, dc, gm, gv) = (0.6, -0.9, 1.3, 0.8);
    let (a1, a2) = numeric_z(dq, dc, gm, gv).unwrap();
    // The drive on each TLS is gṽ/Δ_c, so the product gṽ carries two powers of frequency.
    for lambda in [0.1, 7.0, 1e6] {
        let gv_l = lambda * lambda * gv;
        let (b1, b2) = numeric_z(lambda * dq, lambda * dc, lambda * gm, gv_l).unwrap();
        assert!(relative_error(b1 * lambda, a1) < 1e-9);
        assert!(relative_error(b2 * lambda, a2) < 1e-9);
        let (c1, c2) = closed_form_z_variant(lambda * dq, lambda * dc, lambda * gm, gv_l, ClosedFormVariant::RESOLVED).unwrap();
        assert!(relative_error(c1 * lambda, a1) < 1e-9);
        assert!(relative_error(c2 * lambda, a2) < 1e-9);
    }
}

#[test]
fn reduced_model_passes_invariance() {
    let model = build_full_model(&params(vec![0.4], 1.5, 3)).unwrap();
    let r = reduce(&model, 2, Gauge::CancelHs1).unwrap();
    for order in 0..=2 {
        let res = invariance_residual(&model, &r, order).unwrap();
        assert!(res.residual_rel <= 1e-9, "order {order}: {res:?}");
    }
}

#[test]
fn numeric_coefficients_match_closed_form_and_first_order_solve() {
    let p = params(vec![-0.3, 0.5], 1.1, 3);
    let closed = coefficients(&p).unwrap();
    let numeric = coefficients_numeric(&p).unwrap();
    assert!((closed.shift - numeric.shift).abs() <= 1e-9 * numeric.shift.abs().max(1e-12));
    assert!((closed.gamma_a - numeric.gamma_a).abs() <= 1e-9 * numeric.gamma_a.abs());
    // The full two-TLS model gives the same per-k terms as isolated single TLS solves.
    let model = build_full_model(&p).unwrap();
    let fo = solve_first_order(&model, Gauge::CancelHs1).unwrap();
    for k in 0..2 {
        assert!(relative_error(fo.per_k[k].z2, closed.per_k[k].z2) <= 1e-9);
        assert!(relative_error(fo.per_k[k].z1, closed.per_k[k].z1) <= 1e-9);
    }
}

#[test]
fn multi_tls_sweep_is_sum_of_single_sweeps() {
    let delta_q = vec![-1.0, 0.2, 0.9];
    let grid = |dq: Vec<f64>| SweepGrid {
        g: 0.1,
        gamma_minus: 1.0,
        delta_c: uniform_grid(-2.0, 2.0, 4),
        v_tilde: uniform_grid(0.0, 5.0, 3),
        delta_q: dq,
    };
    let total = sweep(&grid(delta_q.clone())).unwrap();
    let singles: Vec<_> = delta_q.iter().map(|&d| sweep(&grid(vec![d])).unwrap()).collect();
    for (i, row) in total.rows.iter().enumerate() {
        let shift: f64 = singles.iter().map(|s| s.rows[i].shift).sum();
        let ga: f64 = singles.iter().map(|s| s.rows[i].gamma_a).sum();
        let gad: f64 = singles.iter().map(|s| s.rows[i].gamma_adag).sum();
        assert!((row.shift - shift).abs() <= 1e-12 * shift.abs().max(1.0));
        assert!((row.gamma_a - ga).abs() <= 1e-12 * ga.abs().max(1.0));
        assert!((row.gamma_adag - gad).abs() <= 1e-12 * gad.abs().max(1.0));
    }
}

#[test]
fn undriven_column_is_static_shift() {
    let g = SweepGrid { g: 0.2, gamma_minus: 1.0, delta_c: vec![-1.5, 0.7], v_tilde: vec![0.0, 1.0], delta_q: vec![-0.4, 0.6] };
    let table = sweep(&g).unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!((table.rows[1].delta_c, table.rows[1].v_tilde), (-1.5, 1.0));
    for (i, &dc) in g.delta_c.iter().enumerate() {
        let row = table.row(i, 0);
        let expected: f64 = g
            .delta_q
            .iter()
            .map(|&dq| closed_form_z_variant(dq, dc, 1.0, 0.0, ClosedFormVariant::RESOLVED).unwrap().1.im)
            .sum::<f64>()
            * 0.04;
        assert!((row.shift - expected).abs() <= 1e-15 * expected.abs().max(1.0));
        assert_eq!(row.gamma_adag, 0.0);
        assert_eq!(row.n_photons, 0.0);
    }
    assert!(cross_check(&g, &[(0, 0), (1, 1)]).unwrap() <= 1e-9);
}

#[test]
fn sweep_is_deterministic() {
    let g = SweepGrid {
        g: 30e3,
        gamma_minus: 10e6,
        delta_c: uniform_grid(-20e6, 20e6, 6),
        v_tilde: uniform_grid(0.0, 10e9, 5),
        delta_q: uniform_grid(-100e6, 100e6, 8),
    };
    let a = sweep(&g).unwrap();
    let b = sweep(&g).unwrap();
    assert_eq!(a, b);
    assert!(a.all_finite());
}
