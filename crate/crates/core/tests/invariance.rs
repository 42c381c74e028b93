use adelim_core::instances::{random_model, RandomModelSpec};
use adelim_core::reduce::{reduce, Gauge};
use adelim_core::verify::invariance_residual;

fn spec(k: usize, db: usize, target: bool) -> RandomModelSpec {
    RandomModelSpec { num_fast: k, dim_a: 2, dim_b: db, target_generator: target, epsilon: 0.05 }
}

#[test]
fn zero_and_first_order_both_gauges() {
    for seed in 0..6u64 {
        let k = 1 + (seed as usize % 2);
        let model = random_model(seed, spec(k, 2 + (seed as usize % 2), seed % 3 == 0)).unwrap();
        for gauge in [Gauge::CancelHs1, Gauge::Traceless] {
            let r = reduce(&model, 1, gauge).unwrap();
            let r0 = invariance_residual(&model, &r, 0).unwrap();
            let r1 = invariance_residual(&model, &r, 1).unwrap();
            assert!(r0.residual_rel <= 1e-13, "seed {seed}: order 0 {r0:?}");
            assert!(r1.residual_rel <= 1e-10, "seed {seed} {gauge}: order 1 {r1:?}");
        }
    }
}

#[test]
fn second_order_with_cross_terms() {
    for seed in 10..14u64 {
        let model = random_model(seed, spec(2, 3, false)).unwrap();
        let r = reduce(&model, 2, Gauge::CancelHs1).unwrap();
        let r2 = invariance_residual(&model, &r, 2).unwrap();
        assert!(r2.residual_rel <= 1e-9, "seed {seed}: {r2:?}");
        let d = &r.second.as_ref().unwrap().k2.as_ref().unwrap().diagnostics;
        assert!(d.trace_defect <= 1e-9, "{d:?}");
        assert!(d.kbar_residual <= 1e-10, "{d:?}");
        assert!(d.u_residual <= 1e-9, "{d:?}");
    }
}

#[test]
fn traceless_gauge_residual_is_not_trivially_zero() {
    let model = random_model(3, spec(1, 3, false)).unwrap();
    let a = reduce(&model, 1, Gauge::CancelHs1).unwrap();
    let b = reduce(&model, 1, Gauge::Traceless).unwrap();
    assert!(a.first.h_s1.norm() == 0.0);
    assert!(b.first.h_s1.norm() > 1e-3);
    // Corrupting F must break the first-order equation.
    let mut bad = a.clone();
    bad.embedding = adelim_core::reduce::KrausEmbedding::new(
        &model,
        &{
            let mut fo = a.first.clone();
            fo.per_k[0].f[0] *= adelim_core::qops::C64::new(1.5, 0.0);
            fo
        },
        None,
        1,
    )
    .unwrap();
    let r = invariance_residual(&model, &bad, 1).unwrap();
    assert!(r.residual_rel > 1e-3);
}
