mod common;

use common::{cos_diff_matrix, random_measure, rng, separable_matrix};
use mfgda::diagnostics::{energy, max_energy, min_energy};
use mfgda::equilibrium::{fixed_point_mne, BestResponseContext, FixedPointOptions};
use mfgda::measures::total_variation;
use mfgda::GridMeasure;
use rand::Rng;

#[test]
fn best_response_beats_perturbations() {
    let m = separable_matrix(64);
    let ctx = BestResponseContext::new(&m, 1.0).unwrap();
    let mut r = rng(21);
    for _ in 0..5 {
        let mu = random_measure(*m.x_grid(), &mut r);
        let br = ctx.k_plus(&mu).unwrap();
        let best = energy(&m, &mu, &br, 1.0).unwrap().e_tau;
        for _ in 0..20 {
            let other = random_measure(*m.y_grid(), &mut r);
            let w = r.random_range(0.0..1.0);
            let nu = br.mix(&other, w).unwrap();
            assert!(best >= energy(&m, &mu, &nu, 1.0).unwrap().e_tau - 1e-10);
        }
    }
}

#[test]
fn best_responses_are_normalized_and_positive() {
    let m = separable_matrix(32);
    let ctx = BestResponseContext::new(&m, 0.2).unwrap();
    let mu = random_measure(*m.x_grid(), &mut rng(1));
    for out in [ctx.k_plus(&mu).unwrap(), ctx.k_minus(&mu).unwrap()] {
        assert!((out.mass() - 1.0).abs() < 1e-12);
        assert!(out.density().iter().all(|&v| v > 0.0));
    }
}

#[test]
fn minmax_equality_at_the_equilibrium() {
    for tau in [0.5, 1.0, 2.0] {
        let m = separable_matrix(64);
        let ctx = BestResponseContext::new(&m, tau).unwrap();
        let mne = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap().ensure_converged().unwrap();
        assert!(mne.residual < 1e-10);
        let upper = max_energy(&ctx, &mne.mu_star).unwrap();
        let lower = min_energy(&ctx, &mne.nu_star).unwrap();
        assert!((upper - lower).abs() < 1e-8, "τ = {tau}: {upper} vs {lower}");
    }
}

#[test]
fn log_partitions_are_convex_along_segments() {
    let m = separable_matrix(64);
    let ctx = BestResponseContext::new(&m, 1.0).unwrap();
    let mut r = rng(4);
    for _ in 0..50 {
        let a = random_measure(*m.x_grid(), &mut r);
        let b = random_measure(*m.x_grid(), &mut r);
        let mid = a.mix(&b, 0.5).unwrap();
        let lhs = ctx.log_partition_plus(&mid).unwrap();
        let rhs = 0.5 * (ctx.log_partition_plus(&a).unwrap() + ctx.log_partition_plus(&b).unwrap());
        assert!(lhs <= rhs + 1e-12);
        let lhs = ctx.log_partition_minus(&mid).unwrap();
        let rhs = 0.5 * (ctx.log_partition_minus(&a).unwrap() + ctx.log_partition_minus(&b).unwrap());
        assert!(lhs <= rhs + 1e-12);
    }
}

#[test]
fn damping_does_not_change_the_equilibrium() {
    let m = separable_matrix(64);
    let ctx = BestResponseContext::new(&m, 1.0).unwrap();
    let run = |damping| {
        fixed_point_mne(&ctx, &FixedPointOptions { damping, ..Default::default() })
            .unwrap()
            .ensure_converged()
            .unwrap()
    };
    let (a, b) = (run(0.3), run(1.0));
    assert!(total_variation(&a.mu_star, &b.mu_star).unwrap() < 1e-8);
    assert!(total_variation(&a.nu_star, &b.nu_star).unwrap() < 1e-8);
}

#[test]
fn cos_diff_equilibrium_is_uniform() {
    let m = cos_diff_matrix(64);
    let ctx = BestResponseContext::new(&m, 1.0).unwrap();
    let mne = fixed_point_mne(&ctx, &FixedPointOptions::default()).unwrap();
    let u = GridMeasure::uniform(*m.x_grid());
    assert!(mne.mu_star.max_abs_diff(&u) < 1e-8);
    assert!(mne.nu_star.max_abs_diff(&u) < 1e-8);
}
