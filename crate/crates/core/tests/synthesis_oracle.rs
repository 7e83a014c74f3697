mod common;

use common::{feasible_dims, joint_oracle, max_block_diff, random_instance, rng};
use nalgebra::DMatrix;
use rand::Rng;
use sls_deploy::synthesis::{achievability_residual, h2_objective, synthesize_h2, SynthesisProblem};
use sls_deploy::LtiSystem;

#[test]
fn scalar_two_tap_optimum() {
    let sys = LtiSystem::scalar(0.5, 1.0).unwrap();
    let s = synthesize_h2(&SynthesisProblem::new(sys.clone(), 2)).unwrap();
    let r = &s.response;
    assert!((r.phi_x(2)[(0, 0)] - 2.0 / 9.0).abs() < 1e-12);
    assert!((r.phi_u(1)[(0, 0)] + 5.0 / 18.0).abs() < 1e-12);
    assert!((r.phi_u(2)[(0, 0)] + 1.0 / 9.0).abs() < 1e-12);
    assert!((s.objective - 41.0 / 36.0).abs() < 1e-12);

    let o = joint_oracle(&sys, 2, &DMatrix::identity(1, 1), &DMatrix::identity(1, 1), None, None);
    assert!((o.objective - 41.0 / 36.0).abs() < 1e-10);
}

#[test]
fn matches_joint_oracle_on_random_weighted_instances() {
    for seed in 0..25 {
        let mut r = rng(1000 + seed);
        let (nx, nu, t) = feasible_dims(&mut r, 4, 3, 4);
        let rho = r.random_range(0.2..0.95);
        let sys = LtiSystem::random_stable(&mut r, nx, nu, rho);
        let lq = DMatrix::from_fn(nx, nx, |_, _| r.random_range(-1.0..1.0));
        let lr = DMatrix::from_fn(nu, nu, |_, _| r.random_range(-1.0..1.0));
        let q = &lq * lq.transpose() + DMatrix::identity(nx, nx) * 0.1;
        let rw = &lr * lr.transpose() + DMatrix::identity(nu, nu) * 0.1;
        let prob = SynthesisProblem::new(sys.clone(), t).with_weights(q.clone(), rw.clone());
        let s = synthesize_h2(&prob).unwrap();
        let o = joint_oracle(&sys, t, &q, &rw, None, None);
        assert!(o.residual < 1e-9, "oracle infeasible on seed {seed}");
        let scale = o.objective.abs().max(1.0);
        assert!((s.objective - o.objective).abs() <= 1e-8 * scale, "seed {seed}: {} vs {}", s.objective, o.objective);
        assert!(max_block_diff(s.response.phi_u_blocks(), &o.phi_u) < 1e-6, "seed {seed}");
        assert!(max_block_diff(s.response.phi_x_blocks(), &o.phi_x) < 1e-6, "seed {seed}");
        let recomputed = h2_objective(&s.response, &q, &rw);
        assert!((recomputed - s.objective).abs() <= 1e-10 * scale);
    }
}

#[test]
fn matches_joint_oracle_with_masks() {
    for seed in 0..15 {
        let mut r = rng(2000 + seed);
        let nx = r.random_range(2..=4);
        let t = r.random_range(2..=4);
        // Full actuation with mask_u covering supp(A) keeps Φu[1] = -A feasible.
        let mut a = DMatrix::from_fn(nx, nx, |i, j| if i == j || r.random_bool(0.4) { r.random_range(-1.0..1.0) } else { 0.0 });
        a *= 0.7 / sls_deploy::lti::spectral_radius(&a).unwrap().max(1e-3);
        let sys = LtiSystem::new(a.clone(), DMatrix::identity(nx, nx)).unwrap();
        let mask_u = DMatrix::from_fn(nx, nx, |i, j| a[(i, j)] != 0.0 || r.random_bool(0.3));
        let mask_x = DMatrix::from_fn(nx, nx, |i, j| i == j || r.random_bool(0.7));
        let prob = SynthesisProblem::new(sys.clone(), t).with_masks(Some(mask_x.clone()), Some(mask_u.clone()));
        let o = joint_oracle(&sys, t, &prob.q, &prob.r, Some(&mask_x), Some(&mask_u));
        match synthesize_h2(&prob) {
            Ok(s) => {
                assert!(o.residual < 1e-8, "seed {seed}: oracle says infeasible");
                assert!((s.objective - o.objective).abs() <= 1e-8 * o.objective.max(1.0), "seed {seed}");
                for tau in 1..=t {
                    for (i, j) in (0..nx).flat_map(|i| (0..nx).map(move |j| (i, j))) {
                        if !mask_x[(i, j)] {
                            assert_eq!(s.response.phi_x(tau)[(i, j)], 0.0);
                        }
                        if !mask_u[(i, j)] {
                            assert_eq!(s.response.phi_u(tau)[(i, j)], 0.0);
                        }
                    }
                }
                assert!(achievability_residual(&s.response, &sys).unwrap().residual <= 1e-8);
            }
            Err(e) => assert!(o.residual > 1e-8, "seed {seed}: {e} but oracle residual {}", o.residual),
        }
    }
}

#[test]
fn random_instances_are_achievable() {
    for seed in 0..40 {
        let (sys, resp) = random_instance(seed, 6, 3, 6);
        let rep = achievability_residual(&resp, &sys).unwrap();
        assert!(rep.residual <= 1e-8, "seed {seed}: {}", rep.residual);
        assert_eq!(resp.phi_x(1), &DMatrix::identity(sys.nx(), sys.nx()));
    }
}

#[test]
fn short_horizons_are_infeasible_for_both_solvers() {
    for seed in 0..10 {
        let mut r = rng(3000 + seed);
        let nx = r.random_range(2..=5);
        let t = r.random_range(1..nx);
        let sys = LtiSystem::random_stable(&mut r, nx, 1, 0.8);
        let err = synthesize_h2(&SynthesisProblem::new(sys.clone(), t)).unwrap_err();
        assert!(matches!(err, sls_deploy::Error::Infeasible { .. }), "seed {seed}: {err}");
        let o = joint_oracle(&sys, t, &DMatrix::identity(nx, nx), &DMatrix::identity(1, 1), None, None);
        assert!(o.residual > 1e-8, "seed {seed}");
    }
}

#[test]
fn badly_scaled_instance_closes_to_rounding() {
    // Large gains (|Phi_x| ~ 170) once left the closure residual near 3e-11.
    let (sys, resp) = random_instance(20_019, 10, 5, 8);
    let res = sls_deploy::synthesis::achievability_residual(&resp, &sys).unwrap();
    assert!(res.residual <= 1e-13, "{res:?}");
}
