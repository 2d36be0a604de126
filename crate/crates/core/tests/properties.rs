mod common;

use std::f64::consts::PI;

use csav::diagnostics::discrete_energy;
use csav::grid::{apply_symbol, make_grid, mean, solve_shifted_diagonal, ScalarField, SpectralSymbol};
use csav::harness::{build_initial, InitialCondition};
use csav::integrators::{initialize, relax_xi, step, Scheme, SchemeConfig};
use csav::models::{build_allen_cahn, build_cahn_hilliard, build_pfc};
use csav::snapshot;
use proptest::prelude::*;

fn feasible(xi: f64, q_tilde: f64, root: f64, budget: f64) -> bool {
    let q = xi * q_tilde + (1.0 - xi) * root;
    q * q - q_tilde * q_tilde <= budget * (1.0 + 1e-12) + 1e-12
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relaxation_is_feasible_and_minimal(
        q_tilde in 0.05f64..4.0,
        e0 in -1.0f64..6.0,
        budget in 0.0f64..1.0,
    ) {
        let c0 = 1.5;
        let root = (e0 + c0).sqrt();
        let xi = relax_xi(q_tilde, e0, c0, budget);
        prop_assert!((0.0..=1.0).contains(&xi));
        prop_assert!(feasible(xi, q_tilde, root, budget));
        if xi > 1e-9 {
            prop_assert!(!feasible(xi - 1e-7, q_tilde, root, budget));
        }
    }

    #[test]
    fn shifted_solve_inverts_its_operator(seed in any::<u64>(), dt in 1e-4f64..10.0) {
        let g = make_grid(2.0 * PI, 3.0, 16, 8).unwrap();
        let rhs = common::smooth_field(&g, seed, 1.0, 0.3);
        let shift = SpectralSymbol::bilaplacian(&g).scale(0.01).add(&SpectralSymbol::constant(&g, 2.0)).unwrap().scale(dt);
        let u = solve_shifted_diagonal(&shift, &rhs).unwrap();
        let back = u.add(&apply_symbol(&shift, &u).unwrap()).unwrap();
        prop_assert!(back.sub(&rhs).unwrap().max_abs() < 1e-10 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn cn_energy_balance_holds_per_step(seed in any::<u64>(), dt in 1e-3f64..0.5, alpha in 1e-4f64..1.0) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_allen_cahn(0.3, 1.0, 2.0, &g).unwrap();
        let cfg = SchemeConfig::new(Scheme::CsavCn, dt, alpha);
        let mut state = initialize(&m, &cfg, common::smooth_field(&g, seed, 0.6, 0.0), 0.0).unwrap();
        for _ in 0..4 {
            let rep = step(&m, &cfg, &state).unwrap();
            if !rep.diagnostics.bootstrap {
                let before = discrete_energy(&m, &cfg, &state).unwrap();
                let after = discrete_energy(&m, &cfg, &rep.state).unwrap();
                let residual = after.change_since(&before) + dt * rep.diagnostics.dissipation;
                // field and auxiliary parts can cancel, so scale by the largest summand
                let scale = [before.field, before.auxiliary, after.field, after.auxiliary, dt * rep.diagnostics.dissipation]
                    .iter()
                    .fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!(residual.abs() <= 1e-9 * scale, "residual {residual:e}");
            }
            state = rep.state;
        }
    }

    #[test]
    fn bdf1_energy_never_increases(seed in any::<u64>(), dt in 1e-3f64..5.0) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_cahn_hilliard(0.2, 1.0, 4.0, &g).unwrap();
        let cfg = SchemeConfig::new(Scheme::CsavBdf1, dt, 0.01);
        let mut state = initialize(&m, &cfg, common::smooth_field(&g, seed, 0.8, 0.1), 0.0).unwrap();
        for _ in 0..5 {
            let rep = step(&m, &cfg, &state).unwrap();
            let before = discrete_energy(&m, &cfg, &state).unwrap();
            let after = discrete_energy(&m, &cfg, &rep.state).unwrap();
            prop_assert!(after.change_since(&before) <= 1e-10 * before.total().abs().max(1.0));
            state = rep.state;
        }
    }

    #[test]
    fn conservative_models_keep_their_mean(seed in any::<u64>(), dt in 1e-3f64..1.0) {
        let g = make_grid(16.0, 16.0, 16, 16).unwrap();
        let phi0 = common::smooth_field(&g, seed, 0.3, 0.07);
        for model in [
            build_cahn_hilliard(0.5, 1.0, 2.0, &g).unwrap(),
            build_pfc(-0.25, 0.0, 1.0, 1.0, &g).unwrap(),
        ] {
            let cfg = SchemeConfig::new(Scheme::CsavCn, dt, 0.01);
            let mut state = initialize(&model, &cfg, phi0.clone(), 0.0).unwrap();
            for _ in 0..5 {
                state = step(&model, &cfg, &state).unwrap().state;
                prop_assert!((mean(&state.phi) - mean(&phi0)).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn zero_alpha_freezes_r(seed in any::<u64>(), dt in 1e-3f64..0.5) {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_allen_cahn(0.3, 1.0, 2.0, &g).unwrap();
        for scheme in [Scheme::CsavBdf1, Scheme::CsavCn, Scheme::CsavBdf2] {
            let cfg = SchemeConfig::new(scheme, dt, 0.0);
            let mut state = initialize(&m, &cfg, common::smooth_field(&g, seed, 0.6, 0.0), 0.0).unwrap();
            for _ in 0..3 {
                state = step(&m, &cfg, &state).unwrap().state;
                prop_assert_eq!(&state.r, &vec![1.0]);
            }
        }
    }

    #[test]
    fn snapshots_round_trip_bitwise(values in prop::collection::vec(-1e6f64..1e6, 24)) {
        let g = make_grid(1.0, 2.0, 6, 4).unwrap();
        let f = ScalarField::from_values(&g, values).unwrap();
        let mut buf = Vec::new();
        snapshot::write_binary(&f, &mut buf).unwrap();
        let back = snapshot::read_binary(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), f.values());
    }

    #[test]
    fn seeded_initial_conditions_are_reproducible(seed in any::<u64>()) {
        let g = make_grid(32.0, 32.0, 16, 16).unwrap();
        let ic = InitialCondition::DiblockRandom { phi_mean: 0.1, amplitude: 0.001, seed };
        let a = build_initial(&ic, &g).unwrap();
        let b = build_initial(&ic, &g).unwrap();
        prop_assert_eq!(a.values(), b.values());
        prop_assert!((mean(&a) - 0.1).abs() < 1e-15);
    }
}
