mod common;

use common::{normal, random_block_stationary_model, random_model};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use roesser2d::bias::{bias_closed_form, build_operators};
use roesser2d::grid::GridData;
use roesser2d::hankel::{build_bold, required_rows};
use roesser2d::ident::stage2::stage2;
use roesser2d::ident::{identify, IdentifyConfig};
use roesser2d::linalg::{hankel_from_generators, hankel_generators, row_space_project, Mat};
use roesser2d::model::{
    construct_uncorrelated, innovation_covariances, recurrence_residual, simulate, solve_riccati, InitialCondition,
};

fn is_lower_block_toeplitz(x: &Mat, br: usize, bc: usize, i: usize) -> bool {
    (0..i).all(|a| {
        (0..i).all(|b| {
            let blk = x.view((a * br, b * bc), (br, bc));
            if b > a {
                blk.iter().all(|v| *v == 0.0)
            } else {
                blk == x.view(((a - b) * br, 0), (br, bc))
            }
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn projection_is_idempotent(seed in 0u64..10_000, rows in 1usize..6, prows in 1usize..6, cols in 12usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = normal(&mut rng, rows, cols);
        let p = normal(&mut rng, prows, cols);
        let once = row_space_project(&f, &p).unwrap();
        let twice = row_space_project(&once, &p).unwrap();
        prop_assert!((&twice - &once).norm() <= 1e-10 * once.norm().max(1.0));
    }

    #[test]
    fn covariance_equations(seed in 0u64..10_000, h in 1usize..4, v in 1usize..4, y in 1usize..4) {
        let m = random_block_stationary_model(seed, h, v, y, 0.8);
        let cov = solve_riccati(&m).unwrap();
        prop_assert!(cov.residuals.lyapunov < 1e-12, "lyapunov {:e}", cov.residuals.lyapunov);
        prop_assert!(cov.residuals.ric1 < 1e-10);
        prop_assert!(cov.residuals.ric2.unwrap() < 1e-10);
        prop_assert!(cov.residuals.sigma_identity.unwrap() < 1e-8, "sigma {:e}", cov.residuals.sigma_identity.unwrap());
        prop_assert!(cov.residuals.gain_agreement.unwrap() < 1e-8);
    }

    #[test]
    fn simulation_satisfies_recurrences(seed in 0u64..10_000, h in 1usize..4, v in 1usize..4, y in 1usize..4, stationary: bool) {
        let m = random_model(seed, h, v, y, 0.8, false);
        let init = if stationary { InitialCondition::Stationary } else { InitialCondition::Zero };
        let sim = simulate(&m, 17, 9, seed, init).unwrap();
        prop_assert!(recurrence_residual(&m, &sim) < 1e-14);
        prop_assert_eq!(simulate(&m, 17, 9, seed, init).unwrap().y, sim.y);
    }

    #[test]
    fn rebuilding_is_bit_identical(seed in 0u64..10_000, n in 1usize..3, i in 1usize..5, j in 1usize..12, big_m in 0usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = normal(&mut rng, n, (required_rows(i, j) + 1) * (big_m + 1));
        let g = GridData::from_fn(n, required_rows(i, j), big_m, |r, s, c| vals[(c, s * (required_rows(i, j) + 1) + r)]);
        let a = build_bold(&g, i, i, j, big_m).unwrap();
        let b = build_bold(&g, i, i, j, big_m).unwrap();
        prop_assert_eq!(a.as_slice(), b.as_slice());
        for k in 0..=big_m {
            let blk = a.columns(k * j, j).into_owned();
            let gens = hankel_generators(&blk, n, 1, i, j);
            prop_assert_eq!(hankel_from_generators(&gens, i, j), blk);
        }
    }

    #[test]
    fn grid_files_round_trip(seed in 0u64..10_000, n in 0usize..3, big_n in 0usize..6, big_m in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = normal(&mut rng, 1, n * (big_n + 1) * (big_m + 1) + 1);
        let mut idx = 0;
        let g = GridData::from_fn(n, big_n, big_m, |_, _, _| { idx += 1; vals[idx] * 1e3 });
        let (mut text, mut bin) = (Vec::new(), Vec::new());
        g.write_text(&mut text).unwrap();
        g.write_binary(&mut bin).unwrap();
        prop_assert_eq!(&GridData::read(&text[..]).unwrap(), &g);
        prop_assert_eq!(&GridData::read(&bin[..]).unwrap(), &g);
    }

    #[test]
    fn kronecker_forms_agree(seed in 0u64..10_000, h in 1usize..4, v in 1usize..4, y in 1usize..4, i in prop::sample::select(vec![1usize, 2, 4]), big_m in 1usize..4) {
        let m = random_model(seed, h, v, y, 0.8, false);
        let ops = build_operators(&m, i, big_m).unwrap();
        for (name, r) in ops.kronecker_residuals(&m) {
            prop_assert!(r < 1e-12, "{} {:e}", name, r);
        }
    }

    #[test]
    fn uncorrelated_models_have_exactly_zero_bias(seed in 0u64..10_000, h in 1usize..3, v in 1usize..3, extra in 0usize..2, i in 1usize..5, big_m in 1usize..4) {
        // K1·Re needs full row rank for the construction, so n_y ≥ n_h
        let m = random_model(seed, h, v, h + extra, 0.7, false);
        let Ok(u) = construct_uncorrelated(&m) else { return Ok(()) };
        let ic = innovation_covariances(&u).unwrap();
        let b = bias_closed_form(&u, &ic.p_hv, &build_operators(&u, i, big_m).unwrap());
        prop_assert!(b.assumed_uncorrelated);
        prop_assert!(b.crosscov.iter().all(|x| *x == 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn recovered_operators_are_structured(seed in 0u64..10_000, i in 2usize..4, big_m in 3usize..6) {
        let m = random_model(seed, 1, 1, 2, 0.7, false);
        let j = 60;
        let sim = simulate(&m, required_rows(i, j), big_m, seed, InitialCondition::Zero).unwrap();
        let Ok(st) = stage2(&sim.y, &sim.xv, i, j, 1) else { return Ok(()) };
        prop_assert!(is_lower_block_toeplitz(&st.gamma_vh, 2, 1, i));
        prop_assert!(is_lower_block_toeplitz(&st.k_h, 2, 2, i));
        for a in 0..i {
            prop_assert!(st.k_h.view((2 * a, 2 * a), (2, 2)) == Mat::identity(2, 2));
        }
        for x in [&st.ef_h, &st.ep_h] {
            for k in 0..=big_m {
                let blk = x.columns(k * j, j).into_owned();
                prop_assert_eq!(hankel_from_generators(&hankel_generators(&blk, 2, 1, i, j), i, j), blk);
            }
        }
        for x in [&st.xp_vh, &st.xf_vh] {
            for k in 0..=big_m {
                let blk = x.columns(k * j, j).into_owned();
                prop_assert_eq!(hankel_from_generators(&hankel_generators(&blk, 1, 1, i, j), i, j), blk);
            }
        }
    }

    #[test]
    fn identification_is_deterministic(seed in 0u64..10_000) {
        let Ok(m) = construct_uncorrelated(&random_model(seed, 1, 1, 1, 0.7, false)) else { return Ok(()) };
        let (i, j) = (3, 120);
        let sim = simulate(&m, required_rows(i, j), 6, seed, InitialCondition::Zero).unwrap();
        let cfg = IdentifyConfig { order_h: Some(1), order_v: Some(1), ..IdentifyConfig::new(i, j) };
        match (identify(&sim.y, &cfg), identify(&sim.y, &cfg)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.xh_grid, b.xh_grid);
                prop_assert_eq!(a.xv_grid, b.xv_grid);
                prop_assert_eq!(a.params.model, b.params.model);
                prop_assert_eq!(a.diagnostics.selected, b.diagnostics.selected);
            }
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "runs disagree"),
        }
    }
}
