mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statecov::classic::rts_smooth;
use statecov::ggn::dead_reckoning;
use statecov::objective::inner_map;
use statecov::testing::RandomSmoothModel;
use statecov::{assemble_subproblem, eval_k, grad_k, smooth, solve_subproblem, BlockTridiagonalMatrix, GgnConfig, StateSequence};

fn spd_blocktri(seed: u64, n: usize, blocks: usize) -> BlockTridiagonalMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let diag = (0..blocks).map(|_| random_spd(&mut rng, n, 2.0 * n as f64)).collect();
    let sub = (1..blocks).map(|_| random_spd(&mut rng, n, 0.0) * 0.3).collect::<Vec<DMatrix<f64>>>();
    BlockTridiagonalMatrix::new(diag, sub).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn block_solve_has_small_residual(seed in any::<u64>(), n in 1usize..4, blocks in 1usize..8,
                                      b in prop::collection::vec(-10.0f64..10.0, 24)) {
        let m = spd_blocktri(seed, n, blocks);
        let b = DVector::from_column_slice(&b[..n * blocks]);
        let x = m.factor().unwrap().solve(&b).unwrap();
        let r = m.mul_vec(&x).unwrap() - &b;
        prop_assert!(r.amax() <= 1e-10 * (1.0 + b.amax()));
    }

    #[test]
    fn block_solve_is_linear(seed in any::<u64>(), alpha in -5.0f64..5.0) {
        let m = spd_blocktri(seed, 2, 5);
        let f = m.factor().unwrap();
        let b1 = DVector::from_fn(10, |i, _| (i as f64 + seed as f64).sin());
        let b2 = DVector::from_fn(10, |i, _| (i as f64 * 0.7).cos());
        let lhs = f.solve(&(&b1 * alpha + &b2)).unwrap();
        let rhs = f.solve(&b1).unwrap() * alpha + f.solve(&b2).unwrap();
        prop_assert!((lhs - rhs).amax() <= 1e-10 * (1.0 + alpha.abs()));
    }

    #[test]
    fn gradient_vanishes_at_rts_solution(seed in 0u64..1000, m in 1usize..3) {
        let (lin, z) = random_linear_model(seed, 2, m, 10);
        let rts = rts_smooth(&lin, &z).unwrap();
        let model = lin.with_measurements(z).unwrap();
        let x = StateSequence::from_blocks(&rts.means).unwrap();
        let g = grad_k(&model, &x).unwrap();
        prop_assert!(g.amax() <= 1e-8);
    }

    #[test]
    fn k_equals_half_norm_minus_log_diag(seed in 0u64..1000, n in 1usize..4, steps in 1usize..6) {
        let model = RandomSmoothModel::new(seed, n, steps);
        let x = model.interior_point();
        let (vc, diag) = inner_map(&model, &x).unwrap();
        let expect = 0.5 * vc.norm_squared() - diag.iter().map(|v| v.ln()).sum::<f64>();
        let got = eval_k(&model, &x).unwrap().value;
        prop_assert!((got - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
    }

    #[test]
    fn inner_solve_meets_tolerance_and_descends(seed in 0u64..1000, n in 1usize..4, steps in 1usize..8,
                                                omega in 1e-6f64..1.0) {
        let model = RandomSmoothModel::new(seed, n, steps);
        let x = model.interior_point();
        let data = assemble_subproblem(&model, &x, omega).unwrap();
        let opts = Default::default();
        let res = solve_subproblem(&data, &opts).unwrap();
        prop_assert!(res.converged);
        prop_assert!(res.kkt_residual <= opts.tolerance_for(&data));
        prop_assert!(res.delta <= 0.0);
        prop_assert!((data.vdiag.clone() + data.vscript.mul_vec(&res.triple.d)).min() > 0.0);
    }

    #[test]
    fn outer_loop_strictly_decreases_and_stays_feasible(seed in 0u64..1000, n in 1usize..3, steps in 2usize..10) {
        let model = RandomSmoothModel::new(seed, n, steps);
        let cfg = GgnConfig { keep_iterates: true, ..Default::default() };
        let sol = smooth(&model, model.interior_point(), &cfg).unwrap();
        let mut ks: Vec<f64> = sol.trace.objectives().collect();
        ks.push(sol.final_objective);
        for w in ks.windows(2) {
            prop_assert!(w[1] < w[0] || (w[1] == w[0] && sol.trace.is_empty()));
        }
        for x in sol.trace.iterates.iter().chain(std::iter::once(&sol.x)) {
            let (_, diag) = inner_map(&model, x).unwrap();
            prop_assert!(diag.min() > 0.0);
        }
    }

    #[test]
    fn dead_reckoning_has_zero_process_residual(seed in 0u64..100) {
        let (lin, z) = random_linear_model(seed, 3, 1, 6);
        let model = lin.with_measurements(z).unwrap();
        let x = dead_reckoning(&model);
        for k in 1..6 {
            prop_assert!((x.block(k) - &lin.transitions[k] * x.block(k - 1)).amax() <= 1e-14);
        }
    }
}
