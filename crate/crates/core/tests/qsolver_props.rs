mod common;

use fairdiv::oracle::grid_maximize_q;
use fairdiv::preferences::{marginals, swap, Lottery, Marginal};
use fairdiv::qsolver::{q_objective, regularizer_g, regularizer_gradient, solve_q, solve_q_from, SolverConfig, WeightVector};
use fairdiv::rational::ratio;
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-10;

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> WeightVector {
    let pts = common::random_simplex_point(rng, n, 24);
    WeightVector::new(pts.iter().map(|&k| ratio(k, 24)).collect()).unwrap()
}

fn random_delta(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(-3.0..-1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn beats_every_point_mass(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = common::rng(seed);
        let space = common::corpus_space(&mut rng, which);
        let prefs = common::random_prefs(&mut rng, &space);
        let lambda = random_weights(&mut rng, space.n_agents());
        let delta = random_delta(&mut rng);
        let sol = solve_q(&space, &prefs, &lambda, &SolverConfig::new(delta, TOL, 100_000).unwrap()).unwrap();
        let lam = lambda.to_f64();
        for x in 0..space.len() {
            let (q, _) = q_objective(&space, &prefs, &lam, delta, &Lottery::point(x)).unwrap();
            prop_assert!(sol.q_value >= q - TOL, "vertex {x}: {q} > {}", sol.q_value);
        }
    }

    #[test]
    fn duality_gap_bounds_the_grid_optimum(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = common::rng(seed);
        let space = common::corpus_space(&mut rng, which);
        prop_assume!(space.len() <= 6);
        let prefs = common::random_prefs(&mut rng, &space);
        let lambda = random_weights(&mut rng, space.n_agents());
        let delta = random_delta(&mut rng);
        let sol = solve_q(&space, &prefs, &lambda, &SolverConfig::new(delta, TOL, 100_000).unwrap()).unwrap();
        let grid = grid_maximize_q(&space, &prefs, &lambda, delta, 24).unwrap();
        prop_assert!(grid.best_value <= sol.q_value + sol.duality_gap + 1e-12);
    }

    #[test]
    fn marginals_do_not_depend_on_the_start(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = common::rng(seed);
        let space = common::corpus_space(&mut rng, which);
        let prefs = common::random_prefs(&mut rng, &space);
        let lambda = random_weights(&mut rng, space.n_agents());
        let cfg = SolverConfig::new(random_delta(&mut rng), TOL, 100_000).unwrap();
        let a = solve_q_from(&space, &prefs, &lambda, &cfg, Some(0)).unwrap();
        let b = solve_q_from(&space, &prefs, &lambda, &cfg, Some(space.len() - 1)).unwrap();
        let l1: f64 = a
            .marginals
            .iter()
            .zip(&b.marginals)
            .flat_map(|(x, y)| x.weights.iter().zip(&y.weights).map(|(u, v)| (u - v).abs()))
            .sum();
        prop_assert!(l1 <= 10.0 * TOL, "L1 distance {l1:e}");
    }

    #[test]
    fn g_is_swap_invariant(seed in any::<u64>(), which in 0usize..6, i in 0usize..4, j in 0usize..4) {
        let mut rng = common::rng(seed);
        let space = common::corpus_space(&mut rng, which);
        let (i, j) = (i % space.n_agents(), j % space.n_agents());
        let p = common::random_lottery(&mut rng, &space, 1 << 10);
        let q = swap(&space, &p, i, j).unwrap();
        prop_assert_eq!(
            regularizer_g(&marginals(&space, &p).unwrap()),
            regularizer_g(&marginals(&space, &q).unwrap())
        );
    }

    #[test]
    fn g_gradient_matches_differences(ws in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..6), 1..4)) {
        let ms: Vec<Marginal> = ws.iter().map(|w| Marginal { weights: w.clone() }).collect();
        let grad = regularizer_gradient(&ms);
        let h = 1e-6;
        for j in 0..ms.len() {
            for y in 0..ms[j].weights.len() {
                let mut up = ms.clone();
                let mut down = ms.clone();
                up[j].weights[y] += h;
                down[j].weights[y] -= h;
                let fd = (regularizer_g(&up) - regularizer_g(&down)) / (2.0 * h);
                let g = grad[j][y];
                prop_assert!((fd - g).abs() <= 1e-6 * g.abs().max(1.0), "{fd} vs {g}");
            }
        }
    }

    #[test]
    fn zero_weight_preference_is_irrelevant(seed in any::<u64>(), which in 0usize..6) {
        let mut rng = common::rng(seed);
        let space = common::corpus_space(&mut rng, which);
        let n = space.n_agents();
        let mut prefs = common::random_prefs(&mut rng, &space);
        let idle = rng.gen_range(0..n);
        let mut pts = common::random_simplex_point(&mut rng, n - 1, 24);
        pts.insert(idle, 0);
        prop_assume!(pts.iter().any(|&k| k > 0));
        let lambda = WeightVector::new(pts.iter().map(|&k| ratio(k, 24)).collect()).unwrap();
        let cfg = SolverConfig::new(random_delta(&mut rng), TOL, 100_000).unwrap();
        let a = solve_q(&space, &prefs, &lambda, &cfg).unwrap();
        let maxmin = rng.gen_bool(0.5);
        prefs[idle] = common::random_pref(&mut rng, space.n_items(), maxmin);
        let b = solve_q(&space, &prefs, &lambda, &cfg).unwrap();
        prop_assert!((a.q_value - b.q_value).abs() <= 2.0 * TOL);
    }
}
