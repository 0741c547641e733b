use durage::functionals::compute_functionals;
use durage::learners::svr::{dual_objective, kernel_matrix};
use durage::learners::tree::GAIN_TIE_TOLERANCE;
use durage::learners::{
    fit_adaboost_r2_traced, fit_tree_unweighted, solve_svr, AdaBoostParams, BaseLearner, Gamma,
    MaxFeatures, Node, RegressionTree, Sampling, SvrParams, TreeParams,
};
use durage_oracles::tree::{brute_force, BruteNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(scale)
}

#[test]
fn functionals_match_naive_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let n = rng.random_range(1..=200);
        let quantized = case % 2 == 0;
        let xs: Vec<f64> = (0..n)
            .map(|_| {
                if quantized {
                    rng.random_range(1..=80) as f64 / 100.0
                } else {
                    rng.random_range(0.005..1.5)
                }
            })
            .collect();
        let got = compute_functionals(&xs).unwrap().to_array();
        let want = durage_oracles::functionals::naive(&xs);
        let top = xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let scales = [top, top * top, top, top, 1.0, 1.0, 1.0, top];
        for f in 0..8 {
            assert!(
                close(got[f], want[f], 1e-9, scales[f]),
                "case {case} functional {f}: {} vs {}",
                got[f],
                want[f]
            );
        }
    }
}

#[test]
fn smo_matches_dense_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..50 {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(1..=3);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let c = [0.1, 1.0, 10.0][case % 3];
        let eps = rng.random_range(0.0..0.5);
        let gamma = rng.random_range(0.2..2.0);
        let params = SvrParams {
            c,
            epsilon: eps,
            gamma: Gamma::Absolute(gamma),
            tol: 1e-10,
            max_passes: 100_000,
        };
        let sol = solve_svr(&x, &y, &params).unwrap();
        assert!(sol.model.converged);
        let k = kernel_matrix(&x, gamma);
        let qp = durage_oracles::svr::dense_qp(&k, &y, c, eps, 200_000);
        let obj = dual_objective(&k, &y, eps, &sol.alpha, &sol.alpha_star);
        assert!((obj - qp.objective).abs() < 1e-6, "case {case}: {obj} vs {}", qp.objective);
        let eq: f64 = sol.alpha.iter().zip(&sol.alpha_star).map(|(a, s)| a - s).sum();
        assert!(eq.abs() < 1e-6);
        assert!(sol.alpha.iter().chain(&sol.alpha_star).all(|&b| (0.0..=c).contains(&b)));
        for probe in x.iter().cloned().chain((0..5).map(|_| (0..d).map(|_| rng.random_range(-1.5..1.5)).collect())) {
            let ours = sol.model.predict(&probe);
            let theirs: f64 = x
                .iter()
                .zip(&qp.theta)
                .map(|(xi, t)| t * (-gamma * xi.iter().zip(&probe).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).exp())
                .sum::<f64>()
                + qp.bias;
            assert!((ours - theirs).abs() < 1e-4, "case {case}: {ours} vs {theirs}");
        }
    }
}

fn same_tree(t: &RegressionTree, i: usize, b: &BruteNode) -> bool {
    match (&t.nodes[i], b) {
        (Node::Leaf { value, .. }, BruteNode::Leaf(v)) => close(*value, *v, 1e-12, 1.0),
        (
            Node::Split {
                feature,
                threshold,
                left,
                right,
                ..
            },
            BruteNode::Split {
                feature: f,
                threshold: th,
                left: l,
                right: r,
            },
        ) => feature == f && threshold == th && same_tree(t, *left, l) && same_tree(t, *right, r),
        _ => false,
    }
}

#[test]
fn tree_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..100 {
        let n = rng.random_range(2..=30);
        let d = rng.random_range(1..=4);
        // Coarse values so that duplicate features and tied gains occur.
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..6) as f64 * 0.5).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let max_depth = [Some(1), Some(2), Some(3), None][case % 4];
        let min_leaf = 1 + case % 3;
        let params = TreeParams {
            max_depth,
            min_leaf,
            max_features: MaxFeatures::All,
        };
        let tree = fit_tree_unweighted(&x, &y, &params);
        let brute = brute_force(&x, &y, max_depth, min_leaf, GAIN_TIE_TOLERANCE);
        assert!(same_tree(&tree, 0, &brute), "case {case}: {tree:?} vs {brute:?}");
        for _ in 0..20 {
            let p: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..3.0)).collect();
            assert!(close(tree.predict(&p), brute.predict(&p), 1e-12, 1.0));
        }
    }
}

#[test]
fn adaboost_trace_matches_hand_execution() {
    let x: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
    let y = [1.5, 3.25, 2.25, 3.5, 3.75];
    let params = AdaBoostParams {
        n_rounds: 3,
        base: BaseLearner::Tree(TreeParams {
            max_depth: Some(1),
            min_leaf: 1,
            max_features: MaxFeatures::All,
        }),
        sampling: Sampling::Reweight,
    };
    let (model, trace) = fit_adaboost_r2_traced(&x, &y, &params, 0).unwrap();
    let weights = [
        [0.2, 0.2, 0.2, 0.2, 0.2],
        [0.1681367874182866, 0.1727436780696162, 0.2522051811274298, 0.1924685752548745, 0.21444577812979287],
        [0.20289685715125555, 0.21708914123763137, 0.21918416376654265, 0.17120242896306734, 0.1896274088815031],
    ];
    let betas = [0.666666666666667, 0.6681459564049149, 0.7805263645613019];
    let member_weights = [0.40546510810816394, 0.40324863170046993, 0.24778676053078003];
    assert_eq!(trace.len(), 3);
    for r in 0..3 {
        for i in 0..5 {
            assert!((trace[r].weights[i] - weights[r][i]).abs() < 1e-12, "round {r} weight {i}");
        }
        assert!((trace[r].beta.unwrap() - betas[r]).abs() < 1e-12);
        assert!((model.member_weights[r] - member_weights[r]).abs() < 1e-12);
    }
    let medians = [
        (0.0, 1.5),
        (1.0, 3.147667130261833),
        (2.0, 3.147667130261833),
        (3.0, 3.1875),
        (4.0, 3.1875),
        (1.5, 3.147667130261833),
        (3.5, 3.1875),
    ];
    for (v, want) in medians {
        assert!((model.predict(&[v]) - want).abs() < 1e-12, "median at {v}");
    }
}
