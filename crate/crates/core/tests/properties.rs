mod common;

use common::{params_for, random_graph, random_inputs, random_tabular, randn, TabularShape};
use proptest::prelude::*;
use rand::Rng as _;
use sgprop_core::estimation::{exact_moments, lambda_star};
use sgprop_core::expert::{build_expert_instance, NoiseCase};
use sgprop_core::graph::{LayeredGraph, NodeId, ParentEdge};
use sgprop_core::linalg::Mat;
use sgprop_core::propagation::{sgprop, MixWeights, Mode, Predictor, PredictorBank};
use sgprop_core::rng::seeded;
use sgprop_core::training::discounted_returns;

fn sizes() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(1usize..=3, 2..=4)
}

fn objective(p: &[Vec<f64>], s: &[Vec<f64>], m: &[f64], n: usize, lam: f64) -> f64 {
    let c = p.len() as f64;
    let x: Vec<Vec<f64>> = p.iter().zip(s).map(|(a, b)| a.iter().zip(b).map(|(a, b)| lam * a + (1.0 - lam) * b).collect()).collect();
    let single = x.iter().map(|v| v.iter().zip(m).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sum::<f64>() / c;
    let bias: f64 = (0..m.len()).map(|k| (x.iter().map(|v| v[k]).sum::<f64>() / c - m[k]).powi(2)).sum();
    single / n as f64 + (1.0 - 1.0 / n as f64) * bias
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn edges_join_adjacent_layers(seed in any::<u64>(), sizes in sizes()) {
        let g = LayeredGraph::build(random_graph(&mut seeded(seed), &sizes, 3, 0.5)).unwrap();
        for v in g.node_ids() {
            for p in g.parents(v) {
                prop_assert_eq!(p.layer + 1, v.layer);
            }
            for c in g.children(v) {
                prop_assert_eq!(c.layer, v.layer + 1);
                prop_assert!(g.parents(c).contains(&v));
            }
        }
    }

    #[test]
    fn traces_are_deterministic(seed in any::<u64>(), sample in any::<u64>()) {
        let mut rng = seeded(seed);
        let mut spec = random_graph(&mut rng, &[2, 2, 1], 2, 0.7);
        spec.layers[1][0].noise = sgprop_core::graph::NodeNoise::AdditiveGaussian { sigma: 0.5 };
        let g = LayeredGraph::build(spec).unwrap();
        let x = random_inputs(&mut rng, &g);
        prop_assert_eq!(g.forward(&x, seed, sample).unwrap(), g.forward(&x, seed, sample).unwrap());
    }

    #[test]
    fn extended_ancestors_are_monotone(seed in any::<u64>(), sizes in sizes()) {
        let mut rng = seeded(seed);
        let spec = random_graph(&mut rng, &sizes, 2, 0.4);
        let g = LayeredGraph::build(spec.clone()).unwrap();
        for v in g.node_ids().filter(|v| v.layer > 0) {
            let an = g.extended_ancestors(v).unwrap();
            prop_assert!(g.sibling_set(v).iter().all(|s| an.contains(s)));
        }
        // Add one missing full edge somewhere, if any exists.
        let mut spec2 = spec.clone();
        let mut added = false;
        'outer: for l in 1..spec.layers.len() {
            for i in 0..spec.layers[l].len() {
                let have: Vec<usize> = spec.layers[l][i].parents.iter().map(|e| e.parent.index).collect();
                if let Some(j) = (0..spec.layers[l - 1].len()).find(|j| !have.contains(j)) {
                    let node = &mut spec2.layers[l][i];
                    node.parents.push(ParentEdge::full(l - 1, j));
                    let in_dim = g.node(NodeId::new(l, i)).unwrap().in_dim + spec.layers[l - 1][j].out_dim;
                    node.params = params_for(&node.kind, in_dim, node.out_dim, &mut rng);
                    added = true;
                    break 'outer;
                }
            }
        }
        if added {
            let h = LayeredGraph::build(spec2).unwrap();
            for v in g.node_ids().filter(|v| v.layer > 0) {
                let before = g.extended_ancestors(v).unwrap();
                let after = h.extended_ancestors(v).unwrap();
                prop_assert!(before.is_subset(&after), "{v}");
            }
        }
    }

    #[test]
    fn mixed_gradient_is_convex_combination(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let g = LayeredGraph::build(random_graph(&mut rng, &[2, 2, 2], 2, 0.8)).unwrap();
        let x = random_inputs(&mut rng, &g);
        let tr = g.forward(&x, 0, 0).unwrap();
        let fb: Vec<Vec<f64>> = (0..2).map(|i| randn(&mut rng, g.node(NodeId::new(2, i)).unwrap().out_dim(), 1.0)).collect();
        let mut bank = PredictorBank::default();
        let mut lam = MixWeights::uniform(&g, 0.0).unwrap();
        for v in g.node_ids() {
            let n = g.node(v).unwrap();
            if v.layer > 0 {
                let w = Mat::from_vec(n.out_dim(), n.in_dim, randn(&mut rng, n.out_dim() * n.in_dim, 1.0));
                bank.insert(v, Predictor::Affine { w, b: randn(&mut rng, n.out_dim(), 1.0) });
            }
            lam.set(v, rng.random()).unwrap();
        }
        let res = sgprop(&g, &tr, &fb, &bank, &lam).unwrap();
        for v in g.node_ids().filter(|v| v.layer < 2) {
            let l = lam.get(v);
            let s = res.s_split[v.layer][v.index].as_ref().unwrap();
            for ((gt, p), s) in res.param_grad(v).iter().zip(&res.p_split[v.layer][v.index]).zip(s) {
                prop_assert!((gt - (l * p + (1.0 - l) * s)).abs() <= 1e-12 * (1.0 + gt.abs()));
            }
        }
    }

    #[test]
    fn lambda_star_is_in_range_and_optimal(
        seed in any::<u64>(), dim in 1usize..=3, count in 2usize..10, n in prop::sample::select(vec![1usize, 2, 10])
    ) {
        let mut rng = seeded(seed);
        let sp: f64 = rng.random_range(0.1..3.0);
        let ss: f64 = rng.random_range(0.1..3.0);
        let p: Vec<Vec<f64>> = (0..count).map(|_| randn(&mut rng, dim, sp)).collect();
        let shift = randn(&mut rng, dim, 1.0);
        let s: Vec<Vec<f64>> = (0..count).map(|_| randn(&mut rng, dim, ss).iter().zip(&shift).map(|(a, b)| a + b).collect()).collect();
        let m = randn(&mut rng, dim, 0.5);
        let e = lambda_star(&p, &s, &m, n).unwrap();
        prop_assert!((0.0..=1.0).contains(&e.lambda));
        let at = objective(&p, &s, &m, n, e.lambda);
        for i in 0..=10_000 {
            let v = objective(&p, &s, &m, n, i as f64 * 1e-4);
            prop_assert!(at <= v + 1e-12 * (1.0 + v.abs()));
        }
        let d = lambda_star(&p, &p, &m, n).unwrap();
        prop_assert!(d.degenerate && d.lambda == 0.0);
    }

    #[test]
    fn decomposition_identity(seed in any::<u64>(), sizes in prop::collection::vec(1usize..=3, 2..=3)) {
        let shape = TabularShape { sizes, max_dim: 2, p_edge: 0.7, stochastic: true, project: true };
        let prob = random_tabular(&mut seeded(seed), &shape);
        let half = MixWeights::uniform(&prob.graph, 0.5).unwrap();
        let zeros = PredictorBank::zeros(&prob.graph);
        for mode in [Mode::Backprop, Mode::Sgprop { predictors: &zeros, lambdas: &half }] {
            for m in exact_moments(&prob, &mode).unwrap().values() {
                for n in [1usize, 2, 10] {
                    let want = (m.rho2 + m.nu2) / n as f64 + m.bias2;
                    prop_assert!((m.delta2(n) - want).abs() <= 1e-9 * (1.0 + want));
                }
            }
        }
    }

    #[test]
    fn expert_classes_have_size_two_to_the_d_minus_k(seed in any::<u64>(), d in 1usize..=8, k in 1usize..=8, m in 1usize..=4) {
        prop_assume!(k <= d);
        let i = build_expert_instance(d, k, m, NoiseCase::Noisy { sigma: 1.0 }, &mut seeded(seed)).unwrap();
        for j in 0..m {
            let mut counts = vec![0usize; 1 << k];
            for r in 0..i.num_states() {
                counts[i.class_index(j, r)] += 1;
            }
            prop_assert!(counts.iter().all(|&c| c == 1 << (d - k)));
        }
    }

    #[test]
    fn masked_steps_do_not_contribute_to_returns(
        rewards in prop::collection::vec(-1.0f64..1.0, 1..20), gamma in 0.0f64..=1.0, seed in any::<u64>()
    ) {
        let mut rng = seeded(seed);
        let mask: Vec<bool> = rewards.iter().map(|_| rng.random_bool(0.7)).collect();
        let g = discounted_returns(&rewards, gamma, &mask).unwrap();
        let kept: Vec<f64> = rewards.iter().zip(&mask).filter(|(_, m)| **m).map(|(r, _)| *r).collect();
        let compact = discounted_returns(&kept, gamma, &vec![true; kept.len()]).unwrap();
        let mut it = compact.iter();
        for (v, m) in g.iter().zip(&mask) {
            if *m {
                prop_assert_eq!(v, it.next().unwrap());
            } else {
                prop_assert_eq!(*v, 0.0);
            }
        }
    }
}
