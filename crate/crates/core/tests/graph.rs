mod common;

use common::{random_graph, random_inputs, randn};
use sgprop_core::expert::{build_expert_instance, NoiseCase};
use sgprop_core::graph::{
    FeedbackNoise, FeedbackSpec, GraphSpec, LayeredGraph, NodeId, NodeKind, NodeNoise, NodeSpec, ParentEdge,
    TabularMap, Target, TerminalFeedback,
};
use sgprop_core::linalg::Mat;
use sgprop_core::rng::seeded;
use sgprop_core::Error;
use std::collections::BTreeSet;

fn id(l: usize, i: usize) -> NodeId {
    NodeId::new(l, i)
}

fn chain(kind: NodeKind, params: Vec<Vec<f64>>) -> LayeredGraph {
    let mut layers = vec![vec![NodeSpec::input(1)]];
    for (l, p) in params.into_iter().enumerate() {
        layers.push(vec![NodeSpec::new(kind.clone(), 1, p, vec![ParentEdge::full(l, 0)])]);
    }
    LayeredGraph::build(GraphSpec { layers }).unwrap()
}

/// Fully connected graph of scalar linear nodes.
fn dense(sizes: &[usize]) -> LayeredGraph {
    let mut rng = seeded(1);
    let mut layers = vec![(0..sizes[0]).map(|_| NodeSpec::input(1)).collect()];
    for l in 1..sizes.len() {
        layers.push(
            (0..sizes[l])
                .map(|_| {
                    let edges = (0..sizes[l - 1]).map(|i| ParentEdge::full(l - 1, i)).collect();
                    NodeSpec::new(NodeKind::Linear { bias: false }, 1, randn(&mut rng, sizes[l - 1], 1.0), edges)
                })
                .collect(),
        );
    }
    LayeredGraph::build(GraphSpec { layers }).unwrap()
}

#[test]
fn minimal_chain() {
    let g = chain(NodeKind::Linear { bias: false }, vec![vec![2.0], vec![3.0]]);
    assert_eq!(g.num_layers(), 3);
    assert_eq!(g.terminal_layer(), 2);
    for l in 1..3 {
        assert_eq!(g.parents(id(l, 0)), vec![id(l - 1, 0)]);
    }
    assert_eq!(g.children(id(0, 0)), vec![id(1, 0)]);
}

#[test]
fn malformed_specs_are_rejected() {
    let lin = |parents| NodeSpec::new(NodeKind::Linear { bias: false }, 1, vec![1.0], parents);
    let skip = GraphSpec { layers: vec![vec![NodeSpec::input(1)], vec![lin(vec![ParentEdge::full(0, 0)])], vec![lin(vec![ParentEdge::full(0, 0)])]] };
    assert!(matches!(LayeredGraph::build(skip), Err(Error::Structural(_))));
    let orphan = GraphSpec { layers: vec![vec![NodeSpec::input(1)], vec![NodeSpec::new(NodeKind::Linear { bias: false }, 1, vec![], vec![])]] };
    assert!(matches!(LayeredGraph::build(orphan), Err(Error::Structural(_))));
    let too_few_params = GraphSpec { layers: vec![vec![NodeSpec::input(2)], vec![lin(vec![ParentEdge::full(0, 0)])]] };
    assert!(matches!(LayeredGraph::build(too_few_params), Err(Error::Structural(_))));
    let dup = GraphSpec {
        layers: vec![vec![NodeSpec::input(1)], vec![NodeSpec::new(NodeKind::Linear { bias: false }, 1, vec![1.0, 1.0], vec![ParentEdge::full(0, 0), ParentEdge::full(0, 0)])]],
    };
    assert!(matches!(LayeredGraph::build(dup), Err(Error::Structural(_))));
    let bad_mask = GraphSpec {
        layers: vec![vec![NodeSpec::input(1)], vec![lin(vec![ParentEdge::full(0, 0)]).with_noise(NodeNoise::BernoulliMask { p: 0.0 })]],
    };
    assert!(matches!(LayeredGraph::build(bad_mask), Err(Error::Parameter(_))));
    assert!(matches!(LayeredGraph::build(GraphSpec { layers: vec![vec![NodeSpec::input(1)]] }), Err(Error::Structural(_))));
}

#[test]
fn expert_topology() {
    let inst = build_expert_instance(6, 2, 5, NoiseCase::Noisy { sigma: 1.0 }, &mut seeded(0)).unwrap();
    let prob = inst.to_tabular_problem(FeedbackNoise::None).unwrap();
    let g = &prob.graph;
    assert_eq!((1..g.num_layers()).map(|l| g.layer_len(l)).collect::<Vec<_>>(), vec![1, 5, 1]);
    for j in 0..5 {
        let n = g.node(id(2, j)).unwrap();
        assert_eq!(n.in_dim, 2);
        assert_eq!(g.parents(id(2, j)), vec![id(1, 0)]);
    }
    let rep = g.check_conditions(&prob.feedback);
    assert!(rep.a3);
    // The feature node also skips the target input in layer 0.
    let want: Vec<NodeId> = std::iter::once(id(1, 0)).chain((0..5).map(|j| id(2, j))).collect();
    assert_eq!(rep.a3_witnesses, want);
    assert!(rep.a1, "target read from an input counts as stochastic feedback");
}

#[test]
fn identity_chain_forwards_its_input() {
    let g = chain(NodeKind::Identity, vec![vec![]; 4]);
    let tr = g.forward(&[vec![3.0]], 0, 0).unwrap();
    assert!(tr.nodes.iter().flatten().all(|n| n.output == vec![3.0]));
}

#[test]
fn zero_weight_tanh_gives_tanh_of_bias() {
    let g = LayeredGraph::build(GraphSpec {
        layers: vec![vec![NodeSpec::input(3)], vec![NodeSpec::new(NodeKind::TanhAffine, 2, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.4, -1.3], vec![ParentEdge::full(0, 0)])]],
    })
    .unwrap();
    for x in [vec![1.0, 2.0, 3.0], vec![-9.0, 0.0, 0.5]] {
        let tr = g.forward(&[x], 0, 0).unwrap();
        assert_eq!(tr.node(id(1, 0)).output, vec![0.4f64.tanh(), (-1.3f64).tanh()]);
    }
}

#[test]
fn forward_is_deterministic_per_stream() {
    let mut rng = seeded(5);
    let mut spec = random_graph(&mut rng, &[2, 3, 2], 3, 0.7);
    spec.layers[1][0].noise = NodeNoise::AdditiveGaussian { sigma: 0.5 };
    spec.layers[1][1].noise = NodeNoise::BernoulliMask { p: 0.5 };
    let g = LayeredGraph::build(spec).unwrap();
    let x = random_inputs(&mut rng, &g);
    let a = g.forward(&x, 42, 7).unwrap();
    assert_eq!(a, g.forward(&x, 42, 7).unwrap());
    assert_eq!(a.stream, Some((42, 7)));
    let b = g.forward(&x, 42, 8).unwrap();
    assert_ne!(a.node(id(1, 0)).noise, b.node(id(1, 0)).noise);
    let noise: Vec<Vec<_>> = a.nodes.iter().map(|l| l.iter().map(|n| n.noise.clone()).collect()).collect();
    let replay = g.forward_with_noise(&x, &noise).unwrap();
    assert_eq!(replay.nodes, a.nodes);
}

#[test]
fn input_dimension_mismatch() {
    let g = chain(NodeKind::Identity, vec![vec![]]);
    assert!(matches!(g.forward(&[vec![1.0, 2.0]], 0, 0), Err(Error::Input(_))));
    assert!(matches!(g.forward(&[], 0, 0), Err(Error::Input(_))));
}

#[test]
fn linear_edge_jacobian_is_the_transposed_block() {
    // Child reads [x_a (2) ‖ x_b (1)] through a 2×3 matrix.
    let a = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    let g = LayeredGraph::build(GraphSpec {
        layers: vec![
            vec![NodeSpec::input(2), NodeSpec::input(1)],
            vec![NodeSpec::new(NodeKind::Linear { bias: false }, 2, a, vec![ParentEdge::full(0, 0), ParentEdge::full(0, 1)])],
        ],
    })
    .unwrap();
    let tr = g.forward(&[vec![0.3, -0.2], vec![0.9]], 0, 0).unwrap();
    let ja = g.local_jacobians(&tr, id(0, 0)).unwrap();
    assert_eq!(ja.edges[0].0, id(1, 0));
    assert_eq!(ja.edges[0].1, Mat::from_vec(2, 2, vec![1.0, 4.0, 2.0, 5.0]));
    let jb = g.local_jacobians(&tr, id(0, 1)).unwrap();
    assert_eq!(jb.edges[0].1, Mat::from_vec(1, 2, vec![3.0, 6.0]));
    let jt = g.local_jacobians(&tr, id(1, 0)).unwrap();
    assert!(jt.edges.is_empty());
    assert_eq!((jt.param.rows, jt.param.cols), (6, 2));
    assert!(matches!(g.local_jacobians(&tr, id(3, 0)), Err(Error::Lookup(_))));
    assert!(matches!(g.node(id(1, 4)), Err(Error::Lookup(_))));
}

/// Central-difference edge and parameter Jacobians of every node, compared
/// against `local_jacobians`; returns the worst relative error.
fn jacobian_fd_error(g: &LayeredGraph, x: &[Vec<f64>], eps: f64) -> f64 {
    let tr = g.forward(x, 0, 0).unwrap();
    let noise: Vec<Vec<_>> = tr.nodes.iter().map(|l| l.iter().map(|n| n.noise.clone()).collect()).collect();
    let mut worst: f64 = 0.0;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-2);
    for v in g.node_ids() {
        let jac = g.local_jacobians(&tr, v).unwrap();
        // Edge Jacobians: perturb x_v, watch each child's output. Only the
        // child's own map is re-evaluated, at the recorded inputs.
        for (child, m) in &jac.edges {
            let cn = g.node(*child).unwrap();
            let pos = cn.spec.parents.iter().position(|e| e.parent == v).unwrap();
            let off = cn.parent_offsets[pos];
            let coords: Vec<usize> = cn.spec.parents[pos].coords.clone().unwrap_or_else(|| (0..g.node(v).unwrap().out_dim()).collect());
            let z0 = tr.node(*child).input.clone();
            let eval = |z: &[f64]| {
                let f = cn.spec.kind.eval(&cn.spec.params, z, cn.out_dim());
                cn.spec.noise.apply(&f, tr.node(*child).noise.as_deref()).unwrap()
            };
            for r in 0..m.rows {
                let mut zp = z0.clone();
                let mut zm = z0.clone();
                for (j, &k) in coords.iter().enumerate() {
                    if k == r {
                        zp[off + j] += eps;
                        zm[off + j] -= eps;
                    }
                }
                let (up, dn) = (eval(&zp), eval(&zm));
                for c in 0..m.cols {
                    worst = worst.max(rel(m.get(r, c), (up[c] - dn[c]) / (2.0 * eps)));
                }
            }
        }
        // Parameter Jacobian through a full re-run at the same noise.
        let p0 = g.params(v).to_vec();
        for r in 0..p0.len() {
            let run = |delta: f64| {
                let mut h = g.clone();
                let mut p = p0.clone();
                p[r] += delta;
                h.set_params(v, p).unwrap();
                h.forward_with_noise(x, &noise).unwrap().node(v).output.clone()
            };
            let (up, dn) = (run(eps), run(-eps));
            for c in 0..jac.param.cols {
                worst = worst.max(rel(jac.param.get(r, c), (up[c] - dn[c]) / (2.0 * eps)));
            }
        }
    }
    worst
}

#[test]
fn tanh_affine_jacobians_match_finite_differences() {
    let mut rng = seeded(2);
    let layers = vec![
        vec![NodeSpec::input(3), NodeSpec::input(2)],
        vec![NodeSpec::new(NodeKind::TanhAffine, 2, randn(&mut rng, 12, 1.0), vec![ParentEdge::full(0, 0), ParentEdge::full(0, 1)])],
        vec![NodeSpec::new(NodeKind::TanhAffine, 3, randn(&mut rng, 9, 1.0), vec![ParentEdge::full(1, 0)])],
    ];
    let g = LayeredGraph::build(GraphSpec { layers }).unwrap();
    let err = jacobian_fd_error(&g, &[randn(&mut rng, 3, 1.0), randn(&mut rng, 2, 1.0)], 1e-5);
    assert!(err < 1e-6, "{err}");
}

#[test]
fn all_kinds_match_finite_differences() {
    for seed in 0..15 {
        let mut rng = seeded(100 + seed);
        let mut spec = random_graph(&mut rng, &[2, 3, 3, 2], 3, 0.6);
        if seed % 3 == 0 {
            spec.layers[1][0].noise = NodeNoise::BernoulliMask { p: 0.6 };
            spec.layers[2][1].noise = NodeNoise::AdditiveGaussian { sigma: 0.3 };
        }
        let g = LayeredGraph::build(spec).unwrap();
        let x = random_inputs(&mut rng, &g);
        let err = jacobian_fd_error(&g, &x, 1e-5);
        assert!(err < 1e-5, "seed {seed}: {err}");
    }
}

#[test]
fn piecewise_tabular_feeds_only_the_active_block() {
    let keys = vec![vec![-1.0], vec![1.0]];
    let maps = vec![Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]), Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5])];
    let kind = NodeKind::PiecewiseTabular(TabularMap { keys, offsets: vec![vec![0.0, 0.0], vec![1.0, 1.0]], maps });
    let g = LayeredGraph::build(GraphSpec {
        layers: vec![vec![NodeSpec::input(1)], vec![NodeSpec::new(kind, 2, vec![0.1; 5], vec![ParentEdge::full(0, 0)])]],
    })
    .unwrap();
    let tr = g.forward(&[vec![0.8]], 0, 0).unwrap();
    let gp = g.param_vjp(id(1, 0), &tr, &[1.0, 2.0]);
    assert_eq!(&gp[..2], &[0.0, 0.0]);
    assert_eq!(&gp[2..], &[2.0, 1.0, 0.0]);
    assert_eq!(g.input_vjp(id(1, 0), &tr, &[1.0, 2.0]), vec![0.0]);
    let tr0 = g.forward(&[vec![-0.3]], 0, 0).unwrap();
    assert_eq!(&g.param_vjp(id(1, 0), &tr0, &[1.0, 0.0])[2..], &[0.0; 3]);
}

#[test]
fn extended_ancestors_of_dense_graph() {
    let g = dense(&[2, 3]);
    let layer1: BTreeSet<NodeId> = (0..3).map(|i| id(1, i)).collect();
    for i in 0..3 {
        assert_eq!(g.extended_ancestors(id(1, i)).unwrap(), layer1);
    }
    assert!(matches!(g.extended_ancestors(id(0, 0)), Err(Error::Contract(_))));
    assert!(matches!(g.extended_ancestors(id(5, 0)), Err(Error::Lookup(_))));
}

#[test]
fn extended_ancestors_of_a_chain() {
    let g = chain(NodeKind::Identity, vec![vec![]; 3]);
    // an_sib(3) = {3} ∪ an_sib(2) = {3, 2} ∪ an_sib(1) = {3, 2, 1} ∪ ∅.
    let want: BTreeSet<NodeId> = [id(1, 0), id(2, 0), id(3, 0)].into();
    assert_eq!(g.extended_ancestors(id(3, 0)).unwrap(), want);
    assert_eq!(g.extended_ancestors(id(1, 0)).unwrap(), [id(1, 0)].into());
}

#[test]
fn parallel_chains_stay_separate() {
    let mut layers = vec![vec![NodeSpec::input(1), NodeSpec::input(1)]];
    for l in 1..4 {
        layers.push((0..2).map(|i| NodeSpec::new(NodeKind::Identity, 1, vec![], vec![ParentEdge::full(l - 1, i)])).collect());
    }
    let g = LayeredGraph::build(GraphSpec { layers }).unwrap();
    for l in 1..4 {
        for i in 0..2 {
            assert!(g.extended_ancestors(id(l, i)).unwrap().iter().all(|n| n.index == i));
        }
    }
}

#[test]
fn sibling_sets_share_parents() {
    // (1,0) <- {0}, (1,1) <- {0,1}, (1,2) <- {2}.
    let lin = |k: usize, ps: Vec<usize>| NodeSpec::new(NodeKind::Linear { bias: false }, 1, vec![1.0; k], ps.into_iter().map(|p| ParentEdge::full(0, p)).collect());
    let g = LayeredGraph::build(GraphSpec {
        layers: vec![vec![NodeSpec::input(1); 3], vec![lin(1, vec![0]), lin(2, vec![0, 1]), lin(1, vec![2])]],
    })
    .unwrap();
    assert_eq!(g.sibling_set(id(1, 0)), vec![id(1, 0), id(1, 1)]);
    assert_eq!(g.sibling_set(id(1, 2)), vec![id(1, 2)]);
    let rep = g.check_conditions(&FeedbackSpec::deterministic(vec![vec![0.0]; 3]));
    assert!(rep.a3 && !rep.a1 && !rep.a2);
    assert_eq!(rep.a3_witnesses, vec![id(1, 0), id(1, 1), id(1, 2)]);
}

#[test]
fn condition_reports() {
    let g = dense(&[2, 3, 1]);
    let det = FeedbackSpec::deterministic(vec![vec![0.0]]);
    let rep = g.check_conditions(&det);
    assert_eq!((rep.a1, rep.a2, rep.a3), (false, false, false));
    assert!(!rep.any());
    let noisy = FeedbackSpec { terminals: vec![TerminalFeedback { target: Target::Constant(vec![0.0]), noise: FeedbackNoise::Gaussian { sigma: 1.0 } }] };
    assert!(g.check_conditions(&noisy).a1);

    let mut layers = vec![vec![NodeSpec::input(1)]];
    layers.push(vec![NodeSpec::new(NodeKind::Linear { bias: false }, 1, vec![1.0], vec![ParentEdge::full(0, 0)]).with_noise(NodeNoise::BernoulliMask { p: 0.5 })]);
    let g = LayeredGraph::build(GraphSpec { layers }).unwrap();
    let rep = g.check_conditions(&det);
    assert_eq!((rep.a1, rep.a2, rep.a3), (false, true, false));
}

#[test]
fn specs_read_from_json() {
    let text = r#"{
        "layers": [
            [ { "kind": { "type": "input" }, "out_dim": 2 } ],
            [ { "kind": { "type": "linear", "bias": true }, "out_dim": 1,
                "params": [0.5, -1.0, 0.25],
                "noise": { "type": "bernoulli-mask", "p": 0.5 },
                "parents": [ { "parent": { "layer": 0, "index": 0 } } ] } ]
        ]
    }"#;
    let spec: GraphSpec = serde_json::from_str(text).unwrap();
    let g = LayeredGraph::build(spec.clone()).unwrap();
    let tr = g.forward_with_noise(&[vec![2.0, 1.0]], &[vec![None], vec![Some(vec![1.0])]]).unwrap();
    assert_eq!(tr.node(id(1, 0)).output, vec![(0.5 * 2.0 - 1.0 + 0.25) / 0.5]);
    let back: GraphSpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back, spec);
    assert!(serde_json::from_str::<GraphSpec>(r#"{"layers": [], "extra": 1}"#).is_err());
}
