mod common;

use common::*;
use microrec_core::corpus::Label;
use microrec_core::features::NodeDistances;
use microrec_core::graph::*;
use microrec_core::inference::Engine;
use proptest::prelude::*;
use rand::Rng;

const LN2: f64 = std::f64::consts::LN_2;

#[test]
fn node_potential_examples() {
    let zero = NodeDistances::default();
    let p = Params::splat(0.7);
    assert_eq!(node_log_potential(&zero, 1.0, &p), 0.0);
    assert_eq!(node_log_potential(&zero, -1.0, &p), 0.0);
    let d = NodeDistances { d_u: 1.0, d_tp: 0.5, d_kw: 0.25 };
    let p = Params::new(1.0, 1.0, 1.0, 3.0);
    assert!((node_log_potential(&d, 1.0, &p) + 1.75).abs() < 1e-15);
    assert!((node_log_potential(&d, -1.0, &p) - 1.75).abs() < 1e-15);
}

#[test]
fn node_potential_matches_factor_product() {
    // f·g·h = exp(−y·α·d_U)·exp(−y·β·d_TP)·exp(−y·γ·d_KW)
    let mut r = rng(11);
    for _ in 0..100 {
        let d = NodeDistances { d_u: r.random_range(0.0..3.0), d_tp: r.random_range(0.0..2.0), d_kw: r.random_range(0.0..4.0) };
        let p = random_params(&mut r, 1.0);
        let y = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let product = (-y * p.alpha * d.d_u).exp() * (-y * p.beta * d.d_tp).exp() * (-y * p.gamma * d.d_kw).exp();
        let ratio = node_log_potential(&d, y, &p).exp() / product;
        assert!((ratio - 1.0).abs() < 1e-12, "{ratio}");
    }
}

#[test]
fn edge_potential_examples() {
    let p = Params::new(0.0, 0.0, 0.0, 1.0);
    assert_eq!(edge_log_potential(1.0, 1.0, &p), 0.0);
    assert_eq!(edge_log_potential(1.0, -1.0, &p), -4.0);
    for a in [-1.0, 1.0] {
        for b in [-1.0, 1.0] {
            assert_eq!(edge_log_potential(a, b, &p), edge_log_potential(b, a, &p));
            let v = edge_log_potential(a, b, &p);
            assert!(v <= 0.0);
            assert_eq!(v == 0.0, a == b);
        }
    }
}

#[test]
fn stats_examples() {
    let g = FactorGraph::new(vec![node(0, (1.0, 1.0, 1.0), None)], Default::default(), Params::default()).unwrap();
    let s = sufficient_stats(&g, &[Some(Label::Like)]).unwrap();
    assert_eq!(s.to_array(), [-1.0, -1.0, -1.0, 0.0]);

    let g = FactorGraph::new(vec![node(0, (0.0, 0.0, 0.0), None), node(1, (0.0, 0.0, 0.0), None)], edges(&[(0, 1)]), Params::default())
        .unwrap();
    let s = sufficient_stats(&g, &[Some(Label::Dislike), Some(Label::Dislike)]).unwrap();
    assert_eq!(s.edge, 0.0);
    assert!(matches!(sufficient_stats(&g, &[Some(Label::Like), None]), Err(GraphError::IncompleteLabeling { .. })));
}

#[test]
fn stats_dot_params_is_sum_of_potentials() {
    let mut r = rng(12);
    for _ in 0..20 {
        let params = random_params(&mut r, 1.0);
        let g = random_graph(&mut r, 8, 12, 0.0, params);
        let y: Vec<Label> = (0..8).map(|_| if r.random_bool(0.5) { Label::Like } else { Label::Dislike }).collect();
        let s = sufficient_stats(&g, &y.iter().map(|&l| Some(l)).collect::<Vec<_>>()).unwrap();
        let mut direct = 0.0;
        for n in &g.nodes {
            direct += node_log_potential(&n.distances, y[n.id].value(), &params);
        }
        for e in g.edges.iter() {
            direct += edge_log_potential(y[e.a].value(), y[e.b].value(), &params);
        }
        assert!((params.dot(&s) - direct).abs() < 1e-12);
    }
}

#[test]
fn graph_validation() {
    let bad = FactorGraph::new(vec![node(1, (0.0, 0.0, 0.0), None)], Default::default(), Params::default());
    assert_eq!(bad.err(), Some(GraphError::NodeId { position: 0, id: 1 }));
    let nodes = vec![node(0, (0.0, 0.0, 0.0), None), node(1, (0.0, 0.0, 0.0), None)];
    let bad = FactorGraph::new(nodes.clone(), edges(&[(0, 5)]), Params::default());
    assert!(matches!(bad, Err(GraphError::EdgeEndpoints { .. })));
    let mut dup = edges(&[(0, 1)]);
    dup.0.push(dup.0[0]);
    assert!(matches!(FactorGraph::new(nodes.clone(), dup, Params::default()), Err(GraphError::DuplicateEdge { .. })));
    let nan = Params::new(f64::NAN, 0.0, 0.0, 0.0);
    assert_eq!(FactorGraph::new(nodes, Default::default(), nan).err(), Some(GraphError::NonFiniteParams));
}

#[test]
fn uniform_model_likelihood() {
    let mut r = rng(13);
    for _ in 0..30 {
        let n = r.random_range(1..40);
        let g = random_graph(&mut r, n, 2 * n, 0.5, Params::default());
        let o = log_likelihood(&g, &Engine::default()).unwrap();
        let expected = -(g.n_known() as f64) * LN2;
        assert!((o - expected).abs() < 1e-12, "{o} vs {expected}");
    }
}

#[test]
fn likelihood_matches_double_enumeration() {
    let mut r = rng(14);
    for _ in 0..20 {
        let params = random_params(&mut r, 1.0);
        let g = random_graph(&mut r, 10, 14, 0.4, params);
        let o = log_likelihood(&g, &Engine::Exact).unwrap();
        assert!((o - brute_omega(&g)).abs() < 1e-10);
    }
}

#[test]
fn fully_labeled_likelihood() {
    let mut r = rng(15);
    let params = random_params(&mut r, 1.0);
    let g = random_graph(&mut r, 8, 10, 1.0, params);
    let labeling: Vec<Option<Label>> = g.nodes.iter().map(|n| n.label).collect();
    let s = sufficient_stats(&g, &labeling).unwrap();
    let o = log_likelihood(&g, &Engine::Exact).unwrap();
    assert!((o - (params.dot(&s) - brute_log_z(&g, false))).abs() < 1e-10);

    // gradient reduces to S(Y^K) − E[S]
    let grad = gradient(&g, &Engine::Exact).unwrap();
    let h = 1e-5;
    for k in 0..4 {
        let mut a = params.to_array();
        a[k] += h;
        let up = brute_log_z(&g.with_params(Params::from_array(a)), false);
        a[k] -= 2.0 * h;
        let down = brute_log_z(&g.with_params(Params::from_array(a)), false);
        let expected = s.to_array()[k] - (up - down) / (2.0 * h);
        assert!(rel_err(grad.to_array()[k], expected) < 1e-6);
    }
}

#[test]
fn symmetric_single_node_gradient_vanishes() {
    let g = FactorGraph::new(vec![node(0, (0.0, 0.0, 0.0), None)], Default::default(), Params::splat(0.3)).unwrap();
    assert_eq!(gradient(&g, &Engine::Exact).unwrap().to_array(), [0.0; 4]);
}

#[test]
fn normalization_by_enumeration() {
    let mut r = rng(16);
    for _ in 0..20 {
        let n = r.random_range(1..=12);
        let params = random_params(&mut r, 1.0);
        let g = random_graph(&mut r, n, 2 * n, 0.0, params);
        let log_z = free_log_partition(&g, &Engine::Exact).unwrap();
        let total: f64 = labelings(&g).iter().map(|(y, _)| (log_weight(&g, y) - log_z).exp()).sum();
        assert!((total - 1.0).abs() < 1e-10, "{total}");
    }
}

fn flipped(g: &FactorGraph) -> FactorGraph {
    let nodes = g.nodes.iter().map(|n| BehaviorNode { label: n.label.map(Label::flipped), ..n.clone() }).collect();
    FactorGraph::new(nodes, g.edges.clone(), g.params).unwrap()
}

#[test]
fn label_flip_symmetry() {
    let mut r = rng(17);
    let params = random_params(&mut r, 1.0);
    let g = random_graph(&mut r, 9, 12, 1.0, params);
    let labels: Vec<Option<Label>> = g.nodes.iter().map(|n| n.label).collect();
    let flipped_labels: Vec<Option<Label>> = labels.iter().map(|l| l.map(Label::flipped)).collect();
    let s = sufficient_stats(&g, &labels).unwrap();
    let t = sufficient_stats(&g, &flipped_labels).unwrap();
    assert_eq!([t.f, t.g, t.h], [-s.f, -s.g, -s.h]);
    assert_eq!(t.edge, s.edge);

    // with all d = 0, Ω is invariant under flipping every clamp
    for _ in 0..10 {
        let params = random_params(&mut r, 1.0);
        let mut g = random_graph(&mut r, 10, 14, 0.5, params);
        for n in &mut g.nodes {
            n.distances = NodeDistances::default();
        }
        let g = FactorGraph::new(g.nodes.clone(), g.edges.clone(), g.params).unwrap();
        let a = log_likelihood(&g, &Engine::Exact).unwrap();
        let b = log_likelihood(&flipped(&g), &Engine::Exact).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn smoothing_is_monotone_in_lambda() {
    let nodes = vec![node(0, (0.4, 0.2, 0.1), Some(Label::Like)), node(1, (0.3, 0.5, 0.2), None)];
    let mut last = 0.0;
    for step in 0..=20 {
        let lambda = step as f64 * 0.1;
        let g = FactorGraph::new(nodes.clone(), edges(&[(0, 1)]), Params::new(0.5, 0.5, 0.5, lambda)).unwrap();
        let p = microrec_core::inference::exact_marginals(&g).unwrap().p_pos[1];
        assert!(p > last, "λ={lambda}: {p} ≤ {last}");
        last = p;
    }
}

#[test]
fn unclamped_components_are_skipped() {
    let mut r = rng(18);
    let params = random_params(&mut r, 1.0);
    let g = random_graph(&mut r, 6, 0, 0.0, params);
    let o = objective(&g, &Engine::Exact).unwrap();
    assert_eq!(o.omega, 0.0);
    assert_eq!(o.gradient.to_array(), [0.0; 4]);
}

fn fd_check(seed: u64) {
    let mut r = rng(seed);
    let n = r.random_range(1..=10);
    let params = random_params(&mut r, 1.0);
    let g = random_graph(&mut r, n, 15, 0.5, params);
    let grad = gradient(&g, &Engine::Exact).unwrap().to_array();
    let h = 1e-5;
    for k in 0..4 {
        let mut a = params.to_array();
        a[k] += h;
        let up = log_likelihood(&g.with_params(Params::from_array(a)), &Engine::Exact).unwrap();
        a[k] -= 2.0 * h;
        let down = log_likelihood(&g.with_params(Params::from_array(a)), &Engine::Exact).unwrap();
        let fd = (up - down) / (2.0 * h);
        assert!(rel_err(grad[k], fd) < 1e-4, "seed {seed} component {k}: {} vs {fd}", grad[k]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>()) {
        fd_check(seed);
    }

    #[test]
    fn uniform_model_is_minus_known_log2(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(1..30);
        let g = random_graph(&mut r, n, 2 * n, 0.5, Params::default());
        let o = log_likelihood(&g, &Engine::default()).unwrap();
        prop_assert!((o + g.n_known() as f64 * LN2).abs() < 1e-12);
    }
}
