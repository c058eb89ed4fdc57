use std::sync::Arc;

use abcd_core::harness::{generate_problem, CoefficientSpec, Topology, TopologyConfig};
use abcd_core::model::{global_utility, local_utility};
use abcd_core::oracle::verify_equivalence;
use abcd_core::problem_file::{parse_problem, render_problem};
use abcd_core::solver::{candidate_update, clamp_to_domain, SelectionState};
use abcd_core::{CdcopInstance, DistributedSolver, IntervalDomain, PseudoTree, SolverConfig, Variant};
use proptest::prelude::*;

fn arb_domain() -> impl Strategy<Value = IntervalDomain> {
    (-50.0..50.0f64, 0.1..40.0f64).prop_map(|(lb, w)| IntervalDomain::new(lb, lb + w).unwrap())
}

fn arb_topology() -> impl Strategy<Value = Topology> {
    prop_oneof![
        (0.2..0.9f64).prop_map(|p| Topology::ErdosRenyi { p }),
        (1..3usize).prop_map(|m_edges| Topology::BarabasiAlbert { m_edges }),
        (2..5usize, 0.0..0.6f64).prop_map(|(k, rewire)| Topology::WattsStrogatz { k, rewire }),
    ]
}

fn arb_instance(max_n: usize) -> impl Strategy<Value = CdcopInstance> {
    (arb_topology(), 5..=max_n, any::<u64>(), arb_domain())
        .prop_map(|(kind, n, seed, dom)| generate_problem(&TopologyConfig { kind, n, seed }, CoefficientSpec::default(), dom).unwrap())
}

fn arb_variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::AbcdE), Just(Variant::AbcdC)]
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn local_utilities_double_count(inst in arb_instance(15), r in prop::collection::vec(0.0..1.0f64, 15)) {
        let x = abcd_core::Assignment::new(
            inst.domains().iter().zip(&r).map(|(d, r)| d.lb() + r * d.width()).collect(),
        );
        let local: f64 = (0..inst.n()).map(|a| local_utility(&inst, a, &x).unwrap()).sum();
        prop_assert!(close(local, 2.0 * global_utility(&inst, &x).unwrap()));
    }

    #[test]
    fn tree_is_a_bfs_spanning_tree(inst in arb_instance(20), seed in any::<u64>()) {
        let tree = PseudoTree::build(&inst, seed).unwrap();
        let n = inst.n();
        prop_assert_eq!(tree.depth(tree.root()), 0);
        prop_assert_eq!(tree.parent(tree.root()), None);
        let mut ranks: Vec<usize> = (0..n).map(|a| tree.priority(a)).collect();
        ranks.sort_unstable();
        prop_assert_eq!(ranks, (0..n).collect::<Vec<_>>());
        for a in 0..n {
            if let Some(p) = tree.parent(a) {
                prop_assert_eq!(tree.depth(p) + 1, tree.depth(a));
                prop_assert!(tree.children(p).contains(&a));
                prop_assert!(inst.neighbors(a).contains(&p));
                prop_assert_eq!(tree.path_len(a, p), 1);
            } else {
                prop_assert_eq!(a, tree.root());
            }
            for &b in inst.neighbors(a) {
                prop_assert!(tree.depth(a).abs_diff(tree.depth(b)) <= 1);
                if tree.depth(a) < tree.depth(b) {
                    prop_assert!(tree.priority(a) < tree.priority(b));
                }
                prop_assert_eq!(tree.path_len(a, b), tree.path_len(b, a));
            }
        }
        let edges: usize = (0..n).map(|a| tree.children(a).len()).sum();
        prop_assert_eq!(edges, n - 1);
    }

    #[test]
    fn selection_probabilities_normalize(fitness in prop::collection::vec(-1e6..1e6f64, 1..50)) {
        let sel = SelectionState::from_fitness(&fitness);
        let total: f64 = sel.prob.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(sel.prob.iter().all(|&p| p > 0.0));
        prop_assert!(sel.fit.iter().all(|&f| f > 0.0));
    }

    #[test]
    fn update_stays_in_domain(
        dom in arb_domain(),
        v in prop::collection::vec(0.0..1.0f64, 4),
        phi in -1.0..1.0f64,
        cap in 0.0..1.5f64,
    ) {
        let x: Vec<f64> = v.iter().map(|r| dom.lb() + r * dom.width()).collect();
        let y = candidate_update(x[0], x[1], x[2], x[3], phi, cap, dom);
        prop_assert!(dom.contains(y));
        prop_assert_eq!(clamp_to_domain(y, dom), y);
    }

    #[test]
    fn problem_file_round_trip(inst in arb_instance(15)) {
        let text = render_problem(&inst, &["generated for a round trip".to_string()]).unwrap();
        let back = parse_problem(&text).unwrap();
        prop_assert_eq!(back.n(), inst.n());
        prop_assert_eq!(back.domains(), inst.domains());
        prop_assert_eq!(back.constraints().len(), inst.constraints().len());
        for (a, b) in back.constraints().iter().zip(inst.constraints()) {
            prop_assert_eq!(a.scope(), b.scope());
            prop_assert_eq!(a.function().as_quadratic(), b.function().as_quadratic());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn solver_state_stays_consistent(
        inst in arb_instance(10),
        s in 2..12usize,
        m_frac in 0.0..1.0f64,
        seed in any::<u64>(),
        variant in arb_variant(),
    ) {
        let m = 1 + ((s - 1) as f64 * m_frac) as usize;
        let n = inst.n();
        let mut sv = DistributedSolver::new(Arc::new(inst), SolverConfig::new(s, m, 1, seed).with_variant(variant)).unwrap();
        for _ in 0..6 {
            sv.iterate().unwrap();
            for i in 0..n {
                let dom = sv.instance().domains()[i];
                let stored: Vec<f64> = sv.stored_values(i).collect();
                prop_assert_eq!(stored.len(), 2 * s + 2 * m);
                prop_assert!(stored.iter().all(|&x| dom.contains(x)));
            }
            for (u, f) in sv.root_fitness().into_iter().enumerate() {
                if let Some(f) = f {
                    prop_assert!(close(f, global_utility(sv.instance(), &sv.solution(u)).unwrap()));
                }
            }
            let best = sv.gbest_fitness();
            prop_assert!(close(best, global_utility(sv.instance(), &sv.gbest_assignment()).unwrap()));
        }
        prop_assert!(sv.trace().is_monotone());
    }

    #[test]
    fn replica_agrees_on_random_configs(
        inst in arb_instance(9),
        s in 2..10usize,
        m_frac in 0.0..1.0f64,
        seed in any::<u64>(),
        variant in arb_variant(),
    ) {
        let m = 1 + ((s - 1) as f64 * m_frac) as usize;
        let cfg = SolverConfig::new(s, m, 8, seed).with_variant(variant);
        prop_assert!(verify_equivalence(&inst, &cfg).is_ok());
    }
}
