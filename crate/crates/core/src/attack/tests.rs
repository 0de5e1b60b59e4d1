use proptest::prelude::*;

use super::*;
use crate::dataset::{generate_sbm, SbmParams};
use crate::graph::tests::plain_graph;

fn sbm() -> Graph {
    generate_sbm(&SbmParams::new(2, 15, 0.3, 0.05, 5)).unwrap()
}

fn brute_pools(g: &Graph, nodes: &BTreeSet<usize>) -> (BTreeSet<Edge>, BTreeSet<Edge>) {
    let l = g.labels();
    let mut ins = BTreeSet::new();
    let mut del = BTreeSet::new();
    for &a in nodes {
        for &b in nodes {
            if a < b {
                let adjacent = g.edges().contains(&Edge::new(a, b));
                if l[a] != l[b] && !adjacent {
                    ins.insert(Edge::new(a, b));
                }
                if l[a] == l[b] && adjacent {
                    del.insert(Edge::new(a, b));
                }
            }
        }
    }
    (ins, del)
}

#[test]
fn total_budget_splits_by_gamma() {
    assert_eq!(AttackBudget::total(3.0, 40, 0).resolve(100).unwrap(), (30, 10));
    assert_eq!(AttackBudget::total(1.0, 10, 0).resolve(100).unwrap(), (5, 5));
    assert_eq!(AttackBudget::total(1.0, 0, 0).resolve(100).unwrap(), (0, 0));
}

#[test]
fn edr_budget_fixes_net_change() {
    // net = 0.04 * 1000 = 40, n_del = 40 / 2 = 20, n_ins = 60.
    assert_eq!(AttackBudget::edr(3.0, 0.04, 0).resolve(1000).unwrap(), (60, 20));
    // net = -200, n_del = 200 / (2/3) = 300, n_ins = 100.
    assert_eq!(AttackBudget::edr(1.0 / 3.0, 0.2, 0).resolve(1000).unwrap(), (100, 300));
    assert!(AttackBudget::edr(1.0, 0.1, 0).resolve(1000).is_err());
    assert!(AttackBudget::edr(0.0, 0.1, 0).resolve(1000).is_err());
    assert!(AttackBudget::edr(2.0, -0.1, 0).resolve(1000).is_err());
}

#[test]
fn unit_gamma_gives_equal_counts() {
    let g = sbm();
    let plan = build_plan(&g, &CombinedMask::all_nodes(&g), &AttackBudget::total(1.0, 10, 4)).unwrap();
    assert_eq!((plan.insert.len(), plan.delete.len()), (5, 5));
    assert!(!plan.truncated);
}

#[test]
fn single_class_mask_has_no_insertion_pool() {
    let g = plain_graph(4, &[(0, 1), (2, 3)], vec![0, 0, 1, 1]);
    let mask = CombinedMask::from_edges([(Edge::new(0, 1), BTreeSet::from([0]))].into(), &g);
    let err = build_plan(&g, &mask, &AttackBudget::total(2.0, 3, 0)).unwrap_err();
    assert!(matches!(err, Error::EmptyPool(_)));
    let empty = CombinedMask::from_edges(Default::default(), &g);
    assert!(matches!(
        build_plan(&g, &empty, &AttackBudget::total(2.0, 3, 0)),
        Err(Error::EmptyMask)
    ));
}

#[test]
fn sbm_plan_lies_in_enumerated_pools() {
    let g = generate_sbm(&SbmParams::new(2, 20, 0.4, 0.05, 9)).unwrap();
    let mask = CombinedMask::all_nodes(&g);
    let plan = build_plan(&g, &mask, &AttackBudget::total(3.0, 40, 11)).unwrap();
    assert_eq!((plan.insert.len(), plan.delete.len()), (30, 10));
    let (ins, del) = brute_pools(&g, &mask.nodes);
    assert_eq!(insertion_pool_size(&g, &mask), ins.len());
    assert_eq!(deletion_pool(&g, &mask).into_iter().collect::<BTreeSet<_>>(), del);
    assert!(plan.insert.iter().all(|e| ins.contains(e)));
    assert!(plan.delete.iter().all(|e| del.contains(e)));
}

#[test]
fn small_pools_truncate_with_flag() {
    let g = plain_graph(4, &[(0, 1), (2, 3), (1, 2)], vec![0, 0, 1, 1]);
    let mask = CombinedMask::all_nodes(&g);
    // Insertion pool {0-2, 0-3, 1-3}; deletion pool {0-1, 2-3}.
    let plan = build_plan(&g, &mask, &AttackBudget::total(3.0, 40, 0)).unwrap();
    assert!(plan.truncated);
    assert_eq!(plan.insert, vec![Edge::new(0, 2), Edge::new(0, 3), Edge::new(1, 3)]);
    assert_eq!(plan.delete, vec![Edge::new(0, 1), Edge::new(2, 3)]);
}

#[test]
fn empty_plan_is_identity() {
    let g = sbm();
    let r = apply_plan(&g, &RewirePlan::default()).unwrap();
    assert_eq!(r.edges(), g.edges());
    assert_eq!(r.features(), g.features());
    assert_eq!(r.labels(), g.labels());
    assert_eq!(r.split(), g.split());
}

#[test]
fn deleting_one_edge() {
    let g = sbm();
    let e = g.edges()[3];
    let plan = RewirePlan {
        delete: vec![e],
        ..Default::default()
    };
    let r = apply_plan(&g, &plan).unwrap();
    assert_eq!(r.num_edges(), g.num_edges() - 1);
    assert!(!r.has_edge(e.u(), e.v()));
}

#[test]
fn inconsistent_plans_are_rejected() {
    let g = plain_graph(3, &[(0, 1)], vec![0, 1, 0]);
    let bad = [
        RewirePlan { delete: vec![Edge::new(1, 2)], ..Default::default() },
        RewirePlan { insert: vec![Edge::new(0, 1)], ..Default::default() },
        RewirePlan { insert: vec![Edge::new(1, 2), Edge::new(1, 2)], ..Default::default() },
        RewirePlan { insert: vec![Edge::new(1, 5)], ..Default::default() },
    ];
    for p in &bad {
        assert!(matches!(apply_plan(&g, p), Err(Error::PlanMismatch(_))), "{p:?}");
    }
}

#[test]
fn random_baseline_matches_budget_and_has_larger_pool() {
    let g = generate_sbm(&SbmParams::new(3, 15, 0.3, 0.05, 8)).unwrap();
    let mask = CombinedMask::from_edges(
        g.edges().iter().take(6).map(|&e| (e, BTreeSet::from([e.u()]))).collect(),
        &g,
    );
    let budget = AttackBudget::total(2.0, 6, 3);
    let guided = build_plan(&g, &mask, &budget);
    let random = random_baseline_plan(&g, &budget).unwrap();
    if let Ok(p) = &guided {
        if !p.truncated {
            assert_eq!((p.insert.len(), p.delete.len()), (random.insert.len(), random.delete.len()));
        }
    }
    assert_eq!(random, random_baseline_plan(&g, &budget).unwrap());
    let all = CombinedMask::all_nodes(&g);
    assert!(insertion_pool_size(&g, &all) > insertion_pool_size(&g, &mask));
    assert_eq!(insertion_pool(&g, &all).len(), insertion_pool_size(&g, &all));
}

#[test]
fn rejection_and_enumeration_paths_stay_in_pool() {
    let g = generate_sbm(&SbmParams::new(2, 30, 0.3, 0.02, 1)).unwrap();
    let mask = CombinedMask::all_nodes(&g);
    let (ins, _) = brute_pools(&g, &mask.nodes);
    for count in [5, ins.len() / 2, ins.len()] {
        let plan = build_plan(&g, &mask, &AttackBudget::total(1e9, count, 2)).unwrap();
        assert_eq!(plan.insert.len(), count);
        let unique: BTreeSet<_> = plan.insert.iter().collect();
        assert_eq!(unique.len(), count);
        assert!(plan.insert.iter().all(|e| ins.contains(e)));
    }
}

#[test]
fn plan_text_round_trip() {
    let g = sbm();
    let plan = random_baseline_plan(&g, &AttackBudget::total(2.0, 9, 17)).unwrap();
    let text = format_plan(&plan);
    assert!(text.starts_with("# rewire-plan 1\n# seed 17\n"));
    let p = Path::new("plan.txt");
    assert_eq!(parse_plan(&text, p).unwrap(), plan);
    assert!(parse_plan("+ 0 1\n", p).is_err());
    assert!(parse_plan("# rewire-plan 1\n* 0 1\n", p).is_err());
    assert!(parse_plan("# rewire-plan 1\n+ 2 2\n", p).is_err());
}

#[test]
fn edr_measures() {
    let g = plain_graph(4, &[(0, 1), (1, 2), (2, 3), (0, 3)], vec![0, 1, 0, 1]);
    let plan = RewirePlan {
        insert: vec![Edge::new(0, 2)],
        delete: vec![],
        ..Default::default()
    };
    let r = apply_plan(&g, &plan).unwrap();
    assert_eq!(edr_between(&g, &r), 0.25);
    assert_eq!(plan.edr_net(&g), 0.25);
    assert_eq!(plan.edr_total(&g), 0.25);
    assert_eq!(plan.gamma(), f64::INFINITY);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn plans_respect_labels_and_reverse_restores(
        graph_seed in 0u64..1000,
        plan_seed in 0u64..1000,
        gamma in 0.2f64..5.0,
        total in 0usize..40,
        take in 1usize..40,
    ) {
        let g = generate_sbm(&SbmParams::new(3, 8, 0.4, 0.1, graph_seed)).unwrap();
        prop_assume!(g.num_edges() > 0);
        let mask = CombinedMask::from_edges(
            g.edges().iter().take(take).map(|&e| (e, BTreeSet::from([e.u()]))).collect(),
            &g,
        );
        let budget = AttackBudget::total(gamma, total, plan_seed);
        let Ok(plan) = build_plan(&g, &mask, &budget) else { return Ok(()); };
        let l = g.labels();
        for e in &plan.insert {
            prop_assert_ne!(l[e.u()], l[e.v()]);
            prop_assert!(!g.has_edge(e.u(), e.v()));
            prop_assert!(mask.nodes.contains(&e.u()) && mask.nodes.contains(&e.v()));
        }
        for e in &plan.delete {
            prop_assert_eq!(l[e.u()], l[e.v()]);
            prop_assert!(g.has_edge(e.u(), e.v()));
        }
        prop_assert_eq!(&build_plan(&g, &mask, &budget).unwrap(), &plan);
        let r = apply_plan(&g, &plan).unwrap();
        prop_assert_eq!(r.num_edges() + plan.delete.len(), g.num_edges() + plan.insert.len());
        let back = apply_plan(&r, &plan.reverse()).unwrap();
        prop_assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn edr_within_one_edge_of_target(
        graph_seed in 0u64..500,
        gamma in prop_oneof![1.5f64..6.0, 0.1f64..0.7],
        target in 0.0f64..0.3,
    ) {
        let g = generate_sbm(&SbmParams::new(2, 25, 0.3, 0.05, graph_seed)).unwrap();
        let plan = random_baseline_plan(&g, &AttackBudget::edr(gamma, target, 1)).unwrap();
        prop_assume!(!plan.truncated);
        let r = apply_plan(&g, &plan).unwrap();
        let edges = g.num_edges() as f64;
        prop_assert!((edr_between(&g, &r) - target).abs() * edges <= 0.5 + 1e-9);
        prop_assert!((plan.edr_net(&g) - edr_between(&g, &r)).abs() < 1e-12);
    }
}
