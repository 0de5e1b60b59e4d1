//! End-to-end attacks on a stochastic block model graph.

use std::collections::BTreeSet;

use rewire_core::attack::{apply_plan, build_plan, edr_between, AttackBudget};
use rewire_core::dataset::{generate_sbm, SbmParams};
use rewire_core::eval::{degree_distance, embedding_projection, mcr};
use rewire_core::explain::{combine_masks, explain_all, ExplainerConfig};
use rewire_core::nn::{train, Architecture, TrainConfig};
use rewire_core::{Edge, Graph};

fn fixture() -> Graph {
    generate_sbm(&SbmParams::new(2, 60, 0.15, 0.01, 7)).unwrap()
}

#[test]
fn guided_plan_stays_inside_the_explained_pools() {
    let g = fixture();
    let cfg = TrainConfig { seed: 1, ..TrainConfig::for_arch(Architecture::Gcn) };
    let (params, _) = train(&g, Architecture::Gcn, &cfg).unwrap();
    let masks = explain_all(&params, &g, &ExplainerConfig::gnnexplainer()).unwrap();
    let mask = combine_masks(&masks, &g);
    let labels = g.labels();
    let existing: BTreeSet<Edge> = g.edges().iter().copied().collect();

    let plan = build_plan(&g, &mask, &AttackBudget::total(3.0, 40, 11)).unwrap();
    assert_eq!((plan.insert.len(), plan.delete.len()), (30, 10));
    for e in &plan.insert {
        assert!(mask.nodes.contains(&e.u()) && mask.nodes.contains(&e.v()));
        assert_ne!(labels[e.u()], labels[e.v()]);
        assert!(!existing.contains(e));
    }
    for e in &plan.delete {
        assert!(existing.contains(e));
        assert!(mask.nodes.contains(&e.u()) && mask.nodes.contains(&e.v()));
        assert_eq!(labels[e.u()], labels[e.v()]);
    }

    let rewired = apply_plan(&g, &plan).unwrap();
    assert_eq!(rewired.num_edges(), g.num_edges() + 20);
    assert!((edr_between(&g, &rewired) - 20.0 / g.num_edges() as f64).abs() < 1e-12);
    assert!(degree_distance(&g, &rewired) <= 1.0);
}

#[test]
fn insertion_heavy_attack_blurs_classes() {
    let g = fixture();
    for seed in 0..3 {
        let cfg = TrainConfig { seed, ..TrainConfig::for_arch(Architecture::Gcn) };
        let (params, _) = train(&g, Architecture::Gcn, &cfg).unwrap();
        let ex = ExplainerConfig { seed, ..ExplainerConfig::gnnexplainer() };
        let mask = combine_masks(&explain_all(&params, &g, &ex).unwrap(), &g);
        let plan = build_plan(&g, &mask, &AttackBudget::edr(3.0, 0.10, seed)).unwrap();
        let rewired = apply_plan(&g, &plan).unwrap();

        let clean = embedding_projection(&params, &g).unwrap().overlap;
        let attacked = embedding_projection(&params, &rewired).unwrap().overlap;
        assert!(attacked < clean, "seed {seed}: overlap {clean} -> {attacked}");
        assert!(mcr(&params, &rewired).unwrap() >= mcr(&params, &g).unwrap());
    }
}
