//! End-to-end checks on the built-in models: synthesis, compaction and
//! shielded evaluation agree with each other.

use std::sync::Arc;

use gridshield::caap::{self, partitioning_of_grid, CompactOptions};
use gridshield::eval::{self, BatchConfig, Fallback, Strategy};
use gridshield::models::{self, ParamOverrides};
use gridshield::shield::ShieldRepr;
use gridshield::synthesis::{synthesize, OutOfBoundsMode, Synthesis, SynthesisConfig};
use gridshield::{GridSpec, Model, SamplePlan, Shield};

fn run(name: &str, grid: &str, property: &str, n: u32, m: u32) -> (Box<dyn Model>, Synthesis) {
    let model = models::by_name(name, &ParamOverrides::new()).unwrap();
    let grid = GridSpec::parse(grid, model.descriptor()).unwrap();
    let config = SynthesisConfig {
        property: property.into(),
        plan: SamplePlan::new(n).unwrap(),
        repeats: m,
        seed: 8,
        out_of_bounds: OutOfBoundsMode::Auto,
    };
    let s = synthesize(model.as_ref(), &grid, &config).unwrap();
    (model, s)
}

/// Every allowed action from a safe cell leads only to safe cells, and a
/// cell has allowed actions exactly when it is safe.
fn assert_closed(s: &Synthesis) {
    let t = &s.transitions;
    for id in 0..t.grid().total_cells() {
        let allowed = s.shield.get(id);
        assert_eq!(!allowed.is_empty(), s.safe.contains(id), "cell {id}");
        for a in allowed.iter() {
            for &succ in t.successors(id, a.index()) {
                assert!(s.safe.contains(succ as u64), "cell {id} action {a:?} reaches unsafe {succ}");
            }
        }
    }
}

#[test]
fn shields_are_closed_under_their_own_transitions() {
    for (name, grid, prop, n, m) in [
        ("bouncing-ball", "v[-13,13]:260,p[0,11]:110,loc", "!Stop", 3, 1),
        ("bouncing-ball-energy", "e[0,100]:25,v[-13,13]:26,loc", "!Stop", 4, 1),
        ("random-walk", "x[0,1.2]:40,t[0,1.2]:40", "!Late", 3, 3),
        ("water-tank", "level[0,100]:21,phase", "InRange", 3, 1),
    ] {
        let (_, s) = run(name, grid, prop, n, m);
        assert_closed(&s);
        assert!(s.safe.count() > 0, "{name} has no safe cell");
    }
}

#[test]
fn deterministic_model_ignores_repeats() {
    let (_, one) = run("water-tank", "level[0,100]:21,phase", "InRange", 3, 1);
    let (_, three) = run("water-tank", "level[0,100]:21,phase", "InRange", 3, 3);
    let t1 = &one.transitions;
    let t3 = &three.transitions;
    for id in 0..t1.rows() {
        for a in 0..t1.num_actions() {
            assert_eq!(t1.successors(id, a), t3.successors(id, a));
        }
    }
    assert_eq!(one.shield, three.shield);
}

#[test]
fn compacted_tree_shield_keeps_the_tank_safe() {
    let (model, s) = run("water-tank", "level[0,100]:21,phase", "InRange", 3, 1);
    let tree = caap::compact(&partitioning_of_grid(&s.shield).unwrap(), &CompactOptions::default())
        .unwrap()
        .tree;
    assert!(tree.num_leaves() <= 40);
    let strategy = |repr| Strategy::Random {
        shield: Some(Arc::new(Shield::new(repr, model.descriptor()).unwrap())),
        fallback: Fallback::Abort,
    };
    let batch = BatchConfig {
        property: "InRange".into(),
        runs: 500,
        horizon: 100.0,
        confidence: 0.99,
        seed: 1,
    };
    let from_grid = eval::estimate_safety(model.as_ref(), &strategy(ShieldRepr::Grid(s.shield.clone())), &batch).unwrap();
    let from_tree = eval::estimate_safety(model.as_ref(), &strategy(ShieldRepr::Tree(tree)), &batch).unwrap();
    assert_eq!(from_grid.violations, 0);
    // Same labels everywhere, same random streams: identical runs.
    assert_eq!(from_grid, from_tree);

    let unshielded = Strategy::Random {
        shield: None,
        fallback: Fallback::Abort,
    };
    assert!(eval::estimate_safety(model.as_ref(), &unshielded, &batch).unwrap().violations > 0);
}

#[test]
fn synthesis_is_reproducible() {
    let (_, a) = run("random-walk", "x[0,1.2]:40,t[0,1.2]:40", "!Late", 3, 2);
    let (_, b) = run("random-walk", "x[0,1.2]:40,t[0,1.2]:40", "!Late", 3, 2);
    assert_eq!(a.shield, b.shield);
    assert_eq!(a.safe, b.safe);
}
