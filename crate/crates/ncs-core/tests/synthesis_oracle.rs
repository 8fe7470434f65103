//! Product-game synthesis against a brute-force winning-region oracle.

use std::collections::BTreeSet;

use ncs_core::synthesis::{
    lift_spec, spec_classes, synthesize_system, verify_witnesses, LiftedSpec, Specification,
    SynthError, SynthesisOptions, U_Q,
};
use ncs_core::tsys::{burst_distance, FiniteSystem, StateId};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Game {
    outs: Vec<Vec<u8>>,
    init: Vec<bool>,
    edges: Vec<(u8, u8, u8)>,
    points: Vec<u8>,
    spec_edges: Vec<(u8, u8)>,
    spec_init: Vec<bool>,
    n_max: u32,
    mu: u8,
}

fn game() -> impl Strategy<Value = Game> {
    (1usize..=6, 1usize..=4, 1u32..=2).prop_flat_map(|(n, m, n_max)| {
        (
            prop::collection::vec(prop::collection::vec(0u8..3, 1..=n_max as usize), n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec((0..n as u8, 0u8..2, 0..n as u8), 0..3 * n),
            prop::collection::vec(0u8..3, m),
            prop::collection::vec((0..m as u8, 0..m as u8), 0..2 * m),
            prop::collection::vec(any::<bool>(), m),
            Just(n_max),
            0u8..2,
        )
            .prop_map(|(outs, init, edges, points, spec_edges, spec_init, n_max, mu)| Game {
                outs,
                init,
                edges,
                points,
                spec_edges,
                spec_init,
                n_max,
                mu,
            })
    })
}

fn build(g: &Game) -> (FiniteSystem<u32>, LiftedSpec, f64) {
    let mut s = FiniteSystem::new();
    for (i, o) in g.outs.iter().enumerate() {
        s.add_state(i as u32, o.iter().map(|&v| vec![v as f64 * 0.5]).collect());
        if g.init[i] {
            s.set_initial(i as u32);
        }
    }
    for &(a, u, b) in &g.edges {
        s.add_transition(a as u32, u as u32, b as u32);
    }
    let q = Specification::new(
        (0..g.points.len()).map(|i| format!("q{}", i)).collect(),
        g.points.iter().map(|&p| vec![p as f64 * 0.5]).collect(),
        g.spec_edges.iter().map(|&(a, b)| (a as u32, b as u32)).collect(),
        (0..g.points.len() as u32).filter(|&i| i == 0 || g.spec_init[i as usize]).collect(),
    )
    .unwrap();
    let lifted = lift_spec(&q, 1, g.n_max, 10_000).unwrap();
    (s, lifted, g.mu as f64 * 0.5)
}

fn close(s: &FiniteSystem<u32>, q: &LiftedSpec, a: StateId, b: StateId, mu: f64) -> bool {
    burst_distance(s.output(a), q.output(b)).within(mu)
}

/// Winning pairs of the safety game, by naive iteration over raw lifted
/// states, and the winning inputs of each pair.
fn oracle(s: &FiniteSystem<u32>, q: &LiftedSpec, mu: f64) -> BTreeSet<(StateId, StateId)> {
    let mut w: BTreeSet<(StateId, StateId)> = (0..s.n_states() as u32)
        .flat_map(|a| (0..q.n_states() as u32).map(move |b| (a, b)))
        .filter(|&(a, b)| close(s, q, a, b, mu))
        .collect();
    loop {
        let next: BTreeSet<_> = w
            .iter()
            .copied()
            .filter(|&(a, b)| !good_inputs(s, q, &w, a, b).is_empty())
            .collect();
        if next == w {
            return w;
        }
        w = next;
    }
}

fn good_inputs(
    s: &FiniteSystem<u32>,
    q: &LiftedSpec,
    w: &BTreeSet<(StateId, StateId)>,
    a: StateId,
    b: StateId,
) -> Vec<u32> {
    s.enabled_inputs(a)
        .into_iter()
        .filter(|&u| {
            s.post_u(a, u)
                .all(|a2| q.post_u(b, U_Q).any(|b2| w.contains(&(a2, b2))))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn controller_is_the_maximal_winning_strategy(g in game()) {
        let (s, q, mu) = build(&g);
        let w = oracle(&s, &q, mu);
        let winning_init: BTreeSet<u32> = s
            .initial_states()
            .filter(|&a| q.initial_states().any(|b| w.contains(&(a, b))))
            .collect();
        match synthesize_system(&s, &q, mu, SynthesisOptions::default()) {
            Err(SynthError::EmptyController { .. }) => prop_assert!(winning_init.is_empty()),
            Err(e) => prop_assert!(false, "unexpected {:?}", e),
            Ok(syn) => {
                verify_witnesses(&syn, &q, mu).unwrap();
                let losing: BTreeSet<u32> = syn.losing_initial.iter().copied().collect();
                let all: BTreeSet<u32> = s.initial_states().collect();
                prop_assert_eq!(
                    all.difference(&losing).copied().collect::<BTreeSet<_>>(),
                    winning_init
                );
                let class = spec_classes(&q);
                let c = &syn.controller;
                for i in 0..c.n_states() as u32 {
                    let key = c.key(i);
                    let a = key.state;
                    // Every class member close to the state wins with the
                    // same inputs, and the controller keeps all of them.
                    let members: Vec<u32> = (0..q.n_states() as u32)
                        .filter(|&b| class[b as usize] == key.spec && close(&s, &q, a, b, mu))
                        .collect();
                    prop_assert!(!members.is_empty());
                    for &b in &members {
                        prop_assert!(w.contains(&(a, b)));
                        prop_assert_eq!(c.enabled_inputs(i), good_inputs(&s, &q, &w, a, b));
                    }
                    for u in c.enabled_inputs(i) {
                        let reached: BTreeSet<u32> = c.post_u(i, u).map(|j| c.key(j).state).collect();
                        let all: BTreeSet<u32> = s.post_u(a, u).collect();
                        prop_assert_eq!(reached, all);
                    }
                }
            }
        }
    }
}

#[test]
fn classes_share_successors() {
    let q = Specification::new(
        vec!["a".into(), "b".into(), "c".into()],
        vec![vec![0.0], vec![1.0], vec![2.0]],
        [(0, 1), (1, 2), (2, 0), (2, 1)].into_iter().collect(),
        [0].into_iter().collect(),
    )
    .unwrap();
    let lifted = lift_spec(&q, 1, 3, 1000).unwrap();
    let class = spec_classes(&lifted);
    for (i, &g) in class.iter().enumerate() {
        assert!(g as usize <= i);
        assert_eq!(lifted.post(i as u32), lifted.post(g));
        assert_eq!(class[g as usize], g);
    }
    // Paths ending in the same element are in one class.
    let reps: BTreeSet<u32> = class.iter().copied().collect();
    assert_eq!(reps.len(), 3);
}
