//! Symbolic successors against closed-form images and brute-force search.

use std::collections::BTreeSet;
use std::sync::Arc;

use ncs_core::abstraction::{
    gas_min_epsilon, Abstraction, AbstractionConfig, AggregateState, LyapunovCertificate, Variant,
};
use ncs_core::network::DelayBounds;
use ncs_core::plant::models::LinearField;
use ncs_core::plant::{BoxUnion, PlantModel, Rect};
use proptest::prelude::*;

const TAU: f64 = 0.2;
const MU: f64 = 0.1;
const INPUTS: [[f64; 2]; 3] = [[0.0, 0.0], [0.5, -0.5], [-0.8, 0.3]];

fn plant() -> PlantModel {
    PlantModel::new(
        Arc::new(LinearField::new(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0]],
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        )),
        BoxUnion::single(Rect::symmetric(&[1.0, 1.0])),
        BoxUnion::single(Rect::symmetric(&[0.5, 0.5])),
        INPUTS.iter().map(|u| u.to_vec()).collect(),
        TAU,
        0,
    )
    .unwrap()
}

fn abstraction(variant: Variant, n_max: u32) -> Abstraction {
    let cert = LyapunovCertificate::inf_norm(-1.0);
    let epsilon = match variant {
        Variant::Fc => 2.0 * MU,
        Variant::Gas => gas_min_epsilon(&cert, TAU, MU, 2.0),
    };
    let cfg = AbstractionConfig {
        mu_x: vec![MU, MU],
        delay_bounds: DelayBounds::discrete(1, n_max),
        variant,
        epsilon,
        theta: MU,
    };
    Abstraction::new(plant(), cert, cfg).unwrap()
}

/// Exact sampled map of `x' = -x + u`.
fn image(x: &[f64], u: &[f64]) -> Vec<f64> {
    let e = (-TAU).exp();
    x.iter().zip(u).map(|(x, u)| e * x + (1.0 - e) * u).collect()
}

fn nearest(x: &[f64]) -> Vec<i64> {
    x.iter().map(|v| (v / MU + 0.5).floor() as i64).collect()
}

fn real(k: &[i64]) -> Vec<f64> {
    k.iter().map(|&k| k as f64 * MU).collect()
}

fn all_points() -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for i in -10..=10 {
        for j in -10..=10 {
            out.push(vec![i, j]);
        }
    }
    out
}

fn link_ok(bound: f64, prev: &[i64], held: usize, k: &[i64]) -> bool {
    let q = real(&nearest(&image(&real(prev), &INPUTS[held])));
    let d = q
        .iter()
        .zip(real(k))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    d <= bound + 1e-12
}

fn state(k: Vec<i64>, held: u32) -> AggregateState {
    AggregateState {
        initial_form: false,
        held,
        burst: vec![k],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn fc_successors_match_brute_force(i in -10i64..=10, j in -10i64..=10, held in 0u32..3, u in 0u32..3) {
        let abs = abstraction(Variant::Fc, 2);
        let bound = ((-TAU).exp() + 2.0) * MU;
        prop_assert!((abs.link_bound() - bound).abs() < 1e-12);
        let x = state(vec![i, j], held);
        let got: BTreeSet<Vec<Vec<i64>>> = abs
            .fc_successors(&x, u)
            .unwrap()
            .into_iter()
            .map(|y| {
                assert!(y.held == u && !y.initial_form);
                y.burst
            })
            .collect();
        let pts = all_points();
        let mut want = BTreeSet::new();
        for k1 in pts.iter().filter(|k| link_ok(bound, &x.burst[0], held as usize, k)) {
            want.insert(vec![k1.clone()]);
            for k2 in pts.iter().filter(|k| link_ok(bound, k1, held as usize, k)) {
                want.insert(vec![k1.clone(), k2.clone()]);
            }
        }
        prop_assert_eq!(&got, &want);
        for b in &got {
            let y = AggregateState { initial_form: false, held: u, burst: b.clone() };
            prop_assert!(abs.fc_has_transition(&x, u, &y).unwrap());
        }
    }
}

proptest! {
    #[test]
    fn quantized_concrete_runs_are_fc_paths(
        x0 in prop::collection::vec(-0.5f64..0.5, 2),
        steps in prop::collection::vec((0u32..3, 1u32..=3), 1..6),
    ) {
        let abs = abstraction(Variant::Fc, 3);
        let mut c = abs.concrete_initial(&x0);
        let mut s = abs.initial_state_of(&x0).unwrap();
        prop_assert_eq!(s.burst.clone(), vec![abs.lattice().quantize(&x0).unwrap()]);
        for (u, n) in steps {
            let c2 = abs.concrete_successor(&c, u, n).unwrap();
            let s2 = AggregateState {
                initial_form: false,
                held: u,
                burst: abs.quantize_burst(&c2.burst).unwrap(),
            };
            prop_assert!(abs.fc_has_transition(&s, u, &s2).unwrap());
            c = c2;
            s = s2;
        }
    }

    #[test]
    fn concrete_successor_holds_the_previous_input(
        x0 in prop::collection::vec(-0.5f64..0.5, 2),
        u in 0u32..3,
        v in 0u32..3,
        n in 1u32..=3,
    ) {
        let abs = abstraction(Variant::Fc, 3);
        let c = abs.concrete_initial(&x0);
        let c1 = abs.concrete_successor(&c, u, 1).unwrap();
        prop_assert_eq!(c1.held, u);
        // The first burst is driven by the reference input.
        let want = image(&x0, &INPUTS[0]);
        for i in 0..2 {
            prop_assert!((c1.burst[0][i] - want[i]).abs() < 1e-8);
        }
        let c2 = abs.concrete_successor(&c1, v, n).unwrap();
        let mut cur = c1.burst[0].clone();
        for k in 0..n as usize {
            cur = image(&cur, &INPUTS[u as usize]);
            for i in 0..2 {
                prop_assert!((c2.burst[k][i] - cur[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn gas_successors_are_one_quantized_chain(
        i in -10i64..=10,
        j in -10i64..=10,
        held in 0u32..3,
        u in 0u32..3,
    ) {
        let abs = abstraction(Variant::Gas, 3);
        let x = state(vec![i, j], held);
        let succ = abs.gas_successors(&x, u).unwrap();
        prop_assert_eq!(succ.len(), 3);
        let mut chain = Vec::new();
        let mut cur = vec![i, j];
        for (n, y) in succ.iter().enumerate() {
            cur = nearest(&image(&real(&cur), &INPUTS[held as usize]));
            chain.push(cur.clone());
            prop_assert_eq!(y.len(), n + 1);
            prop_assert_eq!(&y.burst, &chain);
            prop_assert_eq!(y.held, u);
        }
        prop_assert_eq!(abs.gas_successors(&x, u).unwrap(), succ);
    }
}

#[test]
fn links_survive_images_leaving_the_state_set() {
    // x' = u drifting right: the lattice point 1.0 maps outside [-1, 1] while
    // a concrete state quantized to it still lands inside.
    let p = PlantModel::new(
        Arc::new(LinearField::new(vec![vec![0.0]], vec![vec![1.0]])),
        BoxUnion::single(Rect::symmetric(&[1.0])),
        BoxUnion::single(Rect::symmetric(&[1.0])),
        vec![vec![1.0], vec![0.0]],
        0.02,
        1,
    )
    .unwrap();
    let cfg = AbstractionConfig {
        mu_x: vec![MU],
        delay_bounds: DelayBounds::discrete(1, 1),
        variant: Variant::Fc,
        epsilon: 2.0 * MU,
        theta: MU,
    };
    let abs = Abstraction::new(p, LyapunovCertificate::inf_norm(0.0), cfg).unwrap();
    let c = abs.concrete_initial(&[0.96]);
    let c1 = abs.concrete_successor(&c, 0, 1).unwrap();
    let c2 = abs.concrete_successor(&c1, 0, 1).unwrap();
    assert!(c2.burst[0][0] <= 1.0);
    let s1 = AggregateState {
        initial_form: false,
        held: 0,
        burst: abs.quantize_burst(&c1.burst).unwrap(),
    };
    assert_eq!(s1.burst, vec![vec![10]]);
    let s2 = AggregateState {
        initial_form: false,
        held: 0,
        burst: abs.quantize_burst(&c2.burst).unwrap(),
    };
    assert!(abs.fc_has_transition(&s1, 0, &s2).unwrap());
    let succ = abs.fc_successors(&s1, 0).unwrap();
    assert!(succ.contains(&s2));
    assert!(succ.iter().all(|y| abs.lattice().contains_point(&y.burst[0])));
}
