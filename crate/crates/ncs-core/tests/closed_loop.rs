//! End to end on a scalar contraction: abstraction, synthesis, refinement and
//! the loop, with the trace checked against the concrete burst semantics.

use std::sync::{Arc, OnceLock};

use ncs_core::abstraction::{
    Abstraction, AbstractionConfig, AggregateState, LyapunovCertificate, Variant,
};
use ncs_core::network::{DelayBounds, DelayPolicy, DelaySampler};
use ncs_core::plant::models::LinearField;
use ncs_core::plant::{BoxUnion, PlantModel, Rect};
use ncs_core::refine::{refine, MealyController, SelectionPolicy};
use ncs_core::sim::{run_loop, verify_trace};
use ncs_core::synthesis::{
    lift_spec, synthesize_abstraction, verify_witnesses, Specification, Synthesis,
    SynthesisOptions,
};
use proptest::prelude::*;

const MU: f64 = 0.05;
const EPS: f64 = 0.1;

fn setup() -> (Abstraction, Specification) {
    let plant = PlantModel::new(
        Arc::new(LinearField::new(vec![vec![-4.0]], vec![vec![4.0]])),
        BoxUnion::single(Rect::symmetric(&[1.0])),
        BoxUnion::single(Rect::symmetric(&[0.3])),
        vec![vec![-0.5], vec![0.0], vec![0.5]],
        0.1,
        1,
    )
    .unwrap();
    let cfg = AbstractionConfig {
        mu_x: vec![MU],
        delay_bounds: DelayBounds::discrete(1, 2),
        variant: Variant::Fc,
        epsilon: EPS,
        theta: MU,
    };
    let abs = Abstraction::new(plant, LyapunovCertificate::inf_norm(-4.0), cfg).unwrap();
    // Safety: stay within 0.6 of the origin.
    let pts: Vec<i64> = (-12..=12).collect();
    let n = pts.len() as u32;
    let spec = Specification::new(
        pts.iter().map(|k| format!("p{}", k)).collect(),
        pts.iter().map(|&k| vec![k as f64 * MU]).collect(),
        (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect(),
        (0..n).collect(),
    )
    .unwrap();
    (abs, spec)
}

type Solved = (Abstraction, Specification, Synthesis<AggregateState>);

/// Synthesized once and shared; refinement is cheap.
fn solved() -> &'static Solved {
    static CELL: OnceLock<Solved> = OnceLock::new();
    CELL.get_or_init(|| {
        let (abs, spec) = setup();
        let b = &abs.config().delay_bounds;
        let lifted = lift_spec(&spec, b.n_min, b.n_max, 100_000).unwrap();
        let syn = synthesize_abstraction(&abs, &lifted, SynthesisOptions::default()).unwrap();
        assert!(syn.losing_initial.is_empty());
        verify_witnesses(&syn, &lifted, MU).unwrap();
        (abs, spec, syn)
    })
}

fn controller(policy: SelectionPolicy) -> MealyController {
    let (abs, _, syn) = solved();
    let b = &abs.config().delay_bounds;
    let c = refine(
        &syn.controller,
        vec![MU],
        abs.plant().inputs().to_vec(),
        (b.n_min, b.n_max),
        &policy,
    )
    .unwrap();
    c.check_against(&syn.controller).unwrap();
    c
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn trace_bursts_follow_the_concrete_semantics(
        x0 in -0.3f64..0.3,
        seed in any::<u64>(),
        pick in any::<u64>(),
    ) {
        let (abs, spec, _) = solved();
        let ctrl = controller(SelectionPolicy::Random(pick));
        let bounds = DelayBounds::discrete(1, 2);
        let mut sampler = DelaySampler::new(DelayPolicy::Uniform { seed });
        let t = run_loop(abs.plant(), &ctrl, &[x0], &bounds, &mut sampler, 40).unwrap();
        t.check_invariants(abs.lattice(), abs.plant().u_ref() as u32).unwrap();
        prop_assert!(verify_trace(&t.y_tilde, spec, EPS).ok);

        let mut c = abs.concrete_initial(&[x0]);
        let bursts = t.bursts();
        for (k, b) in bursts.iter().enumerate() {
            let next = abs.concrete_successor(&c, t.v[k + 1], t.n_seq[k]).unwrap();
            prop_assert_eq!(&next.burst, b);
            prop_assert_eq!(next.held, t.v[k + 1]);
            // The quantized burst is a successor the controller knows about.
            let q = abs.quantize_burst(&next.burst).unwrap();
            let xi = t.xi_seq[k];
            let known = ctrl.successors[xi as usize].iter().any(|&s| {
                let st = &ctrl.states[s as usize];
                st.burst == q && st.held == next.held && !st.initial_form
            });
            prop_assert!(known);
            if k + 1 < t.xi_seq.len() {
                let chosen = &ctrl.states[t.xi_seq[k + 1] as usize];
                prop_assert_eq!(chosen.last(), q.last().unwrap());
                prop_assert_eq!(chosen.burst.len(), q.len());
            }
            c = next;
        }
    }
}

#[test]
fn worst_and_best_case_delays_stay_safe() {
    let (abs, spec, _) = solved();
    let ctrl = controller(SelectionPolicy::FirstCanonical);
    let bounds = DelayBounds::discrete(1, 2);
    for policy in [DelayPolicy::WorstCase, DelayPolicy::BestCase] {
        for x0 in [-0.3, -0.1, 0.0, 0.2, 0.3] {
            let mut sampler = DelaySampler::new(policy.clone());
            let t = run_loop(abs.plant(), &ctrl, &[x0], &bounds, &mut sampler, 30).unwrap();
            assert!(verify_trace(&t.y_tilde, spec, EPS).ok);
        }
    }
}

#[test]
fn controller_text_round_trips() {
    let ctrl = controller(SelectionPolicy::Random(3));
    let text = ctrl.to_text();
    assert_eq!(MealyController::from_text(&text).unwrap(), ctrl);
    assert_eq!(controller(SelectionPolicy::Random(3)).to_text(), text);
}
