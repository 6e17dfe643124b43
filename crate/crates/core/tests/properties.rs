mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use common::sc_interleavings;
use litmus_diff::diff::{apply_mapping, infer_state_mapping, Classification, MappingHints, StateMapping};
use litmus_diff::exec::{simulate, Outcome, SimOptions};
use litmus_diff::litmus::{parse_litmus, LitmusTest, MemOrder, Observable, Value, Width};
use litmus_diff::model::{check_model, lookup_model};
use litmus_diff::pipeline::{run_pipeline, CompilerProfile, PipelineOptions};
use litmus_diff::relation::Relation;
use litmus_diff::transform::{generate_pattern_test, persist_locals, Glue, PatternSpec, PeepholeRule, PersistencePlan, Shape};

fn order() -> impl Strategy<Value = MemOrder> {
    prop::sample::select(vec![MemOrder::Rlx, MemOrder::Acq, MemOrder::Rel, MemOrder::Sc])
}

fn width() -> impl Strategy<Value = Width> {
    prop::sample::select(vec![Width::W8, Width::W16, Width::W32, Width::W64])
}

fn glue() -> impl Strategy<Value = Glue> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(fence, data, ctrl)| Glue { fence, data, ctrl })
}

/// A generated source test; specs the generator rejects are skipped.
fn source_test() -> impl Strategy<Value = LitmusTest> {
    prop::sample::select(Shape::ALL.to_vec())
        .prop_flat_map(|shape| {
            (
                Just(shape),
                prop::collection::vec(order(), shape.accesses()),
                prop::collection::vec(width(), 2),
                prop::collection::vec(glue(), shape.threads()),
                prop::sample::select(vec![MemOrder::Acq, MemOrder::Rel, MemOrder::AcqRel, MemOrder::Sc]),
            )
        })
        .prop_filter_map("order not valid for its access", |(shape, orders, widths, glue, fence)| {
            generate_pattern_test(&PatternSpec { shape, orders, widths, glue, fence }).ok()
        })
}

fn outcomes(t: &LitmusTest, model: &str) -> BTreeSet<Outcome> {
    simulate(t, &lookup_model(model).unwrap(), &SimOptions::default()).unwrap().outcomes.outcome_set()
}

/// Compose with the base relation until nothing changes.
fn naive_closure(n: usize, pairs: &[(usize, usize)]) -> BTreeSet<(usize, usize)> {
    let mut c: BTreeSet<(usize, usize)> = pairs.iter().copied().collect();
    loop {
        let mut next = c.clone();
        for &(a, b) in &c {
            for &(x, y) in pairs {
                if b == x {
                    next.insert((a, y));
                }
            }
        }
        if next == c {
            return next.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        }
        c = next;
    }
}

fn outcome() -> impl Strategy<Value = Outcome> {
    prop::collection::btree_map(
        prop::sample::select(vec![Observable::reg(0, "r0"), Observable::reg(1, "r0"), Observable::loc("x")]),
        (0i64..3).prop_map(Value::Int),
        0..3,
    )
    .prop_map(Outcome)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn render_then_parse_is_identity(t in source_test()) {
        let back = parse_litmus(&t.render()).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn generation_is_deterministic(t in source_test()) {
        let again = parse_litmus(&t.render()).unwrap().render();
        prop_assert_eq!(again, t.render());
    }

    #[test]
    fn transitive_closure_matches_naive_fixpoint(
        n in 1usize..9,
        pairs in prop::collection::vec((0usize..9, 0usize..9), 0..20),
    ) {
        let pairs: Vec<(usize, usize)> = pairs.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let closed: BTreeSet<(usize, usize)> =
            Relation::from_pairs(n, pairs.iter().copied()).transitive_closure().pairs().collect();
        prop_assert_eq!(closed, naive_closure(n, &pairs));
    }

    #[test]
    fn mapping_inverse_round_trips(t in source_test()) {
        let m = infer_state_mapping(&t, &t, &MappingHints::new()).unwrap();
        prop_assert_eq!(&m, &StateMapping::identity(t.observables()));
        prop_assert_eq!(m.inverse().inverse(), m.clone());
        for o in outcomes(&t, "sc") {
            let mapped = apply_mapping(&m, &o).unwrap();
            prop_assert!(mapped.dropped.is_empty());
            prop_assert_eq!(mapped.outcome, o);
        }
    }

    #[test]
    fn classification_follows_the_set_differences(
        src in prop::collection::btree_set(outcome(), 0..5),
        tgt in prop::collection::btree_set(outcome(), 0..5),
    ) {
        let novel: BTreeSet<Outcome> = tgt.difference(&src).cloned().collect();
        let missing: BTreeSet<Outcome> = src.difference(&tgt).cloned().collect();
        let c = Classification::from_sets(&novel, &missing);
        prop_assert_eq!(c == Classification::Positive, !tgt.is_subset(&src));
        prop_assert_eq!(c == Classification::Negative, tgt.is_subset(&src) && tgt != src);
        prop_assert_eq!(c == Classification::Equal, tgt == src);
        prop_assert_ne!(c, Classification::Mixed);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sc_matches_interleavings(t in source_test()) {
        prop_assert_eq!(outcomes(&t, "sc"), sc_interleavings(&t));
    }

    #[test]
    fn models_nest(t in source_test()) {
        let (sc, tso, lite, lb) = (outcomes(&t, "sc"), outcomes(&t, "tso"), outcomes(&t, "rc11_lite"), outcomes(&t, "rc11_lb"));
        prop_assert!(sc.is_subset(&tso));
        prop_assert!(sc.is_subset(&lite));
        prop_assert!(lite.is_subset(&lb));
    }

    #[test]
    fn witnesses_pass_their_model(t in source_test(), m in prop::sample::select(vec!["sc", "tso", "rc11_lite", "rc11_lb"])) {
        let model = lookup_model(m).unwrap();
        let r = simulate(&t, &model, &SimOptions::default()).unwrap();
        for (_, w) in r.outcomes.iter() {
            prop_assert!(check_model(&model, w).unwrap().allowed);
            for e in w.events.iter().filter(|e| e.kind.is_read()) {
                prop_assert_eq!(w.rf.pairs().filter(|&(_, b)| b == e.id).count(), 1);
            }
        }
    }

    #[test]
    fn persistence_keeps_outcomes(t in source_test()) {
        let p = persist_locals(&t, &PersistencePlan::auto(&t)).unwrap();
        let keep = t.observables();
        for m in ["rc11_lite", "rc11_lb"] {
            let restricted: BTreeSet<Outcome> = outcomes(&p, m)
                .into_iter()
                .map(|o| Outcome(o.0.into_iter().filter(|(k, _)| keep.contains(k)).collect()))
                .collect();
            prop_assert_eq!(restricted, outcomes(&t, m));
        }
    }

    #[test]
    fn peephole_rules_keep_target_outcomes(t in source_test()) {
        let profile = CompilerProfile::reference("ref", "rc11_lite");
        let target = |rules: Vec<PeepholeRule>| {
            let opts = PipelineOptions { opt_rules: rules, ..Default::default() };
            run_pipeline(&t, &profile, &opts).target_result.map(|r| r.outcomes.outcome_set())
        };
        let optimised = target(PeepholeRule::ALL.to_vec()).expect("optimised target simulates");
        if let Some(plain) = target(Vec::new()) {
            prop_assert_eq!(optimised, plain);
        }
    }
}
