mod common;

use std::collections::BTreeSet;

use common::mu::{oracle_paths, random_formula, small_tree};
use common::partial::{
    check_pruning, completions, invariants, random_partial, some_completion, PruneStats,
};
use common::rng;
use proptest::prelude::*;
use xmlprompt::invariant::{check, evaluate, parse_formula, pruning_filter, Formula, Verdict};
use xmlprompt::tree::partial::parse_prefix;
use xmlprompt::tree::{parse_document, DeweyPath};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn evaluation_matches_subset_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let t = small_tree(&mut r, 8);
        let f = random_formula(&mut r, 3);
        prop_assert_eq!(evaluate(&f, &t), oracle_paths(&f, &t), "{}", f);
    }

    #[test]
    fn printed_formulas_parse_back(seed in any::<u64>()) {
        let f = random_formula(&mut rng(seed), 3);
        prop_assert_eq!(parse_formula(&f.to_string()).unwrap(), f);
    }

    #[test]
    fn prune_is_confirmed_by_a_random_completion(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (_, partial) = random_partial(&mut r);
        for inv in invariants() {
            let v = pruning_filter(&inv).unwrap().verdict(&partial);
            let c = some_completion(&mut r, &partial);
            match v {
                Verdict::Prune => prop_assert!(!check(&inv, &c).holds, "{}", inv.name),
                Verdict::Keep => prop_assert!(check(&inv, &c).holds, "{}", inv.name),
                Verdict::Unknown => {}
            }
        }
    }
}

#[test]
fn reachability_fixpoint_is_ancestors_or_self_of_evidence() {
    let t = parse_document(
        r#"<a><b><evidence ref="r" conf="0.90"/></b><c><d/></c><evidence ref="s" conf="0.10"/></a>"#,
    )
    .unwrap();
    let f = parse_formula("mu X. tag=evidence | some_child(X)").unwrap();
    let evidence: Vec<&DeweyPath> = t
        .paths()
        .filter(|p| t.get(p).unwrap().tag == "evidence")
        .collect();
    let expected: BTreeSet<DeweyPath> = t
        .paths()
        .filter(|p| evidence.iter().any(|e| p.is_prefix_of(e)))
        .cloned()
        .collect();
    assert_eq!(evaluate(&f, &t), expected);
    assert_eq!(oracle_paths(&f, &t), expected);
}

#[test]
fn closed_answer_with_one_evidence_is_pruned() {
    let inv = &invariants()[0];
    let prefix = r#"<task><answer>t<evidence conf="0.90"/></answer>"#;
    let partial = parse_prefix(prefix).unwrap();
    assert_eq!(
        pruning_filter(inv).unwrap().verdict(&partial),
        Verdict::Prune
    );
    for c in completions(&partial, 2) {
        assert!(!check(inv, &c).holds);
    }
}

#[test]
fn open_answer_is_not_pruned_yet() {
    let inv = &invariants()[0];
    let partial = parse_prefix(r#"<task><answer>t<evidence conf="0.90"/>"#).unwrap();
    assert_eq!(
        pruning_filter(inv).unwrap().verdict(&partial),
        Verdict::Unknown
    );
}

#[test]
fn least_fixpoints_are_not_safety_shaped() {
    let f = Formula::Mu(
        "X".into(),
        Box::new(Formula::tag("a").or(Formula::SomeChild(Box::new(Formula::Var("X".into()))))),
    );
    let inv = xmlprompt::invariant::Invariant::new("reach", f);
    assert!(pruning_filter(&inv).is_err());
}

#[test]
fn bounded_enumeration_confirms_prune_verdicts() {
    let mut stats = PruneStats::default();
    check_pruning(11, 60, &mut stats);
    assert!(stats.failures.is_empty(), "{:?}", stats.failures);
    assert!(stats.pruned > 0);
}
