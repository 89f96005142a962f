mod common;

use common::rng;
use common::trees::{check_lattice_laws, lattice_config, oracle_refines, TreeGen};
use proptest::prelude::*;
use xmlprompt::tree::{
    join, meet, parse_document, refines, serialize, ContentSpec, DeweyPath, XmlTree,
};

fn doc(s: &str) -> XmlTree {
    parse_document(s).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn laws_hold_for_holes_and_literals(seed in any::<u64>()) {
        let triple = TreeGen::plain().correlated(&mut rng(seed));
        prop_assert_eq!(check_lattice_laws(&lattice_config(false), &triple), Ok(()));
    }

    #[test]
    fn laws_hold_with_union_patterns(seed in any::<u64>()) {
        let triple = TreeGen::with_patterns().correlated(&mut rng(seed));
        prop_assert_eq!(check_lattice_laws(&lattice_config(true), &triple), Ok(()));
    }

    #[test]
    fn generalize_and_specialize_move_in_the_order(seed in any::<u64>()) {
        let gen = TreeGen::with_patterns();
        let mut r = rng(seed);
        let t = gen.tree(&mut r);
        let lo = gen.generalize(&mut r, &t);
        let hi = gen.specialize(&mut r, &t);
        prop_assert!(refines(&lo, &t) && oracle_refines(&lo, &t));
        prop_assert!(refines(&t, &hi) && oracle_refines(&t, &hi));
    }

    #[test]
    fn concrete_trees_round_trip_through_text(seed in any::<u64>()) {
        let gen = TreeGen { patterns: Vec::new(), ..TreeGen::plain() };
        let mut r = rng(seed);
        let mut t = gen.tree(&mut r);
        let paths: Vec<DeweyPath> = t.paths().cloned().collect();
        for p in paths {
            let l = t.label_mut(&p).unwrap();
            if l.content.is_hole() {
                l.content = ContentSpec::literal("x");
            }
            for v in l.attrs.values_mut() {
                if v.is_hole() {
                    *v = ContentSpec::literal("y");
                }
            }
        }
        prop_assume!(!t.is_empty());
        let text = serialize(&t).unwrap();
        prop_assert_eq!(parse_document(&text).unwrap(), t);
    }
}

#[test]
fn filled_step_refines_the_hole() {
    let t1 = doc(r#"<plan><step index="1"><hole/></step></plan>"#);
    let t2 = doc(r#"<plan><step index="1">Draft answer A.</step></plan>"#);
    assert!(refines(&t1, &t2) && oracle_refines(&t1, &t2));
    assert!(!refines(&t2, &t1) && !oracle_refines(&t2, &t1));
}

#[test]
fn meet_of_differing_steps_is_a_hole() {
    let a = doc(r#"<turn role="user"><plan><step index="1">a</step></plan></turn>"#);
    let b = doc(r#"<turn role="user"><plan><step index="1">b</step></plan></turn>"#);
    let m = meet(&[a, b]);
    let step = m.get(&"1.1".parse().unwrap()).unwrap();
    assert_eq!(step.content, ContentSpec::Hole);
    assert_eq!(step.attr_text("index"), Some("1"));
}

#[test]
fn join_takes_the_larger_tree() {
    let small = doc("<turn><plan/></turn>");
    let large = doc("<turn><plan/><answer/></turn>");
    assert_eq!(join(&[small, large.clone()]), large);
}

#[test]
fn empty_meet_and_join() {
    assert!(meet(&[]).is_top());
    assert!(join(&[]).is_bottom());
}
