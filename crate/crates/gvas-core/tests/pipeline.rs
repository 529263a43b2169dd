use gvas_core::derivation::{annotate, Derivation, IdGen};
use gvas_core::fixtures;
use gvas_core::grammar::{binarize, is_thin, parse_gvas, reverse};
use gvas_core::reach::{brute_window, reach_answer, thinify, Budget, Verdict};
use proptest::prelude::*;

#[test]
fn printed_grammars_parse_back() {
    for g in fixtures::all().into_iter().chain(fixtures::default_corpus()) {
        let text = g.to_string();
        assert_eq!(parse_gvas(&text).unwrap().to_string(), text);
    }
}

#[test]
fn reach_agrees_with_enumeration_on_fixtures() {
    let deep = Budget { max_nodes: 60, ..Budget::default() };
    for (name, g) in fixtures::named() {
        let brute = brute_window(&g, 6, deep);
        for a in 0..=6 {
            for b in 0..=6 {
                let ans = reach_answer(&g, a, b, Budget::default());
                match &ans.verdict {
                    Verdict::Yes { witness, output } => {
                        assert!(brute.contains(&(a, b)), "{name} ({a}, {b})");
                        let d = Derivation::from_tree(witness, &mut IdGen::new());
                        assert!(d.produced_by(&ans.grammar));
                        assert_eq!(annotate(&d, a).unwrap().root_output(), *output);
                    }
                    Verdict::No(_) => assert!(!brute.contains(&(a, b)), "{name} ({a}, {b})"),
                    Verdict::Unknown(d) => panic!("{name} ({a}, {b}): {d}"),
                }
            }
        }
    }
}

#[test]
fn thinify_is_idempotent_on_its_output() {
    for g in fixtures::all() {
        let h = thinify(&g, Budget::default()).unwrap();
        assert!(is_thin(&h));
        assert_eq!(thinify(&h, Budget::default()).unwrap(), binarize(&h).trim());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reversal_transposes_the_relation(seed in any::<u64>()) {
        let g = &fixtures::corpus(seed, 1)[0];
        let caps = Budget { max_nodes: 16, ..Budget::default() };
        let fwd = brute_window(g, 6, caps);
        let back: std::collections::BTreeSet<(i64, i64)> =
            brute_window(&reverse(g), 6, caps).into_iter().map(|(x, y)| (y, x)).collect();
        prop_assert_eq!(fwd, back);
    }
}
