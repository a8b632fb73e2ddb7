mod common;

use std::collections::HashSet;

use omp_advisor::cfront::TokenKind;
use omp_advisor::corpus::records_from_source;
use omp_advisor::repr::{canonicalize, represent};
use omp_advisor::ReprKind;
use proptest::prelude::*;

fn snippet() -> impl Strategy<Value = String> {
    common::program().prop_map(|src| {
        let (records, _) = records_from_source("gen.c", &src).unwrap();
        records.into_iter().next().expect("at least one loop").code_text
    })
}

fn is_marker(t: &str) -> bool {
    t.len() > 1 && t.ends_with(':') && t.starts_with(|c: char| c.is_ascii_uppercase())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn representations_are_deterministic(code in snippet()) {
        for kind in ReprKind::ALL {
            prop_assert_eq!(represent(&code, kind).unwrap(), represent(&code, kind).unwrap());
        }
    }

    #[test]
    fn renaming_preserves_length_and_structure(code in snippet()) {
        let text = represent(&code, ReprKind::Text).unwrap();
        let r_text = represent(&code, ReprKind::RText).unwrap();
        prop_assert_eq!(text.len(), r_text.len());
        let (_, tokens, _) = canonicalize(&code).unwrap();
        for ((a, b), tok) in text.tokens.iter().zip(&r_text.tokens).zip(&tokens) {
            if tok.kind != TokenKind::Identifier {
                prop_assert_eq!(a, b);
            }
        }

        let ast = represent(&code, ReprKind::Ast).unwrap();
        let r_ast = represent(&code, ReprKind::RAst).unwrap();
        prop_assert_eq!(ast.len(), r_ast.len());
        for (a, b) in ast.tokens.iter().zip(&r_ast.tokens) {
            prop_assert_eq!(is_marker(a), is_marker(b));
            if is_marker(a) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn one_marker_per_node(code in snippet()) {
        let (_, _, root) = canonicalize(&code).unwrap();
        let ast = represent(&code, ReprKind::Ast).unwrap();
        let markers = ast.tokens.iter().filter(|t| is_marker(t)).count();
        // The unit root itself is not part of the snippet's linearization.
        let nodes: usize = root.children.iter().map(|c| c.node_count()).sum();
        prop_assert_eq!(markers, nodes);
    }

    #[test]
    fn rename_map_is_injective(code in snippet()) {
        let (map, _, _) = canonicalize(&code).unwrap();
        let originals: HashSet<_> = map.entries().iter().map(|(o, _)| o).collect();
        let canon: HashSet<_> = map.entries().iter().map(|(_, c)| c).collect();
        prop_assert_eq!(originals.len(), map.len());
        prop_assert_eq!(canon.len(), map.len());
    }

    #[test]
    fn canonical_form_is_a_fixed_point(code in snippet()) {
        let once = represent(&code, ReprKind::RText).unwrap();
        let twice = represent(&once.joined(), ReprKind::RText).unwrap();
        prop_assert_eq!(once.tokens, twice.tokens);
    }
}
