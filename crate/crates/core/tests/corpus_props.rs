mod common;

use std::collections::BTreeSet;

use omp_advisor::corpus::directive::{parse_directive, ReductionOp, ScheduleKind};
use omp_advisor::corpus::{
    corpus_stats, deduplicate, read_corpus_from, record_id, records_from_source, write_corpus_to, CorpusHeader,
    SourceRecord,
};
use proptest::prelude::*;

const KINDS: [(&str, ScheduleKind); 5] = [
    ("static", ScheduleKind::Static),
    ("dynamic", ScheduleKind::Dynamic),
    ("guided", ScheduleKind::Guided),
    ("runtime", ScheduleKind::Runtime),
    ("auto", ScheduleKind::Auto),
];

fn names() -> impl Strategy<Value = BTreeSet<String>> {
    prop::collection::btree_set("[a-z_][a-z0-9_]{0,5}", 1..4)
}

fn sep() -> impl Strategy<Value = &'static str> {
    prop::sample::select(&["", " ", "  "][..])
}

fn program_records() -> impl Strategy<Value = Vec<SourceRecord>> {
    prop::collection::vec(common::program(), 1..4).prop_map(|files| {
        files.iter().enumerate().flat_map(|(i, src)| records_from_source(&format!("f{i}.c"), src).unwrap().0).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn directive_round_trip(
        private in prop::option::of(names()),
        reduction in prop::option::of((prop::sample::select(&ReductionOp::ALL[..]), names())),
        schedule in prop::option::of((0..KINDS.len(), prop::option::of(1u64..64))),
        s in sep(),
    ) {
        let mut line = String::from("#pragma omp parallel for");
        if let Some(vars) = &private {
            let list: Vec<_> = vars.iter().cloned().collect();
            line.push_str(&format!(" private({s}{}{s})", list.join(&format!(",{s}"))));
        }
        if let Some((op, vars)) = &reduction {
            let list: Vec<_> = vars.iter().cloned().collect();
            line.push_str(&format!(" reduction({}{s}:{s}{})", op.symbol(), list.join(",")));
        }
        if let Some((k, chunk)) = schedule {
            match chunk {
                Some(c) => line.push_str(&format!(" schedule({},{s}{c})", KINDS[k].0)),
                None => line.push_str(&format!(" schedule({})", KINDS[k].0)),
            }
        }

        let d = parse_directive(&line).unwrap();
        prop_assert!(d.is_parallel_for);
        prop_assert_eq!(&d.private_vars, &private.clone().unwrap_or_default());
        prop_assert_eq!(d.has_private(), private.is_some());
        prop_assert_eq!(d.has_reduction(), reduction.is_some());
        if let Some((op, vars)) = &reduction {
            prop_assert_eq!(d.reduction_clauses.len(), 1);
            prop_assert_eq!(d.reduction_clauses[0].operator, *op);
            prop_assert_eq!(&d.reduction_clauses[0].vars, vars);
        }
        prop_assert_eq!(d.schedule.map(|s| (s.kind, s.chunk)), schedule.map(|(k, c)| (KINDS[k].1, c)));
        prop_assert!(d.other_clauses.is_empty());
    }

    #[test]
    fn records_are_well_formed(src in common::program()) {
        let (records, errors) = records_from_source("gen.c", &src).unwrap();
        prop_assert!(errors.is_empty());
        prop_assert!(!records.is_empty());
        for r in &records {
            prop_assert!(!r.code_text.trim().is_empty());
            prop_assert!(!r.ast_text.is_empty());
            prop_assert!(r.loop_line_count >= 1);
            prop_assert_eq!(&r.id, &record_id(&r.code_text));
            prop_assert_eq!(r.pragma_raw.is_some(), r.directive.is_some());
            if let Some(d) = &r.directive {
                prop_assert!(d.is_parallel_for);
            }
        }
    }

    #[test]
    fn dedup_is_idempotent_and_order_free(mut records in program_records(), seed in any::<u64>()) {
        let once = deduplicate(records.clone());
        prop_assert_eq!(&deduplicate(once.clone()), &once);
        let ids: BTreeSet<_> = once.iter().map(|r| r.id.clone()).collect();
        prop_assert_eq!(ids.len(), once.len());

        // Shuffle deterministically and check the result does not change.
        let n = records.len();
        for i in (1..n).rev() {
            let j = (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize;
            records.swap(i, j);
        }
        prop_assert_eq!(&deduplicate(records), &once);
    }

    #[test]
    fn stats_are_consistent(records in program_records()) {
        let s = corpus_stats(&records);
        prop_assert_eq!(s.total_snippets as usize, records.len());
        prop_assert_eq!(s.length_histogram.iter().sum::<u64>(), s.total_snippets);
        prop_assert!(s.with_directive <= s.total_snippets);
        prop_assert!(s.schedule_static + s.schedule_dynamic <= s.with_directive);
        prop_assert!(s.private_count <= s.with_directive);
        prop_assert!(s.reduction_count <= s.with_directive);
    }

    #[test]
    fn corpus_file_round_trip(records in program_records()) {
        let header = CorpusHeader::new(vec!["gen".into()]);
        let mut buf = Vec::new();
        write_corpus_to(&mut buf, &header, &records).unwrap();
        let (h2, r2) = read_corpus_from(buf.as_slice()).unwrap();
        prop_assert_eq!(h2, header);
        prop_assert_eq!(r2, records);
    }
}
