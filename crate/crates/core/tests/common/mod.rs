//! Random C snippets for property tests.

#![allow(dead_code)]

use proptest::prelude::*;

const SCALARS: &[&str] = &["i", "j", "n", "m", "sum", "t", "scale"];
const ARRAYS: &[&str] = &["a", "b", "c", "out"];
const CALLS: &[&str] = &["f", "g", "sqrt"];
pub const PRAGMAS: &[&str] = &[
    "#pragma omp parallel for",
    "#pragma omp parallel for private(j)",
    "#pragma omp parallel for reduction(+:sum)",
    "#pragma omp parallel for schedule(dynamic,4)",
    "#pragma omp parallel for private(j, t) reduction(max:m) schedule(static, 8)",
    "#pragma omp for",
];

fn scalar() -> impl Strategy<Value = String> {
    prop::sample::select(SCALARS).prop_map(str::to_string)
}

fn array() -> impl Strategy<Value = String> {
    prop::sample::select(ARRAYS).prop_map(str::to_string)
}

pub fn expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        scalar(),
        (0u32..100).prop_map(|v| v.to_string()),
        (array(), scalar()).prop_map(|(a, i)| format!("{a}[{i}]")),
        Just("1.5".to_string()),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(&["+", "-", "*", "/", "<", "&&"][..]), inner.clone())
                .prop_map(|(l, op, r)| format!("{l} {op} {r}")),
            (prop::sample::select(CALLS), inner.clone()).prop_map(|(f, e)| format!("{f}({e})")),
            inner.clone().prop_map(|e| format!("({e})")),
            (array(), inner).prop_map(|(a, e)| format!("{a}[{e}]")),
        ]
    })
}

pub fn stmt() -> impl Strategy<Value = String> {
    let simple = prop_oneof![
        (array(), scalar(), expr()).prop_map(|(a, i, e)| format!("{a}[{i}] = {e};")),
        (scalar(), prop::sample::select(&["=", "+=", "*="][..]), expr())
            .prop_map(|(v, op, e)| format!("{v} {op} {e};")),
        (prop::sample::select(CALLS), expr()).prop_map(|(f, e)| format!("{f}({e});")),
    ];
    simple.prop_recursive(2, 8, 3, |inner| {
        prop_oneof![
            (expr(), inner.clone()).prop_map(|(c, s)| format!("if ({c}) {s}")),
            prop::collection::vec(inner.clone(), 1..3).prop_map(|v| format!("{{ {} }}", v.join(" "))),
            (scalar(), scalar(), inner).prop_map(|(i, n, s)| format!("for ({i} = 0; {i} < {n}; {i}++) {s}")),
        ]
    })
}

/// A loop, optionally preceded by a pragma line.
pub fn annotated_loop() -> impl Strategy<Value = (Option<&'static str>, String)> {
    (prop::option::of(prop::sample::select(PRAGMAS)), scalar(), scalar(), stmt())
        .prop_map(|(p, i, n, body)| (p, format!("for ({i} = 0; {i} < {n}; {i}++)\n        {body}")))
}

/// A translation unit with one function holding a few loops, the first of
/// which carries a `parallel for` directive.
pub fn program() -> impl Strategy<Value = String> {
    (prop::sample::select(&PRAGMAS[..PRAGMAS.len() - 1]), prop::collection::vec(annotated_loop(), 1..5)).prop_map(
        |(first, mut loops)| {
            loops[0].0 = Some(first);
            let mut src = String::from("double f(double x) { return x * 2.0; }\n\n");
            src.push_str("void kernel(int n, int m, double *a, double *b, double *c, double *out)\n{\n");
            src.push_str("    int i, j;\n    double sum = 0.0, t, scale = 1.0;\n");
            for (pragma, body) in loops {
                if let Some(p) = pragma {
                    src.push_str(p);
                    src.push('\n');
                }
                src.push_str("    ");
                src.push_str(&body);
                src.push('\n');
            }
            src.push_str("}\n");
            src
        },
    )
}
