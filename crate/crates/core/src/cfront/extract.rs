//! Loop extraction: pick out `for` statements, the OpenMP pragma bound to
//! each, and the definitions of functions they call.

use std::collections::{HashMap, HashSet};

use super::ast::{AstNode, NodeId, NodeKind, PragmaAttachment};

#[derive(Debug, Clone)]
pub struct ExtractedLoop<'a> {
    pub loop_node: &'a AstNode,
    /// OpenMP pragma attached directly to the loop.
    pub pragma: Option<String>,
    /// Definitions of functions called inside the loop, in source order.
    pub helpers: Vec<&'a AstNode>,
    /// An OpenMP pragma is attached to an enclosing construct or to a
    /// statement nested inside the loop.
    pub omp_context: bool,
}

/// Returns every reachable `for` loop with its pragma and helper functions.
///
/// Loops nested inside a pragma-annotated loop are folded into that loop's
/// entry; loops nested in an unannotated loop are reported individually.
pub fn extract_loops<'a>(root: &'a AstNode, attachments: &'a [PragmaAttachment]) -> Vec<ExtractedLoop<'a>> {
    let mut omp: HashMap<NodeId, &str> = HashMap::new();
    for att in attachments.iter().filter(|a| a.is_omp()) {
        omp.entry(att.target).or_insert(att.pragma.as_str());
    }
    let functions: Vec<&AstNode> = root.children.iter().filter(|n| n.kind == NodeKind::FuncDef).collect();

    let mut out = Vec::new();
    let mut walker = Walker { omp: &omp, functions: &functions, out: &mut out };
    walker.walk(root, None, false);
    out
}

struct Walker<'w, 'a> {
    omp: &'w HashMap<NodeId, &'a str>,
    functions: &'w [&'a AstNode],
    out: &'w mut Vec<ExtractedLoop<'a>>,
}

impl<'w, 'a> Walker<'w, 'a> {
    fn walk(&mut self, node: &'a AstNode, function: Option<&'a str>, in_omp: bool) {
        let function = if node.kind == NodeKind::FuncDef { node.attr() } else { function };
        let pragma = self.omp.get(&node.id).copied();

        if node.kind == NodeKind::For {
            let nested_omp = node.descendants().skip(1).any(|d| self.omp.contains_key(&d.id));
            self.out.push(ExtractedLoop {
                loop_node: node,
                pragma: pragma.map(str::to_string),
                helpers: self.helpers(node, function),
                omp_context: in_omp || nested_omp,
            });
            if pragma.is_some() {
                return;
            }
        }
        let in_omp = in_omp || pragma.is_some();
        for child in &node.children {
            self.walk(child, function, in_omp);
        }
    }

    fn helpers(&self, loop_node: &AstNode, enclosing: Option<&str>) -> Vec<&'a AstNode> {
        let called: HashSet<&str> = loop_node.descendants().filter_map(AstNode::callee_name).collect();
        let mut seen = HashSet::new();
        self.functions
            .iter()
            .copied()
            .filter(|f| {
                let name = f.attr().unwrap_or_default();
                called.contains(name) && Some(name) != enclosing && seen.insert(name)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::{lexer::lex, parser::parse_unit};

    #[test]
    fn no_loops() {
        let unit = parse_unit(&lex("int f(int x) { return x + 1; }").unwrap()).unwrap();
        assert!(extract_loops(&unit.root, &unit.attachments).is_empty());
    }

    #[test]
    fn annotated_outer_loop_is_one_entry() {
        let src = "void f() {\n#pragma omp parallel for private(j)\n\
                   for (i = 0; i < n; i++)\n  for (j = 0; j < n; j++)\n    a[i][j] = 0;\n}";
        let unit = parse_unit(&lex(src).unwrap()).unwrap();
        let loops = extract_loops(&unit.root, &unit.attachments);
        assert_eq!(loops.len(), 1);
        assert_eq!(loops[0].pragma.as_deref(), Some("#pragma omp parallel for private(j)"));
        assert_eq!(loops[0].loop_node.span.line, 3);
        assert!(!loops[0].omp_context);
    }

    #[test]
    fn unannotated_nest_yields_each_loop() {
        let src = "void f() { for (i = 0; i < n; i++) for (j = 0; j < n; j++) a[i][j] = 0; }";
        let unit = parse_unit(&lex(src).unwrap()).unwrap();
        assert_eq!(extract_loops(&unit.root, &unit.attachments).len(), 2);
    }

    #[test]
    fn inner_annotation_marks_outer_context() {
        let src =
            "void f() { for (t = 0; t < T; t++) {\n#pragma omp parallel for\n for (i = 0; i < n; i++) a[i] = b[i]; } }";
        let unit = parse_unit(&lex(src).unwrap()).unwrap();
        let loops = extract_loops(&unit.root, &unit.attachments);
        assert_eq!(loops.len(), 2);
        assert!(loops[0].pragma.is_none() && loops[0].omp_context);
        assert!(loops[1].pragma.is_some());
    }

    #[test]
    fn helpers_are_resolved_one_level() {
        let src = "int MoreCalc(int i) { return Deep(i); }\nint Deep(int i) { return i; }\n\
                   void Calc(int i) { }\nvoid run() {\n#pragma omp parallel for\n\
                   for (i=0;i<=N;i++)\n  if (MoreCalc(i))\n     Calc(i);\n}";
        let unit = parse_unit(&lex(src).unwrap()).unwrap();
        let loops = extract_loops(&unit.root, &unit.attachments);
        assert_eq!(loops.len(), 1);
        let names: Vec<_> = loops[0].helpers.iter().filter_map(|h| h.attr()).collect();
        assert_eq!(names, ["MoreCalc", "Calc"]);
    }

    #[test]
    fn non_omp_pragmas_are_ignored() {
        let src = "void f() {\n#pragma unroll\nfor (i = 0; i < n; i++) a[i] = 0; }";
        let unit = parse_unit(&lex(src).unwrap()).unwrap();
        let loops = extract_loops(&unit.root, &unit.attachments);
        assert!(loops[0].pragma.is_none());
    }
}
