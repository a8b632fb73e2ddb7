//! The four token representations of a loop snippet: raw text, text with
//! canonical identifier names, linearized AST, and linearized AST with
//! canonical names.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfront::{self, AstNode, FrontendError, NodeKind, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReprKind {
    Text,
    RText,
    Ast,
    RAst,
}

impl ReprKind {
    pub const ALL: [ReprKind; 4] = [ReprKind::Text, ReprKind::RText, ReprKind::Ast, ReprKind::RAst];

    pub fn as_str(self) -> &'static str {
        match self {
            ReprKind::Text => "text",
            ReprKind::RText => "r_text",
            ReprKind::Ast => "ast",
            ReprKind::RAst => "r_ast",
        }
    }
}

impl fmt::Display for ReprKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ReprKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ReprKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown representation {s:?} (expected text, r_text, ast or r_ast)"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReprError {
    #[error(transparent)]
    Frontend(#[from] FrontendError),
}

impl From<cfront::LexError> for ReprError {
    fn from(e: cfront::LexError) -> Self {
        ReprError::Frontend(e.into())
    }
}

/// A token sequence plus, for text-based kinds, the byte range of each token
/// in the snippet it came from.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Representation {
    pub tokens: Vec<String>,
    pub spans: Vec<Option<Range<usize>>>,
}

impl Representation {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined rendering.
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IdentCategory {
    Var,
    Arr,
    Func,
}

impl IdentCategory {
    fn prefix(self) -> &'static str {
        match self {
            IdentCategory::Var => "var",
            IdentCategory::Arr => "arr",
            IdentCategory::Func => "func",
        }
    }
}

/// Identifier to canonical-name mapping for one snippet.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RenameMap {
    names: HashMap<String, String>,
    /// (original, canonical) in first-occurrence order.
    order: Vec<(String, String)>,
    counters: [usize; 3],
}

impl RenameMap {
    /// Builds the map from a pre-order walk, which visits identifiers in
    /// source order. Each name's category comes from its first use.
    pub fn from_ast(root: &AstNode) -> Self {
        let mut map = RenameMap::default();
        map.visit(root);
        map
    }

    fn visit(&mut self, node: &AstNode) {
        match node.kind {
            NodeKind::FuncDef => self.assign(node.attr(), IdentCategory::Func),
            NodeKind::Decl => self.assign(node.attr(), IdentCategory::Var),
            _ => {}
        }
        for (i, child) in node.children.iter().enumerate() {
            if child.kind == NodeKind::ID {
                let category = match (node.kind, i) {
                    (NodeKind::StructRef, 1) => continue,
                    (NodeKind::FuncCall, 0) => IdentCategory::Func,
                    (NodeKind::ArrayRef, 0) => IdentCategory::Arr,
                    _ => IdentCategory::Var,
                };
                self.assign(child.attr(), category);
            } else {
                self.visit(child);
            }
        }
        if node.kind == NodeKind::ID && node.children.is_empty() && self.order.is_empty() && node.attr.is_some() {
            // A bare ID root.
            self.assign(node.attr(), IdentCategory::Var);
        }
    }

    fn assign(&mut self, name: Option<&str>, category: IdentCategory) {
        let Some(name) = name else { return };
        if name.is_empty() || self.names.contains_key(name) {
            return;
        }
        let slot = category as usize;
        let canonical = format!("{}{}", category.prefix(), self.counters[slot]);
        self.counters[slot] += 1;
        self.names.insert(name.to_string(), canonical.clone());
        self.order.push((name.to_string(), canonical));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.names.get(name).map(String::as_str)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Renames identifier tokens; struct members after `.`/`->` are kept.
    pub fn rename_tokens(&self, tokens: &[Token]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let after_member_op = i > 0 && matches!(tokens[i - 1].lexeme.as_str(), "." | "->");
            let renamed =
                if tok.kind == TokenKind::Identifier && !after_member_op { self.get(&tok.lexeme) } else { None };
            out.push(renamed.unwrap_or(&tok.lexeme).to_string());
        }
        out
    }

    /// Copy of `node` with identifiers renamed.
    pub fn rename_ast(&self, node: &AstNode) -> AstNode {
        let mut out = node.clone();
        self.rename_in_place(&mut out, false);
        out
    }

    fn rename_in_place(&self, node: &mut AstNode, is_member: bool) {
        if matches!(node.kind, NodeKind::ID | NodeKind::Decl | NodeKind::FuncDef) && !is_member {
            if let Some(new) = node.attr.as_deref().and_then(|a| self.get(a)) {
                node.attr = Some(new.to_string());
            }
        }
        let is_struct_ref = node.kind == NodeKind::StructRef;
        for (i, child) in node.children.iter_mut().enumerate() {
            self.rename_in_place(child, is_struct_ref && i == 1);
        }
    }
}

/// Tokens of `node` in pre-order: `Kind:` then the attribute words.
pub fn ast_linearize(node: &AstNode) -> Vec<String> {
    let mut out = Vec::new();
    for n in node.descendants() {
        out.push(format!("{}:", n.kind));
        if let Some(attr) = n.attr() {
            out.extend(attr.split_whitespace().map(str::to_string));
        }
    }
    out
}

/// Indented rendering: one node per line, two spaces per depth level.
pub fn render_tree(node: &AstNode) -> String {
    fn go(node: &AstNode, depth: usize, out: &mut String) {
        out.push_str(&"  ".repeat(depth));
        out.push_str(node.kind.name());
        out.push(':');
        if let Some(attr) = node.attr() {
            out.push(' ');
            out.push_str(attr);
        }
        out.push('\n');
        for child in &node.children {
            go(child, depth + 1, out);
        }
    }
    let mut out = String::new();
    go(node, 0, &mut out);
    out
}

/// The items of a snippet unit (its loop and helper functions).
fn snippet_items(root: &AstNode) -> &[AstNode] {
    if root.kind == NodeKind::TranslationUnit {
        &root.children
    } else {
        std::slice::from_ref(root)
    }
}

fn code_tokens(code: &str) -> Result<Vec<Token>, cfront::LexError> {
    Ok(cfront::lex(code)?.into_iter().filter(|t| t.kind != TokenKind::PragmaLine).collect())
}

pub fn to_text(code: &str) -> Result<Representation, ReprError> {
    let tokens = code_tokens(code)?;
    Ok(Representation {
        spans: tokens.iter().map(|t| Some(t.offset..t.end)).collect(),
        tokens: tokens.into_iter().map(|t| t.lexeme).collect(),
    })
}

/// Parses a snippet and returns its rename map together with the tokens.
pub fn canonicalize(code: &str) -> Result<(RenameMap, Vec<Token>, AstNode), ReprError> {
    let tokens = code_tokens(code)?;
    let unit = cfront::parse_unit(&tokens).map_err(FrontendError::from)?;
    let map = RenameMap::from_ast(&unit.root);
    Ok((map, tokens, unit.root))
}

/// Produces the requested representation of a code snippet.
pub fn represent(code: &str, kind: ReprKind) -> Result<Representation, ReprError> {
    match kind {
        ReprKind::Text => to_text(code),
        ReprKind::RText => {
            let (map, tokens, _) = canonicalize(code)?;
            Ok(Representation {
                tokens: map.rename_tokens(&tokens),
                spans: tokens.iter().map(|t| Some(t.offset..t.end)).collect(),
            })
        }
        ReprKind::Ast | ReprKind::RAst => {
            let (map, _, root) = canonicalize(code)?;
            let mut tokens = Vec::new();
            for item in snippet_items(&root) {
                if kind == ReprKind::RAst {
                    tokens.extend(ast_linearize(&map.rename_ast(item)));
                } else {
                    tokens.extend(ast_linearize(item));
                }
            }
            Ok(Representation { spans: vec![None; tokens.len()], tokens })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE5: &str = "for (i = 0; i < len; i++)  a[i] = i;";

    fn split(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn text_row() {
        assert_eq!(represent(TABLE5, ReprKind::Text).unwrap().joined(), "for ( i = 0 ; i < len ; i ++ ) a [ i ] = i ;");
        assert_eq!(represent("for(;;);", ReprKind::Text).unwrap().joined(), "for ( ; ; ) ;");
    }

    #[test]
    fn replaced_text_row() {
        let want = to_text("for (var0 = 0; var0 < var1; var0++) arr0[var0] = var0;").unwrap();
        assert_eq!(represent(TABLE5, ReprKind::RText).unwrap().tokens, want.tokens);
    }

    #[test]
    fn ast_rows() {
        assert_eq!(
            represent(TABLE5, ReprKind::Ast).unwrap().tokens,
            split("For: Assignment: = ID: i Constant: int, 0 BinaryOp: < ID: i ID: len UnaryOp: p++ ID: i Assignment: = ArrayRef: ID: a ID: i ID: i")
        );
        assert_eq!(
            represent(TABLE5, ReprKind::RAst).unwrap().tokens,
            split("For: Assignment: = ID: var0 Constant: int, 0 BinaryOp: < ID: var0 ID: var1 UnaryOp: p++ ID: var0  Assignment: = ArrayRef: ID: arr0 ID: var0 ID: var0")
        );
    }

    #[test]
    fn call_categories() {
        assert_eq!(represent("f(x);", ReprKind::RText).unwrap().joined(), "func0 ( var0 ) ;");
    }

    #[test]
    fn first_use_decides_category() {
        let r = represent("a[i] = 0;\nx = a + i;", ReprKind::RText).unwrap();
        assert_eq!(r.joined(), "arr0 [ var0 ] = 0 ; var1 = arr0 + var0 ;");
    }

    #[test]
    fn struct_members_keep_names() {
        let r = represent("for (i = 0; i < n; i++) p->x[i] = s.x;", ReprKind::RText).unwrap();
        assert_eq!(r.joined(), "for ( var0 = 0 ; var0 < var1 ; var0 ++ ) var2 -> x [ var0 ] = var3 . x ;");
    }

    #[test]
    fn single_id_node() {
        let unit = cfront::parse_source("x;").unwrap();
        assert_eq!(ast_linearize(&unit.root.children[0]), ["ID:", "x"]);
    }

    #[test]
    fn marker_count_matches_node_count() {
        let unit = cfront::parse_source("for (i = 0; i < n; i++) { s += f(a[i], b.c) ? 1 : -x; }").unwrap();
        let node = &unit.root.children[0];
        let markers = ast_linearize(node)
            .iter()
            .filter(|t| t.ends_with(':') && t.chars().next().unwrap().is_ascii_uppercase())
            .count();
        assert_eq!(markers, node.node_count());
    }

    #[test]
    fn repr_kind_round_trip() {
        for k in ReprKind::ALL {
            assert_eq!(k.as_str().parse::<ReprKind>().unwrap(), k);
        }
        assert!("tokens".parse::<ReprKind>().is_err());
    }
}
