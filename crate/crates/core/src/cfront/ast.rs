use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    TranslationUnit,
    FuncDef,
    Decl,
    For,
    While,
    If,
    Compound,
    Assignment,
    BinaryOp,
    UnaryOp,
    TernaryOp,
    FuncCall,
    ExprList,
    ArrayRef,
    StructRef,
    ID,
    Constant,
    Cast,
    Return,
    Break,
    Continue,
    EmptyStatement,
}

impl NodeKind {
    pub fn name(self) -> &'static str {
        match self {
            NodeKind::TranslationUnit => "TranslationUnit",
            NodeKind::FuncDef => "FuncDef",
            NodeKind::Decl => "Decl",
            NodeKind::For => "For",
            NodeKind::While => "While",
            NodeKind::If => "If",
            NodeKind::Compound => "Compound",
            NodeKind::Assignment => "Assignment",
            NodeKind::BinaryOp => "BinaryOp",
            NodeKind::UnaryOp => "UnaryOp",
            NodeKind::TernaryOp => "TernaryOp",
            NodeKind::FuncCall => "FuncCall",
            NodeKind::ExprList => "ExprList",
            NodeKind::ArrayRef => "ArrayRef",
            NodeKind::StructRef => "StructRef",
            NodeKind::ID => "ID",
            NodeKind::Constant => "Constant",
            NodeKind::Cast => "Cast",
            NodeKind::Return => "Return",
            NodeKind::Break => "Break",
            NodeKind::Continue => "Continue",
            NodeKind::EmptyStatement => "EmptyStatement",
        }
    }

    /// Kinds that may be the target of a pragma.
    pub fn is_statement(self) -> bool {
        !matches!(self, NodeKind::TranslationUnit | NodeKind::ID | NodeKind::Constant)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

/// Source extent of a node, in bytes and lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: u32,
    pub end_line: u32,
}

impl Span {
    pub fn line_count(&self) -> u32 {
        self.end_line.saturating_sub(self.line) + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AstNode {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Operator symbol, identifier name, or `type, value` for constants.
    pub attr: Option<String>,
    pub children: Vec<AstNode>,
    pub span: Span,
}

impl AstNode {
    pub fn attr(&self) -> Option<&str> {
        self.attr.as_deref()
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Pre-order iterator over this node and its descendants.
    pub fn descendants(&self) -> Descendants<'_> {
        Descendants { stack: vec![self] }
    }

    pub fn find(&self, id: NodeId) -> Option<&AstNode> {
        self.descendants().find(|n| n.id == id)
    }

    pub fn node_count(&self) -> usize {
        self.descendants().count()
    }

    /// True for a `For` whose body is an empty statement or `{}`.
    pub fn has_empty_body(&self) -> bool {
        match self.children.last() {
            Some(body) => {
                body.kind == NodeKind::EmptyStatement || (body.kind == NodeKind::Compound && body.children.is_empty())
            }
            None => true,
        }
    }

    /// Callee name when this is a call through a plain identifier.
    pub fn callee_name(&self) -> Option<&str> {
        if self.kind != NodeKind::FuncCall {
            return None;
        }
        self.children.first().filter(|c| c.kind == NodeKind::ID).and_then(|c| c.attr())
    }
}

pub struct Descendants<'a> {
    stack: Vec<&'a AstNode>,
}

impl<'a> Iterator for Descendants<'a> {
    type Item = &'a AstNode;

    fn next(&mut self) -> Option<&'a AstNode> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// A `#pragma` line bound to the statement that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PragmaAttachment {
    pub pragma: String,
    pub line: u32,
    pub target: NodeId,
}

impl PragmaAttachment {
    pub fn is_omp(&self) -> bool {
        let mut words = self.pragma.split_whitespace();
        words.next() == Some("#pragma") && words.next() == Some("omp")
    }
}
