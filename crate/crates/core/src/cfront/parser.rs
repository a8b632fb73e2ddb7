//! Tolerant recursive-descent parser for a C subset.
//!
//! Node kinds and attribute strings follow pycparser's `show()` output so that
//! linearized trees look like the ones produced by that tool. Top-level
//! constructs that fail to parse are skipped and reported; statements are also
//! accepted at top level so that extracted loop snippets can be re-parsed.

use std::collections::HashSet;

use thiserror::Error;

use super::ast::{AstNode, NodeId, NodeKind, PragmaAttachment, Span};
use super::lexer::{Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct SyntaxError {
    pub message: String,
    pub line: u32,
    pub column: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no top-level construct could be parsed (first error: {first})")]
    FatalSyntax { first: SyntaxError, skipped: usize },
}

#[derive(Debug, Clone)]
pub struct ParsedUnit {
    pub root: AstNode,
    pub attachments: Vec<PragmaAttachment>,
    /// Top-level constructs that failed to parse and were skipped.
    pub skipped: Vec<SyntaxError>,
}

type PResult<T> = Result<T, SyntaxError>;

const STORAGE_AND_QUALIFIERS: &[&str] = &[
    "typedef",
    "extern",
    "static",
    "auto",
    "register",
    "const",
    "volatile",
    "restrict",
    "__restrict",
    "__restrict__",
    "inline",
    "__inline",
    "__inline__",
    "_Thread_local",
];

const TYPE_KEYWORDS: &[&str] = &[
    "void",
    "char",
    "short",
    "int",
    "long",
    "float",
    "double",
    "signed",
    "unsigned",
    "_Bool",
    "_Complex",
    "_Imaginary",
    "struct",
    "union",
    "enum",
];

const ASSIGN_OPS: &[&str] = &["=", "+=", "-=", "*=", "/=", "%=", "<<=", ">>=", "&=", "^=", "|="];

// Binary operators by ascending precedence.
const BINARY_LEVELS: &[&[&str]] = &[
    &["||"],
    &["&&"],
    &["|"],
    &["^"],
    &["&"],
    &["==", "!="],
    &["<", ">", "<=", ">="],
    &["<<", ">>"],
    &["+", "-"],
    &["*", "/", "%"],
];

fn is_decl_keyword(lexeme: &str) -> bool {
    STORAGE_AND_QUALIFIERS.contains(&lexeme) || TYPE_KEYWORDS.contains(&lexeme)
}

/// Parses a token stream into a `TranslationUnit`.
pub fn parse_unit(tokens: &[Token]) -> Result<ParsedUnit, ParseError> {
    let mut p = Parser::new(tokens);
    let mut items = Vec::new();
    let mut skipped = Vec::new();
    let mut parsed_any = false;

    while !p.at_end() {
        let pragmas = p.take_pragmas();
        if p.at_end() {
            if !pragmas.is_empty() {
                let node = p.synthetic_empty();
                p.attach(&pragmas, node.id);
                items.push(node);
            }
            break;
        }
        if p.peek_is(";") {
            p.bump();
            continue;
        }
        let start = p.pos;
        let attached = p.attachments.len();
        match p.external_item() {
            Ok(nodes) => {
                parsed_any = true;
                if let Some(first) = nodes.first() {
                    p.attach(&pragmas, first.id);
                }
                items.extend(nodes);
            }
            Err(err) => {
                log::debug!("skipping top-level construct: {err}");
                skipped.push(err);
                p.attachments.truncate(attached);
                p.pos = start;
                p.recover();
            }
        }
    }

    if !parsed_any {
        if let Some(first) = skipped.first().cloned() {
            return Err(ParseError::FatalSyntax { first, skipped: skipped.len() });
        }
    }
    let span = if tokens.is_empty() { Span::default() } else { p.span_from(0) };
    let root = p.node(NodeKind::TranslationUnit, None, items, span);
    Ok(ParsedUnit { root, attachments: p.attachments, skipped })
}

struct Parser<'t> {
    toks: &'t [Token],
    pos: usize,
    next_id: u32,
    typedefs: HashSet<String>,
    attachments: Vec<PragmaAttachment>,
}

impl<'t> Parser<'t> {
    fn new(toks: &'t [Token]) -> Self {
        Parser { toks, pos: 0, next_id: 0, typedefs: HashSet::new(), attachments: Vec::new() }
    }

    // ---- token helpers -------------------------------------------------

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, n: usize) -> Option<&'t Token> {
        self.toks.get(self.pos + n)
    }

    fn peek_is(&self, lexeme: &str) -> bool {
        self.peek().is_some_and(|t| t.kind != TokenKind::PragmaLine && t.is(lexeme))
    }

    fn peek_at_is(&self, n: usize, lexeme: &str) -> bool {
        self.peek_at(n).is_some_and(|t| t.kind != TokenKind::PragmaLine && t.is(lexeme))
    }

    fn peek_kind(&self, n: usize) -> Option<TokenKind> {
        self.peek_at(n).map(|t| t.kind)
    }

    fn bump(&mut self) -> &'t Token {
        let tok = &self.toks[self.pos];
        self.pos += 1;
        tok
    }

    fn eat(&mut self, lexeme: &str) -> bool {
        if self.peek_is(lexeme) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, lexeme: &str) -> PResult<&'t Token> {
        if self.peek_is(lexeme) {
            Ok(self.bump())
        } else {
            Err(self.error(format!("expected `{lexeme}`")))
        }
    }

    fn error(&self, message: String) -> SyntaxError {
        match self.peek().or_else(|| self.toks.last()) {
            Some(tok) => SyntaxError {
                message: if self.at_end() {
                    format!("{message}, found end of input")
                } else {
                    format!("{message}, found `{}`", tok.lexeme)
                },
                line: tok.line,
                column: tok.column,
            },
            None => SyntaxError { message, line: 1, column: 1 },
        }
    }

    fn ident(&mut self) -> PResult<&'t Token> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump()),
            _ => Err(self.error("expected identifier".into())),
        }
    }

    /// Skips past the current construct: to the next `;` at depth zero or a
    /// closing `}` that returns to depth zero.
    /// Skips to the end of the current top-level construct. Only braces are
    /// tracked, so an unbalanced parenthesis cannot swallow the rest of the
    /// file.
    fn recover(&mut self) {
        let mut depth = 0i32;
        let start = self.pos;
        while let Some(tok) = self.peek() {
            self.pos += 1;
            if tok.kind != TokenKind::Punctuation {
                continue;
            }
            match tok.lexeme.as_str() {
                "{" => depth += 1,
                "}" => {
                    depth -= 1;
                    if depth <= 0 {
                        self.eat(";");
                        break;
                    }
                }
                ";" if depth <= 0 => break,
                _ => {}
            }
        }
        if self.pos == start && !self.at_end() {
            self.pos += 1;
        }
    }

    // ---- node helpers --------------------------------------------------

    fn span_from(&self, start: usize) -> Span {
        let first = &self.toks[start.min(self.toks.len() - 1)];
        let last = &self.toks[self.pos.saturating_sub(1).max(start).min(self.toks.len() - 1)];
        Span { start: first.offset, end: last.end, line: first.line, end_line: last.line }
    }

    fn node(&mut self, kind: NodeKind, attr: Option<String>, children: Vec<AstNode>, span: Span) -> AstNode {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        AstNode { id, kind, attr, children, span }
    }

    fn finish(&mut self, kind: NodeKind, attr: Option<String>, children: Vec<AstNode>, start: usize) -> AstNode {
        let span = self.span_from(start);
        self.node(kind, attr, children, span)
    }

    fn synthetic_empty(&mut self) -> AstNode {
        let span = match self.peek().or_else(|| self.toks.last()) {
            Some(t) => Span { start: t.offset, end: t.offset, line: t.line, end_line: t.line },
            None => Span::default(),
        };
        self.node(NodeKind::EmptyStatement, None, Vec::new(), span)
    }

    fn take_pragmas(&mut self) -> Vec<(String, u32)> {
        let mut out = Vec::new();
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::PragmaLine {
                break;
            }
            out.push((tok.lexeme.clone(), tok.line));
            self.pos += 1;
        }
        out
    }

    fn attach(&mut self, pragmas: &[(String, u32)], target: NodeId) {
        for (pragma, line) in pragmas {
            self.attachments.push(PragmaAttachment { pragma: pragma.clone(), line: *line, target });
        }
    }

    // ---- top level -----------------------------------------------------

    fn external_item(&mut self) -> PResult<Vec<AstNode>> {
        // Implicit-int function definition: `name(args) {`.
        if self.peek_kind(0) == Some(TokenKind::Identifier) && self.peek_at_is(1, "(") {
            if let Some(close) = self.matching_paren(self.pos + 1) {
                if self.toks.get(close + 1).is_some_and(|t| t.is("{")) {
                    let start = self.pos;
                    let name = self.bump().lexeme.clone();
                    let params = self.parameter_list()?;
                    return Ok(vec![self.function_body(name, params, start)?]);
                }
            }
        }
        if self.is_declaration_start() {
            return self.declaration(true);
        }
        self.block_item()
    }

    fn matching_paren(&self, open: usize) -> Option<usize> {
        let mut depth = 0;
        for (i, tok) in self.toks.iter().enumerate().skip(open) {
            if tok.kind != TokenKind::Punctuation {
                continue;
            }
            match tok.lexeme.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn is_declaration_start(&self) -> bool {
        let Some(t0) = self.peek() else { return false };
        match t0.kind {
            TokenKind::Keyword => is_decl_keyword(&t0.lexeme),
            TokenKind::Identifier => {
                if t0.lexeme == "__attribute__" || t0.lexeme == "__extension__" {
                    return true;
                }
                let known = self.typedefs.contains(&t0.lexeme);
                match self.peek_at(1) {
                    Some(t1) if t1.kind == TokenKind::Identifier => true,
                    Some(t1) if t1.kind == TokenKind::Keyword && is_decl_keyword(&t1.lexeme) => known,
                    Some(t1) if t1.is("*") => {
                        if known {
                            return true;
                        }
                        // `T *p = ...`, `T **p;` cannot be expressions.
                        let mut n = 1;
                        while self.peek_at_is(n, "*") {
                            n += 1;
                        }
                        self.peek_kind(n) == Some(TokenKind::Identifier)
                            && self.peek_at(n + 1).is_some_and(|t| matches!(t.lexeme.as_str(), "=" | ";" | "," | "["))
                    }
                    _ => false,
                }
            }
            _ => false,
        }
    }

    // ---- declarations --------------------------------------------------

    /// Parses declaration specifiers; returns (type text, is_typedef).
    fn decl_specifiers(&mut self) -> PResult<(String, bool)> {
        let mut words: Vec<String> = Vec::new();
        let mut is_typedef = false;
        let mut has_type = false;
        while let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Keyword && STORAGE_AND_QUALIFIERS.contains(&tok.lexeme.as_str()) {
                if tok.is("typedef") {
                    is_typedef = true;
                }
                self.bump();
            } else if tok.kind == TokenKind::Keyword && matches!(tok.lexeme.as_str(), "struct" | "union" | "enum") {
                self.bump();
                let mut text = tok.lexeme.clone();
                if self.peek_kind(0) == Some(TokenKind::Identifier) {
                    text.push(' ');
                    text.push_str(&self.bump().lexeme);
                }
                if self.peek_is("{") {
                    self.skip_balanced("{", "}")?;
                }
                words.push(text);
                has_type = true;
            } else if tok.kind == TokenKind::Keyword && TYPE_KEYWORDS.contains(&tok.lexeme.as_str()) {
                words.push(self.bump().lexeme.clone());
                has_type = true;
            } else if tok.kind == TokenKind::Identifier && (tok.is("__attribute__") || tok.is("__declspec")) {
                self.bump();
                if self.peek_is("(") {
                    self.skip_balanced("(", ")")?;
                }
            } else if tok.kind == TokenKind::Identifier && tok.is("__extension__") {
                self.bump();
            } else if tok.kind == TokenKind::Identifier && !has_type {
                words.push(self.bump().lexeme.clone());
                has_type = true;
            } else {
                break;
            }
        }
        if !has_type && words.is_empty() {
            return Err(self.error("expected declaration specifiers".into()));
        }
        Ok((words.join(" "), is_typedef))
    }

    fn skip_balanced(&mut self, open: &str, close: &str) -> PResult<()> {
        self.expect(open)?;
        let mut depth = 1;
        while depth > 0 {
            if self.at_end() {
                return Err(self.error(format!("unbalanced `{open}`")));
            }
            let tok = self.bump();
            if tok.kind == TokenKind::Punctuation {
                if tok.is(open) {
                    depth += 1;
                } else if tok.is(close) {
                    depth -= 1;
                }
            }
        }
        Ok(())
    }

    /// Parses a declarator; returns (name, params if a function declarator).
    fn declarator(&mut self) -> PResult<(Option<String>, Option<Vec<AstNode>>)> {
        while self.eat("*") {
            while self
                .peek()
                .is_some_and(|t| t.kind == TokenKind::Keyword && STORAGE_AND_QUALIFIERS.contains(&t.lexeme.as_str()))
            {
                self.bump();
            }
        }
        let mut name = None;
        let mut params = None;
        if self.peek_kind(0) == Some(TokenKind::Identifier) {
            name = Some(self.bump().lexeme.clone());
        } else if self.peek_is("(") && (self.peek_at_is(1, "*") || self.peek_at_is(1, "(")) {
            self.bump();
            let (inner, _) = self.declarator()?;
            self.expect(")")?;
            name = inner;
        }
        loop {
            if self.peek_is("[") {
                self.skip_balanced("[", "]")?;
            } else if self.peek_is("(") {
                let list = self.parameter_list()?;
                if params.is_none() {
                    params = Some(list);
                }
            } else if self.peek().is_some_and(|t| t.is("__attribute__")) {
                self.bump();
                self.skip_balanced("(", ")")?;
            } else {
                break;
            }
        }
        Ok((name, params))
    }

    fn parameter_list(&mut self) -> PResult<Vec<AstNode>> {
        self.expect("(")?;
        let mut params = Vec::new();
        if self.eat(")") {
            return Ok(params);
        }
        loop {
            if self.eat("...") {
                self.expect(")")?;
                break;
            }
            let start = self.pos;
            if self.peek_kind(0) == Some(TokenKind::Identifier)
                && (self.peek_at_is(1, ",") || self.peek_at_is(1, ")"))
                && !self.typedefs.contains(&self.peek().unwrap().lexeme)
            {
                // K&R identifier list or a bare typedef name.
                let name = self.bump().lexeme.clone();
                params.push(self.finish(NodeKind::Decl, Some(name), Vec::new(), start));
            } else {
                self.decl_specifiers()?;
                let (name, _) = self.declarator()?;
                if let Some(name) = name {
                    params.push(self.finish(NodeKind::Decl, Some(name), Vec::new(), start));
                }
            }
            if self.eat(")") {
                break;
            }
            self.expect(",")?;
        }
        Ok(params)
    }

    fn initializer(&mut self) -> PResult<AstNode> {
        if self.peek_is("{") {
            let start = self.pos;
            self.bump();
            let mut items = Vec::new();
            while !self.peek_is("}") {
                // designators: `.x = `, `[3] = `
                if self.peek_is(".") && self.peek_kind(1) == Some(TokenKind::Identifier) {
                    self.bump();
                    self.bump();
                    self.expect("=")?;
                } else if self.peek_is("[") {
                    self.skip_balanced("[", "]")?;
                    self.expect("=")?;
                }
                items.push(self.initializer()?);
                if !self.eat(",") {
                    break;
                }
            }
            self.expect("}")?;
            Ok(self.finish(NodeKind::ExprList, None, items, start))
        } else {
            self.assignment()
        }
    }

    /// Parses a declaration, or a function definition when `allow_fn` holds.
    fn declaration(&mut self, allow_fn: bool) -> PResult<Vec<AstNode>> {
        let start = self.pos;
        let (_, is_typedef) = self.decl_specifiers()?;
        let mut decls = Vec::new();
        if self.eat(";") {
            return Ok(decls);
        }
        loop {
            let decl_start = self.pos;
            let (name, params) = self.declarator()?;
            if allow_fn && decls.is_empty() && self.peek_is("{") {
                if let (Some(name), Some(params)) = (name.clone(), params.clone()) {
                    return Ok(vec![self.function_body(name, params, start)?]);
                }
            }
            // K&R parameter declarations between `)` and `{`.
            let kr_params = params.as_ref().filter(|_| allow_fn && decls.is_empty() && self.is_declaration_start());
            if let Some(kr_params) = kr_params {
                let save = self.pos;
                let mut ok = true;
                while self.is_declaration_start() {
                    if self.declaration(false).is_err() {
                        ok = false;
                        break;
                    }
                }
                if ok && self.peek_is("{") {
                    return Ok(vec![self.function_body(name.unwrap_or_default(), kr_params.clone(), start)?]);
                }
                self.pos = save;
            }
            let mut children = Vec::new();
            if self.eat("=") {
                children.push(self.initializer()?);
            }
            if let Some(name) = name {
                if is_typedef {
                    self.typedefs.insert(name.clone());
                }
                decls.push(self.finish(NodeKind::Decl, Some(name), children, decl_start));
            }
            if self.eat(",") {
                continue;
            }
            self.expect(";")?;
            break;
        }
        Ok(decls)
    }

    fn function_body(&mut self, name: String, params: Vec<AstNode>, start: usize) -> PResult<AstNode> {
        let body = self.compound()?;
        let mut children = params;
        children.push(body);
        Ok(self.finish(NodeKind::FuncDef, Some(name), children, start))
    }

    // ---- statements ----------------------------------------------------

    fn block_item(&mut self) -> PResult<Vec<AstNode>> {
        if self.is_declaration_start() {
            let pragmas = self.take_pragmas();
            let decls = self.declaration(false)?;
            if let Some(first) = decls.first() {
                self.attach(&pragmas, first.id);
            }
            return Ok(decls);
        }
        Ok(vec![self.statement()?])
    }

    fn compound(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect("{")?;
        let mut items = Vec::new();
        loop {
            let pragmas = self.take_pragmas();
            if self.peek_is("}") || self.at_end() {
                if !pragmas.is_empty() {
                    let node = self.synthetic_empty();
                    self.attach(&pragmas, node.id);
                    items.push(node);
                }
                break;
            }
            let nodes = if self.is_declaration_start() { self.declaration(false)? } else { vec![self.statement()?] };
            if let Some(first) = nodes.first() {
                self.attach(&pragmas, first.id);
            }
            items.extend(nodes);
        }
        self.expect("}")?;
        Ok(self.finish(NodeKind::Compound, None, items, start))
    }

    fn statement(&mut self) -> PResult<AstNode> {
        let pragmas = self.take_pragmas();
        let node = if !pragmas.is_empty() && (self.peek_is("}") || self.at_end()) {
            self.synthetic_empty()
        } else {
            self.statement_inner()?
        };
        self.attach(&pragmas, node.id);
        Ok(node)
    }

    fn sub_statement(&mut self) -> PResult<AstNode> {
        if self.is_declaration_start() {
            let start = self.pos;
            let mut decls = self.declaration(false)?;
            return Ok(if decls.len() == 1 {
                decls.pop().unwrap()
            } else {
                self.finish(NodeKind::Compound, None, decls, start)
            });
        }
        self.statement()
    }

    fn statement_inner(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error("expected statement".into()));
        };
        if tok.kind == TokenKind::Keyword {
            match tok.lexeme.as_str() {
                "for" => return self.for_statement(),
                "while" => {
                    self.bump();
                    let cond = self.paren_expression()?;
                    let body = self.sub_statement()?;
                    return Ok(self.finish(NodeKind::While, None, vec![cond, body], start));
                }
                "do" => {
                    self.bump();
                    let body = self.sub_statement()?;
                    self.expect("while")?;
                    let cond = self.paren_expression()?;
                    self.expect(";")?;
                    return Ok(self.finish(NodeKind::While, Some("do".into()), vec![cond, body], start));
                }
                "if" => {
                    self.bump();
                    let cond = self.paren_expression()?;
                    let then = self.sub_statement()?;
                    let mut children = vec![cond, then];
                    if self.eat("else") {
                        children.push(self.sub_statement()?);
                    }
                    return Ok(self.finish(NodeKind::If, None, children, start));
                }
                "switch" => {
                    self.bump();
                    let cond = self.paren_expression()?;
                    let body = self.sub_statement()?;
                    return Ok(self.finish(NodeKind::If, Some("switch".into()), vec![cond, body], start));
                }
                "case" => {
                    self.bump();
                    self.conditional()?;
                    if self.eat("...") {
                        self.conditional()?;
                    }
                    self.expect(":")?;
                    return self.labeled_tail();
                }
                "default" => {
                    self.bump();
                    self.expect(":")?;
                    return self.labeled_tail();
                }
                "return" => {
                    self.bump();
                    let mut children = Vec::new();
                    if !self.peek_is(";") {
                        children.push(self.expression()?);
                    }
                    self.expect(";")?;
                    return Ok(self.finish(NodeKind::Return, None, children, start));
                }
                "break" => {
                    self.bump();
                    self.expect(";")?;
                    return Ok(self.finish(NodeKind::Break, None, Vec::new(), start));
                }
                "continue" => {
                    self.bump();
                    self.expect(";")?;
                    return Ok(self.finish(NodeKind::Continue, None, Vec::new(), start));
                }
                "goto" => {
                    self.bump();
                    self.ident()?;
                    self.expect(";")?;
                    return Ok(self.finish(NodeKind::Break, Some("goto".into()), Vec::new(), start));
                }
                _ => {}
            }
        }
        if tok.is("{") && tok.kind == TokenKind::Punctuation {
            return self.compound();
        }
        if tok.is(";") && tok.kind == TokenKind::Punctuation {
            self.bump();
            return Ok(self.finish(NodeKind::EmptyStatement, None, Vec::new(), start));
        }
        // `label:`
        if tok.kind == TokenKind::Identifier && self.peek_at_is(1, ":") {
            self.bump();
            self.bump();
            return self.labeled_tail();
        }
        let expr = self.expression()?;
        self.expect(";")?;
        Ok(expr)
    }

    fn labeled_tail(&mut self) -> PResult<AstNode> {
        if self.peek_is("}") {
            return Ok(self.synthetic_empty());
        }
        self.sub_statement()
    }

    fn for_statement(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        self.expect("for")?;
        self.expect("(")?;
        let init = if self.peek_is(";") {
            let s = self.pos;
            self.bump();
            self.finish(NodeKind::EmptyStatement, None, Vec::new(), s)
        } else if self.is_declaration_start() {
            let s = self.pos;
            let mut decls = self.declaration(false)?;
            if decls.len() == 1 {
                decls.pop().unwrap()
            } else {
                self.finish(NodeKind::ExprList, None, decls, s)
            }
        } else {
            let e = self.expression()?;
            self.expect(";")?;
            e
        };
        let cond = self.optional_expression(";")?;
        self.expect(";")?;
        let next = self.optional_expression(")")?;
        self.expect(")")?;
        let body = self.sub_statement()?;
        Ok(self.finish(NodeKind::For, None, vec![init, cond, next, body], start))
    }

    fn optional_expression(&mut self, terminator: &str) -> PResult<AstNode> {
        if self.peek_is(terminator) {
            Ok(self.synthetic_empty())
        } else {
            self.expression()
        }
    }

    fn paren_expression(&mut self) -> PResult<AstNode> {
        self.expect("(")?;
        let e = self.expression()?;
        self.expect(")")?;
        Ok(e)
    }

    // ---- expressions ---------------------------------------------------

    fn expression(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let first = self.assignment()?;
        if !self.peek_is(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat(",") {
            items.push(self.assignment()?);
        }
        Ok(self.finish(NodeKind::ExprList, None, items, start))
    }

    fn assignment(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let lhs = self.conditional()?;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Operator && ASSIGN_OPS.contains(&tok.lexeme.as_str()) {
                let op = self.bump().lexeme.clone();
                let rhs = self.assignment()?;
                return Ok(self.finish(NodeKind::Assignment, Some(op), vec![lhs, rhs], start));
            }
        }
        Ok(lhs)
    }

    fn conditional(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let cond = self.binary(0)?;
        if self.eat("?") {
            let then = self.expression()?;
            self.expect(":")?;
            let otherwise = self.conditional()?;
            return Ok(self.finish(NodeKind::TernaryOp, None, vec![cond, then, otherwise], start));
        }
        Ok(cond)
    }

    fn binary(&mut self, level: usize) -> PResult<AstNode> {
        if level == BINARY_LEVELS.len() {
            return self.cast();
        }
        let start = self.pos;
        let mut lhs = self.binary(level + 1)?;
        while let Some(tok) = self.peek() {
            if tok.kind != TokenKind::Operator || !BINARY_LEVELS[level].contains(&tok.lexeme.as_str()) {
                break;
            }
            let op = self.bump().lexeme.clone();
            let rhs = self.binary(level + 1)?;
            lhs = self.finish(NodeKind::BinaryOp, Some(op), vec![lhs, rhs], start);
        }
        Ok(lhs)
    }

    /// Length of a parenthesized type name starting at `(`, if the tokens
    /// there read as one. Includes both parentheses.
    fn type_name_in_parens(&self) -> Option<usize> {
        if !self.peek_is("(") {
            return None;
        }
        let t1 = self.peek_at(1)?;
        let mut n = 1;
        let is_type_start = match t1.kind {
            TokenKind::Keyword => is_decl_keyword(&t1.lexeme),
            TokenKind::Identifier => {
                if self.typedefs.contains(&t1.lexeme) {
                    true
                } else {
                    // `(T *)`, `(T)` followed by something that starts an operand.
                    let mut k = 2;
                    while self.peek_at_is(k, "*") {
                        k += 1;
                    }
                    if !self.peek_at_is(k, ")") {
                        false
                    } else if k > 2 {
                        true
                    } else {
                        self.peek_at(3).is_some_and(|t| {
                            matches!(
                                t.kind,
                                TokenKind::Identifier
                                    | TokenKind::IntLiteral
                                    | TokenKind::FloatLiteral
                                    | TokenKind::CharLiteral
                                    | TokenKind::StringLiteral
                            ) || (t.kind == TokenKind::Punctuation && t.is("("))
                                || (t.kind == TokenKind::Keyword && t.is("sizeof"))
                        })
                    }
                }
            }
            _ => false,
        };
        if !is_type_start {
            return None;
        }
        let mut depth = 1;
        while let Some(t) = self.peek_at(n) {
            match t.lexeme.as_str() {
                "(" | "[" => depth += 1,
                ")" | "]" => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(n + 1);
                    }
                }
                ";" | "{" | "}" => return None,
                _ => {}
            }
            n += 1;
        }
        None
    }

    fn type_text(&self, from: usize, to: usize) -> String {
        self.toks[from..to].iter().map(|t| t.lexeme.as_str()).collect::<Vec<_>>().join(" ")
    }

    fn cast(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        if let Some(len) = self.type_name_in_parens() {
            let ty = self.type_text(self.pos + 1, self.pos + len - 1);
            self.pos += len;
            let operand = if self.peek_is("{") { self.initializer()? } else { self.cast()? };
            return Ok(self.finish(NodeKind::Cast, Some(ty), vec![operand], start));
        }
        self.unary()
    }

    fn unary(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error("expected expression".into()));
        };
        if tok.kind == TokenKind::Operator {
            match tok.lexeme.as_str() {
                "++" | "--" => {
                    let op = self.bump().lexeme.clone();
                    let operand = self.unary()?;
                    return Ok(self.finish(NodeKind::UnaryOp, Some(op), vec![operand], start));
                }
                "&" | "*" | "+" | "-" | "~" | "!" => {
                    let op = self.bump().lexeme.clone();
                    let operand = self.cast()?;
                    return Ok(self.finish(NodeKind::UnaryOp, Some(op), vec![operand], start));
                }
                "&&" => {
                    // GNU label address.
                    self.bump();
                    let operand = self.unary()?;
                    return Ok(self.finish(NodeKind::UnaryOp, Some("&&".into()), vec![operand], start));
                }
                _ => {}
            }
        }
        if tok.kind == TokenKind::Keyword && tok.is("sizeof") {
            self.bump();
            if let Some(len) = self.type_name_in_parens() {
                let ty = self.type_text(self.pos + 1, self.pos + len - 1);
                let ty_start = self.pos;
                self.pos += len;
                let ty_node = self.finish(NodeKind::Cast, Some(ty), Vec::new(), ty_start);
                return Ok(self.finish(NodeKind::UnaryOp, Some("sizeof".into()), vec![ty_node], start));
            }
            let operand = self.unary()?;
            return Ok(self.finish(NodeKind::UnaryOp, Some("sizeof".into()), vec![operand], start));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let mut expr = self.primary()?;
        loop {
            if self.peek_is("[") {
                self.bump();
                let index = self.expression()?;
                self.expect("]")?;
                expr = self.finish(NodeKind::ArrayRef, None, vec![expr, index], start);
            } else if self.peek_is("(") {
                let args_start = self.pos;
                self.bump();
                let mut args = Vec::new();
                if !self.peek_is(")") {
                    loop {
                        args.push(self.call_argument()?);
                        if !self.eat(",") {
                            break;
                        }
                    }
                }
                self.expect(")")?;
                let mut children = vec![expr];
                if !args.is_empty() {
                    children.push(self.finish(NodeKind::ExprList, None, args, args_start));
                }
                expr = self.finish(NodeKind::FuncCall, None, children, start);
            } else if self.peek_is(".") || self.peek_is("->") {
                let op = self.bump().lexeme.clone();
                let field_start = self.pos;
                let field = self.ident()?.lexeme.clone();
                let field = self.finish(NodeKind::ID, Some(field), Vec::new(), field_start);
                expr = self.finish(NodeKind::StructRef, Some(op), vec![expr, field], start);
            } else if self.peek_is("++") || self.peek_is("--") {
                let op = format!("p{}", self.bump().lexeme);
                expr = self.finish(NodeKind::UnaryOp, Some(op), vec![expr], start);
            } else {
                break;
            }
        }
        Ok(expr)
    }

    /// Macro arguments may be bare type names (`POLYBENCH_ARRAY(double, n)`).
    fn call_argument(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        if let Some(tok) = self.peek() {
            if tok.kind == TokenKind::Keyword && is_decl_keyword(&tok.lexeme) {
                let mut end = self.pos;
                while let Some(t) = self.toks.get(end) {
                    if (t.kind == TokenKind::Keyword && is_decl_keyword(&t.lexeme))
                        || t.is("*")
                        || (t.kind == TokenKind::Identifier && end > self.pos)
                    {
                        end += 1;
                    } else {
                        break;
                    }
                }
                if self.toks.get(end).is_some_and(|t| t.is(",") || t.is(")")) {
                    let ty = self.type_text(self.pos, end);
                    self.pos = end;
                    return Ok(self.finish(NodeKind::Cast, Some(ty), Vec::new(), start));
                }
            }
        }
        self.assignment()
    }

    fn primary(&mut self) -> PResult<AstNode> {
        let start = self.pos;
        let Some(tok) = self.peek() else {
            return Err(self.error("expected expression".into()));
        };
        match tok.kind {
            TokenKind::Identifier => {
                let name = self.bump().lexeme.clone();
                Ok(self.finish(NodeKind::ID, Some(name), Vec::new(), start))
            }
            TokenKind::IntLiteral | TokenKind::FloatLiteral | TokenKind::CharLiteral => {
                let tok = self.bump();
                let attr = format!("{}, {}", constant_type(tok), tok.lexeme);
                Ok(self.finish(NodeKind::Constant, Some(attr), Vec::new(), start))
            }
            TokenKind::StringLiteral => {
                let mut value = self.bump().lexeme.clone();
                while self.peek_kind(0) == Some(TokenKind::StringLiteral) {
                    let next = &self.bump().lexeme;
                    value.pop();
                    value.push_str(&next[next.find('"').map_or(0, |i| i + 1)..]);
                }
                Ok(self.finish(NodeKind::Constant, Some(format!("string, {value}")), Vec::new(), start))
            }
            TokenKind::Punctuation if tok.is("(") => {
                self.bump();
                if self.peek_is("{") {
                    // GNU statement expression.
                    let body = self.compound()?;
                    self.expect(")")?;
                    return Ok(body);
                }
                let e = self.expression()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.error("expected expression".into())),
        }
    }
}

fn constant_type(tok: &Token) -> &'static str {
    let lower = tok.lexeme.to_ascii_lowercase();
    match tok.kind {
        TokenKind::CharLiteral => "char",
        TokenKind::FloatLiteral => {
            if lower.starts_with("0x") {
                "double"
            } else if lower.ends_with('f') {
                "float"
            } else if lower.ends_with('l') {
                "long double"
            } else {
                "double"
            }
        }
        _ => {
            let digits_end = if let Some(hex) = lower.strip_prefix("0x") {
                hex.find(|c: char| !c.is_ascii_hexdigit()).map(|i| i + 2)
            } else {
                lower.find(|c: char| !c.is_ascii_digit())
            };
            let suffix = digits_end.map_or("", |i| &lower[i..]);
            let unsigned = suffix.contains('u');
            let longs = suffix.matches('l').count();
            match (unsigned, longs) {
                (false, 0) => "int",
                (true, 0) => "unsigned int",
                (false, 1) => "long int",
                (true, 1) => "unsigned long int",
                (false, _) => "long long int",
                (true, _) => "unsigned long long int",
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::lexer::lex;

    fn parse(src: &str) -> ParsedUnit {
        parse_unit(&lex(src).unwrap()).unwrap()
    }

    fn kinds(node: &AstNode) -> Vec<NodeKind> {
        node.descendants().map(|n| n.kind).collect()
    }

    #[test]
    fn minimal_declaration() {
        let unit = parse("int x;");
        assert_eq!(unit.root.kind, NodeKind::TranslationUnit);
        assert_eq!(unit.root.children.len(), 1);
        assert_eq!(unit.root.children[0].kind, NodeKind::Decl);
        assert_eq!(unit.root.children[0].attr(), Some("x"));
        assert!(unit.attachments.is_empty());
    }

    #[test]
    fn for_has_four_slots() {
        let unit = parse("void f() { for (;;) ; for (i = 0; i < n; i++) a[i] = 0; }");
        let fors: Vec<_> = unit.root.descendants().filter(|n| n.kind == NodeKind::For).collect();
        assert_eq!(fors.len(), 2);
        assert!(fors.iter().all(|f| f.children.len() == 4));
        assert!(fors[0].children.iter().all(|c| c.kind == NodeKind::EmptyStatement));
    }

    #[test]
    fn pragma_attaches_to_following_loop() {
        let src = "void f() {\n#pragma omp parallel for\nfor (i=0;i<=N;i++)\n  A[i] = i;\n}";
        let unit = parse(src);
        assert_eq!(unit.attachments.len(), 1);
        let target = unit.root.find(unit.attachments[0].target).unwrap();
        assert_eq!(target.kind, NodeKind::For);
        assert!(unit.attachments[0].line < target.span.line);
    }

    #[test]
    fn trailing_standalone_pragma_gets_synthetic_target() {
        let unit = parse("void f() { x = 1;\n#pragma omp barrier\n}");
        assert_eq!(unit.attachments.len(), 1);
        let target = unit.root.find(unit.attachments[0].target).unwrap();
        assert_eq!(target.kind, NodeKind::EmptyStatement);
    }

    #[test]
    fn postfix_and_calls() {
        let unit = parse("x = f(a[i][j], s->v.w) + i++;");
        let got = kinds(&unit.root.children[0]);
        use NodeKind::*;
        assert_eq!(
            got,
            [
                Assignment, ID, BinaryOp, FuncCall, ID, ExprList, ArrayRef, ArrayRef, ID, ID, ID, StructRef, StructRef,
                ID, ID, ID, UnaryOp, ID
            ]
        );
    }

    #[test]
    fn macro_call_with_constants() {
        let unit = parse("for (i = 0; i < POLYBENCH_LOOP_BOUND(4000, n); i++) x1[i] = 0;");
        let call = unit.root.descendants().find(|n| n.kind == NodeKind::FuncCall).unwrap();
        assert_eq!(call.callee_name(), Some("POLYBENCH_LOOP_BOUND"));
        let consts: Vec<_> =
            unit.root.descendants().filter(|n| n.kind == NodeKind::Constant).filter_map(|n| n.attr()).collect();
        assert_eq!(consts, ["int, 0", "int, 4000", "int, 0"]);
    }

    #[test]
    fn casts_with_unknown_typedefs() {
        let unit =
            parse("for (i = 0; i < ((ssize_t) image->colors); i++)\n image->colormap[i].opacity = (IndexPacket) i;");
        let casts: Vec<_> =
            unit.root.descendants().filter(|n| n.kind == NodeKind::Cast).filter_map(|n| n.attr()).collect();
        assert_eq!(casts, ["ssize_t", "IndexPacket"]);
        // parenthesized expression is not a cast
        let unit = parse("y = (x) - 1;");
        assert!(unit.root.descendants().all(|n| n.kind != NodeKind::Cast));
    }

    #[test]
    fn declarations_with_typedefs() {
        let unit = parse("typedef double real; void f(real *a, int n) { real t = 0, u; real *p = a; t = u * 2; }");
        let f = &unit.root.children.iter().find(|n| n.kind == NodeKind::FuncDef).unwrap();
        assert_eq!(f.attr(), Some("f"));
        let decls: Vec<_> = f.descendants().filter(|n| n.kind == NodeKind::Decl).filter_map(|n| n.attr()).collect();
        assert_eq!(decls, ["a", "n", "t", "u", "p"]);
    }

    #[test]
    fn tolerant_top_level() {
        let unit = parse("int x;\nint @@@;\n".replace("@@@", "= = ;").as_str());
        assert_eq!(unit.root.children.len(), 1);
        assert_eq!(unit.skipped.len(), 1);
        assert!(parse_unit(&lex("= = ;").unwrap()).is_err());
    }

    #[test]
    fn postfix_unary_attr() {
        let unit = parse("i++; --j;");
        let ops: Vec<_> =
            unit.root.descendants().filter(|n| n.kind == NodeKind::UnaryOp).filter_map(|n| n.attr()).collect();
        assert_eq!(ops, ["p++", "--"]);
    }

    #[test]
    fn switch_and_labels() {
        let unit = parse("void f() { switch (x) { case 1: y = 2; break; default: ; } done: return; }");
        assert!(unit.skipped.is_empty());
        assert!(unit.root.descendants().any(|n| n.kind == NodeKind::If && n.attr() == Some("switch")));
    }

    #[test]
    fn constant_types() {
        let unit = parse("x = 1.5 + 2.0f + 3UL + 'a' + \"s\" \"t\";");
        let consts: Vec<_> =
            unit.root.descendants().filter(|n| n.kind == NodeKind::Constant).filter_map(|n| n.attr()).collect();
        assert_eq!(consts, ["double, 1.5", "float, 2.0f", "unsigned long int, 3UL", "char, 'a'", "string, \"st\""]);
    }
}
