//! C frontend: lexer, tolerant parser and loop extraction.

pub mod ast;
pub mod extract;
pub mod lexer;
pub mod parser;

pub use ast::{AstNode, NodeId, NodeKind, PragmaAttachment, Span};
pub use extract::{extract_loops, ExtractedLoop};
pub use lexer::{lex, LexError, Token, TokenKind};
pub use parser::{parse_unit, ParseError, ParsedUnit, SyntaxError};

use thiserror::Error;

/// Either stage of the frontend failing on a source text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontendError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Lexes and parses a source text.
pub fn parse_source(source: &str) -> Result<ParsedUnit, FrontendError> {
    let tokens = lex(source)?;
    Ok(parse_unit(&tokens)?)
}
