//! Tokenizer for the C subset handled by the frontend.
//!
//! Comments are stripped, `#pragma` lines survive as a single
//! [`TokenKind::PragmaLine`] token (with backslash continuations joined and
//! whitespace collapsed), and every other preprocessor line is dropped.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    Identifier,
    Keyword,
    IntLiteral,
    FloatLiteral,
    CharLiteral,
    StringLiteral,
    Operator,
    Punctuation,
    PragmaLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    pub lexeme: String,
    pub kind: TokenKind,
    /// 1-based.
    pub line: u32,
    /// 1-based, counted in characters.
    pub column: u32,
    /// Byte offset of the first character in the source.
    pub offset: usize,
    /// Byte offset one past the last character in the source.
    pub end: usize,
}

impl Token {
    pub fn is(&self, lexeme: &str) -> bool {
        self.lexeme == lexeme
    }

    pub fn is_identifier(&self) -> bool {
        self.kind == TokenKind::Identifier
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.lexeme)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LexError {
    #[error("unterminated string literal at {line}:{column}")]
    UnterminatedString { line: u32, column: u32 },
    #[error("unterminated comment at {line}:{column}")]
    UnterminatedComment { line: u32, column: u32 },
    #[error("illegal character {ch:?} at {line}:{column}")]
    IllegalCharacter { ch: char, line: u32, column: u32 },
}

pub const KEYWORDS: &[&str] = &[
    "auto",
    "break",
    "case",
    "char",
    "const",
    "continue",
    "default",
    "do",
    "double",
    "else",
    "enum",
    "extern",
    "float",
    "for",
    "goto",
    "if",
    "inline",
    "int",
    "long",
    "register",
    "restrict",
    "return",
    "short",
    "signed",
    "sizeof",
    "static",
    "struct",
    "switch",
    "typedef",
    "union",
    "unsigned",
    "void",
    "volatile",
    "while",
    "_Bool",
    "_Complex",
    "_Imaginary",
    "__restrict",
    "__restrict__",
    "__inline",
    "__inline__",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.contains(&word)
}

// Longest match first.
const OPERATORS: &[&str] = &[
    "...", "<<=", ">>=", "->", "++", "--", "<<", ">>", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=",
    "%=", "&=", "^=", "|=", "+", "-", "*", "/", "%", "<", ">", "=", "!", "&", "|", "^", "~", "?", ":", ".",
];

const PUNCTUATION: &[char] = &['(', ')', '[', ']', '{', '}', ';', ','];

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    column: u32,
    /// True until a non-whitespace character is seen on the current line.
    at_line_start: bool,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.src[self.pos..].chars().nth(n)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        self.pos += ch.len_utf8();
        if ch == '\n' {
            self.line += 1;
            self.column = 1;
            self.at_line_start = true;
        } else {
            self.column += 1;
        }
        Some(ch)
    }

    /// Skips a backslash-newline pair if one starts at the cursor.
    fn skip_continuation(&mut self) -> bool {
        let rest = self.rest();
        if rest.starts_with("\\\n") {
            self.bump();
            self.bump();
            true
        } else if rest.starts_with("\\\r\n") {
            self.bump();
            self.bump();
            self.bump();
            true
        } else {
            false
        }
    }
}

/// Tokenizes C source text.
pub fn lex(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor { src: source, pos: 0, line: 1, column: 1, at_line_start: true };
    let mut tokens = Vec::new();

    while let Some(ch) = cur.peek() {
        if cur.skip_continuation() {
            continue;
        }
        if ch.is_whitespace() {
            cur.bump();
            continue;
        }
        let (line, column, start) = (cur.line, cur.column, cur.pos);

        if ch == '/' && cur.peek_at(1) == Some('/') {
            while let Some(c) = cur.peek() {
                if cur.skip_continuation() {
                    continue;
                }
                if c == '\n' {
                    break;
                }
                cur.bump();
            }
            continue;
        }
        if ch == '/' && cur.peek_at(1) == Some('*') {
            cur.bump();
            cur.bump();
            let was_line_start = cur.at_line_start;
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(LexError::UnterminatedComment { line, column });
                }
            }
            // A comment does not end the "start of line" state for directives.
            cur.at_line_start = cur.at_line_start || was_line_start;
            continue;
        }

        if ch == '#' && cur.at_line_start {
            let text = directive_line(&mut cur)?;
            if let Some(pragma) = normalize_pragma(&text) {
                tokens.push(Token {
                    lexeme: pragma,
                    kind: TokenKind::PragmaLine,
                    line,
                    column,
                    offset: start,
                    end: cur.pos,
                });
            }
            continue;
        }
        cur.at_line_start = false;

        let kind = if ch.is_ascii_alphabetic() || ch == '_' || ch == '$' {
            while matches!(cur.peek(), Some(c) if c.is_ascii_alphanumeric() || c == '_' || c == '$') {
                cur.bump();
            }
            // Wide/unicode string and char prefixes: L"..", u8"..", U'..'.
            let word = &source[start..cur.pos];
            if matches!(word, "L" | "u" | "U" | "u8") && matches!(cur.peek(), Some('"') | Some('\'')) {
                let quote = cur.peek().unwrap();
                quoted(&mut cur, quote, line, column)?;
                if quote == '"' {
                    TokenKind::StringLiteral
                } else {
                    TokenKind::CharLiteral
                }
            } else if is_keyword(word) {
                TokenKind::Keyword
            } else {
                TokenKind::Identifier
            }
        } else if ch.is_ascii_digit() || (ch == '.' && matches!(cur.peek_at(1), Some(c) if c.is_ascii_digit())) {
            number(&mut cur)
        } else if ch == '"' || ch == '\'' {
            quoted(&mut cur, ch, line, column)?;
            if ch == '"' {
                TokenKind::StringLiteral
            } else {
                TokenKind::CharLiteral
            }
        } else if PUNCTUATION.contains(&ch) {
            cur.bump();
            TokenKind::Punctuation
        } else if let Some(op) = OPERATORS.iter().find(|op| cur.rest().starts_with(**op)) {
            for _ in 0..op.len() {
                cur.bump();
            }
            if *op == "..." {
                TokenKind::Punctuation
            } else {
                TokenKind::Operator
            }
        } else {
            return Err(LexError::IllegalCharacter { ch, line, column });
        };

        tokens.push(Token {
            lexeme: source[start..cur.pos].to_string(),
            kind,
            line,
            column,
            offset: start,
            end: cur.pos,
        });
    }
    Ok(tokens)
}

fn number(cur: &mut Cursor<'_>) -> TokenKind {
    let mut is_float = false;
    let hex = cur.rest().starts_with("0x") || cur.rest().starts_with("0X");
    if hex {
        cur.bump();
        cur.bump();
    }
    loop {
        match cur.peek() {
            Some(c) if c.is_ascii_hexdigit() && hex => {
                cur.bump();
            }
            Some(c) if c.is_ascii_digit() => {
                cur.bump();
            }
            Some('.') => {
                is_float = true;
                cur.bump();
            }
            Some('e' | 'E') if !hex => {
                is_float = true;
                cur.bump();
                if matches!(cur.peek(), Some('+' | '-')) {
                    cur.bump();
                }
            }
            Some('p' | 'P') if hex => {
                is_float = true;
                cur.bump();
                if matches!(cur.peek(), Some('+' | '-')) {
                    cur.bump();
                }
            }
            Some(c) if c.is_ascii_alphabetic() || c == '_' => {
                // suffixes (u, l, f, ...)
                cur.bump();
            }
            _ => break,
        }
    }
    if is_float {
        TokenKind::FloatLiteral
    } else {
        TokenKind::IntLiteral
    }
}

fn quoted(cur: &mut Cursor<'_>, quote: char, line: u32, column: u32) -> Result<(), LexError> {
    cur.bump();
    loop {
        if cur.skip_continuation() {
            continue;
        }
        match cur.bump() {
            None | Some('\n') => return Err(LexError::UnterminatedString { line, column }),
            Some('\\') => {
                if cur.peek().is_none() {
                    return Err(LexError::UnterminatedString { line, column });
                }
                cur.bump();
            }
            Some(c) if c == quote => return Ok(()),
            Some(_) => {}
        }
    }
}

/// Consumes a preprocessor line (including continuations) and returns its text.
fn directive_line(cur: &mut Cursor<'_>) -> Result<String, LexError> {
    let mut text = String::new();
    while let Some(c) = cur.peek() {
        if cur.skip_continuation() {
            text.push(' ');
            continue;
        }
        if c == '\n' {
            break;
        }
        if cur.rest().starts_with("/*") {
            let (line, column) = (cur.line, cur.column);
            cur.bump();
            cur.bump();
            loop {
                if cur.rest().starts_with("*/") {
                    cur.bump();
                    cur.bump();
                    break;
                }
                if cur.bump().is_none() {
                    return Err(LexError::UnterminatedComment { line, column });
                }
            }
            text.push(' ');
            continue;
        }
        if cur.rest().starts_with("//") {
            while matches!(cur.peek(), Some(c) if c != '\n') {
                if cur.skip_continuation() {
                    continue;
                }
                cur.bump();
            }
            break;
        }
        text.push(c);
        cur.bump();
    }
    Ok(text)
}

/// Returns the canonical `#pragma ...` text, or `None` for other directives.
fn normalize_pragma(line: &str) -> Option<String> {
    let body = line.trim_start().strip_prefix('#')?.trim_start();
    let rest = body.strip_prefix("pragma")?;
    if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
        return None;
    }
    let mut out = String::from("#pragma");
    for word in rest.split_whitespace() {
        out.push(' ');
        out.push_str(word);
    }
    Some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lexemes(src: &str) -> Vec<String> {
        lex(src).unwrap().into_iter().map(|t| t.lexeme).collect()
    }

    #[test]
    fn loop_header() {
        let toks = lex("for (i = 0; i <= N; i++)").unwrap();
        let got: Vec<_> = toks.iter().map(|t| (t.lexeme.as_str(), t.kind)).collect();
        use TokenKind::*;
        assert_eq!(
            got,
            vec![
                ("for", Keyword),
                ("(", Punctuation),
                ("i", Identifier),
                ("=", Operator),
                ("0", IntLiteral),
                (";", Punctuation),
                ("i", Identifier),
                ("<=", Operator),
                ("N", Identifier),
                (";", Punctuation),
                ("i", Identifier),
                ("++", Operator),
                (")", Punctuation),
            ]
        );
        assert_eq!((toks[2].line, toks[2].column), (1, 6));
    }

    #[test]
    fn empty_source() {
        assert!(lex("").unwrap().is_empty());
    }

    #[test]
    fn continued_pragma_is_one_token() {
        let toks = lex("#pragma omp parallel for \\\n  private(j)\nfor(;;);").unwrap();
        assert_eq!(toks[0].kind, TokenKind::PragmaLine);
        assert_eq!(toks[0].lexeme, "#pragma omp parallel for private(j)");
        assert_eq!(toks[1].lexeme, "for");
        assert_eq!(toks[1].line, 3);
    }

    #[test]
    fn comments_and_includes_dropped() {
        let src = "#include <stdio.h>\n/* c */ int x; // trailing\n  #define N 10\nx = N;";
        assert_eq!(lexemes(src), ["int", "x", ";", "x", "=", "N", ";"]);
    }

    #[test]
    fn hash_after_code_is_illegal() {
        assert!(matches!(lex("x # y"), Err(LexError::IllegalCharacter { ch: '#', .. })));
    }

    #[test]
    fn literals() {
        let toks = lex(r#"1.5e-3f 0x1F 10UL 'a' '\n' "a \"b\"" .5"#).unwrap();
        let kinds: Vec<_> = toks.iter().map(|t| t.kind).collect();
        use TokenKind::*;
        assert_eq!(
            kinds,
            [FloatLiteral, IntLiteral, IntLiteral, CharLiteral, CharLiteral, StringLiteral, FloatLiteral]
        );
        assert_eq!(toks[5].lexeme, r#""a \"b\"""#);
    }

    #[test]
    fn error_positions() {
        assert_eq!(lex("int x;\n  \"abc\n").unwrap_err(), LexError::UnterminatedString { line: 2, column: 3 });
        assert_eq!(lex("a /* b").unwrap_err(), LexError::UnterminatedComment { line: 1, column: 3 });
        assert_eq!(lex("a @ b").unwrap_err(), LexError::IllegalCharacter { ch: '@', line: 1, column: 3 });
    }

    #[test]
    fn operators_longest_match() {
        assert_eq!(lexemes("a<<=b->c...d"), ["a", "<<=", "b", "->", "c", "...", "d"]);
    }

    #[test]
    fn spaced_pragma_is_normalized() {
        assert_eq!(lexemes("  #  pragma   omp  for\n"), ["#pragma omp for"]);
    }
}
