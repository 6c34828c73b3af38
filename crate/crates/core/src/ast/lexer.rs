//! Indentation-aware tokenizer for Python 3 source.

use super::span::{Pos, Span};
use super::SyntaxError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Name,
    Keyword,
    Number,
    String,
    Op,
    Newline,
    Indent,
    Dedent,
    EndMarker,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
}

impl Token {
    pub fn is_op(&self, op: &str) -> bool {
        self.kind == TokenKind::Op && self.text == op
    }

    pub fn is_keyword(&self, kw: &str) -> bool {
        self.kind == TokenKind::Keyword && self.text == kw
    }
}

pub const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue", "def", "del",
    "elif", "else", "except", "finally", "for", "from", "global", "if", "import", "in", "is", "lambda", "nonlocal",
    "not", "or", "pass", "raise", "return", "try", "while", "with", "yield",
];

// Longest first so that greedy matching picks `**=` over `**` over `*`.
const OPERATORS: &[&str] = &[
    "**=", "//=", ">>=", "<<=", "...", "->", ":=", "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "+=", "-=", "*=",
    "/=", "%=", "&=", "|=", "^=", "@=", "+", "-", "*", "/", "%", "@", "&", "|", "^", "~", "<", ">", "(", ")", "[", "]",
    "{", "}", ",", ":", ".", ";", "=",
];

const STRING_PREFIXES: &[&str] = &["r", "u", "b", "f", "br", "rb", "fr", "rf"];

pub fn tokenize(source: &str) -> Result<Vec<Token>, SyntaxError> {
    Lexer::new(source, Pos::START, Mode::Module).run()
}

/// Tokenizes without ever failing: bad characters are skipped and
/// indentation or bracket problems are ignored.
pub fn tokenize_lenient(source: &str) -> Vec<Token> {
    Lexer::new(source, Pos::START, Mode::Lenient).run().expect("lenient lexing does not fail")
}

/// Tokenizes an embedded expression (an f-string replacement field) that
/// starts at `start` in the enclosing file. Newlines are insignificant.
pub(crate) fn tokenize_embedded(fragment: &str, start: Pos) -> Result<Vec<Token>, SyntaxError> {
    Lexer::new(fragment, start, Mode::Embedded).run()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Mode {
    Module,
    Lenient,
    Embedded,
}

struct Lexer<'a> {
    src: &'a str,
    // Offset of `src` within the enclosing file.
    base: usize,
    pos: Pos,
    mode: Mode,
    tokens: Vec<Token>,
    indents: Vec<usize>,
    brackets: Vec<(char, Pos)>,
    at_line_start: bool,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str, start: Pos, mode: Mode) -> Self {
        Lexer {
            src,
            base: start.offset,
            pos: start,
            mode,
            tokens: Vec::new(),
            indents: vec![0],
            brackets: Vec::new(),
            at_line_start: mode != Mode::Embedded,
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos.offset - self.base..]
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn peek_at(&self, n: usize) -> Option<char> {
        self.rest().chars().nth(n)
    }

    fn bump(&mut self) -> Option<char> {
        let ch = self.peek()?;
        let mut buf = [0u8; 4];
        self.pos = self.pos.advance(ch.encode_utf8(&mut buf));
        Some(ch)
    }

    fn error(&self, message: impl Into<String>, at: Pos) -> SyntaxError {
        SyntaxError { message: message.into(), line: at.line, col: at.col }
    }

    fn push(&mut self, kind: TokenKind, start: Pos) {
        let text = self.src[start.offset - self.base..self.pos.offset - self.base].to_string();
        self.tokens.push(Token { kind, text, span: Span::new(start, self.pos) });
    }

    fn push_empty(&mut self, kind: TokenKind) {
        self.tokens.push(Token { kind, text: String::new(), span: Span::new(self.pos, self.pos) });
    }

    fn lenient(&self) -> bool {
        self.mode == Mode::Lenient
    }

    fn run(mut self) -> Result<Vec<Token>, SyntaxError> {
        loop {
            if self.at_line_start && self.brackets.is_empty() && !self.line_start()? {
                break;
            }
            while matches!(self.peek(), Some(' ' | '\t' | '\x0c')) {
                self.bump();
            }
            let Some(ch) = self.peek() else { break };
            let start = self.pos;
            match ch {
                '#' => {
                    while !matches!(self.peek(), None | Some('\n' | '\r')) {
                        self.bump();
                    }
                }
                '\n' | '\r' => {
                    self.bump();
                    if ch == '\r' && self.peek() == Some('\n') {
                        self.bump();
                    }
                    if self.brackets.is_empty() && self.mode != Mode::Embedded {
                        self.push(TokenKind::Newline, start);
                        self.at_line_start = true;
                    }
                }
                '\\' => {
                    self.bump();
                    match self.peek() {
                        Some('\n') => {
                            self.bump();
                        }
                        Some('\r') => {
                            self.bump();
                            if self.peek() == Some('\n') {
                                self.bump();
                            }
                        }
                        None => {}
                        _ if self.lenient() => {}
                        _ => return Err(self.error("unexpected character after line continuation character", start)),
                    }
                }
                c if c == '_' || c.is_alphabetic() => self.name_or_string(start)?,
                c if c.is_ascii_digit() => self.number(start),
                '.' if self.peek_at(1).is_some_and(|c| c.is_ascii_digit()) => self.number(start),
                '"' | '\'' => self.string(start)?,
                _ => self.operator(start)?,
            }
        }
        self.finish()
    }

    /// Handles indentation at the start of a logical line. Returns false at EOF.
    fn line_start(&mut self) -> Result<bool, SyntaxError> {
        loop {
            let mut width = 0usize;
            while let Some(c) = self.peek() {
                match c {
                    ' ' => width += 1,
                    '\t' => width = (width / 8 + 1) * 8,
                    '\x0c' => width = 0,
                    _ => break,
                }
                self.bump();
            }
            match self.peek() {
                None => return Ok(false),
                Some('#') => {
                    while !matches!(self.peek(), None | Some('\n' | '\r')) {
                        self.bump();
                    }
                    self.skip_newline();
                }
                Some('\n' | '\r') => self.skip_newline(),
                Some(_) => {
                    self.at_line_start = false;
                    let top = *self.indents.last().expect("indent stack never empty");
                    if width > top {
                        self.indents.push(width);
                        self.push_empty(TokenKind::Indent);
                    } else if width < top {
                        while *self.indents.last().unwrap() > width {
                            self.indents.pop();
                            self.push_empty(TokenKind::Dedent);
                        }
                        if *self.indents.last().unwrap() != width {
                            if self.lenient() {
                                self.indents.push(width);
                            } else {
                                return Err(self.error("unindent does not match any outer indentation level", self.pos));
                            }
                        }
                    }
                    return Ok(true);
                }
            }
        }
    }

    fn skip_newline(&mut self) {
        if self.peek() == Some('\r') {
            self.bump();
        }
        if self.peek() == Some('\n') {
            self.bump();
        }
    }

    fn name_or_string(&mut self, start: Pos) -> Result<(), SyntaxError> {
        while self.peek().is_some_and(|c| c == '_' || c.is_alphanumeric()) {
            self.bump();
        }
        let word = &self.src[start.offset - self.base..self.pos.offset - self.base];
        if matches!(self.peek(), Some('"' | '\'')) && STRING_PREFIXES.contains(&word.to_ascii_lowercase().as_str()) {
            return self.string(start);
        }
        let kind = if KEYWORDS.contains(&word) { TokenKind::Keyword } else { TokenKind::Name };
        self.push(kind, start);
        Ok(())
    }

    fn number(&mut self, start: Pos) {
        let radix_prefix =
            self.peek() == Some('0') && matches!(self.peek_at(1), Some('x' | 'X' | 'o' | 'O' | 'b' | 'B'));
        if radix_prefix {
            self.bump();
            self.bump();
            while self.peek().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.bump();
            }
        } else {
            self.digits();
            if self.peek() == Some('.') {
                self.bump();
                self.digits();
            }
            if matches!(self.peek(), Some('e' | 'E')) {
                let sign = matches!(self.peek_at(1), Some('+' | '-'));
                let digit_at = if sign { 2 } else { 1 };
                if self.peek_at(digit_at).is_some_and(|c| c.is_ascii_digit()) {
                    self.bump();
                    if sign {
                        self.bump();
                    }
                    self.digits();
                }
            }
            if matches!(self.peek(), Some('j' | 'J')) {
                self.bump();
            }
        }
        self.push(TokenKind::Number, start);
    }

    fn digits(&mut self) {
        while self.peek().is_some_and(|c| c.is_ascii_digit() || c == '_') {
            self.bump();
        }
    }

    // Backslashes escape the next character in raw strings too, as far as
    // finding the closing quote goes.
    fn string(&mut self, start: Pos) -> Result<(), SyntaxError> {
        let quote = self.bump().expect("caller saw a quote");
        let triple = self.peek() == Some(quote) && self.peek_at(1) == Some(quote);
        if triple {
            self.bump();
            self.bump();
        }
        loop {
            match self.peek() {
                None => {
                    if self.lenient() {
                        break;
                    }
                    let msg = if triple {
                        "unterminated triple-quoted string literal"
                    } else {
                        "unterminated string literal"
                    };
                    return Err(self.error(msg, start));
                }
                Some('\\') => {
                    self.bump();
                    self.bump();
                }
                Some('\n' | '\r') if !triple => {
                    if self.lenient() {
                        break;
                    }
                    return Err(self.error("unterminated string literal", start));
                }
                Some(c) if c == quote => {
                    self.bump();
                    if !triple {
                        break;
                    }
                    if self.peek() == Some(quote) && self.peek_at(1) == Some(quote) {
                        self.bump();
                        self.bump();
                        break;
                    }
                }
                Some(_) => {
                    self.bump();
                }
            }
        }
        self.push(TokenKind::String, start);
        Ok(())
    }

    fn operator(&mut self, start: Pos) -> Result<(), SyntaxError> {
        let rest = self.rest();
        let Some(op) = OPERATORS.iter().find(|op| rest.starts_with(**op)) else {
            if self.lenient() {
                self.bump();
                return Ok(());
            }
            let ch = self.peek().unwrap_or('?');
            return Err(self.error(format!("invalid character '{ch}'"), start));
        };
        for _ in 0..op.len() {
            self.bump();
        }
        match *op {
            "(" | "[" | "{" => self.brackets.push((op.chars().next().unwrap(), start)),
            ")" | "]" | "}" => {
                let expected = match *op {
                    ")" => '(',
                    "]" => '[',
                    _ => '{',
                };
                match self.brackets.last() {
                    Some((open, _)) if *open == expected => {
                        self.brackets.pop();
                    }
                    _ if self.lenient() => {
                        self.brackets.pop();
                    }
                    Some((open, _)) => {
                        return Err(self.error(
                            format!("closing parenthesis '{op}' does not match opening parenthesis '{open}'"),
                            start,
                        ))
                    }
                    None => return Err(self.error(format!("unmatched '{op}'"), start)),
                }
            }
            _ => {}
        }
        self.push(TokenKind::Op, start);
        Ok(())
    }

    fn finish(mut self) -> Result<Vec<Token>, SyntaxError> {
        if let Some((open, at)) = self.brackets.first().copied() {
            if !self.lenient() {
                return Err(self.error(format!("'{open}' was never closed"), at));
            }
        }
        if self.mode != Mode::Embedded {
            let needs_newline =
                self.tokens.last().is_some_and(|t| !matches!(t.kind, TokenKind::Newline | TokenKind::Dedent));
            if needs_newline {
                self.push_empty(TokenKind::Newline);
            }
            while self.indents.len() > 1 {
                self.indents.pop();
                self.push_empty(TokenKind::Dedent);
            }
        }
        self.push_empty(TokenKind::EndMarker);
        Ok(self.tokens)
    }
}
