//! Tokenizer shared by the C parser and the annotation parser.

use std::fmt;

#[derive(Clone, Copy, Debug, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

/// Positions never participate in structural equality of ASTs.
impl PartialEq for Span {
    fn eq(&self, _other: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    /// Backslash keyword such as `\at` or `\sum`, stored without the backslash.
    Builtin(String),
    Int(i64),
    /// Contents of a `/*@ ... */` comment.
    Annot(String),
    Punct(&'static str),
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "identifier `{s}`"),
            Tok::Builtin(s) => write!(f, "`\\{s}`"),
            Tok::Int(n) => write!(f, "integer `{n}`"),
            Tok::Annot(_) => write!(f, "annotation"),
            Tok::Punct(p) => write!(f, "`{p}`"),
            Tok::Eof => write!(f, "end of input"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
    /// Byte offset into the lexed text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexError {
    pub span: Span,
    pub offset: usize,
    pub message: String,
}

// Longest first so that maximal munch works by linear scan.
const PUNCTS: &[&str] = &[
    "==>", "<==>", "|->", "->", "<=", ">=", "==", "!=", "&&", "||", "+=", "-=", "*=", "/=", "%=",
    "++", "--", "(", ")", "[", "]", "{", "}", ";", ",", ".", "+", "-", "*", "/", "%", "<", ">",
    "!", "=", "?", ":", "&", "#",
];

pub struct Lexer<'a> {
    src: &'a str,
    pos: usize,
    line: u32,
    col: u32,
    /// In annotation mode `--` and `++` are never produced, and `/*@` is not special.
    annotation_mode: bool,
}

impl<'a> Lexer<'a> {
    pub fn new(src: &'a str) -> Self {
        Lexer {
            src,
            pos: 0,
            line: 1,
            col: 1,
            annotation_mode: false,
        }
    }

    pub fn for_annotation(src: &'a str, start: Span) -> Self {
        Lexer {
            src,
            pos: 0,
            line: start.line.max(1),
            col: start.col.max(1),
            annotation_mode: true,
        }
    }

    fn peek_char(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek_char()?;
        self.pos += c.len_utf8();
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn span(&self) -> Span {
        Span {
            line: self.line,
            col: self.col,
        }
    }

    fn error(&self, message: impl Into<String>) -> LexError {
        LexError {
            span: self.span(),
            offset: self.pos,
            message: message.into(),
        }
    }

    pub fn tokenize(mut self) -> Result<Vec<Token>, LexError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia()?;
            let span = self.span();
            let offset = self.pos;
            let Some(c) = self.peek_char() else {
                out.push(Token {
                    tok: Tok::Eof,
                    span,
                    offset,
                });
                return Ok(out);
            };
            let tok = if !self.annotation_mode && self.src[self.pos..].starts_with("/*@") {
                self.lex_annotation()?
            } else if c.is_ascii_digit() {
                self.lex_int()?
            } else if c.is_ascii_alphabetic() || c == '_' {
                Tok::Ident(self.lex_word())
            } else if c == '\\' {
                self.bump();
                let w = self.lex_word();
                if w.is_empty() {
                    return Err(self.error("expected builtin name after `\\`"));
                }
                Tok::Builtin(w)
            } else {
                self.lex_punct()?
            };
            out.push(Token { tok, span, offset });
        }
    }

    fn skip_trivia(&mut self) -> Result<(), LexError> {
        loop {
            let rest = &self.src[self.pos..];
            if let Some(c) = self.peek_char() {
                if c.is_whitespace() {
                    self.bump();
                    continue;
                }
                // ACSL continuation markers at line start inside annotations.
                if self.annotation_mode && c == '@' {
                    self.bump();
                    continue;
                }
            }
            if rest.starts_with("//") {
                while let Some(c) = self.peek_char() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
                continue;
            }
            if rest.starts_with("/*") && (self.annotation_mode || !rest.starts_with("/*@")) {
                self.bump();
                self.bump();
                loop {
                    if self.src[self.pos..].starts_with("*/") {
                        self.bump();
                        self.bump();
                        break;
                    }
                    if self.bump().is_none() {
                        return Err(self.error("unterminated comment"));
                    }
                }
                continue;
            }
            return Ok(());
        }
    }

    fn lex_annotation(&mut self) -> Result<Tok, LexError> {
        for _ in 0..3 {
            self.bump();
        }
        let start = self.pos;
        loop {
            if self.src[self.pos..].starts_with("*/") {
                let body = self.src[start..self.pos].to_string();
                self.bump();
                self.bump();
                return Ok(Tok::Annot(body));
            }
            if self.bump().is_none() {
                return Err(self.error("unterminated annotation"));
            }
        }
    }

    fn lex_int(&mut self) -> Result<Tok, LexError> {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if c.is_ascii_digit() {
                self.bump();
            } else {
                break;
            }
        }
        let text = &self.src[start..self.pos];
        if let Some(c) = self.peek_char() {
            if c.is_ascii_alphabetic() || c == '_' {
                return Err(self.error(format!("malformed integer literal `{text}{c}`")));
            }
        }
        text.parse::<i64>()
            .map(Tok::Int)
            .map_err(|_| self.error(format!("integer literal `{text}` out of range")))
    }

    fn lex_word(&mut self) -> String {
        let start = self.pos;
        while let Some(c) = self.peek_char() {
            if c.is_ascii_alphanumeric() || c == '_' {
                self.bump();
            } else {
                break;
            }
        }
        self.src[start..self.pos].to_string()
    }

    fn lex_punct(&mut self) -> Result<Tok, LexError> {
        let rest = &self.src[self.pos..];
        for p in PUNCTS {
            if rest.starts_with(p) {
                if self.annotation_mode && (*p == "++" || *p == "--") {
                    continue;
                }
                for _ in 0..p.chars().count() {
                    self.bump();
                }
                return Ok(Tok::Punct(p));
            }
        }
        let c = self.peek_char().unwrap_or(' ');
        Err(self.error(format!("unexpected character `{c}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<Tok> {
        Lexer::new(s)
            .tokenize()
            .unwrap()
            .into_iter()
            .map(|t| t.tok)
            .collect()
    }

    #[test]
    fn annotation_is_single_token() {
        let t = toks("int x; /*@ assert x == 1; */ // tail\n");
        assert!(matches!(&t[3], Tok::Annot(s) if s.contains("assert")));
        assert_eq!(t.last(), Some(&Tok::Eof));
    }

    #[test]
    fn annotation_mode_never_emits_decrement() {
        let t = Lexer::for_annotation("x - -3", Span::default())
            .tokenize()
            .unwrap();
        assert_eq!(t[1].tok, Tok::Punct("-"));
        assert_eq!(t[2].tok, Tok::Punct("-"));
    }

    #[test]
    fn builtins_and_arrows() {
        let t = toks(r"\at(p, Pre)->len |-> ==>");
        assert_eq!(t[0], Tok::Builtin("at".into()));
        assert!(t.contains(&Tok::Punct("->")));
        assert!(t.contains(&Tok::Punct("|->")));
        assert!(t.contains(&Tok::Punct("==>")));
    }
}
