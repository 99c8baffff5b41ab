//! Python lexical tokens, produced by the parser's lexer but tolerant of
//! errors: tokenization stops at the first lexical error and keeps what was
//! read so far.

use rustpython_parser::lexer::lex;
use rustpython_parser::{Mode, Tok};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum TokenKind {
    Name,
    Number,
    String,
    Op,
    Comment,
    Newline,
    /// Line break inside brackets or on a blank/comment line.
    Nl,
    Indent,
    Dedent,
    EndMarker,
}

impl TokenKind {
    /// Whether the token counts toward a token window. Indentation changes
    /// and the end marker carry no text of their own.
    pub fn counted(self) -> bool {
        !matches!(self, TokenKind::Indent | TokenKind::Dedent | TokenKind::EndMarker)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offsets into the tokenized text.
    pub start: usize,
    pub end: usize,
}

impl Token {
    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tokens {
    pub tokens: Vec<Token>,
    /// Byte offset and message of the error that stopped tokenization.
    pub error: Option<(usize, String)>,
}

fn kind_of(tok: &Tok, text: &str) -> TokenKind {
    match tok {
        Tok::Name { .. } => TokenKind::Name,
        Tok::Int { .. } | Tok::Float { .. } | Tok::Complex { .. } => TokenKind::Number,
        Tok::String { .. } => TokenKind::String,
        Tok::Comment(_) => TokenKind::Comment,
        Tok::Newline => TokenKind::Newline,
        Tok::NonLogicalNewline => TokenKind::Nl,
        Tok::Indent => TokenKind::Indent,
        Tok::Dedent => TokenKind::Dedent,
        Tok::EndOfFile => TokenKind::EndMarker,
        _ if !text.is_empty() && text.chars().all(|c| c.is_alphanumeric() || c == '_') => TokenKind::Name,
        _ => TokenKind::Op,
    }
}

pub fn tokenize(source: &str) -> Tokens {
    let mut tokens = Vec::new();
    for item in lex(source, Mode::Module) {
        match item {
            Ok((tok, range)) => {
                let (start, end) = (range.start().to_usize(), range.end().to_usize());
                let kind = kind_of(&tok, &source[start..end]);
                // The lexer closes an unterminated last line with an empty
                // newline; it is not part of the text.
                if start == end && kind.counted() {
                    continue;
                }
                tokens.push(Token { kind, start, end });
            }
            Err(e) => {
                return Tokens { tokens, error: Some((e.location.to_usize(), e.error.to_string())) };
            }
        }
    }
    Tokens { tokens, error: None }
}

/// Number of tokens in `text` that count toward a window.
pub fn count_tokens(text: &str) -> usize {
    tokenize(text).tokens.iter().filter(|t| t.kind.counted()).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_and_texts() {
        let src = "x = f(1, 'a')  # c\n";
        let t = tokenize(src);
        assert!(t.error.is_none());
        let texts: Vec<&str> = t.tokens.iter().filter(|t| t.kind.counted()).map(|t| t.text(src)).collect();
        assert_eq!(texts, ["x", "=", "f", "(", "1", ",", "'a'", ")", "# c", "\n"]);
        assert_eq!(t.tokens[0].kind, TokenKind::Name);
        assert_eq!(t.tokens[4].kind, TokenKind::Number);
        assert_eq!(t.tokens[6].kind, TokenKind::String);
    }

    #[test]
    fn keywords_are_names() {
        let src = "def f():\n    return None\n";
        let t = tokenize(src);
        let kinds: Vec<TokenKind> = t.tokens.iter().map(|t| t.kind).collect();
        assert_eq!(kinds[0], TokenKind::Name);
        assert!(kinds.contains(&TokenKind::Indent));
        assert!(kinds.contains(&TokenKind::Dedent));
    }

    #[test]
    fn stops_at_error_keeping_prefix() {
        let t = tokenize("a = b\nc = 'unterminated\n");
        assert!(t.error.is_some());
        assert!(t.tokens.len() >= 4);
    }

    #[test]
    fn unfinished_prefix_counts() {
        assert_eq!(count_tokens("fw_bc_svm."), 2);
    }
}
