//! Source positions.
//!
//! Lines and columns are 1-based. Columns count bytes within the line, and
//! the end position is exclusive, so `x = 1` on line 3 spans `3:1..3:6`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Position {
    pub line: u32,
    pub col: u32,
}

impl Position {
    pub const fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SourceSpan {
    pub file: Arc<str>,
    pub start_line: u32,
    pub start_col: u32,
    pub end_line: u32,
    pub end_col: u32,
}

impl SourceSpan {
    pub fn new(file: Arc<str>, start: Position, end: Position) -> Self {
        Self {
            file,
            start_line: start.line,
            start_col: start.col,
            end_line: end.line,
            end_col: end.col,
        }
    }

    pub fn start(&self) -> Position {
        Position::new(self.start_line, self.start_col)
    }

    pub fn end(&self) -> Position {
        Position::new(self.end_line, self.end_col)
    }

    /// True when `other` lies within `self` (same file, non-strict).
    pub fn contains(&self, other: &SourceSpan) -> bool {
        self.file == other.file && self.start() <= other.start() && other.end() <= self.end()
    }

    /// Containment that excludes equal spans.
    pub fn strictly_contains(&self, other: &SourceSpan) -> bool {
        self.contains(other) && self != other
    }

    /// Smallest span covering both.
    pub fn cover(&self, other: &SourceSpan) -> SourceSpan {
        SourceSpan::new(
            self.file.clone(),
            self.start().min(other.start()),
            self.end().max(other.end()),
        )
    }
}

impl fmt::Display for SourceSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}-{}", self.file, self.start(), self.end())
    }
}

/// Maps byte offsets to line/column positions and back.
#[derive(Debug, Clone)]
pub struct LineIndex {
    line_starts: Vec<usize>,
    len: usize,
}

impl LineIndex {
    pub fn new(text: &str) -> Self {
        let mut line_starts = vec![0];
        for (i, b) in text.bytes().enumerate() {
            if b == b'\n' {
                line_starts.push(i + 1);
            }
        }
        Self { line_starts, len: text.len() }
    }

    pub fn line_count(&self) -> usize {
        self.line_starts.len()
    }

    pub fn position(&self, offset: usize) -> Position {
        let offset = offset.min(self.len);
        let line = match self.line_starts.binary_search(&offset) {
            Ok(i) => i,
            Err(i) => i - 1,
        };
        Position::new(line as u32 + 1, (offset - self.line_starts[line]) as u32 + 1)
    }

    /// Byte offset of a position, or `None` when it falls outside the text.
    pub fn offset(&self, pos: Position) -> Option<usize> {
        if pos.line == 0 || pos.col == 0 {
            return None;
        }
        let start = *self.line_starts.get(pos.line as usize - 1)?;
        let line_end = self
            .line_starts
            .get(pos.line as usize)
            .map(|next| next - 1)
            .unwrap_or(self.len);
        let off = start + pos.col as usize - 1;
        (off <= line_end.max(start)).then_some(off)
    }

    pub fn line_start(&self, line: u32) -> Option<usize> {
        self.line_starts.get(line.checked_sub(1)? as usize).copied()
    }

    /// Text of a 1-based line without its terminator.
    pub fn line_text<'a>(&self, text: &'a str, line: u32) -> Option<&'a str> {
        let start = self.line_start(line)?;
        let end = self
            .line_starts
            .get(line as usize)
            .map(|next| next - 1)
            .unwrap_or(self.len);
        text.get(start..end).map(|l| l.strip_suffix('\r').unwrap_or(l))
    }

    /// Source text covered by `span`, if the span lies inside `text`.
    pub fn slice<'a>(&self, text: &'a str, span: &SourceSpan) -> Option<&'a str> {
        let start = self.offset(span.start())?;
        let end = self.offset(span.end())?;
        text.get(start..end)
    }
}
