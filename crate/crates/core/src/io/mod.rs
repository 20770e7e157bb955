//! Plain-text file formats: measurement logs, map snapshots, run configs.

pub mod config;
pub mod log;
pub mod snapshot;

use std::str::{FromStr, SplitAsciiWhitespace};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl FormatError {
    pub(crate) fn at(line: usize, message: String) -> Self {
        FormatError::Parse { line, message }
    }
}

pub(crate) fn check_header(line: &str, magic: &str, version: u32, line_no: usize) -> Result<(), FormatError> {
    let mut tok = Tokens::new(line, line_no);
    tok.keyword(magic)?;
    let v = tok.parse::<u32>("version")?;
    if v != version {
        return Err(tok.error(format!("unsupported {magic} version {v}, expected {version}")));
    }
    tok.finish()
}

/// Whitespace tokenizer that reports the line and field on failure.
pub(crate) struct Tokens<'a> {
    iter: SplitAsciiWhitespace<'a>,
    line: usize,
}

impl<'a> Tokens<'a> {
    pub(crate) fn new(text: &'a str, line: usize) -> Self {
        Tokens {
            iter: text.split_ascii_whitespace(),
            line,
        }
    }

    pub(crate) fn error(&self, message: String) -> FormatError {
        FormatError::at(self.line, message)
    }

    pub(crate) fn next(&mut self, field: &str) -> Result<&'a str, FormatError> {
        self.iter
            .next()
            .ok_or_else(|| self.error(format!("missing field '{field}'")))
    }

    pub(crate) fn parse<T: FromStr>(&mut self, field: &str) -> Result<T, FormatError> {
        let s = self.next(field)?;
        s.parse()
            .map_err(|_| self.error(format!("field '{field}': cannot parse '{s}'")))
    }

    pub(crate) fn f64(&mut self, field: &str) -> Result<f64, FormatError> {
        let v: f64 = self.parse(field)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(format!("field '{field}' is not finite")))
        }
    }

    pub(crate) fn usize(&mut self, field: &str) -> Result<usize, FormatError> {
        self.parse(field)
    }

    pub(crate) fn keyword(&mut self, word: &str) -> Result<(), FormatError> {
        let s = self.next(word)?;
        if s == word {
            Ok(())
        } else {
            Err(self.error(format!("expected '{word}', found '{s}'")))
        }
    }

    pub(crate) fn finish(mut self) -> Result<(), FormatError> {
        match self.iter.next() {
            None => Ok(()),
            Some(extra) => Err(self.error(format!("unexpected trailing field '{extra}'"))),
        }
    }
}
