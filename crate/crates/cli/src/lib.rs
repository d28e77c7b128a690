//! Batch statistics and verification campaigns behind the `braids` binary.

use std::path::Path;

use rayon::prelude::*;

use csp_braids::sudoku::{parse_grid, Grid, ParseError};

pub mod campaign;
pub mod report;

/// One non-comment line of a puzzle file.
#[derive(Debug)]
pub struct CorpusEntry {
    /// 1-based line number in the source file.
    pub line: usize,
    pub text: String,
    pub grid: Result<Grid, ParseError>,
}

/// Reads a puzzle file: one 81-character grid per line, `#` comments and
/// blank lines ignored.
pub fn read_corpus(path: &Path) -> std::io::Result<Vec<CorpusEntry>> {
    Ok(parse_corpus(&std::fs::read_to_string(path)?))
}

pub fn parse_corpus(text: &str) -> Vec<CorpusEntry> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| CorpusEntry {
            line: i + 1,
            text: l.trim().to_string(),
            grid: parse_grid(l),
        })
        .collect()
}

/// The bundled corpus of minimal puzzles.
pub fn bundled_corpus() -> Vec<Grid> {
    parse_corpus(csp_braids::sudoku::BUNDLED_CORPUS)
        .into_iter()
        .map(|e| e.grid.expect("bundled corpus parses"))
        .collect()
}

/// Maps `f` over `items` in parallel, keeping input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}
