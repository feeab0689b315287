//! Bag-of-words code vectors: reserved words, preprocessor directives and
//! called identifiers, counted per artifact over a shared vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use designloop::DesignRecord;

use crate::{AnalysisError, Result};

const C_KEYWORDS: &[&str] = &[
    "_Alignas", "_Alignof", "_Atomic", "_Bool", "_Complex", "_Generic", "_Imaginary", "_Noreturn",
    "_Static_assert", "_Thread_local", "auto", "break", "case", "char", "const", "continue", "default", "do",
    "double", "else", "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef", "union",
    "unsigned", "void", "volatile", "while",
];

const CUDA_QUALIFIERS: &[&str] = &[
    "__constant__", "__device__", "__forceinline__", "__global__", "__host__", "__launch_bounds__",
    "__managed__", "__noinline__", "__restrict__", "__shared__",
];

fn is_keyword(word: &str) -> bool {
    C_KEYWORDS.binary_search(&word).is_ok() || CUDA_QUALIFIERS.binary_search(&word).is_ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeVector {
    /// Keyword counts, aligned with the corpus vocabulary.
    pub values: Vec<f64>,
    pub source_iteration: Option<u32>,
    /// Set when the artifact could not be lexed and raw words were counted.
    pub lexical_fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    /// Sorted union of the keywords of all artifacts.
    pub vocabulary: Vec<String>,
    pub vectors: Vec<CodeVector>,
}

impl Corpus {
    pub fn points(&self) -> Vec<Vec<f64>> {
        self.vectors.iter().map(|v| v.values.clone()).collect()
    }

    /// Vectors for every record that carries code.
    pub fn from_records(records: &[DesignRecord]) -> Result<Self> {
        let with_code: Vec<&DesignRecord> = records.iter().filter(|r| r.has_code()).collect();
        if with_code.is_empty() {
            return Err(AnalysisError::Undefined("no iteration produced code".into()));
        }
        let texts: Vec<&str> = with_code.iter().map(|r| r.artifact.as_deref().unwrap_or("")).collect();
        let mut corpus = vectorize_corpus(&texts)?;
        for (v, r) in corpus.vectors.iter_mut().zip(&with_code) {
            v.source_iteration = Some(r.iteration);
        }
        Ok(corpus)
    }

    pub fn by_iteration(&self, iteration: u32) -> Option<&CodeVector> {
        self.vectors.iter().find(|v| v.source_iteration == Some(iteration))
    }
}

#[derive(Debug, PartialEq)]
struct LexError;

fn ident_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn ident_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

fn next_non_space(bytes: &[u8], mut i: usize) -> Option<u8> {
    while i < bytes.len() && bytes[i].is_ascii_whitespace() {
        i += 1;
    }
    bytes.get(i).copied()
}

/// Tokens of a C-family source with comments and literals skipped.
fn lex_tokens(src: &str) -> std::result::Result<Vec<String>, LexError> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut depth = [0i64; 3];
    let mut line_start = true;
    let mut i = 0;
    while i < b.len() {
        let c = b[i];
        match c {
            b'\n' => {
                line_start = true;
                i += 1;
                continue;
            }
            c if c.is_ascii_whitespace() => {
                i += 1;
                continue;
            }
            b'/' if b.get(i + 1) == Some(&b'/') => {
                while i < b.len() && b[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            b'/' if b.get(i + 1) == Some(&b'*') => {
                let end = src[i + 2..].find("*/").ok_or(LexError)?;
                i += end + 4;
                continue;
            }
            b'"' | b'\'' => {
                i += 1;
                loop {
                    match b.get(i) {
                        None | Some(b'\n') => return Err(LexError),
                        Some(b'\\') => i += 2,
                        Some(&q) if q == c => break,
                        Some(_) => i += 1,
                    }
                }
                i += 1;
            }
            b'#' if line_start => {
                let mut j = i + 1;
                while j < b.len() && (b[j] == b' ' || b[j] == b'\t') {
                    j += 1;
                }
                let start = j;
                while j < b.len() && ident_char(b[j]) {
                    j += 1;
                }
                if j > start {
                    out.push(format!("#{}", &src[start..j]));
                }
                i = j;
                // Macro bodies are code; other directive arguments are not.
                if &src[start..j] != "define" {
                    while i < b.len() && !(b[i] == b'\n' && b[i - 1] != b'\\') {
                        i += 1;
                    }
                }
            }
            c if ident_start(c) => {
                let start = i;
                while i < b.len() && ident_char(b[i]) {
                    i += 1;
                }
                let word = &src[start..i];
                if is_keyword(word) || next_non_space(b, i) == Some(b'(') {
                    out.push(word.to_string());
                }
            }
            c if c.is_ascii_digit() => {
                while i < b.len() && (ident_char(b[i]) || b[i] == b'.') {
                    i += 1;
                }
            }
            b'(' | b'{' | b'[' | b')' | b'}' | b']' => {
                let slot = match c {
                    b'(' | b')' => 0,
                    b'{' | b'}' => 1,
                    _ => 2,
                };
                depth[slot] += if matches!(c, b'(' | b'{' | b'[') { 1 } else { -1 };
                if depth[slot] < 0 {
                    return Err(LexError);
                }
                i += 1;
            }
            _ => i += 1,
        }
        line_start = false;
    }
    if depth.iter().any(|&d| d != 0) {
        return Err(LexError);
    }
    Ok(out)
}

/// Raw word scan used when lexing fails: keywords and words followed by `(`.
fn fallback_tokens(src: &str) -> Vec<String> {
    let b = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if ident_start(b[i]) && (i == 0 || !ident_char(b[i - 1])) {
            let start = i;
            while i < b.len() && ident_char(b[i]) {
                i += 1;
            }
            let word = &src[start..i];
            if is_keyword(word) || next_non_space(b, i) == Some(b'(') {
                out.push(word.to_string());
            }
        } else {
            i += 1;
        }
    }
    out
}

/// Keyword tokens of one artifact and whether the lexical fallback was used.
pub fn tokenize(src: &str) -> (Vec<String>, bool) {
    match lex_tokens(src) {
        Ok(tokens) => (tokens, false),
        Err(LexError) => (fallback_tokens(src), true),
    }
}

/// Builds vectors for all artifacts over their shared, sorted vocabulary.
pub fn vectorize_corpus(artifacts: &[&str]) -> Result<Corpus> {
    if artifacts.is_empty() {
        return Err(AnalysisError::Empty("vectorize_corpus"));
    }
    let tokenized: Vec<(BTreeMap<String, usize>, bool)> = artifacts
        .iter()
        .map(|src| {
            let (tokens, fallback) = tokenize(src);
            let mut counts = BTreeMap::new();
            for t in tokens {
                *counts.entry(t).or_insert(0) += 1;
            }
            (counts, fallback)
        })
        .collect();
    let vocabulary: Vec<String> = tokenized
        .iter()
        .flat_map(|(counts, _)| counts.keys().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let vectors = tokenized
        .into_iter()
        .map(|(counts, fallback)| CodeVector {
            values: vocabulary
                .iter()
                .map(|w| counts.get(w).copied().unwrap_or(0) as f64)
                .collect(),
            source_iteration: None,
            lexical_fallback: fallback,
        })
        .collect();
    Ok(Corpus { vocabulary, vectors })
}
