//! Word and character inventories.
//!
//! The word side is a shared English+Spanish vocabulary backed by fixed
//! pre-trained vectors. Four special rows come first: `PAD`, `UNK`, `USR` and
//! `URL`. They are the only word rows the tagger trains.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::Dataset;

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";
pub const USR_TOKEN: &str = "USR";
pub const URL_TOKEN: &str = "URL";

pub const PAD: usize = 0;
pub const UNK: usize = 1;
/// Number of trainable special rows at the head of a merged word table.
pub const SPECIAL_ROWS: usize = 4;

/// Injective token → index map. Index 0 is `PAD`, index 1 is `UNK`; unknown
/// tokens look up to `UNK`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    index: BTreeMap<String, usize>,
    tokens: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut v = Self { index: BTreeMap::new(), tokens: Vec::new() };
        v.insert(PAD_TOKEN);
        v.insert(UNK_TOKEN);
        v
    }
}

impl Vocabulary {
    /// `PAD`, `UNK`, then `words` in order (duplicates ignored).
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::default();
        for w in words {
            v.insert(w.as_ref());
        }
        v
    }

    /// Rebuilds a vocabulary from its full token list (specials included).
    pub fn from_token_list(tokens: Vec<String>) -> Option<Self> {
        if tokens.len() < 2 || tokens[PAD] != PAD_TOKEN || tokens[UNK] != UNK_TOKEN {
            return None;
        }
        let mut index = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return None;
            }
        }
        Some(Self { index, tokens })
    }

    /// Returns the index of `token`, inserting it when new.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.to_string(), i);
        self.tokens.push(token.to_string());
        i
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn lookup(&self, token: &str) -> usize {
        self.get(token).unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Word vectors keyed by a vocabulary. Rows are stored as `f32`, the precision
/// of the pre-trained files.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub vocabulary: Vocabulary,
    dim: usize,
    vectors: Vec<f32>,
    pub trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VecError {
    #[error("line {line}: malformed header, expected `count dim`")]
    Header { line: usize },
    #[error("line {line}: expected {expected} components, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("line {line}: non-numeric component `{value}`")]
    NotNumeric { line: usize, value: String },
    #[error("dimension mismatch: {left} vs {right}")]
    Mismatch { left: usize, right: usize },
    #[error("{rows} rows for a vocabulary of {vocab} and dimension {dim}")]
    Shape { rows: usize, vocab: usize, dim: usize },
}

impl EmbeddingTable {
    /// A table with no rows and no reserved entries.
    pub fn empty(dim: usize) -> Self {
        Self { vocabulary: Vocabulary { index: BTreeMap::new(), tokens: Vec::new() }, dim, vectors: Vec::new(), trainable: false }
    }

    /// Assembles a table from a vocabulary and a row-major matrix.
    pub fn from_parts(vocabulary: Vocabulary, dim: usize, vectors: Vec<f32>) -> Result<Self, VecError> {
        if vectors.len() != vocabulary.len() * dim {
            return Err(VecError::Shape { rows: vectors.len() / dim.max(1), vocab: vocabulary.len(), dim });
        }
        Ok(Self { vocabulary, dim, vectors, trainable: false })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vocabulary.is_empty()
    }

    pub fn row(&self, index: usize) -> &[f32] {
        &self.vectors[index * self.dim..(index + 1) * self.dim]
    }

    pub fn get(&self, word: &str) -> Option<&[f32]> {
        self.vocabulary.get(word).map(|i| self.row(i))
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    /// Appends `word` unless present (first occurrence wins). Returns whether it was added.
    pub fn push(&mut self, word: &str, vector: &[f32]) -> bool {
        assert_eq!(vector.len(), self.dim, "vector width");
        if self.vocabulary.contains(word) {
            return false;
        }
        self.vocabulary.insert(word);
        self.vectors.extend_from_slice(vector);
        true
    }

    /// FNV-1a over the raw bits of every row.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.vectors {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    fn mean(&self) -> Vec<f32> {
        let mut acc = alloc::vec![0.0f64; self.dim];
        let n = self.len();
        for i in 0..n {
            for (a, v) in acc.iter_mut().zip(self.row(i)) {
                *a += *v as f64;
            }
        }
        acc.into_iter().map(|a| if n == 0 { 0.0 } else { (a / n as f64) as f32 }).collect()
    }
}

/// Incremental reader for the `.vec` text format: a `count dim` header line,
/// then `word v1 ... v_dim` rows separated by single spaces.
///
/// Feed lines one at a time with [`VecParser::push_line`]; an optional filter
/// keeps only the words it accepts.
pub struct VecParser<'a> {
    table: Option<EmbeddingTable>,
    declared: usize,
    line: usize,
    keep: Option<&'a dyn Fn(&str) -> bool>,
    scratch: Vec<f32>,
}

impl<'a> Default for VecParser<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> VecParser<'a> {
    pub fn new() -> Self {
        Self { table: None, declared: 0, line: 0, keep: None, scratch: Vec::new() }
    }

    pub fn with_filter(keep: &'a dyn Fn(&str) -> bool) -> Self {
        Self { keep: Some(keep), ..Self::new() }
    }

    pub fn push_line(&mut self, raw: &str) -> Result<(), VecError> {
        self.line += 1;
        let line = raw.trim_end_matches(['\n', '\r']);
        let Some(table) = &mut self.table else {
            let mut parts = line.split_whitespace();
            let count = parts.next().and_then(|p| p.parse::<usize>().ok());
            let dim = parts.next().and_then(|p| p.parse::<usize>().ok());
            match (count, dim, parts.next()) {
                (Some(count), Some(dim), None) if dim > 0 => {
                    self.declared = count;
                    self.table = Some(EmbeddingTable::empty(dim));
                    return Ok(());
                }
                _ => return Err(VecError::Header { line: self.line }),
            }
        };
        if line.is_empty() {
            return Ok(());
        }
        let line = line.trim_end_matches(' ');
        let mut parts = line.split(' ');
        let word = parts.next().unwrap_or_default();
        if let Some(keep) = self.keep {
            if !keep(word) {
                // dimension is still validated for skipped rows
                let found = parts.count();
                if found != table.dim {
                    return Err(VecError::Dimension { line: self.line, expected: table.dim, found });
                }
                return Ok(());
            }
        }
        self.scratch.clear();
        for p in parts {
            let v = p.parse::<f32>().map_err(|_| VecError::NotNumeric { line: self.line, value: p.to_string() })?;
            self.scratch.push(v);
        }
        if self.scratch.len() != table.dim {
            return Err(VecError::Dimension { line: self.line, expected: table.dim, found: self.scratch.len() });
        }
        table.push(word, &self.scratch);
        Ok(())
    }

    /// Number of rows announced by the header.
    pub fn declared_count(&self) -> usize {
        self.declared
    }

    pub fn finish(self) -> Result<EmbeddingTable, VecError> {
        self.table.ok_or(VecError::Header { line: 1 })
    }
}

/// Parses a whole `.vec` document held in memory.
pub fn load_vec(text: &str) -> Result<EmbeddingTable, VecError> {
    let mut parser = VecParser::new();
    for line in text.lines() {
        parser.push_line(line)?;
    }
    parser.finish()
}

/// Shared vocabulary: specials, then English rows, then Spanish rows whose word
/// is not already present.
///
/// `PAD` is the zero vector; `UNK`, `USR` and `URL` start at the mean of all
/// loaded vectors.
pub fn merge_tables(eng: &EmbeddingTable, spa: &EmbeddingTable) -> Result<EmbeddingTable, VecError> {
    if eng.dim() != spa.dim() && !eng.is_empty() && !spa.is_empty() {
        return Err(VecError::Mismatch { left: eng.dim(), right: spa.dim() });
    }
    let dim = if eng.is_empty() { spa.dim() } else { eng.dim() };
    let mut all = EmbeddingTable::empty(dim);
    for source in [eng, spa] {
        for (i, w) in source.vocabulary.tokens().iter().enumerate() {
            all.push(w, source.row(i));
        }
    }
    let mean = all.mean();
    let mut merged = EmbeddingTable::empty(dim);
    merged.push(PAD_TOKEN, &alloc::vec![0.0; dim]);
    merged.push(UNK_TOKEN, &mean);
    merged.push(USR_TOKEN, &mean);
    merged.push(URL_TOKEN, &mean);
    for (i, w) in all.vocabulary.tokens().iter().enumerate() {
        merged.push(w, all.row(i));
    }
    Ok(merged)
}

pub const CHAR_PAD: usize = 0;
pub const CHAR_UNK: usize = 1;

/// Characters always present in the inventory besides those seen in data.
pub fn default_char_inventory() -> String {
    let mut s: String = (0x21u8..=0x7e).map(char::from).collect();
    s.push_str("ñáéíóúüÑÁÉÍÓÚÜ¿¡");
    s
}

/// Case-preserving character index. Index 0 is padding, 1 is unknown; the
/// remaining characters are sorted by code point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocabulary {
    chars: Vec<char>,
    index: BTreeMap<char, usize>,
}

impl CharVocabulary {
    pub fn from_chars<I: IntoIterator<Item = char>>(chars: I) -> Self {
        let set: BTreeSet<char> = chars.into_iter().collect();
        let chars: Vec<char> = set.into_iter().collect();
        let index = chars.iter().enumerate().map(|(i, c)| (*c, i + 2)).collect();
        Self { chars, index }
    }

    pub fn lookup(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(CHAR_UNK)
    }

    pub fn encode(&self, word: &str) -> Vec<usize> {
        word.chars().map(|c| self.lookup(c)).collect()
    }

    /// Size including the two reserved entries.
    pub fn len(&self) -> usize {
        self.chars.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Non-reserved characters in index order.
    pub fn chars(&self) -> &[char] {
        &self.chars
    }
}

pub fn build_char_vocab(dataset: &Dataset, extra: &str) -> CharVocabulary {
    let observed = dataset.sentences.iter().flat_map(|s| s.tokens.iter()).flat_map(|t| t.chars());
    CharVocabulary::from_chars(observed.chain(extra.chars()))
}
