//! Reading and writing corpora and word-vector files.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use csner_core::corpus::{parse_conll, write_conll, ParseError};
use csner_core::embeddings::{VecError, VecParser};
use csner_core::preprocess::lookup_forms;
use csner_core::{Dataset, EmbeddingTable, Split};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Corpus { path: PathBuf, source: ParseError },
    #[error("{path}: {source}")]
    Vectors { path: PathBuf, source: VecError },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

pub fn read_corpus(path: &Path, split: Split) -> Result<Dataset, IoError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse_conll(&text, split).map_err(|source| IoError::Corpus { path: path.to_path_buf(), source })
}

pub fn write_corpus(path: &Path, dataset: &Dataset) -> Result<(), IoError> {
    std::fs::write(path, write_conll(dataset)).map_err(io_err(path))
}

/// Streams a `.vec` file, keeping only the rows `keep` accepts. With no
/// filter every row is kept.
pub fn read_vectors(path: &Path, keep: Option<&dyn Fn(&str) -> bool>) -> Result<EmbeddingTable, IoError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = BufReader::new(file);
    let mut parser = match keep {
        Some(f) => VecParser::with_filter(f),
        None => VecParser::new(),
    };
    let vec_err = |source| IoError::Vectors { path: path.to_path_buf(), source };
    let mut line = String::new();
    loop {
        line.clear();
        if reader.read_line(&mut line).map_err(io_err(path))? == 0 {
            break;
        }
        parser.push_line(&line).map_err(vec_err)?;
    }
    parser.finish().map_err(vec_err)
}

/// Every form normalization may look up for the tokens of `datasets`.
/// Pruning a vector file to this set leaves every normalization result unchanged.
pub fn lookup_set<'a>(datasets: impl IntoIterator<Item = &'a Dataset>) -> BTreeSet<String> {
    let mut keep = BTreeSet::new();
    for d in datasets {
        for s in &d.sentences {
            for t in &s.tokens {
                keep.extend(lookup_forms(t));
            }
        }
    }
    keep
}

/// Reads a vector file pruned to [`lookup_set`] of `datasets`.
pub fn read_vectors_for(path: &Path, keep: &BTreeSet<String>) -> Result<EmbeddingTable, IoError> {
    let filter = |w: &str| keep.contains(w);
    read_vectors(path, Some(&filter))
}
