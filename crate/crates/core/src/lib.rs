//! Hierarchical BiLSTM named-entity tagger for code-switched English–Spanish text.
//!
//! The crate is `no_std` (with `alloc`) and contains every algorithmic piece of
//! the pipeline:
//!
//! * [`corpus`]: IOB tags, sentences, two-column token/tag parsing and validation.
//! * [`preprocess`]: token replacement (`USR`/`URL`) and vocabulary-driven normalization.
//! * [`embeddings`]: bilingual word vocabulary, fixed word-vector tables, character inventory.
//! * [`autodiff`]: a small dense reverse-mode engine with LSTM, dropout, masked loss and Adam.
//! * [`model`]: the character BiLSTM word encoder feeding the word-level BiLSTM tagger.
//! * [`trainer`]: padded batches, learning-rate decay, early stopping.
//! * [`postprocess`]: deterministic IOB repair of predicted tag sequences.
//! * [`eval`]: span extraction and per-class / harmonic-mean F1 scoring.
//!
//! File IO, the checkpoint format and the command-line tool live in the `csner` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
pub mod corpus;
pub mod embeddings;
pub mod eval;
pub mod model;
pub mod postprocess;
pub mod preprocess;
pub mod trainer;

pub use corpus::{Dataset, EntityCategory, Split, Tag, TaggedSentence};
pub use embeddings::{CharVocabulary, EmbeddingTable, Vocabulary};
pub use eval::{EvalReport, EntitySpan};
pub use model::{Lexicon, ModelConfig, Tagger};
pub use trainer::{Checkpoint, TrainingConfig};
