//! The hierarchical tagger.
//!
//! Each word's surface characters run through a character BiLSTM; the final
//! forward and backward hidden states form the word's character vector `a_t`.
//! It is concatenated with the fixed pre-trained word vector `x_t` of the
//! normalized token, giving `u_t = x_t ⊕ a_t`. A word-level BiLSTM over
//! `u_1..u_N` yields `c_t = h→_t ⊕ h←_t`, and an affine layer maps `c_t` to
//! one score per tag.
//!
//! Dropout is applied to the character encoder output and to `c_t`.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use thiserror::Error;

use crate::autodiff::{dropout, run_masked, LstmParams, ParamId, ParamStore, Tape, Tensor, Var};
use crate::corpus::{Tag, TaggedSentence};
use crate::embeddings::{CharVocabulary, EmbeddingTable, CHAR_PAD, PAD, SPECIAL_ROWS};
use crate::preprocess::preprocess_token;

/// Layer sizes and dropout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub word_dim: usize,
    pub char_dim: usize,
    /// Per direction; the character vector is twice this wide.
    pub char_hidden: usize,
    /// Per direction; `c_t` is twice this wide.
    pub word_hidden: usize,
    pub num_tags: usize,
    pub dropout: f64,
    /// Half-width of the uniform initialisation interval.
    pub init_scale: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            word_dim: 300,
            char_dim: 150,
            char_hidden: 200,
            word_hidden: 200,
            num_tags: Tag::COUNT,
            dropout: 0.4,
            init_scale: 0.1,
        }
    }
}

/// The vocabularies a tagger reads from.
#[derive(Debug, Clone, Copy)]
pub struct Lexicon<'a> {
    pub words: &'a EmbeddingTable,
    pub chars: &'a CharVocabulary,
}

impl<'a> Lexicon<'a> {
    pub fn new(words: &'a EmbeddingTable, chars: &'a CharVocabulary) -> Self {
        Self { words, chars }
    }

    /// Word-table row for a surface token after replacement and normalization.
    pub fn word_index(&self, surface: &str) -> usize {
        let normalized = preprocess_token(surface, &self.words.vocabulary);
        self.words.vocabulary.lookup(&normalized.result)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("missing parameter `{0}`")]
    MissingParam(String),
    #[error("parameter `{name}` has shape {found:?}, expected {expected:?}")]
    Shape { name: String, found: [usize; 2], expected: [usize; 2] },
    #[error("word table has dimension {table} but the model expects {model}")]
    WordDim { table: usize, model: usize },
    #[error("character vocabulary has {vocab} entries but the embedding has {rows} rows")]
    CharRows { vocab: usize, rows: usize },
    #[error("word table has only {0} rows")]
    TooFewWords(usize),
    #[error("{0} tags exceed the tag inventory")]
    TooManyTags(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Handles {
    char_embeddings: ParamId,
    char_fwd: LstmParams,
    char_bwd: LstmParams,
    word_fwd: LstmParams,
    word_bwd: LstmParams,
    output_weight: ParamId,
    output_bias: ParamId,
    word_specials: ParamId,
}

/// Model parameters plus the layout needed to run them.
#[derive(Debug, Clone, PartialEq)]
pub struct Tagger {
    pub config: ModelConfig,
    pub params: ParamStore,
    handles: Handles,
}

/// Index matrices for a group of sentences padded to a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Position of each row's sentence in the source dataset.
    pub order: Vec<usize>,
    pub lengths: Vec<usize>,
    /// `[row][t]` word-table index; `PAD` past the sentence end.
    pub word_ids: Vec<Vec<usize>>,
    /// `[row][t]` index into `char_words`; 0 past the sentence end.
    pub word_slots: Vec<Vec<usize>>,
    /// Character indices of each distinct surface word in the batch.
    pub char_words: Vec<Vec<usize>>,
    /// `[row][t]` gold tag index; 0 past the sentence end.
    pub gold: Option<Vec<Vec<usize>>>,
}

impl Batch {
    /// Builds a batch from `(source index, sentence)` pairs.
    pub fn build(sentences: &[(usize, &TaggedSentence)], lex: &Lexicon<'_>) -> Self {
        assert!(!sentences.is_empty(), "empty batch");
        let steps = sentences.iter().map(|(_, s)| s.len()).max().unwrap_or(0);
        let mut slots_by_word: BTreeMap<&str, usize> = BTreeMap::new();
        let mut char_words = Vec::new();
        let mut batch = Batch {
            order: Vec::new(),
            lengths: Vec::new(),
            word_ids: Vec::new(),
            word_slots: Vec::new(),
            char_words: Vec::new(),
            gold: sentences.iter().all(|(_, s)| s.tags.is_some()).then(Vec::new),
        };
        for (index, sentence) in sentences {
            assert!(!sentence.is_empty(), "empty sentence");
            let mut ids = vec![PAD; steps];
            let mut slots = vec![0; steps];
            for (t, token) in sentence.tokens.iter().enumerate() {
                ids[t] = lex.word_index(token);
                slots[t] = *slots_by_word.entry(token.as_str()).or_insert_with(|| {
                    char_words.push(lex.chars.encode(token));
                    char_words.len() - 1
                });
            }
            if let (Some(gold), Some(tags)) = (&mut batch.gold, &sentence.tags) {
                let mut row = vec![0; steps];
                for (t, tag) in tags.iter().enumerate() {
                    row[t] = tag.index();
                }
                gold.push(row);
            }
            batch.order.push(*index);
            batch.lengths.push(sentence.len());
            batch.word_ids.push(ids);
            batch.word_slots.push(slots);
        }
        batch.char_words = char_words;
        batch
    }

    pub fn rows(&self) -> usize {
        self.order.len()
    }

    /// Padded length.
    pub fn steps(&self) -> usize {
        self.word_ids.first().map_or(0, Vec::len)
    }

    pub fn is_active(&self, row: usize, t: usize) -> bool {
        t < self.lengths[row]
    }

    pub fn token_count(&self) -> usize {
        self.lengths.iter().sum()
    }

    /// `1.0` for real tokens, `0.0` for padding, in `t`-major order.
    pub fn mask(&self) -> Vec<f64> {
        let mut m = Vec::with_capacity(self.rows() * self.steps());
        for t in 0..self.steps() {
            for b in 0..self.rows() {
                m.push(if self.is_active(b, t) { 1.0 } else { 0.0 });
            }
        }
        m
    }

    /// Extends every row with padding up to `steps`.
    pub fn pad_to(&mut self, steps: usize) {
        for row in self.word_ids.iter_mut() {
            row.resize(steps.max(row.len()), PAD);
        }
        for row in self.word_slots.iter_mut() {
            row.resize(steps.max(row.len()), 0);
        }
        if let Some(gold) = &mut self.gold {
            for row in gold.iter_mut() {
                row.resize(steps.max(row.len()), 0);
            }
        }
    }
}

fn argmax_lowest(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

impl Tagger {
    /// Fresh parameters. The trainable special word rows start from the
    /// first [`SPECIAL_ROWS`] rows of the word table.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, lex: &Lexicon<'_>, rng: &mut R) -> Result<Self, ModelError> {
        if lex.words.dim() != config.word_dim {
            return Err(ModelError::WordDim { table: lex.words.dim(), model: config.word_dim });
        }
        if lex.words.len() < SPECIAL_ROWS {
            return Err(ModelError::TooFewWords(lex.words.len()));
        }
        if config.num_tags > Tag::COUNT {
            return Err(ModelError::TooManyTags(config.num_tags));
        }
        let s = config.init_scale;
        let mut params = ParamStore::new();
        let char_embeddings = params.add("char_embeddings", Tensor::uniform(lex.chars.len(), config.char_dim, s, rng));
        let char_fwd = LstmParams::register(&mut params, "char_fwd", config.char_dim, config.char_hidden, s, rng);
        let char_bwd = LstmParams::register(&mut params, "char_bwd", config.char_dim, config.char_hidden, s, rng);
        let input = config.word_dim + 2 * config.char_hidden;
        let word_fwd = LstmParams::register(&mut params, "word_fwd", input, config.word_hidden, s, rng);
        let word_bwd = LstmParams::register(&mut params, "word_bwd", input, config.word_hidden, s, rng);
        let output_weight =
            params.add("output.weight", Tensor::uniform(2 * config.word_hidden, config.num_tags, s, rng));
        let output_bias = params.add("output.bias", Tensor::uniform(1, config.num_tags, s, rng));
        let head: Vec<f64> = lex.words.vectors()[..SPECIAL_ROWS * config.word_dim].iter().map(|v| *v as f64).collect();
        let word_specials = params.add("word_specials", Tensor::from_vec(SPECIAL_ROWS, config.word_dim, head));
        let handles = Handles {
            char_embeddings,
            char_fwd,
            char_bwd,
            word_fwd,
            word_bwd,
            output_weight,
            output_bias,
            word_specials,
        };
        Ok(Self { config, params, handles })
    }

    /// Rebuilds a tagger from stored parameters, validating every shape.
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self, ModelError> {
        let find = |name: &str, shape: Option<[usize; 2]>| -> Result<ParamId, ModelError> {
            let id = params.find(name).ok_or_else(|| ModelError::MissingParam(name.into()))?;
            if let Some(expected) = shape {
                let found = params.get(id).shape();
                if found != expected {
                    return Err(ModelError::Shape { name: name.into(), found, expected });
                }
            }
            Ok(id)
        };
        let lstm = |prefix: &str, input: usize, hidden: usize| -> Result<LstmParams, ModelError> {
            find(&alloc::format!("{prefix}.w_input"), Some([input, 4 * hidden]))?;
            find(&alloc::format!("{prefix}.w_hidden"), Some([hidden, 4 * hidden]))?;
            find(&alloc::format!("{prefix}.bias"), Some([1, 4 * hidden]))?;
            Ok(LstmParams::lookup(&params, prefix).expect("shapes validated"))
        };
        let c = &config;
        let input = c.word_dim + 2 * c.char_hidden;
        let handles = Handles {
            char_embeddings: find("char_embeddings", None)?,
            char_fwd: lstm("char_fwd", c.char_dim, c.char_hidden)?,
            char_bwd: lstm("char_bwd", c.char_dim, c.char_hidden)?,
            word_fwd: lstm("word_fwd", input, c.word_hidden)?,
            word_bwd: lstm("word_bwd", input, c.word_hidden)?,
            output_weight: find("output.weight", Some([2 * c.word_hidden, c.num_tags]))?,
            output_bias: find("output.bias", Some([1, c.num_tags]))?,
            word_specials: find("word_specials", Some([SPECIAL_ROWS, c.word_dim]))?,
        };
        let emb = params.get(handles.char_embeddings);
        if emb.cols() != c.char_dim {
            return Err(ModelError::Shape {
                name: "char_embeddings".into(),
                found: emb.shape(),
                expected: [emb.rows(), c.char_dim],
            });
        }
        Ok(Self { config, params, handles })
    }

    /// Checks that a lexicon fits this tagger's parameters.
    pub fn check_lexicon(&self, lex: &Lexicon<'_>) -> Result<(), ModelError> {
        if lex.words.dim() != self.config.word_dim {
            return Err(ModelError::WordDim { table: lex.words.dim(), model: self.config.word_dim });
        }
        if lex.words.len() < SPECIAL_ROWS {
            return Err(ModelError::TooFewWords(lex.words.len()));
        }
        let rows = self.params.get(self.handles.char_embeddings).rows();
        if rows != lex.chars.len() {
            return Err(ModelError::CharRows { vocab: lex.chars.len(), rows });
        }
        Ok(())
    }

    /// Handle of the trainable special word rows.
    pub fn word_specials(&self) -> ParamId {
        self.handles.word_specials
    }

    /// Swaps the forward and backward word-level LSTM weights.
    pub fn swap_word_directions(&mut self) {
        let (f, b) = (self.handles.word_fwd, self.handles.word_bwd);
        for (x, y) in [(f.w_input, b.w_input), (f.w_hidden, b.w_hidden), (f.bias, b.bias)] {
            let tx = self.params.get(x).clone();
            let ty = core::mem::replace(self.params.get_mut(y), tx);
            *self.params.get_mut(x) = ty;
        }
    }

    /// Character vectors (`W × 2·char_hidden`) for every distinct word of a batch.
    fn encode_chars(&self, tape: &mut Tape<'_>, words: &[Vec<usize>]) -> Var {
        let max_len = words.iter().map(Vec::len).max().unwrap_or(0);
        assert!(words.iter().all(|w| !w.is_empty()), "character encoding of an empty word");
        let table = tape.param(self.handles.char_embeddings);
        let mut inputs = Vec::with_capacity(max_len);
        let mut active = Vec::with_capacity(max_len);
        for t in 0..max_len {
            let ids = words.iter().map(|w| w.get(t).copied().unwrap_or(CHAR_PAD)).collect();
            inputs.push(tape.gather(table, ids));
            active.push(words.iter().map(|w| t < w.len()).collect::<Vec<bool>>());
        }
        let fwd = self.handles.char_fwd.bind(tape);
        let bwd = self.handles.char_bwd.bind(tape);
        let f = run_masked(tape, &fwd, &inputs, &active, false);
        let b = run_masked(tape, &bwd, &inputs, &active, true);
        let last = f[max_len - 1].h;
        let first = b[0].h;
        tape.concat(last, first)
    }

    /// `c_t` for every padded step (`rows × 2·word_hidden` each). Dropout is
    /// active when `rng` is given.
    pub fn encode_batch(
        &self,
        tape: &mut Tape<'_>,
        batch: &Batch,
        lex: &Lexicon<'_>,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Vec<Var> {
        let rate = self.config.dropout;
        let chars = self.encode_chars(tape, &batch.char_words);
        let specials = tape.param(self.handles.word_specials);
        let mut inputs = Vec::with_capacity(batch.steps());
        let mut active = Vec::with_capacity(batch.steps());
        for t in 0..batch.steps() {
            let ids = batch.word_ids.iter().map(|r| r[t]).collect();
            let x = tape.overlay_lookup(specials, lex.words.vectors(), lex.words.dim(), ids);
            let slots = batch.word_slots.iter().map(|r| r[t]).collect();
            let mut a = tape.gather(chars, slots);
            if let Some(r) = rng.as_deref_mut() {
                a = dropout(tape, a, rate, true, r);
            }
            inputs.push(tape.concat(x, a));
            active.push((0..batch.rows()).map(|b| batch.is_active(b, t)).collect::<Vec<bool>>());
        }
        let fwd = self.handles.word_fwd.bind(tape);
        let bwd = self.handles.word_bwd.bind(tape);
        let f = run_masked(tape, &fwd, &inputs, &active, false);
        let b = run_masked(tape, &bwd, &inputs, &active, true);
        let mut out = Vec::with_capacity(batch.steps());
        for t in 0..batch.steps() {
            let mut c = tape.concat(f[t].h, b[t].h);
            if let Some(r) = rng.as_deref_mut() {
                c = dropout(tape, c, rate, true, r);
            }
            out.push(c);
        }
        out
    }

    /// Tag scores, one row per `(t, row)` pair in `t`-major order.
    pub fn tag_logits(&self, tape: &mut Tape<'_>, encoding: &[Var]) -> Var {
        let w = tape.param(self.handles.output_weight);
        let bias = tape.param(self.handles.output_bias);
        let rows: Vec<Var> = encoding
            .iter()
            .map(|c| {
                let z = tape.matmul(*c, w);
                tape.add_row(z, bias)
            })
            .collect();
        tape.stack_rows(rows)
    }

    pub fn forward(
        &self,
        tape: &mut Tape<'_>,
        batch: &Batch,
        lex: &Lexicon<'_>,
        rng: Option<&mut dyn RngCore>,
    ) -> Var {
        let enc = self.encode_batch(tape, batch, lex, rng);
        self.tag_logits(tape, &enc)
    }

    /// Mean masked cross-entropy of the batch's gold tags.
    pub fn loss(&self, tape: &mut Tape<'_>, batch: &Batch, lex: &Lexicon<'_>, rng: Option<&mut dyn RngCore>) -> Var {
        let gold = batch.gold.as_ref().expect("loss needs gold tags");
        let logits = self.forward(tape, batch, lex, rng);
        let mut targets = Vec::with_capacity(batch.rows() * batch.steps());
        for t in 0..batch.steps() {
            for row in gold {
                targets.push(row[t]);
            }
        }
        tape.softmax_cross_entropy(logits, targets, batch.mask())
    }

    /// Argmax tags per row (ties go to the lowest tag index), trimmed to
    /// each sentence's length.
    pub fn predict_batch(&self, batch: &Batch, lex: &Lexicon<'_>) -> Vec<Vec<Tag>> {
        let mut tape = Tape::new(&self.params);
        let logits = self.forward(&mut tape, batch, lex, None);
        let z = tape.value(logits);
        let rows = batch.rows();
        (0..rows)
            .map(|b| {
                (0..batch.lengths[b])
                    .map(|t| Tag::from_index(argmax_lowest(z.row(t * rows + b))).expect("tag index in range"))
                    .collect()
            })
            .collect()
    }

    pub fn predict_tags(&self, tokens: &[String], lex: &Lexicon<'_>) -> Vec<Tag> {
        if tokens.is_empty() {
            return Vec::new();
        }
        let sentence = TaggedSentence::unlabeled(tokens.to_vec());
        let batch = Batch::build(&[(0, &sentence)], lex);
        self.predict_batch(&batch, lex).pop().unwrap_or_default()
    }

    /// `c_t` vectors of one sentence.
    pub fn encode_sentence(&self, tokens: &[String], lex: &Lexicon<'_>, rng: Option<&mut dyn RngCore>) -> Vec<Vec<f64>> {
        let sentence = TaggedSentence::unlabeled(tokens.to_vec());
        let batch = Batch::build(&[(0, &sentence)], lex);
        let mut tape = Tape::new(&self.params);
        let enc = self.encode_batch(&mut tape, &batch, lex, rng);
        enc.iter().map(|v| tape.value(*v).data().to_vec()).collect()
    }

    /// The `2·char_hidden` character vector of one word. Panics on an empty word.
    pub fn char_encode(&self, word: &str, lex: &Lexicon<'_>) -> Vec<f64> {
        assert!(!word.is_empty(), "character encoding of an empty word");
        let mut tape = Tape::new(&self.params);
        let v = self.encode_chars(&mut tape, &[lex.chars.encode(word)]);
        tape.value(v).data().to_vec()
    }
}
