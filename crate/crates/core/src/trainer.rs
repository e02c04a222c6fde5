//! Batching, the learning-rate schedule, one-epoch training and early stopping.

use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autodiff::{adam_step, AdamState, NonFiniteGradient, ParamStore, Tape};
use crate::corpus::{Dataset, TaggedSentence};
use crate::embeddings::{CharVocabulary, EmbeddingTable};
use crate::eval::{score, ScoreError};
use crate::model::{Batch, Lexicon, ModelConfig, ModelError, Tagger};
use crate::postprocess::postprocess_dataset;

/// When the learning rate is divided by the decay factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecayTrigger {
    /// After every epoch.
    #[default]
    EveryEpoch,
    /// Only after an epoch whose dev score did not improve.
    OnPlateau,

}

/// Numeric precision of the stored parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// Parameters are rounded to `f32` after initialisation and every update.
    #[default]
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub word_hidden: usize,
    pub char_hidden: usize,
    pub batch_size: usize,
    pub word_dim: usize,
    pub char_dim: usize,
    pub dropout: f64,
    pub lr0: f64,
    pub decay: f64,
    pub decay_trigger: DecayTrigger,
    pub patience: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub init_scale: f64,
    pub precision: Precision,
    /// Repair dev predictions before scoring them for model selection.
    pub post_process_dev: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            word_hidden: 200,
            char_hidden: 200,
            batch_size: 64,
            word_dim: 300,
            char_dim: 150,
            dropout: 0.4,
            lr0: 0.01,
            decay: core::f64::consts::SQRT_2,
            decay_trigger: DecayTrigger::EveryEpoch,
            patience: 2,
            seed: 1,
            max_epochs: 50,
            init_scale: 0.1,
            precision: Precision::F32,
            post_process_dev: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("`{0}` must be positive")]
    NotPositive(&'static str),
    #[error("dropout {0} outside [0, 1)")]
    Dropout(f64),
    #[error("decay factor {0} must be at least 1")]
    Decay(f64),
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let sizes = [
            ("word_hidden", self.word_hidden),
            ("char_hidden", self.char_hidden),
            ("batch_size", self.batch_size),
            ("word_dim", self.word_dim),
            ("char_dim", self.char_dim),
            ("patience", self.patience),
            ("max_epochs", self.max_epochs),
        ];
        for (name, v) in sizes {
            if v == 0 {
                return Err(ConfigError::NotPositive(name));
            }
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(ConfigError::NotPositive("lr0"));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(ConfigError::NotPositive("init_scale"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Dropout(self.dropout));
        }
        if !(self.decay >= 1.0 && self.decay.is_finite()) {
            return Err(ConfigError::Decay(self.decay));
        }
        Ok(())
    }

    pub fn model_config(&self, num_tags: usize) -> ModelConfig {
        ModelConfig {
            word_dim: self.word_dim,
            char_dim: self.char_dim,
            char_hidden: self.char_hidden,
            word_hidden: self.word_hidden,
            num_tags,
            dropout: self.dropout,
            init_scale: self.init_scale,
        }
    }

    /// Learning rate for a 0-based epoch count of decay steps.
    pub fn lr(&self, decays: usize) -> f64 {
        self.lr0 / libm::pow(self.decay, decays as f64)
    }
}

/// `lr0 / (√2)^epoch`.
pub fn lr_schedule(lr0: f64, epoch: usize) -> f64 {
    lr0 / libm::pow(core::f64::consts::SQRT_2, epoch as f64)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("cannot batch an empty dataset")]
    EmptyDataset,
    #[error("sentence {0} has no tokens")]
    EmptySentence(usize),
    #[error("training data lacks gold tags")]
    Unlabeled,
    #[error("non-finite loss {loss} in batch {batch}")]
    NonFiniteLoss { batch: usize, loss: f64 },
    #[error(transparent)]
    Gradient(#[from] NonFiniteGradient),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Sentence indices grouped into batches: longest first, stable on ties.
pub fn batch_order(lengths: &[usize], batch_size: usize) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..lengths.len()).collect();
    order.sort_by(|a, b| lengths[*b].cmp(&lengths[*a]));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn make_batches(d: &Dataset, batch_size: usize, lex: &Lexicon<'_>) -> Result<Vec<Batch>, TrainError> {
    if d.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(i) = d.sentences.iter().position(TaggedSentence::is_empty) {
        return Err(TrainError::EmptySentence(i));
    }
    let lengths: Vec<usize> = d.sentences.iter().map(TaggedSentence::len).collect();
    Ok(batch_order(&lengths, batch_size)
        .into_iter()
        .map(|group| {
            let members: Vec<(usize, &TaggedSentence)> = group.iter().map(|i| (*i, &d.sentences[*i])).collect();
            Batch::build(&members, lex)
        })
        .collect())
}

/// One pass over `batches`. Returns the token-weighted mean loss.
pub fn train_epoch(
    tagger: &mut Tagger,
    adam: &mut AdamState,
    batches: &[Batch],
    lex: &Lexicon<'_>,
    lr: f64,
    precision: Precision,
    rng: &mut dyn RngCore,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    for (i, batch) in batches.iter().enumerate() {
        if batch.gold.is_none() {
            return Err(TrainError::Unlabeled);
        }
        let grads = {
            let mut tape = Tape::new(&tagger.params);
            let loss = tagger.loss(&mut tape, batch, lex, Some(&mut *rng));
            let value = tape.value(loss).data()[0];
            if !value.is_finite() {
                return Err(TrainError::NonFiniteLoss { batch: i, loss: value });
            }
            total += value * batch.token_count() as f64;
            tokens += batch.token_count();
            tape.backward(loss)
        };
        adam_step(&mut tagger.params, &grads, adam, lr)?;
        if precision == Precision::F32 {
            tagger.params.round_to_f32();
        }
    }
    Ok(if tokens == 0 { 0.0 } else { total / tokens as f64 })
}

/// Tags every sentence of `d`, optionally repairing the result.
pub fn predict_dataset(
    tagger: &Tagger,
    d: &Dataset,
    lex: &Lexicon<'_>,
    batch_size: usize,
    post_process: bool,
) -> Dataset {
    let mut out = Dataset::new(Vec::with_capacity(d.len()), d.split);
    out.sentences.extend(d.sentences.iter().map(|s| TaggedSentence { tokens: s.tokens.clone(), tags: Some(Vec::new()) }));
    let lengths: Vec<usize> = d.sentences.iter().map(TaggedSentence::len).collect();
    for group in batch_order(&lengths, batch_size.max(1)) {
        let members: Vec<(usize, &TaggedSentence)> =
            group.iter().filter(|i| lengths[**i] > 0).map(|i| (*i, &d.sentences[*i])).collect();
        if members.is_empty() {
            continue;
        }
        let batch = Batch::build(&members, lex);
        for (row, tags) in tagger.predict_batch(&batch, lex).into_iter().enumerate() {
            out.sentences[batch.order[row]].tags = Some(tags);
        }
    }
    if post_process {
        postprocess_dataset(&out)
    } else {
        out
    }
}

/// Patience-based stopping on a score that should increase.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

/// What [`EarlyStopping::observe`] decided about an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    pub improved: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        assert!(patience >= 1, "patience must be positive");
        Self { patience, best: None, stale: 0 }
    }

    /// Records the score of a 1-based `epoch`. Only a strict improvement resets patience.
    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = self.best.map_or(true, |(_, b)| score > b);
        if improved {
            self.best = Some((epoch, score));
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopDecision { improved, stop: self.stale >= self.patience }
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    /// Dev harmonic-mean F1 used for selection.
    pub dev_f1: f64,
    pub improved: bool,
}

/// A trained model with everything needed to run it again.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainingConfig,
    pub model: ModelConfig,
    pub params: ParamStore,
    pub words: EmbeddingTable,
    pub chars: CharVocabulary,
    pub dev_score: f64,
    pub epoch: usize,
}

impl Checkpoint {
    pub fn tagger(&self) -> Result<Tagger, ModelError> {
        let tagger = Tagger::from_params(self.model, self.params.clone())?;
        tagger.check_lexicon(&self.lexicon())?;
        Ok(tagger)
    }

    pub fn lexicon(&self) -> Lexicon<'_> {
        Lexicon::new(&self.words, &self.chars)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
}

/// Seed of the dropout stream, kept apart from the initialisation stream.
fn dropout_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

/// Initialises a tagger from `cfg.seed` and trains it with early stopping on
/// the dev harmonic-mean F1.
pub fn fit(
    train: &Dataset,
    dev: &Dataset,
    words: EmbeddingTable,
    chars: CharVocabulary,
    cfg: &TrainingConfig,
    num_tags: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<FitOutcome, TrainError> {
    cfg.validate()?;
    if !train.is_labeled() || !dev.is_labeled() {
        return Err(TrainError::Unlabeled);
    }
    let lex = Lexicon::new(&words, &chars);
    let mut tagger = Tagger::new(cfg.model_config(num_tags), &lex, &mut ChaCha8Rng::seed_from_u64(cfg.seed))?;
    if cfg.precision == Precision::F32 {
        tagger.params.round_to_f32();
    }
    let batches = make_batches(train, cfg.batch_size, &lex)?;
    let mut adam = AdamState::new(&tagger.params);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed(cfg.seed));
    let mut stopping = EarlyStopping::new(cfg.patience);
    let mut best_params = tagger.params.clone();
    let mut history = Vec::new();
    let mut decays = 0usize;
    for epoch in 1..=cfg.max_epochs {
        let lr = cfg.lr(decays);
        let loss = train_epoch(&mut tagger, &mut adam, &batches, &lex, lr, cfg.precision, &mut rng)?;
        let pred = predict_dataset(&tagger, dev, &lex, cfg.batch_size, cfg.post_process_dev);
        let dev_f1 = score(dev, &pred)?.harmonic_f1;
        let decision = stopping.observe(epoch, dev_f1);
        if decision.improved {
            best_params = tagger.params.clone();
        }
        let record = EpochRecord { epoch, lr, loss, dev_f1, improved: decision.improved };
        on_epoch(&record);
        history.push(record);
        if decision.stop {
            break;
        }
        if cfg.decay_trigger == DecayTrigger::EveryEpoch || !decision.improved {
            decays += 1;
        }
    }
    let (epoch, dev_score) = stopping.best().expect("at least one epoch");
    let model = tagger.config;
    Ok(FitOutcome {
        checkpoint: Checkpoint { config: *cfg, model, params: best_params, words, chars, dev_score, epoch },
        history,
    })
}
