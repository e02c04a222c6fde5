//! Seeded bilingual micro-corpus and matching vector files.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use csner::config::RunConfig;
use csner_core::corpus::write_conll;
use csner_core::{Dataset, EntityCategory, Split, Tag, TaggedSentence, TrainingConfig};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const ENGLISH: [&str; 14] =
    ["I", "love", "going", "to", "with", "my", "friends", "the", "is", "so", "cool", "we", "watch", "tonight"];
pub const SPANISH: [&str; 12] = ["yo", "voy", "a", "con", "mis", "amigos", "en", "muy", "para", "ver", "y", "mañana"];
pub const NOISE: [&str; 5] = ["jajaja", "@amigo", "lol", "#fiesta", "https://t.co/x"];

fn entities() -> [(EntityCategory, &'static [&'static str]); 4] {
    [
        (EntityCategory::Person, &["Maria", "John", "Carlos", "Ana Lopez", "Peter Smith"]),
        (EntityCategory::Location, &["Madrid", "Texas", "Nueva York", "Barcelona", "Miami"]),
        (EntityCategory::Organization, &["Google", "Real Madrid", "Univision", "NASA"]),
        (EntityCategory::Time, &["lunes", "Friday", "Sunday night", "domingo"]),
    ]
}

/// `n` sentences of 4 to 9 slots mixing English and Spanish filler words with
/// PER, LOC, ORG and TIME entities.
pub fn micro_corpus(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ents = entities();
    let fill: Vec<&str> = ENGLISH.iter().chain(&SPANISH).chain(&NOISE).copied().collect();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let slots = rng.gen_range(4..10);
        let (mut toks, mut tags) = (Vec::new(), Vec::new());
        for _ in 0..slots {
            if rng.gen_bool(0.25) {
                let (c, names) = ents.choose(&mut rng).unwrap();
                for (k, w) in names.choose(&mut rng).unwrap().split(' ').enumerate() {
                    toks.push(w.to_string());
                    tags.push(if k == 0 { Tag::B(*c) } else { Tag::I(*c) });
                }
            } else {
                toks.push(fill.choose(&mut rng).unwrap().to_string());
                tags.push(Tag::O);
            }
        }
        out.push(TaggedSentence::labeled(toks, tags));
    }
    Dataset::new(out, Split::Train)
}

/// `.vec` text for `words` with seeded vectors of width `dim`.
pub fn vec_text(words: &[&str], dim: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = format!("{} {dim}\n", words.len());
    for w in words {
        s += w;
        for _ in 0..dim {
            s += &format!(" {:.4}", rng.gen_range(-0.3f32..0.3));
        }
        s += "\n";
    }
    s
}

/// English and Spanish vector files. Some entity names are deliberately
/// absent so they reach the model only through their characters.
pub fn vec_texts(dim: usize) -> (String, String) {
    let mut eng: Vec<&str> = ENGLISH.to_vec();
    eng.extend(["John", "Texas", "Google", "Friday", "Miami", "lol", "Sunday", "night"]);
    let mut spa: Vec<&str> = SPANISH.to_vec();
    spa.extend(["Maria", "Madrid", "Barcelona", "lunes", "domingo", "ja", "a"]);
    (vec_text(&eng, dim, 11), vec_text(&spa, dim, 12))
}

/// Files of a micro run inside `dir`: train/dev/test corpora (dev and test
/// are copies of train) and both vector files.
pub struct Fixture {
    pub dir: PathBuf,
    pub corpus: Dataset,
}

impl Fixture {
    pub fn write(dir: &Path, sentences: usize, dim: usize) -> Self {
        let corpus = micro_corpus(7, sentences);
        let text = write_conll(&corpus);
        for name in ["train.txt", "dev.txt", "test.txt"] {
            std::fs::write(dir.join(name), &text).unwrap();
        }
        let (eng, spa) = vec_texts(dim);
        std::fs::write(dir.join("eng.vec"), eng).unwrap();
        std::fs::write(dir.join("spa.vec"), spa).unwrap();
        Self { dir: dir.to_path_buf(), corpus }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn run_config(&self, training: TrainingConfig) -> RunConfig {
        RunConfig {
            training,
            train: Some(self.path("train.txt")),
            dev: Some(self.path("dev.txt")),
            test: Some(self.path("test.txt")),
            vec_eng: Some(self.path("eng.vec")),
            vec_spa: Some(self.path("spa.vec")),
            checkpoint: Some(self.path("model.ckpt")),
            out: None,
        }
    }
}

/// A quick configuration for plumbing tests.
pub fn tiny_training(dim: usize) -> TrainingConfig {
    TrainingConfig {
        word_hidden: 12,
        char_hidden: 8,
        word_dim: dim,
        char_dim: 6,
        batch_size: 8,
        dropout: 0.2,
        lr0: 0.02,
        decay: 1.0,
        patience: 1000,
        max_epochs: 4,
        ..TrainingConfig::default()
    }
}
