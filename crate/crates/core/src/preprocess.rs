//! Token replacement and vocabulary-driven token normalization.
//!
//! Replacement maps user mentions and hashtags to `USR` and links to `URL`.
//! Normalization rewrites an out-of-vocabulary token with the first of four
//! heuristics whose result is in the vocabulary:
//!
//! * (a) uppercase the first character,
//! * (b) lowercase the word,
//! * (c) lowercase, then collapse repeated characters,
//! * (d) (c) followed by (a).

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::{Dataset, Tag};
use crate::embeddings::{Vocabulary, URL_TOKEN, USR_TOKEN};

/// Which rule produced a [`NormalizedToken`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    None,
    ReplacementUsr,
    ReplacementUrl,
    HeuristicA,
    HeuristicB,
    HeuristicC,
    HeuristicD,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedToken {
    pub original: String,
    pub result: String,
    pub rule: Rule,
}

const URL_PREFIXES: [&str; 3] = ["http://", "https://", "www."];

fn has_prefix_ignore_case(t: &str, prefix: &str) -> bool {
    t.len() >= prefix.len() && t.is_char_boundary(prefix.len()) && t[..prefix.len()].eq_ignore_ascii_case(prefix)
}

fn replacement(t: &str) -> Option<(&'static str, Rule)> {
    if (t.starts_with('#') || t.starts_with('@')) && t.chars().count() >= 2 {
        return Some((USR_TOKEN, Rule::ReplacementUsr));
    }
    if URL_PREFIXES.iter().any(|p| has_prefix_ignore_case(t, p)) {
        return Some((URL_TOKEN, Rule::ReplacementUrl));
    }
    None
}

/// `#x`/`@x` become `USR`; `http://`, `https://` and `www.` links become `URL`.
pub fn replace_token(t: &str) -> String {
    match replacement(t) {
        Some((r, _)) => r.to_string(),
        None => t.to_string(),
    }
}

/// Repeat-collapsing policy. Runs of `min_run` or more identical characters
/// shrink to one character; then adjacent copies of any unit whose length is
/// in `unit_lengths` shrink to one copy. Both steps repeat until nothing changes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepeatPolicy {
    pub min_run: usize,
    pub unit_lengths: Vec<usize>,
}

impl Default for RepeatPolicy {
    fn default() -> Self {
        Self { min_run: 3, unit_lengths: alloc::vec![2, 3] }
    }
}

impl RepeatPolicy {
    pub fn apply(&self, t: &str) -> String {
        let mut chars: Vec<char> = t.chars().collect();
        loop {
            let collapsed = self.collapse_units(&self.collapse_runs(&chars));
            if collapsed == chars {
                return chars.into_iter().collect();
            }
            chars = collapsed;
        }
    }

    fn collapse_runs(&self, chars: &[char]) -> Vec<char> {
        let mut out = Vec::with_capacity(chars.len());
        let mut i = 0;
        while i < chars.len() {
            let mut j = i;
            while j < chars.len() && chars[j] == chars[i] {
                j += 1;
            }
            let run = j - i;
            let keep = if run >= self.min_run.max(2) { 1 } else { run };
            out.extend(core::iter::repeat(chars[i]).take(keep));
            i = j;
        }
        out
    }

    fn collapse_units(&self, chars: &[char]) -> Vec<char> {
        let mut cur = chars.to_vec();
        loop {
            let mut changed = false;
            let mut i = 0;
            while i < cur.len() {
                for &k in &self.unit_lengths {
                    if k == 0 {
                        continue;
                    }
                    while i + 2 * k <= cur.len() && cur[i..i + k] == cur[i + k..i + 2 * k] {
                        cur.drain(i + k..i + 2 * k);
                        changed = true;
                    }
                }
                i += 1;
            }
            if !changed {
                return cur;
            }
        }
    }
}

/// Collapses repeated characters with the default [`RepeatPolicy`].
pub fn strip_repeats(t: &str) -> String {
    RepeatPolicy::default().apply(t)
}

fn capitalize_first(t: &str) -> String {
    let mut chars = t.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// The four normalization candidates of `t`, in trial order.
pub fn candidates(t: &str, policy: &RepeatPolicy) -> [(String, Rule); 4] {
    let lower = t.to_lowercase();
    let stripped = policy.apply(&lower);
    let capitalized = capitalize_first(&stripped);
    [
        (capitalize_first(t), Rule::HeuristicA),
        (lower, Rule::HeuristicB),
        (stripped, Rule::HeuristicC),
        (capitalized, Rule::HeuristicD),
    ]
}

/// Every surface form normalization might look up for `t`: the replaced token
/// and its four candidates. Used to prune large vector files without changing
/// normalization results.
pub fn lookup_forms(t: &str) -> impl Iterator<Item = String> {
    let replaced = replace_token(t);
    let cands = candidates(&replaced, &RepeatPolicy::default());
    core::iter::once(replaced).chain(cands.into_iter().map(|(c, _)| c))
}

pub fn normalize_token(t: &str, vocab: &Vocabulary) -> NormalizedToken {
    normalize_with(t, vocab, &RepeatPolicy::default())
}

pub fn normalize_with(t: &str, vocab: &Vocabulary, policy: &RepeatPolicy) -> NormalizedToken {
    let done = |result: String, rule| NormalizedToken { original: t.to_string(), result, rule };
    if vocab.contains(t) {
        return done(t.to_string(), Rule::None);
    }
    for (candidate, rule) in candidates(t, policy) {
        if vocab.contains(&candidate) {
            return done(candidate, rule);
        }
    }
    done(t.to_string(), Rule::Unresolved)
}

/// Replacement followed by normalization, recording which rule fired.
pub fn preprocess_token(t: &str, vocab: &Vocabulary) -> NormalizedToken {
    match replacement(t) {
        Some((r, rule)) => NormalizedToken { original: t.to_string(), result: r.to_string(), rule },
        None => normalize_token(t, vocab),
    }
}

/// Applies [`preprocess_token`] to every token; tags and boundaries are kept.
pub fn preprocess_dataset(dataset: &Dataset, vocab: &Vocabulary) -> Dataset {
    let mut out = dataset.clone();
    for sentence in &mut out.sentences {
        for token in &mut sentence.tokens {
            *token = preprocess_token(token, vocab).result;
        }
    }
    out
}

/// Replacement only, no normalization.
pub fn replace_dataset(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    for sentence in &mut out.sentences {
        for token in &mut sentence.tokens {
            *token = replace_token(token);
        }
    }
    out
}

/// OOV counts over token occurrences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OovReport {
    pub tokens: usize,
    pub oov: usize,
    /// `None` when the dataset carries no tags.
    pub entity_tokens: Option<usize>,
    pub entity_oov: Option<usize>,
}

impl OovReport {
    /// Percentage of all tokens that are out of vocabulary.
    pub fn all_rate(&self) -> f64 {
        percent(self.oov, self.tokens)
    }

    /// Percentage of entity tokens (tag other than `O`) that are out of vocabulary.
    pub fn entity_rate(&self) -> Option<f64> {
        Some(percent(self.entity_oov?, self.entity_tokens?))
    }
}

fn percent(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        100.0 * n as f64 / d as f64
    }
}

pub fn oov_report(dataset: &Dataset, vocab: &Vocabulary) -> OovReport {
    oov_report_by(dataset, |t| vocab.contains(t))
}

/// Same as [`oov_report`] with an arbitrary membership predicate.
pub fn oov_report_by(dataset: &Dataset, in_vocab: impl Fn(&str) -> bool) -> OovReport {
    let labeled = !dataset.is_empty() && dataset.is_labeled();
    let mut r = OovReport {
        entity_tokens: labeled.then_some(0),
        entity_oov: labeled.then_some(0),
        ..Default::default()
    };
    for sentence in &dataset.sentences {
        for (i, token) in sentence.tokens.iter().enumerate() {
            let oov = !in_vocab(token);
            r.tokens += 1;
            r.oov += oov as usize;
            if let (Some(tags), Some(et), Some(eo)) = (&sentence.tags, &mut r.entity_tokens, &mut r.entity_oov) {
                if tags[i] != Tag::O {
                    *et += 1;
                    *eo += oov as usize;
                }
            }
        }
    }
    r
}

/// Distinct tokens of a dataset, used to build corpus-only vocabularies.
pub fn token_types(dataset: &Dataset) -> BTreeSet<String> {
    dataset.sentences.iter().flat_map(|s| s.tokens.iter().cloned()).collect()
}
