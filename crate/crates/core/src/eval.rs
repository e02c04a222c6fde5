//! Span-level scoring: per-class precision/recall/F1, the harmonic mean of
//! class F1 scores, and micro-averaged F1.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use thiserror::Error;

use crate::corpus::{Dataset, EntityCategory, Tag};

/// An entity: category plus inclusive token boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntitySpan {
    pub category: EntityCategory,
    pub start: usize,
    pub end: usize,
}

impl EntitySpan {
    pub fn new(category: EntityCategory, start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { category, start, end }
    }
}

/// Extracts maximal spans. `B-X` always opens a span; `I-X` continues an open
/// span of the same category and otherwise opens a new one.
pub fn extract_entities(tags: &[Tag]) -> Vec<EntitySpan> {
    let mut spans = Vec::new();
    let mut open: Option<EntitySpan> = None;
    for (i, tag) in tags.iter().enumerate() {
        match *tag {
            Tag::O => spans.extend(open.take()),
            Tag::B(c) => {
                spans.extend(open.take());
                open = Some(EntitySpan::new(c, i, i));
            }
            Tag::I(c) => match &mut open {
                Some(span) if span.category == c => span.end = i,
                _ => {
                    spans.extend(open.take());
                    open = Some(EntitySpan::new(c, i, i));
                }
            },
        }
    }
    spans.extend(open);
    spans
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassScore {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ClassScore {
    fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Self { tp, fp, fn_, precision, recall, f1 }
    }

    /// Gold support.
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indexed by [`EntityCategory::index`].
    pub classes: [ClassScore; 9],
    /// Categories occurring in gold or prediction, in enumeration order.
    pub evaluated: Vec<EntityCategory>,
    pub harmonic_f1: f64,
    pub micro: ClassScore,
    pub sentences: usize,
    pub tokens: usize,
    /// Token-level tag accuracy.
    pub accuracy: f64,
}

impl EvalReport {
    pub fn class(&self, category: EntityCategory) -> &ClassScore {
        &self.classes[category.index()]
    }

    /// Arithmetic mean of the evaluated classes' F1 (macro F1).
    pub fn macro_f1(&self) -> f64 {
        if self.evaluated.is_empty() {
            return self.harmonic_f1;
        }
        self.evaluated.iter().map(|c| self.class(*c).f1).sum::<f64>() / self.evaluated.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("gold has {gold} sentences but prediction has {pred}")]
    SentenceCount { gold: usize, pred: usize },
    #[error("sentence {index}: gold has {gold} tokens but prediction has {pred}")]
    Length { index: usize, gold: usize, pred: usize },
    #[error("sentence {index}: missing tags")]
    Unlabeled { index: usize },
}

/// `n / Σ 1/v_i`, or 0 if any value is 0. Panics on empty input.
pub fn harmonic_mean(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "harmonic mean of an empty sequence");
    if values.iter().any(|v| *v <= 0.0) {
        return 0.0;
    }
    values.len() as f64 / values.iter().map(|v| 1.0 / v).sum::<f64>()
}

/// Exact-match span scoring of aligned gold and predicted datasets.
///
/// The harmonic mean runs over categories present in gold or prediction. When
/// neither side has any entity the agreement is perfect and both aggregates
/// are 1.
pub fn score(gold: &Dataset, pred: &Dataset) -> Result<EvalReport, ScoreError> {
    if gold.len() != pred.len() {
        return Err(ScoreError::SentenceCount { gold: gold.len(), pred: pred.len() });
    }
    let mut tp = [0usize; 9];
    let mut fp = [0usize; 9];
    let mut fn_ = [0usize; 9];
    let mut seen = [false; 9];
    let mut tokens = 0;
    let mut correct = 0;
    for (index, (g, p)) in gold.sentences.iter().zip(&pred.sentences).enumerate() {
        let gt = g.tags.as_deref().ok_or(ScoreError::Unlabeled { index })?;
        let pt = p.tags.as_deref().ok_or(ScoreError::Unlabeled { index })?;
        if gt.len() != pt.len() {
            return Err(ScoreError::Length { index, gold: gt.len(), pred: pt.len() });
        }
        tokens += gt.len();
        correct += gt.iter().zip(pt).filter(|(a, b)| a == b).count();
        let gs: BTreeSet<EntitySpan> = extract_entities(gt).into_iter().collect();
        let ps: BTreeSet<EntitySpan> = extract_entities(pt).into_iter().collect();
        for span in &gs {
            seen[span.category.index()] = true;
            if ps.contains(span) {
                tp[span.category.index()] += 1;
            } else {
                fn_[span.category.index()] += 1;
            }
        }
        for span in ps.difference(&gs) {
            seen[span.category.index()] = true;
            fp[span.category.index()] += 1;
        }
    }

    let classes: [ClassScore; 9] = core::array::from_fn(|i| ClassScore::from_counts(tp[i], fp[i], fn_[i]));
    let evaluated: Vec<EntityCategory> =
        EntityCategory::ALL.iter().copied().filter(|c| seen[c.index()]).collect();
    let micro = ClassScore::from_counts(tp.iter().sum(), fp.iter().sum(), fn_.iter().sum());
    let (harmonic_f1, micro) = if evaluated.is_empty() {
        (1.0, ClassScore { precision: 1.0, recall: 1.0, f1: 1.0, ..micro })
    } else {
        let f1s: Vec<f64> = evaluated.iter().map(|c| classes[c.index()].f1).collect();
        (harmonic_mean(&f1s), micro)
    };
    Ok(EvalReport {
        classes,
        evaluated,
        harmonic_f1,
        micro,
        sentences: gold.len(),
        tokens,
        accuracy: if tokens == 0 { 1.0 } else { correct as f64 / tokens as f64 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EntityCategory::*, Split, TaggedSentence};
    use alloc::vec;
    use proptest::prelude::*;

    /// Enumerates every (start, end) window and keeps the maximal well-formed ones.
    fn segmentation_oracle(tags: &[Tag]) -> Vec<EntitySpan> {
        let mut out = Vec::new();
        for start in 0..tags.len() {
            let Some(cat) = tags[start].category() else { continue };
            let opens = match tags[start] {
                Tag::B(_) => true,
                _ => start == 0 || tags[start - 1].category() != Some(cat),
            };
            if !opens {
                continue;
            }
            for end in start..tags.len() {
                let inner_ok = (start + 1..=end).all(|k| tags[k] == Tag::I(cat));
                let closes = end + 1 == tags.len() || tags[end + 1] != Tag::I(cat);
                if inner_ok && closes {
                    out.push(EntitySpan::new(cat, start, end));
                }
            }
        }
        out
    }

    fn sent(tags: Vec<Tag>) -> TaggedSentence {
        let tokens = tags.iter().map(|_| alloc::string::String::from("w")).collect();
        TaggedSentence::labeled(tokens, tags)
    }

    #[test]
    fn extraction_examples() {
        assert_eq!(extract_entities(&[Tag::B(Person), Tag::I(Person), Tag::O]), vec![EntitySpan::new(Person, 0, 1)]);
        assert!(extract_entities(&[Tag::O, Tag::O]).is_empty());
        let tags = [Tag::I(Location), Tag::I(Location), Tag::B(Location)];
        let expected = vec![EntitySpan::new(Location, 0, 1), EntitySpan::new(Location, 2, 2)];
        assert_eq!(segmentation_oracle(&tags), expected);
        assert_eq!(extract_entities(&tags), expected);
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic_mean(&[0.3]), 0.3);
        assert_eq!(harmonic_mean(&[1.0, 1.0, 1.0]), 1.0);
        assert!((harmonic_mean(&[0.5, 1.0]) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(harmonic_mean(&[0.5, 0.0]), 0.0);
    }

    #[test]
    #[should_panic]
    fn harmonic_empty_panics() {
        harmonic_mean(&[]);
    }

    #[test]
    fn hand_counted_report() {
        let gold = Dataset::new(
            vec![sent(vec![Tag::B(Person), Tag::I(Person), Tag::O, Tag::B(Location)])],
            Split::Dev,
        );
        let pred = Dataset::new(
            vec![sent(vec![Tag::B(Person), Tag::I(Person), Tag::O, Tag::B(Organization)])],
            Split::Dev,
        );
        let r = score(&gold, &pred).unwrap();
        assert_eq!(r.class(Person).f1, 1.0);
        assert_eq!(r.class(Location).f1, 0.0);
        assert_eq!(r.class(Organization).f1, 0.0);
        assert_eq!(r.evaluated, vec![Person, Location, Organization]);
        assert_eq!(r.harmonic_f1, 0.0);
        assert!((r.micro.f1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_miss() {
        let gold = Dataset::new(vec![sent(vec![Tag::B(Person), Tag::I(Person)])], Split::Dev);
        let pred = Dataset::new(vec![sent(vec![Tag::B(Person), Tag::O])], Split::Dev);
        let r = score(&gold, &pred).unwrap();
        let c = r.class(Person);
        assert_eq!((c.tp, c.fp, c.fn_), (0, 1, 1));
    }

    #[test]
    fn alignment_errors() {
        let gold = Dataset::new(vec![sent(vec![Tag::O]), sent(vec![Tag::O, Tag::O])], Split::Dev);
        let pred = Dataset::new(vec![sent(vec![Tag::O]), sent(vec![Tag::O])], Split::Dev);
        assert_eq!(score(&gold, &pred).unwrap_err(), ScoreError::Length { index: 1, gold: 2, pred: 1 });
        let short = Dataset::new(vec![sent(vec![Tag::O])], Split::Dev);
        assert!(matches!(score(&gold, &short), Err(ScoreError::SentenceCount { .. })));
    }

    #[test]
    fn all_outside_self_eval_is_perfect() {
        let d = Dataset::new(vec![sent(vec![Tag::O, Tag::O])], Split::Dev);
        let r = score(&d, &d).unwrap();
        assert_eq!(r.harmonic_f1, 1.0);
        assert_eq!(r.micro.f1, 1.0);
    }

    fn arb_tags() -> impl Strategy<Value = Vec<Tag>> {
        proptest::collection::vec((0..Tag::COUNT).prop_map(|i| Tag::from_index(i).unwrap()), 0..12)
    }

    proptest! {
        #[test]
        fn extraction_matches_oracle(tags in arb_tags()) {
            prop_assert_eq!(extract_entities(&tags), segmentation_oracle(&tags));
        }

        #[test]
        fn self_score_is_one(rows in proptest::collection::vec(arb_tags(), 1..6)) {
            let d = Dataset::new(rows.into_iter().map(sent).collect(), Split::Dev);
            let r = score(&d, &d).unwrap();
            prop_assert_eq!(r.harmonic_f1, 1.0);
        }

        #[test]
        fn fp_fn_symmetry_and_mean_bound(pairs in proptest::collection::vec((1usize..10, any::<u64>()), 1..6)) {
            use rand::{Rng, SeedableRng};
            let mut gold = Vec::new();
            let mut pred = Vec::new();
            for (len, seed) in pairs {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let mut draw = |n: usize| (0..n).map(|_| Tag::from_index(rng.gen_range(0..7)).unwrap()).collect::<Vec<_>>();
                gold.push(sent(draw(len)));
                pred.push(sent(draw(len)));
            }
            let g = Dataset::new(gold, Split::Dev);
            let p = Dataset::new(pred, Split::Dev);
            let a = score(&g, &p).unwrap();
            let b = score(&p, &g).unwrap();
            for c in EntityCategory::ALL {
                prop_assert_eq!(a.class(c).fp, b.class(c).fn_);
            }
            prop_assert!(a.harmonic_f1 <= a.macro_f1() + 1e-12);
        }
    }
}
