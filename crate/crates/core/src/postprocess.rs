//! Deterministic repair of predicted IOB sequences.
//!
//! Two rules, applied in this order:
//!
//! 1. [`repair_gap_o`]: `O` tags sitting between `B-X`/`I-X` and a following
//!    `I-X` become `I-X`. The scan runs left to right and a freshly written
//!    `I-X` licenses the next position, so whole runs of `O` are filled.
//! 2. [`repair_b_category`]: a `B-X` directly followed by `I-Y` (`X != Y`)
//!    takes the category of the `I` tag.
//!
//! Orphan `I-X` tags after `O` are left alone; span extraction treats them as
//! entity starts.

use alloc::vec::Vec;

use crate::corpus::{Dataset, Tag};

pub fn repair_gap_o(tags: &[Tag]) -> Vec<Tag> {
    let mut out = tags.to_vec();
    let mut i = 1;
    while i < out.len() {
        if out[i] != Tag::O {
            i += 1;
            continue;
        }
        let Some(category) = out[i - 1].category() else {
            i += 1;
            continue;
        };
        let end = out[i..].iter().position(|t| *t != Tag::O).map(|p| i + p);
        match end {
            Some(end) if out[end] == Tag::I(category) => {
                for tag in &mut out[i..end] {
                    *tag = Tag::I(category);
                }
                i = end;
            }
            Some(end) => i = end,
            None => break,
        }
    }
    out
}

pub fn repair_b_category(tags: &[Tag]) -> Vec<Tag> {
    let mut out = tags.to_vec();
    for i in 0..out.len().saturating_sub(1) {
        if let (Tag::B(x), Tag::I(y)) = (out[i], out[i + 1]) {
            if x != y {
                out[i] = Tag::B(y);
            }
        }
    }
    out
}

pub fn postprocess_sentence(tags: &[Tag]) -> Vec<Tag> {
    repair_b_category(&repair_gap_o(tags))
}

/// Applies [`postprocess_sentence`] to every labeled sentence.
pub fn postprocess_dataset(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    for sentence in &mut out.sentences {
        if let Some(tags) = &mut sentence.tags {
            *tags = postprocess_sentence(tags);
        }
    }
    out
}
