//! IOB-tagged corpora in the two-column `token<TAB>tag` format.
//!
//! Sentences are separated by blank lines. A line holding only a token (no TAB)
//! is an unlabeled token; a sentence must be either fully labeled or fully
//! unlabeled, and so must the whole document.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::eval::extract_entities;

/// The nine entity categories, in the fixed enumeration order used for tag indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EntityCategory {
    Person,
    Location,
    Product,
    Title,
    Organization,
    Group,
    Time,
    Event,
    Other,
}

impl EntityCategory {
    pub const ALL: [EntityCategory; 9] = [
        EntityCategory::Person,
        EntityCategory::Location,
        EntityCategory::Product,
        EntityCategory::Title,
        EntityCategory::Organization,
        EntityCategory::Group,
        EntityCategory::Time,
        EntityCategory::Event,
        EntityCategory::Other,
    ];

    /// Short label as it appears after the `B-`/`I-` prefix.
    pub fn code(self) -> &'static str {
        match self {
            EntityCategory::Person => "PER",
            EntityCategory::Location => "LOC",
            EntityCategory::Product => "PROD",
            EntityCategory::Title => "TITLE",
            EntityCategory::Organization => "ORG",
            EntityCategory::Group => "GROUP",
            EntityCategory::Time => "TIME",
            EntityCategory::Event => "EVENT",
            EntityCategory::Other => "OTHER",
        }
    }

    /// Human-readable name used in reports.
    pub fn name(self) -> &'static str {
        match self {
            EntityCategory::Person => "Person",
            EntityCategory::Location => "Location",
            EntityCategory::Product => "Product",
            EntityCategory::Title => "Title",
            EntityCategory::Organization => "Organization",
            EntityCategory::Group => "Group",
            EntityCategory::Time => "Time",
            EntityCategory::Event => "Event",
            EntityCategory::Other => "Other",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|c| c.code() == code)
    }
}

impl fmt::Display for EntityCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// An IOB tag. There are `1 + 2 * 9 = 19` of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tag {
    O,
    B(EntityCategory),
    I(EntityCategory),
}

impl Tag {
    pub const COUNT: usize = 19;

    /// Index in the fixed enumeration: `O`, then `B-X`, `I-X` per category.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::B(c) => 1 + 2 * c.index(),
            Tag::I(c) => 2 + 2 * c.index(),
        }
    }

    pub fn from_index(index: usize) -> Option<Tag> {
        match index {
            0 => Some(Tag::O),
            i if i < Self::COUNT => {
                let category = EntityCategory::ALL[(i - 1) / 2];
                Some(if i % 2 == 1 { Tag::B(category) } else { Tag::I(category) })
            }
            _ => None,
        }
    }

    pub fn all() -> impl Iterator<Item = Tag> {
        (0..Self::COUNT).filter_map(Tag::from_index)
    }

    pub fn category(self) -> Option<EntityCategory> {
        match self {
            Tag::O => None,
            Tag::B(c) | Tag::I(c) => Some(c),
        }
    }

    pub fn is_outside(self) -> bool {
        self == Tag::O
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::O => f.write_str("O"),
            Tag::B(c) => write!(f, "B-{}", c.code()),
            Tag::I(c) => write!(f, "I-{}", c.code()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed tag `{0}`")]
pub struct TagParseError(pub String);

impl FromStr for Tag {
    type Err = TagParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "O" {
            return Ok(Tag::O);
        }
        let bad = || TagParseError(s.to_string());
        let (prefix, code) = s.split_once('-').ok_or_else(bad)?;
        let category = EntityCategory::from_code(code).ok_or_else(bad)?;
        match prefix {
            "B" => Ok(Tag::B(category)),
            "I" => Ok(Tag::I(category)),
            _ => Err(bad()),
        }
    }
}

/// One sentence. `tags` is `None` for unlabeled data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    pub tags: Option<Vec<Tag>>,
}

impl TaggedSentence {
    pub fn labeled(tokens: Vec<String>, tags: Vec<Tag>) -> Self {
        assert_eq!(tokens.len(), tags.len(), "token/tag length mismatch");
        Self { tokens, tags: Some(tags) }
    }

    pub fn unlabeled(tokens: Vec<String>) -> Self {
        Self { tokens, tags: None }
    }

    /// Convenience constructor for `(token, tag)` pairs.
    pub fn from_pairs<S: AsRef<str>>(pairs: &[(S, Tag)]) -> Self {
        let tokens = pairs.iter().map(|(t, _)| t.as_ref().to_string()).collect();
        let tags = pairs.iter().map(|(_, tag)| *tag).collect();
        Self::labeled(tokens, tags)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Dataset {
    pub sentences: Vec<TaggedSentence>,
    pub split: Split,
}

impl Dataset {
    pub fn new(sentences: Vec<TaggedSentence>, split: Split) -> Self {
        Self { sentences, split }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(TaggedSentence::len).sum()
    }

    /// True when every sentence carries gold tags (vacuously true when empty).
    pub fn is_labeled(&self) -> bool {
        self.sentences.iter().all(|s| s.tags.is_some())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: {source}")]
    BadTag { line: usize, source: TagParseError },
    #[error("line {line}: mixed labeled and unlabeled tokens")]
    MixedLabels { line: usize },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
}

/// Parses a two-column document. Line numbers in errors are 1-based.
pub fn parse_conll(text: &str, split: Split) -> Result<Dataset, ParseError> {
    let mut sentences = Vec::new();
    let mut tokens: Vec<String> = Vec::new();
    let mut tags: Vec<Tag> = Vec::new();
    let mut document_labeled: Option<bool> = None;

    let mut flush = |tokens: &mut Vec<String>, tags: &mut Vec<Tag>, labeled: Option<bool>| {
        if tokens.is_empty() {
            return;
        }
        let toks = core::mem::take(tokens);
        let sentence = if labeled == Some(true) {
            TaggedSentence::labeled(toks, core::mem::take(tags))
        } else {
            TaggedSentence::unlabeled(toks)
        };
        sentences.push(sentence);
    };

    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.is_empty() {
            flush(&mut tokens, &mut tags, document_labeled);
            continue;
        }
        let (token, tag) = match line.split_once('\t') {
            Some((tok, tag)) => (tok, Some(tag)),
            None => (line, None),
        };
        if token.is_empty() {
            return Err(ParseError::EmptyToken { line: line_no });
        }
        let labeled = tag.is_some();
        match document_labeled {
            None => document_labeled = Some(labeled),
            Some(prev) if prev != labeled => return Err(ParseError::MixedLabels { line: line_no }),
            Some(_) => {}
        }
        if let Some(tag) = tag {
            let parsed = tag
                .parse::<Tag>()
                .map_err(|source| ParseError::BadTag { line: line_no, source })?;
            tags.push(parsed);
        }
        tokens.push(token.to_string());
    }
    flush(&mut tokens, &mut tags, document_labeled);
    Ok(Dataset::new(sentences, split))
}

/// Writes the two-column format; each sentence is followed by a blank line.
pub fn write_conll(dataset: &Dataset) -> String {
    let mut out = String::new();
    for sentence in &dataset.sentences {
        for (i, token) in sentence.tokens.iter().enumerate() {
            out.push_str(token);
            if let Some(tags) = &sentence.tags {
                out.push('\t');
                out.push_str(&tags[i].to_string());
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// `O` inside a gap opened by `B-X`/`I-X` and closed by `I-X`.
    GapO,
    /// `I-Y` directly after `B-X`, `X != Y`.
    CategoryMismatch,
    /// `I-X` after `O` or at sentence start.
    OrphanInside,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

/// Reports IOB inconsistencies in a tag sequence. Never fails.
///
/// A gap violation is reported for every `O` of a maximal run of `O`s whose
/// left neighbour is `B-X` or `I-X` and whose right neighbour is `I-X`. The
/// `I-X` closing such a gap is not reported again as an orphan.
pub fn validate_iob(tags: &[Tag]) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut gap_end = None;
    let mut i = 0;
    while i < tags.len() {
        match tags[i] {
            Tag::O => {
                let start = i;
                while i < tags.len() && tags[i] == Tag::O {
                    i += 1;
                }
                let left = start.checked_sub(1).and_then(|j| tags[j].category());
                let right = match tags.get(i) {
                    Some(Tag::I(c)) => Some(*c),
                    _ => None,
                };
                if left.is_some() && left == right {
                    out.extend((start..i).map(|index| Violation { index, kind: ViolationKind::GapO }));
                    gap_end = Some(i);
                }
                continue;
            }
            Tag::I(c) => {
                let prev = i.checked_sub(1).map(|j| tags[j]);
                match prev {
                    Some(Tag::O) if gap_end == Some(i) => {}
                    None | Some(Tag::O) => out.push(Violation { index: i, kind: ViolationKind::OrphanInside }),
                    Some(Tag::B(p)) if p != c => {
                        out.push(Violation { index: i, kind: ViolationKind::CategoryMismatch })
                    }
                    _ => {}
                }
            }
            Tag::B(_) => {}
        }
        i += 1;
    }
    out.sort_by_key(|v| v.index);
    out
}

/// Corpus summary: word count and entity counts per category.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetStats {
    pub sentences: usize,
    pub words: usize,
    pub entities: [usize; 9],
}

impl DatasetStats {
    pub fn count(&self, category: EntityCategory) -> usize {
        self.entities[category.index()]
    }
}

pub fn dataset_stats(dataset: &Dataset) -> DatasetStats {
    let mut stats = DatasetStats { sentences: dataset.len(), ..Default::default() };
    for sentence in &dataset.sentences {
        stats.words += sentence.len();
        if let Some(tags) = &sentence.tags {
            for span in extract_entities(tags) {
                stats.entities[span.category.index()] += 1;
            }
        }
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use EntityCategory::*;

    #[test]
    fn parses_two_token_entity() {
        let d = parse_conll("Kendrick\tB-PER\nLamar\tI-PER\n\n", Split::Train).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.sentences[0].tags, Some(vec![Tag::B(Person), Tag::I(Person)]));
        assert_eq!(d.sentences[0].tokens, vec!["Kendrick", "Lamar"]);
    }

    #[test]
    fn empty_document() {
        assert!(parse_conll("", Split::Dev).unwrap().is_empty());
        assert!(parse_conll("\n\n\n", Split::Dev).unwrap().is_empty());
    }

    #[test]
    fn blank_line_separates() {
        let d = parse_conll("hola\tO\n\nadios\tO\n", Split::Train).unwrap();
        assert_eq!(d.len(), 2);
        assert!(d.sentences.iter().all(|s| s.len() == 1));
    }

    #[test]
    fn unlabeled_and_crlf() {
        let d = parse_conll("todos\r\nlos\r\n\r\nDomingos", Split::Test).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.sentences[0].tokens, vec!["todos", "los"]);
        assert!(d.sentences[0].tags.is_none());
    }

    #[test]
    fn tokens_keep_special_characters() {
        let d = parse_conll("Twets/wek\tO\n#yolo\tO\n@ana\tB-PER\n", Split::Train).unwrap();
        assert_eq!(d.sentences[0].tokens, vec!["Twets/wek", "#yolo", "@ana"]);
    }

    #[test]
    fn bad_tag_reports_line() {
        let err = parse_conll("a\tO\nb\tB-FOO\n", Split::Train).unwrap_err();
        assert!(matches!(err, ParseError::BadTag { line: 2, .. }));
        let err = parse_conll("a\tX-PER\n", Split::Train).unwrap_err();
        assert!(matches!(err, ParseError::BadTag { line: 1, .. }));
    }

    #[test]
    fn mixed_labels_rejected() {
        let err = parse_conll("a\tO\nb\n", Split::Train).unwrap_err();
        assert_eq!(err, ParseError::MixedLabels { line: 2 });
        let err = parse_conll("a\tO\n\nb\n", Split::Train).unwrap_err();
        assert_eq!(err, ParseError::MixedLabels { line: 3 });
    }

    #[test]
    fn write_single_token() {
        let d = Dataset::new(vec![TaggedSentence::from_pairs(&[("a", Tag::O)])], Split::Train);
        assert_eq!(write_conll(&d), "a\tO\n\n");
        assert_eq!(write_conll(&Dataset::default()), "");
    }

    #[test]
    fn tag_inventory() {
        let all: Vec<Tag> = Tag::all().collect();
        assert_eq!(all.len(), 19);
        for (i, t) in all.iter().enumerate() {
            assert_eq!(t.index(), i);
            assert_eq!(t.to_string().parse::<Tag>().unwrap(), *t);
        }
        assert_eq!(Tag::from_index(19), None);
        assert_eq!(Tag::from_index(1), Some(Tag::B(Person)));
        assert_eq!(Tag::from_index(4), Some(Tag::I(Location)));
    }

    #[test]
    fn validator_examples() {
        assert!(validate_iob(&[Tag::B(Person), Tag::I(Person)]).is_empty());
        assert_eq!(
            validate_iob(&[Tag::B(Person), Tag::O, Tag::I(Person)]),
            vec![Violation { index: 1, kind: ViolationKind::GapO }]
        );
        assert_eq!(
            validate_iob(&[Tag::B(Location), Tag::I(Person)]),
            vec![Violation { index: 1, kind: ViolationKind::CategoryMismatch }]
        );
        assert_eq!(
            validate_iob(&[Tag::I(Time), Tag::O, Tag::I(Time)]),
            vec![
                Violation { index: 0, kind: ViolationKind::OrphanInside },
                Violation { index: 1, kind: ViolationKind::GapO },
            ]
        );
        // category mismatch across the gap is not a gap violation, the I is an orphan
        assert_eq!(
            validate_iob(&[Tag::B(Person), Tag::O, Tag::I(Location)]),
            vec![Violation { index: 2, kind: ViolationKind::OrphanInside }]
        );
    }

    #[test]
    fn stats_hand_count() {
        let d = parse_conll(
            "Kendrick\tB-PER\nLamar\tI-PER\nen\tO\nMadrid\tB-LOC\n\nvi\tO\na\tO\nShakira\tB-PER\n",
            Split::Train,
        )
        .unwrap();
        let s = dataset_stats(&d);
        assert_eq!(s.words, 7);
        assert_eq!(s.sentences, 2);
        assert_eq!(s.count(Person), 2);
        assert_eq!(s.count(Location), 1);
        assert_eq!(s.entities.iter().sum::<usize>(), 3);
        assert_eq!(dataset_stats(&Dataset::default()), DatasetStats::default());
    }
}
