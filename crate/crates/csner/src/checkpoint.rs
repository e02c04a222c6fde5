//! Checkpoint files.
//!
//! A checkpoint is a UTF-8 text header followed by a little-endian binary
//! payload:
//!
//! ```text
//! CSNER1
//! version 1
//! config <key> <value>          one per training setting
//! model <key> <value>           one per model setting
//! epoch <n>
//! dev_score <f64>
//! tensor <name> <rows>x<cols> <offset> <f32|f64>
//! words <count> <dim> <offset> <bytes>
//! chars <count> <offset> <bytes>
//! payload <bytes>
//! end
//! ```
//!
//! Offsets are relative to the first payload byte. The word block holds the
//! vocabulary as `u32` length-prefixed UTF-8 tokens followed by the `f32`
//! vectors; the char block holds the non-reserved characters the same way.
//! Regions must tile the payload exactly.

use std::path::Path;

use csner_core::autodiff::{ParamStore, Tensor};
use csner_core::model::{ModelConfig, ModelError};
use csner_core::trainer::Precision;
use csner_core::{CharVocabulary, Checkpoint, EmbeddingTable, TrainingConfig, Vocabulary};
use thiserror::Error;

use crate::config::{set_training, training_settings};

pub const MAGIC: &str = "CSNER1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint file (bad magic)")]
    Magic,
    #[error("unsupported checkpoint version `{0}`")]
    Version(String),
    #[error("header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("payload has {found} bytes, header declares {declared}")]
    Truncated { declared: usize, found: usize },
    #[error("payload layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Default)]
struct Payload {
    bytes: Vec<u8>,
}

impl Payload {
    fn put_str(&mut self, s: &str) {
        self.bytes.extend_from_slice(&(s.len() as u32).to_le_bytes());
        self.bytes.extend_from_slice(s.as_bytes());
    }
}

fn model_settings(m: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("word_dim", m.word_dim.to_string()),
        ("char_dim", m.char_dim.to_string()),
        ("char_hidden", m.char_hidden.to_string()),
        ("word_hidden", m.word_hidden.to_string()),
        ("num_tags", m.num_tags.to_string()),
        ("dropout", m.dropout.to_string()),
        ("init_scale", m.init_scale.to_string()),
    ]
}

/// Serializes a checkpoint. Tensors are written as `f32` unless the run used
/// `f64` precision.
pub fn encode(c: &Checkpoint) -> Vec<u8> {
    let mut header = format!("{MAGIC}\nversion {VERSION}\n");
    for (k, v) in training_settings(&c.config) {
        header += &format!("config {k} {v}\n");
    }
    for (k, v) in model_settings(&c.model) {
        header += &format!("model {k} {v}\n");
    }
    header += &format!("epoch {}\ndev_score {}\n", c.epoch, c.dev_score);

    let mut payload = Payload::default();
    let wide = c.config.precision == Precision::F64;
    for (_, name, t) in c.params.iter() {
        let offset = payload.bytes.len();
        for v in t.data() {
            if wide {
                payload.bytes.extend_from_slice(&v.to_le_bytes());
            } else {
                payload.bytes.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let dtype = if wide { "f64" } else { "f32" };
        header += &format!("tensor {name} {}x{} {offset} {dtype}\n", t.rows(), t.cols());
    }
    let offset = payload.bytes.len();
    for token in c.words.vocabulary.tokens() {
        payload.put_str(token);
    }
    for v in c.words.vectors() {
        payload.bytes.extend_from_slice(&v.to_le_bytes());
    }
    header += &format!(
        "words {} {} {offset} {}\n",
        c.words.len(),
        c.words.dim(),
        payload.bytes.len() - offset
    );
    let offset = payload.bytes.len();
    for ch in c.chars.chars() {
        payload.put_str(ch.encode_utf8(&mut [0; 4]));
    }
    header += &format!("chars {} {offset} {}\n", c.chars.chars().len(), payload.bytes.len() - offset);
    header += &format!("payload {}\nend\n", payload.bytes.len());

    let mut out = header.into_bytes();
    out.extend_from_slice(&payload.bytes);
    out
}

pub fn save(path: &Path, c: &Checkpoint) -> Result<(), CheckpointError> {
    std::fs::write(path, encode(c))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Layout("read past end of block".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn string(&mut self) -> Result<String, CheckpointError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CheckpointError::Layout("invalid UTF-8 token".into()))
    }
}

struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
    wide: bool,
}

fn set_model(m: &mut ModelConfig, key: &str, value: &str) -> Option<()> {
    match key {
        "word_dim" => m.word_dim = value.parse().ok()?,
        "char_dim" => m.char_dim = value.parse().ok()?,
        "char_hidden" => m.char_hidden = value.parse().ok()?,
        "word_hidden" => m.word_hidden = value.parse().ok()?,
        "num_tags" => m.num_tags = value.parse().ok()?,
        "dropout" => m.dropout = value.parse().ok()?,
        "init_scale" => m.init_scale = value.parse().ok()?,
        _ => return None,
    }
    Some(())
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if !bytes.starts_with(format!("{MAGIC}\n").as_bytes()) {
        return Err(CheckpointError::Magic);
    }
    let end_marker = b"\nend\n";
    let header_len = bytes
        .windows(end_marker.len())
        .position(|w| w == end_marker)
        .map(|p| p + end_marker.len())
        .ok_or(CheckpointError::Header { line: 0, message: "missing `end` line".into() })?;
    let header = std::str::from_utf8(&bytes[..header_len])
        .map_err(|_| CheckpointError::Header { line: 0, message: "header is not UTF-8".into() })?;
    let payload = &bytes[header_len..];

    let mut config = TrainingConfig::default();
    let mut model = ModelConfig::default();
    let mut epoch = None;
    let mut dev_score = None;
    let mut tensors = Vec::new();
    let mut words = None;
    let mut chars = None;
    let mut declared = None;
    let mut version = None;
    for (i, line) in header.lines().enumerate().skip(1) {
        let n = i + 1;
        let bad = |message: &str| CheckpointError::Header { line: n, message: message.into() };
        let fields: Vec<&str> = line.split(' ').collect();
        let num = |s: &str| s.parse::<usize>().map_err(|_| bad("expected a number"));
        match fields.as_slice() {
            ["version", v] => {
                if *v != VERSION.to_string() {
                    return Err(CheckpointError::Version(v.to_string()));
                }
                version = Some(());
            }
            ["config", k, v] => {
                if !set_training(&mut config, k, v).map_err(|e| bad(&e.to_string()))? {
                    return Err(bad("unknown config key"));
                }
            }
            ["model", k, v] => set_model(&mut model, k, v).ok_or_else(|| bad("bad model setting"))?,
            ["epoch", v] => epoch = Some(num(v)?),
            ["dev_score", v] => dev_score = Some(v.parse::<f64>().map_err(|_| bad("expected a number"))?),
            ["tensor", name, shape, offset, dtype] => {
                let (r, c) = shape.split_once('x').ok_or_else(|| bad("shape must be RxC"))?;
                let wide = match *dtype {
                    "f32" => false,
                    "f64" => true,
                    _ => return Err(bad("dtype must be f32 or f64")),
                };
                tensors.push(TensorEntry { name: name.to_string(), rows: num(r)?, cols: num(c)?, offset: num(offset)?, wide });
            }
            ["words", count, dim, offset, size] => words = Some((num(count)?, num(dim)?, num(offset)?, num(size)?)),
            ["chars", count, offset, size] => chars = Some((num(count)?, num(offset)?, num(size)?)),
            ["payload", size] => declared = Some(num(size)?),
            ["end"] => break,
            _ => return Err(bad("unrecognised line")),
        }
    }
    let missing = |what: &str| CheckpointError::Header { line: 0, message: format!("missing `{what}` line") };
    version.ok_or_else(|| missing("version"))?;
    let declared = declared.ok_or_else(|| missing("payload"))?;
    let (word_count, dim, words_offset, words_size) = words.ok_or_else(|| missing("words"))?;
    let (char_count, chars_offset, chars_size) = chars.ok_or_else(|| missing("chars"))?;
    if payload.len() != declared {
        return Err(CheckpointError::Truncated { declared, found: payload.len() });
    }

    let mut regions: Vec<(usize, usize)> = tensors
        .iter()
        .map(|t| (t.offset, t.rows * t.cols * if t.wide { 8 } else { 4 }))
        .chain([(words_offset, words_size), (chars_offset, chars_size)])
        .collect();
    regions.sort();
    let mut cursor = 0;
    for (offset, size) in regions {
        if offset != cursor {
            return Err(CheckpointError::Layout(format!("region at {offset} does not follow byte {cursor}")));
        }
        cursor += size;
    }
    if cursor != declared {
        return Err(CheckpointError::Layout(format!("regions cover {cursor} of {declared} bytes")));
    }

    let mut params = ParamStore::new();
    for t in &tensors {
        if params.find(&t.name).is_some() {
            return Err(CheckpointError::Layout(format!("duplicate tensor `{}`", t.name)));
        }
        let width = if t.wide { 8 } else { 4 };
        let raw = &payload[t.offset..t.offset + t.rows * t.cols * width];
        let data = raw
            .chunks_exact(width)
            .map(|b| if t.wide { f64::from_le_bytes(b.try_into().expect("8 bytes")) } else { f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64 })
            .collect();
        params.add(&t.name, Tensor::from_vec(t.rows, t.cols, data));
    }

    let mut r = Reader { bytes: &payload[words_offset..words_offset + words_size], pos: 0 };
    let tokens = (0..word_count).map(|_| r.string()).collect::<Result<Vec<_>, _>>()?;
    let vocabulary = Vocabulary::from_token_list(tokens)
        .ok_or_else(|| CheckpointError::Layout("word vocabulary lacks the reserved entries or repeats a token".into()))?;
    let raw = r.take(word_count * dim * 4)?;
    if r.pos != r.bytes.len() {
        return Err(CheckpointError::Layout("trailing bytes in word block".into()));
    }
    let vectors = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes"))).collect();
    let words = EmbeddingTable::from_parts(vocabulary, dim, vectors).map_err(|e| CheckpointError::Layout(e.to_string()))?;

    let mut r = Reader { bytes: &payload[chars_offset..chars_offset + chars_size], pos: 0 };
    let mut char_list = Vec::with_capacity(char_count);
    for _ in 0..char_count {
        let s = r.string()?;
        let mut it = s.chars();
        match (it.next(), it.next()) {
            (Some(c), None) => char_list.push(c),
            _ => return Err(CheckpointError::Layout("char entry is not a single character".into())),
        }
    }
    if r.pos != r.bytes.len() {
        return Err(CheckpointError::Layout("trailing bytes in char block".into()));
    }
    let chars = CharVocabulary::from_chars(char_list);
    if chars.chars().len() != char_count {
        return Err(CheckpointError::Layout("repeated character".into()));
    }

    let checkpoint = Checkpoint {
        config,
        model,
        params,
        words,
        chars,
        dev_score: dev_score.ok_or_else(|| missing("dev_score"))?,
        epoch: epoch.ok_or_else(|| missing("epoch"))?,
    };
    checkpoint.tagger()?;
    Ok(checkpoint)
}

/// Total payload size announced by an encoded checkpoint's header.
pub fn declared_payload(bytes: &[u8]) -> Option<usize> {
    let text = std::str::from_utf8(bytes.get(..bytes.windows(5).position(|w| w == b"\nend\n")?)?).ok()?;
    text.lines().find_map(|l| l.strip_prefix("payload ")?.parse().ok())
}

/// Header length in bytes, up to and including the `end` line.
pub fn header_len(bytes: &[u8]) -> Option<usize> {
    bytes.windows(5).position(|w| w == b"\nend\n").map(|p| p + 5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use csner_core::embeddings::{load_vec, merge_tables, CharVocabulary};
    use csner_core::EmbeddingTable;
    use csner_core::{Lexicon, Tagger};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let words = merge_tables(&load_vec("2 2\nhola 0.5 -0.25\nthe 1 2\n").unwrap(), &EmbeddingTable::empty(2)).unwrap();
        let chars = CharVocabulary::from_chars("abcdehlot".chars());
        let model = ModelConfig { word_dim: 2, char_dim: 2, char_hidden: 2, word_hidden: 3, num_tags: 19, dropout: 0.1, init_scale: 0.3 };
        let mut params = Tagger::new(model, &Lexicon::new(&words, &chars), &mut ChaCha8Rng::seed_from_u64(4)).unwrap().params;
        for id in params.ids().collect::<Vec<_>>() {
            params.get_mut(id).data_mut().iter_mut().for_each(|v| *v = *v as f32 as f64);
        }
        Checkpoint { config: TrainingConfig::default(), model, params, words, chars, dev_score: 0.625, epoch: 3 }
    }

    fn edit_header(bytes: &[u8], from: &str, to: &str) -> Vec<u8> {
        let h = header_len(bytes).unwrap();
        let text = std::str::from_utf8(&bytes[..h]).unwrap();
        assert!(text.contains(from), "{from}");
        let mut out = text.replacen(from, to, 1).into_bytes();
        out.extend_from_slice(&bytes[h..]);
        out
    }

    #[test]
    fn encode_decode_is_lossless_for_f32_values() {
        let ck = sample();
        let bytes = encode(&ck);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.params, ck.params);
        assert_eq!(back.words, ck.words);
        assert_eq!(back.chars, ck.chars);
        assert_eq!((back.epoch, back.dev_score), (3, 0.625));
        assert_eq!(encode(&back), bytes);
        assert_eq!(bytes.len(), header_len(&bytes).unwrap() + declared_payload(&bytes).unwrap());
    }

    #[test]
    fn header_errors_are_specific() {
        let bytes = encode(&sample());
        assert!(matches!(decode(b"not a checkpoint"), Err(CheckpointError::Magic)));
        assert!(matches!(decode(&edit_header(&bytes, "epoch 3", "epoch three")), Err(CheckpointError::Header { .. })));
        assert!(matches!(decode(&edit_header(&bytes, "epoch 3\n", "")), Err(CheckpointError::Header { .. })));
        assert!(matches!(decode(&edit_header(&bytes, "config seed 1", "config colour 1")), Err(CheckpointError::Header { .. })));
        assert!(matches!(decode(&edit_header(&bytes, " f32\n", " f16\n")), Err(CheckpointError::Header { .. })));
        assert!(matches!(decode(&edit_header(&bytes, "tensor output.bias 1x19 ", "tensor output.bias 1x18 ")), Err(CheckpointError::Layout(_))));
        assert!(matches!(decode(&bytes[..bytes.len() - 1]), Err(CheckpointError::Truncated { .. })));
    }
}
