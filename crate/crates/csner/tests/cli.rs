mod common;

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command as Process;

use clap::Parser;
use csner::checkpoint::{self, header_len, CheckpointError};
use csner::cli::{cmd_eval, cmd_predict, cmd_preprocess, cmd_stats, cmd_train, run, Cli};
use csner::io::read_corpus;
use csner_core::corpus::{parse_conll, validate_iob, ViolationKind};
use csner_core::postprocess::postprocess_sentence;
use csner_core::{Split, Tag, TaggedSentence, TrainingConfig};

use common::{tiny_training, Fixture};

fn trained(dir: &Path, training: TrainingConfig) -> (Fixture, std::path::PathBuf) {
    let fx = Fixture::write(dir, 20, 8);
    let rc = fx.run_config(training);
    let s = cmd_train(&rc, &mut std::io::sink()).unwrap();
    (fx, s.checkpoint)
}

fn cli(args: &[&str]) -> anyhow::Result<String> {
    let parsed = Cli::try_parse_from(std::iter::once("csner").chain(args.iter().copied()))?;
    let mut out = Vec::new();
    run(parsed, &mut out, &mut std::io::sink())?;
    Ok(String::from_utf8(out).unwrap())
}

#[test]
fn micro_config_reaches_perfect_dev_score() {
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture::write(dir.path(), 30, 16);
    std::fs::write(
        fx.path("micro.cfg"),
        "# constant learning rate, no early stop\n\
         train = train.txt\ndev = dev.txt\nvec_eng = eng.vec\nvec_spa = spa.vec\ncheckpoint = micro.ckpt\n\
         hidden = 32\nword_dim = 16\nchar_dim = 16\ndropout = 0.2\ndecay = 1\npatience = 200\nmax_epochs = 150\n",
    )
    .unwrap();
    let cfg = fx.path("micro.cfg");
    let out = cli(&["train", "--config", cfg.to_str().unwrap()]).unwrap();
    assert!(out.contains("dev harmonic F1 100.0000"), "{out}");
    let log = std::fs::read_to_string(fx.path("micro.log")).unwrap();
    let first = log.lines().next().unwrap();
    assert!(first.starts_with("epoch 1 lr 0.01 loss "), "{first}");
    assert!(log.lines().any(|l| l.contains("dev_f1 1 best")));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.cfg"), "seed = 3\nmax_epochs = 9\ntrain = a.txt\n").unwrap();
    let cfg = dir.path().join("run.cfg");
    let parsed = Cli::try_parse_from(["csner", "train", "--config", cfg.to_str().unwrap(), "--seed", "5", "--float64"]).unwrap();
    let csner::cli::Command::Train(args) = parsed.command else { panic!() };
    let rc = args.resolve().unwrap();
    assert_eq!(rc.training.seed, 5);
    assert_eq!(rc.training.max_epochs, 9);
    assert_eq!(rc.training.precision, csner_core::trainer::Precision::F64);
    assert_eq!(rc.train, Some(dir.path().join("a.txt")));
    assert_eq!(rc.training.batch_size, 64);
}

#[test]
fn missing_vector_file_is_reported_with_its_path() {
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture::write(dir.path(), 5, 8);
    let mut rc = fx.run_config(tiny_training(8));
    rc.vec_spa = Some(dir.path().join("absent.vec"));
    let err = cmd_train(&rc, &mut std::io::sink()).unwrap_err();
    assert!(format!("{err:#}").contains("absent.vec"));

    let out = Process::new(env!("CARGO_BIN_EXE_csner"))
        .args(["train", "--train", fx.path("train.txt").to_str().unwrap(), "--dev", fx.path("dev.txt").to_str().unwrap()])
        .args(["--vec-eng", fx.path("eng.vec").to_str().unwrap(), "--vec-spa", "/no/such/spa.vec"])
        .args(["--checkpoint", fx.path("x.ckpt").to_str().unwrap()])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/spa.vec"));
}

#[test]
fn predict_preserves_lines_and_accepts_unlabeled_input() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, ck) = trained(dir.path(), tiny_training(8));
    let input = fx.path("test.txt");
    let text = std::fs::read_to_string(&input).unwrap();
    let out = cli(&["predict", "--checkpoint", ck.to_str().unwrap(), "--test", input.to_str().unwrap()]).unwrap();
    assert_eq!(out.lines().count(), text.lines().count());

    let unlabeled: String = text.lines().map(|l| l.split('\t').next().unwrap().to_string() + "\n").collect();
    std::fs::write(fx.path("raw.txt"), &unlabeled).unwrap();
    let raw = fx.path("raw.txt");
    let out = cli(&["predict", "--checkpoint", ck.to_str().unwrap(), "--test", raw.to_str().unwrap()]).unwrap();
    assert_eq!(out.lines().count(), unlabeled.lines().count());
    let tokens: Vec<&str> = out.lines().map(|l| l.split('\t').next().unwrap()).collect();
    let original: Vec<&str> = unlabeled.lines().collect();
    assert_eq!(tokens, original);

    let written = fx.path("pred.txt");
    cli(&["predict", "--checkpoint", ck.to_str().unwrap(), "--test", raw.to_str().unwrap(), "--out", written.to_str().unwrap()])
        .unwrap();
    assert!(read_corpus(&written, Split::Test).unwrap().is_labeled());
}

/// Positions the repair rules may rewrite in `tags`.
fn repairable(tags: &[Tag]) -> BTreeSet<usize> {
    validate_iob(tags)
        .into_iter()
        .filter_map(|v| match v.kind {
            ViolationKind::GapO => Some(v.index),
            ViolationKind::CategoryMismatch => Some(v.index - 1),
            ViolationKind::OrphanInside => None,
        })
        .collect()
}

#[test]
fn no_post_differs_only_at_repaired_positions() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, ck) = trained(dir.path(), TrainingConfig { max_epochs: 1, ..tiny_training(8) });
    let mut rc = fx.run_config(tiny_training(8));
    rc.checkpoint = Some(ck);
    let raw = parse_conll(&cmd_predict(&rc, false).unwrap(), Split::Test).unwrap();
    let post = parse_conll(&cmd_predict(&rc, true).unwrap(), Split::Test).unwrap();
    for (r, p) in raw.sentences.iter().zip(&post.sentences) {
        let (r, p) = (r.tags.as_ref().unwrap(), p.tags.as_ref().unwrap());
        assert_eq!(p, &postprocess_sentence(r));
        let allowed = repairable(r);
        for (i, (a, b)) in r.iter().zip(p).enumerate() {
            if a != b {
                assert!(allowed.contains(&i), "position {i} changed in {r:?}");
            }
        }
    }
    use csner_core::EntityCategory::{Location, Person};
    let sample = [Tag::B(Person), Tag::O, Tag::O, Tag::I(Person), Tag::B(Location), Tag::I(Person)];
    assert_eq!(repairable(&sample), BTreeSet::from([1, 2, 4]));
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let (fx, ck_path) = trained(dir.path(), tiny_training(8));
    let bytes = std::fs::read(&ck_path).unwrap();
    let header = header_len(&bytes).unwrap();
    assert_eq!(bytes.len(), header + checkpoint::declared_payload(&bytes).unwrap());

    let ck = checkpoint::load(&ck_path).unwrap();
    assert_eq!(checkpoint::encode(&ck), bytes);
    let probe: Vec<String> = "Maria va a Madrid con John el lunes jajajaja".split(' ').map(String::from).collect();
    let tagger = ck.tagger().unwrap();
    let original = tagger.predict_tags(&probe, &ck.lexicon());
    let reloaded = checkpoint::decode(&bytes).unwrap();
    assert_eq!(reloaded.tagger().unwrap().predict_tags(&probe, &reloaded.lexicon()), original);
    assert_eq!(reloaded.tagger().unwrap().encode_sentence(&probe, &reloaded.lexicon(), None), tagger.encode_sentence(&probe, &ck.lexicon(), None));

    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::decode(&bad), Err(CheckpointError::Magic)));
    assert!(matches!(checkpoint::decode(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated { .. })));
    let mut longer = bytes.clone();
    longer.push(0);
    assert!(matches!(checkpoint::decode(&longer), Err(CheckpointError::Truncated { .. })));
    let text = String::from_utf8_lossy(&bytes[..header]).replace("version 1", "version 7");
    let mut v7 = text.into_bytes();
    v7.extend_from_slice(&bytes[header..]);
    assert!(matches!(checkpoint::decode(&v7), Err(CheckpointError::Version(_))));

    // every single-byte corruption of the header is rejected or leaves the model intact
    for i in 0..header {
        let mut bad = bytes.clone();
        bad[i] ^= 0x01;
        if let Ok(c) = checkpoint::decode(&bad) {
            assert_eq!(c.params, ck.params, "byte {i}");
            assert_eq!(c.words, ck.words, "byte {i}");
        }
    }
    let shape = String::from_utf8_lossy(&bytes[..header]).replace("model word_hidden 12", "model word_hidden 13");
    let mut reshaped = shape.into_bytes();
    reshaped.extend_from_slice(&bytes[header..]);
    assert!(matches!(checkpoint::decode(&reshaped), Err(CheckpointError::Model(_))));
    let _ = fx;
}

#[test]
fn float64_checkpoints_store_wide_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let training = TrainingConfig { precision: csner_core::trainer::Precision::F64, max_epochs: 2, ..tiny_training(8) };
    let (_fx, ck_path) = trained(dir.path(), training);
    let bytes = std::fs::read(&ck_path).unwrap();
    let header = String::from_utf8_lossy(&bytes[..header_len(&bytes).unwrap()]).to_string();
    assert!(header.lines().filter(|l| l.starts_with("tensor ")).all(|l| l.ends_with(" f64")));
    let ck = checkpoint::load(&ck_path).unwrap();
    assert!(ck.params.iter().any(|(_, _, t)| t.data().iter().any(|v| *v as f32 as f64 != *v)));
    assert_eq!(checkpoint::encode(&ck), bytes);
}

#[test]
fn eval_stats_and_preprocess_reports() {
    let dir = tempfile::tempdir().unwrap();
    let fx = Fixture::write(dir.path(), 10, 8);
    let train = fx.path("train.txt");
    let table = cmd_eval(&train, &train).unwrap();
    assert!(table.contains("harmonic-mean F1 100.0000"));
    assert!(table.contains("token accuracy 100.0000"));

    std::fs::write(
        fx.path("small.txt"),
        "Ana\tB-PER\nLopez\tI-PER\nen\tO\nMadrid\tB-LOC\n\nvamos\tO\nGoogle\tB-ORG\nNASA\tB-ORG\nhoy\tB-TIME\n\n",
    )
    .unwrap();
    let stats = cmd_stats(&fx.path("small.txt")).unwrap();
    for line in ["sentences 2", "words 8", "PER    1", "LOC    1", "ORG    2", "TIME   1", "total 5"] {
        assert!(stats.lines().any(|l| l == line), "{line} missing from\n{stats}");
    }

    let mut rc = fx.run_config(tiny_training(8));
    rc.out = Some(dir.path().join("pre"));
    let report = cmd_preprocess(&rc).unwrap();
    let labels: Vec<&str> = report.lines().skip(1).map(|l| l.split("  ").next().unwrap().trim()).collect();
    assert_eq!(labels, ["corpus", "vectors (eng)", "+ vectors (spa)", "+ token replacement", "+ token normalization"]);
    let train_all: Vec<f64> = report
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().rev().nth(4).unwrap().trim_end_matches('%').parse().unwrap())
        .collect();
    assert!(train_all.windows(2).all(|w| w[1] <= w[0]), "{train_all:?}");
    let pre = read_corpus(&dir.path().join("pre/train.txt"), Split::Train).unwrap();
    assert!(pre.sentences.iter().flat_map(|s: &TaggedSentence| &s.tokens).any(|t| t == "USR"));
    assert_eq!(pre.token_count(), fx.corpus.token_count());
}
