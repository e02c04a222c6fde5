//! Command-line interface: `train`, `predict`, `eval`, `stats`, `preprocess`.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use csner_core::corpus::dataset_stats;
use csner_core::embeddings::{build_char_vocab, default_char_inventory, merge_tables};
use csner_core::eval::score;
use csner_core::preprocess::{oov_report, oov_report_by, preprocess_dataset, replace_dataset, token_types};
use csner_core::trainer::{fit, predict_dataset, EpochRecord, Precision};
use csner_core::{Dataset, Split, Tag};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::io::{lookup_set, read_corpus, read_vectors_for, write_corpus};
use crate::report::{eval_table, oov_table, stats_table};

#[derive(Debug, Parser)]
#[command(name = "csner", version, about = "Named-entity tagger for code-switched English-Spanish tweets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write the best checkpoint plus a per-epoch log.
    Train(RunArgs),
    /// Tag the `--test` corpus with a checkpoint.
    Predict(RunArgs),
    /// Score a prediction file against a gold file.
    Eval { gold: PathBuf, pred: PathBuf },
    /// Word and entity counts of a corpus.
    Stats { file: PathBuf },
    /// OOV rates before and after each preprocessing stage; with `--out`, also
    /// writes the preprocessed corpora there.
    Preprocess(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// `key = value` config file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub vec_eng: Option<PathBuf>,
    #[arg(long)]
    pub vec_spa: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Log file (train), prediction file (predict) or output directory (preprocess).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip IOB repair of predictions.
    #[arg(long)]
    pub no_post: bool,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Keep parameters in 64-bit precision.
    #[arg(long)]
    pub float64: bool,
}

impl RunArgs {
    /// Defaults, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let base = path.parent().unwrap_or(Path::new(""));
            rc.apply_text(&text, base).with_context(|| format!("in {}", path.display()))?;
        }
        let paths = [
            (&self.train, &mut rc.train),
            (&self.dev, &mut rc.dev),
            (&self.test, &mut rc.test),
            (&self.vec_eng, &mut rc.vec_eng),
            (&self.vec_spa, &mut rc.vec_spa),
            (&self.checkpoint, &mut rc.checkpoint),
            (&self.out, &mut rc.out),
        ];
        for (flag, slot) in paths {
            if let Some(p) = flag {
                *slot = Some(p.clone());
            }
        }
        if let Some(seed) = self.seed {
            rc.training.seed = seed;
        }
        if let Some(n) = self.max_epochs {
            rc.training.max_epochs = n;
        }
        if self.float64 {
            rc.training.precision = Precision::F64;
        }
        Ok(rc)
    }
}

fn need<'a>(slot: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    slot.as_deref().with_context(|| format!("missing --{flag}"))
}

fn readable(path: &Path) -> Result<&Path> {
    if !path.is_file() {
        bail!("cannot read {}", path.display());
    }
    Ok(path)
}

/// One training-log line. Values use the shortest exact decimal form, so
/// logs of identical runs are byte-identical.
pub fn log_line(r: &EpochRecord) -> String {
    format!(
        "epoch {} lr {} loss {} dev_f1 {}{}\n",
        r.epoch,
        r.lr,
        r.loss,
        r.dev_f1,
        if r.improved { " best" } else { "" }
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epoch: usize,
    pub dev_score: f64,
    pub epochs_run: usize,
    pub checkpoint: PathBuf,
    pub log: PathBuf,
}

/// Preprocess, merge vectors, fit, then write the checkpoint and the log
/// (`--out`, or the checkpoint path with a `.log` extension).
pub fn cmd_train(rc: &RunConfig, progress: &mut dyn Write) -> Result<TrainSummary> {
    let train_path = readable(need(&rc.train, "train")?)?;
    let dev_path = readable(need(&rc.dev, "dev")?)?;
    let eng_path = readable(need(&rc.vec_eng, "vec-eng")?)?;
    let spa_path = readable(need(&rc.vec_spa, "vec-spa")?)?;
    let test_path = rc.test.as_deref().map(readable).transpose()?;
    let ck_path = need(&rc.checkpoint, "checkpoint")?.to_path_buf();
    let log_path = rc.out.clone().unwrap_or_else(|| ck_path.with_extension("log"));
    rc.training.validate()?;

    let train = read_corpus(train_path, Split::Train)?;
    let dev = read_corpus(dev_path, Split::Dev)?;
    let test = test_path.map(|p| read_corpus(p, Split::Test)).transpose()?;
    let keep = lookup_set([&train, &dev].into_iter().chain(test.as_ref()));
    let eng = read_vectors_for(eng_path, &keep)?;
    let spa = read_vectors_for(spa_path, &keep)?;
    let words = merge_tables(&eng, &spa).context("merging word vectors")?;
    if words.dim() != rc.training.word_dim {
        bail!("word vectors have dimension {} but word_dim is {}", words.dim(), rc.training.word_dim);
    }
    let chars = build_char_vocab(&train, &default_char_inventory());

    let mut log = String::new();
    let mut io_error = None;
    let out = fit(&train, &dev, words, chars, &rc.training, Tag::COUNT, |r| {
        let line = log_line(r);
        if let Err(e) = progress.write_all(line.as_bytes()) {
            io_error.get_or_insert(e);
        }
        log += &line;
    })?;
    if let Some(e) = io_error {
        return Err(e).context("writing progress");
    }
    checkpoint::save(&ck_path, &out.checkpoint).with_context(|| format!("writing {}", ck_path.display()))?;
    std::fs::write(&log_path, log).with_context(|| format!("writing {}", log_path.display()))?;
    Ok(TrainSummary {
        epoch: out.checkpoint.epoch,
        dev_score: out.checkpoint.dev_score,
        epochs_run: out.history.len(),
        checkpoint: ck_path,
        log: log_path,
    })
}

/// Tags `--test` and returns the two-column output. Written to `--out` when given.
pub fn cmd_predict(rc: &RunConfig, post_process: bool) -> Result<String> {
    let ck_path = readable(need(&rc.checkpoint, "checkpoint")?)?;
    let input_path = readable(need(&rc.test, "test")?)?;
    let ck = checkpoint::load(ck_path).with_context(|| format!("loading {}", ck_path.display()))?;
    let tagger = ck.tagger()?;
    let input = read_corpus(input_path, Split::Test)?;
    let pred = predict_dataset(&tagger, &input, &ck.lexicon(), ck.config.batch_size, post_process);
    let text = csner_core::corpus::write_conll(&pred);
    if let Some(out) = &rc.out {
        write_corpus(out, &pred)?;
    }
    Ok(text)
}

pub fn cmd_eval(gold: &Path, pred: &Path) -> Result<String> {
    let g = read_corpus(gold, Split::Test)?;
    let p = read_corpus(pred, Split::Test)?;
    let report = score(&g, &p).with_context(|| format!("scoring {} against {}", pred.display(), gold.display()))?;
    Ok(eval_table(&report))
}

pub fn cmd_stats(file: &Path) -> Result<String> {
    let d = read_corpus(file, Split::Train)?;
    Ok(stats_table(&dataset_stats(&d)))
}

/// OOV table rows: training-vocabulary baseline, English vectors, both
/// vector sets, after replacement, after normalization.
pub fn cmd_preprocess(rc: &RunConfig) -> Result<String> {
    let train_path = readable(need(&rc.train, "train")?)?;
    let eng_path = readable(need(&rc.vec_eng, "vec-eng")?)?;
    let spa_path = readable(need(&rc.vec_spa, "vec-spa")?)?;
    let dev_path = rc.dev.as_deref().map(readable).transpose()?;
    let test_path = rc.test.as_deref().map(readable).transpose()?;

    let splits: [Option<Dataset>; 3] = [
        Some(read_corpus(train_path, Split::Train)?),
        dev_path.map(|p| read_corpus(p, Split::Dev)).transpose()?,
        test_path.map(|p| read_corpus(p, Split::Test)).transpose()?,
    ];
    let keep = lookup_set(splits.iter().flatten());
    let eng = read_vectors_for(eng_path, &keep)?;
    let spa = read_vectors_for(spa_path, &keep)?;
    let merged = merge_tables(&eng, &spa).context("merging word vectors")?;
    let train_types = token_types(splits[0].as_ref().expect("train is loaded"));

    let row = |f: &dyn Fn(&Dataset) -> csner_core::preprocess::OovReport| splits.each_ref().map(|d| d.as_ref().map(f));
    let mut corpus_row = row(&|d| oov_report_by(d, |t| train_types.contains(t)));
    corpus_row[0] = None;
    let rows = [
        ("corpus", corpus_row),
        ("vectors (eng)", row(&|d| oov_report(d, &eng.vocabulary))),
        ("+ vectors (spa)", row(&|d| oov_report_by(d, |t| eng.vocabulary.contains(t) || spa.vocabulary.contains(t)))),
        ("+ token replacement", row(&|d| oov_report(&replace_dataset(d), &merged.vocabulary))),
        ("+ token normalization", row(&|d| oov_report(&preprocess_dataset(d, &merged.vocabulary), &merged.vocabulary))),
    ];
    if let Some(dir) = &rc.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (d, name) in splits.iter().zip(["train.txt", "dev.txt", "test.txt"]) {
            if let Some(d) = d {
                write_corpus(&dir.join(name), &preprocess_dataset(d, &merged.vocabulary))?;
            }
        }
    }
    Ok(oov_table(&rows))
}

/// Runs a parsed command, writing data to `out` and progress to `err`.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Train(args) => {
            let s = cmd_train(&args.resolve()?, err)?;
            writeln!(
                out,
                "best epoch {} dev harmonic F1 {:.4} after {} epochs\ncheckpoint {}\nlog {}",
                s.epoch,
                100.0 * s.dev_score,
                s.epochs_run,
                s.checkpoint.display(),
                s.log.display()
            )?;
        }
        Command::Predict(args) => {
            let rc = args.resolve()?;
            let text = cmd_predict(&rc, !args.no_post)?;
            if rc.out.is_none() {
                out.write_all(text.as_bytes())?;
            }
        }
        Command::Eval { gold, pred } => out.write_all(cmd_eval(&gold, &pred)?.as_bytes())?,
        Command::Stats { file } => out.write_all(cmd_stats(&file)?.as_bytes())?,
        Command::Preprocess(args) => out.write_all(cmd_preprocess(&args.resolve()?)?.as_bytes())?,
    }
    Ok(())
}
