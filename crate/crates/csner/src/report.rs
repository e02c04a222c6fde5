//! Plain-text tables.

use std::fmt::Write;

use csner_core::corpus::DatasetStats;
use csner_core::preprocess::OovReport;
use csner_core::{EntityCategory, EvalReport};

/// Per-class precision/recall/F1 followed by the harmonic-mean and micro summaries.
pub fn eval_table(r: &EvalReport) -> String {
    let mut s = String::new();
    writeln!(s, "{:<8} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support").unwrap();
    for c in EntityCategory::ALL {
        let k = r.class(c);
        if !r.evaluated.contains(&c) {
            continue;
        }
        writeln!(
            s,
            "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            c.code(),
            100.0 * k.precision,
            100.0 * k.recall,
            100.0 * k.f1,
            k.support()
        )
        .unwrap();
    }
    let m = &r.micro;
    writeln!(s, "{:<8} {:>9.4} {:>9.4} {:>9.4} {:>8}", "micro", 100.0 * m.precision, 100.0 * m.recall, 100.0 * m.f1, m.support())
        .unwrap();
    writeln!(s, "harmonic-mean F1 {:.4}", 100.0 * r.harmonic_f1).unwrap();
    writeln!(s, "token accuracy {:.4} ({} sentences, {} tokens)", 100.0 * r.accuracy, r.sentences, r.tokens).unwrap();
    s
}

pub fn stats_table(st: &DatasetStats) -> String {
    let mut s = String::new();
    writeln!(s, "sentences {}", st.sentences).unwrap();
    writeln!(s, "words {}", st.words).unwrap();
    for c in EntityCategory::ALL {
        writeln!(s, "{:<6} {}", c.code(), st.count(c)).unwrap();
    }
    writeln!(s, "total {}", st.entities.iter().sum::<usize>()).unwrap();
    s
}

/// One row per preprocessing stage; columns train All/Entity, dev All/Entity, test All.
/// A missing split or entity column prints as `-`.
pub fn oov_table(rows: &[(&str, [Option<OovReport>; 3])]) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}%"));
    let mut s = String::new();
    writeln!(
        s,
        "{:<22} {:>9} {:>9} {:>9} {:>9} {:>9}",
        "", "train-all", "train-ent", "dev-all", "dev-ent", "test-all"
    )
    .unwrap();
    for (label, [train, dev, test]) in rows {
        writeln!(
            s,
            "{:<22} {:>9} {:>9} {:>9} {:>9} {:>9}",
            label,
            cell(train.map(|r| r.all_rate())),
            cell(train.and_then(|r| r.entity_rate())),
            cell(dev.map(|r| r.all_rate())),
            cell(dev.and_then(|r| r.entity_rate())),
            cell(test.map(|r| r.all_rate())),
        )
        .unwrap();
    }
    s
}
