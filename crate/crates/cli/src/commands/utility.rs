//! `gradlens utility`: train the same synthetic task once per
//! augmentation suite and compare test accuracies.

use std::path::Path;

use gradlens_core::defense::{suite, LabeledBatch, SUITE_NAMES};
use gradlens_core::model::{train_eval, TrainConfig};
use gradlens_core::{Error, Result};

use crate::config::{DataSourceKind, ExperimentConfig};
use crate::csvio::{write_accuracies, AccuracyRow};
use crate::synthetic::gen_synthetic;

use super::write_stage;

/// Train under every suite and write `accuracy.csv` plus `report.txt`.
/// The test set comes from a shifted seed so it never overlaps the
/// training images.
pub fn cmd_utility(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.source != DataSourceKind::Synthetic {
        return Err(Error::Config(
            "utility: needs a synthetic data source".to_string(),
        ));
    }
    let train = labeled(cfg, cfg.seed, cfg.train_count)?;
    let test = labeled(cfg, cfg.seed ^ 0x7e57, cfg.test_count)?;
    let train_cfg = TrainConfig {
        hidden_neurons: cfg.hidden,
        class_count: cfg.classes,
        epochs: cfg.epochs,
        learning_rate: cfg.train_learning_rate,
        batch_size: cfg.batch_size,
        seed: cfg.seed,
    };
    let mut rows = Vec::with_capacity(SUITE_NAMES.len());
    for name in SUITE_NAMES {
        let accuracy = train_eval(&train, &test, &train_cfg, Some(&suite(name)?))?;
        rows.push(AccuracyRow {
            suite: name.to_string(),
            accuracy,
        });
    }
    write_stage(&cfg.out, |dir| {
        write_accuracies(dir.join("accuracy.csv"), &rows)?;
        write_report(&dir.join("report.txt"), cfg, &rows)
    })?;
    println!("wrote {}: {} suites", cfg.out.display(), rows.len());
    Ok(())
}

fn labeled(cfg: &ExperimentConfig, seed: u64, count: usize) -> Result<LabeledBatch> {
    let (images, labels) = gen_synthetic(
        seed,
        count,
        cfg.width,
        cfg.height,
        cfg.channels,
        cfg.classes,
    )?;
    LabeledBatch::new(images, labels)
}

fn write_report(path: &Path, cfg: &ExperimentConfig, rows: &[AccuracyRow]) -> Result<()> {
    use std::fmt::Write as _;
    let baseline = rows
        .iter()
        .find(|r| r.suite == "none")
        .map(|r| r.accuracy)
        .unwrap_or(0.0);
    let mut text = String::new();
    let _ = writeln!(text, "gradlens utility report");
    let _ = writeln!(text, "=======================");
    let _ = writeln!(
        text,
        "task: {} classes, {}x{}x{}, {} train / {} test, {} epochs, seed {}",
        cfg.classes,
        cfg.width,
        cfg.height,
        cfg.channels,
        cfg.train_count,
        cfg.test_count,
        cfg.epochs,
        cfg.seed
    );
    let _ = writeln!(text);
    let _ = writeln!(text, "suite            accuracy   vs none");
    for row in rows {
        let _ = writeln!(
            text,
            "{:<16} {:>7.2}%   {:+.2}",
            row.suite,
            100.0 * row.accuracy,
            100.0 * (row.accuracy - baseline)
        );
    }
    std::fs::write(path, text)?;
    Ok(())
}
