//! `gradlens attack`: one federated round under the configured attack,
//! scored and written out as CSV, images, and a plain-text report.

use std::path::Path;

use gradlens_core::analysis::RECOVERY_THRESHOLD_DB;
use gradlens_core::flsim::RoundOutcome;
use gradlens_core::imaging::{write_field_image, write_image};
use gradlens_core::Result;

use crate::config::ExperimentConfig;
use crate::csvio::{write_matches, write_results, MatchRow, ResultRow};

use super::{image_ext, run_experiment, write_stage, DatasetSource};

/// Run one round and write `results.csv`, `matches.csv`, `report.txt`,
/// and the `originals/` and `recons/` image directories under `cfg.out`.
pub fn cmd_attack(cfg: &ExperimentConfig) -> Result<()> {
    let artifacts = run_experiment(cfg)?;
    let match_rows = match_rows(&artifacts.outcome);
    write_stage(&cfg.out, |dir| {
        write_results(dir.join("results.csv"), std::slice::from_ref(&artifacts.row))?;
        write_matches(dir.join("matches.csv"), &match_rows)?;
        write_report(&dir.join("report.txt"), cfg, &artifacts.row, &artifacts.outcome)?;
        write_round_images(dir, cfg, &artifacts.source, &artifacts.outcome)
    })?;
    println!(
        "wrote {}: recovered {} of {} originals",
        cfg.out.display(),
        artifacts.row.recovered,
        artifacts.row.psnr_db.len()
    );
    Ok(())
}

/// Flatten each user's per-original matches into CSV rows.
pub fn match_rows(outcome: &RoundOutcome) -> Vec<MatchRow> {
    let mut rows = Vec::new();
    for (i, &user) in outcome.selected.iter().enumerate() {
        for (original, m) in outcome.matches[i].per_original.iter().enumerate() {
            rows.push(MatchRow {
                user,
                original,
                psnr_db: m.psnr_db,
                reconstruction: m.reconstruction,
            });
        }
    }
    rows
}

/// Write every selected user's original batch and reconstruction set as
/// PGM/PPM files named `u<user>_<index>` under `originals/` and
/// `recons/`.
pub fn write_round_images(
    dir: &Path,
    cfg: &ExperimentConfig,
    source: &DatasetSource,
    outcome: &RoundOutcome,
) -> Result<()> {
    use gradlens_core::flsim::DataSource;
    let ext = image_ext(cfg.channels);
    let originals = dir.join("originals");
    let recons = dir.join("recons");
    std::fs::create_dir_all(&originals)?;
    std::fs::create_dir_all(&recons)?;
    for (i, &user) in outcome.selected.iter().enumerate() {
        let batch = source.batch_for(user)?;
        for (j, img) in batch.images().iter().enumerate() {
            write_image(img, originals.join(format!("u{user}_{j:02}.{ext}")))?;
        }
        for (j, rec) in outcome.reconstructions[i].iter().enumerate() {
            write_field_image(&rec.image, recons.join(format!("u{user}_r{j:02}.{ext}")))?;
        }
    }
    Ok(())
}

fn write_report(
    path: &Path,
    cfg: &ExperimentConfig,
    row: &ResultRow,
    outcome: &RoundOutcome,
) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::new();
    let _ = writeln!(text, "gradlens attack report");
    let _ = writeln!(text, "======================");
    let _ = writeln!(text, "attack:         {}", row.attack);
    let _ = writeln!(text, "suite:          {}", row.suite);
    let _ = writeln!(text, "batch size:     {}", row.batch_size);
    let _ = writeln!(text, "neurons:        {}", row.neurons);
    let _ = writeln!(text, "seed:           {}", row.seed);
    let _ = writeln!(
        text,
        "selected users: {:?} of {}",
        outcome.selected, cfg.users
    );
    let _ = writeln!(
        text,
        "recovered:      {} of {} originals at >= {RECOVERY_THRESHOLD_DB} dB",
        row.recovered,
        row.psnr_db.len()
    );
    let _ = writeln!(text, "mean residual:  {:.3e}", row.mean_residual);
    let _ = writeln!(text);
    let _ = writeln!(text, "best PSNR per original (dB):");
    let mut idx = 0;
    for (i, &user) in outcome.selected.iter().enumerate() {
        for (j, m) in outcome.matches[i].per_original.iter().enumerate() {
            let tag = match m.reconstruction {
                Some(r) => format!("recon {r}"),
                None => "no reconstruction".to_string(),
            };
            let _ = writeln!(text, "  u{user}_{j:02}  {:>12.4}  ({tag})", row.psnr_db[idx]);
            idx += 1;
        }
    }
    let s = &row.stats;
    let _ = writeln!(text);
    let _ = writeln!(
        text,
        "summary: min {:.2}  q1 {:.2}  median {:.2}  q3 {:.2}  max {:.2}  mean {:.2}",
        s.min, s.q1, s.median, s.q3, s.max, s.mean
    );
    std::fs::write(path, text)?;
    Ok(())
}
