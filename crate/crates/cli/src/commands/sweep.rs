//! `gradlens sweep`: the configured attack over a batch-size × neuron
//! grid, several seeded trials per cell, trials run in parallel.

use rayon::prelude::*;

use gradlens_core::Result;

use crate::config::ExperimentConfig;
use crate::csvio::{write_matrix, write_results, MatrixRow, ResultRow};

use super::{mean_or_zero, run_experiment, write_stage};

/// Run `trials` rounds per (batch_size, neurons) cell and write the
/// sorted rows plus a mean-PSNR matrix. Trial t shifts the base seed by
/// t, so the rows are deterministic and order-independent.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let mut cells = Vec::new();
    for &batch_size in &cfg.batch_sizes {
        for &neurons in &cfg.neuron_grid {
            for trial in 0..cfg.trials {
                cells.push((batch_size, neurons, trial as u64));
            }
        }
    }
    let mut rows: Vec<ResultRow> = cells
        .par_iter()
        .map(|&(batch_size, neurons, trial)| {
            let mut cell_cfg = cfg.clone();
            cell_cfg.batch_size = batch_size;
            cell_cfg.neurons = neurons;
            cell_cfg.seed = cfg.seed.wrapping_add(trial);
            Ok(run_experiment(&cell_cfg)?.row)
        })
        .collect::<Result<_>>()?;
    rows.sort_by_key(|row| (row.batch_size, row.neurons, row.seed));

    let matrix = psnr_matrix(&rows);
    write_stage(&cfg.out, |dir| {
        write_results(dir.join("results.csv"), &rows)?;
        write_matrix(dir.join("matrix.csv"), &matrix)
    })?;
    println!(
        "wrote {}: {} rows over {} cells",
        cfg.out.display(),
        rows.len(),
        matrix.len()
    );
    Ok(())
}

/// Mean PSNR per (batch_size, neurons) cell over all trials and
/// originals, in row order.
pub fn psnr_matrix(rows: &[ResultRow]) -> Vec<MatrixRow> {
    let mut matrix: Vec<MatrixRow> = Vec::new();
    let mut cell_values: Vec<f64> = Vec::new();
    let mut current: Option<(usize, usize)> = None;
    for row in rows {
        let key = (row.batch_size, row.neurons);
        if current != Some(key) {
            if let Some((batch_size, neurons)) = current {
                matrix.push(MatrixRow {
                    batch_size,
                    neurons,
                    mean_psnr_db: mean_or_zero(&cell_values),
                });
            }
            current = Some(key);
            cell_values.clear();
        }
        cell_values.extend_from_slice(&row.psnr_db);
    }
    if let Some((batch_size, neurons)) = current {
        matrix.push(MatrixRow {
            batch_size,
            neurons,
            mean_psnr_db: mean_or_zero(&cell_values),
        });
    }
    matrix
}
