//! CSV artifacts: result rows, per-original matches, sweep matrices, and
//! utility accuracies.
//!
//! Every file opens with a `# gradlens-<kind> v1` schema comment, uses
//! RFC 4180 quoting with LF endings, and round-trips exactly:
//! numbers are written in Rust's shortest form, which parses back to the
//! identical f64.

use std::path::Path;

use gradlens_core::analysis::Summary;
use gradlens_core::{Error, Result};

/// One attack run: configuration plus per-original outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub attack: String,
    pub suite: String,
    pub batch_size: usize,
    pub neurons: usize,
    pub seed: u64,
    /// Best PSNR against each original, in original order.
    pub psnr_db: Vec<f64>,
    pub stats: Summary,
    pub mean_residual: f64,
    /// Originals matched at or above the recovery threshold.
    pub recovered: usize,
}

const RESULTS_SCHEMA: &str = "# gradlens-results v1";
const RESULTS_HEADER: [&str; 14] = [
    "attack",
    "suite",
    "batch_size",
    "neurons",
    "seed",
    "psnr_db",
    "min",
    "q1",
    "median",
    "q3",
    "max",
    "mean",
    "mean_residual",
    "recovered",
];

/// Write `rows` to `path` under the results schema.
pub fn write_results(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let mut wtr = new_writer(path.as_ref(), RESULTS_SCHEMA, &RESULTS_HEADER)?;
    for row in rows {
        wtr.write_record([
            row.attack.as_str(),
            row.suite.as_str(),
            &row.batch_size.to_string(),
            &row.neurons.to_string(),
            &row.seed.to_string(),
            &join_f64(&row.psnr_db),
            &row.stats.min.to_string(),
            &row.stats.q1.to_string(),
            &row.stats.median.to_string(),
            &row.stats.q3.to_string(),
            &row.stats.max.to_string(),
            &row.stats.mean.to_string(),
            &row.mean_residual.to_string(),
            &row.recovered.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a results file written by [`write_results`].
pub fn read_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_rows(path.as_ref(), RESULTS_SCHEMA, &RESULTS_HEADER)?
        .into_iter()
        .map(|record| {
            Ok(ResultRow {
                attack: record[0].to_string(),
                suite: record[1].to_string(),
                batch_size: parse_field(&record[2], "batch_size")?,
                neurons: parse_field(&record[3], "neurons")?,
                seed: parse_field(&record[4], "seed")?,
                psnr_db: split_f64(&record[5])?,
                stats: Summary {
                    min: parse_field(&record[6], "min")?,
                    q1: parse_field(&record[7], "q1")?,
                    median: parse_field(&record[8], "median")?,
                    q3: parse_field(&record[9], "q3")?,
                    max: parse_field(&record[10], "max")?,
                    mean: parse_field(&record[11], "mean")?,
                },
                mean_residual: parse_field(&record[12], "mean_residual")?,
                recovered: parse_field(&record[13], "recovered")?,
            })
        })
        .collect()
}

/// One original's best match within one user's reconstruction set.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchRow {
    pub user: usize,
    pub original: usize,
    pub psnr_db: f64,
    /// Index into that user's reconstruction set, empty when none exist.
    pub reconstruction: Option<usize>,
}

const MATCHES_SCHEMA: &str = "# gradlens-matches v1";
const MATCHES_HEADER: [&str; 4] = ["user", "original", "psnr_db", "reconstruction"];

/// Write per-original match rows.
pub fn write_matches(path: impl AsRef<Path>, rows: &[MatchRow]) -> Result<()> {
    let mut wtr = new_writer(path.as_ref(), MATCHES_SCHEMA, &MATCHES_HEADER)?;
    for row in rows {
        let recon = row.reconstruction.map(|r| r.to_string()).unwrap_or_default();
        wtr.write_record([
            &row.user.to_string(),
            &row.original.to_string(),
            &row.psnr_db.to_string(),
            &recon,
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a matches file written by [`write_matches`].
pub fn read_matches(path: impl AsRef<Path>) -> Result<Vec<MatchRow>> {
    read_rows(path.as_ref(), MATCHES_SCHEMA, &MATCHES_HEADER)?
        .into_iter()
        .map(|record| {
            Ok(MatchRow {
                user: parse_field(&record[0], "user")?,
                original: parse_field(&record[1], "original")?,
                psnr_db: parse_field(&record[2], "psnr_db")?,
                reconstruction: if record[3].is_empty() {
                    None
                } else {
                    Some(parse_field(&record[3], "reconstruction")?)
                },
            })
        })
        .collect()
}

/// One sweep cell: mean PSNR over that cell's trials and originals.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixRow {
    pub batch_size: usize,
    pub neurons: usize,
    pub mean_psnr_db: f64,
}

const MATRIX_SCHEMA: &str = "# gradlens-matrix v1";
const MATRIX_HEADER: [&str; 3] = ["batch_size", "neurons", "mean_psnr_db"];

/// Write the sweep's mean-PSNR grid in long form.
pub fn write_matrix(path: impl AsRef<Path>, rows: &[MatrixRow]) -> Result<()> {
    let mut wtr = new_writer(path.as_ref(), MATRIX_SCHEMA, &MATRIX_HEADER)?;
    for row in rows {
        wtr.write_record([
            &row.batch_size.to_string(),
            &row.neurons.to_string(),
            &row.mean_psnr_db.to_string(),
        ])
        .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse a matrix file written by [`write_matrix`].
pub fn read_matrix(path: impl AsRef<Path>) -> Result<Vec<MatrixRow>> {
    read_rows(path.as_ref(), MATRIX_SCHEMA, &MATRIX_HEADER)?
        .into_iter()
        .map(|record| {
            Ok(MatrixRow {
                batch_size: parse_field(&record[0], "batch_size")?,
                neurons: parse_field(&record[1], "neurons")?,
                mean_psnr_db: parse_field(&record[2], "mean_psnr_db")?,
            })
        })
        .collect()
}

/// Test accuracy after training under one augmentation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyRow {
    pub suite: String,
    pub accuracy: f64,
}

const UTILITY_SCHEMA: &str = "# gradlens-utility v1";
const UTILITY_HEADER: [&str; 2] = ["suite", "accuracy"];

/// Write per-suite accuracies.
pub fn write_accuracies(path: impl AsRef<Path>, rows: &[AccuracyRow]) -> Result<()> {
    let mut wtr = new_writer(path.as_ref(), UTILITY_SCHEMA, &UTILITY_HEADER)?;
    for row in rows {
        wtr.write_record([row.suite.as_str(), &row.accuracy.to_string()])
            .map_err(csv_err)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parse an accuracy file written by [`write_accuracies`].
pub fn read_accuracies(path: impl AsRef<Path>) -> Result<Vec<AccuracyRow>> {
    read_rows(path.as_ref(), UTILITY_SCHEMA, &UTILITY_HEADER)?
        .into_iter()
        .map(|record| {
            Ok(AccuracyRow {
                suite: record[0].to_string(),
                accuracy: parse_field(&record[1], "accuracy")?,
            })
        })
        .collect()
}

fn new_writer(
    path: &Path,
    schema: &str,
    header: &[&str],
) -> Result<csv::Writer<std::fs::File>> {
    let mut file = std::fs::File::create(path)?;
    use std::io::Write;
    writeln!(file, "{schema}")?;
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    wtr.write_record(header).map_err(csv_err)?;
    Ok(wtr)
}

fn read_rows(path: &Path, schema: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    if text.lines().next() != Some(schema) {
        return Err(Error::Config(format!(
            "{} does not start with `{schema}`",
            path.display()
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let got = rdr.headers().map_err(csv_err)?;
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Config(format!(
            "{}: unexpected column set {:?}",
            path.display(),
            got
        )));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        rows.push(record.map_err(csv_err)?);
    }
    Ok(rows)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

fn parse_field<T: std::str::FromStr>(raw: &str, field: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("cannot parse `{raw}` as {field}")))
}

fn join_f64(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(";")
}

fn split_f64(raw: &str) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Ok(Vec::new());
    }
    raw.split(';')
        .map(|part| parse_field(part, "psnr_db entry"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row() -> ResultRow {
        ResultRow {
            attack: "imprint".to_string(),
            suite: "none".to_string(),
            batch_size: 8,
            neurons: 64,
            seed: 7,
            psnr_db: vec![300.0, 13.467361314999383, 80.5],
            stats: Summary {
                min: 13.467361314999383,
                q1: 46.98,
                median: 80.5,
                q3: 190.25,
                max: 300.0,
                mean: 131.32245377166646,
            },
            mean_residual: 3.2e-13,
            recovered: 2,
        }
    }

    #[test]
    fn results_round_trip_exactly() {
        let dir = std::env::temp_dir().join(format!("gradlens-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("results.csv");
        let rows = vec![sample_row()];
        write_results(&path, &rows).unwrap();
        assert_eq!(read_results(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# gradlens-results v1\n"));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn matches_round_trip_with_and_without_reconstruction() {
        let dir = std::env::temp_dir().join(format!("gradlens-csv-m-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("matches.csv");
        let rows = vec![
            MatchRow {
                user: 0,
                original: 0,
                psnr_db: 300.0,
                reconstruction: Some(3),
            },
            MatchRow {
                user: 0,
                original: 1,
                psnr_db: 0.0,
                reconstruction: None,
            },
        ];
        write_matches(&path, &rows).unwrap();
        assert_eq!(read_matches(&path).unwrap(), rows);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn wrong_schema_line_is_rejected() {
        let dir = std::env::temp_dir().join(format!("gradlens-csv-s-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("matrix.csv");
        std::fs::write(&path, "batch_size,neurons,mean_psnr_db\n4,16,300\n").unwrap();
        assert!(read_matrix(&path).is_err());
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn matrix_and_accuracy_round_trip() {
        let dir = std::env::temp_dir().join(format!("gradlens-csv-x-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let matrix = vec![
            MatrixRow {
                batch_size: 4,
                neurons: 16,
                mean_psnr_db: 287.5,
            },
            MatrixRow {
                batch_size: 16,
                neurons: 16,
                mean_psnr_db: 112.25,
            },
        ];
        let mpath = dir.join("matrix.csv");
        write_matrix(&mpath, &matrix).unwrap();
        assert_eq!(read_matrix(&mpath).unwrap(), matrix);

        let acc = vec![
            AccuracyRow {
                suite: "none".to_string(),
                accuracy: 0.9375,
            },
            AccuracyRow {
                suite: "mr-sh".to_string(),
                accuracy: 0.90625,
            },
        ];
        let apath = dir.join("accuracy.csv");
        write_accuracies(&apath, &acc).unwrap();
        assert_eq!(read_accuracies(&apath).unwrap(), acc);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
