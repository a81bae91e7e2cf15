//! The four experiment drivers plus their shared plumbing: dataset
//! loading, deterministic user slicing, atomic output staging, and
//! residual accounting for emitted reconstructions.

mod attack;
mod gallery;
mod sweep;
mod utility;

pub use attack::cmd_attack;
pub use gallery::cmd_gallery;
pub use sweep::cmd_sweep;
pub use utility::cmd_utility;

use std::path::{Path, PathBuf};

use gradlens_core::analysis::{census_from_layer, lincomb_residual, summarize};
use gradlens_core::attacks::{Provenance, ReconstructionSet};
use gradlens_core::defense::{build_augmented_batch, suite, AugmentationSuite, LabeledBatch};
use gradlens_core::flsim::{
    dispatch, run_round, DataSource, DispatchedModel, RoundConfig, RoundOutcome,
};
use gradlens_core::imaging::{read_image, Image};
use gradlens_core::model::AttackModel;
use gradlens_core::{Error, Result};

use crate::config::{DataSourceKind, ExperimentConfig};
use crate::csvio::ResultRow;
use crate::synthetic::gen_synthetic;

/// A fixed dataset served to users as contiguous wrap-around slices.
/// User `u` reads `batch_size` images starting at `u * batch_size mod
/// count`, and the whole dataset doubles as the server's calibration
/// pool.
pub struct DatasetSource {
    images: Vec<Image>,
    labels: Vec<usize>,
    batch_size: usize,
}

impl DatasetSource {
    pub fn new(images: Vec<Image>, labels: Vec<usize>, batch_size: usize) -> Result<Self> {
        if images.is_empty() || images.len() != labels.len() {
            return Err(Error::Config(format!(
                "dataset needs matching nonempty images and labels, got {} and {}",
                images.len(),
                labels.len()
            )));
        }
        if batch_size == 0 || batch_size > images.len() {
            return Err(Error::Config(format!(
                "batch_size: need 1..={} for this dataset, got {batch_size}",
                images.len()
            )));
        }
        Ok(DatasetSource {
            images,
            labels,
            batch_size,
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

impl DataSource for DatasetSource {
    fn batch_for(&self, user: usize) -> Result<LabeledBatch> {
        let n = self.images.len();
        let start = (user * self.batch_size) % n;
        let mut images = Vec::with_capacity(self.batch_size);
        let mut labels = Vec::with_capacity(self.batch_size);
        for j in 0..self.batch_size {
            let idx = (start + j) % n;
            images.push(self.images[idx].clone());
            labels.push(self.labels[idx]);
        }
        LabeledBatch::new(images, labels)
    }

    fn calibration(&self) -> Result<Vec<Image>> {
        Ok(self.images.clone())
    }
}

/// Load the configured dataset, generated or read from disk.
pub fn dataset(cfg: &ExperimentConfig) -> Result<(Vec<Image>, Vec<usize>)> {
    match &cfg.source {
        DataSourceKind::Synthetic => gen_synthetic(
            cfg.seed,
            cfg.count,
            cfg.width,
            cfg.height,
            cfg.channels,
            cfg.classes,
        ),
        DataSourceKind::Directory(dir) => read_directory(dir, cfg),
    }
}

fn read_directory(dir: &Path, cfg: &ExperimentConfig) -> Result<(Vec<Image>, Vec<usize>)> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Config(format!("cannot read directory {}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("ppm") | Some("pgm")
            )
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no .ppm or .pgm files in {}",
            dir.display()
        )));
    }
    let mut images = Vec::with_capacity(paths.len());
    let mut labels = Vec::with_capacity(paths.len());
    for (idx, path) in paths.iter().enumerate() {
        let img = read_image(path)?;
        if img.shape() != (cfg.width, cfg.height, cfg.channels) {
            return Err(Error::Config(format!(
                "{}: shape {:?} does not match configured {:?}",
                path.display(),
                img.shape(),
                (cfg.width, cfg.height, cfg.channels)
            )));
        }
        images.push(img);
        labels.push(file_label(path).unwrap_or(idx % cfg.classes) % cfg.classes);
    }
    Ok((images, labels))
}

/// Label from a leading `<digits>_` filename prefix, when present.
fn file_label(path: &Path) -> Option<usize> {
    let stem = path.file_stem()?.to_str()?;
    let digits: String = stem.chars().take_while(|c| c.is_ascii_digit()).collect();
    if digits.is_empty() || !stem[digits.len()..].starts_with('_') {
        return None;
    }
    digits.parse().ok()
}

/// The round this config describes, with optional cell overrides.
pub fn round_config(cfg: &ExperimentConfig, suite: AugmentationSuite) -> RoundConfig {
    RoundConfig {
        user_count: cfg.users,
        participants: cfg.participants,
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        suite,
        attack: cfg.attack_spec(),
        seed: cfg.seed,
    }
}

/// Build into a staging directory next to `out`, then rename into place,
/// so `out` either appears complete or not at all. Fails when `out`
/// already exists.
pub fn write_stage(out: &Path, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    if out.exists() {
        return Err(Error::Config(format!(
            "output directory {} already exists",
            out.display()
        )));
    }
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent)?;
    let name = out
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Config(format!("bad output path {}", out.display())))?;
    let staging = parent.join(format!(".{name}.staging-{}", std::process::id()));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    match build(&staging) {
        Ok(()) => {
            std::fs::rename(&staging, out)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

/// File extension matching how the codec will encode this channel count.
pub fn image_ext(channels: usize) -> &'static str {
    if channels == 3 {
        "ppm"
    } else {
        "pgm"
    }
}

/// Residual of each reconstruction against the samples that produced it.
///
/// The basis for a bin is the activation-set difference of its two
/// neurons; for a single neuron it is that neuron's activation set; for a
/// linear-model row it is the expanded samples carrying that row's label.
/// A reconstruction whose basis comes up empty scores 1.0, fully
/// unexplained.
pub fn reconstruction_residuals(
    model: &DispatchedModel,
    expanded: &LabeledBatch,
    recons: &ReconstructionSet,
) -> Result<Vec<f64>> {
    let bases: Vec<Vec<usize>> = match model {
        DispatchedModel::Dense(m) => {
            let census = census_from_layer(&m.layer, expanded)?;
            recons
                .iter()
                .map(|rec| match rec.provenance {
                    Provenance::Neuron { index } => census.neuron_set(index).to_vec(),
                    Provenance::Bin { lower, upper } => {
                        set_difference(census.neuron_set(lower), census.neuron_set(upper))
                    }
                })
                .collect()
        }
        DispatchedModel::Linear(_) => recons
            .iter()
            .map(|rec| {
                let Provenance::Neuron { index } = rec.provenance else {
                    return Vec::new();
                };
                expanded
                    .labels()
                    .iter()
                    .enumerate()
                    .filter(|(_, &label)| label == index)
                    .map(|(s, _)| s)
                    .collect()
            })
            .collect(),
    };
    recons
        .iter()
        .zip(&bases)
        .map(|(rec, basis)| {
            if basis.is_empty() {
                return Ok(1.0);
            }
            let images: Vec<Image> = basis
                .iter()
                .map(|&s| expanded.images()[s].clone())
                .collect();
            lincomb_residual(&rec.image, &images)
        })
        .collect()
}

fn set_difference(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().filter(|s| !b.contains(s)).copied().collect()
}

/// Re-derive the models and expanded batches `run_round` used, and
/// collect every reconstruction's residual across all selected users.
pub fn round_residuals(
    global: &AttackModel,
    round: &RoundConfig,
    source: &impl DataSource,
    outcome: &RoundOutcome,
) -> Result<Vec<f64>> {
    let calibration = source.calibration()?;
    let dispatched = dispatch(global, &round.attack, &calibration, round.seed)?;
    let mut residuals = Vec::new();
    for (i, &user) in outcome.selected.iter().enumerate() {
        let batch = source.batch_for(user)?;
        let expanded = build_augmented_batch(&batch, &round.suite)?;
        residuals.extend(reconstruction_residuals(
            &dispatched.model,
            expanded.batch(),
            &outcome.reconstructions[i],
        )?);
    }
    Ok(residuals)
}

/// Mean of `values`, zero when empty.
pub fn mean_or_zero(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Everything one experiment run produces before any files are written.
pub struct RunArtifacts {
    pub row: ResultRow,
    pub outcome: RoundOutcome,
    pub source: DatasetSource,
}

/// Run one federated round per `cfg` and fold the outcome into a result
/// row: concatenated per-original PSNRs across selected users, summary
/// stats, mean reconstruction residual, and the recovered count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunArtifacts> {
    let (images, labels) = dataset(cfg)?;
    let source = DatasetSource::new(images, labels, cfg.batch_size)?;
    let round = round_config(cfg, suite(&cfg.suite_name)?);
    let global = AttackModel::seeded(cfg.input_dim(), cfg.hidden, cfg.classes, cfg.seed);
    let outcome = run_round(&global, &round, &source)?;
    let residuals = round_residuals(&global, &round, &source, &outcome)?;
    let psnr_db: Vec<f64> = outcome
        .matches
        .iter()
        .flat_map(|report| report.per_original.iter().map(|m| m.psnr_db))
        .collect();
    let row = ResultRow {
        attack: cfg.attack.name().to_string(),
        suite: cfg.suite_name.clone(),
        batch_size: cfg.batch_size,
        neurons: cfg.neurons,
        seed: cfg.seed,
        stats: summarize(&psnr_db)?,
        psnr_db,
        mean_residual: mean_or_zero(&residuals),
        recovered: outcome.matches.iter().map(|r| r.recovered()).sum(),
    };
    Ok(RunArtifacts {
        row,
        outcome,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn users_get_distinct_wrapping_slices() {
        let (images, labels) = gen_synthetic(3, 6, 2, 2, 1, 3).unwrap();
        let source = DatasetSource::new(images.clone(), labels, 4).unwrap();
        let b0 = source.batch_for(0).unwrap();
        let b2 = source.batch_for(2).unwrap();
        assert_eq!(b0.images()[0].pixels(), images[0].pixels());
        // user 2 starts at 8 mod 6 = 2
        assert_eq!(b2.images()[0].pixels(), images[2].pixels());
        assert_eq!(b2.images()[3].pixels(), images[5].pixels());
    }

    #[test]
    fn calibration_is_the_whole_dataset() {
        let (images, labels) = gen_synthetic(4, 5, 2, 2, 1, 5).unwrap();
        let source = DatasetSource::new(images, labels, 2).unwrap();
        assert_eq!(source.calibration().unwrap().len(), 5);
    }

    #[test]
    fn staging_never_leaves_partial_output() {
        let base = std::env::temp_dir().join(format!("gradlens-stage-{}", std::process::id()));
        let out = base.join("run");
        let result = write_stage(&out, |dir| {
            std::fs::write(dir.join("partial.txt"), "x")?;
            Err(Error::Config("forced failure".to_string()))
        });
        assert!(result.is_err());
        assert!(!out.exists());
        write_stage(&out, |dir| {
            std::fs::write(dir.join("done.txt"), "x")?;
            Ok(())
        })
        .unwrap();
        assert!(out.join("done.txt").exists());
        let again = write_stage(&out, |_| Ok(()));
        assert!(again.is_err(), "existing output must be refused");
        std::fs::remove_dir_all(&base).unwrap();
    }

    #[test]
    fn filename_labels_parse_when_prefixed() {
        assert_eq!(file_label(Path::new("imgs/3_cat.ppm")), Some(3));
        assert_eq!(file_label(Path::new("imgs/12_x.pgm")), Some(12));
        assert_eq!(file_label(Path::new("imgs/cat.ppm")), None);
        assert_eq!(file_label(Path::new("imgs/7.ppm")), None);
    }
}
