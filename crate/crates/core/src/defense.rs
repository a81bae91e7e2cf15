//! Augmentation suites and batch expansion.
//!
//! The defense trains on an expanded batch: every original image is kept and
//! followed by one transformed copy per suite member, each inheriting the
//! original's label. A client applies this locally before computing
//! gradients, so the uploaded report sums over the expanded batch.

use crate::error::{Error, Result};
use crate::imaging::{apply_transform, Image, TransformSpec};

/// Valid suite names accepted by [`suite`].
pub const SUITE_NAMES: [&str; 7] = [
    "none",
    "major-rotation",
    "minor-rotation",
    "shear",
    "hflip",
    "vflip",
    "mr-sh",
];

/// A named, ordered set of transforms applied to every batch member.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationSuite {
    name: String,
    transforms: Vec<TransformSpec>,
}

impl AugmentationSuite {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn transforms(&self) -> &[TransformSpec] {
        &self.transforms
    }

    /// How many samples one original becomes after expansion.
    pub fn expansion_factor(&self) -> usize {
        1 + self.transforms.len()
    }
}

/// Look up a suite by name.
pub fn suite(name: &str) -> Result<AugmentationSuite> {
    let transforms = match name {
        "none" => vec![],
        "major-rotation" => vec![
            TransformSpec::Rotate(90.0),
            TransformSpec::Rotate(180.0),
            TransformSpec::Rotate(270.0),
        ],
        "minor-rotation" => vec![
            TransformSpec::Rotate(30.0),
            TransformSpec::Rotate(45.0),
            TransformSpec::Rotate(60.0),
        ],
        "shear" => vec![
            TransformSpec::Shear(0.55),
            TransformSpec::Shear(1.0),
            TransformSpec::Shear(0.9),
        ],
        "hflip" => vec![TransformSpec::FlipH],
        "vflip" => vec![TransformSpec::FlipV],
        "mr-sh" => {
            let mut t = suite("major-rotation")?.transforms;
            t.extend(suite("shear")?.transforms);
            t
        }
        _ => {
            return Err(Error::Config(format!(
                "unknown suite {name:?}; valid names: {}",
                SUITE_NAMES.join(", ")
            )))
        }
    };
    Ok(AugmentationSuite {
        name: name.to_string(),
        transforms,
    })
}

/// Images with class labels, the unit a client trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    images: Vec<Image>,
    labels: Vec<usize>,
}

impl LabeledBatch {
    /// Pair images with labels; lengths must match and be nonzero, and all
    /// images must share one shape.
    pub fn new(images: Vec<Image>, labels: Vec<usize>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::Precondition("batch must be nonempty".to_string()));
        }
        if images.len() != labels.len() {
            return Err(Error::Dimension {
                context: "LabeledBatch::new",
                expected: format!("{} labels", images.len()),
                got: format!("{} labels", labels.len()),
            });
        }
        let shape = images[0].shape();
        if images.iter().any(|img| img.shape() != shape) {
            return Err(Error::Precondition(
                "all batch images must share one shape".to_string(),
            ));
        }
        Ok(LabeledBatch { images, labels })
    }

    pub fn images(&self) -> &[Image] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Shape shared by every image: (width, height, channels).
    pub fn shape(&self) -> (usize, usize, usize) {
        self.images[0].shape()
    }
}

/// Where an expanded-batch member came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Origin {
    /// Index of the original in the source batch.
    pub original: usize,
    /// Index into the suite's transforms, or `None` for the original itself.
    pub transform: Option<usize>,
}

/// A batch expanded with transformed copies of every original.
#[derive(Debug, Clone)]
pub struct AugmentedBatch {
    batch: LabeledBatch,
    origins: Vec<Origin>,
    source_len: usize,
}

impl AugmentedBatch {
    /// The expanded batch: original `t`, then its transforms in suite order,
    /// for each `t` in source order.
    pub fn batch(&self) -> &LabeledBatch {
        &self.batch
    }

    /// Origin of each expanded-batch member, parallel to `batch()`.
    pub fn origins(&self) -> &[Origin] {
        &self.origins
    }

    /// Size of the batch before expansion.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    /// Expanded indices whose member is an untransformed original.
    pub fn original_positions(&self) -> Vec<usize> {
        self.origins
            .iter()
            .enumerate()
            .filter(|(_, o)| o.transform.is_none())
            .map(|(i, _)| i)
            .collect()
    }
}

/// Expand a batch with one transformed copy per suite member per original.
pub fn build_augmented_batch(
    batch: &LabeledBatch,
    suite: &AugmentationSuite,
) -> Result<AugmentedBatch> {
    let mut images = Vec::with_capacity(batch.len() * suite.expansion_factor());
    let mut labels = Vec::with_capacity(images.capacity());
    let mut origins = Vec::with_capacity(images.capacity());
    for (t, (img, &label)) in batch.images().iter().zip(batch.labels()).enumerate() {
        images.push(img.clone());
        labels.push(label);
        origins.push(Origin {
            original: t,
            transform: None,
        });
        for (ti, spec) in suite.transforms().iter().enumerate() {
            images.push(apply_transform(img, spec));
            labels.push(label);
            origins.push(Origin {
                original: t,
                transform: Some(ti),
            });
        }
    }
    let source_len = batch.len();
    Ok(AugmentedBatch {
        batch: LabeledBatch::new(images, labels)?,
        origins,
        source_len,
    })
}
