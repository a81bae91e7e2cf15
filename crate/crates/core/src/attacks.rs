//! Malicious-layer construction and gradient-report inversion.
//!
//! All three attacks exploit the same rank-1 identity: for a dense layer on
//! raw inputs, a neuron's weight gradient is its bias gradient times the
//! input, so [`invert_neuron`] recovers `dW_i / db_i`. When only one sample
//! activates the neuron the quotient is that sample; otherwise it is an
//! affine combination of the activating samples, weighted by their
//! per-sample bias gradients.
//!
//! The imprint attack gives every neuron the same measurement row and
//! staggered bias cutoffs, so activation sets are nested and successive
//! gradient differences isolate the samples in one measurement bin. The
//! trap attack draws random rows tilted negative so each neuron activates
//! rarely. The linear-model attack needs no malicious layer at all: with a
//! single sigmoid layer and unique batch labels, each class row's gradient
//! is dominated by the one sample of that class.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imaging::{FieldImage, Image};
use crate::linalg::{dot, Matrix};
use crate::model::{DenseLayer, GradientReport};

/// Bias gradients at or below this magnitude are treated as zero; the
/// neuron is considered dead or fully canceled and is not inverted.
pub const ACTIVATION_EPS: f64 = 1e-12;

/// Reconstructions within this L-infinity distance are duplicates.
pub const DEDUP_TOLERANCE: f64 = 1e-9;

/// Scalar probe the imprint attack bins samples by.
#[derive(Debug, Clone, PartialEq)]
pub enum Measurement {
    /// Mean over all pixel values: the row `(1/d, ..., 1/d)`.
    PixelMean,
    /// An arbitrary nonzero probe row.
    Custom(Vec<f64>),
}

impl Measurement {
    /// The probe as a dense row of length `d`.
    pub fn vector(&self, d: usize) -> Result<Vec<f64>> {
        match self {
            Measurement::PixelMean => Ok(vec![1.0 / d as f64; d]),
            Measurement::Custom(v) => {
                if v.len() != d {
                    return Err(Error::Dimension {
                        context: "Measurement::vector",
                        expected: format!("{d} entries"),
                        got: format!("{} entries", v.len()),
                    });
                }
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::NonFinite { tensor: "measurement" });
                }
                if v.iter().all(|&x| x == 0.0) {
                    return Err(Error::Config("measurement row is all zeros".to_string()));
                }
                Ok(v.clone())
            }
        }
    }

    /// Probe value `m . x` for one flattened image.
    pub fn value(&self, pixels: &[f64]) -> Result<f64> {
        let row = self.vector(pixels.len())?;
        Ok(dot(&row, pixels))
    }
}

/// Everything the server must remember to decode an imprint report.
#[derive(Debug, Clone, PartialEq)]
pub struct ImprintConfig {
    pub measurement: Measurement,
    /// Strictly increasing bin cutoffs; neuron `i` activates iff
    /// the measurement exceeds `cutoffs[i]`.
    pub cutoffs: Vec<f64>,
}

/// Parameters of the randomized trap layer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapConfig {
    pub seed: u64,
    /// Deviation of the Gaussian row entries.
    pub sigma: f64,
    /// Fraction of each row's coordinates made negative.
    pub negative_fraction: f64,
}

/// Where a reconstruction came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    /// A single neuron's gradient was inverted directly.
    Neuron { index: usize },
    /// The difference between two adjacent imprint neurons was inverted.
    Bin { lower: usize, upper: usize },
}

/// One inverted image with its source and the bias-gradient magnitude
/// that served as the divisor.
#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub image: FieldImage,
    pub provenance: Provenance,
    pub bias_magnitude: f64,
}

/// All reconstructions extracted from one gradient report.
pub type ReconstructionSet = Vec<Reconstruction>;

/// Invert one neuron's gradients: `dW_i / db_i` reshaped to an image.
///
/// Exact for a single activating sample; an affine combination of the
/// activating samples otherwise.
pub fn invert_neuron(
    dw: &[f64],
    db: f64,
    shape: (usize, usize, usize),
) -> Result<FieldImage> {
    if db.abs() <= ACTIVATION_EPS {
        return Err(Error::NonInvertible {
            magnitude: db.abs(),
            threshold: ACTIVATION_EPS,
        });
    }
    let (w, h, ch) = shape;
    if dw.len() != w * h * ch {
        return Err(Error::Dimension {
            context: "invert_neuron",
            expected: format!("{} gradient entries", w * h * ch),
            got: format!("{} gradient entries", dw.len()),
        });
    }
    FieldImage::new(w, h, ch, dw.iter().map(|&g| g / db).collect())
}

/// Empirical quantile of sorted values at fraction `q`, by linear
/// interpolation between the order statistics at `q * (len - 1)`.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Build an imprint layer: `n` identical measurement rows with bias
/// cutoffs at the `i/(n+1)` empirical quantiles of the calibration
/// images' measurements, so calibration-like samples spread evenly over
/// bins.
pub fn craft_imprint_layer(
    neurons: usize,
    input_dim: usize,
    calibration: &[Image],
    measurement: &Measurement,
) -> Result<(DenseLayer, ImprintConfig)> {
    if neurons < 2 {
        return Err(Error::Config(format!(
            "imprint needs at least 2 neurons, got {neurons}"
        )));
    }
    if calibration.is_empty() {
        return Err(Error::Config(
            "imprint calibration must not be empty".to_string(),
        ));
    }
    let row = measurement.vector(input_dim)?;
    let mut sorted = calibration
        .iter()
        .map(|img| {
            if img.pixels().len() != input_dim {
                return Err(Error::Dimension {
                    context: "craft_imprint_layer",
                    expected: format!("{input_dim} pixels"),
                    got: format!("{} pixels", img.pixels().len()),
                });
            }
            Ok(dot(&row, img.pixels()))
        })
        .collect::<Result<Vec<f64>>>()?;
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite measurements"));
    let cutoffs: Vec<f64> = (1..=neurons)
        .map(|i| quantile_sorted(&sorted, i as f64 / (neurons + 1) as f64))
        .collect();
    if cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(
            "calibration measurements are too degenerate for strictly increasing cutoffs"
                .to_string(),
        ));
    }
    let weights = Matrix::from_fn(neurons, input_dim, |_, j| row[j]);
    let biases: Vec<f64> = cutoffs.iter().map(|&c| -c).collect();
    let layer = DenseLayer::new(weights, biases)?;
    let config = ImprintConfig {
        measurement: measurement.clone(),
        cutoffs,
    };
    Ok((layer, config))
}

/// Classifier head paired with an imprint layer.
///
/// Class columns are tied: the first `classes` rows are zero and one extra
/// sacrificial row is all `-1` with a bias so large that softmax assigns it
/// probability exactly 1 for any input the layer can produce. Every sample
/// then backpropagates the factor exactly `-1` into every imprint neuron,
/// so successive gradient differences cancel shared samples without
/// rounding error. No real label ever points at the sacrificial row.
pub fn craft_imprint_head(config: &ImprintConfig, classes: usize, input_dim: usize) -> Result<DenseLayer> {
    let neurons = config.cutoffs.len();
    let row = config.measurement.vector(input_dim)?;
    let row_l1: f64 = row.iter().map(|v| v.abs()).sum();
    let max_cut = config
        .cutoffs
        .iter()
        .fold(0.0_f64, |acc, &c| acc.max(c.abs()));
    let bias = 2048.0 + neurons as f64 * (row_l1 + max_cut);
    let weights = Matrix::from_fn(classes + 1, neurons, |r, _| {
        if r == classes {
            -1.0
        } else {
            0.0
        }
    });
    let mut biases = vec![0.0; classes + 1];
    biases[classes] = bias;
    DenseLayer::new(weights, biases)
}

/// Decode an imprint report: invert each adjacent-neuron difference with
/// a usable bias gap, then the top neuron on its own.
pub fn imprint_reconstruct(
    report: &GradientReport,
    config: &ImprintConfig,
    shape: (usize, usize, usize),
) -> Result<ReconstructionSet> {
    let n = config.cutoffs.len();
    if report.layer_weights.rows() < n || report.layer_biases.len() < n {
        return Err(Error::Dimension {
            context: "imprint_reconstruct",
            expected: format!("at least {n} layer rows"),
            got: format!("{} layer rows", report.layer_weights.rows()),
        });
    }
    let mut out = Vec::new();
    for i in 0..n - 1 {
        let db = report.layer_biases[i] - report.layer_biases[i + 1];
        if db.abs() <= ACTIVATION_EPS {
            continue;
        }
        let upper = report.layer_weights.row(i + 1);
        let dw: Vec<f64> = report
            .layer_weights
            .row(i)
            .iter()
            .zip(upper)
            .map(|(&a, &b)| a - b)
            .collect();
        out.push(Reconstruction {
            image: invert_neuron(&dw, db, shape)?,
            provenance: Provenance::Bin { lower: i, upper: i + 1 },
            bias_magnitude: db.abs(),
        });
    }
    let db = report.layer_biases[n - 1];
    if db.abs() > ACTIVATION_EPS {
        out.push(Reconstruction {
            image: invert_neuron(report.layer_weights.row(n - 1), db, shape)?,
            provenance: Provenance::Neuron { index: n - 1 },
            bias_magnitude: db.abs(),
        });
    }
    Ok(out)
}

/// Build a trap layer: seeded Gaussian rows with a fraction
/// `negative_fraction` of coordinates flipped negative and rescaled so a
/// typical nonnegative image lands slightly below zero, making neuron
/// activation rare. Biases are zero.
pub fn craft_trap_layer(neurons: usize, input_dim: usize, config: &TrapConfig) -> Result<DenseLayer> {
    if neurons == 0 || input_dim == 0 {
        return Err(Error::Config(
            "trap layer needs at least one neuron and one input".to_string(),
        ));
    }
    if config.sigma <= 0.0 || config.sigma.is_nan() {
        return Err(Error::Config(format!(
            "trap sigma must be positive, got {}",
            config.sigma
        )));
    }
    let rho = config.negative_fraction;
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(Error::Config(format!(
            "trap negative_fraction must lie in (0, 1], got {rho}"
        )));
    }
    let negatives = ((rho * input_dim as f64).round() as usize).clamp(1, input_dim);
    let rescale = 1.25 * (1.0 - rho) / rho;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.sigma).expect("positive sigma");
    let mut indices: Vec<usize> = (0..input_dim).collect();
    let mut weights = Matrix::zeros(neurons, input_dim);
    for r in 0..neurons {
        let row = weights.row_mut(r);
        for v in row.iter_mut() {
            *v = normal.sample(&mut rng).abs();
        }
        indices.shuffle(&mut rng);
        for &j in &indices[..negatives] {
            row[j] *= -rescale;
        }
    }
    DenseLayer::new(weights, vec![0.0; neurons])
}

fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |acc, (&x, &y)| acc.max((x - y).abs()))
}

/// Invert every live neuron of a trap report, dropping near-duplicate
/// images that differ by at most [`DEDUP_TOLERANCE`] in any pixel.
pub fn trap_reconstruct(
    report: &GradientReport,
    shape: (usize, usize, usize),
) -> Result<ReconstructionSet> {
    let mut out: ReconstructionSet = Vec::new();
    for i in 0..report.layer_biases.len() {
        let db = report.layer_biases[i];
        if db.abs() <= ACTIVATION_EPS {
            continue;
        }
        let image = invert_neuron(report.layer_weights.row(i), db, shape)?;
        let duplicate = out
            .iter()
            .any(|r| linf_distance(r.image.pixels(), image.pixels()) <= DEDUP_TOLERANCE);
        if !duplicate {
            out.push(Reconstruction {
                image,
                provenance: Provenance::Neuron { index: i },
                bias_magnitude: db.abs(),
            });
        }
    }
    Ok(out)
}

/// Invert each class row of a single-layer sigmoid classifier's report.
///
/// Sound only when the batch's labels are pairwise distinct, so each class
/// row's gradient is dominated by the one sample carrying that label.
pub fn linear_model_attack(
    report: &GradientReport,
    labels: &[usize],
    shape: (usize, usize, usize),
) -> Result<ReconstructionSet> {
    for (i, &a) in labels.iter().enumerate() {
        if labels[i + 1..].contains(&a) {
            return Err(Error::Precondition(format!(
                "batch labels must be pairwise distinct, label {a} repeats"
            )));
        }
    }
    let mut out = Vec::new();
    for i in 0..report.layer_biases.len() {
        let db = report.layer_biases[i];
        if db.abs() <= ACTIVATION_EPS {
            continue;
        }
        out.push(Reconstruction {
            image: invert_neuron(report.layer_weights.row(i), db, shape)?,
            provenance: Provenance::Neuron { index: i },
            bias_magnitude: db.abs(),
        });
    }
    Ok(out)
}
