//! The attacked model and exact, reproducible gradient computation.
//!
//! [`AttackModel`] is a dense layer, ReLU, and a dense classifier head
//! trained with softmax cross-entropy. [`LinearModel`] is a single dense
//! layer with one sigmoid output per class trained with per-class binary
//! cross-entropy. Both losses are summed over the batch, not averaged, so a
//! batch gradient is exactly the sample-order sum of per-sample gradients:
//! [`backward_summed`] accumulates the same per-sample values left to right
//! and is therefore bit-identical to summing [`backward_per_sample`] output.
//!
//! A neuron counts as activated only when its pre-activation is strictly
//! positive; the ReLU derivative at 0 is 0. The same strict predicate drives
//! the activation census in [`crate::analysis`].

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::defense::{build_augmented_batch, AugmentationSuite, LabeledBatch};
use crate::error::{Error, Result};
use crate::linalg::{add_assign, axpy, Matrix};

/// One dense layer: `y = weights * x + biases`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, biases: Vec<f64>) -> Result<Self> {
        if weights.rows() != biases.len() {
            return Err(Error::Dimension {
                context: "DenseLayer::new",
                expected: format!("{} biases", weights.rows()),
                got: format!("{} biases", biases.len()),
            });
        }
        if !weights.is_finite() || !biases.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { tensor: "layer parameters" });
        }
        Ok(DenseLayer { weights, biases })
    }

    /// Seeded Gaussian weights with deviation `1/sqrt(fan_in)`, zero biases.
    pub fn seeded(outputs: usize, inputs: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (inputs as f64).sqrt()).expect("positive deviation");
        let weights = Matrix::from_fn(outputs, inputs, |_, _| normal.sample(&mut rng));
        DenseLayer {
            weights,
            biases: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    /// `weights * x + biases`.
    pub fn affine(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.weights.matvec(x)?;
        add_assign(&mut out, &self.biases);
        Ok(out)
    }

    fn step(&mut self, weight_grads: &Matrix, bias_grads: &[f64], eta: f64) -> Result<()> {
        if weight_grads.rows() != self.weights.rows()
            || weight_grads.cols() != self.weights.cols()
            || bias_grads.len() != self.biases.len()
        {
            return Err(Error::Dimension {
                context: "DenseLayer::step",
                expected: format!("{}x{}", self.weights.rows(), self.weights.cols()),
                got: format!("{}x{}", weight_grads.rows(), weight_grads.cols()),
            });
        }
        for r in 0..self.weights.rows() {
            axpy(self.weights.row_mut(r), -eta, weight_grads.row(r));
        }
        axpy(&mut self.biases, -eta, bias_grads);
        Ok(())
    }
}

/// Two-layer network under attack: dense layer, ReLU, dense head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackModel {
    pub layer: DenseLayer,
    pub head: DenseLayer,
}

impl AttackModel {
    pub fn new(layer: DenseLayer, head: DenseLayer) -> Result<Self> {
        if head.inputs() != layer.outputs() {
            return Err(Error::Dimension {
                context: "AttackModel::new",
                expected: format!("head with {} inputs", layer.outputs()),
                got: format!("head with {} inputs", head.inputs()),
            });
        }
        Ok(AttackModel { layer, head })
    }

    /// Seeded benign model: Gaussian layers, zero biases.
    pub fn seeded(input_dim: usize, neurons: usize, classes: usize, seed: u64) -> Self {
        AttackModel {
            layer: DenseLayer::seeded(neurons, input_dim, seed),
            head: DenseLayer::seeded(classes, neurons, seed.wrapping_add(1)),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer.inputs()
    }

    pub fn neuron_count(&self) -> usize {
        self.layer.outputs()
    }

    pub fn class_count(&self) -> usize {
        self.head.outputs()
    }
}

/// Single dense layer with sigmoid outputs, one per class.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub layer: DenseLayer,
}

impl LinearModel {
    pub fn new(layer: DenseLayer) -> Self {
        LinearModel { layer }
    }

    pub fn input_dim(&self) -> usize {
        self.layer.inputs()
    }

    pub fn class_count(&self) -> usize {
        self.layer.outputs()
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Dense-layer outputs before ReLU.
    pub preactivations: Vec<f64>,
    /// ReLU outputs.
    pub hidden: Vec<f64>,
    /// Head outputs.
    pub logits: Vec<f64>,
}

/// Run the two-layer model on one flattened input.
pub fn forward(model: &AttackModel, x: &[f64]) -> Result<ForwardPass> {
    let preactivations = model.layer.affine(x)?;
    if !preactivations.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { tensor: "preactivations" });
    }
    let hidden: Vec<f64> = preactivations.iter().map(|&z| z.max(0.0)).collect();
    let logits = model.head.affine(&hidden)?;
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { tensor: "logits" });
    }
    Ok(ForwardPass {
        preactivations,
        hidden,
        logits,
    })
}

/// Gradients of one sample's loss with respect to every parameter.
#[derive(Debug, Clone)]
pub struct SampleGradient {
    pub layer_weights: Matrix,
    pub layer_biases: Vec<f64>,
    pub head_weights: Matrix,
    pub head_biases: Vec<f64>,
    pub loss: f64,
}

/// Ordered per-sample gradients for a whole batch.
pub type PerSampleGradients = Vec<SampleGradient>;

/// Batch-summed gradients, the payload a client uploads.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub layer_weights: Matrix,
    pub layer_biases: Vec<f64>,
    pub head_weights: Matrix,
    pub head_biases: Vec<f64>,
    pub batch_size: usize,
}

impl GradientReport {
    fn zeros(neurons: usize, inputs: usize, classes: usize, head_inputs: usize) -> Self {
        GradientReport {
            layer_weights: Matrix::zeros(neurons, inputs),
            layer_biases: vec![0.0; neurons],
            head_weights: Matrix::zeros(classes, head_inputs),
            head_biases: vec![0.0; classes],
            batch_size: 0,
        }
    }

    fn accumulate(&mut self, g: &SampleGradient) -> Result<()> {
        self.layer_weights.add_assign(&g.layer_weights)?;
        add_assign(&mut self.layer_biases, &g.layer_biases);
        self.head_weights.add_assign(&g.head_weights)?;
        add_assign(&mut self.head_biases, &g.head_biases);
        self.batch_size += 1;
        Ok(())
    }

    /// Entry-wise sum with another report of identical shape.
    pub fn add_assign(&mut self, other: &GradientReport) -> Result<()> {
        self.layer_weights.add_assign(&other.layer_weights)?;
        add_assign(&mut self.layer_biases, &other.layer_biases);
        self.head_weights.add_assign(&other.head_weights)?;
        add_assign(&mut self.head_biases, &other.head_biases);
        self.batch_size += other.batch_size;
        Ok(())
    }

    /// Scale every gradient entry, e.g. by `1/M` when averaging reports.
    pub fn scale(&mut self, s: f64) {
        self.layer_weights.scale(s);
        crate::linalg::scale(&mut self.layer_biases, s);
        self.head_weights.scale(s);
        crate::linalg::scale(&mut self.head_biases, s);
    }
}

/// Sum per-sample gradients in order into one report.
pub fn sum_sample_gradients(grads: &PerSampleGradients) -> Result<GradientReport> {
    let first = grads
        .first()
        .ok_or_else(|| Error::Precondition("empty gradient list".to_string()))?;
    let mut report = GradientReport::zeros(
        first.layer_weights.rows(),
        first.layer_weights.cols(),
        first.head_weights.rows(),
        first.head_weights.cols(),
    );
    for g in grads {
        report.accumulate(g)?;
    }
    Ok(report)
}

/// Numerically stable log-sum-exp returning `(log_sum, softmax)`.
fn log_softmax_parts(logits: &[f64]) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let mut sum = 0.0;
    for &e in &exps {
        sum += e;
    }
    let probs = exps.iter().map(|&e| e / sum).collect();
    (max + sum.ln(), probs)
}

/// Softmax cross-entropy gradients for one sample.
pub fn backward_per_sample(model: &AttackModel, x: &[f64], label: usize) -> Result<SampleGradient> {
    let classes = model.class_count();
    if label >= classes {
        return Err(Error::Precondition(format!(
            "label {label} outside {classes} classes"
        )));
    }
    let pass = forward(model, x)?;
    let (log_norm, probs) = log_softmax_parts(&pass.logits);
    let loss = log_norm - pass.logits[label];
    if !loss.is_finite() {
        return Err(Error::NonFinite { tensor: "loss" });
    }
    let mut logit_grads = probs;
    logit_grads[label] -= 1.0;

    let neurons = model.neuron_count();
    let head_weights = Matrix::from_fn(classes, neurons, |r, i| logit_grads[r] * pass.hidden[i]);
    let back = model.head.weights.matvec_t(&logit_grads)?;
    let layer_biases: Vec<f64> = back
        .iter()
        .zip(&pass.preactivations)
        .map(|(&g, &z)| if z > 0.0 { g } else { 0.0 })
        .collect();
    let layer_weights = Matrix::from_fn(neurons, x.len(), |i, j| layer_biases[i] * x[j]);
    Ok(SampleGradient {
        layer_weights,
        layer_biases,
        head_weights,
        head_biases: logit_grads,
        loss,
    })
}

/// Per-sample gradients for a whole batch, in batch order.
pub fn backward_batch(model: &AttackModel, batch: &LabeledBatch) -> Result<PerSampleGradients> {
    batch
        .images()
        .iter()
        .zip(batch.labels())
        .map(|(img, &label)| backward_per_sample(model, img.pixels(), label))
        .collect()
}

/// Batch-summed gradients: the sample-order sum of per-sample gradients.
pub fn backward_summed(model: &AttackModel, batch: &LabeledBatch) -> Result<GradientReport> {
    let mut report = GradientReport::zeros(
        model.neuron_count(),
        model.input_dim(),
        model.class_count(),
        model.neuron_count(),
    );
    for (img, &label) in batch.images().iter().zip(batch.labels()) {
        let g = backward_per_sample(model, img.pixels(), label)?;
        report.accumulate(&g)?;
    }
    Ok(report)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Stable binary cross-entropy with logits: `max(z,0) - z*y + ln(1+e^-|z|)`.
fn bce_with_logits(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Per-class sigmoid cross-entropy gradients for one sample.
pub fn linear_backward_per_sample(
    model: &LinearModel,
    x: &[f64],
    label: usize,
) -> Result<SampleGradient> {
    let classes = model.class_count();
    if label >= classes {
        return Err(Error::Precondition(format!(
            "label {label} outside {classes} classes"
        )));
    }
    let z = model.layer.affine(x)?;
    if !z.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { tensor: "preactivations" });
    }
    let mut loss = 0.0;
    let mut layer_biases = Vec::with_capacity(classes);
    for (r, &zr) in z.iter().enumerate() {
        let y = if r == label { 1.0 } else { 0.0 };
        loss += bce_with_logits(zr, y);
        layer_biases.push(sigmoid(zr) - y);
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite { tensor: "loss" });
    }
    let layer_weights = Matrix::from_fn(classes, x.len(), |r, j| layer_biases[r] * x[j]);
    Ok(SampleGradient {
        layer_weights,
        layer_biases,
        head_weights: Matrix::zeros(0, 0),
        head_biases: vec![],
        loss,
    })
}

/// Batch-summed gradients of the sigmoid-classifier loss.
pub fn linear_backward_summed(model: &LinearModel, batch: &LabeledBatch) -> Result<GradientReport> {
    let mut report = GradientReport::zeros(model.class_count(), model.input_dim(), 0, 0);
    for (img, &label) in batch.images().iter().zip(batch.labels()) {
        let g = linear_backward_per_sample(model, img.pixels(), label)?;
        report.accumulate(&g)?;
    }
    Ok(report)
}

/// Apply one SGD step with an already averaged report.
pub fn sgd_step(model: &mut AttackModel, report: &GradientReport, eta: f64) -> Result<()> {
    model
        .layer
        .step(&report.layer_weights, &report.layer_biases, eta)?;
    model
        .head
        .step(&report.head_weights, &report.head_biases, eta)
}

/// SGD step for the single-layer model; the report's head part must be empty.
pub fn sgd_step_linear(model: &mut LinearModel, report: &GradientReport, eta: f64) -> Result<()> {
    if report.head_weights.rows() != 0 || !report.head_biases.is_empty() {
        return Err(Error::Precondition(
            "linear model report must have an empty head".to_string(),
        ));
    }
    model
        .layer
        .step(&report.layer_weights, &report.layer_biases, eta)
}

/// Training setup for [`train_eval`].
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub hidden_neurons: usize,
    pub class_count: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

/// Predicted class: argmax of the logits, lowest index on ties.
pub fn predict(model: &AttackModel, x: &[f64]) -> Result<usize> {
    let pass = forward(model, x)?;
    let mut best = 0;
    for (i, &l) in pass.logits.iter().enumerate() {
        if l > pass.logits[best] {
            best = i;
        }
    }
    Ok(best)
}

/// Fraction of test samples classified correctly.
pub fn accuracy(model: &AttackModel, test: &LabeledBatch) -> Result<f64> {
    let mut hits = 0usize;
    for (img, &label) in test.images().iter().zip(test.labels()) {
        if predict(model, img.pixels())? == label {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.len() as f64)
}

/// Train a fresh seeded model with mini-batch SGD, expanding every batch
/// through `suite` when one is given, and return test accuracy.
///
/// Each step uses the mean gradient over the expanded mini-batch, so the
/// step scale is comparable across suites of different sizes.
pub fn train_eval(
    train: &LabeledBatch,
    test: &LabeledBatch,
    cfg: &TrainConfig,
    suite: Option<&AugmentationSuite>,
) -> Result<f64> {
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".to_string()));
    }
    if let Some(&bad) = train
        .labels()
        .iter()
        .chain(test.labels())
        .find(|&&l| l >= cfg.class_count)
    {
        return Err(Error::Precondition(format!(
            "label {bad} outside {} classes",
            cfg.class_count
        )));
    }
    let (w, h, ch) = train.shape();
    let mut model = AttackModel::seeded(w * h * ch, cfg.hidden_neurons, cfg.class_count, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..train.len()).collect();
    for _ in 0..cfg.epochs {
        for i in (1..order.len()).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        for chunk in order.chunks(cfg.batch_size) {
            let images = chunk.iter().map(|&i| train.images()[i].clone()).collect();
            let labels = chunk.iter().map(|&i| train.labels()[i]).collect();
            let batch = LabeledBatch::new(images, labels)?;
            let expanded = match suite {
                Some(s) => build_augmented_batch(&batch, s)?.batch().clone(),
                None => batch,
            };
            let mut report = backward_summed(&model, &expanded)?;
            report.scale(1.0 / expanded.len() as f64);
            sgd_step(&mut model, &report, cfg.learning_rate)?;
        }
    }
    accuracy(&model, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Image;

    fn batch_of(values: Vec<(Vec<f64>, usize)>) -> LabeledBatch {
        let images = values
            .iter()
            .map(|(px, _)| Image::new(2, 2, 1, px.clone()).unwrap())
            .collect();
        let labels = values.iter().map(|&(_, l)| l).collect();
        LabeledBatch::new(images, labels).unwrap()
    }

    #[test]
    fn softmax_probabilities_sum_to_one() {
        let model = AttackModel::seeded(4, 3, 2, 7);
        let g = backward_per_sample(&model, &[0.1, 0.9, 0.4, 0.2], 1).unwrap();
        let total: f64 = g.head_biases.iter().sum();
        assert!(total.abs() < 1e-12, "logit gradients sum to {total}");
        assert!(g.loss > 0.0);
    }

    #[test]
    fn relu_gate_zeroes_dead_neuron_gradients() {
        let layer = DenseLayer::new(
            Matrix::from_vec(2, 2, vec![1.0, 0.0, -1.0, 0.0]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let head = DenseLayer::new(
            Matrix::from_vec(2, 2, vec![1.0, 1.0, -1.0, 1.0]).unwrap(),
            vec![0.0, 0.0],
        )
        .unwrap();
        let model = AttackModel::new(layer, head).unwrap();
        let g = backward_per_sample(&model, &[0.5, 0.3], 0).unwrap();
        assert_eq!(g.layer_biases[1], 0.0);
        assert_eq!(g.layer_weights.row(1), &[0.0, 0.0]);
        assert_ne!(g.layer_biases[0], 0.0);
    }

    #[test]
    fn summed_report_is_bit_identical_to_per_sample_sum() {
        let model = AttackModel::seeded(4, 5, 3, 11);
        let batch = batch_of(vec![
            (vec![0.1, 0.2, 0.3, 0.4], 0),
            (vec![0.9, 0.8, 0.7, 0.6], 2),
            (vec![0.5, 0.5, 0.25, 0.75], 1),
        ]);
        let summed = backward_summed(&model, &batch).unwrap();
        let manual = sum_sample_gradients(&backward_batch(&model, &batch).unwrap()).unwrap();
        assert_eq!(summed, manual);
        assert_eq!(summed.batch_size, 3);
    }

    #[test]
    fn rank_one_rows_scale_like_bias_gradients() {
        let model = AttackModel::seeded(4, 6, 3, 3);
        let x = [0.2, 0.8, 0.5, 0.1];
        let g = backward_per_sample(&model, &x, 1).unwrap();
        for i in 0..6 {
            for (j, &xj) in x.iter().enumerate() {
                let expected = g.layer_biases[i] * xj;
                assert!((g.layer_weights.get(i, j) - expected).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let model = AttackModel::seeded(4, 3, 2, 7);
        assert!(backward_per_sample(&model, &[0.0; 4], 2).is_err());
    }

    #[test]
    fn sigmoid_classifier_gradients_follow_closed_form() {
        let layer = DenseLayer::new(
            Matrix::from_vec(2, 3, vec![0.5, -0.25, 0.1, 0.0, 0.3, -0.2]).unwrap(),
            vec![0.1, -0.4],
        )
        .unwrap();
        let model = LinearModel::new(layer);
        let x = [0.6, 0.2, 0.9];
        let g = linear_backward_per_sample(&model, &x, 1).unwrap();
        let z0 = 0.5 * 0.6 - 0.25 * 0.2 + 0.1 * 0.9 + 0.1;
        let z1 = 0.3 * 0.2 - 0.2 * 0.9 - 0.4;
        assert!((g.layer_biases[0] - sigmoid(z0)).abs() < 1e-15);
        assert!((g.layer_biases[1] - (sigmoid(z1) - 1.0)).abs() < 1e-15);
        assert!((g.layer_weights.get(1, 2) - (sigmoid(z1) - 1.0) * 0.9).abs() < 1e-15);
        assert!(g.head_biases.is_empty());
    }

    #[test]
    fn sgd_step_moves_against_the_gradient() {
        let mut model = AttackModel::seeded(3, 2, 2, 9);
        let before = model.layer.weights.get(0, 0);
        let batch = LabeledBatch::new(
            vec![Image::new(3, 1, 1, vec![0.3, 0.6, 0.1]).unwrap()],
            vec![1],
        )
        .unwrap();
        let report = backward_summed(&model, &batch).unwrap();
        let g = report.layer_weights.get(0, 0);
        sgd_step(&mut model, &report, 0.5).unwrap();
        assert_eq!(model.layer.weights.get(0, 0), before - 0.5 * g);
    }

    #[test]
    fn train_eval_with_zero_epochs_reports_initial_accuracy() {
        let batch = batch_of(vec![
            (vec![0.9, 0.9, 0.1, 0.1], 0),
            (vec![0.1, 0.1, 0.9, 0.9], 1),
        ]);
        let cfg = TrainConfig {
            hidden_neurons: 4,
            class_count: 2,
            epochs: 0,
            learning_rate: 0.1,
            batch_size: 2,
            seed: 5,
        };
        let a = train_eval(&batch, &batch, &cfg, None).unwrap();
        let b = train_eval(&batch, &batch, &cfg, None).unwrap();
        assert_eq!(a, b);
    }
}
