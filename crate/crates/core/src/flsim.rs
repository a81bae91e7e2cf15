//! One FedSGD round with a dishonest server.
//!
//! The server dispatches a model (possibly with a malicious first layer or
//! a swapped-in single-layer classifier), selected clients compute summed
//! gradients over their, optionally augmented, batches, and the server
//! both attacks the received reports and aggregates them into a model
//! update. Reconstruction consumes nothing but gradient reports and the
//! server's own crafting parameters; client images are touched only by the
//! evaluation instrumentation that scores the attack.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analysis::{match_reconstructions, MatchReport};
use crate::attacks::{
    craft_imprint_head, craft_imprint_layer, craft_trap_layer, imprint_reconstruct,
    linear_model_attack, trap_reconstruct, ImprintConfig, Measurement, ReconstructionSet,
    TrapConfig,
};
use crate::defense::{build_augmented_batch, AugmentationSuite, LabeledBatch};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::model::{
    backward_summed, linear_backward_summed, sgd_step, sgd_step_linear, AttackModel, DenseLayer,
    GradientReport, LinearModel,
};

/// Bias installed on every class row of the dispatched single-layer
/// classifier. It pushes all sigmoids so close to zero that only the rows
/// of labels actually present in the batch carry usable gradients.
pub const LINEAR_ATTACK_BIAS: f64 = -30.0;

/// What the server sends to clients this round.
#[derive(Debug, Clone, PartialEq)]
pub enum DispatchedModel {
    /// The usual two-layer architecture, benign or with a crafted layer.
    Dense(AttackModel),
    /// A single-layer sigmoid classifier.
    Linear(LinearModel),
}

impl DispatchedModel {
    pub fn input_dim(&self) -> usize {
        match self {
            DispatchedModel::Dense(m) => m.input_dim(),
            DispatchedModel::Linear(m) => m.input_dim(),
        }
    }
}

/// Dispatched model plus whatever the server must remember to decode the
/// resulting reports.
#[derive(Debug, Clone)]
pub struct Dispatch {
    pub model: DispatchedModel,
    /// Present exactly when the model carries an imprint layer.
    pub imprint: Option<ImprintConfig>,
}

/// The server's attack for one round.
#[derive(Debug, Clone, PartialEq)]
pub enum AttackSpec {
    /// Honest dispatch.
    None,
    /// Measurement-binning malicious first layer.
    Imprint {
        neurons: usize,
        measurement: Measurement,
    },
    /// Randomized rarely-activating malicious first layer.
    Trap {
        neurons: usize,
        sigma: f64,
        negative_fraction: f64,
    },
    /// Swap in a single-layer sigmoid classifier.
    Linear,
}

/// Parameters of one federated round.
#[derive(Debug, Clone)]
pub struct RoundConfig {
    /// Total registered users.
    pub user_count: usize,
    /// Users selected this round.
    pub participants: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub suite: AugmentationSuite,
    pub attack: AttackSpec,
    pub seed: u64,
}

impl RoundConfig {
    fn validate(&self) -> Result<()> {
        if self.participants == 0 || self.participants > self.user_count {
            return Err(Error::Config(format!(
                "need 1 <= participants <= users, got {} of {}",
                self.participants, self.user_count
            )));
        }
        if self.learning_rate <= 0.0 || self.learning_rate.is_nan() {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".to_string()));
        }
        Ok(())
    }
}

/// Everything observable from one round.
#[derive(Debug, Clone)]
pub struct RoundOutcome {
    /// The dispatched model after aggregation.
    pub model: DispatchedModel,
    /// Selected user indices, ascending.
    pub selected: Vec<usize>,
    /// One uploaded report per selected user.
    pub reports: Vec<GradientReport>,
    /// What the server extracted from each report.
    pub reconstructions: Vec<ReconstructionSet>,
    /// Each user's reconstructions scored against that user's originals.
    pub matches: Vec<MatchReport>,
}

/// Supplies client batches and the server's auxiliary calibration images.
pub trait DataSource {
    /// The batch user `user` would train on this round.
    fn batch_for(&self, user: usize) -> Result<LabeledBatch>;
    /// Images the server uses to calibrate attack parameters. These stand
    /// in for public data from the same distribution as the clients'.
    fn calibration(&self) -> Result<Vec<Image>>;
}

/// Craft the model the server sends out this round.
pub fn dispatch(
    global: &AttackModel,
    attack: &AttackSpec,
    calibration: &[Image],
    seed: u64,
) -> Result<Dispatch> {
    let d = global.input_dim();
    let classes = global.class_count();
    match attack {
        AttackSpec::None => Ok(Dispatch {
            model: DispatchedModel::Dense(global.clone()),
            imprint: None,
        }),
        AttackSpec::Imprint {
            neurons,
            measurement,
        } => {
            let (layer, config) = craft_imprint_layer(*neurons, d, calibration, measurement)?;
            let head = craft_imprint_head(&config, classes, d)?;
            Ok(Dispatch {
                model: DispatchedModel::Dense(AttackModel::new(layer, head)?),
                imprint: Some(config),
            })
        }
        AttackSpec::Trap {
            neurons,
            sigma,
            negative_fraction,
        } => {
            let layer = craft_trap_layer(
                *neurons,
                d,
                &TrapConfig {
                    seed,
                    sigma: *sigma,
                    negative_fraction: *negative_fraction,
                },
            )?;
            let head = DenseLayer::seeded(classes, *neurons, seed.wrapping_add(0x7ead));
            Ok(Dispatch {
                model: DispatchedModel::Dense(AttackModel::new(layer, head)?),
                imprint: None,
            })
        }
        AttackSpec::Linear => {
            let mut layer = DenseLayer::seeded(classes, d, seed);
            for b in &mut layer.biases {
                *b = LINEAR_ATTACK_BIAS;
            }
            Ok(Dispatch {
                model: DispatchedModel::Linear(LinearModel::new(layer)),
                imprint: None,
            })
        }
    }
}

/// One client's contribution: expand the batch through the suite, then
/// upload the summed gradients of the expanded batch.
pub fn local_update(
    batch: &LabeledBatch,
    model: &DispatchedModel,
    suite: &AugmentationSuite,
) -> Result<GradientReport> {
    let expanded = build_augmented_batch(batch, suite)?;
    match model {
        DispatchedModel::Dense(m) => backward_summed(m, expanded.batch()),
        DispatchedModel::Linear(m) => linear_backward_summed(m, expanded.batch()),
    }
}

/// Element-wise mean of the uploaded reports; `batch_size` becomes the
/// total number of contributing samples.
pub fn mean_report(reports: &[GradientReport]) -> Result<GradientReport> {
    let first = reports
        .first()
        .ok_or_else(|| Error::Precondition("aggregate needs at least one report".to_string()))?;
    let mut mean = first.clone();
    for r in &reports[1..] {
        mean.add_assign(r)?;
    }
    mean.scale(1.0 / reports.len() as f64);
    Ok(mean)
}

/// Average the reports and take one SGD step on the model.
pub fn aggregate(
    model: &mut DispatchedModel,
    reports: &[GradientReport],
    learning_rate: f64,
) -> Result<()> {
    let mean = mean_report(reports)?;
    match model {
        DispatchedModel::Dense(m) => sgd_step(m, &mean, learning_rate),
        DispatchedModel::Linear(m) => sgd_step_linear(m, &mean, learning_rate),
    }
}

/// Run one full round: select users, dispatch, collect local updates,
/// attack the reports, and aggregate. Deterministic per config and data.
pub fn run_round(
    global: &AttackModel,
    cfg: &RoundConfig,
    source: &impl DataSource,
) -> Result<RoundOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut selected = sample(&mut rng, cfg.user_count, cfg.participants).into_vec();
    selected.sort_unstable();

    let calibration = source.calibration()?;
    let dispatched = dispatch(global, &cfg.attack, &calibration, cfg.seed)?;

    let mut reports = Vec::with_capacity(cfg.participants);
    let mut reconstructions = Vec::with_capacity(cfg.participants);
    let mut matches = Vec::with_capacity(cfg.participants);
    for &user in &selected {
        let batch = source.batch_for(user)?;
        if batch.len() != cfg.batch_size {
            return Err(Error::Dimension {
                context: "run_round",
                expected: format!("batches of {} samples", cfg.batch_size),
                got: format!("{} samples from user {user}", batch.len()),
            });
        }
        let report = local_update(&batch, &dispatched.model, &cfg.suite)?;
        let shape = batch.shape();
        let recons = match &cfg.attack {
            AttackSpec::None => Vec::new(),
            AttackSpec::Imprint { .. } => {
                let config = dispatched
                    .imprint
                    .as_ref()
                    .expect("imprint dispatch carries its config");
                imprint_reconstruct(&report, config, shape)?
            }
            AttackSpec::Trap { .. } => trap_reconstruct(&report, shape)?,
            AttackSpec::Linear => linear_model_attack(&report, batch.labels(), shape)?,
        };
        matches.push(match_reconstructions(&recons, &batch)?);
        reports.push(report);
        reconstructions.push(recons);
    }

    let mut model = dispatched.model;
    aggregate(&mut model, &reports, cfg.learning_rate)?;
    Ok(RoundOutcome {
        model,
        selected,
        reports,
        reconstructions,
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::defense::suite;

    struct FixedSource {
        batches: Vec<LabeledBatch>,
    }

    impl DataSource for FixedSource {
        fn batch_for(&self, user: usize) -> Result<LabeledBatch> {
            Ok(self.batches[user % self.batches.len()].clone())
        }

        fn calibration(&self) -> Result<Vec<Image>> {
            Ok(self.batches[0].images().to_vec())
        }
    }

    fn image(values: &[f64]) -> Image {
        Image::new(2, 2, 1, values.to_vec()).unwrap()
    }

    fn source() -> FixedSource {
        let b = LabeledBatch::new(
            vec![image(&[0.1, 0.2, 0.3, 0.4]), image(&[0.9, 0.8, 0.7, 0.6])],
            vec![0, 1],
        )
        .unwrap();
        FixedSource { batches: vec![b] }
    }

    fn config(attack: AttackSpec) -> RoundConfig {
        RoundConfig {
            user_count: 5,
            participants: 2,
            learning_rate: 0.1,
            batch_size: 2,
            suite: suite("none").unwrap(),
            attack,
            seed: 17,
        }
    }

    #[test]
    fn honest_round_updates_the_model_and_extracts_nothing() {
        let global = AttackModel::seeded(4, 3, 2, 1);
        let outcome = run_round(&global, &config(AttackSpec::None), &source()).unwrap();
        assert_eq!(outcome.selected.len(), 2);
        assert!(outcome.selected.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(outcome.reports.len(), 2);
        assert!(outcome.reconstructions.iter().all(|r| r.is_empty()));
        match outcome.model {
            DispatchedModel::Dense(m) => assert_ne!(m.layer.weights, global.layer.weights),
            DispatchedModel::Linear(_) => panic!("honest round keeps the architecture"),
        }
    }

    #[test]
    fn rounds_are_deterministic_per_seed() {
        let global = AttackModel::seeded(4, 3, 2, 1);
        let cfg = config(AttackSpec::Trap {
            neurons: 8,
            sigma: 1.0,
            negative_fraction: 0.5,
        });
        let a = run_round(&global, &cfg, &source()).unwrap();
        let b = run_round(&global, &cfg, &source()).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.reports[0], b.reports[0]);
        assert_eq!(
            a.matches[0].per_original[0].psnr_db,
            b.matches[0].per_original[0].psnr_db
        );
    }

    #[test]
    fn identical_reports_average_to_themselves() {
        let global = AttackModel::seeded(4, 3, 2, 1);
        let batch = source().batch_for(0).unwrap();
        let report = local_update(
            &batch,
            &DispatchedModel::Dense(global.clone()),
            &suite("none").unwrap(),
        )
        .unwrap();
        let mean = mean_report(&[report.clone(), report.clone(), report.clone()]).unwrap();
        for (a, b) in mean
            .layer_weights
            .data()
            .iter()
            .zip(report.layer_weights.data())
        {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn suite_expansion_multiplies_report_batch_size() {
        let global = AttackModel::seeded(4, 3, 2, 1);
        let batch = source().batch_for(0).unwrap();
        let report = local_update(
            &batch,
            &DispatchedModel::Dense(global),
            &suite("major-rotation").unwrap(),
        )
        .unwrap();
        assert_eq!(report.batch_size, 8);
    }

    #[test]
    fn imprint_dispatch_builds_identical_rows() {
        let global = AttackModel::seeded(4, 3, 2, 1);
        let calibration = source().calibration().unwrap();
        let dispatched = dispatch(
            &global,
            &AttackSpec::Imprint {
                neurons: 4,
                measurement: Measurement::PixelMean,
            },
            &calibration,
            9,
        )
        .unwrap();
        match dispatched.model {
            DispatchedModel::Dense(m) => {
                assert_eq!(m.neuron_count(), 4);
                assert_eq!(m.layer.weights.row(0), m.layer.weights.row(3));
            }
            DispatchedModel::Linear(_) => panic!("imprint keeps the dense architecture"),
        }
        assert!(dispatched.imprint.is_some());
    }

    #[test]
    fn bad_configs_are_rejected() {
        let mut cfg = config(AttackSpec::None);
        cfg.participants = 9;
        assert!(matches!(
            run_round(&AttackModel::seeded(4, 3, 2, 1), &cfg, &source()),
            Err(Error::Config(_))
        ));
    }
}
