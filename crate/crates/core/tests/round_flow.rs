//! End-to-end federated rounds: dispatch, local updates, attack, aggregate.

mod common;

use common::{dyadic_batch, dyadic_calibration, spread_mean_batch, spread_mean_calibration};
use gradlens_core::analysis::RECOVERY_THRESHOLD_DB;
use gradlens_core::attacks::Measurement;
use gradlens_core::defense::{suite, LabeledBatch};
use gradlens_core::flsim::{
    aggregate, local_update, mean_report, run_round, AttackSpec, DataSource, DispatchedModel,
    RoundConfig,
};
use gradlens_core::imaging::{Image, PSNR_CAP_DB};
use gradlens_core::model::AttackModel;

struct SeededSource {
    batch_size: usize,
    width: usize,
    height: usize,
    channels: usize,
    classes: usize,
    seed: u64,
    spread_means: bool,
}

impl DataSource for SeededSource {
    fn batch_for(&self, user: usize) -> gradlens_core::Result<LabeledBatch> {
        let seed = self.seed.wrapping_add(user as u64);
        Ok(if self.spread_means {
            spread_mean_batch(
                self.batch_size,
                self.width,
                self.height,
                self.channels,
                self.classes,
                seed,
            )
        } else {
            dyadic_batch(
                self.batch_size,
                self.width,
                self.height,
                self.channels,
                self.classes,
                seed,
            )
        })
    }

    fn calibration(&self) -> gradlens_core::Result<Vec<Image>> {
        let seed = self.seed ^ 0xa0c0ffee;
        Ok(if self.spread_means {
            spread_mean_calibration(96, self.width, self.height, self.channels, seed)
        } else {
            dyadic_calibration(96, self.width, self.height, self.channels, seed)
        })
    }
}

fn round_config(attack: AttackSpec, suite_name: &str, batch_size: usize, seed: u64) -> RoundConfig {
    RoundConfig {
        user_count: 3,
        participants: 1,
        learning_rate: 0.05,
        batch_size,
        suite: suite(suite_name).unwrap(),
        attack,
        seed,
    }
}

#[test]
fn undefended_imprint_round_recovers_every_original_exactly() {
    let global = AttackModel::seeded(16, 8, 4, 10);
    let source = SeededSource {
        batch_size: 4,
        width: 4,
        height: 4,
        channels: 1,
        classes: 4,
        seed: 42,
        spread_means: true,
    };
    let cfg = round_config(
        AttackSpec::Imprint {
            neurons: 32,
            measurement: Measurement::PixelMean,
        },
        "none",
        4,
        21,
    );
    let outcome = run_round(&global, &cfg, &source).unwrap();
    let report = &outcome.matches[0];
    assert_eq!(report.per_original.len(), 4);
    for m in &report.per_original {
        assert_eq!(m.psnr_db, PSNR_CAP_DB, "original not recovered exactly");
    }
}

#[test]
fn rotation_defense_blocks_the_same_imprint_round() {
    let global = AttackModel::seeded(16, 8, 4, 10);
    let source = SeededSource {
        batch_size: 4,
        width: 4,
        height: 4,
        channels: 1,
        classes: 4,
        seed: 42,
        spread_means: true,
    };
    let cfg = round_config(
        AttackSpec::Imprint {
            neurons: 32,
            measurement: Measurement::PixelMean,
        },
        "major-rotation",
        4,
        21,
    );
    let outcome = run_round(&global, &cfg, &source).unwrap();
    assert_eq!(outcome.matches[0].recovered(), 0);
}

#[test]
fn linear_round_with_unique_labels_recovers_each_class_sample() {
    let global = AttackModel::seeded(16, 8, 3, 4);
    let source = SeededSource {
        batch_size: 3,
        width: 4,
        height: 4,
        channels: 1,
        classes: 3,
        seed: 7,
        spread_means: false,
    };
    let cfg = round_config(AttackSpec::Linear, "none", 3, 33);
    let outcome = run_round(&global, &cfg, &source).unwrap();
    let report = &outcome.matches[0];
    assert_eq!(report.per_original.len(), 3);
    for m in &report.per_original {
        assert!(
            m.psnr_db >= RECOVERY_THRESHOLD_DB,
            "class sample matched at only {} dB",
            m.psnr_db
        );
    }
}

#[test]
fn trap_round_recovers_something_without_defense() {
    let global = AttackModel::seeded(16, 8, 4, 9);
    let source = SeededSource {
        batch_size: 8,
        width: 4,
        height: 4,
        channels: 1,
        classes: 4,
        seed: 11,
        spread_means: false,
    };
    let cfg = round_config(
        AttackSpec::Trap {
            neurons: 256,
            sigma: 1.0,
            negative_fraction: 0.5,
        },
        "none",
        8,
        99,
    );
    let outcome = run_round(&global, &cfg, &source).unwrap();
    assert!(
        outcome.matches[0].recovered() >= 1,
        "trap recovered nothing at this seed"
    );
}

#[test]
fn aggregation_applies_the_mean_gradient_step() {
    let global = AttackModel::seeded(8, 4, 2, 77);
    let batches: Vec<LabeledBatch> = (0..3)
        .map(|i| dyadic_batch(2, 4, 2, 1, 2, 500 + i))
        .collect();
    let none = suite("none").unwrap();
    let reports: Vec<_> = batches
        .iter()
        .map(|b| local_update(b, &DispatchedModel::Dense(global.clone()), &none).unwrap())
        .collect();
    let mean = mean_report(&reports).unwrap();
    let eta = 0.25;
    let mut model = DispatchedModel::Dense(global.clone());
    aggregate(&mut model, &reports, eta).unwrap();
    let updated = match model {
        DispatchedModel::Dense(m) => m,
        DispatchedModel::Linear(_) => unreachable!(),
    };
    for r in 0..4 {
        for c in 0..8 {
            let expected = global.layer.weights.get(r, c) - eta * mean.layer_weights.get(r, c);
            let got = updated.layer.weights.get(r, c);
            assert!(
                (got - expected).abs() <= 1e-12,
                "aggregated step off at ({r},{c}): {got} vs {expected}"
            );
        }
    }
}

#[test]
fn mean_report_tracks_total_contributing_samples() {
    let global = AttackModel::seeded(8, 4, 2, 77);
    let batch = dyadic_batch(2, 4, 2, 1, 2, 800);
    let report = local_update(
        &batch,
        &DispatchedModel::Dense(global),
        &suite("hflip").unwrap(),
    )
    .unwrap();
    assert_eq!(report.batch_size, 4);
    let mean = mean_report(&[report.clone(), report]).unwrap();
    assert_eq!(mean.batch_size, 8);
}
