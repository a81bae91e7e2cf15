//! Shared helpers for integration tests.
#![allow(dead_code)]

use gradlens_core::defense::LabeledBatch;
use gradlens_core::imaging::Image;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random image on the 1/256 pixel grid, the same grid the synthetic
/// generator and the PNM codec produce. Sums of such pixels are exact in
/// f64, which several exactness properties rely on.
pub fn dyadic_image(width: usize, height: usize, channels: usize, rng: &mut ChaCha8Rng) -> Image {
    let pixels = (0..width * height * channels)
        .map(|_| rng.gen_range(0u32..256) as f64 / 256.0)
        .collect();
    Image::new(width, height, channels, pixels).unwrap()
}

/// Seeded batch of random grid-valued images with round-robin labels.
pub fn dyadic_batch(
    batch: usize,
    width: usize,
    height: usize,
    channels: usize,
    classes: usize,
    seed: u64,
) -> LabeledBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..batch)
        .map(|_| dyadic_image(width, height, channels, &mut rng))
        .collect();
    let labels = (0..batch).map(|j| j % classes).collect();
    LabeledBatch::new(images, labels).unwrap()
}

/// Seeded calibration pool from the same pixel distribution.
pub fn dyadic_calibration(
    count: usize,
    width: usize,
    height: usize,
    channels: usize,
    seed: u64,
) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| dyadic_image(width, height, channels, &mut rng))
        .collect()
}

/// Grid-valued image whose pixel mean lands near `target`.
pub fn spread_mean_image(
    width: usize,
    height: usize,
    channels: usize,
    target: f64,
    rng: &mut ChaCha8Rng,
) -> Image {
    let pixels = (0..width * height * channels)
        .map(|_| {
            let v: f64 = target + rng.gen_range(-0.12..0.12);
            (v.clamp(0.0, 1.0) * 256.0).round().min(255.0) / 256.0
        })
        .collect();
    Image::new(width, height, channels, pixels).unwrap()
}

/// Batch with pixel means evenly spread across [0.2, 0.8], the spread the
/// synthetic generator guarantees so measurement bins can separate
/// samples. Labels are round-robin.
pub fn spread_mean_batch(
    batch: usize,
    width: usize,
    height: usize,
    channels: usize,
    classes: usize,
    seed: u64,
) -> LabeledBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..batch)
        .map(|j| {
            let target = 0.2 + 0.6 * (j as f64 + 0.5) / batch as f64;
            spread_mean_image(width, height, channels, target, &mut rng)
        })
        .collect();
    let labels = (0..batch).map(|j| j % classes).collect();
    LabeledBatch::new(images, labels).unwrap()
}

/// Calibration pool with means scattered uniformly over [0.2, 0.8].
pub fn spread_mean_calibration(
    count: usize,
    width: usize,
    height: usize,
    channels: usize,
    seed: u64,
) -> Vec<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let target = rng.gen_range(0.2..0.8);
            spread_mean_image(width, height, channels, target, &mut rng)
        })
        .collect()
}
