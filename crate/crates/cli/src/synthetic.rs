//! Seeded synthetic datasets: oriented low-frequency cosine fields faded
//! out near the image center, a class-coded center bump, and pixel means
//! stratified across [0.2, 0.8].
//!
//! Each image's rank in the mean ordering is drawn from a seeded
//! permutation, so any contiguous slice of the dataset still spans the
//! whole mean range. Pixels are snapped to the 1/256 grid; sums of such
//! values are exact in f64, which keeps gradient cancellations bit-exact
//! downstream. Every image is guaranteed to differ from its flips and
//! quarter-turn rotations, so averaging an image with its permuted copies
//! always moves it.

use std::f64::consts::TAU;

use gradlens_core::imaging::Image;
use gradlens_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic labeled dataset of `count` images, labels `j % classes`.
pub fn gen_synthetic(
    seed: u64,
    count: usize,
    width: usize,
    height: usize,
    channels: usize,
    classes: usize,
) -> Result<(Vec<Image>, Vec<usize>)> {
    if classes == 0 || count < classes {
        return Err(Error::Config(format!(
            "need count >= classes >= 1, got count {count}, classes {classes}"
        )));
    }
    if width == 0 || height == 0 || channels == 0 {
        return Err(Error::Config("image shape must be nonzero".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranks: Vec<usize> = (0..count).collect();
    ranks.shuffle(&mut rng);
    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for (j, &rank) in ranks.iter().enumerate() {
        let jitter: f64 = rng.gen();
        let target = 0.2 + 0.6 * (rank as f64 + 0.3 + 0.4 * jitter) / count as f64;
        let label = j % classes;
        images.push(synth_image(
            width, height, channels, target, label, classes, &mut rng,
        ));
        labels.push(label);
    }
    Ok((images, labels))
}

/// Center-to-edge contrast separating the extreme classes. The bump sits
/// inside half the corner radius, a region every suite transform maps
/// onto itself, so the class stays readable from augmented copies.
const CENTER_CONTRAST: f64 = 0.3;

fn synth_image(
    width: usize,
    height: usize,
    channels: usize,
    target_mean: f64,
    label: usize,
    classes: usize,
    rng: &mut ChaCha8Rng,
) -> Image {
    let mut values = vec![0.0f64; width * height * channels];
    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let r_max = (cx * cx + cy * cy).sqrt().max(1.0);
    let radius = |x: usize, y: usize| {
        let dx = x as f64 - cx;
        let dy = y as f64 - cy;
        (dx * dx + dy * dy).sqrt() / r_max
    };
    for channel in 0..channels {
        let freqs = [
            (rng.gen_range(1..=2) as f64, rng.gen_range(0..=2) as f64),
            (rng.gen_range(0..=2) as f64, rng.gen_range(1..=2) as f64),
        ];
        for &(kx, ky) in &freqs {
            let phase = rng.gen_range(0.0..TAU);
            let amp = rng.gen_range(0.035..0.06);
            for y in 0..height {
                for x in 0..width {
                    let angle =
                        TAU * (kx * x as f64 / width as f64 + ky * y as f64 / height as f64);
                    let wall = ((radius(x, y) - 0.25) / 0.2).clamp(0.0, 1.0);
                    values[(y * width + x) * channels + channel] +=
                        wall * amp * (angle + phase).cos();
                }
            }
        }
    }
    let balance = if classes > 1 {
        label as f64 / (classes - 1) as f64 - 0.5
    } else {
        0.0
    };
    for y in 0..height {
        for x in 0..width {
            let motif = CENTER_CONTRAST * balance * (1.0 - 2.0 * radius(x, y)).max(0.0);
            for channel in 0..channels {
                values[(y * width + x) * channels + channel] += motif;
            }
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut pixels: Vec<f64> = values
        .iter()
        .map(|v| {
            let shifted = target_mean + (v - mean);
            (shifted.clamp(0.0, 1.0) * 256.0).round().min(255.0) / 256.0
        })
        .collect();
    break_permutation_symmetry(&mut pixels, width, height, channels);
    Image::new(width, height, channels, pixels).unwrap()
}

/// Give the top-left corner a value distinct from the other three corners
/// in channel 0. The five index-permutation transforms (flips, quarter
/// turns, half turn) each map the top-left corner onto a different corner,
/// so after this no such transform can reproduce the image, and no average
/// of the image with its permuted copies can equal the image itself.
fn break_permutation_symmetry(
    pixels: &mut [f64],
    width: usize,
    height: usize,
    channels: usize,
) {
    if width < 2 || height < 2 {
        return;
    }
    let idx = |x: usize, y: usize| (y * width + x) * channels;
    let others = [
        pixels[idx(width - 1, 0)],
        pixels[idx(0, height - 1)],
        pixels[idx(width - 1, height - 1)],
    ];
    let collides = |v: f64| others.contains(&v);
    let corner = idx(0, 0);
    if !collides(pixels[corner]) {
        return;
    }
    let base = (pixels[corner] * 256.0).round();
    for step in 1..=255 {
        for dir in [-1.0, 1.0] {
            let cand = base + dir * step as f64;
            if (0.0..=255.0).contains(&cand) && !collides(cand / 256.0) {
                pixels[corner] = cand / 256.0;
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_reproduces_the_dataset() {
        let (a_imgs, a_labels) = gen_synthetic(9, 12, 4, 4, 1, 3).unwrap();
        let (b_imgs, b_labels) = gen_synthetic(9, 12, 4, 4, 1, 3).unwrap();
        assert_eq!(a_labels, b_labels);
        for (a, b) in a_imgs.iter().zip(&b_imgs) {
            assert_eq!(a.pixels(), b.pixels());
        }
    }

    #[test]
    fn count_equal_to_classes_gives_one_image_per_class() {
        let (_, labels) = gen_synthetic(3, 5, 4, 4, 1, 5).unwrap();
        let mut sorted = labels.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn sixty_four_images_have_mostly_distinct_means() {
        let (images, _) = gen_synthetic(2024, 64, 4, 4, 1, 4).unwrap();
        let mut means: Vec<f64> = images.iter().map(|img| img.mean()).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut distinct = 1;
        for pair in means.windows(2) {
            if pair[1] - pair[0] > 1e-6 {
                distinct += 1;
            }
        }
        assert!(distinct >= 60, "only {distinct} distinct means");
    }

    #[test]
    fn means_stay_inside_the_advertised_band() {
        let (images, _) = gen_synthetic(7, 32, 4, 4, 3, 4).unwrap();
        for img in &images {
            let m = img.mean();
            assert!((0.19..=0.81).contains(&m), "mean {m} escaped the band");
        }
    }

    #[test]
    fn pixels_are_clamped_and_on_the_grid() {
        let (images, _) = gen_synthetic(5, 16, 6, 3, 1, 4).unwrap();
        for img in &images {
            for &p in img.pixels() {
                assert!((0.0..=1.0).contains(&p));
                let snapped = (p * 256.0).round() / 256.0;
                assert_eq!(p, snapped, "pixel {p} off the 1/256 grid");
            }
        }
    }

    #[test]
    fn rejects_count_below_classes() {
        assert!(gen_synthetic(0, 3, 4, 4, 1, 4).is_err());
    }

    #[test]
    fn images_differ_from_their_flips_and_quarter_turns() {
        use gradlens_core::imaging::{flip_h, flip_v, rotate};
        for seed in 0..30 {
            let (images, _) = gen_synthetic(seed, 4, 6, 6, 1, 4).unwrap();
            for img in &images {
                let moved = [
                    rotate(img, 90.0),
                    rotate(img, 180.0),
                    rotate(img, 270.0),
                    flip_h(img),
                    flip_v(img),
                ];
                for copy in &moved {
                    assert_ne!(copy.pixels(), img.pixels(), "seed {seed}");
                }
            }
        }
    }
}
