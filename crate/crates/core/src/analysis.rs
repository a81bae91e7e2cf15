//! Ground-truth instrumentation for attack evaluation.
//!
//! The activation census records which samples drive which neurons, the
//! extractability oracle decides from the census alone whether a sample's
//! gradient can be isolated, and the matching utilities score emitted
//! reconstructions against the original batch. None of this is available
//! to the attacker; it exists so tests and experiments can compare what an
//! attack achieved against what the gradients provably expose.

use crate::attacks::quantile_sorted;
use crate::defense::LabeledBatch;
use crate::error::{Error, Result};
use crate::imaging::{psnr, FieldImage, Image, PSNR_CAP_DB};
use crate::linalg::{dot, norm2, solve_linear_system, Matrix};
use crate::model::{AttackModel, DenseLayer};

/// An original counts as recovered when some reconstruction reaches this
/// PSNR against it.
pub const RECOVERY_THRESHOLD_DB: f64 = 80.0;

/// Ridge added to the normal equations in [`lincomb_residual`].
pub const LINCOMB_RIDGE: f64 = 1e-12;

/// Which samples activate which neurons, in both directions.
///
/// A sample activates a neuron when the neuron's pre-activation on that
/// sample is strictly positive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivationCensus {
    neuron_sets: Vec<Vec<usize>>,
    sample_sets: Vec<Vec<usize>>,
}

impl ActivationCensus {
    /// Build from per-neuron activating-sample sets.
    pub fn from_neuron_sets(neuron_sets: Vec<Vec<usize>>, samples: usize) -> Result<Self> {
        let mut sample_sets = vec![Vec::new(); samples];
        for (i, set) in neuron_sets.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Precondition(format!(
                    "neuron {i} activation set is not strictly sorted"
                )));
            }
            for &j in set {
                if j >= samples {
                    return Err(Error::Precondition(format!(
                        "neuron {i} lists sample {j} outside batch of {samples}"
                    )));
                }
                sample_sets[j].push(i);
            }
        }
        Ok(ActivationCensus {
            neuron_sets,
            sample_sets,
        })
    }

    pub fn neuron_count(&self) -> usize {
        self.neuron_sets.len()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_sets.len()
    }

    /// Samples activating neuron `i`, ascending.
    pub fn neuron_set(&self, i: usize) -> &[usize] {
        &self.neuron_sets[i]
    }

    /// Neurons activated by sample `j`, ascending.
    pub fn sample_set(&self, j: usize) -> &[usize] {
        &self.sample_sets[j]
    }
}

/// Census of a single dense layer over a batch.
pub fn census_from_layer(layer: &DenseLayer, batch: &LabeledBatch) -> Result<ActivationCensus> {
    let mut neuron_sets = vec![Vec::new(); layer.outputs()];
    for (j, img) in batch.images().iter().enumerate() {
        let z = layer.affine(img.pixels())?;
        for (i, &v) in z.iter().enumerate() {
            if v > 0.0 {
                neuron_sets[i].push(j);
            }
        }
    }
    ActivationCensus::from_neuron_sets(neuron_sets, batch.len())
}

/// Census of the first (possibly malicious) layer of the attacked model.
pub fn census(model: &AttackModel, batch: &LabeledBatch) -> Result<ActivationCensus> {
    census_from_layer(&model.layer, batch)
}

/// How a sample's gradient can be isolated from a summed report.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Isolation {
    /// Some neuron is activated by this sample alone.
    ByNeuron { neuron: usize },
    /// Subtracting neuron `subtrahend`'s gradient from neuron `minuend`'s
    /// leaves this sample as the only remaining contributor.
    ByDifference { minuend: usize, subtrahend: usize },
}

/// True when `a \ b` is exactly `{target}`, for ascending-sorted sets.
fn difference_is_singleton(a: &[usize], b: &[usize], target: usize) -> bool {
    let mut found = false;
    let mut bi = 0;
    for &x in a {
        while bi < b.len() && b[bi] < x {
            bi += 1;
        }
        if bi < b.len() && b[bi] == x {
            continue;
        }
        if x != target || found {
            return false;
        }
        found = true;
    }
    found
}

/// A neuron activated by `target` alone, if any.
pub fn isolated_neuron(census: &ActivationCensus, target: usize) -> Option<usize> {
    (0..census.neuron_count()).find(|&i| census.neuron_set(i) == [target])
}

/// Decide whether `target`'s gradient is isolatable from the census.
///
/// Checks single neurons first, then every ordered neuron pair whose
/// activation-set difference is exactly `{target}`. Returns `None` when
/// every view of the target is shared with some other sample, which is the
/// situation a successful augmentation defense forces.
pub fn extractability_oracle(census: &ActivationCensus, target: usize) -> Option<Isolation> {
    if target >= census.sample_count() {
        return None;
    }
    if let Some(neuron) = isolated_neuron(census, target) {
        return Some(Isolation::ByNeuron { neuron });
    }
    for i in 0..census.neuron_count() {
        if !census.neuron_set(i).contains(&target) {
            continue;
        }
        for k in 0..census.neuron_count() {
            if k == i {
                continue;
            }
            if difference_is_singleton(census.neuron_set(i), census.neuron_set(k), target) {
                return Some(Isolation::ByDifference {
                    minuend: i,
                    subtrahend: k,
                });
            }
        }
    }
    None
}

/// Five-number summary plus mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Summary statistics with quartiles by linear interpolation between the
/// sorted order statistics at positions `q * (len - 1)`.
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Precondition("summarize needs at least one value".to_string()));
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { tensor: "summary values" });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let mut mean = 0.0;
    for &v in values {
        mean += v;
    }
    mean /= values.len() as f64;
    Ok(Summary {
        min: sorted[0],
        q1: quantile_sorted(&sorted, 0.25),
        median: quantile_sorted(&sorted, 0.5),
        q3: quantile_sorted(&sorted, 0.75),
        max: sorted[sorted.len() - 1],
        mean,
    })
}

/// Best reconstruction for one original.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginalMatch {
    /// Best PSNR over all reconstructions, 0 when there are none.
    pub psnr_db: f64,
    /// Index of the best reconstruction, `None` when there are none.
    pub reconstruction: Option<usize>,
}

/// Per-original best matches plus aggregate statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchReport {
    pub per_original: Vec<OriginalMatch>,
    pub stats: Summary,
}

impl MatchReport {
    /// Originals matched at or above [`RECOVERY_THRESHOLD_DB`].
    pub fn recovered(&self) -> usize {
        self.per_original
            .iter()
            .filter(|m| m.psnr_db >= RECOVERY_THRESHOLD_DB)
            .count()
    }

    /// Originals matched at the PSNR cap, i.e. pixel-exactly.
    pub fn exact_matches(&self) -> usize {
        self.per_original
            .iter()
            .filter(|m| m.psnr_db >= PSNR_CAP_DB)
            .count()
    }
}

/// Score reconstructions against the original batch: every reconstruction
/// is clamped to `[0, 1]`, each original keeps its best PSNR, and several
/// originals may claim the same reconstruction.
pub fn match_reconstructions(
    reconstructions: &[crate::attacks::Reconstruction],
    originals: &LabeledBatch,
) -> Result<MatchReport> {
    let clamped: Vec<Image> = reconstructions
        .iter()
        .map(|r| r.image.clamped())
        .collect();
    let mut per_original = Vec::with_capacity(originals.len());
    for img in originals.images() {
        let mut best = OriginalMatch {
            psnr_db: 0.0,
            reconstruction: None,
        };
        for (idx, recon) in clamped.iter().enumerate() {
            let value = psnr(recon, img)?;
            if best.reconstruction.is_none() || value > best.psnr_db {
                best = OriginalMatch {
                    psnr_db: value,
                    reconstruction: Some(idx),
                };
            }
        }
        per_original.push(best);
    }
    let values: Vec<f64> = per_original.iter().map(|m| m.psnr_db).collect();
    let stats = summarize(&values)?;
    Ok(MatchReport {
        per_original,
        stats,
    })
}

/// Relative residual of `recon` on the affine span of `basis`.
///
/// Least squares over the basis images plus a constant image, solved via
/// ridge-stabilized normal equations; the residual norm is divided by the
/// reconstruction's norm. Zero means `recon` is an affine combination of
/// the basis; values near one mean it is essentially outside the span.
pub fn lincomb_residual(recon: &FieldImage, basis: &[Image]) -> Result<f64> {
    if basis.is_empty() {
        return Err(Error::Precondition("lincomb_residual needs a nonempty basis".to_string()));
    }
    for img in basis {
        if img.shape() != recon.shape() {
            return Err(Error::Dimension {
                context: "lincomb_residual",
                expected: format!("{:?}", recon.shape()),
                got: format!("{:?}", img.shape()),
            });
        }
    }
    let target = recon.pixels();
    let target_norm = norm2(target);
    if target_norm == 0.0 {
        return Ok(0.0);
    }
    let k = basis.len() + 1;
    let column = |idx: usize| -> &[f64] { basis[idx].pixels() };
    let col_dot = |p: usize, q: usize| -> f64 {
        let ones_p = p == basis.len();
        let ones_q = q == basis.len();
        match (ones_p, ones_q) {
            (true, true) => target.len() as f64,
            (true, false) => column(q).iter().sum(),
            (false, true) => column(p).iter().sum(),
            (false, false) => dot(column(p), column(q)),
        }
    };
    let mut gram = Matrix::from_fn(k, k, col_dot);
    for p in 0..k {
        let v = gram.get(p, p) + LINCOMB_RIDGE;
        gram.set(p, p, v);
    }
    let rhs: Vec<f64> = (0..k)
        .map(|p| {
            if p == basis.len() {
                target.iter().sum()
            } else {
                dot(column(p), target)
            }
        })
        .collect();
    let beta = solve_linear_system(&gram, &rhs)?;
    let mut residual = 0.0;
    for (idx, &t) in target.iter().enumerate() {
        let mut fitted = beta[basis.len()];
        for (p, b) in beta[..basis.len()].iter().enumerate() {
            fitted += b * column(p)[idx];
        }
        let r = t - fitted;
        residual += r * r;
    }
    Ok(residual.sqrt() / target_norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{Provenance, Reconstruction};

    fn tiny_image(values: &[f64]) -> Image {
        Image::new(2, 2, 1, values.to_vec()).unwrap()
    }

    fn batch(images: Vec<Image>) -> LabeledBatch {
        let labels = vec![0; images.len()];
        LabeledBatch::new(images, labels).unwrap()
    }

    #[test]
    fn census_views_are_transposes() {
        let layer = DenseLayer::new(
            Matrix::from_vec(2, 4, vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]).unwrap(),
            vec![-0.5, -0.5],
        )
        .unwrap();
        let b = batch(vec![
            tiny_image(&[0.9, 0.0, 0.0, 0.1]),
            tiny_image(&[0.1, 0.0, 0.0, 0.9]),
            tiny_image(&[0.9, 0.0, 0.0, 0.9]),
        ]);
        let c = census_from_layer(&layer, &b).unwrap();
        assert_eq!(c.neuron_set(0), &[0, 2]);
        assert_eq!(c.neuron_set(1), &[1, 2]);
        assert_eq!(c.sample_set(0), &[0]);
        assert_eq!(c.sample_set(1), &[1]);
        assert_eq!(c.sample_set(2), &[0, 1]);
        for i in 0..c.neuron_count() {
            for &j in c.neuron_set(i) {
                assert!(c.sample_set(j).contains(&i));
            }
        }
    }

    #[test]
    fn oracle_prefers_singleton_neurons() {
        let c = ActivationCensus::from_neuron_sets(vec![vec![0, 1], vec![1]], 2).unwrap();
        assert_eq!(
            extractability_oracle(&c, 1),
            Some(Isolation::ByNeuron { neuron: 1 })
        );
        assert_eq!(
            extractability_oracle(&c, 0),
            Some(Isolation::ByDifference { minuend: 0, subtrahend: 1 })
        );
    }

    #[test]
    fn oracle_reports_shared_samples_as_not_extractable() {
        let c = ActivationCensus::from_neuron_sets(
            vec![vec![0, 1], vec![0, 1], vec![]],
            2,
        )
        .unwrap();
        assert_eq!(extractability_oracle(&c, 0), None);
        assert_eq!(extractability_oracle(&c, 1), None);
    }

    #[test]
    fn matching_scores_exact_copy_at_the_cap() {
        let original = tiny_image(&[0.1, 0.4, 0.6, 0.9]);
        let recon = Reconstruction {
            image: FieldImage::new(2, 2, 1, original.pixels().to_vec()).unwrap(),
            provenance: Provenance::Neuron { index: 0 },
            bias_magnitude: 1.0,
        };
        let report = match_reconstructions(&[recon], &batch(vec![original])).unwrap();
        assert_eq!(report.per_original[0].psnr_db, PSNR_CAP_DB);
        assert_eq!(report.per_original[0].reconstruction, Some(0));
        assert_eq!(report.recovered(), 1);
        assert_eq!(report.exact_matches(), 1);
    }

    #[test]
    fn matching_with_no_reconstructions_reports_zero() {
        let report =
            match_reconstructions(&[], &batch(vec![tiny_image(&[0.5; 4]), tiny_image(&[0.25; 4])]))
                .unwrap();
        assert!(report
            .per_original
            .iter()
            .all(|m| m.psnr_db == 0.0 && m.reconstruction.is_none()));
        assert_eq!(report.recovered(), 0);
        assert_eq!(report.stats.mean, 0.0);
    }

    #[test]
    fn affine_combinations_have_zero_residual() {
        let x1 = tiny_image(&[0.2, 0.4, 0.6, 0.8]);
        let x2 = tiny_image(&[0.9, 0.1, 0.5, 0.3]);
        let mix: Vec<f64> = x1
            .pixels()
            .iter()
            .zip(x2.pixels())
            .map(|(&a, &b)| 0.3 * a + 0.7 * b)
            .collect();
        let recon = FieldImage::new(2, 2, 1, mix).unwrap();
        let r = lincomb_residual(&recon, &[x1, x2]).unwrap();
        assert!(r <= 1e-8, "residual {r}");
    }

    #[test]
    fn orthogonal_directions_have_residual_near_one() {
        let x1 = tiny_image(&[1.0, 1.0, 0.0, 0.0]);
        let recon = FieldImage::new(2, 2, 1, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        let r = lincomb_residual(&recon, &[x1]).unwrap();
        assert!(r > 0.99, "residual {r}");
    }

    #[test]
    fn summary_matches_hand_computed_quartiles() {
        let one = summarize(&[10.0]).unwrap();
        assert_eq!(
            (one.min, one.q1, one.median, one.q3, one.max, one.mean),
            (10.0, 10.0, 10.0, 10.0, 10.0, 10.0)
        );
        let two = summarize(&[10.0, 0.0]).unwrap();
        assert_eq!(two.median, 5.0);
        assert_eq!(two.q1, 2.5);
        assert_eq!(two.q3, 7.5);
        assert_eq!(two.mean, 5.0);
        assert!(summarize(&[]).is_err());
    }
}
